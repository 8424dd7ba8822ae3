//! CSV emission: SER sweeps, comparison tables, and spectrum dumps.
//!
//! All files have a mandatory header row, `.` decimal points, and
//! newline-terminated rows. Floats are written in shortest round-trip form,
//! so parsing a file recovers the numeric fields exactly; the `gse_percent`
//! column is the one deliberate exception, rounded half-up to two decimals
//! by exact integer arithmetic.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::detection::analytic_vse;
use crate::error::{Error, Result};
use crate::framing::{se_gain_percent_display, SEConfig};
use crate::harness::{ComparisonRow, SERRecord};
use crate::waveform::{dechirp_spectrum, ChirpProcessor, ComplexSignal, LoRaParams};

pub const SER_HEADER: &str = "snr_db,symbols,errors,ser,ci_low,ci_high";
pub const COMPARISON_HEADER: &str = "channel,sf,k,l,gse_percent,lser_db";
pub const SPECTRUM_HEADER: &str = "bin,re_measured,im_measured,re_analytic,im_analytic";

/// Write SER records to any writer in column order
/// `snr_db, symbols, errors, ser, ci_low, ci_high`.
pub fn write_ser_csv<W: Write>(records: &[SERRecord], mut w: W) -> Result<()> {
    writeln!(w, "{SER_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.snr_db, r.symbols, r.errors, r.ser, r.ci_low, r.ci_high
        )?;
    }
    Ok(())
}

/// Write (overwriting) SER records to a file.
pub fn emit_ser_csv(records: &[SERRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ser_csv(records, &mut w)?;
    Ok(w.flush()?)
}

/// Parse a SER CSV produced by [`write_ser_csv`].
pub fn parse_ser_csv(text: &str) -> Result<Vec<SERRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SER_HEADER => {}
        other => {
            return Err(Error::Config(format!(
                "bad SER CSV header: {other:?} (expected '{SER_HEADER}')"
            )))
        }
    }
    let field_err = |line: &str| Error::Config(format!("bad SER CSV row: '{line}'"));
    lines
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(field_err(line));
            }
            Ok(SERRecord {
                snr_db: fields[0].parse().map_err(|_| field_err(line))?,
                symbols: fields[1].parse().map_err(|_| field_err(line))?,
                errors: fields[2].parse().map_err(|_| field_err(line))?,
                ser: fields[3].parse().map_err(|_| field_err(line))?,
                ci_low: fields[4].parse().map_err(|_| field_err(line))?,
                ci_high: fields[5].parse().map_err(|_| field_err(line))?,
            })
        })
        .collect()
}

/// Write comparison rows in column order `channel, sf, k, l, gse_percent,
/// lser_db`.
pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], mut w: W) -> Result<()> {
    writeln!(w, "{COMPARISON_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.channel,
            r.sf,
            r.k,
            r.l,
            se_gain_percent_display(r.k, r.l),
            r.loss_db
        )?;
    }
    Ok(())
}

pub fn emit_comparison_csv(rows: &[ComparisonRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_comparison_csv(rows, &mut w)?;
    Ok(w.flush()?)
}

/// Dump measured vs analytic dechirped spectra for one window.
///
/// `symbols` is the odd-length neighborhood `s_{-r} ..= s_r` centered on the
/// desired chirp; the measured column dechirps a window synthesized from
/// exactly those chirps, the analytic column evaluates the closed form, so
/// the two agree to numerical precision when noise is absent.
pub fn dump_spectrum_to<W: Write>(
    params: &LoRaParams,
    cfg: &SEConfig,
    symbols: &[usize],
    mut w: W,
) -> Result<()> {
    let analytic = analytic_vse(params, cfg, symbols)?;
    let radius = (symbols.len() as i64 - 1) / 2;
    let proc = ChirpProcessor::new(*params);
    let mut window = vec![Complex64::new(0.0, 0.0); params.m];
    for (slot, &s) in symbols.iter().enumerate() {
        let i = slot as i64 - radius;
        proc.add_chirp(
            &mut window,
            i * cfg.lambda_chips as i64,
            s,
            Complex64::new(1.0, 0.0),
        );
    }
    let measured = dechirp_spectrum(&ComplexSignal::new(window), params)?;

    writeln!(w, "{SPECTRUM_HEADER}")?;
    for u in 0..params.m {
        let m = measured.bins[u];
        let a = analytic.bins[u];
        writeln!(w, "{},{},{},{},{}", u, m.re, m.im, a.re, a.im)?;
    }
    Ok(())
}

pub fn dump_spectrum(
    params: &LoRaParams,
    cfg: &SEConfig,
    symbols: &[usize],
    path: &Path,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    dump_spectrum_to(params, cfg, symbols, &mut w)?;
    Ok(w.flush()?)
}
