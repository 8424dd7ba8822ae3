//! `selora` CLI: SER sweeps, comparison tables, spectrum dumps, peak
//! prediction, and the analytic/numeric self-check.
//!
//! Exit codes: 0 success, 1 configuration error, 2 infeasible joint ML,
//! 3 insufficient sweep for the loss interpolation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use selora::detection::{analytic_vse, predict_peaks};
use selora::error::{Error, Result};
use selora::framing::{build_frame, extract_window, se_config, se_config_random_prefix};
use selora::harness::{
    self, dump_spectrum, emit_comparison_csv, emit_ser_csv, parse_config_file, write_ser_csv,
    RunConfig,
};
use selora::waveform::dechirp_spectrum;

#[derive(Parser)]
#[command(
    name = "selora",
    about = "LoRa / SE-LoRa link simulator: overlapped chirps, SIC detection, SER sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration file (flat `key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; overrides `out` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => parse_config_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo SER sweep and emit CSV.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Worker threads (default: all cores). Results are identical for
        /// any value.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Sweep a list of overlap factors plus the k=1 baseline and emit the
    /// gain/loss comparison table.
    Table {
        #[command(flatten)]
        config: ConfigArgs,
        /// Overlap factors to evaluate, e.g. `2,3,5,6`.
        #[arg(long, value_delimiter = ',', required = true)]
        k_list: Vec<usize>,
        /// Payload length for the table (the comparison convention is 50).
        #[arg(long, default_value_t = 50)]
        l: usize,
        /// Target SER at which the loss is measured.
        #[arg(long, default_value_t = 1e-3)]
        target_ser: f64,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Dump measured and analytic dechirped spectra for one window.
    Spectrum {
        #[command(flatten)]
        config: ConfigArgs,
        /// Odd-length neighborhood `s_{-r},..,s_0,..,s_r` (default 2k-1
        /// symbols).
        #[arg(long, value_delimiter = ',', required = true)]
        symbols: Vec<usize>,
    },
    /// Print predicted interference peak locations and magnitudes.
    Peaks {
        #[command(flatten)]
        config: ConfigArgs,
        /// Exactly 2k-1 symbols `s_{-k+1},..,s_{k-1}`.
        #[arg(long, value_delimiter = ',', required = true)]
        symbols: Vec<usize>,
    },
    /// Check the closed-form spectrum against numerically dechirped windows
    /// on random frames.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of random windows to compare.
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        /// Maximum tolerated per-bin deviation.
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
}

fn install_pool(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn cmd_sweep(config: ConfigArgs, workers: Option<usize>) -> Result<()> {
    install_pool(workers)?;
    let cfg = config.load()?;
    let job = cfg.to_job()?;
    job.validate()?;
    let records = harness::run_ser_sweep_cb(&job, |r| {
        eprintln!(
            "snr {:>7.2} dB: {} errors / {} symbols, ser {:.3e}",
            r.snr_db, r.errors, r.symbols, r.ser
        );
    })?;
    match &cfg.out {
        Some(path) => {
            emit_ser_csv(&records, path)?;
            eprintln!("wrote {}", path.display());
        }
        None => write_ser_csv(&records, std::io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_table(
    config: ConfigArgs,
    k_list: Vec<usize>,
    l: usize,
    target_ser: f64,
    workers: Option<usize>,
) -> Result<()> {
    install_pool(workers)?;
    let mut cfg = config.load()?;
    cfg.payload_len = l;
    cfg.k = 1; // base job; per-k configs derived inside
    let base = cfg.to_job()?;
    base.validate()?;
    let rows = harness::reproduce_comparison(&base, &k_list, target_ser)?;
    for r in &rows {
        eprintln!(
            "{} sf{} k={}: gain {}%, loss {:.2} dB",
            r.channel,
            r.sf,
            r.k,
            selora::framing::se_gain_percent_display(r.k, r.l),
            r.loss_db
        );
    }
    match &cfg.out {
        Some(path) => {
            emit_comparison_csv(&rows, path)?;
            eprintln!("wrote {}", path.display());
        }
        None => harness::write_comparison_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_spectrum(config: ConfigArgs, symbols: Vec<usize>) -> Result<()> {
    let cfg = config.load()?;
    let params = selora::waveform::make_params(cfg.sf, cfg.bandwidth_hz)?;
    let se = se_config(&params, cfg.k, 1, &vec![0; cfg.k - 1])?;
    match &cfg.out {
        Some(path) => {
            dump_spectrum(&params, &se, &symbols, path)?;
            eprintln!("wrote {}", path.display());
        }
        None => harness::dump_spectrum_to(&params, &se, &symbols, std::io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_peaks(config: ConfigArgs, symbols: Vec<usize>) -> Result<()> {
    let cfg = config.load()?;
    let params = selora::waveform::make_params(cfg.sf, cfg.bandwidth_hz)?;
    let se = se_config(&params, cfg.k, 1, &vec![0; cfg.k - 1])?;
    let peaks = predict_peaks(&params, &se, &symbols)?;
    println!("{:>4} {:>8} {:>6} {:>10}", "i", "symbol", "bin", "magnitude");
    for (slot, (&p, &mag)) in peaks.locations.iter().zip(&peaks.magnitudes).enumerate() {
        let i = slot as i64 - (cfg.k as i64 - 1);
        println!("{:>4} {:>8} {:>6} {:>10.4}", i, symbols[slot], p, mag);
    }
    Ok(())
}

fn cmd_validate(config: ConfigArgs, draws: usize, tolerance: f64) -> Result<()> {
    let cfg = config.load()?;
    let params = selora::waveform::make_params(cfg.sf, cfg.bandwidth_hz)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;

    // Frames long enough to give the middle window a full neighborhood.
    let probe = se_config(&params, cfg.k, 1, &vec![0; cfg.k - 1])?;
    let radius = probe.neighbor_radius(params.m);
    let l = 2 * radius + 1;
    let q = radius;
    for _ in 0..draws {
        let se = se_config_random_prefix(&params, cfg.k, l, &mut rng)?;
        let payload: Vec<usize> = (0..l).map(|_| rng.gen_range(0..params.m)).collect();
        let frame = build_frame(&params, &se, &payload)?;
        let window = extract_window(&frame, q)?;
        let numeric = dechirp_spectrum(&window, &params)?;
        let analytic = analytic_vse(&params, &se, &payload[q - radius..=q + radius])?;
        for u in 0..params.m {
            worst = worst.max((numeric.bins[u] - analytic.bins[u]).norm());
        }
    }
    let ok = worst <= tolerance;
    println!(
        "{}: analytic vs numeric spectrum, sf={} k={}, {} draws, max |delta| = {:.3e} (tol {:.1e})",
        if ok { "PASS" } else { "FAIL" },
        cfg.sf,
        cfg.k,
        draws,
        worst,
        tolerance
    );
    if ok {
        Ok(())
    } else {
        Err(Error::Config("analytic/numeric spectrum mismatch".into()))
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep { config, workers } => cmd_sweep(config, workers),
        Command::Table { config, k_list, l, target_ser, workers } => {
            cmd_table(config, k_list, l, target_ser, workers)
        }
        Command::Spectrum { config, symbols } => cmd_spectrum(config, symbols),
        Command::Peaks { config, symbols } => cmd_peaks(config, symbols),
        Command::Validate { config, draws, tolerance } => {
            cmd_validate(config, draws, tolerance)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
