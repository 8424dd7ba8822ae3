//! LoRa chirp synthesis and demodulation primitives.
//!
//! A LoRa symbol `s` selects the start frequency of a linear chirp that
//! sweeps the whole bandwidth once per symbol. Everything here works on the
//! chip-rate grid (one complex sample per chip, `m = 2^sf` samples per
//! symbol). Dechirping a received window with the conjugate basic up-chirp
//! turns every complete chirp into a pure tone whose DFT bin equals its
//! symbol; that single property drives all the detectors in this crate.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Radio parameters for one spreading-factor / bandwidth combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoRaParams {
    /// Spreading factor; `m = 2^sf` chips per symbol.
    pub sf: u32,
    /// Channel bandwidth in Hz (also the chip rate).
    pub bandwidth_hz: f64,
    /// Chips (and symbols) per alphabet: `2^sf`.
    pub m: usize,
    /// Symbol duration in seconds: `m / bandwidth_hz`.
    pub symbol_duration_s: f64,
}

/// A finite run of complex baseband samples at one sample per chip.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    pub samples: Vec<Complex64>,
    /// Chip offset of `samples[0]` relative to some enclosing timeline
    /// (frame windows carry their frame position here).
    pub start_index: i64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>) -> Self {
        Self { samples, start_index: 0 }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Total energy `sum |x[n]|^2`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x.norm_sqr()).sum()
    }
}

/// Unitary DFT of one receiving window; bin `u` runs over `0..m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.bins.iter().map(|b| b.norm_sqr()).sum()
    }

    /// Bin index with the largest magnitude, smallest index on ties.
    pub fn argmax_magnitude(&self) -> usize {
        let mut best = 0usize;
        let mut best_val = f64::NEG_INFINITY;
        for (u, b) in self.bins.iter().enumerate() {
            let v = b.norm_sqr();
            if v > best_val {
                best_val = v;
                best = u;
            }
        }
        best
    }
}

/// Validate `sf` and `bandwidth_hz` and derive the chip count and symbol
/// duration. Spreading factors 7..=12 are the deployed set; 2..=6 are
/// accepted so detector oracles can run exhaustively at toy scale.
pub fn make_params(sf: u32, bandwidth_hz: f64) -> Result<LoRaParams> {
    if !(2..=12).contains(&sf) {
        return Err(Error::Config(format!("sf must be in [2, 12], got {sf}")));
    }
    if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
        return Err(Error::Config(format!(
            "bandwidth_hz must be positive and finite, got {bandwidth_hz}"
        )));
    }
    let m = 1usize << sf;
    Ok(LoRaParams {
        sf,
        bandwidth_hz,
        m,
        symbol_duration_s: m as f64 / bandwidth_hz,
    })
}

/// Phase factor `exp(j*pi*e/m)` with the integer exponent reduced mod `2m`
/// first, so the angle never grows with `n^2` and stays exact to ~1 ulp.
#[inline]
fn unit_phase(exponent: i64, m: usize) -> Complex64 {
    let two_m = 2 * m as i64;
    let e = exponent.rem_euclid(two_m);
    Complex64::from_polar(1.0, PI * e as f64 / m as f64)
}

/// Sample `n` of the chirp modulating symbol `s`:
/// `exp(2*pi*j*(n^2 + 2ns - nM) / (2M))`.
#[inline]
pub(crate) fn chirp_sample(m: usize, s: usize, n: usize) -> Complex64 {
    let n = n as i64;
    let exponent = n * n + 2 * n * s as i64 - n * m as i64;
    unit_phase(exponent, m)
}

/// Synthesize the `m`-sample chirp for symbol `s`.
pub fn modulate_chirp(params: &LoRaParams, s: usize) -> Result<ComplexSignal> {
    check_symbol(params.m, s)?;
    let samples = (0..params.m).map(|n| chirp_sample(params.m, s, n)).collect();
    Ok(ComplexSignal::new(samples))
}

/// The chirp modulating symbol 0; its conjugate is the dechirping reference.
pub fn basic_upchirp(params: &LoRaParams) -> ComplexSignal {
    modulate_chirp(params, 0).expect("symbol 0 is always valid")
}

/// Multiply a full window sample-wise by the conjugate basic up-chirp.
pub fn dechirp(signal: &ComplexSignal, params: &LoRaParams) -> Result<ComplexSignal> {
    if signal.len() != params.m {
        return Err(Error::ShapeMismatch { expected: params.m, got: signal.len() });
    }
    let samples = signal
        .samples
        .iter()
        .enumerate()
        .map(|(n, x)| x * chirp_sample(params.m, 0, n).conj())
        .collect();
    Ok(ComplexSignal { samples, start_index: signal.start_index })
}

/// Unitary DFT (`1/sqrt(m)` normalization), so a dechirped full chirp peaks
/// at exactly `sqrt(m)` and Parseval holds bit-for-bit in energy.
pub fn dft(signal: &ComplexSignal) -> Result<Spectrum> {
    let m = signal.len();
    if m == 0 || !m.is_power_of_two() {
        return Err(Error::ShapeMismatch { expected: m.next_power_of_two().max(1), got: m });
    }
    let mut bins = signal.samples.clone();
    FftPlanner::new().plan_fft_forward(m).process(&mut bins);
    let scale = 1.0 / (m as f64).sqrt();
    for b in &mut bins {
        *b *= scale;
    }
    Ok(Spectrum { bins })
}

/// Dechirp-then-DFT pipeline used by every detector.
pub fn dechirp_spectrum(signal: &ComplexSignal, params: &LoRaParams) -> Result<Spectrum> {
    dft(&dechirp(signal, params)?)
}

#[inline]
pub(crate) fn check_symbol(m: usize, s: usize) -> Result<()> {
    if s >= m {
        return Err(Error::SymbolOutOfRange { symbol: s, m });
    }
    Ok(())
}

/// Precomputed chirp tables and FFT plan for one `LoRaParams`.
///
/// The free functions above are convenient for one-off calls; Monte Carlo
/// loops go through this to avoid re-planning the FFT and re-evaluating
/// sin/cos per sample. Immutable after construction and `Send + Sync`.
pub struct ChirpProcessor {
    params: LoRaParams,
    upchirp: Vec<Complex64>,
    upchirp_conj: Vec<Complex64>,
    /// `twiddles[r] = exp(2*pi*j*r/m)`; sample `n` of chirp `s` is
    /// `upchirp[n] * twiddles[(n*s) mod m]`.
    twiddles: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
}

impl ChirpProcessor {
    pub fn new(params: LoRaParams) -> Self {
        let m = params.m;
        let upchirp: Vec<Complex64> = (0..m).map(|n| chirp_sample(m, 0, n)).collect();
        let upchirp_conj = upchirp.iter().map(|x| x.conj()).collect();
        let twiddles = (0..m)
            .map(|r| Complex64::from_polar(1.0, 2.0 * PI * r as f64 / m as f64))
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        Self { params, upchirp, upchirp_conj, twiddles, fft }
    }

    pub fn params(&self) -> &LoRaParams {
        &self.params
    }

    pub fn m(&self) -> usize {
        self.params.m
    }

    /// Sample `local_n` of the chirp for symbol `s` (table lookup).
    #[inline]
    pub fn sample(&self, s: usize, local_n: usize) -> Complex64 {
        let m = self.params.m;
        self.upchirp[local_n] * self.twiddles[(local_n * s) % m]
    }

    pub fn modulate(&self, s: usize) -> Result<ComplexSignal> {
        check_symbol(self.params.m, s)?;
        let samples = (0..self.params.m).map(|n| self.sample(s, n)).collect();
        Ok(ComplexSignal::new(samples))
    }

    /// Accumulate `scale * x_L[n - offset; s]` into `buf` for every `n` where
    /// the chirp's `m`-sample support intersects the buffer. Chirps wholly
    /// outside contribute nothing.
    pub fn add_chirp(&self, buf: &mut [Complex64], offset: i64, s: usize, scale: Complex64) {
        let m = self.params.m as i64;
        let lo = offset.max(0);
        let hi = (offset + m).min(buf.len() as i64);
        for n in lo..hi {
            let local = (n - offset) as usize;
            buf[n as usize] += scale * self.sample(s, local);
        }
    }

    /// Dechirp `window` and write its unitary DFT into `bins`.
    pub fn dechirp_dft_into(&self, window: &[Complex64], bins: &mut Vec<Complex64>) {
        debug_assert_eq!(window.len(), self.params.m);
        bins.clear();
        bins.extend(window.iter().zip(&self.upchirp_conj).map(|(x, c)| x * c));
        self.fft.process(bins);
        let scale = 1.0 / (self.params.m as f64).sqrt();
        for b in bins.iter_mut() {
            *b *= scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn params_from_table_values() {
        let p = make_params(7, 125_000.0).unwrap();
        assert_eq!(p.m, 128);
        assert!((p.symbol_duration_s - 1.024e-3).abs() < 1e-15);

        let p = make_params(11, 500_000.0).unwrap();
        assert_eq!(p.m, 2048);
        assert!((p.symbol_duration_s - 4.096e-3).abs() < 1e-15);

        let p = make_params(2, 1.0).unwrap();
        assert_eq!(p.m, 4);
        assert!((p.symbol_duration_s - 4.0).abs() < 1e-15);
    }

    #[test]
    fn params_rejects_bad_input() {
        assert!(make_params(1, 125e3).is_err());
        assert!(make_params(13, 125e3).is_err());
        assert!(make_params(7, 0.0).is_err());
        assert!(make_params(7, -1.0).is_err());
        assert!(make_params(7, f64::NAN).is_err());
    }

    #[test]
    fn chirp_first_sample_is_one() {
        let p = make_params(7, 125e3).unwrap();
        let x = modulate_chirp(&p, 0).unwrap();
        assert!(close(x.samples[0], Complex64::new(1.0, 0.0), 1e-15));
    }

    #[test]
    fn chirp_sample_matches_hand_evaluation() {
        // sf=2, s=1, n=1: exp(2*pi*j*(1 + 2 - 4)/8) = exp(-j*pi/4)
        let p = make_params(2, 1.0).unwrap();
        let x = modulate_chirp(&p, 1).unwrap();
        let expected = Complex64::from_polar(1.0, -PI / 4.0);
        assert!(close(x.samples[1], expected, 1e-15));
    }

    #[test]
    fn basic_upchirp_equals_symbol_zero() {
        let p = make_params(7, 125e3).unwrap();
        assert_eq!(basic_upchirp(&p), modulate_chirp(&p, 0).unwrap());
        // n = 64: exponent (64^2 - 64*128)/256 = -16 full turns.
        let x = basic_upchirp(&p);
        assert!(close(x.samples[64], Complex64::new(1.0, 0.0), 1e-12));
    }

    #[test]
    fn modulate_rejects_out_of_range_symbol() {
        let p = make_params(4, 1.0).unwrap();
        assert!(matches!(
            modulate_chirp(&p, 16),
            Err(Error::SymbolOutOfRange { symbol: 16, m: 16 })
        ));
    }

    #[test]
    fn dechirp_of_upchirp_is_all_ones() {
        let p = make_params(7, 125e3).unwrap();
        let d = dechirp(&basic_upchirp(&p), &p).unwrap();
        for x in &d.samples {
            assert!(close(*x, Complex64::new(1.0, 0.0), 1e-12));
        }
    }

    #[test]
    fn dechirp_of_chirp_is_pure_tone() {
        let p = make_params(5, 1.0).unwrap();
        let s = 11;
        let d = dechirp(&modulate_chirp(&p, s).unwrap(), &p).unwrap();
        for (n, x) in d.samples.iter().enumerate() {
            let tone = Complex64::from_polar(1.0, 2.0 * PI * (n * s) as f64 / p.m as f64);
            assert!(close(*x, tone, 1e-12));
        }
    }

    #[test]
    fn dechirp_rejects_length_mismatch() {
        let p = make_params(4, 1.0).unwrap();
        let sig = ComplexSignal::new(vec![Complex64::new(0.0, 0.0); 8]);
        assert!(matches!(dechirp(&sig, &p), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn dft_of_ones_is_dc_peak() {
        let sig = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 128]);
        let spec = dft(&sig).unwrap();
        assert!((spec.bins[0].re - 128f64.sqrt()).abs() < 1e-9);
        assert!(spec.bins[0].im.abs() < 1e-9);
        for b in &spec.bins[1..] {
            assert!(b.norm() < 1e-9);
        }
    }

    #[test]
    fn dft_of_zero_is_zero() {
        let sig = ComplexSignal::new(vec![Complex64::new(0.0, 0.0); 64]);
        let spec = dft(&sig).unwrap();
        assert!(spec.bins.iter().all(|b| b.norm() == 0.0));
    }

    #[test]
    fn dft_rejects_non_power_of_two() {
        let sig = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 100]);
        assert!(matches!(dft(&sig), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn dechirped_chirp_peak_at_bin_56() {
        let p = make_params(7, 125e3).unwrap();
        let spec = dechirp_spectrum(&modulate_chirp(&p, 56).unwrap(), &p).unwrap();
        assert!((spec.bins[56].re - 128f64.sqrt()).abs() < 1e-9);
        for (u, b) in spec.bins.iter().enumerate() {
            if u != 56 {
                assert!(b.norm() < 1e-9, "bin {u} leaked {}", b.norm());
            }
        }
    }

    #[test]
    fn orthogonality_exhaustive_sf4() {
        let p = make_params(4, 1.0).unwrap();
        for s in 0..p.m {
            let spec = dechirp_spectrum(&modulate_chirp(&p, s).unwrap(), &p).unwrap();
            for (u, b) in spec.bins.iter().enumerate() {
                if u == s {
                    assert!((b - Complex64::new(4.0, 0.0)).norm() < 1e-9);
                } else {
                    assert!(b.norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn superposition_of_two_chirps_peaks_at_both_bins() {
        let p = make_params(6, 1.0).unwrap();
        let a = modulate_chirp(&p, 5).unwrap();
        let b = modulate_chirp(&p, 40).unwrap();
        let sum: Vec<Complex64> =
            a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect();
        let spec = dechirp_spectrum(&ComplexSignal::new(sum), &p).unwrap();
        let root_m = (p.m as f64).sqrt();
        assert!((spec.bins[5].re - root_m).abs() < 1e-9);
        assert!((spec.bins[40].re - root_m).abs() < 1e-9);
    }

    #[test]
    fn truncated_shifted_chirp_lands_at_predicted_bin() {
        // i = 2, lambda = 32, sf = 7, s = 100: dominant bin mod(100-64, 128) = 36.
        let p = make_params(7, 125e3).unwrap();
        let mut window = vec![Complex64::new(0.0, 0.0); p.m];
        let proc = ChirpProcessor::new(p);
        proc.add_chirp(&mut window, 2 * 32, 100, Complex64::new(1.0, 0.0));
        let spec = dechirp_spectrum(&ComplexSignal::new(window), &p).unwrap();
        assert_eq!(spec.argmax_magnitude(), 36);
    }

    #[test]
    fn processor_matches_free_functions() {
        let p = make_params(7, 125e3).unwrap();
        let proc = ChirpProcessor::new(p);
        for s in [0usize, 1, 56, 127] {
            let a = proc.modulate(s).unwrap();
            let b = modulate_chirp(&p, s).unwrap();
            for (x, y) in a.samples.iter().zip(&b.samples) {
                assert!(close(*x, *y, 1e-12));
            }
            let mut bins = Vec::new();
            proc.dechirp_dft_into(&a.samples, &mut bins);
            let spec = dechirp_spectrum(&b, &p).unwrap();
            for (x, y) in bins.iter().zip(&spec.bins) {
                assert!(close(*x, *y, 1e-9));
            }
        }
    }

    proptest! {
        #[test]
        fn chirps_have_unit_modulus(sf in 2u32..=9, seed in 0u64..1000) {
            let p = make_params(sf, 125e3).unwrap();
            let s = (seed as usize) % p.m;
            let x = modulate_chirp(&p, s).unwrap();
            prop_assert_eq!(x.len(), p.m);
            for v in &x.samples {
                prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn orthogonality_random(sf in 2u32..=9, seed in 0u64..1000) {
            let p = make_params(sf, 125e3).unwrap();
            let s = (seed as usize * 2654435761) % p.m;
            let spec = dechirp_spectrum(&modulate_chirp(&p, s).unwrap(), &p).unwrap();
            let root_m = (p.m as f64).sqrt();
            for (u, b) in spec.bins.iter().enumerate() {
                if u == s {
                    prop_assert!((b - Complex64::new(root_m, 0.0)).norm() < 1e-9);
                } else {
                    prop_assert!(b.norm() < 1e-9);
                }
            }
        }

        #[test]
        fn dechirp_dft_is_linear(sa in 0usize..16, sb in 0usize..16) {
            let p = make_params(4, 1.0).unwrap();
            let a = modulate_chirp(&p, sa).unwrap();
            let b = modulate_chirp(&p, sb).unwrap();
            let ca = Complex64::new(0.7, -0.2);
            let cb = Complex64::new(-1.3, 0.4);
            let mix: Vec<Complex64> = a
                .samples
                .iter()
                .zip(&b.samples)
                .map(|(x, y)| ca * x + cb * y)
                .collect();
            let lhs = dechirp_spectrum(&ComplexSignal::new(mix), &p).unwrap();
            let sa_spec = dechirp_spectrum(&a, &p).unwrap();
            let sb_spec = dechirp_spectrum(&b, &p).unwrap();
            for u in 0..p.m {
                let rhs = ca * sa_spec.bins[u] + cb * sb_spec.bins[u];
                prop_assert!((lhs.bins[u] - rhs).norm() < 1e-9);
            }
        }

        #[test]
        fn parseval_through_dft(sf in 2u32..=9, seed in 0u64..100) {
            let p = make_params(sf, 125e3).unwrap();
            let s = (seed as usize * 31) % p.m;
            let x = modulate_chirp(&p, s).unwrap();
            let spec = dft(&x).unwrap();
            prop_assert!((x.energy() - spec.energy()).abs() < 1e-9);
        }
    }
}
