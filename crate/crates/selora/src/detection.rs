//! Detectors for overlapped LoRa frames.
//!
//! Three receivers share the dechirp-and-DFT front end:
//!
//! * [`conventional_detect`] picks the bin maximizing the real part of the
//!   coherently compensated spectrum of one window, ignoring interference.
//! * [`joint_ml_detect`] scores every candidate payload against the whole
//!   received frame. Optimal, but the search space is `m^l`, so it is
//!   guarded by a candidate cap and only usable at toy scale.
//! * [`sic_detect_frame`] runs the two-stage successive interference
//!   cancellation receiver: a first pass per window that cancels preceding
//!   chirps with the best decisions available so far, then a refined pass
//!   that also cancels succeeding chirps using the first-pass decisions that
//!   have accumulated ahead of it.
//!
//! [`analytic_vse`] evaluates the dechirped-window spectrum in closed form
//! (truncated chirps reduce to geometric sums); it serves as the oracle for
//! peak locations and magnitudes and never touches the FFT path.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::framing::SEConfig;
use crate::waveform::{
    check_symbol, dechirp_spectrum, ChirpProcessor, ComplexSignal, LoRaParams, Spectrum,
};

/// Default cap on joint-ML candidate evaluations (`m^l`).
pub const JOINT_ML_DEFAULT_CAP: u128 = 1 << 20;

/// Predicted dechirped-spectrum peaks for one window: neighbor `i` of the
/// desired chirp lands at bin `mod(s_i - i*lambda, m)` with magnitude
/// `(m - lambda*|i|)/sqrt(m)`. Entries run over `i = -k+1 ..= k-1`;
/// locations may collide, and those collisions are exactly the error events
/// of conventional detection.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakPrediction {
    pub locations: Vec<usize>,
    pub magnitudes: Vec<f64>,
    k: usize,
}

impl PeakPrediction {
    fn slot(&self, i: i64) -> usize {
        debug_assert!((i.unsigned_abs() as usize) < self.k);
        (i + self.k as i64 - 1) as usize
    }

    /// Peak bin of neighbor `i` (`i = 0` is the desired chirp).
    pub fn location(&self, i: i64) -> usize {
        self.locations[self.slot(i)]
    }

    pub fn magnitude(&self, i: i64) -> f64 {
        self.magnitudes[self.slot(i)]
    }

    /// Location and magnitude of the desired chirp's peak.
    pub fn desired(&self) -> (usize, f64) {
        (self.location(0), self.magnitude(0))
    }
}

/// Decision bookkeeping for the SIC receiver over one frame.
///
/// `first_pass[q]` is the preceding-cancelled estimate, `refined[q]` the
/// final both-sided estimate. The `preceding`/`succeeding` views expose the
/// preceding and succeeding decision vectors for a given window.
#[derive(Debug, Clone)]
pub struct SicState {
    k: usize,
    payload_len: usize,
    prefix: Vec<usize>,
    pub first_pass: Vec<Option<usize>>,
    pub refined: Vec<Option<usize>>,
}

impl SicState {
    pub fn new(cfg: &SEConfig, prefix: &[usize]) -> Self {
        Self {
            k: cfg.k,
            payload_len: cfg.payload_len,
            prefix: prefix.to_vec(),
            first_pass: vec![None; cfg.payload_len],
            refined: vec![None; cfg.payload_len],
        }
    }

    /// Best decision for frame position `j`: refined if present, else
    /// first-pass, else known prefix. `None` when no chirp exists there or
    /// nothing has been decided yet.
    pub fn decision(&self, j: i64) -> Option<usize> {
        if j < 0 {
            let pidx = j + self.k as i64 - 1;
            return if pidx >= 0 { Some(self.prefix[pidx as usize]) } else { None };
        }
        if j as usize >= self.payload_len {
            return None;
        }
        self.refined[j as usize].or(self.first_pass[j as usize])
    }

    /// The `k-1` symbols preceding window `q` (known prefix or refined
    /// decisions), clamped at the frame start.
    pub fn preceding(&self, q: usize) -> Vec<usize> {
        (1..self.k)
            .rev()
            .filter_map(|d| self.decision(q as i64 - d as i64))
            .collect()
    }

    /// The up-to-`k-1` first-pass decisions succeeding window `q`, clamped
    /// at the frame end.
    pub fn succeeding(&self, q: usize) -> Vec<usize> {
        (1..self.k)
            .filter(|d| q + d < self.payload_len)
            .filter_map(|d| self.first_pass[q + d])
            .collect()
    }
}

/// Final decisions plus opt-in diagnostics from a frame detector.
#[derive(Debug, Clone)]
pub struct DetectorReport {
    /// One decision per payload symbol (SER is counted on these).
    pub refined: Vec<usize>,
    /// First-pass decisions, when the detector has a two-stage structure.
    pub first_pass: Option<Vec<usize>>,
    /// Per-window spectra seen by the final decision stage (opt-in).
    pub window_spectra: Option<Vec<Spectrum>>,
    pub work: WorkTally,
}

/// Operation counters for the complexity contract: per-symbol work must stay
/// at O(m log m) DFTs plus O(k*m) reconstruction samples, independent of `l`.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct WorkTally {
    pub dft_calls: usize,
    pub chirp_samples: usize,
}

/// Coherent argmax: the bin maximizing `Re(conj(h) * bins[u])`, ties toward
/// the smallest index.
fn coherent_argmax(bins: &[Complex64], h: Complex64) -> usize {
    let hc = h.conj();
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (u, b) in bins.iter().enumerate() {
        let v = (hc * b).re;
        if v > best_val {
            best_val = v;
            best = u;
        }
    }
    best
}

fn check_h(h: Complex64) -> Result<()> {
    if h == Complex64::new(0.0, 0.0) {
        return Err(Error::DegenerateChannel);
    }
    Ok(())
}

/// Conventional coherent LoRa detection on one `m`-sample window.
pub fn conventional_detect(
    window: &ComplexSignal,
    h: Complex64,
    params: &LoRaParams,
) -> Result<usize> {
    check_h(h)?;
    let spec = dechirp_spectrum(window, params)?;
    Ok(coherent_argmax(&spec.bins, h))
}

/// Conventional detection of every window of a received frame, no
/// cancellation. This is the receiver the overlapped scheme breaks: its SER
/// floors because interference peaks collide with the desired peak even
/// without noise.
pub fn conventional_detect_frame_with(
    proc: &ChirpProcessor,
    received: &[Complex64],
    cfg: &SEConfig,
    h: Complex64,
) -> Result<Vec<usize>> {
    check_h(h)?;
    check_frame_len(proc, cfg, received.len())?;
    let m = proc.m();
    let mut bins = Vec::with_capacity(m);
    let mut out = Vec::with_capacity(cfg.payload_len);
    for q in 0..cfg.payload_len {
        let start = q * cfg.lambda_chips;
        proc.dechirp_dft_into(&received[start..start + m], &mut bins);
        out.push(coherent_argmax(&bins, h));
    }
    Ok(out)
}

/// Peak bins and magnitudes for the `2k-1` chirps of one window, from the
/// closed-form analysis. `symbols` holds `s_{-k+1} ..= s_{k-1}` in order.
pub fn predict_peaks(
    params: &LoRaParams,
    cfg: &SEConfig,
    symbols: &[usize],
) -> Result<PeakPrediction> {
    if symbols.len() != 2 * cfg.k - 1 {
        return Err(Error::Config(format!(
            "expected 2k-1 = {} symbols, got {}",
            2 * cfg.k - 1,
            symbols.len()
        )));
    }
    let m = params.m as i64;
    let lambda = cfg.lambda_chips as i64;
    let root_m = (params.m as f64).sqrt();
    let mut locations = Vec::with_capacity(symbols.len());
    let mut magnitudes = Vec::with_capacity(symbols.len());
    for (slot, &s) in symbols.iter().enumerate() {
        check_symbol(params.m, s)?;
        let i = slot as i64 - (cfg.k as i64 - 1);
        locations.push((s as i64 - i * lambda).rem_euclid(m) as usize);
        magnitudes.push((params.m as f64 - (lambda * i.abs()) as f64) / root_m);
    }
    Ok(PeakPrediction { locations, magnitudes, k: cfg.k })
}

/// Dechirped peak magnitude of neighbor `i`: `(m - lambda*|i|)/sqrt(m)`.
pub fn interference_magnitude(params: &LoRaParams, cfg: &SEConfig, i: i64) -> Result<f64> {
    if i.unsigned_abs() as usize >= cfg.k {
        return Err(Error::IndexOutOfRange {
            index: i,
            limit: format!("|i| < k = {}", cfg.k),
        });
    }
    let overlap = params.m - cfg.lambda_chips * i.unsigned_abs() as usize;
    Ok(overlap as f64 / (params.m as f64).sqrt())
}

/// Closed-form dechirped spectrum of one window containing the desired chirp
/// `s_0` plus truncated neighbors.
///
/// `symbols` must have odd length `2r+1` with `s_0` in the middle; entry
/// `r+i` is the symbol of the chirp starting `i*lambda` chips after the
/// window. Passing `2k-1` symbols evaluates the nominal window model; wider
/// neighborhoods (e.g. `2k+1` when `k` does not divide `m`) account for
/// residual overlap, and chirps with no overlap contribute nothing.
pub fn analytic_vse(
    params: &LoRaParams,
    cfg: &SEConfig,
    symbols: &[usize],
) -> Result<Spectrum> {
    if symbols.len().is_multiple_of(2) {
        return Err(Error::Config(format!(
            "symbol neighborhood must have odd length, got {}",
            symbols.len()
        )));
    }
    let m = params.m as i64;
    let lambda = cfg.lambda_chips as i64;
    let radius = (symbols.len() as i64 - 1) / 2;
    for &s in symbols {
        check_symbol(params.m, s)?;
    }
    let root_m = (params.m as f64).sqrt();
    let mut bins = vec![Complex64::new(0.0, 0.0); params.m];
    for (slot, &s) in symbols.iter().enumerate() {
        let i = slot as i64 - radius;
        let s = s as i64;
        // Support of chirp i inside the window.
        let n0 = (i * lambda).max(0);
        let n1 = (m + i * lambda).min(m);
        if n0 >= n1 {
            continue;
        }
        let count = n1 - n0;
        // Dechirped chirp i is exp(j*2*pi*[(alpha - 2u)n + beta] / (2m))
        // with alpha = 2(s - i*lambda) and beta below; reduce the integer
        // parts before forming angles.
        let beta = i * i * lambda * lambda - 2 * i * lambda * s + i * lambda * m;
        let phase0 = std::f64::consts::PI * beta.rem_euclid(2 * m) as f64 / m as f64;
        let offset = Complex64::from_polar(1.0, phase0);
        for (u, bin) in bins.iter_mut().enumerate() {
            let r = (s - i * lambda - u as i64).rem_euclid(m);
            let contribution = if r == 0 {
                count as f64 * offset
            } else {
                // Geometric sum over n in [n0, n1) of exp(j*theta*n) with
                // theta = 2*pi*r/m, in the Dirichlet-kernel form.
                let theta = 2.0 * std::f64::consts::PI * r as f64 / m as f64;
                let mid = theta * (n0 + n1 - 1) as f64 / 2.0;
                let ratio = (theta * count as f64 / 2.0).sin() / (theta / 2.0).sin();
                offset * Complex64::from_polar(ratio, mid)
            };
            *bin += contribution / root_m;
        }
    }
    Ok(Spectrum { bins })
}

/// Windowed superposition `amplitude * h * sum_i x_L[n - i*lambda; s_i]`
/// over `n in [0, m)`, for cancellation. `decisions` pairs each relative
/// chirp index `i` with its symbol decision.
pub fn reconstruct_interference(
    params: &LoRaParams,
    cfg: &SEConfig,
    decisions: &[(i64, usize)],
    h: Complex64,
    amplitude: f64,
) -> Result<ComplexSignal> {
    let proc = ChirpProcessor::new(*params);
    let mut buf = vec![Complex64::new(0.0, 0.0); params.m];
    add_reconstruction(&proc, cfg, decisions, amplitude * h, &mut buf)?;
    Ok(ComplexSignal::new(buf))
}

fn add_reconstruction(
    proc: &ChirpProcessor,
    cfg: &SEConfig,
    decisions: &[(i64, usize)],
    scale: Complex64,
    buf: &mut [Complex64],
) -> Result<()> {
    for &(i, s) in decisions {
        check_symbol(proc.m(), s)?;
        proc.add_chirp(buf, i * cfg.lambda_chips as i64, s, scale);
    }
    Ok(())
}

fn check_frame_len(proc: &ChirpProcessor, cfg: &SEConfig, got: usize) -> Result<()> {
    let expected = (cfg.payload_len - 1) * cfg.lambda_chips + proc.m();
    if got != expected {
        return Err(Error::ShapeMismatch { expected, got });
    }
    Ok(())
}

/// Two-stage SIC detection of a whole received frame. See
/// [`sic_detect_frame_with`] for the hot-path variant and diagnostics.
pub fn sic_detect_frame(
    received: &ComplexSignal,
    prefix: &[usize],
    h: Complex64,
    amplitude: f64,
    params: &LoRaParams,
    cfg: &SEConfig,
) -> Result<DetectorReport> {
    sic_detect_frame_with(
        &ChirpProcessor::new(*params),
        &received.samples,
        prefix,
        h,
        amplitude,
        cfg,
        false,
    )
}

/// SIC detection against a prebuilt [`ChirpProcessor`].
///
/// For each window `q` the first pass cancels every preceding chirp with
/// nonzero overlap (known prefix, refined decisions where they exist,
/// first-pass decisions otherwise) and detects `first_pass[q]`. First-pass
/// decisions are kept far enough ahead that the refined pass for `q` can
/// cancel all succeeding overlap as well; the refined pass re-detects with
/// both sides removed. The last window has no succeeding chirps and keeps
/// its first-pass decision.
///
/// With `want_spectra` the spectrum seen by each refined decision is
/// recorded in the report.
pub fn sic_detect_frame_with(
    proc: &ChirpProcessor,
    received: &[Complex64],
    prefix: &[usize],
    h: Complex64,
    amplitude: f64,
    cfg: &SEConfig,
    want_spectra: bool,
) -> Result<DetectorReport> {
    check_h(h)?;
    check_frame_len(proc, cfg, received.len())?;
    if prefix.len() != cfg.k - 1 {
        return Err(Error::Config(format!(
            "prefix must hold k-1 = {} symbols, got {}",
            cfg.k - 1,
            prefix.len()
        )));
    }
    for &s in prefix {
        check_symbol(proc.m(), s)?;
    }

    let m = proc.m();
    let lambda = cfg.lambda_chips;
    let l = cfg.payload_len;
    let radius = cfg.neighbor_radius(m) as i64;
    let scale = -amplitude * h; // cancellation subtracts
    let mut state = SicState::new(cfg, prefix);
    let mut work = WorkTally::default();
    let mut residual = vec![Complex64::new(0.0, 0.0); m];
    let mut bins: Vec<Complex64> = Vec::with_capacity(m);
    let mut spectra = want_spectra.then(|| Vec::with_capacity(l));

    let cancel_and_detect = |state: &SicState,
                                 w: usize,
                                 lo: i64,
                                 hi: i64,
                                 residual: &mut Vec<Complex64>,
                                 bins: &mut Vec<Complex64>,
                                 work: &mut WorkTally|
     -> usize {
        let start = w * lambda;
        residual.clear();
        residual.extend_from_slice(&received[start..start + m]);
        for j in lo..=hi {
            if j == w as i64 {
                continue;
            }
            if let Some(s) = state.decision(j) {
                let offset = (j - w as i64) * lambda as i64;
                proc.add_chirp(residual, offset, s, scale);
                work.chirp_samples += m - offset.unsigned_abs() as usize;
            }
        }
        proc.dechirp_dft_into(residual, bins);
        work.dft_calls += 1;
        coherent_argmax(bins, h)
    };

    let mut fp_next = 0usize;
    for q in 0..l {
        // Keep first-pass decisions `radius` windows ahead so the refined
        // pass below can cancel every succeeding chirp that overlaps.
        let fp_target = (q + radius as usize).min(l - 1);
        while fp_next <= fp_target {
            let w = fp_next;
            let s = cancel_and_detect(
                &state,
                w,
                w as i64 - radius,
                w as i64 - 1,
                &mut residual,
                &mut bins,
                &mut work,
            );
            state.first_pass[w] = Some(s);
            fp_next += 1;
        }

        if q == l - 1 {
            // No succeeding chirps exist; the first pass already used every
            // available decision.
            state.refined[q] = state.first_pass[q];
            if let Some(spectra) = spectra.as_mut() {
                proc.dechirp_dft_into(&received[q * lambda..q * lambda + m], &mut bins);
                spectra.push(Spectrum { bins: bins.clone() });
            }
        } else {
            let s = cancel_and_detect(
                &state,
                q,
                q as i64 - radius,
                q as i64 + radius,
                &mut residual,
                &mut bins,
                &mut work,
            );
            state.refined[q] = Some(s);
            if let Some(spectra) = spectra.as_mut() {
                spectra.push(Spectrum { bins: bins.clone() });
            }
        }
    }

    Ok(DetectorReport {
        refined: state.refined.iter().map(|d| d.unwrap()).collect(),
        first_pass: Some(state.first_pass.iter().map(|d| d.unwrap()).collect()),
        window_spectra: spectra,
        work,
    })
}

/// Joint ML score of one candidate payload against a received frame:
/// `2*sqrt(P) * sum Re(conj(h) r'[n] conj(X[n])) - P|h|^2 * sum |X[n]|^2`,
/// where `X` is the candidate superposition and `r'` is the received frame
/// with the known prefix contribution removed. The received-energy constant
/// is dropped, so scores are comparable only within one frame.
pub fn joint_ml_objective(
    received: &ComplexSignal,
    h: Complex64,
    amplitude: f64,
    params: &LoRaParams,
    cfg: &SEConfig,
    candidate: &[usize],
) -> Result<f64> {
    let proc = ChirpProcessor::new(*params);
    joint_ml_objective_with(&proc, &received.samples, h, amplitude, cfg, candidate)
}

fn joint_ml_objective_with(
    proc: &ChirpProcessor,
    received: &[Complex64],
    h: Complex64,
    amplitude: f64,
    cfg: &SEConfig,
    candidate: &[usize],
) -> Result<f64> {
    check_frame_len(proc, cfg, received.len())?;
    if candidate.len() != cfg.payload_len {
        return Err(Error::Config(format!(
            "candidate length {} does not match l = {}",
            candidate.len(),
            cfg.payload_len
        )));
    }
    let prefix_free = strip_prefix(proc, received, cfg, h, amplitude);
    Ok(score_candidate(proc, &prefix_free, h, amplitude, cfg, candidate))
}

/// Remove the known pre-payload chirps from the received frame.
fn strip_prefix(
    proc: &ChirpProcessor,
    received: &[Complex64],
    cfg: &SEConfig,
    h: Complex64,
    amplitude: f64,
) -> Vec<Complex64> {
    let mut out = received.to_vec();
    let scale = -amplitude * h;
    let lambda = cfg.lambda_chips as i64;
    for (idx, &s) in cfg.prefix_symbols.iter().enumerate() {
        let i = idx as i64 - (cfg.k as i64 - 1);
        proc.add_chirp(&mut out, i * lambda, s, scale);
    }
    out
}

fn score_candidate(
    proc: &ChirpProcessor,
    prefix_free: &[Complex64],
    h: Complex64,
    amplitude: f64,
    cfg: &SEConfig,
    candidate: &[usize],
) -> f64 {
    let mut x = vec![Complex64::new(0.0, 0.0); prefix_free.len()];
    let one = Complex64::new(1.0, 0.0);
    let lambda = cfg.lambda_chips as i64;
    for (i, &s) in candidate.iter().enumerate() {
        proc.add_chirp(&mut x, i as i64 * lambda, s, one);
    }
    let hc = h.conj();
    let mut corr = 0.0;
    let mut energy = 0.0;
    for (r, xv) in prefix_free.iter().zip(&x) {
        corr += (hc * r * xv.conj()).re;
        energy += xv.norm_sqr();
    }
    2.0 * amplitude * corr - amplitude * amplitude * h.norm_sqr() * energy
}

/// Exhaustive joint ML detection with the default candidate cap.
pub fn joint_ml_detect(
    received: &ComplexSignal,
    h: Complex64,
    amplitude: f64,
    params: &LoRaParams,
    cfg: &SEConfig,
) -> Result<DetectorReport> {
    joint_ml_detect_capped(received, h, amplitude, params, cfg, JOINT_ML_DEFAULT_CAP)
}

/// Exhaustive joint ML detection, refusing when `m^l` exceeds `cap`.
/// Candidates are scanned in lexicographic order and ties keep the earlier
/// candidate, so decisions are deterministic.
pub fn joint_ml_detect_capped(
    received: &ComplexSignal,
    h: Complex64,
    amplitude: f64,
    params: &LoRaParams,
    cfg: &SEConfig,
    cap: u128,
) -> Result<DetectorReport> {
    check_h(h)?;
    let l = cfg.payload_len;
    let candidates = (params.m as u128)
        .checked_pow(l as u32)
        .filter(|&c| c <= cap)
        .ok_or(Error::JointMlInfeasible {
            candidates: (params.m as u128).checked_pow(l as u32).unwrap_or(u128::MAX),
            cap,
        })?;

    let proc = ChirpProcessor::new(*params);
    check_frame_len(&proc, cfg, received.len())?;
    let prefix_free = strip_prefix(&proc, &received.samples, cfg, h, amplitude);

    let mut candidate = vec![0usize; l];
    let mut best = candidate.clone();
    let mut best_score = f64::NEG_INFINITY;
    for _ in 0..candidates {
        let score = score_candidate(&proc, &prefix_free, h, amplitude, cfg, &candidate);
        if score > best_score {
            best_score = score;
            best.copy_from_slice(&candidate);
        }
        // Lexicographic increment: index 0 is the most significant digit.
        for digit in candidate.iter_mut().rev() {
            *digit += 1;
            if *digit < params.m {
                break;
            }
            *digit = 0;
        }
    }

    Ok(DetectorReport {
        refined: best,
        first_pass: None,
        window_spectra: None,
        work: WorkTally::default(),
    })
}
