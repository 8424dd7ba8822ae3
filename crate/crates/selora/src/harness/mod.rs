//! Monte Carlo SER engine: sweep SNR points for one link configuration,
//! interpolate SNR at a target SER, and assemble the gain/loss comparison
//! against the conventional-LoRa baseline.
//!
//! Reproducibility contract: every trial derives its own ChaCha substream
//! from `(master_seed, snr_index, trial_index)`, trials are scheduled in
//! fixed-size batches, and tallies are exact integer sums. Results are
//! therefore byte-identical for any worker count, and partitioned tallies
//! add up to the serial ones.

mod config;
mod csv;

pub use config::{parse_config_file, parse_config_str, RunConfig};
pub use csv::{
    dump_spectrum, dump_spectrum_to, emit_comparison_csv, emit_ser_csv, parse_ser_csv,
    write_comparison_csv, write_ser_csv,
};

use std::ops::Range;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{
    apply_channel, draw_channel, snr_to_noise_variance, ChannelRealization, ChannelSpec,
};
use crate::detection::{
    conventional_detect_frame_with, joint_ml_detect_capped, sic_detect_frame_with,
};
use crate::error::{Error, Result};
use crate::framing::{build_frame_with, se_config, se_gain_percent, SEConfig};
use crate::waveform::{ChirpProcessor, LoRaParams};

/// Frames per scheduling batch. The stop rule is evaluated at batch
/// boundaries only, which keeps trial counts independent of parallelism.
const BATCH_FRAMES: u64 = 32;

/// 95% two-sided normal quantile for the Wilson interval.
const WILSON_Z: f64 = 1.959963984540054;

/// Receiver selection for a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    /// Per-window conventional detection, no cancellation.
    Conventional,
    /// Two-stage SIC detection.
    Sic,
    /// Exhaustive joint ML (toy scale only).
    JointMl,
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DetectorKind::Conventional => write!(f, "conv"),
            DetectorKind::Sic => write!(f, "sic"),
            DetectorKind::JointMl => write!(f, "jointml"),
        }
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv" => Ok(DetectorKind::Conventional),
            "sic" => Ok(DetectorKind::Sic),
            "jointml" => Ok(DetectorKind::JointMl),
            other => Err(Error::Config(format!(
                "unknown detector '{other}' (expected conv, sic, or jointml)"
            ))),
        }
    }
}

/// Per-point stop rule: stop after `max_symbols` payload symbols or
/// `target_errors` symbol errors, whichever comes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopRule {
    pub max_symbols: u64,
    pub target_errors: u64,
}

impl Default for StopRule {
    /// 200 errors bounds the relative SER error near +-14%; 10^6 symbols
    /// bounds the cost of points far below the target.
    fn default() -> Self {
        StopRule { max_symbols: 1_000_000, target_errors: 200 }
    }
}

/// Everything needed to run one SER-vs-SNR sweep.
#[derive(Debug, Clone)]
pub struct SimJob {
    pub params: LoRaParams,
    /// Frame shape template; the prefix is redrawn per frame.
    pub cfg: SEConfig,
    pub channel: ChannelSpec,
    pub detector: DetectorKind,
    pub snr_grid_db: Vec<f64>,
    pub stop: StopRule,
    pub master_seed: u64,
    /// Candidate cap for the joint ML detector.
    pub joint_ml_cap: u128,
}

impl SimJob {
    pub fn validate(&self) -> Result<()> {
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("snr grid must not be empty".into()));
        }
        if !self.snr_grid_db.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("snr grid must be strictly increasing".into()));
        }
        if self.stop.max_symbols == 0 || self.stop.target_errors == 0 {
            return Err(Error::Config("stop rule must be positive".into()));
        }
        if self.detector == DetectorKind::JointMl {
            let candidates = (self.params.m as u128)
                .checked_pow(self.cfg.payload_len as u32)
                .unwrap_or(u128::MAX);
            if candidates > self.joint_ml_cap {
                return Err(Error::JointMlInfeasible {
                    candidates,
                    cap: self.joint_ml_cap,
                });
            }
        }
        Ok(())
    }
}

/// Monte Carlo tally for one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct SERRecord {
    pub snr_db: f64,
    pub symbols: u64,
    pub errors: u64,
    pub ser: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SERRecord {
    pub fn from_tally(snr_db: f64, symbols: u64, errors: u64) -> Self {
        let ser = errors as f64 / symbols as f64;
        let (ci_low, ci_high) = wilson_interval(errors, symbols);
        SERRecord { snr_db, symbols, errors, ser, ci_low, ci_high }
    }
}

/// One line of the gain/loss comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub channel: ChannelSpec,
    pub sf: u32,
    pub k: usize,
    pub l: usize,
    /// Spectral-efficiency gain over conventional LoRa, percent.
    pub gain_percent: f64,
    /// SNR penalty at the target SER versus the k=1 baseline, dB.
    pub loss_db: f64,
}

/// Wilson 95% score interval for `errors` successes in `trials`; always
/// contains the point estimate.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // The score interval always contains the point estimate; clamping keeps
    // that true against rounding at p = 0 or 1.
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

/// Independent random substream for one trial of one SNR point.
fn trial_rng(master_seed: u64, snr_index: usize, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((snr_index as u64) << 40) ^ trial);
    rng
}

/// Simulate one frame end to end and count symbol errors on the final
/// decisions. Pure function of `(job, snr_index, trial)`.
fn run_one_trial(
    proc: &ChirpProcessor,
    job: &SimJob,
    snr_index: usize,
    trial: u64,
    noise_variance: f64,
) -> u64 {
    let mut rng = trial_rng(job.master_seed, snr_index, trial);
    let m = proc.m();
    let l = job.cfg.payload_len;
    // Gain first, then payload: trials with the same (seed, point, index)
    // see the same fade for every overlap factor, so gain/loss differences
    // between sweeps use common random numbers.
    let h = draw_channel(&job.channel, &mut rng);
    let payload: Vec<usize> = (0..l).map(|_| rng.gen_range(0..m)).collect();
    let prefix: Vec<usize> = (0..job.cfg.k - 1).map(|_| rng.gen_range(0..m)).collect();
    let cfg = SEConfig { prefix_symbols: prefix.clone(), ..job.cfg.clone() };

    let frame = build_frame_with(proc, &cfg, &payload)
        .expect("validated job produces well-formed frames");
    let realization = ChannelRealization { h, noise_variance, amplitude: 1.0 };
    let rx = apply_channel(&frame.samples, &realization, &mut rng);

    let decisions = match job.detector {
        DetectorKind::Conventional => {
            conventional_detect_frame_with(proc, &rx.samples, &cfg, h)
        }
        DetectorKind::Sic => {
            sic_detect_frame_with(proc, &rx.samples, &prefix, h, 1.0, &cfg, false)
                .map(|r| r.refined)
        }
        DetectorKind::JointMl => {
            joint_ml_detect_capped(&rx, h, 1.0, proc.params(), &cfg, job.joint_ml_cap)
                .map(|r| r.refined)
        }
    }
    .expect("validated job keeps detectors in their domain");

    decisions.iter().zip(&payload).filter(|(a, b)| a != b).count() as u64
}

/// Error count over a contiguous range of trial indices of one SNR point,
/// run in parallel. Tallies are exact sums, so any partition of a range
/// adds up to the range's own tally.
pub fn tally_trials(job: &SimJob, snr_index: usize, trials: Range<u64>) -> (u64, u64) {
    let proc = ChirpProcessor::new(job.params);
    let noise_variance = snr_to_noise_variance(job.snr_grid_db[snr_index]);
    let errors: u64 = trials
        .clone()
        .into_par_iter()
        .map(|t| run_one_trial(&proc, job, snr_index, t, noise_variance))
        .sum();
    let symbols = (trials.end - trials.start) * job.cfg.payload_len as u64;
    (symbols, errors)
}

fn run_point(proc: &ChirpProcessor, job: &SimJob, snr_index: usize) -> SERRecord {
    let snr_db = job.snr_grid_db[snr_index];
    let noise_variance = snr_to_noise_variance(snr_db);
    let l = job.cfg.payload_len as u64;
    let frames_cap = job.stop.max_symbols.div_ceil(l);

    let mut symbols = 0u64;
    let mut errors = 0u64;
    let mut next = 0u64;
    while next < frames_cap && errors < job.stop.target_errors {
        let end = (next + BATCH_FRAMES).min(frames_cap);
        let batch_errors: u64 = (next..end)
            .into_par_iter()
            .map(|t| run_one_trial(proc, job, snr_index, t, noise_variance))
            .sum();
        symbols += (end - next) * l;
        errors += batch_errors;
        next = end;
    }
    SERRecord::from_tally(snr_db, symbols, errors)
}

/// Run the full sweep: one [`SERRecord`] per SNR point, in grid order.
pub fn run_ser_sweep(job: &SimJob) -> Result<Vec<SERRecord>> {
    run_ser_sweep_cb(job, |_| {})
}

/// [`run_ser_sweep`] with a completion callback per point (progress
/// reporting); the callback has no effect on the records.
pub fn run_ser_sweep_cb(
    job: &SimJob,
    mut on_record: impl FnMut(&SERRecord),
) -> Result<Vec<SERRecord>> {
    job.validate()?;
    let proc = ChirpProcessor::new(job.params);
    let mut records = Vec::with_capacity(job.snr_grid_db.len());
    for snr_index in 0..job.snr_grid_db.len() {
        let record = run_point(&proc, job, snr_index);
        on_record(&record);
        records.push(record);
    }
    Ok(records)
}

/// SNR (dB) where the sweep crosses `target` SER, by interpolating linearly
/// in `(snr_db, log10 ser)` between the bracketing records.
pub fn snr_at_target_ser(records: &[SERRecord], target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Config(format!("target SER must be in (0, 1), got {target}")));
    }
    // Half an error as the floor keeps zero-error records interpolable.
    let floor_ser = |r: &SERRecord| (r.ser).max(0.5 / r.symbols as f64);
    for pair in records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.ser == target {
            return Ok(a.snr_db);
        }
        if a.ser >= target && b.ser <= target {
            let la = floor_ser(a).log10();
            let lb = floor_ser(b).log10();
            if la == lb {
                return Ok(a.snr_db);
            }
            let t = (target.log10() - la) / (lb - la);
            return Ok(a.snr_db + t * (b.snr_db - a.snr_db));
        }
    }
    if let Some(last) = records.last() {
        if last.ser == target {
            return Ok(last.snr_db);
        }
    }
    Err(Error::InsufficientSweep { target })
}

/// Run the gain/loss comparison: sweep the `k = 1` baseline once, then each
/// requested overlap factor with `base`'s detector, and report the
/// spectral-efficiency gain plus the SNR penalty at `target` SER.
pub fn reproduce_comparison(
    base: &SimJob,
    k_list: &[usize],
    target: f64,
) -> Result<Vec<ComparisonRow>> {
    let job_for_k = |k: usize| -> Result<SimJob> {
        let cfg = se_config(&base.params, k, base.cfg.payload_len, &vec![0; k - 1])?;
        Ok(SimJob { cfg, ..base.clone() })
    };

    let baseline_snr = if k_list.iter().any(|&k| k != 1) {
        let baseline = job_for_k(1)?;
        Some(snr_at_target_ser(&run_ser_sweep(&baseline)?, target)?)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let l = base.cfg.payload_len;
        let loss_db = if k == 1 {
            // Baseline against itself.
            0.0
        } else {
            let records = run_ser_sweep(&job_for_k(k)?)?;
            snr_at_target_ser(&records, target)? - baseline_snr.expect("baseline was run")
        };
        rows.push(ComparisonRow {
            channel: base.channel,
            sf: base.params.sf,
            k,
            l,
            gain_percent: se_gain_percent(k, l),
            loss_db,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::JOINT_ML_DEFAULT_CAP;
    use crate::waveform::make_params;

    fn record(snr_db: f64, ser: f64) -> SERRecord {
        let symbols = 1_000_000u64;
        let errors = (ser * symbols as f64).round() as u64;
        SERRecord::from_tally(snr_db, symbols, errors)
    }

    fn toy_job(detector: DetectorKind, k: usize, snr: Vec<f64>) -> SimJob {
        let params = make_params(4, 125e3).unwrap();
        let cfg = se_config(&params, k, 8, &vec![0; k - 1]).unwrap();
        SimJob {
            params,
            cfg,
            channel: ChannelSpec::Awgn,
            detector,
            snr_grid_db: snr,
            stop: StopRule { max_symbols: 4_000, target_errors: 100 },
            master_seed: 7,
            joint_ml_cap: JOINT_ML_DEFAULT_CAP,
        }
    }

    #[test]
    fn wilson_contains_point_estimate() {
        for (e, n) in [(0u64, 100u64), (1, 100), (50, 100), (100, 100), (200, 123456)] {
            let (lo, hi) = wilson_interval(e, n);
            let p = e as f64 / n as f64;
            assert!(lo <= p && p <= hi, "({e}, {n}): [{lo}, {hi}] vs {p}");
            assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }

    #[test]
    fn interpolation_exact_hit() {
        let records = vec![record(4.0, 1e-2), record(5.0, 1e-3), record(6.0, 1e-4)];
        assert_eq!(snr_at_target_ser(&records, 1e-3).unwrap(), 5.0);
    }

    #[test]
    fn interpolation_log_linear_midpoint() {
        let records = vec![record(4.0, 1e-2), record(6.0, 1e-4)];
        let snr = snr_at_target_ser(&records, 1e-3).unwrap();
        assert!((snr - 5.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_needs_bracketing() {
        let records = vec![record(0.0, 0.3), record(2.0, 0.1), record(4.0, 0.01)];
        assert!(matches!(
            snr_at_target_ser(&records, 1e-3),
            Err(Error::InsufficientSweep { .. })
        ));
    }

    #[test]
    fn sweep_is_deterministic_and_additive() {
        let job = toy_job(DetectorKind::Sic, 2, vec![-8.0, -6.0]);
        let a = run_ser_sweep(&job).unwrap();
        let b = run_ser_sweep(&job).unwrap();
        assert_eq!(a, b);

        // The first point's tally equals the sum over any partition of the
        // trials it ran.
        let frames = a[0].symbols / job.cfg.payload_len as u64;
        let whole = tally_trials(&job, 0, 0..frames);
        assert_eq!(whole, (a[0].symbols, a[0].errors));
        let mid = frames / 3;
        let (s1, e1) = tally_trials(&job, 0, 0..mid);
        let (s2, e2) = tally_trials(&job, 0, mid..frames);
        assert_eq!((s1 + s2, e1 + e2), whole);
    }

    #[test]
    fn clean_channel_high_snr_is_error_free() {
        let job = toy_job(DetectorKind::Conventional, 1, vec![20.0]);
        let records = run_ser_sweep(&job).unwrap();
        assert_eq!(records[0].errors, 0);
        assert!(records[0].symbols >= 4_000);
    }

    #[test]
    fn joint_ml_guard_in_validate() {
        let params = make_params(7, 125e3).unwrap();
        let cfg = se_config(&params, 2, 57, &[0]).unwrap();
        let job = SimJob {
            params,
            cfg,
            channel: ChannelSpec::Awgn,
            detector: DetectorKind::JointMl,
            snr_grid_db: vec![0.0],
            stop: StopRule::default(),
            master_seed: 1,
            joint_ml_cap: JOINT_ML_DEFAULT_CAP,
        };
        assert!(matches!(job.validate(), Err(Error::JointMlInfeasible { .. })));
    }

    #[test]
    fn validate_rejects_bad_grid() {
        let mut job = toy_job(DetectorKind::Sic, 2, vec![]);
        assert!(job.validate().is_err());
        job.snr_grid_db = vec![0.0, 0.0];
        assert!(job.validate().is_err());
        job.snr_grid_db = vec![0.0, 1.0];
        assert!(job.validate().is_ok());
        job.stop.target_errors = 0;
        assert!(job.validate().is_err());
    }

    #[test]
    fn ser_non_increasing_in_snr_up_to_ci_overlap() {
        let job = toy_job(DetectorKind::Conventional, 1, vec![-14.0, -10.0, -6.0, -2.0]);
        let records = run_ser_sweep(&job).unwrap();
        for pair in records.windows(2) {
            assert!(
                pair[1].ser <= pair[0].ci_high,
                "ser rose from {} (ci_high {}) to {} between {} and {} dB",
                pair[0].ser,
                pair[0].ci_high,
                pair[1].ser,
                pair[0].snr_db,
                pair[1].snr_db
            );
        }
    }

    #[test]
    fn comparison_k1_row_is_zero_by_definition() {
        let job = toy_job(DetectorKind::Sic, 1, vec![-10.0, -9.0, -8.0]);
        let rows = reproduce_comparison(&job, &[1], 1e-3).unwrap();
        assert_eq!(rows[0].gain_percent, 0.0);
        assert_eq!(rows[0].loss_db, 0.0);
    }
}
