//! SE-LoRa frame construction and spectral-efficiency figures.
//!
//! Overlapped transmission launches a new chirp every `lambda = floor(m/k)`
//! chips instead of every `m` chips, so a frame of `l` symbols occupies
//! `(l-1)*lambda + m` chips. Each receiving window (the `m` chips aligned to
//! one desired chirp) then also contains truncated neighbors; the `k-1`
//! chirps before the payload are known prefix content, standing in for the
//! preamble/header parts of a real frame.
//!
//! Note that when `k` does not divide `m`, chirps `k` positions away still
//! overlap a window by `m - k*lambda` chips. The builder places chirps
//! physically, so frames carry that residual; window models elsewhere use
//! [`SEConfig::neighbor_radius`] to account for every overlapping chirp.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::waveform::{check_symbol, ChirpProcessor, ComplexSignal, LoRaParams};

/// Overlapped-transmission configuration for one frame shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SEConfig {
    /// Overlap factor: chirps start every `T/k` seconds. `k = 1` is plain
    /// back-to-back LoRa.
    pub k: usize,
    /// Chip spacing between consecutive chirp starts: `floor(m/k)`.
    pub lambda_chips: usize,
    /// Number of payload symbols `l` in a frame.
    pub payload_len: usize,
    /// The `k-1` symbols transmitted immediately before the payload, known
    /// at the receiver.
    pub prefix_symbols: Vec<usize>,
}

impl SEConfig {
    /// Number of chirp positions on each side of a window with nonzero
    /// overlap: `ceil(m/lambda) - 1`. Equals `k-1` when `k` divides `m`,
    /// and can reach `k` (or more for extreme `k`) otherwise.
    pub fn neighbor_radius(&self, m: usize) -> usize {
        m.div_ceil(self.lambda_chips) - 1
    }
}

/// One built frame: the transmitted samples plus the metadata needed to
/// detect it.
#[derive(Debug, Clone)]
pub struct Frame {
    pub samples: ComplexSignal,
    pub payload: Vec<usize>,
    pub config: SEConfig,
}

impl Frame {
    /// Chips per symbol, recovered from the frame geometry.
    pub fn m(&self) -> usize {
        self.samples.len() - (self.config.payload_len - 1) * self.config.lambda_chips
    }
}

/// Validate an overlap configuration. `prefix` must hold exactly `k-1`
/// symbols.
pub fn se_config(
    params: &LoRaParams,
    k: usize,
    payload_len: usize,
    prefix: &[usize],
) -> Result<SEConfig> {
    if k < 1 || k > params.m {
        return Err(Error::Config(format!("k must be in [1, {}], got {k}", params.m)));
    }
    if payload_len < 1 {
        return Err(Error::Config("payload_len must be >= 1".into()));
    }
    if prefix.len() != k - 1 {
        return Err(Error::Config(format!(
            "prefix must hold k-1 = {} symbols, got {}",
            k - 1,
            prefix.len()
        )));
    }
    for &s in prefix {
        check_symbol(params.m, s)?;
    }
    Ok(SEConfig {
        k,
        lambda_chips: params.m / k,
        payload_len,
        prefix_symbols: prefix.to_vec(),
    })
}

/// [`se_config`] with the prefix drawn uniformly, the default for simulated
/// frames.
pub fn se_config_random_prefix<R: Rng + ?Sized>(
    params: &LoRaParams,
    k: usize,
    payload_len: usize,
    rng: &mut R,
) -> Result<SEConfig> {
    if k < 1 || k > params.m {
        return Err(Error::Config(format!("k must be in [1, {}], got {k}", params.m)));
    }
    let prefix: Vec<usize> = (0..k - 1).map(|_| rng.gen_range(0..params.m)).collect();
    se_config(params, k, payload_len, &prefix)
}

/// Expected sample count of a frame: `(l-1)*lambda + m`.
pub fn frame_len(params: &LoRaParams, cfg: &SEConfig) -> usize {
    (cfg.payload_len - 1) * cfg.lambda_chips + params.m
}

/// Superpose prefix and payload chirps at their physical offsets
/// (`i*lambda` for frame position `i`), unit amplitude, no channel.
///
/// Prefix chirps sit at negative offsets; only their chips with `n >= 0`
/// land in the frame. Nothing is transmitted after the last payload chirp.
pub fn build_frame(params: &LoRaParams, cfg: &SEConfig, payload: &[usize]) -> Result<Frame> {
    build_frame_with(&ChirpProcessor::new(*params), cfg, payload)
}

/// [`build_frame`] against a prebuilt [`ChirpProcessor`] (hot-path variant).
pub fn build_frame_with(
    proc: &ChirpProcessor,
    cfg: &SEConfig,
    payload: &[usize],
) -> Result<Frame> {
    if payload.len() != cfg.payload_len {
        return Err(Error::Config(format!(
            "payload length {} does not match configured l = {}",
            payload.len(),
            cfg.payload_len
        )));
    }
    let m = proc.m();
    for &s in payload {
        check_symbol(m, s)?;
    }
    let lambda = cfg.lambda_chips as i64;
    let mut samples = vec![Complex64::new(0.0, 0.0); frame_len(proc.params(), cfg)];
    let one = Complex64::new(1.0, 0.0);
    for (idx, &s) in cfg.prefix_symbols.iter().enumerate() {
        // prefix entry idx is frame position i = idx - (k-1)
        let i = idx as i64 - (cfg.k as i64 - 1);
        proc.add_chirp(&mut samples, i * lambda, s, one);
    }
    for (i, &s) in payload.iter().enumerate() {
        proc.add_chirp(&mut samples, i as i64 * lambda, s, one);
    }
    Ok(Frame {
        samples: ComplexSignal::new(samples),
        payload: payload.to_vec(),
        config: cfg.clone(),
    })
}

/// The `m` samples of receiving window `q`, starting at chip `q*lambda`.
pub fn extract_window(frame: &Frame, q: usize) -> Result<ComplexSignal> {
    if q >= frame.config.payload_len {
        return Err(Error::IndexOutOfRange {
            index: q as i64,
            limit: format!("payload windows 0..{}", frame.config.payload_len),
        });
    }
    let m = frame.m();
    let start = q * frame.config.lambda_chips;
    Ok(ComplexSignal {
        samples: frame.samples.samples[start..start + m].to_vec(),
        start_index: start as i64,
    })
}

/// Spectral efficiency of conventional LoRa: `sf / 2^sf` (bits/s/Hz).
pub fn spectral_efficiency_lora(params: &LoRaParams) -> f64 {
    params.sf as f64 / params.m as f64
}

/// Spectral-efficiency gain of overlapped transmission over conventional
/// LoRa, in percent: `(k*l/(k+l-1) - 1) * 100`.
pub fn se_gain_percent(k: usize, payload_len: usize) -> f64 {
    let k = k as f64;
    let l = payload_len as f64;
    (k * l / (k + l - 1.0) - 1.0) * 100.0
}

/// [`se_gain_percent`] rounded half-up to two decimals using integer
/// arithmetic, as a display string. The gain is the rational
/// `100*(k-1)*(l-1) / (k+l-1)`, so the rounding is exact.
pub fn se_gain_percent_display(k: usize, payload_len: usize) -> String {
    let num = 10_000u128 * (k as u128 - 1) * (payload_len as u128 - 1);
    let den = (k + payload_len - 1) as u128;
    let cents = (2 * num + den) / (2 * den);
    format!("{}.{:02}", cents / 100, cents % 100)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{dechirp_spectrum, make_params, modulate_chirp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda_from_overlap_factor() {
        let p = make_params(7, 125e3).unwrap();
        assert_eq!(se_config(&p, 3, 10, &[1, 2]).unwrap().lambda_chips, 42);
        assert_eq!(se_config(&p, 4, 10, &[1, 2, 3]).unwrap().lambda_chips, 32);
        let degenerate = se_config(&p, 1, 10, &[]).unwrap();
        assert_eq!(degenerate.lambda_chips, 128);
        assert!(degenerate.prefix_symbols.is_empty());
    }

    #[test]
    fn config_rejects_bad_input() {
        let p = make_params(7, 125e3).unwrap();
        assert!(se_config(&p, 0, 10, &[]).is_err());
        assert!(se_config(&p, 200, 10, &[0; 199]).is_err());
        assert!(se_config(&p, 3, 0, &[1, 2]).is_err());
        assert!(se_config(&p, 3, 10, &[1]).is_err());
        assert!(se_config(&p, 3, 10, &[1, 128]).is_err());
    }

    #[test]
    fn neighbor_radius_covers_residual_overlap() {
        let p = make_params(7, 125e3).unwrap();
        // k=4 divides 128: radius k-1. k=3 leaves a 2-chip residual: radius k.
        assert_eq!(se_config(&p, 4, 5, &[0; 3]).unwrap().neighbor_radius(p.m), 3);
        assert_eq!(se_config(&p, 3, 5, &[0; 2]).unwrap().neighbor_radius(p.m), 3);
        assert_eq!(se_config(&p, 1, 5, &[]).unwrap().neighbor_radius(p.m), 0);
    }

    #[test]
    fn k1_frame_is_concatenation() {
        let p = make_params(4, 1.0).unwrap();
        let cfg = se_config(&p, 1, 2, &[]).unwrap();
        let frame = build_frame(&p, &cfg, &[5, 9]).unwrap();
        assert_eq!(frame.samples.len(), 32);
        let a = modulate_chirp(&p, 5).unwrap();
        let b = modulate_chirp(&p, 9).unwrap();
        for n in 0..16 {
            assert!((frame.samples.samples[n] - a.samples[n]).norm() < 1e-15);
            assert!((frame.samples.samples[16 + n] - b.samples[n]).norm() < 1e-15);
        }
    }

    #[test]
    fn frame_length_matches_placement_rule() {
        let p = make_params(7, 125e3).unwrap();
        let cfg = se_config(&p, 2, 57, &[3]).unwrap();
        let frame = build_frame(&p, &cfg, &vec![0; 57]).unwrap();
        assert_eq!(frame.samples.len(), 56 * 64 + 128);
        assert_eq!(frame.m(), 128);
    }

    #[test]
    fn first_sample_sums_all_covering_chirps() {
        let p = make_params(4, 1.0).unwrap();
        let cfg = se_config(&p, 4, 3, &[2, 7, 11]).unwrap();
        let payload = [1usize, 5, 9];
        let frame = build_frame(&p, &cfg, &payload).unwrap();
        let lambda = cfg.lambda_chips as i64;
        // Direct evaluation of the superposition at n = 0.
        let mut expected = Complex64::new(0.0, 0.0);
        for (idx, &s) in cfg.prefix_symbols.iter().enumerate() {
            let i = idx as i64 - 3;
            let local = -i * lambda; // n - i*lambda at n = 0
            if (0..p.m as i64).contains(&local) {
                expected += modulate_chirp(&p, s).unwrap().samples[local as usize];
            }
        }
        expected += modulate_chirp(&p, payload[0]).unwrap().samples[0];
        assert!((frame.samples.samples[0] - expected).norm() < 1e-12);
    }

    #[test]
    fn window_zero_of_k1_frame_is_the_first_chirp() {
        let p = make_params(5, 1.0).unwrap();
        let cfg = se_config(&p, 1, 3, &[]).unwrap();
        let frame = build_frame(&p, &cfg, &[7, 1, 30]).unwrap();
        let win = extract_window(&frame, 0).unwrap();
        let chirp = modulate_chirp(&p, 7).unwrap();
        for (x, y) in win.samples.iter().zip(&chirp.samples) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn window_zero_shows_five_overlap_peaks() {
        // k=3, sf=7, prefix (10, 30), payload (50, 70, 90): five chirps reach
        // window 0 and their dechirped peaks sit at bins 94, 72, 50, 28, 6.
        let p = make_params(7, 125e3).unwrap();
        let cfg = se_config(&p, 3, 3, &[10, 30]).unwrap();
        let frame = build_frame(&p, &cfg, &[50, 70, 90]).unwrap();
        let win = extract_window(&frame, 0).unwrap();
        let spec = dechirp_spectrum(&win, &p).unwrap();
        // The five chirp peaks dominate every other bin; magnitudes sit near
        // (m - lambda|i|)/sqrt(m) up to leakage from the other four chirps.
        let mut order: Vec<usize> = (0..p.m).collect();
        order.sort_by(|&a, &b| spec.bins[b].norm().total_cmp(&spec.bins[a].norm()));
        let mut top5 = order[..5].to_vec();
        top5.sort_unstable();
        assert_eq!(top5, vec![6, 28, 50, 72, 94]);
        let lambda = 42.0;
        let root_m = 128f64.sqrt();
        for (i, bin) in [(-2i64, 94usize), (-1, 72), (0, 50), (1, 28), (2, 6)] {
            let expected = (128.0 - lambda * i.unsigned_abs() as f64) / root_m;
            let got = spec.bins[bin].norm();
            assert!(
                (got - expected).abs() < 0.5,
                "bin {bin} (i={i}): |V| = {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn last_window_is_frame_tail() {
        let p = make_params(6, 1.0).unwrap();
        let cfg = se_config(&p, 4, 5, &[1, 2, 3]).unwrap();
        let frame = build_frame(&p, &cfg, &[10, 20, 30, 40, 50]).unwrap();
        let win = extract_window(&frame, 4).unwrap();
        let tail = &frame.samples.samples[frame.samples.len() - 64..];
        assert_eq!(win.samples.as_slice(), tail);
        assert!(extract_window(&frame, 5).is_err());
    }

    #[test]
    fn window_matches_direct_superposition() {
        let p = make_params(7, 125e3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in [2usize, 3, 4, 5] {
            let cfg = se_config_random_prefix(&p, k, 12, &mut rng).unwrap();
            let payload: Vec<usize> =
                (0..12).map(|_| rng.gen_range(0..p.m)).collect();
            let frame = build_frame(&p, &cfg, &payload).unwrap();
            let proc = ChirpProcessor::new(p);
            let radius = cfg.neighbor_radius(p.m) as i64;
            for q in 0..cfg.payload_len {
                let win = extract_window(&frame, q).unwrap();
                let mut direct = vec![Complex64::new(0.0, 0.0); p.m];
                for i in -radius..=radius {
                    let j = q as i64 + i; // frame position of the neighbor
                    let s = if j < 0 {
                        let pidx = j + k as i64 - 1;
                        if pidx < 0 {
                            continue;
                        }
                        cfg.prefix_symbols[pidx as usize]
                    } else if (j as usize) < cfg.payload_len {
                        payload[j as usize]
                    } else {
                        continue;
                    };
                    proc.add_chirp(
                        &mut direct,
                        i * cfg.lambda_chips as i64,
                        s,
                        Complex64::new(1.0, 0.0),
                    );
                }
                for (n, (x, y)) in win.samples.iter().zip(&direct).enumerate() {
                    assert!(
                        (x - y).norm() < 1e-12,
                        "k={k} q={q} n={n}: window {x} vs direct {y}"
                    );
                }
            }
        }
    }

    #[test]
    fn spectral_efficiency_values() {
        let p7 = make_params(7, 125e3).unwrap();
        assert!((spectral_efficiency_lora(&p7) - 7.0 / 128.0).abs() < 1e-15);
        let p11 = make_params(11, 500e3).unwrap();
        assert!((spectral_efficiency_lora(&p11) - 11.0 / 2048.0).abs() < 1e-15);
        let p12 = make_params(12, 125e3).unwrap();
        assert!((spectral_efficiency_lora(&p12) - 12.0 / 4096.0).abs() < 1e-15);
    }

    #[test]
    fn gain_percent_reference_points() {
        assert!((se_gain_percent(2, 50) - 96.078431372).abs() < 1e-6);
        assert_eq!(se_gain_percent_display(2, 50), "96.08");
        assert_eq!(se_gain_percent_display(6, 50), "445.45");
        assert_eq!(se_gain_percent_display(15, 50), "1071.88");
        assert_eq!(se_gain_percent(1, 50), 0.0);
        assert_eq!(se_gain_percent_display(1, 50), "0.00");
    }

    #[test]
    fn gain_approaches_k_minus_one() {
        for k in [2usize, 5, 15] {
            let g = se_gain_percent(k, 1_000_000);
            let asymptote = (k as f64 - 1.0) * 100.0;
            assert!((g - asymptote).abs() / asymptote < 1e-3);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn frame_length_law(sf in 2u32..=8, k in 1usize..=6, l in 1usize..=20) {
                let p = make_params(sf, 125e3).unwrap();
                prop_assume!(k <= p.m);
                let cfg = se_config(&p, k, l, &vec![0; k - 1]).unwrap();
                let frame = build_frame(&p, &cfg, &vec![0; l]).unwrap();
                prop_assert_eq!(frame.samples.len(), (l - 1) * (p.m / k) + p.m);
            }
        }
    }
}
