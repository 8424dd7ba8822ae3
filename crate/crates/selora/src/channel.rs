//! Block-fading channel models and AWGN.
//!
//! One complex gain `h` is drawn per frame and held constant across it;
//! noise is i.i.d. circularly-symmetric complex Gaussian per sample. Fading
//! gains are normalized to `E[|h|^2] = 1`, so the per-sample SNR convention
//! `snr = P * E[|h|^2] / sigma^2` (with unit chirp power `P = 1`) reduces to
//! `sigma^2 = 10^(-snr_db/10)` for every channel kind.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::waveform::ComplexSignal;

/// Fading family for the link environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSpec {
    /// Line-of-sight only: `h = 1` exactly.
    Awgn,
    /// No line of sight: `h ~ CN(0, 1)`.
    Rayleigh,
    /// Line-of-sight plus scatter with the given Rician factor in dB
    /// (ratio of deterministic to scattered power).
    Rician { k_factor_db: f64 },
}

impl ChannelSpec {
    /// Paper default for rural environments: 6 dB Rician factor.
    pub fn rician_default() -> Self {
        ChannelSpec::Rician { k_factor_db: 6.0 }
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelSpec::Awgn => write!(f, "awgn"),
            ChannelSpec::Rayleigh => write!(f, "rayleigh"),
            ChannelSpec::Rician { .. } => write!(f, "rician"),
        }
    }
}

impl FromStr for ChannelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "awgn" => Ok(ChannelSpec::Awgn),
            "rayleigh" => Ok(ChannelSpec::Rayleigh),
            "rician" => Ok(ChannelSpec::rician_default()),
            other => Err(Error::Config(format!(
                "unknown channel '{other}' (expected awgn, rayleigh, or rician)"
            ))),
        }
    }
}

/// The drawn gain plus the noise level and transmit amplitude applied to one
/// frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    /// Complex block-fading gain, constant over the frame.
    pub h: Complex64,
    /// Per-sample complex noise variance `sigma^2`.
    pub noise_variance: f64,
    /// Transmit amplitude `sqrt(P)`; unit by default.
    pub amplitude: f64,
}

impl ChannelRealization {
    pub fn noiseless() -> Self {
        Self { h: Complex64::new(1.0, 0.0), noise_variance: 0.0, amplitude: 1.0 }
    }
}

/// One `CN(0, variance)` draw: independent real/imag parts of variance
/// `variance/2` each.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(scale * re, scale * im)
}

/// Draw one block-fading gain. AWGN returns exactly 1; Rayleigh is
/// `CN(0,1)`; Rician splits unit power into a real deterministic part of
/// power `kappa/(kappa+1)` and scatter of power `1/(kappa+1)`.
pub fn draw_channel<R: Rng + ?Sized>(spec: &ChannelSpec, rng: &mut R) -> Complex64 {
    match spec {
        ChannelSpec::Awgn => Complex64::new(1.0, 0.0),
        ChannelSpec::Rayleigh => complex_gaussian(rng, 1.0),
        ChannelSpec::Rician { k_factor_db } => {
            let kappa = 10f64.powf(k_factor_db / 10.0);
            let los = (kappa / (kappa + 1.0)).sqrt();
            los + complex_gaussian(rng, 1.0 / (kappa + 1.0))
        }
    }
}

/// Map an SNR in dB to the per-sample noise variance under unit signal
/// power: `sigma^2 = 10^(-snr_db/10)`.
pub fn snr_to_noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// `out[n] = amplitude * h * in[n] + w[n]` with `w ~ CN(0, sigma^2)` i.i.d.
pub fn apply_channel<R: Rng + ?Sized>(
    signal: &ComplexSignal,
    realization: &ChannelRealization,
    rng: &mut R,
) -> ComplexSignal {
    let gain = realization.amplitude * realization.h;
    let samples = if realization.noise_variance > 0.0 {
        let scale = (realization.noise_variance / 2.0).sqrt();
        signal
            .samples
            .iter()
            .map(|x| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                gain * x + Complex64::new(scale * re, scale * im)
            })
            .collect()
    } else {
        signal.samples.iter().map(|x| gain * x).collect()
    };
    ComplexSignal { samples, start_index: signal.start_index }
}
