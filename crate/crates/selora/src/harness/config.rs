//! Flat `key = value` run configuration.
//!
//! Recognized keys: `sf`, `bandwidth_hz`, `k`, `payload_len`, `channel`
//! (awgn | rayleigh | rician), `rician_k_db`, `detector` (conv | sic |
//! jointml), `snr_db` (comma-separated list), `max_symbols`,
//! `target_errors`, `seed`, `out`. Unknown keys are hard errors. Blank
//! lines and lines starting with `#` are ignored.

use std::path::{Path, PathBuf};

use crate::channel::ChannelSpec;
use crate::detection::JOINT_ML_DEFAULT_CAP;
use crate::error::{Error, Result};
use crate::framing::se_config;
use crate::harness::{DetectorKind, SimJob, StopRule};
use crate::waveform::make_params;

/// Parsed run configuration with the documented defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sf: u32,
    pub bandwidth_hz: f64,
    pub k: usize,
    pub payload_len: usize,
    channel_kind: String,
    pub rician_k_db: f64,
    pub detector: DetectorKind,
    pub snr_db: Vec<f64>,
    pub max_symbols: u64,
    pub target_errors: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sf: 7,
            bandwidth_hz: 125_000.0,
            k: 2,
            payload_len: 57,
            channel_kind: "rician".into(),
            rician_k_db: 6.0,
            detector: DetectorKind::Sic,
            snr_db: Vec::new(),
            max_symbols: StopRule::default().max_symbols,
            target_errors: StopRule::default().target_errors,
            seed: 1,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn channel_spec(&self) -> ChannelSpec {
        match self.channel_kind.as_str() {
            "awgn" => ChannelSpec::Awgn,
            "rayleigh" => ChannelSpec::Rayleigh,
            _ => ChannelSpec::Rician { k_factor_db: self.rician_k_db },
        }
    }

    /// Assemble the simulation job this configuration describes.
    pub fn to_job(&self) -> Result<SimJob> {
        let params = make_params(self.sf, self.bandwidth_hz)?;
        // Template prefix; redrawn per frame by the sweep.
        let cfg = se_config(&params, self.k, self.payload_len, &vec![0; self.k - 1])?;
        Ok(SimJob {
            params,
            cfg,
            channel: self.channel_spec(),
            detector: self.detector,
            snr_grid_db: self.snr_db.clone(),
            stop: StopRule { max_symbols: self.max_symbols, target_errors: self.target_errors },
            master_seed: self.seed,
            joint_ml_cap: JOINT_ML_DEFAULT_CAP,
        })
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

/// Parse configuration text. Later lines override earlier ones; unknown
/// keys and malformed lines are hard errors.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "sf" => cfg.sf = parse_num(key, value)?,
            "bandwidth_hz" => cfg.bandwidth_hz = parse_num(key, value)?,
            "k" => cfg.k = parse_num(key, value)?,
            "payload_len" => cfg.payload_len = parse_num(key, value)?,
            "channel" => {
                value.parse::<ChannelSpec>()?;
                cfg.channel_kind = value.to_string();
            }
            "rician_k_db" => cfg.rician_k_db = parse_num(key, value)?,
            "detector" => cfg.detector = value.parse()?,
            "snr_db" => {
                cfg.snr_db = value
                    .split(',')
                    .map(|v| parse_num("snr_db", v.trim()))
                    .collect::<Result<Vec<f64>>>()?;
            }
            "max_symbols" => cfg.max_symbols = parse_num(key, value)?,
            "target_errors" => cfg.target_errors = parse_num(key, value)?,
            "seed" => cfg.seed = parse_num(key, value)?,
            "out" => cfg.out = Some(PathBuf::from(value)),
            other => {
                return Err(Error::Config(format!("line {}: unknown key '{other}'", lineno + 1)))
            }
        }
    }
    Ok(cfg)
}

pub fn parse_config_file(path: &Path) -> Result<RunConfig> {
    parse_config_str(&std::fs::read_to_string(path)?)
}
