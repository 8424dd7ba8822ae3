//! # selora
//!
//! Link-level simulation of LoRa chirp-spread-spectrum modulation with
//! spectral-efficient overlapped transmission and successive interference
//! cancellation.
//!
//! Conventional LoRa sends one chirp per symbol period `T`. The overlapped
//! scheme simulated here launches a chirp every `T/k` instead, multiplying
//! throughput by up to `k` at the cost of inter-chirp interference inside
//! each receiving window. The crate provides:
//!
//! - [`waveform`]: chirp synthesis, dechirping, and the unitary DFT.
//! - [`framing`]: overlapped frame construction, window extraction, and
//!   spectral-efficiency figures.
//! - [`channel`]: AWGN / Rayleigh / Rician block fading.
//! - [`detection`]: conventional, joint-ML, and SIC receivers, plus the
//!   closed-form dechirped-spectrum oracle.
//! - [`harness`]: a reproducible Monte Carlo SER engine with CSV output,
//!   driven by the `selora` CLI.

pub mod channel;
pub mod detection;
pub mod error;
pub mod framing;
pub mod harness;
pub mod waveform;

pub use error::{Error, Result};
