//! Blind estimation of room acoustic parameters (T60, EDT, C80, D50, Ts) and
//! the Speech Transmission Index from reverberant speech.
//!
//! A recording is split into seven octave bands, each band's temporal
//! amplitude envelope is regressed to a reverberation time by a small 1D CNN,
//! and a Schroeder-model impulse response rebuilt from those times yields the
//! remaining parameters. The measurement side (RIR synthesis, MTF, decay
//! analysis, indirect STI) is included for corpus generation and evaluation.

pub mod bands;
pub mod dataset;
pub mod error;
pub mod params;
pub mod pipeline;
pub mod regressor;
pub mod rir;
pub mod rng;
pub mod signal;
pub mod sti;
pub mod tae;

pub use error::{Error, Result};
