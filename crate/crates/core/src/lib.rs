//! Simulation and key-rate toolkit for a probabilistically shaped QAM
//! continuous-variable QKD link with pilot-tone carrier recovery.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below fix the scalar.
//!
//! Units: quadratures are in shot-noise units (vacuum variance 1 per
//! quadrature); `V_M = 2 Σ p |α|²`; excess noise is referred to the channel
//! input.

pub mod channel;
pub mod constellation;
pub mod dsp;
pub mod estimation;
pub mod experiments;
pub mod keyrate;
pub mod linalg;
pub mod pipeline;
mod real;
pub mod rxdsp;
pub mod txdsp;
pub mod waveform;

use thiserror::Error;

pub use channel::{ChannelError, ChannelParams, DetectorParams};
pub use constellation::{Constellation, ConstellationError, QamOrder, SymbolStream};
pub use estimation::{EstimatedParams, EstimationError};
pub use keyrate::{KeyRateError, KeyRateReport, LinkParams, TrustedDetector};
pub use real::Real;
pub use rxdsp::{RecoveredSymbols, RxConfig, RxError};
pub use txdsp::{TxConfig, TxError};
pub use waveform::{Origin, Waveform, WaveformError};

pub type Constellation64 = Constellation<f64>;
pub type Constellation32 = Constellation<f32>;
pub type SymbolStream64 = SymbolStream<f64>;
pub type SymbolStream32 = SymbolStream<f32>;
pub type Waveform64 = Waveform<f64>;
pub type Waveform32 = Waveform<f32>;
pub type KeyRateReport64 = KeyRateReport<f64>;
pub type KeyRateReport32 = KeyRateReport<f32>;
pub type EstimatedParams64 = EstimatedParams<f64>;
pub type EstimatedParams32 = EstimatedParams<f32>;
pub type RecoveredSymbols64 = RecoveredSymbols<f64>;
pub type RecoveredSymbols32 = RecoveredSymbols<f32>;
pub type LinkParams64 = LinkParams<f64>;
pub type LinkParams32 = LinkParams<f32>;

/// Pipeline error tagged with the stage that raised it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("constellation: {0}")]
    Constellation(#[from] ConstellationError),
    #[error("transmitter: {0}")]
    Tx(#[from] TxError),
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
    #[error("receiver: {0}")]
    Rx(#[from] RxError),
    #[error("estimation: {0}")]
    Estimation(#[from] EstimationError),
    #[error("key rate: {0}")]
    KeyRate(#[from] KeyRateError),
    #[error("waveform: {0}")]
    Waveform(#[from] WaveformError),
}

impl Error {
    pub fn stage(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Constellation(_) => "constellation",
            Self::Tx(_) => "tx",
            Self::Channel(_) => "channel",
            Self::Rx(_) => "rx",
            Self::Estimation(_) => "estimation",
            Self::KeyRate(_) => "keyrate",
            Self::Waveform(_) => "waveform",
        }
    }
}
