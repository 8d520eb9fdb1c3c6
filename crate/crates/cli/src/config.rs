use std::path::{Path, PathBuf};

use clap::ValueEnum;
use cvqkd_core::channel::{ChannelParams, DetectorParams};
use cvqkd_core::experiments::{ContourConfig, SweepConfig};
use cvqkd_core::pipeline::{AnalysisParams, ConstellationParams, SimulationConfig};
use cvqkd_core::{LinkParams64, RxConfig, TxConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Keyrate,
    Sweep,
    Contour,
    Table1,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Keyrate => "keyrate",
            Self::Sweep => "sweep",
            Self::Contour => "contour",
            Self::Table1 => "table1",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Base directory for run folders; `--out` takes precedence.
    pub dir: PathBuf,
    /// Also write the tx, channel and rx waveforms of `simulate`.
    pub waveforms: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs"), waveforms: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeyRateConfig {
    /// Overrides the transmittance derived from the `[channel]` section.
    pub transmittance: Option<f64>,
    /// Block size of the finite-size evaluation.
    pub block_n: u64,
    /// Also report the Gaussian-modulation rate at the same link.
    pub gaussian_reference: bool,
}

impl Default for KeyRateConfig {
    fn default() -> Self {
        Self { transmittance: None, block_n: 16_000_000, gaussian_reference: true }
    }
}

/// Complete run description; every section is optional in the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// When present, must match the verb on the command line.
    pub mode: Option<Mode>,
    pub seed: u64,
    pub block_n: usize,
    pub calibration_samples: usize,
    pub precision: Precision,
    pub output: OutputConfig,
    pub constellation: ConstellationParams,
    pub tx: TxConfig,
    pub channel: ChannelParams,
    pub detector: DetectorParams,
    pub rx: RxConfig,
    pub analysis: AnalysisParams,
    pub keyrate: KeyRateConfig,
    pub sweep: SweepConfig,
    pub contour: ContourConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimulationConfig::default();
        Self {
            mode: None,
            seed: sim.seed,
            block_n: sim.block_n,
            calibration_samples: sim.calibration_samples,
            precision: Precision::F64,
            output: OutputConfig::default(),
            constellation: sim.constellation,
            tx: sim.tx,
            channel: sim.channel,
            detector: sim.detector,
            rx: sim.rx,
            analysis: sim.analysis,
            keyrate: KeyRateConfig::default(),
            sweep: SweepConfig::default(),
            contour: ContourConfig::default(),
        }
    }
}

/// A parsed configuration together with the digest of its source text.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: Option<PathBuf>,
    pub source_sha256: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load(path: Option<&Path>) -> Result<LoadedConfig, CliError> {
    let Some(path) = path else {
        return Ok(LoadedConfig { config: RunConfig::default(), source: None, source_sha256: None });
    };
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config = toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(LoadedConfig { config, source: Some(path.to_path_buf()), source_sha256: Some(sha256_hex(&bytes)) })
}

impl RunConfig {
    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            constellation: self.constellation.clone(),
            block_n: self.block_n,
            calibration_samples: self.calibration_samples,
            seed: self.seed,
            tx: self.tx.clone(),
            channel: self.channel.clone(),
            detector: self.detector.clone(),
            rx: self.rx.clone(),
            analysis: self.analysis.clone(),
        }
    }

    /// Link of the `keyrate` verb.
    pub fn link(&self) -> Result<LinkParams64, cvqkd_core::Error> {
        let t = match self.keyrate.transmittance {
            Some(t) => t,
            None => self.channel.transmittance()?,
        };
        let link = LinkParams64::new(t, self.channel.excess_noise, self.detector.efficiency, self.detector.v_el);
        link.validate()?;
        Ok(link)
    }

    /// Validates every section, so a bad file fails before any output exists.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: cvqkd_core::Error| CliError::Config(e.to_string());
        self.simulation().validate().map_err(cfg)?;
        self.link().map_err(cfg)?;
        if self.keyrate.block_n < 2 {
            return Err(CliError::Config("keyrate.block_n must be at least 2".into()));
        }
        self.sweep.distances().map_err(cfg)?;
        if !(self.sweep.symbol_rate > 0.0 && self.sweep.beta > 0.0 && self.sweep.beta <= 1.0) {
            return Err(CliError::Config("sweep.symbol_rate and sweep.beta must be positive, beta at most 1".into()));
        }
        self.contour.validate().map_err(cfg)?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unserialisable config: {e}\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[channel]\nlength = 3").is_err());
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let c: RunConfig = toml::from_str("seed = 9\n[channel]\ndistance_km = 10.0\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.channel.distance_km, 10.0);
        assert_eq!(c.detector, DetectorParams::default());
    }
}
