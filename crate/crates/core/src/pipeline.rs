//! End-to-end simulation: transmitter, channel, detector, receiver DSP,
//! parameter estimation and key rate.

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams, DetectorParams};
use crate::constellation::{Constellation, SymbolStream};
use crate::estimation::{self, EstimatedParams, EstimationError};
use crate::keyrate::{self, KeyRateReport, LinkParams};
use crate::rxdsp::{self, RecoveredSymbols, RxConfig};
use crate::txdsp::{self, TxConfig};
use crate::waveform::Waveform;
use crate::{Error, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstellationParams {
    pub order: usize,
    pub nu: f64,
    pub v_mod: f64,
}

impl Default for ConstellationParams {
    fn default() -> Self {
        Self { order: 64, nu: 0.129, v_mod: 1.03 }
    }
}

impl ConstellationParams {
    pub fn build<T: Real>(&self) -> Result<Constellation<T>, Error> {
        Ok(Constellation::build(self.order, T::c(self.nu), T::c(self.v_mod))?)
    }
}

/// Post-processing settings shared by the simulation and the analytic verbs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisParams {
    /// Reconciliation efficiency.
    pub beta: f64,
    /// Confidence width of the parameter-estimation intervals, in standard deviations.
    pub z_pe: f64,
    /// Failure probability matching `z_pe` (reported, not used numerically).
    pub eps_pe: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self { beta: 0.95, z_pe: 6.5, eps_pe: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub constellation: ConstellationParams,
    /// Transmitted symbols per block.
    pub block_n: usize,
    /// Length of each calibration trace in ADC samples.
    pub calibration_samples: usize,
    pub seed: u64,
    pub tx: TxConfig,
    pub channel: ChannelParams,
    pub detector: DetectorParams,
    pub rx: RxConfig,
    pub analysis: AnalysisParams,
}

impl Default for SimulationConfig {
    /// Desk-scale version of the 5 km, 64-QAM operating point.
    fn default() -> Self {
        let tx = TxConfig { symbol_rate: 8e9, ..TxConfig::default() };
        let rx = RxConfig { symbol_rate: 8e9, pilot_freq_nominal: tx.pilot_freq, ..RxConfig::default() };
        Self {
            constellation: ConstellationParams::default(),
            block_n: 1_000_000,
            calibration_samples: 1 << 20,
            seed: 1,
            tx,
            channel: ChannelParams::default(),
            detector: DetectorParams::default(),
            rx,
            analysis: AnalysisParams::default(),
        }
    }
}

impl SimulationConfig {
    /// Checks each section and their mutual consistency.
    pub fn validate(&self) -> Result<(), Error> {
        self.constellation.build::<f64>()?;
        self.tx.validate()?;
        self.channel.validate()?;
        self.detector.validate()?;
        self.rx.validate()?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
        if !close(self.tx.symbol_rate, self.rx.symbol_rate) {
            return Err(Error::Config(format!(
                "tx.symbol_rate {} differs from rx.symbol_rate {}",
                self.tx.symbol_rate, self.rx.symbol_rate
            )));
        }
        if !close(self.detector.adc_rate, self.rx.adc_rate) {
            return Err(Error::Config(format!(
                "detector.adc_rate {} differs from rx.adc_rate {}",
                self.detector.adc_rate, self.rx.adc_rate
            )));
        }
        if self.block_n <= 2 * self.rx.trim_symbols + self.rx.sync_symbols.min(self.block_n) / 2 {
            return Err(Error::Config(format!("block_n {} too small", self.block_n)));
        }
        if self.calibration_samples < channel::MIN_CALIBRATION_SAMPLES {
            return Err(Error::Config(format!("calibration_samples must be at least {}", channel::MIN_CALIBRATION_SAMPLES)));
        }
        let a = &self.analysis;
        if !(a.beta > 0.0 && a.beta <= 1.0) {
            return Err(Error::Config(format!("analysis.beta {} outside (0, 1]", a.beta)));
        }
        if !(a.z_pe.is_finite() && a.z_pe >= 0.0) {
            return Err(Error::Config(format!("analysis.z_pe {} must be finite and non-negative", a.z_pe)));
        }
        if !(a.eps_pe > 0.0 && a.eps_pe < 1.0) {
            return Err(Error::Config(format!("analysis.eps_pe {} outside (0, 1)", a.eps_pe)));
        }
        Ok(())
    }
}

/// Stage seeds derived from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub symbols: u64,
    pub channel: u64,
    pub detector: u64,
    pub calibration: u64,
}

impl StageSeeds {
    pub fn derive(master: u64) -> Self {
        let mut state = master;
        let mut next = || {
            // splitmix64
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        Self { symbols: next(), channel: next(), detector: next(), calibration: next() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub seeds: StageSeeds,
    pub transmittance_truth: f64,
    pub tx_samples: usize,
    pub rx_samples: usize,
    pub full_scale: f64,
    pub clip_fraction: f64,
    pub snu_scale: f64,
    pub v_el_measured: f64,
    pub pilot_peak_db: f64,
    pub pilot_freq_estimate: f64,
    pub sync_position: f64,
    pub sync_psr_db: f64,
    pub residual_rotation: f64,
    /// Worst-case bounds could not be formed (e.g. `T_low ≤ 0`).
    pub finite_size_failure: Option<String>,
}

pub struct SimulationOutcome<T> {
    pub recovered: RecoveredSymbols<T>,
    pub estimate: EstimatedParams<T>,
    pub report: KeyRateReport<T>,
    pub diagnostics: Diagnostics,
}

/// Runs the full chain for one block.
pub fn run_simulation<T: Real>(cfg: &SimulationConfig) -> Result<SimulationOutcome<T>, Error> {
    run_simulation_observed(cfg, &mut |_| Ok(()))
}

/// As [`run_simulation`], handing the transmitted, received and detected
/// waveforms to `observe` as they are produced.
pub fn run_simulation_observed<T: Real>(
    cfg: &SimulationConfig,
    observe: &mut dyn FnMut(&Waveform<T>) -> Result<(), Error>,
) -> Result<SimulationOutcome<T>, Error> {
    cfg.validate()?;
    let seeds = StageSeeds::derive(cfg.seed);
    let constellation = cfg.constellation.build::<T>()?;
    let stream = constellation.sample(cfg.block_n, cfg.tx.symbol_rate, seeds.symbols)?;

    let tx = txdsp::transmit(&stream, &cfg.tx)?;
    let tx_samples = tx.waveform.len();
    log::info!("tx: {} samples at {:.3e} S/s", tx_samples, tx.waveform.sample_rate);
    observe(&tx.waveform)?;
    let received = channel::propagate(&tx.waveform, &cfg.channel, seeds.channel)?;
    drop(tx);
    observe(&received)?;
    let detection = channel::detect(&received, &cfg.detector, seeds.detector)?;
    drop(received);
    observe(&detection.trace)?;
    log::info!("detected {} samples, clip fraction {:.2e}", detection.trace.len(), detection.clip_fraction);

    // Calibration traces share the signal's ADC range so quantisation noise is calibrated out.
    let cal_det = DetectorParams { full_scale: Some(detection.full_scale), ..cfg.detector.clone() };
    let (vacuum, electronic) = channel::calibration_traces::<T>(&cal_det, cfg.calibration_samples, seeds.calibration)?;

    let rx = rxdsp::recover(&detection.trace, &vacuum, &electronic, &stream, cfg.tx.pilot_freq, &cfg.rx)?;
    let rx_samples = detection.trace.len();
    let (full_scale, clip_fraction) = (detection.full_scale, detection.clip_fraction);
    drop(detection);

    let first = rx.symbols.first_symbol;
    let count = rx.symbols.len();
    let tx_block = SymbolStream {
        symbols: stream.symbols[first..first + count].to_vec(),
        indices: stream.indices[first..first + count].to_vec(),
        symbol_rate: stream.symbol_rate,
        seed: stream.seed,
    };
    let eta = T::c(cfg.detector.efficiency);
    let mut estimate = estimation::estimate_channel(&tx_block, &rx.symbols.symbols, eta, rx.calibration.v_el)?;
    log::info!("T_hat {:.5}, eps_hat {:.5}", estimate.t_hat.to_f64_lossy(), estimate.eps_hat.to_f64_lossy());

    let beta = T::c(cfg.analysis.beta);
    let link = LinkParams::new(estimate.t_hat, estimate.eps_hat, eta, estimate.v_el_hat);
    let report = keyrate::asymptotic_rate(&constellation, &link, beta)?.with_context(
        Some(cfg.tx.symbol_rate),
        Some(cfg.channel.distance_km),
        Some(count as u64),
    );
    let mut finite_size_failure = None;
    let report = match estimation::worst_case(&estimate, T::c(cfg.analysis.z_pe), cfg.analysis.eps_pe) {
        Ok(wc) => {
            let r = keyrate::finite_rate(&report, &wc)?;
            estimate = wc;
            r
        }
        Err(e @ EstimationError::NonPositiveTransmittance { .. }) => {
            log::warn!("finite-size bounds unavailable: {e}");
            finite_size_failure = Some(e.to_string());
            report
        }
        Err(e) => return Err(e.into()),
    };

    let diagnostics = Diagnostics {
        seeds,
        transmittance_truth: cfg.channel.transmittance()?,
        tx_samples,
        rx_samples,
        full_scale,
        clip_fraction,
        snu_scale: rx.calibration.scale.to_f64_lossy(),
        v_el_measured: rx.calibration.v_el.to_f64_lossy(),
        pilot_peak_db: rx.pilot_peak_db,
        pilot_freq_estimate: rx.symbols.pilot_freq_estimate,
        sync_position: rx.sync.position(),
        sync_psr_db: rx.sync.psr_db,
        residual_rotation: rx.symbols.residual_rotation,
        finite_size_failure,
    };
    Ok(SimulationOutcome { recovered: rx.symbols, estimate, report, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_and_reproducible() {
        let a = StageSeeds::derive(7);
        assert_eq!(a, StageSeeds::derive(7));
        assert_ne!(a, StageSeeds::derive(8));
        let all = [a.symbols, a.channel, a.detector, a.calibration];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(all[i], all[j]);
            }
        }
    }

    #[test]
    fn default_config_is_consistent() {
        SimulationConfig::default().validate().unwrap();
    }

    #[test]
    fn mismatched_rates_rejected() {
        let mut cfg = SimulationConfig::default();
        cfg.rx.symbol_rate = 10e9;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
