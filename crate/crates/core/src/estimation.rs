//! Shot-noise calibration, channel-parameter estimation and worst-case
//! confidence bounds.
//!
//! Receiver model per quadrature, in shot-noise units:
//! `ζ = t x_A + n` with `x_A = 2 Re α` (variance `V_M`), `t = √(ηT/2)` and
//! `Var(n) = σ² = 1 + v_el + ηTε/2`.

use num_complex::Complex;
use serde::Serialize;
use thiserror::Error;

use crate::constellation::SymbolStream;
use crate::waveform::{quadrature_variance, Origin, Waveform, WaveformError};
use crate::Real;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("vacuum variance {vacuum} does not exceed electronic variance {electronic}")]
    NoShotNoise { vacuum: f64, electronic: f64 },
    #[error("length mismatch: {tx} transmitted vs {rx} recovered symbols")]
    LengthMismatch { tx: usize, rx: usize },
    #[error("block too short: {0} symbols")]
    TooShort(usize),
    #[error("transmitted symbols have zero variance")]
    ZeroModulation,
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("worst-case transmittance is not positive (t_low = {t_low})")]
    NonPositiveTransmittance { t_low: f64 },
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

/// Shot-noise scale from the vacuum and electronic-noise calibration traces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SnuCalibration<T> {
    /// Amplitude divisor mapping raw samples to shot-noise units.
    pub scale: T,
    /// Electronic noise in shot-noise units.
    pub v_el: T,
    pub vacuum_variance: T,
    pub electronic_variance: T,
}

impl<T: Real> SnuCalibration<T> {
    pub fn apply(&self, w: &Waveform<T>) -> Waveform<T> {
        let inv = T::one() / self.scale;
        w.with_samples(w.samples.iter().map(|z| z * inv).collect())
    }
}

/// Calibrates from per-quadrature variances of the two reference traces.
pub fn snu_calibrate<T: Real>(vacuum: &Waveform<T>, electronic: &Waveform<T>) -> Result<SnuCalibration<T>, EstimationError> {
    vacuum.expect_origin(Origin::VacuumCal)?;
    electronic.expect_origin(Origin::ElectronicCal)?;
    let vv = quadrature_variance(&vacuum.samples);
    let ve = quadrature_variance(&electronic.samples);
    if !(vv > ve) {
        return Err(EstimationError::NoShotNoise { vacuum: vv, electronic: ve });
    }
    let shot = vv - ve;
    Ok(SnuCalibration {
        scale: T::c(shot.sqrt()),
        v_el: T::c(ve / shot),
        vacuum_variance: T::c(vv),
        electronic_variance: T::c(ve),
    })
}

/// Point estimates and, once [`worst_case`] has run, their confidence bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatedParams<T> {
    /// Amplitude gain `t̂` per quadrature.
    pub t_gain: T,
    pub t_hat: T,
    /// Excess noise clamped at zero.
    pub eps_hat: T,
    pub eps_hat_raw: T,
    pub v_el_hat: T,
    /// Measured per-quadrature variance of Alice's data.
    pub v_mod_meas: T,
    /// Residual noise variance `σ̂²` per quadrature.
    pub sigma2: T,
    pub efficiency: T,
    pub block_n: u64,
    pub t_low: Option<T>,
    pub eps_up: Option<T>,
    pub eps_up_raw: Option<T>,
    pub z_pe: Option<T>,
    pub eps_pe: Option<f64>,
}

impl<T: Real> EstimatedParams<T> {
    /// Noise-free point estimates implied by a model link, for evaluating
    /// the finite-size penalty without simulating a block.
    #[allow(clippy::too_many_arguments)]
    pub fn from_model(t: T, eps: T, v_el: T, v_mod: T, efficiency: T, block_n: u64, z_pe: T, eps_pe: f64) -> Self {
        let sigma2 = T::one() + v_el + efficiency * t * eps * T::half();
        let mut est = Self::from_point(t, eps, v_el, v_mod, sigma2, efficiency, block_n);
        est.z_pe = Some(z_pe);
        est.eps_pe = Some(eps_pe);
        est
    }

    fn from_point(t: T, eps: T, v_el: T, v_mod: T, sigma2: T, efficiency: T, block_n: u64) -> Self {
        Self {
            t_gain: (efficiency * t * T::half()).sqrt(),
            t_hat: t,
            eps_hat: eps.max(T::zero()),
            eps_hat_raw: eps,
            v_el_hat: v_el,
            v_mod_meas: v_mod,
            sigma2,
            efficiency,
            block_n,
            t_low: None,
            eps_up: None,
            eps_up_raw: None,
            z_pe: None,
            eps_pe: None,
        }
    }

    pub fn has_worst_case(&self) -> bool {
        self.t_low.is_some() && self.eps_up.is_some()
    }
}

fn check_efficiency(eta: f64) -> Result<(), EstimationError> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(EstimationError::InvalidParameter { name: "efficiency", value: eta })
    }
}

/// Estimates `T` and `ε` from paired transmitted and recovered symbols
/// (recovered symbols in shot-noise units, one complex sample per symbol).
pub fn estimate_channel<T: Real>(
    tx: &SymbolStream<T>,
    rx: &[Complex<T>],
    efficiency: T,
    v_el: T,
) -> Result<EstimatedParams<T>, EstimationError> {
    let eta = efficiency.to_f64_lossy();
    check_efficiency(eta)?;
    if tx.len() != rx.len() {
        return Err(EstimationError::LengthMismatch { tx: tx.len(), rx: rx.len() });
    }
    let n = tx.len();
    if n < 2 {
        return Err(EstimationError::TooShort(n));
    }
    let nf = n as f64;
    // Quadrature q: x = 2 Re α / 2 Im α, y = Re ζ / Im ζ.
    let mut gains = [0.0f64; 2];
    let mut var_x = [0.0f64; 2];
    let mut resid = [0.0f64; 2];
    for q in 0..2 {
        let pick = |z: &Complex<T>| if q == 0 { z.re.to_f64_lossy() } else { z.im.to_f64_lossy() };
        let (mut sx, mut sy) = (0.0, 0.0);
        for (a, b) in tx.symbols.iter().zip(rx) {
            sx += 2.0 * pick(a);
            sy += pick(b);
        }
        let (mx, my) = (sx / nf, sy / nf);
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in tx.symbols.iter().zip(rx) {
            let (x, y) = (2.0 * pick(a) - mx, pick(b) - my);
            sxx += x * x;
            sxy += x * y;
            syy += y * y;
        }
        if sxx <= 0.0 {
            return Err(EstimationError::ZeroModulation);
        }
        gains[q] = sxy / sxx;
        var_x[q] = sxx / nf;
        resid[q] = (syy - sxy * sxy / sxx) / nf;
    }
    let t_gain = 0.5 * (gains[0] + gains[1]);
    let sigma2 = 0.5 * (resid[0] + resid[1]);
    let v_mod = 0.5 * (var_x[0] + var_x[1]);
    let t_hat = 2.0 * t_gain * t_gain / eta;
    let v_el_f = v_el.to_f64_lossy();
    let eps_raw = if t_hat > 0.0 { 2.0 * (sigma2 - 1.0 - v_el_f) / (eta * t_hat) } else { f64::INFINITY };
    let mut est = EstimatedParams::from_point(T::c(t_hat), T::c(eps_raw), v_el, T::c(v_mod), T::c(sigma2), efficiency, n as u64);
    est.t_gain = T::c(t_gain);
    Ok(est)
}

/// Confidence-interval bounds at `z_pe` standard deviations:
///
/// ```text
/// t_low  = t̂ − z √(σ̂² / (N V̂_M))        T_low = 2 t_low² / η
/// σ²_up  = σ̂² (1 + z √(2/N))            ε_up  = 2 (σ²_up − 1 − v_el) / (η T̂)
/// ```
///
/// `N` counts symbols; both quadratures share the same gain so the pooled
/// estimate is treated as one sample per symbol.
pub fn worst_case<T: Real>(est: &EstimatedParams<T>, z_pe: T, eps_pe: f64) -> Result<EstimatedParams<T>, EstimationError> {
    let z = z_pe.to_f64_lossy();
    if !(z.is_finite() && z >= 0.0) {
        return Err(EstimationError::InvalidParameter { name: "z_pe", value: z });
    }
    let eta = est.efficiency.to_f64_lossy();
    check_efficiency(eta)?;
    let n = est.block_n as f64;
    if est.block_n < 2 {
        return Err(EstimationError::TooShort(est.block_n as usize));
    }
    let sigma2 = est.sigma2.to_f64_lossy();
    let var_x = est.v_mod_meas.to_f64_lossy();
    if var_x <= 0.0 {
        return Err(EstimationError::ZeroModulation);
    }
    let t_gain = est.t_gain.to_f64_lossy();
    let t_low_gain = t_gain - z * (sigma2 / (n * var_x)).sqrt();
    if t_low_gain <= 0.0 {
        return Err(EstimationError::NonPositiveTransmittance { t_low: t_low_gain });
    }
    let t_low = (2.0 * t_low_gain * t_low_gain / eta).min(est.t_hat.to_f64_lossy());
    let sigma2_up = sigma2 * (1.0 + z * (2.0 / n).sqrt());
    let t_hat = est.t_hat.to_f64_lossy();
    let eps_up_raw = 2.0 * (sigma2_up - 1.0 - est.v_el_hat.to_f64_lossy()) / (eta * t_hat);
    let mut out = est.clone();
    out.t_low = Some(T::c(t_low));
    out.eps_up_raw = Some(T::c(eps_up_raw));
    out.eps_up = Some(T::c(eps_up_raw.max(est.eps_hat.to_f64_lossy())));
    out.z_pe = Some(z_pe);
    out.eps_pe = Some(eps_pe);
    Ok(out)
}
