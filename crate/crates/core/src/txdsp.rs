//! Transmitter chain: root-raised-cosine shaping at the DAC rate,
//! pre-emphasis against the transmitter response, and pilot-tone insertion.
//!
//! Samples are field amplitudes with `|w|²` photons per sample, so a
//! unit-energy pulse carries the symbol amplitude `α` unchanged through a
//! matched filter.

use std::f64::consts::PI;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constellation::SymbolStream;
use crate::dsp::{apply_frequency_response, rational_approx};
use crate::waveform::{Origin, Waveform, WaveformError};
use crate::Real;

#[derive(Debug, Error)]
pub enum TxError {
    #[error("roll-off must lie in [0, 1], got {0}")]
    InvalidRolloff(f64),
    #[error("filter span must be a positive even number of symbols, got {0}")]
    InvalidSpan(usize),
    #[error("samples per symbol {0} is not above 1 + roll-off")]
    Undersampled(f64),
    #[error("rate ratio {0} is not a small rational number")]
    IrrationalRatio(f64),
    #[error("pilot at {freq} Hz overlaps the signal band (edge {edge} Hz)")]
    PilotInBand { freq: f64, edge: f64 },
    #[error("pilot at {freq} Hz is beyond Nyquist for {rate} S/s")]
    PilotAboveNyquist { freq: f64, rate: f64 },
    #[error("response vanishes in band and no regularisation floor was given")]
    ResponseZero,
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("empty symbol stream")]
    Empty,
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

/// Transmitter hardware response model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TxResponse {
    Flat,
    /// Gaussian magnitude, zero phase, −3 dB at `f3db`.
    Gaussian { f3db: f64 },
    /// Second-order Butterworth low-pass, −3 dB at `f3db`.
    Butterworth2 { f3db: f64 },
}

impl TxResponse {
    pub fn at(&self, f: f64) -> Complex<f64> {
        match *self {
            Self::Flat => Complex::new(1.0, 0.0),
            Self::Gaussian { f3db } => Complex::new((-(f / f3db).powi(2) * std::f64::consts::LN_2 / 2.0).exp(), 0.0),
            Self::Butterworth2 { f3db } => {
                let s = Complex::new(0.0, f / f3db);
                Complex::new(1.0, 0.0) / (s * s + s * std::f64::consts::SQRT_2 + 1.0)
            }
        }
    }

    pub fn validate(&self) -> Result<(), TxError> {
        match *self {
            Self::Flat => Ok(()),
            Self::Gaussian { f3db } | Self::Butterworth2 { f3db } if f3db > 0.0 && f3db.is_finite() => Ok(()),
            Self::Gaussian { f3db } | Self::Butterworth2 { f3db } => Err(TxError::InvalidParameter { name: "f3db", value: f3db }),
        }
    }

    /// Filters a waveform through the response (whole-block FFT).
    pub fn apply<T: Real>(&self, w: &Waveform<T>) -> Waveform<T> {
        match self {
            Self::Flat => w.clone(),
            _ => w.with_samples(apply_frequency_response(&w.samples, w.sample_rate, |f| self.at(f))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TxConfig {
    pub symbol_rate: f64,
    pub dac_rate: f64,
    pub rolloff: f64,
    /// Pulse length in symbols (even).
    pub span: usize,
    pub pilot_freq: f64,
    /// Pilot amplitude relative to the RMS signal amplitude.
    pub pilot_amp_ratio: f64,
    pub response: TxResponse,
    /// Regularisation floor `ε_r` of the pre-emphasis inverse.
    pub pre_emphasis_floor: f64,
    pub pre_emphasis: bool,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            symbol_rate: 10e9,
            dac_rate: 32e9,
            rolloff: 0.2,
            span: 32,
            pilot_freq: 8e9,
            pilot_amp_ratio: 10.0,
            response: TxResponse::Gaussian { f3db: 8e9 },
            pre_emphasis_floor: 0.1,
            pre_emphasis: true,
        }
    }
}

impl TxConfig {
    pub fn samples_per_symbol(&self) -> f64 {
        self.dac_rate / self.symbol_rate
    }

    /// One-sided edge of the occupied signal band.
    pub fn signal_edge(&self) -> f64 {
        0.5 * self.symbol_rate * (1.0 + self.rolloff)
    }

    pub fn validate(&self) -> Result<(), TxError> {
        for (name, v) in [("symbol_rate", self.symbol_rate), ("dac_rate", self.dac_rate), ("pilot_amp_ratio", self.pilot_amp_ratio)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(TxError::InvalidParameter { name, value: v });
            }
        }
        check_shape(self.rolloff, self.span, self.samples_per_symbol())?;
        if rational_approx(self.samples_per_symbol(), 1000).is_none() {
            return Err(TxError::IrrationalRatio(self.samples_per_symbol()));
        }
        check_pilot(self.pilot_freq, self.dac_rate, self.signal_edge())?;
        self.response.validate()?;
        if !(self.pre_emphasis_floor >= 0.0) {
            return Err(TxError::InvalidParameter { name: "pre_emphasis_floor", value: self.pre_emphasis_floor });
        }
        Ok(())
    }
}

fn check_shape(rolloff: f64, span: usize, sps: f64) -> Result<(), TxError> {
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(TxError::InvalidRolloff(rolloff));
    }
    if span == 0 || span % 2 != 0 {
        return Err(TxError::InvalidSpan(span));
    }
    if !(sps > 1.0 + rolloff) {
        return Err(TxError::Undersampled(sps));
    }
    Ok(())
}

fn check_pilot(freq: f64, rate: f64, edge: f64) -> Result<(), TxError> {
    if freq.abs() >= rate / 2.0 {
        return Err(TxError::PilotAboveNyquist { freq, rate });
    }
    if freq.abs() <= edge {
        return Err(TxError::PilotInBand { freq, edge });
    }
    Ok(())
}

/// Unit-energy root-raised-cosine pulse at `t` symbol periods
/// (`∫ g² dt = 1` in symbol units).
pub fn rrc_pulse(t: f64, beta: f64) -> f64 {
    let pi = PI;
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / pi;
    }
    if beta > 0.0 && (t.abs() - 1.0 / (4.0 * beta)).abs() < 1e-10 {
        let s = (pi / (4.0 * beta)).sin();
        let c = (pi / (4.0 * beta)).cos();
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / pi) * s + (1.0 - 2.0 / pi) * c);
    }
    let num = (pi * t * (1.0 - beta)).sin() + 4.0 * beta * t * (pi * t * (1.0 + beta)).cos();
    let den = pi * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Taps of the RRC sampled at `sps` samples per symbol over `span` symbols,
/// centred, normalised to unit energy (`Σ h² = 1`).
pub fn rrc_taps<T: Real>(rolloff: f64, span: usize, sps: f64) -> Result<Vec<T>, TxError> {
    check_shape(rolloff, span, sps)?;
    let half = (span as f64 * sps / 2.0).floor() as i64;
    let raw: Vec<f64> = (-half..=half).map(|k| rrc_pulse(k as f64 / sps, rolloff)).collect();
    let e = raw.iter().map(|h| h * h).sum::<f64>().sqrt();
    Ok(raw.iter().map(|h| T::c(h / e)).collect())
}

/// Energy of the pulse truncated to `±span/2` symbols.
fn truncated_energy(beta: f64, span: usize) -> f64 {
    let per = 256usize;
    let n = span * per / 2;
    (-(n as i64)..=n as i64).map(|k| rrc_pulse(k as f64 / per as f64, beta).powi(2)).sum::<f64>() / per as f64
}

/// Polyphase RRC pulse shaper from the symbol rate to `rate`.
///
/// Output sample `m` sits at time `m / sps − span/2` symbol periods, so
/// symbol `n` peaks at sample `(n + span/2) · sps`.
#[derive(Clone, Debug)]
pub struct RrcShaper {
    pub up: usize,
    pub down: usize,
    pub span: usize,
    bank: Vec<Vec<f64>>,
}

impl RrcShaper {
    pub fn new(rolloff: f64, span: usize, symbol_rate: f64, rate: f64) -> Result<Self, TxError> {
        let sps = rate / symbol_rate;
        check_shape(rolloff, span, sps)?;
        let (up, down) = rational_approx(sps, 1000).ok_or(TxError::IrrationalRatio(sps))?;
        let (up, down) = (up as usize, down as usize);
        let amp = 1.0 / (sps * truncated_energy(rolloff, span)).sqrt();
        let d = span as f64 / 2.0;
        let bank = (0..up)
            .map(|r| {
                (0..=span)
                    .map(|k| {
                        let t = k as f64 + r as f64 / up as f64 - d;
                        if t.abs() <= d { rrc_pulse(t, rolloff) * amp } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { up, down, span, bank })
    }

    pub fn samples_per_symbol(&self) -> f64 {
        self.up as f64 / self.down as f64
    }

    pub fn output_len(&self, n_symbols: usize) -> usize {
        ((n_symbols - 1 + self.span) * self.up).div_ceil(self.down) + 1
    }

    pub fn shape<T: Real>(&self, symbols: &[Complex<T>]) -> Vec<Complex<T>> {
        let bank: Vec<Vec<T>> = self.bank.iter().map(|b| b.iter().map(|&x| T::c(x)).collect()).collect();
        let n_sym = symbols.len() as i64;
        (0..self.output_len(symbols.len()))
            .map(|m| {
                let u = m * self.down;
                let (base, r) = ((u / self.up) as i64, u % self.up);
                let taps = &bank[r];
                let mut acc = Complex::new(T::zero(), T::zero());
                for (k, &h) in taps.iter().enumerate() {
                    let n = base - k as i64;
                    if n >= 0 && n < n_sym {
                        acc = acc + symbols[n as usize] * h;
                    }
                }
                acc
            })
            .collect()
    }
}

/// Shapes symbols with an RRC pulse at the DAC rate.
pub fn upsample_shape<T: Real>(symbols: &SymbolStream<T>, cfg: &TxConfig) -> Result<Waveform<T>, TxError> {
    if symbols.is_empty() {
        return Err(TxError::Empty);
    }
    let shaper = RrcShaper::new(cfg.rolloff, cfg.span, cfg.symbol_rate, cfg.dac_rate)?;
    Ok(Waveform::new(shaper.shape(&symbols.symbols), cfg.dac_rate, Origin::Tx)?)
}

/// Multiplies by the regularised inverse `e^{-j∠H} / max(|H|, ε_r)`.
pub fn pre_emphasis<T: Real>(w: &Waveform<T>, response: &TxResponse, floor: f64) -> Result<Waveform<T>, TxError> {
    if let TxResponse::Flat = response {
        return Ok(w.clone());
    }
    response.validate()?;
    let n = w.len();
    if floor <= 0.0 && (0..n).any(|k| response.at(crate::dsp::bin_frequency(k, n, w.sample_rate)).norm() == 0.0) {
        return Err(TxError::ResponseZero);
    }
    let inv = |f: f64| {
        let h = response.at(f);
        let m = h.norm();
        if m == 0.0 {
            Complex::new(1.0 / floor, 0.0)
        } else {
            h.conj() / (m * m.max(floor))
        }
    };
    Ok(w.with_samples(apply_frequency_response(&w.samples, w.sample_rate, inv)))
}

/// Adds `amp · e^{j2πft}` to every sample.
pub fn add_pilot<T: Real>(w: &Waveform<T>, freq: f64, amp: f64, signal_edge: f64) -> Result<Waveform<T>, TxError> {
    check_pilot(freq, w.sample_rate, signal_edge)?;
    if !(amp.is_finite() && amp >= 0.0) {
        return Err(TxError::InvalidParameter { name: "pilot amplitude", value: amp });
    }
    let step = freq / w.sample_rate;
    let samples = w
        .samples
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let ph = 2.0 * PI * (step * i as f64).fract();
            z + Complex::new(T::c(amp * ph.cos()), T::c(amp * ph.sin()))
        })
        .collect();
    Ok(w.with_samples(samples))
}

/// Output of the full transmitter chain.
#[derive(Clone, Debug)]
pub struct TxOutput<T> {
    pub waveform: Waveform<T>,
    /// RMS amplitude of the shaped signal before the pilot was added.
    pub signal_rms: f64,
    pub pilot_amplitude: f64,
}

/// Shaping, pre-emphasis, pilot insertion and the hardware response.
pub fn transmit<T: Real>(symbols: &SymbolStream<T>, cfg: &TxConfig) -> Result<TxOutput<T>, TxError> {
    cfg.validate()?;
    let shaped = upsample_shape(symbols, cfg)?;
    let signal_rms = shaped.mean_power().to_f64_lossy().sqrt();
    let emph = if cfg.pre_emphasis { pre_emphasis(&shaped, &cfg.response, cfg.pre_emphasis_floor)? } else { shaped };
    let pilot_amplitude = cfg.pilot_amp_ratio * signal_rms;
    let with_pilot = add_pilot(&emph, cfg.pilot_freq, pilot_amplitude, cfg.signal_edge())?;
    Ok(TxOutput { waveform: cfg.response.apply(&with_pilot), signal_rms, pilot_amplitude })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use crate::constellation::Constellation;

    #[test]
    fn rrc_taps_unit_energy_and_symmetric() {
        for (beta, sps) in [(0.2, 4.0), (0.5, 3.2), (0.0, 8.0), (1.0, 10.0)] {
            let h = rrc_taps::<f64>(beta, 16, sps).unwrap();
            assert_abs_diff_eq!(h.iter().map(|x| x * x).sum::<f64>(), 1.0, epsilon = 1e-9);
            for i in 0..h.len() {
                assert_abs_diff_eq!(h[i], h[h.len() - 1 - i], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn rrc_rejects_bad_rolloff() {
        assert!(matches!(rrc_taps::<f64>(1.5, 16, 4.0), Err(TxError::InvalidRolloff(_))));
        assert!(matches!(rrc_taps::<f64>(-0.1, 16, 4.0), Err(TxError::InvalidRolloff(_))));
    }

    #[test]
    fn rrc_singular_points_are_continuous() {
        let beta = 0.25;
        let t0 = 1.0 / (4.0 * beta);
        assert_abs_diff_eq!(rrc_pulse(t0, beta), rrc_pulse(t0 + 1e-7, beta), epsilon = 1e-5);
        assert_abs_diff_eq!(rrc_pulse(0.0, beta), rrc_pulse(1e-7, beta), epsilon = 1e-5);
    }

    #[test]
    fn raised_cosine_is_nyquist() {
        // RRC ∗ RRC sampled at symbol spacing: 1 at zero, 0 elsewhere.
        let sps = 8.0;
        let h = rrc_taps::<f64>(0.2, 32, sps).unwrap();
        let c = h.len() / 2;
        for k in -4i64..=4 {
            let shift = (k * 8) as isize;
            let s: f64 = (0..h.len())
                .filter_map(|i| {
                    let j = i as isize + shift;
                    (j >= 0 && (j as usize) < h.len()).then(|| h[i] * h[j as usize])
                })
                .sum();
            let want = if k == 0 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(s, want, epsilon = 2e-3);
        }
        assert_eq!(c * 2 + 1, h.len());
    }

    #[test]
    fn polyphase_matches_direct_at_integer_rate() {
        let c = Constellation::<f64>::build(16, 0.2, 1.0).unwrap();
        let s = c.sample(50, 1e9, 9).unwrap();
        let shaper = RrcShaper::new(0.2, 8, 1e9, 4e9).unwrap();
        let y = shaper.shape(&s.symbols);
        let taps = rrc_taps::<f64>(0.2, 8, 4.0).unwrap();
        // y[m] = Σ_n a_n h[m − 4n]
        for m in [0usize, 17, 40, 100] {
            let mut want = Complex::new(0.0, 0.0);
            for (n, a) in s.symbols.iter().enumerate() {
                let k = m as i64 - 4 * n as i64;
                if k >= 0 && (k as usize) < taps.len() {
                    want += a * taps[k as usize];
                }
            }
            // Both are unit energy up to the truncation normalisation.
            assert_abs_diff_eq!((y[m] - want).norm(), 0.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn pilot_must_leave_signal_band() {
        let w = Waveform::new(vec![Complex::new(0.0f64, 0.0); 16], 32e9, Origin::Tx).unwrap();
        assert!(matches!(add_pilot(&w, 5e9, 1.0, 6e9), Err(TxError::PilotInBand { .. })));
        assert!(matches!(add_pilot(&w, 17e9, 1.0, 6e9), Err(TxError::PilotAboveNyquist { .. })));
        let p = add_pilot(&w, 8e9, 2.0, 6e9).unwrap();
        assert!(p.samples.iter().all(|z| (z.norm() - 2.0).abs() < 1e-12));
    }

    #[test]
    fn flat_pre_emphasis_is_identity() {
        let w = Waveform::new((0..64).map(|i| Complex::new(i as f64, -(i as f64))).collect(), 1.0, Origin::Tx).unwrap();
        assert_eq!(pre_emphasis(&w, &TxResponse::Flat, 0.0).unwrap(), w);
    }

    #[test]
    fn pre_emphasis_inverts_response_in_band() {
        let resp = TxResponse::Gaussian { f3db: 8e9 };
        let f = 3e9;
        let x: Vec<Complex<f64>> = (0..3200).map(|i| Complex::from_polar(1.0, 2.0 * PI * f * i as f64 / 32e9)).collect();
        let w = Waveform::new(x.clone(), 32e9, Origin::Tx).unwrap();
        let out = resp.apply(&pre_emphasis(&w, &resp, 0.1).unwrap());
        for (a, b) in out.samples.iter().zip(&x) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn shaped_power_matches_symbol_energy() {
        let c = Constellation::<f64>::build(64, 0.129, 1.0).unwrap();
        let s = c.sample(200_000, 10e9, 5).unwrap();
        let cfg = TxConfig::default();
        let w = upsample_shape(&s, &cfg).unwrap();
        let expect = 0.5 / cfg.samples_per_symbol();
        assert_abs_diff_eq!(w.mean_power() / expect, 1.0, epsilon = 0.01);
    }

    proptest! {
        #[test]
        fn response_magnitude_bounded(f in -2e10f64..2e10, f3 in 1e9f64..2e10) {
            for r in [TxResponse::Gaussian { f3db: f3 }, TxResponse::Butterworth2 { f3db: f3 }] {
                prop_assert!(r.at(f).norm() <= 1.0 + 1e-12);
                prop_assert!((r.at(f3).norm() - 0.5f64.sqrt()).abs() < 1e-9);
            }
        }
    }
}
