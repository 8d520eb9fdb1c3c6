//! Fiber channel and trusted heterodyne receiver.
//!
//! Field samples carry `|w|²` photons per sample. The detector maps them to
//! quadrature samples in shot-noise units: `r = √(2η) w + n_shot + n_el`
//! with unit shot-noise variance per quadrature per sample, so a matched
//! filter on the output yields `√(2ηT) α` plus unit-variance noise.

use std::f64::consts::PI;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::RationalResampler;
use crate::waveform::{Origin, Waveform, WaveformError};
use crate::Real;

/// Noise streams drawn from one seed.
const STREAM_EXCESS: u64 = 1;
const STREAM_PHASE: u64 = 2;
const STREAM_SHOT: u64 = 3;
const STREAM_ELECTRONIC: u64 = 4;

/// Below this many samples the calibration variances are too noisy.
pub const MIN_CALIBRATION_SAMPLES: usize = 10_000;
/// Clipping fraction above which the ADC full scale is considered wrong.
pub const MAX_CLIP_FRACTION: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("ADC clipped {fraction:.3e} of samples (full scale {full_scale})")]
    Clipping { fraction: f64, full_scale: f64 },
    #[error("calibration trace of {0} samples is shorter than {MIN_CALIBRATION_SAMPLES}")]
    CalibrationTooShort(usize),
    #[error("no rational resampling ratio from {from} to {to} S/s")]
    Resampling { from: f64, to: f64 },
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

fn positive(name: &'static str, v: f64) -> Result<(), ChannelError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ChannelError::InvalidParameter { name, value: v })
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<(), ChannelError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ChannelError::InvalidParameter { name, value: v })
    }
}

/// `T = η_D · 10^(−loss·d/10)`.
pub fn fiber_transmittance(distance_km: f64, loss_db_per_km: f64, coupling: f64) -> Result<f64, ChannelError> {
    non_negative("distance_km", distance_km)?;
    non_negative("loss_db_per_km", loss_db_per_km)?;
    if !(0.0..=1.0).contains(&coupling) {
        return Err(ChannelError::InvalidParameter { name: "coupling_eff", value: coupling });
    }
    Ok(coupling * 10f64.powf(-loss_db_per_km * distance_km / 10.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub distance_km: f64,
    pub loss_db_per_km: f64,
    pub coupling_eff: f64,
    /// Excess noise at the channel input, SNU.
    pub excess_noise: f64,
    /// Carrier offset between signal laser and LO, Hz.
    pub freq_offset: f64,
    /// Linewidth of each laser, Hz.
    pub linewidth: f64,
    /// Propagation delay in transmitter samples.
    pub delay_samples: usize,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            distance_km: 5.0,
            loss_db_per_km: 0.2,
            coupling_eff: 0.923,
            excess_noise: 0.0159,
            freq_offset: 200e6,
            linewidth: 100.0,
            delay_samples: 1000,
        }
    }
}

impl ChannelParams {
    pub fn transmittance(&self) -> Result<f64, ChannelError> {
        fiber_transmittance(self.distance_km, self.loss_db_per_km, self.coupling_eff)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        self.transmittance()?;
        non_negative("excess_noise", self.excess_noise)?;
        non_negative("linewidth", self.linewidth)?;
        if !self.freq_offset.is_finite() {
            return Err(ChannelError::InvalidParameter { name: "freq_offset", value: self.freq_offset });
        }
        Ok(())
    }
}

/// Lossy, noisy, phase-rotating channel acting on a transmitter waveform.
///
/// The excess noise is white at the transmitter rate with per-quadrature
/// field variance `Tε/4` per sample, which a unit-energy matched filter
/// turns into `Tε` on the quadrature `2 Re w` (i.e. `ε` at the input).
pub fn propagate<T: Real>(w: &Waveform<T>, ch: &ChannelParams, seed: u64) -> Result<Waveform<T>, ChannelError> {
    w.expect_origin(Origin::Tx)?;
    ch.validate()?;
    let t = ch.transmittance()?;
    let gain = T::c(t.sqrt());
    let zero = Complex::new(T::zero(), T::zero());
    let mut out = Vec::with_capacity(w.len() + ch.delay_samples);
    out.resize(ch.delay_samples, zero);
    out.extend(w.samples.iter().map(|z| z * gain));

    if ch.excess_noise > 0.0 {
        let sd = (t * ch.excess_noise / 4.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_EXCESS);
        for z in out.iter_mut() {
            let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            *z = *z + Complex::new(T::c(sd * a), T::c(sd * b));
        }
    }

    if ch.freq_offset != 0.0 || ch.linewidth > 0.0 {
        let dt = 1.0 / w.sample_rate;
        let step = ch.freq_offset * dt;
        let diff_sd = (2.0 * PI * 2.0 * ch.linewidth * dt).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_PHASE);
        let mut phi = 0.0f64;
        for (i, z) in out.iter_mut().enumerate() {
            let theta = 2.0 * PI * (step * i as f64).fract() + phi;
            *z = *z * Complex::new(T::c(theta.cos()), T::c(theta.sin()));
            if diff_sd > 0.0 {
                let n: f64 = StandardNormal.sample(&mut rng);
                phi += diff_sd * n;
            }
        }
    }
    Ok(Waveform::new(out, w.sample_rate, Origin::Channel)?)
}

/// Wiener phase process used by [`propagate`] for the given seed, sampled
/// at the channel output indices.
pub fn phase_noise_process(ch: &ChannelParams, sample_rate: f64, len: usize, seed: u64) -> Vec<f64> {
    let diff_sd = (2.0 * PI * 2.0 * ch.linewidth / sample_rate).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_PHASE);
    let mut phi = 0.0f64;
    (0..len)
        .map(|_| {
            let cur = phi;
            if diff_sd > 0.0 {
                let n: f64 = StandardNormal.sample(&mut rng);
                phi += diff_sd * n;
            }
            cur
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorParams {
    pub efficiency: f64,
    /// Electronic noise per quadrature, SNU at `lo_power = 1`.
    pub v_el: f64,
    pub adc_rate: f64,
    /// ADC resolution; 0 disables quantisation.
    pub adc_bits: u32,
    /// −3 dB frequency of the first-order receiver roll-off; `None` is flat.
    pub rx_bandwidth: Option<f64>,
    /// Relative LO power; scales shot noise and signal, not electronic noise.
    pub lo_power: f64,
    /// Fixed ADC full scale (raw units). `None` sets it from the trace.
    pub full_scale: Option<f64>,
    /// Full scale as a multiple of the trace RMS when not fixed.
    pub full_scale_rms: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            efficiency: 0.44,
            v_el: 0.0503,
            adc_rate: 80e9,
            adc_bits: 8,
            rx_bandwidth: Some(20e9),
            lo_power: 1.0,
            full_scale: None,
            full_scale_rms: 6.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(ChannelError::InvalidParameter { name: "efficiency", value: self.efficiency });
        }
        non_negative("v_el", self.v_el)?;
        positive("adc_rate", self.adc_rate)?;
        positive("lo_power", self.lo_power)?;
        positive("full_scale_rms", self.full_scale_rms)?;
        if let Some(f) = self.rx_bandwidth {
            positive("rx_bandwidth", f)?;
            if f >= self.adc_rate / 2.0 {
                return Err(ChannelError::InvalidParameter { name: "rx_bandwidth", value: f });
            }
        }
        if let Some(fs) = self.full_scale {
            positive("full_scale", fs)?;
        }
        if self.adc_bits > 24 {
            return Err(ChannelError::InvalidParameter { name: "adc_bits", value: f64::from(self.adc_bits) });
        }
        Ok(())
    }
}

/// Pole of the one-pole low-pass `(1 − a) / (1 − a z⁻¹)` with −3 dB at `f3db`.
pub fn one_pole_coefficient(f3db: f64, rate: f64) -> f64 {
    let c = (2.0 * PI * f3db / rate).cos();
    let b = 2.0 - c;
    b - (b * b - 1.0).sqrt()
}

/// Applies the receiver roll-off in place.
pub fn apply_rx_response<T: Real>(x: &mut [Complex<T>], rate: f64, f3db: Option<f64>) {
    let Some(f3) = f3db else { return };
    let a = T::c(one_pole_coefficient(f3, rate));
    let g = T::one() - a;
    let mut prev = Complex::new(T::zero(), T::zero());
    for z in x.iter_mut() {
        prev = prev * a + *z * g;
        *z = prev;
    }
}

fn rms<T: Real>(x: &[Complex<T>]) -> f64 {
    // Per-arm RMS (the larger of the two).
    let n = x.len() as f64;
    let (mut a, mut b) = (0.0, 0.0);
    for z in x {
        a += z.re.to_f64_lossy().powi(2);
        b += z.im.to_f64_lossy().powi(2);
    }
    (a.max(b) / n).sqrt()
}

/// Mid-rise uniform quantiser on both arms; returns the clipped fraction.
fn quantize<T: Real>(x: &mut [Complex<T>], bits: u32, full_scale: f64) -> f64 {
    if bits == 0 {
        return 0.0;
    }
    let levels = 2f64.powi(bits as i32);
    let step = 2.0 * full_scale / levels;
    let (lo, hi) = (-(levels / 2.0), levels / 2.0 - 1.0);
    let mut clipped = 0usize;
    let mut q = |v: f64| {
        let k = (v / step).floor();
        if k < lo || k > hi {
            clipped += 1;
        }
        (k.clamp(lo, hi) + 0.5) * step
    };
    for z in x.iter_mut() {
        let re = q(z.re.to_f64_lossy());
        let im = q(z.im.to_f64_lossy());
        *z = Complex::new(T::c(re), T::c(im));
    }
    clipped as f64 / (2.0 * x.len() as f64)
}

fn add_gaussian<T: Real>(x: &mut [Complex<T>], sd: f64, seed: u64, stream: u64) {
    if sd <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    for z in x.iter_mut() {
        let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        *z = *z + Complex::new(T::c(sd * a), T::c(sd * b));
    }
}

/// Raw detector trace: real part is the x arm, imaginary part the p arm.
#[derive(Clone, Debug)]
pub struct Detection<T> {
    pub trace: Waveform<T>,
    pub full_scale: f64,
    pub clip_fraction: f64,
}

impl<T: Real> Detection<T> {
    pub fn x_trace(&self) -> Vec<T> {
        self.trace.samples.iter().map(|z| z.re).collect()
    }

    pub fn p_trace(&self) -> Vec<T> {
        self.trace.samples.iter().map(|z| z.im).collect()
    }
}

fn finish<T: Real>(samples: &mut [Complex<T>], det: &DetectorParams) -> Result<(f64, f64), ChannelError> {
    apply_rx_response(samples, det.adc_rate, det.rx_bandwidth);
    let full_scale = det.full_scale.unwrap_or_else(|| det.full_scale_rms * rms(samples));
    let clip = quantize(samples, det.adc_bits, full_scale);
    if clip > MAX_CLIP_FRACTION {
        return Err(ChannelError::Clipping { fraction: clip, full_scale });
    }
    Ok((full_scale, clip))
}

/// Phase-diverse heterodyne detection of a channel waveform.
pub fn detect<T: Real>(w: &Waveform<T>, det: &DetectorParams, seed: u64) -> Result<Detection<T>, ChannelError> {
    w.expect_origin(Origin::Channel)?;
    det.validate()?;
    let mut samples = if (w.sample_rate - det.adc_rate).abs() <= 1e-9 * det.adc_rate {
        w.samples.clone()
    } else {
        RationalResampler::between(w.sample_rate, det.adc_rate)
            .ok_or(ChannelError::Resampling { from: w.sample_rate, to: det.adc_rate })?
            .process(&w.samples)
    };
    let lo = det.lo_power.sqrt();
    let g = T::c(lo * (2.0 * det.efficiency).sqrt());
    samples.iter_mut().for_each(|z| *z = *z * g);
    add_gaussian(&mut samples, lo, seed, STREAM_SHOT);
    add_gaussian(&mut samples, det.v_el.sqrt(), seed, STREAM_ELECTRONIC);
    let (full_scale, clip_fraction) = finish(&mut samples, det)?;
    let trace = Waveform::new(samples, det.adc_rate, Origin::Channel)?.advance(Origin::Rx)?;
    Ok(Detection { trace, full_scale, clip_fraction })
}

/// Vacuum (LO on, signal off) and electronic (LO off) reference traces.
pub fn calibration_traces<T: Real>(det: &DetectorParams, n: usize, seed: u64) -> Result<(Waveform<T>, Waveform<T>), ChannelError> {
    det.validate()?;
    if n < MIN_CALIBRATION_SAMPLES {
        return Err(ChannelError::CalibrationTooShort(n));
    }
    let zero = Complex::new(T::zero(), T::zero());
    let mut vac = vec![zero; n];
    add_gaussian(&mut vac, det.lo_power.sqrt(), seed, STREAM_SHOT);
    add_gaussian(&mut vac, det.v_el.sqrt(), seed, STREAM_ELECTRONIC);
    finish(&mut vac, det)?;
    let mut el = vec![zero; n];
    // Independent electronic realisation for the LO-off measurement.
    add_gaussian(&mut el, det.v_el.sqrt(), seed.wrapping_add(1), STREAM_ELECTRONIC);
    if det.v_el > 0.0 {
        finish(&mut el, det)?;
    }
    Ok((Waveform::new(vac, det.adc_rate, Origin::VacuumCal)?, Waveform::new(el, det.adc_rate, Origin::ElectronicCal)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use crate::dsp::welch_psd;
    use crate::waveform::quadrature_variance;

    fn quiet() -> ChannelParams {
        ChannelParams { distance_km: 0.0, coupling_eff: 1.0, excess_noise: 0.0, freq_offset: 0.0, linewidth: 0.0, delay_samples: 0, ..Default::default() }
    }

    fn noise_wave(n: usize, seed: u64) -> Waveform<f64> {
        let mut s = vec![Complex::new(0.0, 0.0); n];
        add_gaussian(&mut s, 1.0, seed, 9);
        Waveform::new(s, 32e9, Origin::Tx).unwrap()
    }

    #[test]
    fn transmittance_examples() {
        assert_abs_diff_eq!(fiber_transmittance(5.0, 0.2, 1.0).unwrap(), 0.794, epsilon = 1e-3);
        assert_abs_diff_eq!(fiber_transmittance(5.0, 0.2, 0.923).unwrap(), 0.733, epsilon = 1e-3);
        assert_eq!(fiber_transmittance(0.0, 0.2, 1.0).unwrap(), 1.0);
        assert!(fiber_transmittance(-1.0, 0.2, 1.0).is_err());
    }

    #[test]
    fn identity_channel() {
        let w = noise_wave(1000, 1);
        let out = propagate(&w, &quiet(), 7).unwrap();
        assert_eq!(out.samples, w.samples);
        assert_eq!(out.origin, Origin::Channel);
    }

    #[test]
    fn loss_scales_variance() {
        let w = noise_wave(200_000, 2);
        let ch = ChannelParams { coupling_eff: 0.733, ..quiet() };
        let out = propagate(&w, &ch, 1).unwrap();
        let ratio = quadrature_variance(&out.samples) / quadrature_variance(&w.samples);
        assert_abs_diff_eq!(ratio, 0.733, epsilon = 0.733 * 0.01);
    }

    #[test]
    fn offset_shifts_tone() {
        let f0 = 1e9;
        let rate = 32e9;
        let n = 3200;
        let w = Waveform::new((0..n).map(|i| Complex::from_polar(1.0, 2.0 * PI * f0 * i as f64 / rate)).collect(), rate, Origin::Tx).unwrap();
        let out = propagate(&w, &ChannelParams { freq_offset: 200e6, ..quiet() }, 1).unwrap();
        let p = welch_psd(&out.samples, n);
        let k = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_abs_diff_eq!(crate::dsp::bin_frequency(k, n, rate), 1.2e9, epsilon = 1.0);
    }

    #[test]
    fn rejects_wrong_origin() {
        let w = noise_wave(10, 1);
        assert!(matches!(detect(&w, &DetectorParams::default(), 1), Err(ChannelError::Waveform(_))));
    }

    #[test]
    fn one_pole_is_3db_at_corner() {
        let a = one_pole_coefficient(20e9, 80e9);
        let w = 2.0 * PI * 20e9 / 80e9;
        let h = (1.0 - a) / Complex::new(1.0 - a * w.cos(), a * w.sin()).norm();
        assert_abs_diff_eq!(h * h, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn vacuum_detection_is_one_snu() {
        let det = DetectorParams { v_el: 0.0, rx_bandwidth: None, ..Default::default() };
        let zero = Waveform::new(vec![Complex::new(0.0f64, 0.0); 80_000], 80e9, Origin::Channel).unwrap();
        let d = detect(&zero, &det, 3).unwrap();
        assert_abs_diff_eq!(quadrature_variance(&d.trace.samples), 1.0, epsilon = 0.02);
    }

    #[test]
    fn electronic_noise_adds() {
        let det = DetectorParams { v_el: 0.065, rx_bandwidth: None, ..Default::default() };
        let zero = Waveform::new(vec![Complex::new(0.0f64, 0.0); 200_000], 80e9, Origin::Channel).unwrap();
        let d = detect(&zero, &det, 3).unwrap();
        assert_abs_diff_eq!(quadrature_variance(&d.trace.samples), 1.065, epsilon = 0.02);
    }

    #[test]
    fn arms_are_in_quadrature() {
        let det = DetectorParams { efficiency: 1.0, v_el: 0.0, adc_bits: 0, rx_bandwidth: None, ..Default::default() };
        let tone: Vec<Complex<f64>> = (0..4000).map(|i| Complex::from_polar(1e4, 2.0 * PI * 1e9 * i as f64 / 80e9)).collect();
        let w = Waveform::new(tone, 80e9, Origin::Channel).unwrap();
        let d = detect(&w, &DetectorParams { lo_power: 1e-12, ..det }, 1).unwrap();
        // x = A cos θ, p = A sin θ: p leads x by 90°.
        let (x, p) = (d.x_trace(), d.p_trace());
        let worst = (0..4000)
            .map(|i| (Complex::new(x[i], p[i]).arg() - 2.0 * PI * 1e9 * i as f64 / 80e9).rem_euclid(2.0 * PI))
            .fold(0.0f64, |m, d| m.max(d.min(2.0 * PI - d)));
        assert!(worst < 1e-3);
    }

    #[test]
    fn clipping_is_reported() {
        let det = DetectorParams { full_scale: Some(0.5), ..Default::default() };
        let zero = Waveform::new(vec![Complex::new(0.0f64, 0.0); 20_000], 80e9, Origin::Channel).unwrap();
        assert!(matches!(detect(&zero, &det, 1), Err(ChannelError::Clipping { .. })));
    }

    #[test]
    fn calibration_ratio_recovered() {
        let det = DetectorParams { v_el: 0.0503, ..Default::default() };
        let (v, e) = calibration_traces::<f64>(&det, 400_000, 11).unwrap();
        let (vv, ve) = (quadrature_variance(&v.samples), quadrature_variance(&e.samples));
        assert!(vv > ve);
        assert_abs_diff_eq!(ve / (vv - ve), 0.0503, epsilon = 0.0503 * 0.03);
        assert!(calibration_traces::<f64>(&det, 100, 1).is_err());
    }

    #[test]
    fn seeds_are_reproducible() {
        let det = DetectorParams::default();
        let (a, _) = calibration_traces::<f64>(&det, 20_000, 5).unwrap();
        let (b, _) = calibration_traces::<f64>(&det, 20_000, 5).unwrap();
        let (c, _) = calibration_traces::<f64>(&det, 20_000, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn transmittance_in_unit_interval(d in 0.0f64..200.0, loss in 0.0f64..1.0, c in 0.0f64..=1.0) {
            let t = fiber_transmittance(d, loss, c).unwrap();
            prop_assert!((0.0..=1.0).contains(&t));
        }
    }
}
