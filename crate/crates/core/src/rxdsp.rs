//! Receiver DSP: whitening, pilot-tone carrier recovery, synchronisation,
//! matched filtering, symbol-instant sampling and residual rotation.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constellation::SymbolStream;
use crate::dsp::{
    bin_frequency, cross_correlate, cubic_interp, fft_in_place, fir_filter, linear_fit, minimum_phase_fir, next_fast_len,
    unwrap_phase, welch_psd,
};
use crate::estimation::{snu_calibrate, EstimationError, SnuCalibration};
use crate::txdsp::{rrc_taps, RrcShaper, TxError};
use crate::waveform::{quadrature_variance, Origin, Waveform, WaveformError};
use crate::Real;

#[derive(Debug, Error)]
pub enum RxError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("whitening needs at least 16 taps, got {0}")]
    TooFewTaps(usize),
    #[error("vacuum variance {vacuum} does not exceed electronic variance {electronic}")]
    CalibrationInvalid { vacuum: f64, electronic: f64 },
    #[error("no dominant pilot tone between {lo} and {hi} Hz (peak {peak_db:.1} dB over band mean)")]
    PilotLost { lo: f64, hi: f64, peak_db: f64 },
    #[error("synchronisation failed: peak-to-sidelobe ratio {psr_db:.2} dB")]
    SyncFailure { psr_db: f64 },
    #[error("received trace too short: need {need} samples, have {have}")]
    TooShort { need: usize, have: usize },
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("zero correlation between received and reference symbols")]
    DegenerateRotation,
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RxConfig {
    pub symbol_rate: f64,
    pub adc_rate: f64,
    pub rolloff: f64,
    /// Matched-filter and reference pulse length in symbols.
    pub span: usize,
    pub pilot_freq_nominal: f64,
    /// Width of the coarse pilot search band.
    pub pilot_band: f64,
    /// Width of the band kept around the located pilot for phase tracking.
    pub pilot_phase_band: f64,
    pub whitening_taps: usize,
    pub welch_segment: usize,
    /// Candidate lags searched by the synchroniser.
    pub sync_search_window: usize,
    /// Reference symbols correlated during synchronisation.
    pub sync_symbols: usize,
    pub min_psr_db: f64,
    /// Symbols dropped at each block end before estimation.
    pub trim_symbols: usize,
}

impl Default for RxConfig {
    fn default() -> Self {
        Self {
            symbol_rate: 10e9,
            adc_rate: 80e9,
            rolloff: 0.2,
            span: 32,
            pilot_freq_nominal: 8e9,
            pilot_band: 1e9,
            pilot_phase_band: 20e6,
            whitening_taps: 64,
            welch_segment: 512,
            sync_search_window: 20_000,
            sync_symbols: 4096,
            min_psr_db: 3.0,
            trim_symbols: 32,
        }
    }
}

impl RxConfig {
    pub fn samples_per_symbol(&self) -> f64 {
        self.adc_rate / self.symbol_rate
    }

    pub fn validate(&self) -> Result<(), RxError> {
        for (name, v) in [
            ("symbol_rate", self.symbol_rate),
            ("adc_rate", self.adc_rate),
            ("pilot_band", self.pilot_band),
            ("pilot_phase_band", self.pilot_phase_band),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RxError::InvalidParameter { name, value: v });
            }
        }
        if self.adc_rate < self.symbol_rate * (1.0 + self.rolloff) * 2.0 {
            return Err(RxError::InvalidParameter { name: "adc_rate", value: self.adc_rate });
        }
        if self.whitening_taps < 16 {
            return Err(RxError::TooFewTaps(self.whitening_taps));
        }
        if !self.welch_segment.is_power_of_two() || self.welch_segment < self.whitening_taps {
            return Err(RxError::InvalidParameter { name: "welch_segment", value: self.welch_segment as f64 });
        }
        if self.sync_symbols == 0 || self.sync_search_window == 0 {
            return Err(RxError::InvalidParameter { name: "sync", value: 0.0 });
        }
        rrc_taps::<f64>(self.rolloff, self.span, self.samples_per_symbol())?;
        Ok(())
    }
}

/// Real minimum-phase FIR equaliser fitted to the vacuum-noise spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct WhiteningFilter {
    pub taps: Vec<f64>,
}

impl WhiteningFilter {
    pub fn identity() -> Self {
        Self { taps: vec![1.0] }
    }

    pub fn apply<T: Real>(&self, w: &Waveform<T>) -> Waveform<T> {
        let taps: Vec<T> = self.taps.iter().map(|&t| T::c(t)).collect();
        w.with_samples(fir_filter(&w.samples, &taps))
    }

    /// Magnitude response at `f` cycles per sample.
    pub fn magnitude(&self, f: f64) -> f64 {
        crate::dsp::fir_magnitude(&self.taps, f)
    }
}

/// Fits a whitening filter so that `filter ∗ vacuum` has a flat spectrum.
///
/// The Welch spectrum of the vacuum trace is symmetrised (the two arms see
/// the same real response), inverted in amplitude around its mean level and
/// turned into a minimum-phase FIR.
pub fn whitening_filter<T: Real>(
    vacuum: &Waveform<T>,
    electronic: &Waveform<T>,
    taps: usize,
    segment: usize,
) -> Result<WhiteningFilter, RxError> {
    vacuum.expect_origin(Origin::VacuumCal)?;
    electronic.expect_origin(Origin::ElectronicCal)?;
    if taps < 16 {
        return Err(RxError::TooFewTaps(taps));
    }
    let (vv, ve) = (quadrature_variance(&vacuum.samples), quadrature_variance(&electronic.samples));
    if !(vv > ve) {
        return Err(RxError::CalibrationInvalid { vacuum: vv, electronic: ve });
    }
    if !segment.is_power_of_two() || segment < taps || segment > vacuum.len() {
        return Err(RxError::InvalidParameter { name: "welch_segment", value: segment as f64 });
    }
    let p = welch_psd(&vacuum.samples, segment);
    let n = p.len();
    let sym: Vec<f64> = (0..n).map(|k| 0.5 * (p[k] + p[(n - k) % n])).collect();
    let mean = sym.iter().sum::<f64>() / n as f64;
    let mag: Vec<f64> = sym.iter().map(|&s| (mean / s.max(mean * 1e-12)).sqrt()).collect();
    Ok(WhiteningFilter { taps: minimum_phase_fir(&mag, taps) })
}

/// Pilot frequency and residual phase from a linear fit of its phase.
#[derive(Clone, Debug)]
pub struct PilotEstimate {
    pub freq: f64,
    /// Phase at sample 0 of the linear fit.
    pub intercept: f64,
    /// Phase minus its linear trend, per sample.
    pub phase_profile: Vec<f64>,
    /// Peak bin power over the mean power of the search band.
    pub peak_to_band_db: f64,
}

/// Locates the pilot within `nominal ± band/2`, isolates `phase_band`
/// around it and fits the unwrapped analytic-signal phase.
///
/// The coarse search is a brick-wall band. The phase band uses a Hann
/// taper centred on the peak bin, whose real, symmetric kernel leaves the
/// tone phase untouched even where the block starts and ends; the block is
/// zero-padded so the circular transform does not wrap one end onto the
/// other.
pub fn estimate_pilot<T: Real>(trace: &Waveform<T>, nominal: f64, band: f64, phase_band: f64) -> Result<PilotEstimate, RxError> {
    let rate = trace.sample_rate;
    let len = trace.len();
    let pad = ((8.0 * rate / phase_band).ceil() as usize).max(len / 8);
    let n = next_fast_len(len + pad);
    let mut spec: Vec<Complex<f64>> = trace.samples.iter().map(|z| Complex::new(z.re.to_f64_lossy(), z.im.to_f64_lossy())).collect();
    spec.resize(n, Complex::new(0.0, 0.0));
    fft_in_place(&mut spec, false);
    let (lo, hi) = (nominal - band / 2.0, nominal + band / 2.0);
    let mut peak = (0usize, -1.0f64);
    let (mut sum, mut count) = (0.0, 0usize);
    for (k, z) in spec.iter().enumerate() {
        let f = bin_frequency(k, n, rate);
        if f >= lo && f <= hi {
            let p = z.norm_sqr();
            sum += p;
            count += 1;
            if p > peak.1 {
                peak = (k, p);
            }
        }
    }
    if count < 2 {
        return Err(RxError::InvalidParameter { name: "pilot_band", value: band });
    }
    let peak_db = 10.0 * (peak.1 / (sum / count as f64)).log10();
    // Pure noise reaches ≈ ln(count) over the mean; require 20 dB.
    if !(peak_db > 20.0) {
        return Err(RxError::PilotLost { lo, hi, peak_db });
    }
    // Parabolic refinement of the peak on magnitude.
    let mag = |k: usize| spec[k % n].norm();
    let (a, b, c) = (mag(peak.0 + n - 1), mag(peak.0), mag(peak.0 + 1));
    let den = a - 2.0 * b + c;
    let delta = if den < 0.0 { (0.5 * (a - c) / den).clamp(-0.5, 0.5) } else { 0.0 };
    let f_peak = bin_frequency(peak.0, n, rate) + delta * rate / n as f64;
    for (k, z) in spec.iter_mut().enumerate() {
        let x = (bin_frequency(k, n, rate) - f_peak) / phase_band;
        *z = if x.abs() < 0.5 { *z * (PI * x).cos().powi(2) } else { Complex::new(0.0, 0.0) };
    }
    fft_in_place(&mut spec, true);
    let mut phase: Vec<f64> = spec[..len].iter().map(|z| z.arg()).collect();
    drop(spec);
    unwrap_phase(&mut phase);
    let (slope, intercept) = linear_fit(&phase);
    for (i, p) in phase.iter_mut().enumerate() {
        *p -= slope * i as f64 + intercept;
    }
    Ok(PilotEstimate { freq: slope * rate / (2.0 * PI), intercept, phase_profile: phase, peak_to_band_db: peak_db })
}

/// Shifts by `−(f̂ − f_tx)` and removes the pilot phase profile.
pub fn baseband_and_correct<T: Real>(signal: &Waveform<T>, pilot: &PilotEstimate, tx_pilot_freq: f64) -> Result<Waveform<T>, RxError> {
    if pilot.phase_profile.len() != signal.len() {
        return Err(RxError::LengthMismatch { a: pilot.phase_profile.len(), b: signal.len() });
    }
    let step = (pilot.freq - tx_pilot_freq) / signal.sample_rate;
    let samples = signal
        .samples
        .iter()
        .zip(&pilot.phase_profile)
        .enumerate()
        .map(|(i, (z, &ph))| {
            let theta = -(2.0 * PI * (step * i as f64).fract() + ph);
            z * Complex::new(T::c(theta.cos()), T::c(theta.sin()))
        })
        .collect();
    Ok(signal.with_samples(samples))
}

/// Alignment of the reference block within the received trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SyncResult {
    /// Integer lag of the correlation peak.
    pub offset: usize,
    /// Parabolic refinement in `(-0.5, 0.5)` samples.
    pub fractional: f64,
    pub psr_db: f64,
}

impl SyncResult {
    pub fn position(&self) -> f64 {
        self.offset as f64 + self.fractional
    }
}

/// Reference waveform of the first symbols at the receiver rate; symbol `k`
/// peaks at sample `(k + span/2) · sps`.
pub fn reference_waveform<T: Real>(symbols: &[Complex<T>], cfg: &RxConfig) -> Result<Vec<Complex<T>>, RxError> {
    let shaper = RrcShaper::new(cfg.rolloff, cfg.span, cfg.symbol_rate, cfg.adc_rate)?;
    Ok(shaper.shape(symbols))
}

/// Cross-correlates a reference prefix against the trace over the search
/// window and returns the best lag.
pub fn synchronize<T: Real>(rx: &Waveform<T>, reference: &SymbolStream<T>, cfg: &RxConfig) -> Result<SyncResult, RxError> {
    let k = cfg.sync_symbols.min(reference.len());
    if k == 0 {
        return Err(RxError::InvalidParameter { name: "sync_symbols", value: 0.0 });
    }
    let refw = reference_waveform(&reference.symbols[..k], cfg)?;
    let need = cfg.sync_search_window + refw.len();
    let avail = need.min(rx.len());
    if avail < refw.len() + 1 {
        return Err(RxError::TooShort { need: refw.len() + 1, have: rx.len() });
    }
    let lags = avail - refw.len() + 1;
    let corr = cross_correlate(&rx.samples[..avail], &refw);
    let mag: Vec<f64> = corr[..lags].iter().map(|z| z.norm().to_f64_lossy()).collect();
    let (best, peak) = mag.iter().enumerate().fold((0, -1.0), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
    let guard = cfg.samples_per_symbol().ceil() as usize;
    let side = mag
        .iter()
        .enumerate()
        .filter(|(i, _)| i.abs_diff(best) > guard)
        .map(|(_, &m)| m)
        .fold(0.0f64, f64::max);
    let psr_db = if side > 0.0 { 20.0 * (peak / side).log10() } else { f64::INFINITY };
    if !(psr_db >= cfg.min_psr_db) || peak <= 0.0 {
        return Err(RxError::SyncFailure { psr_db });
    }
    let fractional = if best > 0 && best + 1 < lags {
        let (a, b, c) = (mag[best - 1], mag[best], mag[best + 1]);
        let den = a - 2.0 * b + c;
        if den.abs() > 0.0 { (0.5 * (a - c) / den).clamp(-0.5, 0.5) } else { 0.0 }
    } else {
        0.0
    };
    Ok(SyncResult { offset: best, fractional, psr_db })
}

/// Symbols recovered from a received block.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredSymbols<T> {
    pub symbols: Vec<Complex<T>>,
    /// Index of `symbols[0]` in the transmitted block.
    pub first_symbol: usize,
    pub alignment_offset: f64,
    pub pilot_freq_estimate: f64,
    pub residual_rotation: f64,
}

impl<T: Real> RecoveredSymbols<T> {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// `k,re,im` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,re,im")?;
        for (i, z) in self.symbols.iter().enumerate() {
            writeln!(w, "{},{:.9e},{:.9e}", self.first_symbol + i, z.re.to_f64_lossy(), z.im.to_f64_lossy())?;
        }
        Ok(())
    }

    /// Plain-text `key = value` metadata block.
    pub fn metadata(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "symbols = {}", self.len());
        let _ = writeln!(s, "first_symbol = {}", self.first_symbol);
        let _ = writeln!(s, "alignment_offset = {:.6}", self.alignment_offset);
        let _ = writeln!(s, "pilot_freq_estimate = {:.3}", self.pilot_freq_estimate);
        let _ = writeln!(s, "residual_rotation = {:.9}", self.residual_rotation);
        s
    }

    pub fn save(&self, csv_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<(), RxError> {
        let mut w = io::BufWriter::new(std::fs::File::create(csv_path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        std::fs::write(meta_path, self.metadata())?;
        Ok(())
    }
}

/// Matched filter evaluated at the instants of symbols
/// `first .. first + count`, with cubic interpolation between samples when
/// an instant is not on the grid.
pub fn matched_filter_downsample<T: Real>(
    rx: &Waveform<T>,
    sync: &SyncResult,
    first: usize,
    count: usize,
    cfg: &RxConfig,
) -> Result<Vec<Complex<T>>, RxError> {
    let sps = cfg.samples_per_symbol();
    let taps: Vec<T> = rrc_taps(cfg.rolloff, cfg.span, sps)?;
    let half = (taps.len() / 2) as i64;
    let x = &rx.samples;
    let n = x.len() as i64;
    let mf_at = |c: i64| -> Complex<T> {
        let mut acc = Complex::new(T::zero(), T::zero());
        let lo = (c - half).max(0);
        let hi = (c + half).min(n - 1);
        for j in lo..=hi {
            acc = acc + x[j as usize] * taps[(j - c + half) as usize];
        }
        acc
    };
    let d = cfg.span as f64 / 2.0;
    let last_centre = sync.position() + ((first + count) as f64 - 1.0 + d) * sps;
    if count == 0 || last_centre as i64 >= n {
        return Err(RxError::TooShort { need: last_centre as usize + 1, have: x.len() });
    }
    Ok((first..first + count)
        .map(|k| {
            let c = sync.position() + (k as f64 + d) * sps;
            let base = c.floor();
            let frac = c - base;
            let b = base as i64;
            if frac < 1e-9 {
                mf_at(b)
            } else if frac > 1.0 - 1e-9 {
                mf_at(b + 1)
            } else {
                let pts = [mf_at(b - 1), mf_at(b), mf_at(b + 1), mf_at(b + 2)];
                cubic_interp(&pts, 1.0 + frac)
            }
        })
        .collect())
}

/// Rotates `symbols` by `−θ*` with `θ* = arg Σ ζ conj(α)`; returns `θ*`.
pub fn residual_rotation<T: Real>(symbols: &mut [Complex<T>], reference: &[Complex<T>]) -> Result<f64, RxError> {
    if symbols.len() != reference.len() {
        return Err(RxError::LengthMismatch { a: symbols.len(), b: reference.len() });
    }
    let acc: Complex<f64> = symbols
        .iter()
        .zip(reference)
        .map(|(z, a)| {
            let p = z * a.conj();
            Complex::new(p.re.to_f64_lossy(), p.im.to_f64_lossy())
        })
        .sum();
    if !(acc.norm() > 0.0) {
        return Err(RxError::DegenerateRotation);
    }
    let theta = acc.arg();
    let rot = Complex::new(T::c(theta.cos()), T::c(-theta.sin()));
    symbols.iter_mut().for_each(|z| *z = *z * rot);
    Ok(theta)
}

/// Intermediate results of [`recover`].
#[derive(Clone, Debug)]
pub struct RxOutput<T> {
    pub symbols: RecoveredSymbols<T>,
    pub calibration: SnuCalibration<T>,
    pub whitening: WhiteningFilter,
    pub sync: SyncResult,
    pub pilot_peak_db: f64,
}

/// Full receiver chain on a detected trace and its calibration traces.
pub fn recover<T: Real>(
    trace: &Waveform<T>,
    vacuum: &Waveform<T>,
    electronic: &Waveform<T>,
    reference: &SymbolStream<T>,
    tx_pilot_freq: f64,
    cfg: &RxConfig,
) -> Result<RxOutput<T>, RxError> {
    cfg.validate()?;
    trace.expect_origin(Origin::Rx)?;
    if (trace.sample_rate - cfg.adc_rate).abs() > 1e-9 * cfg.adc_rate {
        return Err(RxError::InvalidParameter { name: "trace sample_rate", value: trace.sample_rate });
    }
    let whitening = whitening_filter(vacuum, electronic, cfg.whitening_taps, cfg.welch_segment)?;
    let calibration = snu_calibrate(&whitening.apply(vacuum), &whitening.apply(electronic))?;
    let white = calibration.apply(&whitening.apply(trace));
    log::debug!("whitening: {} taps, snu scale {:?}", whitening.taps.len(), calibration.scale);

    let pilot = estimate_pilot(&white, cfg.pilot_freq_nominal, cfg.pilot_band, cfg.pilot_phase_band)?;
    log::debug!("pilot at {:.3} Hz ({:.1} dB)", pilot.freq, pilot.peak_to_band_db);
    let base = baseband_and_correct(&white, &pilot, tx_pilot_freq)?;
    drop(white);

    let sync = synchronize(&base, reference, cfg)?;
    log::debug!("sync offset {} + {:.3} (PSR {:.1} dB)", sync.offset, sync.fractional, sync.psr_db);
    let trim = cfg.trim_symbols;
    if reference.len() <= 2 * trim {
        return Err(RxError::TooShort { need: 2 * trim + 1, have: reference.len() });
    }
    let count = reference.len() - 2 * trim;
    let mut zeta = matched_filter_downsample(&base, &sync, trim, count, cfg)?;
    let theta = residual_rotation(&mut zeta, &reference.symbols[trim..trim + count])?;
    Ok(RxOutput {
        symbols: RecoveredSymbols {
            symbols: zeta,
            first_symbol: trim,
            alignment_offset: sync.position(),
            pilot_freq_estimate: pilot.freq,
            residual_rotation: theta,
        },
        calibration,
        whitening,
        sync,
        pilot_peak_db: pilot.peak_to_band_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    use crate::constellation::Constellation;

    fn stream(n: usize, seed: u64) -> SymbolStream<f64> {
        Constellation::<f64>::build(64, 0.129, 1.0).unwrap().sample(n, 10e9, seed).unwrap()
    }

    #[test]
    fn rotation_recovers_angle() {
        let s = stream(2000, 1);
        let mut z: Vec<_> = s.symbols.iter().map(|a| a * Complex::from_polar(0.8, 0.3)).collect();
        let th = residual_rotation(&mut z, &s.symbols).unwrap();
        assert_abs_diff_eq!(th, 0.3, epsilon = 1e-9);
        let after: Complex<f64> = z.iter().zip(&s.symbols).map(|(a, b)| a * b.conj()).sum();
        assert!(after.arg().abs() < 1e-6);
        let mut zero = vec![Complex::new(0.0, 0.0); 2000];
        assert!(matches!(residual_rotation(&mut zero, &s.symbols), Err(RxError::DegenerateRotation)));
    }

    #[test]
    fn sync_finds_constructed_delay() {
        let cfg = RxConfig { sync_symbols: 512, sync_search_window: 4000, ..Default::default() };
        let s = stream(1000, 2);
        let refw = reference_waveform(&s.symbols, &cfg).unwrap();
        let mut x = vec![Complex::new(0.0, 0.0); 1234];
        x.extend(refw);
        let w = Waveform::new(x, cfg.adc_rate, Origin::Rx).unwrap();
        let r = synchronize(&w, &s, &cfg).unwrap();
        assert_eq!(r.offset, 1234);
        assert!(r.fractional.abs() < 1e-2, "{r:?}");
    }

    #[test]
    fn pilot_on_clean_tone() {
        let rate = 80e9;
        let n = 1_000_000;
        let f = 8.1e9 + 1234.5;
        let x: Vec<Complex<f64>> = (0..n).map(|i| Complex::from_polar(1.0, 2.0 * PI * (f / rate * i as f64).fract() + 0.4)).collect();
        let w = Waveform::new(x, rate, Origin::Rx).unwrap();
        let p = estimate_pilot(&w, 8e9, 1e9, 20e6).unwrap();
        assert_abs_diff_eq!(p.freq, f, epsilon = 1e3);
        let rms = (p.phase_profile.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        assert!(rms < 1e-3, "{rms}");
    }

    #[test]
    fn whitening_rejects_too_few_taps() {
        let v = Waveform::new(vec![Complex::new(1.0f64, 0.0); 1024], 1.0, Origin::VacuumCal).unwrap();
        let e = Waveform::new(vec![Complex::new(0.0f64, 0.0); 1024], 1.0, Origin::ElectronicCal).unwrap();
        assert!(matches!(whitening_filter(&v, &e, 8, 512), Err(RxError::TooFewTaps(8))));
    }

    #[test]
    fn metadata_lists_fields() {
        let r = RecoveredSymbols::<f64> {
            symbols: vec![Complex::new(1.0, 2.0)],
            first_symbol: 3,
            alignment_offset: 2.5,
            pilot_freq_estimate: 8e9,
            residual_rotation: 0.1,
        };
        let m = r.metadata();
        assert!(m.contains("alignment_offset = 2.5"));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("k,re,im\n3,"));
    }
}
