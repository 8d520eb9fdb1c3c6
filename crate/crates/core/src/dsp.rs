//! Signal-processing building blocks shared by the transmitter, channel and
//! receiver: FFT helpers, FIR filtering, Welch PSD, rational resampling,
//! cubic interpolation and minimum-phase design.

use std::f64::consts::PI;

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::Real;

/// Forward (`inverse = false`) or unnormalised inverse FFT in place.
pub fn fft_in_place<T: Real>(buf: &mut [Complex<T>], inverse: bool) {
    let mut planner = FftPlanner::<T>::new();
    let fft = if inverse { planner.plan_fft_inverse(buf.len()) } else { planner.plan_fft_forward(buf.len()) };
    fft.process(buf);
}

/// Frequency (Hz) of FFT bin `k` of an `n`-point transform at `rate`,
/// mapped to `[-rate/2, rate/2)`.
pub fn bin_frequency(k: usize, n: usize, rate: f64) -> f64 {
    let k = if k >= n.div_ceil(2) { k as f64 - n as f64 } else { k as f64 };
    k * rate / n as f64
}

/// Smallest `m ≥ n` of the form `2^a 3^b 5^c`.
pub fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Multiplies the block spectrum by `h(f)` (circular, whole block).
pub fn apply_frequency_response<T: Real>(samples: &[Complex<T>], rate: f64, h: impl Fn(f64) -> Complex<f64>) -> Vec<Complex<T>> {
    let n = samples.len();
    let mut buf = samples.to_vec();
    fft_in_place(&mut buf, false);
    let scale = 1.0 / n as f64;
    for (k, z) in buf.iter_mut().enumerate() {
        let g = h(bin_frequency(k, n, rate)) * scale;
        *z = *z * Complex::new(T::c(g.re), T::c(g.im));
    }
    fft_in_place(&mut buf, true);
    buf
}

/// Causal FIR filter with real taps; output has the input length.
pub fn fir_filter<T: Real>(x: &[Complex<T>], taps: &[T]) -> Vec<Complex<T>> {
    let mut y = vec![Complex::new(T::zero(), T::zero()); x.len()];
    for (n, out) in y.iter_mut().enumerate() {
        let mut acc = Complex::new(T::zero(), T::zero());
        for (k, &h) in taps.iter().enumerate().take(n + 1) {
            acc = acc + x[n - k] * h;
        }
        *out = acc;
    }
    y
}

/// Circular cross-correlation `c[l] = Σ_m x[m + l] conj(r[m])` for lags
/// `0..x.len()`, via FFT of a common padded length.
pub fn cross_correlate<T: Real>(x: &[Complex<T>], r: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = next_fast_len(x.len() + r.len());
    let zero = Complex::new(T::zero(), T::zero());
    let mut a = x.to_vec();
    a.resize(n, zero);
    let mut b = r.to_vec();
    b.resize(n, zero);
    fft_in_place(&mut a, false);
    fft_in_place(&mut b, false);
    for (u, v) in a.iter_mut().zip(&b) {
        *u = *u * v.conj();
    }
    fft_in_place(&mut a, true);
    let scale = T::one() / T::c(n as f64);
    a.truncate(x.len());
    a.iter_mut().for_each(|z| *z = *z * scale);
    a
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Two-sided Welch PSD in FFT bin order (Hann window, 50 % overlap),
/// normalised so that the mean over bins equals the per-sample power
/// `E|x|²` of a stationary input.
pub fn welch_psd<T: Real>(x: &[Complex<T>], segment: usize) -> Vec<f64> {
    let seg = segment.min(x.len()).max(1);
    let win = hann(seg);
    let wpow: f64 = win.iter().map(|w| w * w).sum::<f64>();
    let hop = (seg / 2).max(1);
    let mut acc = vec![0.0f64; seg];
    let mut count = 0usize;
    let mut buf = vec![Complex::new(0.0f64, 0.0); seg];
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(seg);
    let mut start = 0;
    while start + seg <= x.len() {
        for i in 0..seg {
            let z = x[start + i];
            buf[i] = Complex::new(z.re.to_f64_lossy(), z.im.to_f64_lossy()) * win[i];
        }
        fft.process(&mut buf);
        for (a, z) in acc.iter_mut().zip(&buf) {
            *a += z.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    let norm = 1.0 / (count.max(1) as f64 * wpow);
    acc.iter_mut().for_each(|a| *a *= norm);
    acc
}

/// Zeroth-order modified Bessel function of the first kind.
pub fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Finds `(p, q)` with `p/q = ratio` and `q ≤ max_den`.
pub fn rational_approx(ratio: f64, max_den: u32) -> Option<(u32, u32)> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return None;
    }
    (1..=max_den).find_map(|q| {
        let p = (ratio * f64::from(q)).round();
        ((p - ratio * f64::from(q)).abs() <= 1e-9 * ratio * f64::from(q) && p >= 1.0).then_some((p as u32, q))
    })
}

/// Polyphase rational resampler `up/down` with a Kaiser-windowed sinc.
///
/// The output is scaled by `√(down/up)` so that the mean power per sample
/// times the sample period (energy) is preserved; a band-limited field
/// expressed in photons per sample keeps its photon count.
#[derive(Clone, Debug)]
pub struct RationalResampler {
    pub up: usize,
    pub down: usize,
    half: usize,
    taps: Vec<f64>,
}

impl RationalResampler {
    /// `half_len` input samples on each side; `cutoff` relative to the
    /// lower of the two Nyquist frequencies.
    pub fn new(up: usize, down: usize, half_len: usize, cutoff: f64, kaiser_beta: f64) -> Self {
        let half = half_len * up;
        let fc = cutoff * 0.5 / up.max(down) as f64;
        let i0b = bessel_i0(kaiser_beta);
        let mut taps: Vec<f64> = (0..=2 * half)
            .map(|i| {
                let n = i as f64 - half as f64;
                let r = n / half as f64;
                let w = bessel_i0(kaiser_beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
                2.0 * fc * sinc(2.0 * fc * n) * w
            })
            .collect();
        // Each polyphase branch sums to one, so DC passes with gain `up`.
        let sum: f64 = taps.iter().sum();
        let g = up as f64 / sum;
        taps.iter_mut().for_each(|t| *t *= g);
        Self { up, down, half, taps }
    }

    /// Resampler for `from` → `to` sample rates with default quality.
    pub fn between(from: f64, to: f64) -> Option<Self> {
        let (up, down) = rational_approx(to / from, 1000)?;
        Some(Self::new(up as usize, down as usize, 24, 0.9, 10.0))
    }

    pub fn output_len(&self, n_in: usize) -> usize {
        (n_in * self.up).div_ceil(self.down)
    }

    /// Zero-delay resampling: output sample `m` sits at input time
    /// `m · down / up`.
    pub fn process<T: Real>(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        let gain = (self.down as f64 / self.up as f64).sqrt();
        let taps: Vec<T> = self.taps.iter().map(|&t| T::c(t * gain)).collect();
        let (up, half) = (self.up as i64, self.half as i64);
        let n_in = x.len() as i64;
        (0..self.output_len(x.len()))
            .map(|m| {
                let j = (m * self.down) as i64;
                let lo = (j - half).div_euclid(up) + i64::from((j - half).rem_euclid(up) != 0);
                let hi = (j + half).div_euclid(up);
                let mut acc = Complex::new(T::zero(), T::zero());
                for n in lo.max(0)..=hi.min(n_in - 1) {
                    acc = acc + x[n as usize] * taps[(j - n * up + half) as usize];
                }
                acc
            })
            .collect()
    }
}

/// Catmull-Rom cubic interpolation of `y` at fractional index `t`.
pub fn cubic_interp<T: Real>(y: &[Complex<T>], t: f64) -> Complex<T> {
    let zero = Complex::new(T::zero(), T::zero());
    let i = t.floor() as i64;
    let f = T::c(t - t.floor());
    let at = |k: i64| if k >= 0 && (k as usize) < y.len() { y[k as usize] } else { zero };
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    let h = T::half();
    let a = (p1 * T::c(3.0) - p0 - p2 * T::c(3.0) + p3) * h;
    let b = (p0 * T::two() - p1 * T::c(5.0) + p2 * T::c(4.0) - p3) * h;
    let c = (p2 - p0) * h;
    ((a * f + b) * f + c) * f + p1
}

/// Unwraps a phase sequence so consecutive samples differ by less than π.
pub fn unwrap_phase(phase: &mut [f64]) {
    let mut offset = 0.0;
    let mut prev = match phase.first() {
        Some(&p) => p,
        None => return,
    };
    for p in phase.iter_mut().skip(1) {
        let raw = *p;
        let d = raw - prev;
        if d > PI {
            offset -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
        } else if d < -PI {
            offset += 2.0 * PI * ((-d + PI) / (2.0 * PI)).floor();
        }
        prev = raw;
        *p = raw + offset;
    }
}

/// Least-squares line `y ≈ slope · i + intercept` over sample index `i`.
pub fn linear_fit(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Minimum-phase real FIR of length `taps` whose magnitude approximates
/// `mag` (even-symmetric, FFT bin order, length a power of two).
///
/// Uses the folded real cepstrum; the cepstrum is truncated at `taps`
/// quefrencies, which smooths the log-magnitude before exponentiation.
pub fn minimum_phase_fir(mag: &[f64], taps: usize) -> Vec<f64> {
    let n = mag.len();
    let mut c: Vec<Complex<f64>> = mag.iter().map(|&m| Complex::new(m.max(1e-300).ln(), 0.0)).collect();
    fft_in_place(&mut c, true);
    c.iter_mut().for_each(|z| *z /= n as f64);
    let keep = taps.min(n / 2);
    let mut folded = vec![Complex::new(0.0, 0.0); n];
    folded[0] = c[0];
    for k in 1..keep {
        folded[k] = c[k] * 2.0;
    }
    fft_in_place(&mut folded, false);
    folded.iter_mut().for_each(|z| *z = z.exp());
    fft_in_place(&mut folded, true);
    let h: Vec<f64> = folded.iter().take(taps.min(n)).map(|z| z.re / n as f64).collect();
    // Half-Hann taper over the final quarter.
    let tail = (h.len() / 4).max(1);
    let start = h.len() - tail;
    h.iter()
        .enumerate()
        .map(|(i, &v)| if i < start { v } else { v * 0.5 * (1.0 + (PI * (i - start + 1) as f64 / (tail + 1) as f64).cos()) })
        .collect()
}

/// Frequency response magnitude of real taps at `f` (cycles per sample).
pub fn fir_magnitude(taps: &[f64], f: f64) -> f64 {
    let z: Complex<f64> = taps.iter().enumerate().map(|(k, &h)| Complex::from_polar(h, -2.0 * PI * f * k as f64)).sum();
    z.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(n: usize, seed: u64) -> Vec<Complex<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect()
    }

    #[test]
    fn fast_len() {
        assert_eq!(next_fast_len(7), 8);
        assert_eq!(next_fast_len(1_000_001), 1_012_500);
        assert_eq!(next_fast_len(1), 1);
    }

    #[test]
    fn bins_are_signed() {
        assert_eq!(bin_frequency(0, 8, 8.0), 0.0);
        assert_eq!(bin_frequency(3, 8, 8.0), 3.0);
        assert_eq!(bin_frequency(4, 8, 8.0), -4.0);
        assert_eq!(bin_frequency(7, 8, 8.0), -1.0);
    }

    #[test]
    fn welch_mean_is_power() {
        let x = white(1 << 15, 1);
        let p = welch_psd(&x, 256);
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert_abs_diff_eq!(mean, 2.0, epsilon = 0.05);
    }

    #[test]
    fn resampler_preserves_tone_and_energy() {
        let rs = RationalResampler::between(32e9, 80e9).unwrap();
        assert_eq!((rs.up, rs.down), (5, 2));
        let f = 3e9;
        let x: Vec<Complex<f64>> = (0..4000).map(|i| Complex::from_polar(1.0, 2.0 * PI * f * i as f64 / 32e9)).collect();
        let y = rs.process(&x);
        assert_eq!(y.len(), 10_000);
        let g = (2.0f64 / 5.0).sqrt();
        for m in 500..9500 {
            let want = Complex::from_polar(g, 2.0 * PI * f * m as f64 / 80e9);
            assert_abs_diff_eq!((y[m] - want).norm(), 0.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn cubic_exact_on_cubic() {
        let y: Vec<Complex<f64>> = (0..10).map(|i| Complex::new((i as f64).powi(2), 0.0)).collect();
        // Catmull-Rom reproduces quadratics exactly.
        assert_abs_diff_eq!(cubic_interp(&y, 4.25).re, 4.25f64.powi(2), epsilon = 1e-12);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let y: Vec<f64> = (0..100).map(|i| 0.3 * i as f64 - 2.0).collect();
        let (s, b) = linear_fit(&y);
        assert_abs_diff_eq!(s, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(b, -2.0, epsilon = 1e-10);
    }

    #[test]
    fn min_phase_inverts_one_pole() {
        let n = 512;
        let a: f64 = 0.4;
        let mag: Vec<f64> = (0..n)
            .map(|k| {
                let w = 2.0 * PI * k as f64 / n as f64;
                // |1 - a e^{-jw}| / (1 - a)
                ((1.0 - 2.0 * a * w.cos() + a * a).sqrt()) / (1.0 - a)
            })
            .collect();
        let h = minimum_phase_fir(&mag, 64);
        assert_abs_diff_eq!(h[0], 1.0 / (1.0 - a), epsilon = 1e-6);
        assert_abs_diff_eq!(h[1], -a / (1.0 - a), epsilon = 1e-6);
        assert!(h[2..].iter().all(|v| v.abs() < 1e-6));
    }

    proptest! {
        #[test]
        fn unwrap_removes_jumps(steps in prop::collection::vec(-3.0f64..3.0, 1..200)) {
            let mut truth = vec![0.0];
            for s in &steps {
                truth.push(truth.last().unwrap() + s);
            }
            let mut wrapped: Vec<f64> = truth.iter().map(|p| (p + PI).rem_euclid(2.0 * PI) - PI).collect();
            unwrap_phase(&mut wrapped);
            let off = truth[0] - wrapped[0];
            for (a, b) in truth.iter().zip(&wrapped) {
                prop_assert!((a - b - off).abs() < 1e-9);
            }
        }
    }
}
