//! Probabilistically shaped square QAM alphabets of coherent-state amplitudes.
//!
//! Points sit on the odd-integer grid `{±1, ±3, …}` and carry
//! Maxwell–Boltzmann weights `exp(-ν|g|²)` computed on the unscaled grid.
//! The whole alphabet is then scaled so that `Σ p |α|² = V_M / 2`, i.e. the
//! two-quadrature modulation variance equals `V_M` in shot-noise units.

use std::fmt::Write as _;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyrate::{self, KeyRateError, LinkParams};
use crate::Real;

#[derive(Debug, Error, PartialEq)]
pub enum ConstellationError {
    #[error("unsupported constellation order {0} (expected 16, 32 or 64)")]
    UnsupportedOrder(usize),
    #[error("shaping parameter must be positive and finite, got {0}")]
    InvalidShaping(f64),
    #[error("modulation variance must be positive and finite, got {0}")]
    InvalidVariance(f64),
    #[error("symbol count must be at least 1")]
    EmptyStream,
    #[error("invalid search interval [{lo}, {hi}]")]
    InvalidSearch { lo: f64, hi: f64 },
    #[error("no positive key rate for any shaping parameter in [{lo}, {hi}]")]
    NoPositiveRate { lo: f64, hi: f64 },
    #[error(transparent)]
    KeyRate(#[from] KeyRateError),
}

/// Supported square-grid QAM orders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QamOrder {
    Qam16,
    /// 6×6 grid whose four outer corners carry zero probability.
    Qam32,
    Qam64,
}

impl QamOrder {
    pub fn from_cardinality(m: usize) -> Result<Self, ConstellationError> {
        match m {
            16 => Ok(Self::Qam16),
            32 => Ok(Self::Qam32),
            64 => Ok(Self::Qam64),
            other => Err(ConstellationError::UnsupportedOrder(other)),
        }
    }

    pub fn cardinality(self) -> usize {
        match self {
            Self::Qam16 => 16,
            Self::Qam32 => 32,
            Self::Qam64 => 64,
        }
    }

    /// Number of grid lines per axis.
    pub fn side(self) -> usize {
        match self {
            Self::Qam16 => 4,
            Self::Qam32 => 6,
            Self::Qam64 => 8,
        }
    }

    /// Odd-integer grid coordinate of line `i`.
    fn coord(self, i: usize) -> i32 {
        2 * i as i32 - (self.side() as i32 - 1)
    }

    fn is_removed_corner(self, ix: usize, iy: usize) -> bool {
        let last = self.side() - 1;
        self == Self::Qam32 && (ix == 0 || ix == last) && (iy == 0 || iy == last)
    }

    /// Unscaled grid points in row-major order, corners of 32-QAM excluded.
    pub fn grid(self) -> Vec<(i32, i32)> {
        let n = self.side();
        let mut pts = Vec::with_capacity(self.cardinality());
        for iy in 0..n {
            for ix in 0..n {
                if !self.is_removed_corner(ix, iy) {
                    pts.push((self.coord(ix), self.coord(iy)));
                }
            }
        }
        pts
    }
}

/// A discrete coherent-state alphabet `{α_k, p_k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation<T> {
    order: QamOrder,
    grid: Vec<(i32, i32)>,
    points: Vec<Complex<T>>,
    probs: Vec<T>,
    nu: T,
    v_mod: T,
}

impl<T: Real> Constellation<T> {
    /// Builds a Maxwell–Boltzmann shaped QAM alphabet with two-quadrature
    /// modulation variance `v_mod` (SNU).
    pub fn build(m: usize, nu: T, v_mod: T) -> Result<Self, ConstellationError> {
        let order = QamOrder::from_cardinality(m)?;
        if !(nu.is_finite() && nu > T::zero()) {
            return Err(ConstellationError::InvalidShaping(nu.to_f64_lossy()));
        }
        if !(v_mod.is_finite() && v_mod > T::zero()) {
            return Err(ConstellationError::InvalidVariance(v_mod.to_f64_lossy()));
        }
        let grid = order.grid();
        let energy = |&(x, y): &(i32, i32)| T::c(f64::from(x * x + y * y));
        // Shift by the smallest energy before exponentiating to stay in range.
        let e_min = grid.iter().map(energy).fold(T::infinity(), T::min);
        let weights: Vec<T> = grid.iter().map(|g| (-nu * (energy(g) - e_min)).exp()).collect();
        let total: T = weights.iter().copied().sum();
        let probs: Vec<T> = weights.iter().map(|&w| w / total).collect();
        let mean_energy: T = grid.iter().zip(&probs).map(|(g, &p)| p * energy(g)).sum();
        let scale = (v_mod / (T::two() * mean_energy)).sqrt();
        let points = grid.iter().map(|&(x, y)| Complex::new(T::c(f64::from(x)) * scale, T::c(f64::from(y)) * scale)).collect();
        Ok(Self { order, grid, points, probs, nu, v_mod })
    }

    pub fn order(&self) -> QamOrder {
        self.order
    }

    pub fn cardinality(&self) -> usize {
        self.order.cardinality()
    }

    pub fn points(&self) -> &[Complex<T>] {
        &self.points
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn v_mod(&self) -> T {
        self.v_mod
    }

    /// Unscaled odd-integer grid coordinates of each point.
    pub fn grid(&self) -> &[(i32, i32)] {
        &self.grid
    }

    /// `Σ p |α|²`, the mean photon number per symbol.
    pub fn mean_photon_number(&self) -> T {
        self.points.iter().zip(&self.probs).map(|(a, &p)| p * a.norm_sqr()).sum()
    }

    /// Amplitude scale factor from grid units to √SNU.
    pub fn scale(&self) -> T {
        self.points[0].re / T::c(f64::from(self.grid[0].0))
    }

    /// Probability table over the full `side × side` grid, row-major from the
    /// most negative coordinate. Removed 32-QAM corners are exactly zero.
    pub fn grid_probabilities(&self) -> Vec<Vec<T>> {
        let n = self.order.side();
        let mut table = vec![vec![T::zero(); n]; n];
        let offset = n as i32 - 1;
        for (&(x, y), &p) in self.grid.iter().zip(&self.probs) {
            table[((y + offset) / 2) as usize][((x + offset) / 2) as usize] = p;
        }
        table
    }

    /// Rotates every amplitude by `theta` radians.
    pub fn rotated(&self, theta: T) -> Self {
        let r = Complex::from_polar(T::one(), theta);
        Self { points: self.points.iter().map(|&a| a * r).collect(), ..self.clone() }
    }

    /// Plain-text table `index re im p`, one point per line.
    pub fn to_table(&self) -> String {
        let mut out = String::from("# index re_alpha im_alpha probability\n");
        for (k, (a, p)) in self.points.iter().zip(&self.probs).enumerate() {
            let _ = writeln!(out, "{k} {:.17e} {:.17e} {:.17e}", a.re, a.im, p);
        }
        out
    }

    /// Draws `n` i.i.d. symbols by inverse-CDF sampling with a ChaCha8 stream
    /// seeded from `seed`.
    pub fn sample(&self, n: usize, symbol_rate: f64, seed: u64) -> Result<SymbolStream<T>, ConstellationError> {
        if n == 0 {
            return Err(ConstellationError::EmptyStream);
        }
        let mut cdf = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0f64;
        for &p in &self.probs {
            acc += p.to_f64_lossy();
            cdf.push(acc);
        }
        // Last point with non-zero mass absorbs rounding at the top of the CDF.
        let last = self.probs.iter().rposition(|&p| p > T::zero()).unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let indices: Vec<u16> = (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let k = cdf.partition_point(|&c| c <= u);
                k.min(last) as u16
            })
            .collect();
        let symbols = indices.iter().map(|&k| self.points[k as usize]).collect();
        Ok(SymbolStream { symbols, indices, symbol_rate, seed })
    }
}

/// An i.i.d. symbol sequence drawn from a [`Constellation`].
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolStream<T> {
    pub symbols: Vec<Complex<T>>,
    /// Index of each symbol in the generating constellation.
    pub indices: Vec<u16>,
    /// Symbols per second.
    pub symbol_rate: f64,
    pub seed: u64,
}

impl<T: Real> SymbolStream<T> {
    pub fn from_symbols(symbols: Vec<Complex<T>>, symbol_rate: f64) -> Self {
        Self { indices: Vec::new(), symbols, symbol_rate, seed: 0 }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Bounds of the one-dimensional shaping-parameter search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuSearch {
    pub lo: f64,
    pub hi: f64,
    /// Coarse grid points scanned before golden-section refinement.
    pub grid_points: usize,
    /// Absolute tolerance on ν.
    pub tol: f64,
}

impl Default for NuSearch {
    fn default() -> Self {
        Self { lo: 0.01, hi: 0.6, grid_points: 24, tol: 1e-4 }
    }
}

/// Finds the shaping parameter maximizing the asymptotic key rate for the
/// given order, modulation variance and link.
///
/// A coarse scan brackets the best grid cell, then golden-section search
/// refines it to `search.tol`.
pub fn optimize_nu<T: Real>(
    m: usize,
    v_mod: T,
    link: &LinkParams<T>,
    beta: T,
    search: &NuSearch,
) -> Result<T, ConstellationError> {
    QamOrder::from_cardinality(m)?;
    let (lo, hi) = (search.lo, search.hi);
    if !(lo > 0.0 && hi > lo && search.grid_points >= 3 && search.tol > 0.0) {
        return Err(ConstellationError::InvalidSearch { lo, hi });
    }
    let rate = |nu: f64| -> Result<f64, ConstellationError> {
        let c = Constellation::build(m, T::c(nu), v_mod)?;
        let r = keyrate::asymptotic_rate(&c, link, beta)?;
        Ok(r.r_inf_raw.to_f64_lossy())
    };
    let n = search.grid_points;
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, &x) in xs.iter().enumerate() {
        let r = rate(x)?;
        if r > best.1 {
            best = (i, r);
        }
    }
    if best.1 <= 0.0 {
        return Err(ConstellationError::NoPositiveRate { lo, hi });
    }
    let mut a = xs[best.0.saturating_sub(1)];
    let mut b = xs[(best.0 + 1).min(n - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = rate(c)?;
    let mut fd = rate(d)?;
    while (b - a).abs() > search.tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = rate(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = rate(d)?;
        }
    }
    Ok(T::c(0.5 * (a + b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn table1_row1_sixteen_qam() {
        let c = Constellation::<f64>::build(16, 0.215, 0.87).unwrap();
        assert_eq!(c.points().len(), 16);
        assert_abs_diff_eq!(c.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.mean_photon_number(), 0.435, epsilon = 1e-9);
    }

    #[test]
    fn vanishing_shaping_is_uniform() {
        let c = Constellation::<f64>::build(64, 1e-12, 1.0).unwrap();
        for &p in c.probs() {
            assert_abs_diff_eq!(p, 1.0 / 64.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(2.0 * c.mean_photon_number(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn thirty_two_qam_corners_are_zero() {
        let c = Constellation::<f64>::build(32, 0.162, 0.93).unwrap();
        assert_eq!(c.points().len(), 32);
        let table = c.grid_probabilities();
        for (r, col) in [(0, 0), (0, 5), (5, 0), (5, 5)] {
            assert_eq!(table[r][col], 0.0);
        }
        let nonzero = table.iter().flatten().filter(|&&p| p > 0.0).count();
        assert_eq!(nonzero, 32);
        assert_abs_diff_eq!(c.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(Constellation::<f64>::build(8, 0.1, 1.0).unwrap_err(), ConstellationError::UnsupportedOrder(8));
        assert!(matches!(Constellation::<f64>::build(16, 0.0, 1.0), Err(ConstellationError::InvalidShaping(_))));
        assert!(matches!(Constellation::<f64>::build(16, -1.0, 1.0), Err(ConstellationError::InvalidShaping(_))));
        assert!(matches!(Constellation::<f64>::build(16, 0.1, f64::NAN), Err(ConstellationError::InvalidVariance(_))));
        let c = Constellation::<f64>::build(16, 0.1, 1.0).unwrap();
        assert_eq!(c.sample(0, 1e9, 1).unwrap_err(), ConstellationError::EmptyStream);
    }

    #[test]
    fn single_draw_is_a_point() {
        let c = Constellation::<f64>::build(16, 0.215, 0.87).unwrap();
        for seed in 0..20 {
            let s = c.sample(1, 10e9, seed).unwrap();
            assert!(c.points().contains(&s.symbols[0]));
        }
    }

    #[test]
    fn f32_build_matches_f64() {
        let a = Constellation::<f32>::build(64, 0.129, 1.03).unwrap();
        let b = Constellation::<f64>::build(64, 0.129, 1.03).unwrap();
        for (x, y) in a.points().iter().zip(b.points()) {
            assert_abs_diff_eq!(f64::from(x.re), y.re, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(f64::from(a.mean_photon_number()), 0.515, epsilon = 1e-6);
    }

    #[test]
    fn table_has_one_line_per_point() {
        let c = Constellation::<f64>::build(32, 0.162, 0.93).unwrap();
        let t = c.to_table();
        assert_eq!(t.lines().count(), 33);
        let fields: Vec<&str> = t.lines().nth(1).unwrap().split_whitespace().collect();
        assert_eq!(fields.len(), 4);
    }
}
