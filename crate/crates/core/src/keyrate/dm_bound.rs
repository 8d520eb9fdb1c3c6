//! Lower bound on the Alice–Bob correlation term for discrete modulation.
//!
//! Alice's average state is `τ = Σ_k p_k |α_k⟩⟨α_k|`. In the entanglement-based
//! picture the correlation with Bob's mode is `⟨a b⟩ = tr[E(Q) b]` with
//! `Q = τ^{1/2} a† τ^{1/2}`. Writing `Q = Σ_k p_k |α_k⟩⟨φ_k|` where
//! `|φ_k⟩ = τ^{1/2} a τ^{-1/2} |α_k⟩`, splitting `|φ_k⟩` into its component
//! along `|α_k⟩` and an orthogonal remainder, and bounding the remainder with
//! Cauchy–Schwarz gives, for a channel that acts linearly on the conditional
//! means (`⟨b⟩_k = √T α_k`) with per-symbol excess `⟨b†b⟩_k − |⟨b⟩_k|² = Tε/2`,
//!
//! ```text
//! Z ≥ 2 √T c₁ − 2 √(w · Tε/2)
//! c₁ = tr(τ^{1/2} a τ^{1/2} a†)
//! w  = Σ_k p_k (‖φ_k‖² − |⟨α_k|φ_k⟩|²)
//! ```
//!
//! For a thermal `τ` (Gaussian modulation) `2c₁ = √(V² − 1)` and `w = 0`, so the
//! bound collapses to the Gaussian correlation.
//!
//! Everything is evaluated in a truncated Fock basis. `τ` has rank `M` but its
//! spectrum decays geometrically, so the pseudo-inverse square root keeps only
//! eigenvalues above a relative floor; the discarded directions contribute at
//! the level of the floor.

use num_complex::Complex;

use crate::constellation::Constellation;
use crate::linalg::{Mat, SymmetricEigen};
use crate::Real;

use super::KeyRateError;

/// Constellation-dependent quantities entering the correlation bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DmMoments<T> {
    /// `tr(τ^{1/2} a τ^{1/2} a†)`; `2c₁` is the correlation of the noiseless,
    /// lossless channel.
    pub c1: T,
    /// Non-Gaussianity weight multiplying the excess-noise penalty.
    pub w: T,
    /// `Σ p |α|²`.
    pub mean_photon: T,
    pub fock_dim: usize,
}

impl<T: Real> DmMoments<T> {
    /// `Z*(c) = 2c₁`, the constellation-dependent correlation before channel
    /// scaling.
    pub fn z_star(&self) -> T {
        T::two() * self.c1
    }

    /// Correlation bound for transmittance `t` and excess noise `eps`
    /// (channel input, SNU).
    pub fn correlation(&self, t: T, eps: T) -> T {
        let t = t.max(T::zero());
        let penalty = (self.w * t * eps.max(T::zero()) * T::half()).sqrt();
        (T::two() * (t.sqrt() * self.c1 - penalty)).max(T::zero())
    }
}

/// Smallest Fock dimension whose Poisson tail beyond it is negligible for
/// every amplitude up to `|α|² = x`.
fn fock_dimension(x: f64) -> usize {
    let mut pmf = (-x).exp();
    let mut n = 0usize;
    loop {
        n += 1;
        pmf *= x / n as f64;
        if n as f64 > x && pmf < 1e-22 {
            break;
        }
        if n >= 600 {
            break;
        }
    }
    n + 4
}

fn coherent_vector<T: Real>(alpha: Complex<T>, dim: usize) -> Vec<Complex<T>> {
    let mut v = Vec::with_capacity(dim);
    let mut c = Complex::new((-alpha.norm_sqr() * T::half()).exp(), T::zero());
    v.push(c);
    for n in 1..dim {
        c = c * alpha / T::c(n as f64).sqrt();
        v.push(c);
    }
    v
}

/// Lowering operator `a` in a Fock basis of dimension `dim` (real, superdiagonal).
fn lowering<T: Real>(dim: usize) -> Mat<T> {
    Mat::from_fn(dim, dim, |i, j| if j == i + 1 { T::c(j as f64).sqrt() } else { T::zero() })
}

fn block_diag<T: Real>(m: &Mat<T>) -> Mat<T> {
    let n = m.rows();
    let mut out = Mat::zeros(2 * n, 2 * n);
    out.set_block(0, 0, m);
    out.set_block(n, n, m);
    out
}

/// Matrix square root and pseudo-inverse square root on the retained support.
fn sqrt_pair<T: Real>(eig: &SymmetricEigen<T>) -> (Mat<T>, Mat<T>) {
    let lmax = eig.values.last().copied().unwrap_or(T::zero());
    let floor = lmax * T::epsilon() * T::c(512.0);
    let sq = eig.map(|l| if l > floor { l.sqrt() } else { T::zero() });
    let isq = eig.map(|l| if l > floor { T::one() / l.sqrt() } else { T::zero() });
    (sq, isq)
}

/// Computes `c₁`, `w` for the given constellation.
///
/// The pseudo-inverse square root of `τ` spans many decades, so the evaluation
/// always runs in double precision whatever `T` is.
pub fn dm_moments<T: Real>(c: &Constellation<T>) -> Result<DmMoments<T>, KeyRateError> {
    let active: Vec<(Complex<f64>, f64)> = c
        .points()
        .iter()
        .zip(c.probs())
        .filter(|(_, &p)| p > T::zero())
        .map(|(a, p)| (Complex::new(a.re.to_f64_lossy(), a.im.to_f64_lossy()), p.to_f64_lossy()))
        .collect();
    if active.len() < 2 {
        return Err(KeyRateError::DegenerateConstellation);
    }
    let (c1, w, dim) = moments(&active);
    Ok(DmMoments { c1: T::c(c1), w: T::c(w), mean_photon: c.mean_photon_number(), fock_dim: dim })
}

fn moments<T: Real>(active: &[(Complex<T>, T)]) -> (T, T, usize) {
    let x_max = active.iter().map(|(a, _)| a.norm_sqr().to_f64_lossy()).fold(0.0, f64::max);
    let dim = fock_dimension(x_max);
    let vecs: Vec<Vec<Complex<T>>> = active.iter().map(|(a, _)| coherent_vector(*a, dim)).collect();

    let mut tau_re = Mat::zeros(dim, dim);
    let mut tau_im = Mat::zeros(dim, dim);
    for ((_, p), v) in active.iter().zip(&vecs) {
        for i in 0..dim {
            for j in 0..dim {
                let z = v[i] * v[j].conj() * *p;
                tau_re[(i, j)] = tau_re[(i, j)] + z.re;
                tau_im[(i, j)] = tau_im[(i, j)] + z.im;
            }
        }
    }
    // Conjugation-symmetric alphabets give a real τ; otherwise work with the
    // real 2n×2n embedding [[Re, −Im], [Im, Re]] of the Hermitian matrix.
    let complex = tau_im.max_abs() > tau_re.max_abs() * T::epsilon() * T::c(64.0);
    let a = lowering::<T>(dim);
    let (op_tau, op_a) = if complex {
        let mut emb = Mat::zeros(2 * dim, 2 * dim);
        emb.set_block(0, 0, &tau_re);
        emb.set_block(dim, dim, &tau_re);
        emb.set_block(0, dim, &tau_im.scale(-T::one()));
        emb.set_block(dim, 0, &tau_im);
        (emb, block_diag(&a))
    } else {
        (tau_re, a)
    };
    let eig = op_tau.symmetric_eigen();
    let (sq, isq) = sqrt_pair(&eig);
    let a_dag = op_a.transpose();

    let trace = (&(&(&sq * &op_a) * &sq) * &a_dag).trace();
    let c1 = if complex { trace * T::half() } else { trace };

    let x_op = &(&sq * &op_a) * &isq;
    let apply = |re: &[T], im: &[T]| -> (Vec<T>, Vec<T>) {
        if complex {
            let mut stacked = re.to_vec();
            stacked.extend_from_slice(im);
            let out = x_op.mul_vec(&stacked);
            (out[..dim].to_vec(), out[dim..].to_vec())
        } else {
            (x_op.mul_vec(re), x_op.mul_vec(im))
        }
    };
    let mut w = T::zero();
    for ((_, p), v) in active.iter().zip(&vecs) {
        let re: Vec<T> = v.iter().map(|z| z.re).collect();
        let im: Vec<T> = v.iter().map(|z| z.im).collect();
        let (fr, fi) = apply(&re, &im);
        let norm2: T = fr.iter().chain(&fi).map(|&x| x * x).sum();
        let dot = |a: &[T], b: &[T]| -> T { a.iter().zip(b).map(|(&x, &y)| x * y).sum() };
        // ⟨α|φ⟩ with ⟨α| = (re − i im)ᵀ
        let b_re = dot(&re, &fr) + dot(&im, &fi);
        let b_im = dot(&re, &fi) - dot(&im, &fr);
        w = w + *p * (norm2 - (b_re * b_re + b_im * b_im));
    }
    (c1, w.max(T::zero()), dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Reference values from an independent dense-Fock evaluation (numpy
    // `eigh`, 50 levels, eigenvalue floor 1e-15).
    #[test]
    fn matches_reference_moments() {
        let cases = [
            (64usize, 0.129, 1.03, 0.8833025652383568, 2.8595885e-6),
            (16, 0.215, 0.87, 0.7897180368882661, 1.1704943e-3),
            (32, 0.162, 0.93, 0.8253408884956717, 7.0562434e-5),
        ];
        for (m, nu, vm, c1, w) in cases {
            let c = Constellation::<f64>::build(m, nu, vm).unwrap();
            let mo = dm_moments(&c).unwrap();
            assert_abs_diff_eq!(mo.c1, c1, epsilon = 1e-9);
            assert_abs_diff_eq!(mo.w, w, epsilon = 1e-9 + 1e-4 * w);
        }
    }

    #[test]
    fn c1_below_gaussian_value() {
        for (m, nu) in [(16, 0.215), (32, 0.162), (64, 0.129)] {
            let c = Constellation::<f64>::build(m, nu, 1.0).unwrap();
            let mo = dm_moments(&c).unwrap();
            let v = 2.0;
            assert!(mo.z_star() > 0.0);
            assert!(mo.z_star() <= (v * v - 1.0f64).sqrt() + 1e-12);
        }
    }

    #[test]
    fn rotation_does_not_change_moments() {
        let c = Constellation::<f64>::build(16, 0.215, 0.87).unwrap();
        let base = dm_moments(&c).unwrap();
        let rot = dm_moments(&c.rotated(0.37)).unwrap();
        assert_abs_diff_eq!(base.c1, rot.c1, epsilon = 1e-10);
        assert_abs_diff_eq!(base.w, rot.w, epsilon = 1e-8);
    }

    #[test]
    fn noiseless_correlation_scales_with_sqrt_t() {
        let c = Constellation::<f64>::build(64, 0.129, 1.0).unwrap();
        let mo = dm_moments(&c).unwrap();
        assert_abs_diff_eq!(mo.correlation(0.25, 0.0), 0.5 * mo.z_star(), epsilon = 1e-14);
        assert!(mo.correlation(0.25, 0.05) < mo.correlation(0.25, 0.0));
    }

    #[test]
    fn f32_moments_are_close() {
        let c = Constellation::<f32>::build(16, 0.215, 0.87).unwrap();
        let mo = dm_moments(&c).unwrap();
        assert_abs_diff_eq!(f64::from(mo.c1), 0.78971803, epsilon = 1e-3);
    }
}
