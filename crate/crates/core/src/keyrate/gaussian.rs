//! Gaussian-state entropies in shot-noise units (vacuum quadrature variance 1).

use crate::linalg::Mat;
use crate::Real;

use super::KeyRateError;

/// Tolerance below 1 accepted for symplectic eigenvalues.
pub fn bona_fide_tolerance<T: Real>() -> T {
    T::c(1e-9).max(T::epsilon() * T::c(1e3))
}

/// `G(x) = (x+1) log₂(x+1) − x log₂ x`, the entropy of a thermal state with
/// mean photon number `x`.
pub fn g_entropy<T: Real>(x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    let one = T::one();
    (x + one) * (x + one).log2() - x * x.log2()
}

/// Symplectic form `⊕ [[0, 1], [-1, 0]]` for `modes` modes.
pub fn symplectic_form<T: Real>(modes: usize) -> Mat<T> {
    let mut om = Mat::zeros(2 * modes, 2 * modes);
    for m in 0..modes {
        om[(2 * m, 2 * m + 1)] = T::one();
        om[(2 * m + 1, 2 * m)] = -T::one();
    }
    om
}

/// Symplectic eigenvalues (ascending), i.e. the moduli of the eigenvalues of
/// `iΩΓ`.
///
/// Computed as the square roots of the doubly degenerate eigenvalues of
/// `AᵀA` with `A = Γ^{1/2} Ω Γ^{1/2}`, which is similar to `ΩΓ`.
pub fn symplectic_eigenvalues<T: Real>(gamma: &Mat<T>) -> Result<Vec<T>, KeyRateError> {
    let n = gamma.rows();
    if !gamma.is_square() || n % 2 != 0 {
        return Err(KeyRateError::Numerical(format!("covariance matrix has shape {}x{}", n, gamma.cols())));
    }
    let eig = gamma.symmetric_eigen();
    let min_eig = eig.values[0];
    if min_eig <= T::zero() {
        return Err(KeyRateError::NotBonaFide { min_symplectic: min_eig.to_f64_lossy() });
    }
    let sqrt_g = eig.map(|x| x.sqrt());
    let om = symplectic_form::<T>(n / 2);
    let a = &(&sqrt_g * &om) * &sqrt_g;
    let ata = &a.transpose() * &a;
    let vals = ata.symmetric_eigen().values;
    Ok(vals
        .chunks(2)
        .map(|pair| ((pair[0] + pair[1]) * T::half()).max(T::zero()).sqrt())
        .collect())
}

/// Von Neumann entropy (bits) of a Gaussian state with covariance `gamma`.
pub fn entropy<T: Real>(gamma: &Mat<T>) -> Result<T, KeyRateError> {
    let tol = bona_fide_tolerance::<T>();
    let mut s = T::zero();
    for nu in symplectic_eigenvalues(gamma)? {
        if nu < T::one() - tol {
            return Err(KeyRateError::NotBonaFide { min_symplectic: nu.to_f64_lossy() });
        }
        s = s + g_entropy((nu - T::one()) * T::half());
    }
    Ok(s)
}

fn mode_indices(modes: &[usize]) -> Vec<usize> {
    modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect()
}

/// Covariance of the remaining modes after a heterodyne measurement of
/// `measured` (shot-noise units, so the heterodyne seed is `I`).
pub fn heterodyne_conditional<T: Real>(gamma: &Mat<T>, measured: usize) -> Result<Mat<T>, KeyRateError> {
    let modes = gamma.rows() / 2;
    let keep: Vec<usize> = (0..modes).filter(|&m| m != measured).collect();
    let ki = mode_indices(&keep);
    let mi = mode_indices(&[measured]);
    let g_x = gamma.select(&ki, &ki);
    let g_b = gamma.select(&mi, &mi);
    let c = gamma.select(&ki, &mi);
    let inv = (&g_b + &Mat::identity(2))
        .inverse()
        .ok_or_else(|| KeyRateError::Numerical("singular heterodyne block".into()))?;
    Ok((&g_x - &(&(&c * &inv) * &c.transpose())).symmetrize())
}

/// Applies a beamsplitter of intensity transmissivity `eta` between modes
/// `i` (transmitted port) and `j`.
pub fn beamsplitter<T: Real>(gamma: &Mat<T>, i: usize, j: usize, eta: T) -> Mat<T> {
    let n = gamma.rows();
    let t = eta.sqrt();
    let r = (T::one() - eta).max(T::zero()).sqrt();
    let mut s = Mat::identity(n);
    for q in 0..2 {
        s[(2 * i + q, 2 * i + q)] = t;
        s[(2 * i + q, 2 * j + q)] = r;
        s[(2 * j + q, 2 * i + q)] = -r;
        s[(2 * j + q, 2 * j + q)] = t;
    }
    (&(&s * gamma) * &s.transpose()).symmetrize()
}

/// Two-mode block `[[v I, z σ_z], [z σ_z, w I]]`.
pub fn two_mode<T: Real>(v: T, z: T, w: T) -> Mat<T> {
    let mut g = Mat::zeros(4, 4);
    g[(0, 0)] = v;
    g[(1, 1)] = v;
    g[(2, 2)] = w;
    g[(3, 3)] = w;
    g[(0, 2)] = z;
    g[(2, 0)] = z;
    g[(1, 3)] = -z;
    g[(3, 1)] = -z;
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn g_of_zero_is_zero() {
        assert_eq!(g_entropy(0.0f64), 0.0);
        assert_abs_diff_eq!(g_entropy(1.0f64), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn tmsv_is_pure() {
        let v = 3.0f64;
        let g = two_mode(v, (v * v - 1.0).sqrt(), v);
        let nus = symplectic_eigenvalues(&g).unwrap();
        for nu in nus {
            assert_abs_diff_eq!(nu, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn thermal_state_entropy() {
        // Single-mode thermal state with mean photon number 0.5: V = 2.
        let g = Mat::from_diag(&[2.0f64, 2.0]);
        assert_abs_diff_eq!(entropy(&g).unwrap(), g_entropy(0.5), epsilon = 1e-12);
    }

    #[test]
    fn unphysical_state_is_rejected() {
        let g = two_mode(2.0f64, 2.0, 2.0);
        assert!(entropy(&g).is_err());
    }

    #[test]
    fn heterodyne_on_tmsv_leaves_coherent_state() {
        let v = 2.5f64;
        let g = two_mode(v, (v * v - 1.0).sqrt(), v);
        let cond = heterodyne_conditional(&g, 1).unwrap();
        assert_abs_diff_eq!(cond[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cond[(1, 1)], 1.0, epsilon = 1e-12);
    }
}
