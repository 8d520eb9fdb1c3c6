//! Collective-attack key rates `R = β I_AB − χ_E` for reverse reconciliation
//! with a trusted heterodyne receiver.
//!
//! Conventions (shot-noise units, vacuum quadrature variance 1):
//! - `V = V_M + 1` is Alice's entanglement-based variance, `V_M` the
//!   two-quadrature modulation variance.
//! - The channel has transmittance `T` and excess noise `ε` referred to its
//!   input, so Bob's mode has `V_B = T V_M + 1 + T ε` before detection.
//! - The receiver has efficiency `η` and electronic noise `v_el` per output
//!   arm, i.e. heterodyne input-referred noise `χ_het = (2 − η + 2 v_el)/η`.
//!   It is modelled as a beamsplitter mixing Bob's mode with one half of an
//!   EPR pair of variance `v_N = 1 + 2 v_el / (1 − η)` held by Bob.

mod dm_bound;
pub mod gaussian;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constellation::{Constellation, QamOrder};
use crate::estimation::EstimatedParams;
use crate::linalg::Mat;
use crate::Real;

pub use dm_bound::{dm_moments, DmMoments};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KeyRateError {
    #[error("parameter {name} out of range: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("covariance matrix is not a physical state (symplectic eigenvalue {min_symplectic})")]
    NotBonaFide { min_symplectic: f64 },
    #[error("constellation needs at least two points with non-zero probability")]
    DegenerateConstellation,
    #[error("worst-case parameters missing or invalid: {0}")]
    InvalidWorstCase(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn check<T: Real>(name: &'static str, value: T, ok: bool) -> Result<(), KeyRateError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(KeyRateError::InvalidParameter { name, value: value.to_f64_lossy() })
    }
}

/// Receiver parameters attributed to the legitimate parties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustedDetector<T> {
    pub efficiency: T,
    /// Electronic noise variance per output arm, SNU.
    pub v_el: T,
}

impl<T: Real> TrustedDetector<T> {
    pub fn ideal() -> Self {
        Self { efficiency: T::one(), v_el: T::zero() }
    }

    pub fn validate(&self) -> Result<(), KeyRateError> {
        check("efficiency", self.efficiency, self.efficiency > T::zero() && self.efficiency <= T::one())?;
        check("v_el", self.v_el, self.v_el >= T::zero())
    }
}

/// Channel and receiver seen by the key-rate engine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkParams<T> {
    pub transmittance: T,
    /// Excess noise referred to the channel input, SNU.
    pub excess_noise: T,
    pub detector: TrustedDetector<T>,
}

impl<T: Real> LinkParams<T> {
    pub fn new(transmittance: T, excess_noise: T, efficiency: T, v_el: T) -> Self {
        Self { transmittance, excess_noise, detector: TrustedDetector { efficiency, v_el } }
    }

    pub fn validate(&self) -> Result<(), KeyRateError> {
        check("transmittance", self.transmittance, self.transmittance >= T::zero() && self.transmittance <= T::one())?;
        check("excess_noise", self.excess_noise, self.excess_noise >= T::zero())?;
        self.detector.validate()
    }
}

/// Covariance matrix `Γ_AB` of the entanglement-based state after the channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceModel<T> {
    pub gamma_ab: Mat<T>,
    pub v: T,
    pub z: T,
    pub v_b: T,
    pub transmittance: T,
}

impl<T: Real> CovarianceModel<T> {
    pub fn symplectic_eigenvalues(&self) -> Result<Vec<T>, KeyRateError> {
        gaussian::symplectic_eigenvalues(&self.gamma_ab)
    }
}

/// Builds `Γ_AB` and checks it describes a physical state.
pub fn covariance_matrix<T: Real>(v_mod: T, transmittance: T, eps: T, z: T) -> Result<CovarianceModel<T>, KeyRateError> {
    check("v_mod", v_mod, v_mod >= T::zero())?;
    check("transmittance", transmittance, transmittance >= T::zero() && transmittance <= T::one())?;
    check("excess_noise", eps, eps >= T::zero())?;
    check("correlation", z, z >= T::zero())?;
    let v = v_mod + T::one();
    let v_b = transmittance * v_mod + T::one() + transmittance * eps;
    let tol = gaussian::bona_fide_tolerance::<T>();
    let z_max2 = transmittance * (v * v - T::one());
    if z * z > z_max2 * (T::one() + tol) + tol {
        return Err(KeyRateError::InvalidParameter { name: "correlation", value: z.to_f64_lossy() });
    }
    let gamma_ab = gaussian::two_mode(v, z, v_b);
    let model = CovarianceModel { gamma_ab, v, z, v_b, transmittance };
    let min = model.symplectic_eigenvalues()?.into_iter().fold(T::infinity(), T::min);
    if min < T::one() - tol {
        return Err(KeyRateError::NotBonaFide { min_symplectic: min.to_f64_lossy() });
    }
    Ok(model)
}

/// Correlation of a Gaussian-modulated (GG02) state, `√(T (V² − 1))`.
pub fn gaussian_correlation<T: Real>(v_mod: T, transmittance: T) -> T {
    let v = v_mod + T::one();
    (transmittance * (v * v - T::one())).max(T::zero()).sqrt()
}

/// Lower bound on the correlation term for a discrete alphabet.
pub fn dm_correlation_bound<T: Real>(c: &Constellation<T>, transmittance: T, eps: T) -> Result<T, KeyRateError> {
    check("transmittance", transmittance, transmittance >= T::zero() && transmittance <= T::one())?;
    Ok(dm_moments(c)?.correlation(transmittance, eps))
}

/// Heterodyne mutual information (bits per symbol, both quadratures).
pub fn mutual_information<T: Real>(v_mod: T, transmittance: T, eps: T, det: &TrustedDetector<T>) -> T {
    let eta = det.efficiency;
    let snr = eta * transmittance * v_mod / (T::two() + eta * transmittance * eps + T::two() * det.v_el);
    (T::one() + snr).log2()
}

/// Holevo information between Eve and Bob's heterodyne outcomes with the
/// detector noise purified by Bob.
pub fn holevo_bound<T: Real>(cm: &CovarianceModel<T>, det: &TrustedDetector<T>) -> Result<T, KeyRateError> {
    det.validate()?;
    let s_ab = gaussian::entropy(&cm.gamma_ab)?;
    let eta = det.efficiency;
    if eta >= T::one() && det.v_el == T::zero() {
        let cond = gaussian::heterodyne_conditional(&cm.gamma_ab, 1)?;
        return Ok((s_ab - gaussian::entropy(&cond)?).max(T::zero()));
    }
    // With η = 1 the electronic noise is re-expressed as trusted vacuum loss
    // 1/(1 + v_el) followed by a classical rescaling; the output statistics
    // are identical.
    let (eta, v_n) = if eta < T::one() {
        (eta, T::one() + T::two() * det.v_el / (T::one() - eta))
    } else {
        (T::one() / (T::one() + det.v_el), T::one())
    };
    // Mode order: A, B, F (thermal input), G (its purification).
    let mut g = Mat::zeros(8, 8);
    g.set_block(0, 0, &cm.gamma_ab);
    let epr = gaussian::two_mode(v_n, (v_n * v_n - T::one()).max(T::zero()).sqrt(), v_n);
    g.set_block(4, 4, &epr);
    let mixed = gaussian::beamsplitter(&g, 1, 2, eta);
    let cond = gaussian::heterodyne_conditional(&mixed, 1)?;
    Ok((s_ab - gaussian::entropy(&cond)?).max(T::zero()))
}

/// Which modulation a report refers to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Modulation<T> {
    Gaussian,
    Qam { order: QamOrder, nu: T },
}

impl<T: Real> Modulation<T> {
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            Self::Gaussian => None,
            Self::Qam { order, .. } => Some(order.cardinality()),
        }
    }
}

/// Key rates with every input echoed.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyRateReport<T> {
    pub modulation: Modulation<T>,
    pub moments: Option<DmMoments<T>>,
    pub v_mod: T,
    pub link: LinkParams<T>,
    pub beta: T,
    pub symbol_rate: Option<f64>,
    pub distance_km: Option<f64>,
    pub block_n: Option<u64>,
    pub correlation: T,
    pub i_ab: T,
    pub chi_e: T,
    /// `max(0, β I_AB − χ_E)`.
    pub r_inf: T,
    pub r_inf_raw: T,
    /// Worst-case link used for the finite-size rate.
    pub finite_link: Option<LinkParams<T>>,
    pub r_finite: Option<T>,
    pub r_finite_raw: Option<T>,
}

impl<T: Real> KeyRateReport<T> {
    pub fn with_context(mut self, symbol_rate: Option<f64>, distance_km: Option<f64>, block_n: Option<u64>) -> Self {
        self.symbol_rate = symbol_rate;
        self.distance_km = distance_km;
        self.block_n = block_n;
        self
    }

    /// `s × R_∞` in bits per second, when the symbol rate is known.
    pub fn skr_inf_bps(&self) -> Option<f64> {
        self.symbol_rate.map(|s| s * self.r_inf.to_f64_lossy())
    }

    pub fn skr_finite_bps(&self) -> Option<f64> {
        Some(self.symbol_rate? * self.r_finite?.to_f64_lossy())
    }

    /// Fields in [`REPORT_COLUMNS`] order; unknown context is left empty.
    pub fn table_row(&self) -> [String; 11] {
        let opt = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
        let (m, nu) = match self.modulation {
            Modulation::Gaussian => ("GG02".to_string(), String::new()),
            Modulation::Qam { order, nu } => (order.cardinality().to_string(), format!("{}", nu.to_f64_lossy())),
        };
        [
            m,
            nu,
            opt(self.symbol_rate.map(|s| s / 1e9)),
            opt(self.distance_km),
            format!("{}", self.v_mod.to_f64_lossy()),
            format!("{}", self.link.transmittance.to_f64_lossy()),
            format!("{}", self.link.detector.v_el.to_f64_lossy()),
            format!("{}", self.link.excess_noise.to_f64_lossy()),
            format!("{}", self.r_inf.to_f64_lossy()),
            opt(self.r_finite.map(|r| r.to_f64_lossy())),
            opt(self.skr_finite_bps().map(|s| s / 1e9)),
        ]
    }
}

/// CSV header of [`KeyRateReport::table_row`]; noise terms in SNU.
pub const REPORT_COLUMNS: [&str; 11] = [
    "M",
    "nu",
    "s_GBd",
    "d_km",
    "V_M_SNU",
    "T",
    "V_el_SNU",
    "eps_SNU",
    "R_inf_bits_per_symbol",
    "R_finite_bits_per_symbol",
    "SKR_finite_Gbps",
];

struct RateTerms<T> {
    z: T,
    i_ab: T,
    chi_e: T,
    raw: T,
}

fn rate_terms<T: Real>(v_mod: T, link: &LinkParams<T>, beta: T, z: T) -> Result<RateTerms<T>, KeyRateError> {
    let cm = covariance_matrix(v_mod, link.transmittance, link.excess_noise, z)?;
    let i_ab = mutual_information(v_mod, link.transmittance, link.excess_noise, &link.detector);
    let chi_e = holevo_bound(&cm, &link.detector)?;
    Ok(RateTerms { z, i_ab, chi_e, raw: beta * i_ab - chi_e })
}

fn report<T: Real>(
    modulation: Modulation<T>,
    moments: Option<DmMoments<T>>,
    v_mod: T,
    link: LinkParams<T>,
    beta: T,
    terms: RateTerms<T>,
) -> KeyRateReport<T> {
    if terms.raw < T::zero() {
        log::debug!("negative asymptotic rate {} clamped to zero", terms.raw);
    }
    KeyRateReport {
        modulation,
        moments,
        v_mod,
        link,
        beta,
        symbol_rate: None,
        distance_km: None,
        block_n: None,
        correlation: terms.z,
        i_ab: terms.i_ab,
        chi_e: terms.chi_e,
        r_inf: terms.raw.max(T::zero()),
        r_inf_raw: terms.raw,
        finite_link: None,
        r_finite: None,
        r_finite_raw: None,
    }
}

fn check_beta<T: Real>(beta: T) -> Result<(), KeyRateError> {
    check("beta", beta, beta >= T::zero() && beta <= T::one())
}

/// Asymptotic key rate of a discrete constellation.
pub fn asymptotic_rate<T: Real>(c: &Constellation<T>, link: &LinkParams<T>, beta: T) -> Result<KeyRateReport<T>, KeyRateError> {
    link.validate()?;
    check_beta(beta)?;
    let moments = dm_moments(c)?;
    let z = moments.correlation(link.transmittance, link.excess_noise);
    let terms = rate_terms(c.v_mod(), link, beta, z)?;
    let modulation = Modulation::Qam { order: c.order(), nu: c.nu() };
    Ok(report(modulation, Some(moments), c.v_mod(), *link, beta, terms))
}

/// Asymptotic key rate of Gaussian modulation (GG02).
pub fn gg02_rate<T: Real>(v_mod: T, link: &LinkParams<T>, beta: T) -> Result<KeyRateReport<T>, KeyRateError> {
    link.validate()?;
    check_beta(beta)?;
    let z = gaussian_correlation(v_mod, link.transmittance);
    let terms = rate_terms(v_mod, link, beta, z)?;
    Ok(report(Modulation::Gaussian, None, v_mod, *link, beta, terms))
}

/// Recomputes the rate at the worst-case link `(T_low, ε_up)` of `est`.
pub fn finite_rate<T: Real>(rep: &KeyRateReport<T>, est: &EstimatedParams<T>) -> Result<KeyRateReport<T>, KeyRateError> {
    let (t_low, eps_up) = match (est.t_low, est.eps_up) {
        (Some(t), Some(e)) => (t, e),
        _ => return Err(KeyRateError::InvalidWorstCase("worst-case bounds not populated".into())),
    };
    let link = LinkParams { transmittance: t_low, excess_noise: eps_up, detector: rep.link.detector };
    link.validate()?;
    let z = match &rep.moments {
        Some(m) => m.correlation(t_low, eps_up),
        None => gaussian_correlation(rep.v_mod, t_low),
    };
    let terms = rate_terms(rep.v_mod, &link, rep.beta, z)?;
    let mut out = rep.clone();
    out.finite_link = Some(link);
    out.r_finite = Some(terms.raw.max(T::zero()));
    out.r_finite_raw = Some(terms.raw);
    out.block_n = Some(est.block_n);
    Ok(out)
}
