//! Reference datasets and analytic experiments: the published results table,
//! key rate versus distance, and the loss/noise map of the Gaussian protocol.

use serde::{Deserialize, Serialize};

use crate::channel::fiber_transmittance;
use crate::constellation::{optimize_nu, Constellation, ConstellationError, NuSearch};
use crate::estimation::EstimatedParams;
use crate::keyrate::{self, KeyRateReport, LinkParams};
use crate::Error;

pub const BETA: f64 = 0.95;
pub const DETECTOR_EFFICIENCY: f64 = 0.44;
pub const TABLE1_BLOCK_N: u64 = 16_000_000;
pub const TABLE1_Z_PE: f64 = 6.5;
pub const TABLE1_EPS_PE: f64 = 1e-10;
pub const FIBER_LOSS_DB_PER_KM: f64 = 0.2;

/// One row of the published results table. `v_el` and `eps` are in SNU.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub m: usize,
    pub nu: f64,
    /// GBd.
    pub symbol_rate_gbd: f64,
    pub distance_km: f64,
    pub v_mod: f64,
    pub t: f64,
    pub v_el: f64,
    pub eps: f64,
    /// Published bits/symbol.
    pub r_inf: f64,
    pub r_finite: f64,
    /// Published Gb/s.
    pub skr_finite_gbps: f64,
}

pub const TABLE1: [Table1Row; 4] = [
    Table1Row {
        m: 16,
        nu: 0.215,
        symbol_rate_gbd: 10.0,
        distance_km: 10.0,
        v_mod: 0.87,
        t: 0.569,
        v_el: 0.0650,
        eps: 0.02622,
        r_inf: 0.048,
        r_finite: 0.035,
        skr_finite_gbps: 0.351,
    },
    Table1Row {
        m: 16,
        nu: 0.215,
        symbol_rate_gbd: 8.0,
        distance_km: 5.0,
        v_mod: 1.01,
        t: 0.618,
        v_el: 0.0495,
        eps: 0.05187,
        r_inf: 0.035,
        r_finite: 0.021,
        skr_finite_gbps: 0.171,
    },
    Table1Row {
        m: 32,
        nu: 0.162,
        symbol_rate_gbd: 10.0,
        distance_km: 5.0,
        v_mod: 0.93,
        t: 0.702,
        v_el: 0.0676,
        eps: 0.07183,
        r_inf: 0.033,
        r_finite: 0.019,
        skr_finite_gbps: 0.194,
    },
    Table1Row {
        m: 64,
        nu: 0.129,
        symbol_rate_gbd: 8.0,
        distance_km: 5.0,
        v_mod: 1.03,
        t: 0.733,
        v_el: 0.0503,
        eps: 0.0159,
        r_inf: 0.115,
        r_finite: 0.093,
        skr_finite_gbps: 0.746,
    },
];

impl Table1Row {
    pub fn constellation(&self) -> Result<Constellation<f64>, Error> {
        Ok(Constellation::build(self.m, self.nu, self.v_mod)?)
    }

    pub fn link(&self) -> LinkParams<f64> {
        LinkParams::new(self.t, self.eps, DETECTOR_EFFICIENCY, self.v_el)
    }
}

/// Asymptotic and finite-size report for a row's input columns.
pub fn evaluate_row(row: &Table1Row, beta: f64, block_n: u64, z_pe: f64, eps_pe: f64) -> Result<KeyRateReport<f64>, Error> {
    let c = row.constellation()?;
    let rep = keyrate::asymptotic_rate(&c, &row.link(), beta)?.with_context(
        Some(row.symbol_rate_gbd * 1e9),
        Some(row.distance_km),
        Some(block_n),
    );
    let model = EstimatedParams::from_model(row.t, row.eps, row.v_el, row.v_mod, DETECTOR_EFFICIENCY, block_n, z_pe, eps_pe);
    let wc = crate::estimation::worst_case(&model, z_pe, eps_pe)?;
    Ok(keyrate::finite_rate(&rep, &wc)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table1Comparison {
    pub row: Table1Row,
    pub r_inf: f64,
    pub r_finite: f64,
    pub skr_finite_gbps: f64,
    pub rel_err_r_inf: f64,
    pub rel_err_r_finite: f64,
    pub rel_err_skr_finite: f64,
}

fn rel_err(computed: f64, published: f64) -> f64 {
    (computed - published) / published
}

/// Recomputes every row from its inputs with the table's analysis settings.
pub fn table1() -> Result<Vec<Table1Comparison>, Error> {
    TABLE1
        .iter()
        .map(|row| {
            let rep = evaluate_row(row, BETA, TABLE1_BLOCK_N, TABLE1_Z_PE, TABLE1_EPS_PE)?;
            let r_finite = rep.r_finite.unwrap_or(0.0);
            let skr = row.symbol_rate_gbd * r_finite;
            Ok(Table1Comparison {
                row: *row,
                r_inf: rep.r_inf,
                r_finite,
                skr_finite_gbps: skr,
                rel_err_r_inf: rel_err(rep.r_inf, row.r_inf),
                rel_err_r_finite: rel_err(r_finite, row.r_finite),
                rel_err_skr_finite: rel_err(skr, row.skr_finite_gbps),
            })
        })
        .collect()
}

/// Average operating parameters of one modulation format.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanParams {
    pub m: usize,
    pub v_mod: f64,
    pub eps: f64,
    pub v_el: f64,
    /// Fixed coupling efficiency multiplying the fiber transmittance.
    pub coupling: f64,
    /// Shaping used when the optimisation finds no positive rate.
    pub nu_fallback: f64,
}

pub const MEAN_PARAMS: [MeanParams; 3] = [
    MeanParams { m: 16, v_mod: 0.87, eps: 0.035, v_el: 0.061, coupling: 0.845, nu_fallback: 0.215 },
    MeanParams { m: 32, v_mod: 0.93, eps: 0.071, v_el: 0.067, coupling: 0.884, nu_fallback: 0.162 },
    MeanParams { m: 64, v_mod: 1.02, eps: 0.032, v_el: 0.054, coupling: 0.923, nu_fallback: 0.129 },
];

impl MeanParams {
    pub fn for_order(m: usize) -> Option<Self> {
        MEAN_PARAMS.iter().copied().find(|p| p.m == m)
    }

    pub fn link(&self, distance_km: f64, loss_db_per_km: f64) -> Result<LinkParams<f64>, Error> {
        let t = fiber_transmittance(distance_km, loss_db_per_km, self.coupling)?;
        Ok(LinkParams::new(t, self.eps, DETECTOR_EFFICIENCY, self.v_el))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub distance_start_km: f64,
    pub distance_stop_km: f64,
    pub distance_step_km: f64,
    pub loss_db_per_km: f64,
    /// Symbol rate converting bits/symbol to bits/s.
    pub symbol_rate: f64,
    pub beta: f64,
    /// Optimise ν at every distance; otherwise use the fallback value.
    pub optimize_nu: bool,
    pub nu_search: NuSearch,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            distance_start_km: 0.0,
            distance_stop_km: 20.0,
            distance_step_km: 1.0,
            loss_db_per_km: FIBER_LOSS_DB_PER_KM,
            symbol_rate: 10e9,
            beta: BETA,
            optimize_nu: true,
            nu_search: NuSearch::default(),
        }
    }
}

impl SweepConfig {
    pub fn distances(&self) -> Result<Vec<f64>, Error> {
        let (a, b, s) = (self.distance_start_km, self.distance_stop_km, self.distance_step_km);
        if !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= a && s > 0.0) {
            return Err(Error::Config(format!("invalid distance grid {a}..{b} step {s}")));
        }
        let n = ((b - a) / s + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| a + s * i as f64).collect())
    }
}

/// Rates at one distance, in bits/s. The Gaussian reference uses the
/// 64-QAM mean parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub distance_km: f64,
    pub gg02: f64,
    pub m16: f64,
    pub m32: f64,
    pub m64: f64,
    pub nu16: f64,
    pub nu32: f64,
    pub nu64: f64,
}

/// Best rate (bits/symbol) and the shaping achieving it.
pub fn dm_rate_at(p: &MeanParams, distance_km: f64, cfg: &SweepConfig) -> Result<(f64, f64), Error> {
    let link = p.link(distance_km, cfg.loss_db_per_km)?;
    let nu = if cfg.optimize_nu {
        match optimize_nu(p.m, p.v_mod, &link, cfg.beta, &cfg.nu_search) {
            Ok(nu) => nu,
            Err(ConstellationError::NoPositiveRate { .. }) => p.nu_fallback,
            Err(e) => return Err(e.into()),
        }
    } else {
        p.nu_fallback
    };
    let c = Constellation::build(p.m, nu, p.v_mod)?;
    Ok((keyrate::asymptotic_rate(&c, &link, cfg.beta)?.r_inf, nu))
}

pub fn gg02_rate_at(p: &MeanParams, distance_km: f64, cfg: &SweepConfig) -> Result<f64, Error> {
    let link = p.link(distance_km, cfg.loss_db_per_km)?;
    Ok(keyrate::gg02_rate(p.v_mod, &link, cfg.beta)?.r_inf)
}

pub fn sweep_point(distance_km: f64, cfg: &SweepConfig) -> Result<SweepPoint, Error> {
    let [p16, p32, p64] = MEAN_PARAMS;
    let (r16, nu16) = dm_rate_at(&p16, distance_km, cfg)?;
    let (r32, nu32) = dm_rate_at(&p32, distance_km, cfg)?;
    let (r64, nu64) = dm_rate_at(&p64, distance_km, cfg)?;
    let s = cfg.symbol_rate;
    Ok(SweepPoint {
        distance_km,
        gg02: s * gg02_rate_at(&p64, distance_km, cfg)?,
        m16: s * r16,
        m32: s * r32,
        m64: s * r64,
        nu16,
        nu32,
        nu64,
    })
}

pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepPoint>, Error> {
    cfg.distances()?.into_iter().map(|d| sweep_point(d, cfg)).collect()
}

/// Asymptotic 64-QAM key rate at 5 km with the mean parameters, in bits/s.
pub fn headline_5km(symbol_rate: f64) -> Result<f64, Error> {
    let cfg = SweepConfig { symbol_rate, ..SweepConfig::default() };
    let (r, _) = dm_rate_at(&MEAN_PARAMS[2], 5.0, &cfg)?;
    Ok(r * symbol_rate)
}

/// Asymptotic key rate of the 10 km measurement (first table row), in bits/s.
pub fn headline_10km() -> Result<f64, Error> {
    let row = &TABLE1[0];
    let rep = keyrate::asymptotic_rate(&row.constellation()?, &row.link(), BETA)?;
    Ok(rep.r_inf * row.symbol_rate_gbd * 1e9)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContourConfig {
    pub loss_min_db: f64,
    pub loss_max_db: f64,
    pub loss_steps: usize,
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_steps: usize,
    pub v_mod: f64,
    pub v_el: f64,
    pub efficiency: f64,
    pub beta: f64,
    /// Rate levels (bits/symbol) used to bracket the experimental points.
    pub levels: Vec<f64>,
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self {
            loss_min_db: 0.0,
            loss_max_db: 6.0,
            loss_steps: 61,
            eps_min: 0.0,
            eps_max: 0.1,
            eps_steps: 51,
            v_mod: 1.0,
            v_el: 0.055,
            efficiency: DETECTOR_EFFICIENCY,
            beta: BETA,
            levels: vec![0.01, 0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.15, 0.2],
        }
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

impl ContourConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let ok = self.loss_min_db >= 0.0
            && self.loss_max_db >= self.loss_min_db
            && self.eps_min >= 0.0
            && self.eps_max >= self.eps_min
            && self.loss_steps >= 2
            && self.eps_steps >= 2
            && self.v_mod > 0.0
            && self.v_el >= 0.0
            && self.efficiency > 0.0
            && self.efficiency <= 1.0
            && self.beta > 0.0
            && self.beta <= 1.0
            && self.loss_max_db.is_finite()
            && self.eps_max.is_finite();
        if !ok {
            return Err(Error::Config("invalid contour grid".into()));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("contour levels must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn loss_axis(&self) -> Vec<f64> {
        axis(self.loss_min_db, self.loss_max_db, self.loss_steps)
    }

    pub fn eps_axis(&self) -> Vec<f64> {
        axis(self.eps_min, self.eps_max, self.eps_steps)
    }

    /// GG02 rate in bits/symbol, clamped at zero.
    pub fn rate(&self, loss_db: f64, eps: f64) -> Result<f64, Error> {
        let link = LinkParams::new(10f64.powf(-loss_db / 10.0), eps, self.efficiency, self.v_el);
        Ok(keyrate::gg02_rate(self.v_mod, &link, self.beta)?.r_inf)
    }

    /// Index of the highest level not above `rate`, if any.
    pub fn level_index(&self, rate: f64) -> Option<usize> {
        self.levels.iter().rposition(|&l| rate >= l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContourCell {
    pub loss_db: f64,
    pub eps: f64,
    pub rate: f64,
}

/// Grid of the Gaussian-protocol rate, loss-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContourGrid {
    pub loss_db: Vec<f64>,
    pub eps: Vec<f64>,
    /// `rates[i][j]` at `loss_db[i]`, `eps[j]`.
    pub rates: Vec<Vec<f64>>,
}

impl ContourGrid {
    pub fn cells(&self) -> impl Iterator<Item = ContourCell> + '_ {
        self.loss_db.iter().enumerate().flat_map(move |(i, &l)| {
            self.eps.iter().enumerate().map(move |(j, &e)| ContourCell { loss_db: l, eps: e, rate: self.rates[i][j] })
        })
    }

    /// Bilinear interpolation inside the grid.
    pub fn interpolate(&self, loss_db: f64, eps: f64) -> Option<f64> {
        let locate = |ax: &[f64], x: f64| -> Option<(usize, f64)> {
            if x < ax[0] || x > ax[ax.len() - 1] {
                return None;
            }
            let i = ax.partition_point(|&a| a <= x).clamp(1, ax.len() - 1) - 1;
            Some((i, (x - ax[i]) / (ax[i + 1] - ax[i])))
        };
        let (i, u) = locate(&self.loss_db, loss_db)?;
        let (j, v) = locate(&self.eps, eps)?;
        let r = &self.rates;
        Some(
            (1.0 - u) * (1.0 - v) * r[i][j]
                + u * (1.0 - v) * r[i + 1][j]
                + (1.0 - u) * v * r[i][j + 1]
                + u * v * r[i + 1][j + 1],
        )
    }
}

/// Evaluates one loss row of the grid; rows are independent.
pub fn contour_row(cfg: &ContourConfig, loss_db: f64) -> Result<Vec<f64>, Error> {
    cfg.eps_axis().into_iter().map(|e| cfg.rate(loss_db, e)).collect()
}

pub fn contour(cfg: &ContourConfig) -> Result<ContourGrid, Error> {
    cfg.validate()?;
    let loss_db = cfg.loss_axis();
    let rates = loss_db.iter().map(|&l| contour_row(cfg, l)).collect::<Result<_, _>>()?;
    Ok(ContourGrid { loss_db, eps: cfg.eps_axis(), rates })
}

/// A measured operating point placed on the surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExperimentalPoint {
    pub m: usize,
    pub distance_km: f64,
    pub loss_db: f64,
    pub eps: f64,
    /// Surface value evaluated exactly at the point.
    pub surface_rate: f64,
    /// Surface value interpolated from the grid.
    pub grid_rate: Option<f64>,
    /// Contour levels enclosing `surface_rate`.
    pub level_below: Option<f64>,
    pub level_above: Option<f64>,
    /// Published asymptotic rate of the measurement.
    pub published_r_inf: f64,
}

impl ExperimentalPoint {
    /// The interpolated grid value falls between the same two levels as the
    /// exact surface value.
    pub fn bracketed(&self, cfg: &ContourConfig) -> bool {
        match self.grid_rate {
            Some(g) => cfg.level_index(g) == cfg.level_index(self.surface_rate),
            None => false,
        }
    }
}

pub fn experimental_points(cfg: &ContourConfig, grid: &ContourGrid) -> Result<Vec<ExperimentalPoint>, Error> {
    TABLE1
        .iter()
        .map(|row| {
            let loss_db = -10.0 * row.t.log10();
            let surface_rate = cfg.rate(loss_db, row.eps)?;
            let idx = cfg.level_index(surface_rate);
            Ok(ExperimentalPoint {
                m: row.m,
                distance_km: row.distance_km,
                loss_db,
                eps: row.eps,
                surface_rate,
                grid_rate: grid.interpolate(loss_db, row.eps),
                level_below: idx.map(|i| cfg.levels[i]),
                level_above: cfg.levels.get(idx.map_or(0, |i| i + 1)).copied(),
                published_r_inf: row.r_inf,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn table_transmittance_matches_fiber_model() {
        let t = fiber_transmittance(5.0, FIBER_LOSS_DB_PER_KM, MEAN_PARAMS[2].coupling).unwrap();
        assert_abs_diff_eq!(t, TABLE1[3].t, epsilon = 5e-4);
    }

    #[test]
    fn distance_grid_is_inclusive() {
        let d = SweepConfig::default().distances().unwrap();
        assert_eq!(d.len(), 21);
        assert_eq!(d[20], 20.0);
        let bad = SweepConfig { distance_step_km: 0.0, ..Default::default() };
        assert!(bad.distances().is_err());
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let cfg = ContourConfig { loss_steps: 5, eps_steps: 4, ..Default::default() };
        let g = contour(&cfg).unwrap();
        assert_abs_diff_eq!(g.interpolate(g.loss_db[2], g.eps[1]).unwrap(), g.rates[2][1], epsilon = 1e-12);
        assert!(g.interpolate(-1.0, 0.0).is_none());
        assert_eq!(g.cells().count(), 20);
    }

    #[test]
    fn level_index_brackets() {
        let cfg = ContourConfig::default();
        assert_eq!(cfg.level_index(0.005), None);
        assert_eq!(cfg.level_index(0.015), Some(0));
        assert_eq!(cfg.level_index(1.0), Some(cfg.levels.len() - 1));
    }
}
