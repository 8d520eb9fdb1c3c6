use std::fs;
use std::path::Path;

use cvqkd_core::estimation::{worst_case, EstimatedParams};
use cvqkd_core::experiments::{self, ContourGrid};
use cvqkd_core::keyrate::{asymptotic_rate, finite_rate, gg02_rate};
use cvqkd_core::pipeline::{run_simulation_observed, StageSeeds};
use cvqkd_core::{Real, Waveform};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Precision, RunConfig};
use crate::output::{num, opt, write_json, write_reports, write_rows};
use crate::CliError;

#[derive(Debug, Default)]
pub struct RunResult {
    pub files: Vec<String>,
    pub stage_seeds: Option<StageSeeds>,
}

impl RunResult {
    fn add(&mut self, name: &str) {
        self.files.push(name.to_string());
    }
}

pub fn simulate(cfg: &RunConfig, dir: &Path) -> Result<RunResult, CliError> {
    match cfg.precision {
        Precision::F64 => simulate_as::<f64>(cfg, dir),
        Precision::F32 => simulate_as::<f32>(cfg, dir),
    }
}

fn simulate_as<T: Real>(cfg: &RunConfig, dir: &Path) -> Result<RunResult, CliError> {
    let sim = cfg.simulation();
    let mut res = RunResult { stage_seeds: Some(StageSeeds::derive(sim.seed)), ..Default::default() };
    let constellation = sim.constellation.build::<T>()?;
    fs::write(dir.join("constellation.txt"), constellation.to_table())?;
    res.add("constellation.txt");

    let save = cfg.output.waveforms;
    let mut waveform_files = Vec::new();
    let mut observe = |w: &Waveform<T>| -> Result<(), cvqkd_core::Error> {
        if save {
            let name = format!("{}.cvwf", w.origin);
            w.save(dir.join(&name))?;
            waveform_files.push(name);
        }
        Ok(())
    };
    let out = run_simulation_observed::<T>(&sim, &mut observe)?;
    res.files.extend(waveform_files);

    out.recovered
        .save(dir.join("recovered_symbols.csv"), dir.join("recovered_symbols.meta"))
        .map_err(|e| CliError::Output(e.to_string()))?;
    res.add("recovered_symbols.csv");
    res.add("recovered_symbols.meta");

    write_reports(&dir.join("report.csv"), &[&out.report])?;
    res.add("report.csv");

    let e = &out.estimate;
    let f = |x: T| x.to_f64_lossy();
    let fo = |x: Option<T>| x.map(|v| v.to_f64_lossy());
    let summary = json!({
        "truth": {
            "transmittance": out.diagnostics.transmittance_truth,
            "excess_noise": sim.channel.excess_noise,
            "v_el": sim.detector.v_el,
            "efficiency": sim.detector.efficiency,
        },
        "estimate": {
            "t_hat": f(e.t_hat),
            "eps_hat": f(e.eps_hat),
            "eps_hat_raw": f(e.eps_hat_raw),
            "v_el_hat": f(e.v_el_hat),
            "v_mod_meas": f(e.v_mod_meas),
            "sigma2": f(e.sigma2),
            "block_n": e.block_n,
            "t_low": fo(e.t_low),
            "eps_up": fo(e.eps_up),
            "z_pe": fo(e.z_pe),
            "eps_pe": e.eps_pe,
        },
        "rates": {
            "i_ab": f(out.report.i_ab),
            "chi_e": f(out.report.chi_e),
            "r_inf": f(out.report.r_inf),
            "r_inf_raw": f(out.report.r_inf_raw),
            "r_finite": fo(out.report.r_finite),
            "skr_inf_bps": out.report.skr_inf_bps(),
            "skr_finite_bps": out.report.skr_finite_bps(),
        },
        "diagnostics": out.diagnostics,
    });
    write_json(&dir.join("simulation.json"), &summary)?;
    res.add("simulation.json");
    Ok(res)
}

pub fn keyrate(cfg: &RunConfig, dir: &Path) -> Result<RunResult, CliError> {
    let c = cfg.constellation.build::<f64>()?;
    let link = cfg.link()?;
    let a = &cfg.analysis;
    let n = cfg.keyrate.block_n;
    let model = EstimatedParams::from_model(
        link.transmittance,
        link.excess_noise,
        link.detector.v_el,
        c.v_mod(),
        link.detector.efficiency,
        n,
        a.z_pe,
        a.eps_pe,
    );
    let wc = worst_case(&model, a.z_pe, a.eps_pe)?;
    let distance = cfg.keyrate.transmittance.is_none().then_some(cfg.channel.distance_km);
    let ctx = |r: cvqkd_core::KeyRateReport<f64>| r.with_context(Some(cfg.tx.symbol_rate), distance, Some(n));
    let dm = finite_rate(&ctx(asymptotic_rate(&c, &link, a.beta)?), &wc)?;
    let mut reports = vec![dm];
    if cfg.keyrate.gaussian_reference {
        reports.push(finite_rate(&ctx(gg02_rate(c.v_mod(), &link, a.beta)?), &wc)?);
    }
    let mut res = RunResult::default();
    fs::write(dir.join("constellation.txt"), c.to_table())?;
    res.add("constellation.txt");
    write_reports(&dir.join("keyrate.csv"), &reports.iter().collect::<Vec<_>>())?;
    res.add("keyrate.csv");
    Ok(res)
}

pub fn sweep(cfg: &RunConfig, dir: &Path) -> Result<RunResult, CliError> {
    let s = &cfg.sweep;
    let points = s
        .distances()?
        .into_par_iter()
        .map(|d| experiments::sweep_point(d, s))
        .collect::<Result<Vec<_>, _>>()?;
    let header = ["distance_km", "gg02_bps", "m16_bps", "m32_bps", "m64_bps", "nu16", "nu32", "nu64"];
    let rows = points.iter().map(|p| {
        [p.distance_km, p.gg02, p.m16, p.m32, p.m64, p.nu16, p.nu32, p.nu64].map(num)
    });
    write_rows(&dir.join("sweep.csv"), &header, rows)?;
    Ok(RunResult { files: vec!["sweep.csv".into()], stage_seeds: None })
}

pub fn contour(cfg: &RunConfig, dir: &Path) -> Result<RunResult, CliError> {
    let c = &cfg.contour;
    c.validate()?;
    let loss_db = c.loss_axis();
    let rates = loss_db
        .par_iter()
        .map(|&l| experiments::contour_row(c, l))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = ContourGrid { loss_db, eps: c.eps_axis(), rates };
    let points = experiments::experimental_points(c, &grid)?;

    let rows = grid.cells().map(|cell| [cell.loss_db, cell.eps, cell.rate].map(num));
    write_rows(&dir.join("contour.csv"), &["loss_db", "eps_SNU", "R_gg02_bits_per_symbol"], rows)?;
    let header = [
        "M",
        "d_km",
        "loss_db",
        "eps_SNU",
        "surface_rate",
        "grid_rate",
        "level_below",
        "level_above",
        "bracketed",
        "R_inf_published",
    ];
    let rows = points.iter().map(|p| {
        vec![
            p.m.to_string(),
            num(p.distance_km),
            num(p.loss_db),
            num(p.eps),
            num(p.surface_rate),
            opt(p.grid_rate),
            opt(p.level_below),
            opt(p.level_above),
            p.bracketed(c).to_string(),
            num(p.published_r_inf),
        ]
    });
    write_rows(&dir.join("contour_points.csv"), &header, rows)?;
    Ok(RunResult { files: vec!["contour.csv".into(), "contour_points.csv".into()], stage_seeds: None })
}

pub fn table1(_cfg: &RunConfig, dir: &Path) -> Result<RunResult, CliError> {
    let rows = experiments::table1()?;
    let header = [
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
        "R_inf_published",
        "R_finite_published",
        "SKR_finite_published",
        "R_inf_rel_err",
        "R_finite_rel_err",
        "SKR_finite_rel_err",
    ];
    let records = rows.iter().map(|c| {
        let r = &c.row;
        let mut v = vec![r.m.to_string()];
        v.extend(
            [
                r.nu,
                r.symbol_rate_gbd,
                r.distance_km,
                r.v_mod,
                r.t,
                r.v_el,
                r.eps,
                c.r_inf,
                c.r_finite,
                c.skr_finite_gbps,
                r.r_inf,
                r.r_finite,
                r.skr_finite_gbps,
                c.rel_err_r_inf,
                c.rel_err_r_finite,
                c.rel_err_skr_finite,
            ]
            .map(num),
        );
        v
    });
    write_rows(&dir.join("table1.csv"), &header, records)?;
    Ok(RunResult { files: vec!["table1.csv".into()], stage_seeds: None })
}
