//! The four experiment commands. Each returns a serializable result; the
//! binary decides where it goes.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ecc_market::model::{theta, SystemConfig};
use ecc_market::replicator::{analytic_ess, delay_stability_bound, ess_jacobian_eigen};
use ecc_market::solver::{integral_utility, Player};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{fmt_f64, write_table, write_trajectory};
use crate::run::{run, run_with, Summary};
use crate::{CliError, Scenario, Scheme, SweepParameter};

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Runs the scenario's scheme and writes `trajectory.csv` and
/// `summary.json` into `out`.
pub fn simulate(scenario: &Scenario, out: &Path) -> Result<Summary, CliError> {
    let outcome = run(scenario)?;
    std::fs::create_dir_all(out)?;
    write_trajectory(
        BufWriter::new(File::create(out.join(TRAJECTORY_CSV))?),
        &outcome.trajectory,
    )?;
    let summary = outcome.summary(&scenario.config, scenario.dt);
    serde_json::to_writer_pretty(BufWriter::new(File::create(out.join(SUMMARY_JSON))?), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssReport {
    /// Requests the equilibrium is evaluated under (the scenario's `r0`).
    pub requests: Vec<f64>,
    pub shares: Vec<f64>,
    pub common_utility: f64,
    pub theta: f64,
    /// `[re, im]` pairs.
    pub eigenvalues: Vec<[f64; 2]>,
    pub delay_bound: f64,
}

pub fn ess(scenario: &Scenario) -> EssReport {
    let cfg = &scenario.config;
    let r = &scenario.r0;
    let e = analytic_ess(cfg, r);
    EssReport {
        requests: r.requests().to_vec(),
        shares: e.shares.shares().to_vec(),
        common_utility: e.common_utility,
        theta: theta(cfg, r),
        eigenvalues: ess_jacobian_eigen(cfg, r).iter().map(|z| [z.re, z.im]).collect(),
        delay_bound: delay_stability_bound(cfg, r),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub delta: f64,
    pub olsec_convergence_time: Option<f64>,
    pub ssec_convergence_time: Option<f64>,
    pub olsec_ccp_utility: f64,
    pub ssec_ccp_utility: f64,
    pub olsec_ecp_utilities: Vec<f64>,
    pub ssec_ecp_utilities: Vec<f64>,
    pub olsec_sweep_converged: bool,
}

/// OLSEC against SSEC for every learning rate in `deltas`.
pub fn compare(scenario: &Scenario, deltas: &[f64]) -> Result<Vec<CompareRow>, CliError> {
    if deltas.is_empty() {
        return Err(CliError::invalid("deltas", "need at least one value"));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(CliError::invalid(
            "deltas",
            format!("{d} is not a positive learning rate"),
        ));
    }
    deltas
        .par_iter()
        .map(|&delta| {
            let cfg = SystemConfig {
                learning_rate: delta,
                ..scenario.config.clone()
            };
            let ol = run_with(scenario, &cfg, Scheme::Olsec)?;
            let ss = run_with(scenario, &cfg, Scheme::Ssec)?;
            let rho = cfg.discount_rate;
            let ecps = |t| {
                (0..cfg.n_ecps())
                    .map(|n| integral_utility(t, Player::Ecp(n), rho))
                    .collect()
            };
            Ok(CompareRow {
                delta,
                olsec_convergence_time: ol.convergence_time,
                ssec_convergence_time: ss.convergence_time,
                olsec_ccp_utility: integral_utility(&ol.trajectory, Player::Ccp, rho),
                ssec_ccp_utility: integral_utility(&ss.trajectory, Player::Ccp, rho),
                olsec_ecp_utilities: ecps(&ol.trajectory),
                ssec_ecp_utilities: ecps(&ss.trajectory),
                olsec_sweep_converged: ol.report.is_some_and(|r| r.converged),
            })
        })
        .collect()
}

pub fn write_compare(out: &Path, rows: &[CompareRow]) -> Result<(), CliError> {
    let n = rows.first().map_or(0, |r| r.olsec_ecp_utilities.len());
    let mut header: Vec<String> = [
        "delta",
        "olsec_convergence_time",
        "ssec_convergence_time",
        "olsec_U_c",
        "ssec_U_c",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=n).map(|i| format!("olsec_U_{i}")));
    header.extend((1..=n).map(|i| format!("ssec_U_{i}")));
    header.push("olsec_sweep_converged".into());
    let table: Vec<Vec<Option<String>>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                Some(fmt_f64(r.delta)),
                r.olsec_convergence_time.map(fmt_f64),
                r.ssec_convergence_time.map(fmt_f64),
                Some(fmt_f64(r.olsec_ccp_utility)),
                Some(fmt_f64(r.ssec_ccp_utility)),
            ];
            row.extend(r.olsec_ecp_utilities.iter().map(|v| Some(fmt_f64(*v))));
            row.extend(r.ssec_ecp_utilities.iter().map(|v| Some(fmt_f64(*v))));
            row.push(Some(r.olsec_sweep_converged.to_string()));
            row
        })
        .collect();
    write_table(BufWriter::new(File::create(out)?), &header, &table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: &'static str,
    pub value: f64,
    pub equilibrium_shares: Vec<f64>,
    pub equilibrium_price: f64,
    pub cloud_remainder: f64,
    pub convergence_time: Option<f64>,
    pub verdict: &'static str,
    /// Only meaningful for the open-loop scheme.
    pub sweep_converged: Option<bool>,
}

/// One run of the scenario's scheme per value. Everything not swept,
/// including a `"balanced"` nominal rate already resolved from the file, is
/// held fixed.
pub fn sweep(scenario: &Scenario, parameter: SweepParameter, values: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::invalid("values", "need at least one value"));
    }
    let configs = values
        .iter()
        .map(|&v| {
            let cfg = parameter.apply(&scenario.config, v);
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    values
        .par_iter()
        .zip(configs.par_iter())
        .map(|(&value, cfg)| {
            let out = run_with(scenario, cfg, scenario.scheme)?;
            let last = out.trajectory.final_controls();
            Ok(SweepRow {
                parameter: parameter.as_str(),
                value,
                equilibrium_shares: out.equilibrium.shares().to_vec(),
                equilibrium_price: last.price,
                cloud_remainder: last.allocation.cloud_remainder(),
                convergence_time: out.convergence_time,
                verdict: out.verdict.as_str(),
                sweep_converged: out.report.map(|r| r.converged),
            })
        })
        .collect()
}

pub fn write_sweep<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<(), CliError> {
    let n = rows.first().map_or(0, |r| r.equilibrium_shares.len() - 1);
    let mut header = vec!["parameter".to_string(), "value".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend(["x_c", "p", "r_c", "convergence_time", "verdict", "sweep_converged"].map(String::from));
    let table: Vec<Vec<Option<String>>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![Some(r.parameter.to_string()), Some(fmt_f64(r.value))];
            row.extend(r.equilibrium_shares.iter().map(|v| Some(fmt_f64(*v))));
            row.push(Some(fmt_f64(r.equilibrium_price)));
            row.push(Some(fmt_f64(r.cloud_remainder)));
            row.push(r.convergence_time.map(fmt_f64));
            row.push(Some(r.verdict.to_string()));
            row.push(r.sweep_converged.map(|c| c.to_string()));
            row
        })
        .collect();
    write_table(out, &header, &table)
}
