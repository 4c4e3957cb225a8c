//! Runs one scheme on one configuration and condenses the result.

use ecc_market::model::SystemConfig;
use ecc_market::solver::{
    classify, convergence_time, simulate_fixed, solve_open_loop, solve_ssec, SweepReport, Trajectory, Verdict,
};
use ecc_market::stackelberg::project_controls;
use ecc_market::PopulationState;
use serde::Serialize;

use crate::{CliError, Scenario, Scheme};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub scheme: Scheme,
    pub trajectory: Trajectory,
    pub report: Option<SweepReport>,
    /// Closed-form evolutionary equilibrium under the controls in force at `T`.
    pub equilibrium: PopulationState,
    pub convergence_time: Option<f64>,
    pub verdict: Verdict,
}

/// Runs `scheme` for `cfg`, everything else taken from `scenario`.
pub fn run_with(scenario: &Scenario, cfg: &SystemConfig, scheme: Scheme) -> Result<RunOutcome, CliError> {
    let x0 = &scenario.x0;
    let dt = scenario.dt;
    let (trajectory, report) = match scheme {
        Scheme::Olsec => {
            let (t, r) = solve_open_loop(cfg, x0, dt, scenario.solver)?;
            (t, Some(r))
        }
        Scheme::Ssec => (solve_ssec(cfg, x0, dt)?, None),
        Scheme::FixedControls => {
            let controls = project_controls(cfg, scenario.r0.requests(), scenario.p0);
            (simulate_fixed(cfg, x0, &controls, dt)?, None)
        }
    };
    let equilibrium = trajectory.equilibrium(cfg);
    let eps = scenario.eps_convergence;
    Ok(RunOutcome {
        scheme,
        convergence_time: convergence_time(&trajectory, &equilibrium, eps),
        verdict: classify(&trajectory, &equilibrium, eps),
        trajectory,
        report,
        equilibrium,
    })
}

pub fn run(scenario: &Scenario) -> Result<RunOutcome, CliError> {
    run_with(scenario, &scenario.config, scenario.scheme)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub iterations: usize,
    pub state_residual: f64,
    pub costate_residual: f64,
    pub converged: bool,
}

/// Everything `simulate` reports besides the time series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scheme: &'static str,
    pub dt: f64,
    pub horizon: f64,
    pub nominal_rate: f64,
    pub equilibrium_shares: Vec<f64>,
    pub final_shares: Vec<f64>,
    pub equilibrium_price: f64,
    pub equilibrium_requests: Vec<f64>,
    pub cloud_remainder: f64,
    pub convergence_time: Option<f64>,
    pub verdict: &'static str,
    /// `[U_1..U_N, U_c]` over the whole horizon.
    pub integral_utilities: Vec<f64>,
    pub sweep_report: Option<SweepSummary>,
}

impl RunOutcome {
    pub fn summary(&self, cfg: &SystemConfig, dt: f64) -> Summary {
        let last = self.trajectory.final_controls();
        Summary {
            scheme: self.scheme.as_str(),
            dt,
            horizon: cfg.horizon,
            nominal_rate: cfg.nominal_rate,
            equilibrium_shares: self.equilibrium.shares().to_vec(),
            final_shares: self.trajectory.final_state().shares().to_vec(),
            equilibrium_price: last.price,
            equilibrium_requests: last.allocation.requests().to_vec(),
            cloud_remainder: last.allocation.cloud_remainder(),
            convergence_time: self.convergence_time,
            verdict: self.verdict.as_str(),
            integral_utilities: self.trajectory.integral_utilities.last().cloned().unwrap_or_default(),
            sweep_report: self.report.map(|r| SweepSummary {
                iterations: r.iterations,
                state_residual: r.state_residual,
                costate_residual: r.costate_residual,
                converged: r.converged,
            }),
        }
    }
}
