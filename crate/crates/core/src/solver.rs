//! Fixed-step integration and equilibrium computation.
//!
//! Everything runs on a uniform grid `t_k = k·dt` over `[0, T]`. Provider
//! controls are feedback laws evaluated at every Runge–Kutta stage, so the
//! closed-loop population keeps fourth-order accuracy; costates are carried
//! between grid points by Hermite interpolation.

use crate::error::{Error, Result};
use crate::model::{provider_utilities, AllocationState, MarketSnapshot, PopulationState, SystemConfig};
use crate::replicator::{analytic_ess, delayed_replicator_rhs, MeanWeights};
use crate::stackelberg::{costate_rhs, stackelberg_controls, Controls, Costates};

/// Any state component beyond this magnitude aborts integration.
pub const BLOW_UP: f64 = 1e12;
/// Shares are kept at or above this floor.
pub const SHARE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    None,
    /// Floor at [`SHARE_FLOOR`] and renormalize when the sum drifts by more
    /// than `1e-12`.
    Simplex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Number of steps of size `dt` covering `[t0, t1]`.
pub fn grid_steps(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if !(t1 > t0) {
        return Err(Error::invalid("t_span", "end must be after start"));
    }
    let steps = (t1 - t0) / dt;
    let rounded = steps.round();
    if (steps - rounded).abs() > 1e-9 * steps.max(1.0) {
        return Err(Error::invalid("dt", format!("does not divide the span {}", t1 - t0)));
    }
    Ok(rounded as usize)
}

fn project(x: &mut [f64], projection: Projection) {
    if projection == Projection::Simplex {
        x.iter_mut().for_each(|v| *v = v.max(SHARE_FLOOR));
        let total: f64 = x.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            x.iter_mut().for_each(|v| *v /= total);
        }
    }
}

fn axpy(x: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// Classical RK4 with a history buffer for a single constant lag.
///
/// Delayed values come from cubic Hermite interpolation on the stored grid
/// (states plus the first-stage slope of each step); before `t0` the state
/// is the initial value. Lags shorter than `dt` fall back to the latest
/// stored grid state. A zero lag passes each stage's own state as the
/// delayed argument.
#[derive(Debug, Clone)]
pub struct DelayStepper {
    t0: f64,
    dt: f64,
    lag: f64,
    projection: Projection,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

impl DelayStepper {
    pub fn new(x0: &[f64], t0: f64, dt: f64, lag: f64, projection: Projection) -> Self {
        Self {
            t0,
            dt,
            lag,
            projection,
            times: vec![t0],
            states: vec![x0.to_vec()],
            slopes: Vec::new(),
        }
    }

    pub fn time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn current(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    pub fn delayed(&self, t: f64, stage: &[f64]) -> Vec<f64> {
        if self.lag == 0.0 {
            return stage.to_vec();
        }
        let s = t - self.lag;
        if s <= self.t0 {
            return self.states[0].clone();
        }
        let last = self.states.len() - 1;
        let pos = (s - self.t0) / self.dt;
        let i = pos.floor() as usize;
        if i >= last || i + 1 >= self.slopes.len() {
            return self.states[last.min(i)].clone();
        }
        let theta = pos - i as f64;
        let (h00, h10, h01, h11) = hermite(theta);
        let (a, b) = (&self.states[i], &self.states[i + 1]);
        let (da, db) = (&self.slopes[i], &self.slopes[i + 1]);
        (0..a.len())
            .map(|j| h00 * a[j] + h10 * self.dt * da[j] + h01 * b[j] + h11 * self.dt * db[j])
            .collect()
    }

    /// Advances one step. `field(t, x(t), x(t − lag))`.
    pub fn step<F>(&mut self, mut field: F) -> Result<()>
    where
        F: FnMut(f64, &[f64], &[f64]) -> Result<Vec<f64>>,
    {
        let t = self.time();
        let h = self.dt;
        let x = self.current().to_vec();

        let k1 = field(t, &x, &self.delayed(t, &x))?;
        self.slopes.push(k1.clone());
        let x2 = axpy(&x, 0.5 * h, &k1);
        let k2 = field(t + 0.5 * h, &x2, &self.delayed(t + 0.5 * h, &x2))?;
        let x3 = axpy(&x, 0.5 * h, &k2);
        let k3 = field(t + 0.5 * h, &x3, &self.delayed(t + 0.5 * h, &x3))?;
        let x4 = axpy(&x, h, &k3);
        let k4 = field(t + h, &x4, &self.delayed(t + h, &x4))?;

        let mut next: Vec<f64> = (0..x.len())
            .map(|j| x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
            .collect();
        let t_next = self.t0 + (self.times.len() as f64) * h;
        // Checked before projection, which would otherwise renormalize a
        // diverging step back onto the simplex.
        if next.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP) {
            return Err(Error::BlowUp { time: t_next });
        }
        project(&mut next, self.projection);
        self.times.push(t_next);
        self.states.push(next);
        Ok(())
    }

    pub fn into_solution(self) -> OdeSolution {
        OdeSolution {
            times: self.times,
            states: self.states,
        }
    }
}

fn hermite(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

/// Fixed-step RK4 for `ẋ = f(t, x)`.
pub fn integrate_ode<F>(
    mut field: F,
    x0: &[f64],
    t_span: (f64, f64),
    dt: f64,
    projection: Projection,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    integrate_dde(|t, x, _| field(t, x), x0, 0.0, t_span, dt, projection)
}

/// Method-of-steps RK4 for `ẋ = f(t, x(t), x(t − τ))` with constant
/// prehistory `x(t) = x0` for `t ≤ t0`.
pub fn integrate_dde<F>(
    mut field: F,
    x0: &[f64],
    lag: f64,
    t_span: (f64, f64),
    dt: f64,
    projection: Projection,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &[f64]) -> Result<Vec<f64>>,
{
    if !(lag >= 0.0) {
        return Err(Error::invalid("lag", "must be non-negative"));
    }
    let steps = grid_steps(t_span.0, t_span.1, dt)?;
    let mut stepper = DelayStepper::new(x0, t_span.0, dt, lag, projection);
    for _ in 0..steps {
        stepper.step(&mut field)?;
    }
    Ok(stepper.into_solution())
}

/// Time-indexed record of one market run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PopulationState>,
    /// Controls in force from each grid time to the next.
    pub controls: Vec<Controls>,
    /// Costates on the grid when the run used them.
    pub costates: Option<Vec<Costates>>,
    /// Instantaneous provider utilities `[u_1..u_N, u_c]`.
    pub utilities: Vec<Vec<f64>>,
    /// Running discounted integrals `[U_1..U_N, U_c]` from 0 to each grid time.
    pub integral_utilities: Vec<Vec<f64>>,
}

/// A provider whose utility is being asked for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Player {
    Ecp(usize),
    Ccp,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &PopulationState {
        self.states.last().unwrap()
    }

    pub fn final_controls(&self) -> &Controls {
        self.controls.last().unwrap()
    }

    fn column(&self, who: Player) -> usize {
        match who {
            Player::Ecp(n) => n,
            Player::Ccp => self.utilities[0].len() - 1,
        }
    }

    pub fn utility_path(&self, who: Player) -> Vec<f64> {
        let c = self.column(who);
        self.utilities.iter().map(|u| u[c]).collect()
    }

    /// Evolutionary equilibrium under the controls in force at `T`.
    pub fn equilibrium(&self, cfg: &SystemConfig) -> PopulationState {
        analytic_ess(cfg, &self.final_controls().allocation).shares
    }
}

/// Trapezoidal `∫ e^{−ρt} u(t) dt` on the grid.
pub fn discounted_integral(times: &[f64], values: &[f64], rho: f64) -> f64 {
    running_discounted_integral(times, values, rho)
        .last()
        .copied()
        .unwrap_or(0.0)
}

fn running_discounted_integral(times: &[f64], values: &[f64], rho: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(times.len());
    out.push(0.0);
    for k in 1..times.len() {
        let a = (-rho * times[k - 1]).exp() * values[k - 1];
        let b = (-rho * times[k]).exp() * values[k];
        acc += 0.5 * (times[k] - times[k - 1]) * (a + b);
        out.push(acc);
    }
    out
}

/// Discounted integral utility of one provider over the whole run.
pub fn integral_utility(traj: &Trajectory, who: Player, rho: f64) -> f64 {
    discounted_integral(&traj.times, &traj.utility_path(who), rho)
}

fn build_trajectory(
    cfg: &SystemConfig,
    times: Vec<f64>,
    states: Vec<PopulationState>,
    controls: Vec<Controls>,
    costates: Option<Vec<Costates>>,
) -> Trajectory {
    let utilities: Vec<Vec<f64>> = states
        .iter()
        .zip(&controls)
        .zip(&times)
        .map(|((x, c), &t)| {
            let snap = MarketSnapshot {
                population: x.clone(),
                allocation: c.allocation.clone(),
                price: c.price,
                time: t,
            };
            provider_utilities(cfg, &snap)
        })
        .collect();
    let players = cfg.n_strategies();
    let columns: Vec<Vec<f64>> = (0..players)
        .map(|p| {
            let path: Vec<f64> = utilities.iter().map(|u| u[p]).collect();
            running_discounted_integral(&times, &path, cfg.discount_rate)
        })
        .collect();
    let integral_utilities = (0..times.len())
        .map(|k| columns.iter().map(|c| c[k]).collect())
        .collect();
    Trajectory {
        times,
        states,
        controls,
        costates,
        utilities,
        integral_utilities,
    }
}

/// Cubic Hermite interpolation on a uniform grid of values and slopes.
fn hermite_on_grid(dt: f64, values: &[Vec<f64>], slopes: &[Vec<f64>], t: f64) -> Vec<f64> {
    let last = values.len() - 1;
    if last == 0 {
        return values[0].clone();
    }
    let pos = (t / dt).clamp(0.0, last as f64);
    let i = (pos.floor() as usize).min(last - 1);
    let (h00, h10, h01, h11) = hermite(pos - i as f64);
    (0..values[i].len())
        .map(|j| h00 * values[i][j] + h10 * dt * slopes[i][j] + h01 * values[i + 1][j] + h11 * dt * slopes[i + 1][j])
        .collect()
}

/// Costates on the grid together with their time derivatives, so they can
/// be evaluated between grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct CostatePath {
    n_ecps: usize,
    dt: f64,
    values: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

impl CostatePath {
    pub fn zeros(n_ecps: usize, dt: f64, nodes: usize) -> Self {
        let flat = Costates::zeros(n_ecps).to_flat();
        Self {
            n_ecps,
            dt,
            values: vec![flat.clone(); nodes],
            slopes: vec![vec![0.0; flat.len()]; nodes],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn node(&self, k: usize) -> Costates {
        Costates::from_flat(self.n_ecps, &self.values[k])
    }

    pub fn nodes(&self) -> Vec<Costates> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    /// Hermite interpolant at time `t` (clamped to the grid).
    pub fn at(&self, t: f64) -> Costates {
        Costates::from_flat(self.n_ecps, &hermite_on_grid(self.dt, &self.values, &self.slopes, t))
    }

    /// Largest absolute difference between two paths and the largest
    /// magnitude in `self`.
    fn compare(&self, other: &CostatePath) -> (f64, f64) {
        let (mut diff, mut scale) = (0.0f64, 0.0f64);
        for (a, b) in self.values.iter().zip(&other.values) {
            for (u, v) in a.iter().zip(b) {
                diff = diff.max((u - v).abs());
                scale = scale.max(u.abs());
            }
        }
        (diff, scale)
    }

    /// `ω·fresh + (1 − ω)·self`, values and slopes alike.
    fn relax(&mut self, fresh: &CostatePath, omega: f64) {
        let blend = |old: &mut Vec<Vec<f64>>, new: &Vec<Vec<f64>>| {
            for (o, n) in old.iter_mut().zip(new) {
                for (a, b) in o.iter_mut().zip(n) {
                    *a = (1.0 - omega) * *a + omega * b;
                }
            }
        };
        blend(&mut self.values, &fresh.values);
        blend(&mut self.slopes, &fresh.slopes);
    }
}

/// States, their slopes and the controls recorded on the grid by a forward
/// pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRun {
    pub times: Vec<f64>,
    pub states: Vec<PopulationState>,
    pub slopes: Vec<Vec<f64>>,
    pub controls: Vec<Controls>,
}

impl ForwardRun {
    /// Hermite interpolant of the population at each of `times`.
    pub fn states_at(&self, dt: f64, times: &[f64]) -> Vec<PopulationState> {
        let values: Vec<Vec<f64>> = self.states.iter().map(|x| x.shares().to_vec()).collect();
        times
            .iter()
            .map(|&t| PopulationState::new_unchecked(hermite_on_grid(dt, &values, &self.slopes, t)))
            .collect()
    }

    fn into_trajectory(self, cfg: &SystemConfig, costates: Option<Vec<Costates>>) -> Trajectory {
        build_trajectory(cfg, self.times, self.states, self.controls, costates)
    }
}

/// Integrates the population over `[0, T]` under the feedback law
/// `law(t, x)`, evaluated at every Runge–Kutta stage. Honors the configured
/// population delay.
pub fn forward_pass<L>(cfg: &SystemConfig, x0: &PopulationState, dt: f64, mut law: L) -> Result<ForwardRun>
where
    L: FnMut(f64, &PopulationState) -> Controls,
{
    let steps = grid_steps(0.0, cfg.horizon, dt)?;
    let mut stepper = DelayStepper::new(x0.shares(), 0.0, dt, cfg.population_delay, Projection::Simplex);
    let mut field = |t: f64, now: &[f64], delayed: &[f64]| {
        let now = PopulationState::new_unchecked(now.to_vec());
        let c = law(t, &now);
        delayed_replicator_rhs(
            cfg,
            &now,
            &PopulationState::new_unchecked(delayed.to_vec()),
            &c.allocation,
            MeanWeights::Delayed,
        )
    };
    for _ in 0..steps {
        stepper.step(&mut field)?;
    }
    // Slope at T, for interpolation on the last interval.
    let t_end = stepper.time();
    let x_end = stepper.current().to_vec();
    let end_slope = field(t_end, &x_end, &stepper.delayed(t_end, &x_end))?;
    let DelayStepper {
        times,
        states,
        mut slopes,
        ..
    } = stepper;
    slopes.push(end_slope);
    let states: Vec<PopulationState> = states.into_iter().map(PopulationState::new_unchecked).collect();
    let controls = times.iter().zip(&states).map(|(&t, x)| law(t, x)).collect();
    Ok(ForwardRun {
        times,
        states,
        slopes,
        controls,
    })
}

/// Population run under constant controls.
pub fn simulate_fixed(cfg: &SystemConfig, x0: &PopulationState, controls: &Controls, dt: f64) -> Result<Trajectory> {
    Ok(forward_pass(cfg, x0, dt, |_, _| controls.clone())?.into_trajectory(cfg, None))
}

/// Myopic baseline: at every instant the providers play the static
/// Stackelberg equilibrium of the instantaneous game (all costates zero).
pub fn solve_ssec(cfg: &SystemConfig, x0: &PopulationState, dt: f64) -> Result<Trajectory> {
    let zero = Costates::zeros(cfg.n_ecps());
    Ok(forward_pass(cfg, x0, dt, |_, x| stackelberg_controls(cfg, x, &zero))?.into_trajectory(cfg, None))
}

/// Integrates every costate backward from zero at `T`.
///
/// `nodes[k]` is the allocation at grid time `t_k` and `midpoints[k]` the one
/// at `t_k + dt/2`. Each costate component obeys a scalar linear equation
/// `ċ = a(t)·c − b`; a step is integrated with the exact exponential
/// solution for the step-averaged `a` (Simpson's rule), which is exact when
/// `Θ` is constant and stable for any discount rate.
pub fn backward_pass(
    cfg: &SystemConfig,
    dt: f64,
    nodes: &[AllocationState],
    midpoints: &[AllocationState],
) -> Result<CostatePath> {
    if midpoints.len() + 1 != nodes.len() {
        return Err(Error::Dimension {
            what: "midpoint allocations",
            expected: nodes.len().saturating_sub(1),
            got: midpoints.len(),
        });
    }
    let n = cfg.n_ecps();
    let zeros = Costates::zeros(n);
    let size = zeros.to_flat().len();
    let ones = Costates::from_flat(n, &vec![1.0; size]);
    let rate = |alloc: &AllocationState| -> (Vec<f64>, Vec<f64>) {
        let at_zero = costate_rhs(cfg, alloc, &zeros).to_flat();
        let at_one = costate_rhs(cfg, alloc, &ones).to_flat();
        let a = at_one.iter().zip(&at_zero).map(|(o, z)| o - z).collect();
        let b = at_zero.iter().map(|z| -z).collect();
        (a, b)
    };

    let mut path = CostatePath::zeros(n, dt, nodes.len());
    let mut c = vec![0.0; size];
    let (mut a_right, _) = rate(&nodes[nodes.len() - 1]);
    for k in (0..midpoints.len()).rev() {
        let (a_left, b) = rate(&nodes[k]);
        let (a_mid, _) = rate(&midpoints[k]);
        for j in 0..size {
            let a = (a_left[j] + 4.0 * a_mid[j] + a_right[j]) / 6.0;
            // ∫_0^dt e^{−a s} ds
            let gain = if a == 0.0 { dt } else { -(-a * dt).exp_m1() / a };
            c[j] = c[j] * (-a * dt).exp() + b[j] * gain;
        }
        path.values[k] = c.clone();
        a_right = a_left;
    }
    for (k, alloc) in nodes.iter().enumerate() {
        path.slopes[k] = costate_rhs(cfg, alloc, &path.node(k)).to_flat();
    }
    Ok(path)
}

/// Forward pass with the Stackelberg controls computed from a fixed costate
/// path.
pub fn forward_with_costates(
    cfg: &SystemConfig,
    x0: &PopulationState,
    dt: f64,
    costates: &CostatePath,
) -> Result<ForwardRun> {
    forward_pass(cfg, x0, dt, |t, x| stackelberg_controls(cfg, x, &costates.at(t)))
}

/// Costates generated by a forward run that was driven by `costates`.
pub fn costates_along(cfg: &SystemConfig, dt: f64, run: &ForwardRun, costates: &CostatePath) -> Result<CostatePath> {
    let nodes: Vec<AllocationState> = run.controls.iter().map(|c| c.allocation.clone()).collect();
    let mid_times: Vec<f64> = run.times[..run.times.len() - 1].iter().map(|t| t + 0.5 * dt).collect();
    let midpoints: Vec<AllocationState> = run
        .states_at(dt, &mid_times)
        .iter()
        .zip(&mid_times)
        .map(|(x, &t)| stackelberg_controls(cfg, x, &costates.at(t)).allocation)
        .collect();
    backward_pass(cfg, dt, &nodes, &midpoints)
}

/// Forward-backward sweep settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepParams {
    pub max_iter: usize,
    /// Stop once the max state change between sweeps and the relative
    /// costate change both fall below this.
    pub tol: f64,
    /// Weight of the freshly integrated costates, in `(0, 1]`.
    pub relaxation: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            relaxation: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepReport {
    pub iterations: usize,
    /// Max change in any share between the last two forward passes.
    pub state_residual: f64,
    /// Max change of the costate path produced by the last backward pass,
    /// relative to `max(1, |costates|)`.
    pub costate_residual: f64,
    pub converged: bool,
}

fn max_state_change(a: &[PopulationState], b: &[PopulationState]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.distance(y)).fold(0.0, f64::max)
}

/// Open-loop Stackelberg equilibrium by forward-backward sweeping.
///
/// Starts from zero costates (so the first forward pass is the myopic
/// baseline), integrates costates backward along each new state/control
/// path, and relaxes the costate path by `relaxation`. The returned
/// trajectory carries the costates that produced it.
pub fn solve_open_loop(
    cfg: &SystemConfig,
    x0: &PopulationState,
    dt: f64,
    params: SweepParams,
) -> Result<(Trajectory, SweepReport)> {
    solve_open_loop_with_path(cfg, x0, dt, params).map(|(t, r, _)| (t, r))
}

/// [`solve_open_loop`] that also hands back the interpolable costate path,
/// so the forward pass can be replayed with the costates frozen.
pub fn solve_open_loop_with_path(
    cfg: &SystemConfig,
    x0: &PopulationState,
    dt: f64,
    params: SweepParams,
) -> Result<(Trajectory, SweepReport, CostatePath)> {
    if !(params.relaxation > 0.0 && params.relaxation <= 1.0) {
        return Err(Error::invalid("relaxation", "must lie in (0, 1]"));
    }
    if !(params.tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let steps = grid_steps(0.0, cfg.horizon, dt)?;
    let mut costates = CostatePath::zeros(cfg.n_ecps(), dt, steps + 1);
    let mut previous: Option<Vec<PopulationState>> = None;
    let mut report = SweepReport {
        iterations: 0,
        state_residual: f64::INFINITY,
        costate_residual: f64::INFINITY,
        converged: false,
    };

    loop {
        let run = forward_with_costates(cfg, x0, dt, &costates)?;
        report.iterations += 1;
        if let Some(prev) = &previous {
            report.state_residual = max_state_change(prev, &run.states);
        }

        let fresh = costates_along(cfg, dt, &run, &costates)?;
        let (diff, scale) = fresh.compare(&costates);
        report.costate_residual = diff / scale.max(1.0);
        report.converged = report.state_residual < params.tol && report.costate_residual < params.tol;

        if report.converged || report.iterations >= params.max_iter {
            return Ok((run.into_trajectory(cfg, Some(costates.nodes())), report, costates));
        }
        costates.relax(&fresh, params.relaxation);
        previous = Some(run.states);
    }
}

/// First grid time from which `‖x(t) − target‖∞ < eps` holds through `T`.
pub fn convergence_time(traj: &Trajectory, target: &PopulationState, eps: f64) -> Option<f64> {
    convergence_index(&traj.states, target, eps).map(|k| traj.times[k])
}

fn convergence_index(states: &[PopulationState], target: &PopulationState, eps: f64) -> Option<usize> {
    let outside = states.iter().rposition(|x| x.distance(target) >= eps);
    match outside {
        None => Some(0),
        Some(k) if k + 1 < states.len() => Some(k + 1),
        Some(_) => None,
    }
}

/// Peak-to-peak range of every share over the final `fraction` of the run.
pub fn tail_amplitude(traj: &Trajectory, fraction: f64) -> Vec<f64> {
    let len = traj.states.len();
    let start = len - ((fraction * len as f64).ceil() as usize).clamp(1, len);
    let dim = traj.states[0].len();
    (0..dim)
        .map(|s| {
            let (lo, hi) = traj.states[start..]
                .iter()
                .map(|x| x.shares()[s])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi - lo
        })
        .collect()
}

/// Outcome of a run relative to an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Converged,
    Oscillating,
    NotConverged,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Converged => "converged",
            Verdict::Oscillating => "oscillating",
            Verdict::NotConverged => "not_converged",
        }
    }
}

/// Tail window used by [`classify`].
pub const TAIL_FRACTION: f64 = 0.2;
/// A share oscillating by more than this fraction of its equilibrium value
/// counts as sustained oscillation.
pub const OSCILLATION_RATIO: f64 = 0.1;

/// Converged if the final state is within `eps` of `target`; oscillating if
/// some share's range over the final 20% exceeds 10% of its target value.
pub fn classify(traj: &Trajectory, target: &PopulationState, eps: f64) -> Verdict {
    if traj.final_state().distance(target) < eps {
        return Verdict::Converged;
    }
    let amp = tail_amplitude(traj, TAIL_FRACTION);
    if amp.iter().zip(target.shares()).any(|(a, x)| *a > OSCILLATION_RATIO * x) {
        Verdict::Oscillating
    } else {
        Verdict::NotConverged
    }
}
