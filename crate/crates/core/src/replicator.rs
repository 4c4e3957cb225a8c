//! User-level evolutionary game: the replicator vector field (plain and
//! delayed), its closed-form equilibrium and the stability quantities
//! derived from `Θ`.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::Result;
use crate::model::{
    capacity_per_price, mean_utility, theta, user_utility_at, AllocationState, PopulationState, SystemConfig,
};

/// Which shares weight the population mean in the delayed field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanWeights {
    /// `Σ_k x_k(t−τ) π_k(x(t−τ))`. The field reduces to
    /// `ẋ = π_o − Θ x(t−τ)` and keeps `Σ ẋ = 0` whenever the delayed
    /// state lies on the simplex.
    #[default]
    Delayed,
    /// `Σ_k x_k(t) π_k(x(t−τ))`. Mixes current weights with delayed
    /// utilities; the components no longer sum to zero once the two
    /// states differ.
    Current,
}

/// Closed-form evolutionary equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct EssResult {
    pub shares: PopulationState,
    /// Utility every user receives at the equilibrium.
    pub common_utility: f64,
}

/// Replicator field `ẋ_s = δ x_s (π_s − π̄)`.
pub fn replicator_rhs(cfg: &SystemConfig, pop: &PopulationState, alloc: &AllocationState) -> Result<Vec<f64>> {
    delayed_replicator_rhs(cfg, pop, pop, alloc, MeanWeights::Delayed)
}

/// Replicator field driven by population information that is `τ_x` old.
///
/// Growth factors and utilities use `pop_delayed`; `weights` selects the
/// shares used for the population mean.
pub fn delayed_replicator_rhs(
    cfg: &SystemConfig,
    pop_now: &PopulationState,
    pop_delayed: &PopulationState,
    alloc: &AllocationState,
    weights: MeanWeights,
) -> Result<Vec<f64>> {
    let pi = user_utility_at(cfg, pop_delayed, alloc)?;
    let mean = match weights {
        MeanWeights::Delayed => mean_utility(pop_delayed, &pi),
        MeanWeights::Current => mean_utility(pop_now, &pi),
    };
    let delta = cfg.learning_rate;
    Ok(pop_delayed
        .shares()
        .iter()
        .zip(&pi)
        .map(|(&x, &p)| delta * x * (p - mean))
        .collect())
}

/// The field in its expanded, division-free form
/// `ẋ_s = (δβ/K)[a_s − x_s Σ_k a_k]` with `a_s = capacity_s / p_s`.
/// Accepts any real vector, including points off the simplex.
pub fn expanded_rhs(cfg: &SystemConfig, x: &[f64], alloc: &AllocationState) -> Vec<f64> {
    let a = capacity_per_price(cfg, alloc);
    let total: f64 = a.iter().sum();
    let scale = cfg.rate_scale();
    a.iter()
        .zip(x)
        .map(|(&a_s, &x_s)| scale * (a_s - x_s * total))
        .collect()
}

/// Affine form `ẋ = Π x + π_o` read off the expanded field column by
/// column.
pub fn linear_system(cfg: &SystemConfig, alloc: &AllocationState) -> (DMatrix<f64>, DVector<f64>) {
    let dim = cfg.n_strategies();
    let origin = expanded_rhs(cfg, &vec![0.0; dim], alloc);
    let mut pi = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        let col = expanded_rhs(cfg, &e, alloc);
        for i in 0..dim {
            pi[(i, j)] = col[i] - origin[i];
        }
    }
    (pi, DVector::from_vec(origin))
}

/// Equilibrium shares `x*_s ∝ capacity_s / p_s`, at which every user
/// receives the same utility `(β/K) Σ_s capacity_s / p_s`.
pub fn analytic_ess(cfg: &SystemConfig, alloc: &AllocationState) -> EssResult {
    let a = capacity_per_price(cfg, alloc);
    let total: f64 = a.iter().sum();
    let shares = a.iter().map(|v| v / total).collect();
    EssResult {
        shares: PopulationState::new_unchecked(shares),
        common_utility: cfg.mapping_factor * total / cfg.k(),
    }
}

/// Eigenvalues of `Π` in `ẋ = Π x + π_o`. They all equal `−Θ`.
pub fn ess_jacobian_eigen(cfg: &SystemConfig, alloc: &AllocationState) -> Vec<Complex<f64>> {
    let (pi, _) = linear_system(cfg, alloc);
    pi.complex_eigenvalues().iter().copied().collect()
}

/// Central-difference Jacobian of [`replicator_rhs`] (the utility form, not
/// the expanded one) at `at`.
pub fn numerical_jacobian(
    cfg: &SystemConfig,
    at: &PopulationState,
    alloc: &AllocationState,
    step: f64,
) -> Result<DMatrix<f64>> {
    let dim = at.len();
    let mut jac = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut plus = at.shares().to_vec();
        let mut minus = at.shares().to_vec();
        plus[j] += step;
        minus[j] -= step;
        let fp = replicator_rhs(cfg, &PopulationState::new_unchecked(plus), alloc)?;
        let fm = replicator_rhs(cfg, &PopulationState::new_unchecked(minus), alloc)?;
        for i in 0..dim {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Eigenvalues of the numerically linearized field at the equilibrium.
pub fn linearized_eigen_at_ess(cfg: &SystemConfig, alloc: &AllocationState) -> Result<Vec<Complex<f64>>> {
    let ess = analytic_ess(cfg, alloc);
    let step = 1e-6 * ess.shares.shares().iter().copied().fold(1.0, f64::min);
    let jac = numerical_jacobian(cfg, &ess.shares, alloc, step)?;
    Ok(jac.complex_eigenvalues().iter().copied().collect())
}

/// Largest population delay for which the delayed dynamics stay stable,
/// `π / (2Θ)`.
pub fn delay_stability_bound(cfg: &SystemConfig, alloc: &AllocationState) -> f64 {
    std::f64::consts::PI / (2.0 * theta(cfg, alloc))
}
