//! Static market parameters and the instantaneous quantities derived from
//! them: per-user compute, user utilities, provider utilities and the
//! aggregate rate `Θ` that governs how fast the user population adapts.
//!
//! Strategy indices are zero-based throughout: `0..N` are the edge
//! providers and index `N` is the cloud provider.

use crate::error::{Error, Result};

/// Tolerance used when checking that a population vector lies on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Weights of an edge provider's instantaneous utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcpWeights {
    /// Access-fee revenue from subscribed users.
    pub revenue: f64,
    /// Payment to the cloud for requested compute.
    pub payment: f64,
    /// Quadratic supply/demand mismatch penalty.
    pub mismatch: f64,
}

/// Weights of the cloud provider's instantaneous utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcpWeights {
    /// Access-fee revenue from directly subscribed users.
    pub revenue: f64,
    /// Income from compute sold to edge providers.
    pub sales: f64,
    /// Quadratic supply/demand mismatch penalty.
    pub mismatch: f64,
}

impl Default for EcpWeights {
    fn default() -> Self {
        Self {
            revenue: 1.0,
            payment: 1.0,
            mismatch: 1.0,
        }
    }
}

impl Default for CcpWeights {
    fn default() -> Self {
        Self {
            revenue: 1.0,
            sales: 1.0,
            mismatch: 1.0,
        }
    }
}

/// All static parameters of the market.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Local compute `R_n` of each edge provider (kH/s).
    pub ecp_power: Vec<f64>,
    /// Per-device access price `p_n` of each edge provider.
    pub ecp_access_price: Vec<f64>,
    /// Population size `K`.
    pub n_users: u32,
    /// Total cloud compute `R_c` (kH/s).
    pub cloud_power: f64,
    /// Per-device access price `p_c` of the cloud.
    pub cloud_access_price: f64,
    /// Learning rate `δ` of the replicator dynamics.
    pub learning_rate: f64,
    /// Mapping factor `β` from compute per price to utility.
    pub mapping_factor: f64,
    /// Discount rate `ρ` of the providers' integral utilities.
    pub discount_rate: f64,
    pub ecp_weights: EcpWeights,
    pub ccp_weights: CcpWeights,
    /// Nominal per-user computing rate `φ`.
    pub nominal_rate: f64,
    /// Horizon `T`.
    pub horizon: f64,
    /// Population information delay `τ_x`; zero means undelayed dynamics.
    pub population_delay: f64,
    /// Upper bound on the unit cloud price. `None` means ten times the
    /// largest access price.
    pub price_cap: Option<f64>,
}

impl SystemConfig {
    pub fn n_ecps(&self) -> usize {
        self.ecp_power.len()
    }

    /// Number of user strategies, `N + 1`.
    pub fn n_strategies(&self) -> usize {
        self.ecp_power.len() + 1
    }

    pub fn k(&self) -> f64 {
        f64::from(self.n_users)
    }

    pub fn price_cap(&self) -> f64 {
        self.price_cap.unwrap_or_else(|| {
            10.0 * self
                .ecp_access_price
                .iter()
                .copied()
                .fold(self.cloud_access_price, f64::max)
        })
    }

    /// Access price of strategy `s` (edge providers first, cloud last).
    pub fn access_price(&self, s: usize) -> f64 {
        if s < self.n_ecps() {
            self.ecp_access_price[s]
        } else {
            self.cloud_access_price
        }
    }

    /// `δβ/K`, the common factor of the replicator vector field.
    pub fn rate_scale(&self) -> f64 {
        self.learning_rate * self.mapping_factor / self.k()
    }

    /// `φ` such that `Kφ = Σ R_n + R_c`: aggregate demand equals supply.
    pub fn balanced_nominal_rate(&self) -> f64 {
        (self.ecp_power.iter().sum::<f64>() + self.cloud_power) / self.k()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_ecps();
        if n == 0 {
            return Err(Error::invalid("ecp_power", "at least one edge provider is required"));
        }
        if self.ecp_access_price.len() != n {
            return Err(Error::invalid(
                "ecp_access_price",
                format!("expected {n} entries, got {}", self.ecp_access_price.len()),
            ));
        }
        if self.n_users == 0 {
            return Err(Error::invalid("n_users", "must be positive"));
        }
        for (i, &r) in self.ecp_power.iter().enumerate() {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::invalid("ecp_power", format!("entry {i} must be positive")));
            }
            if !(self.cloud_power >= r) {
                return Err(Error::invalid(
                    "cloud_power",
                    format!("must be at least every edge provider's power (entry {i} is {r})"),
                ));
            }
        }
        for (i, &p) in self.ecp_access_price.iter().enumerate() {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::invalid(
                    "ecp_access_price",
                    format!("entry {i} must be positive"),
                ));
            }
        }
        let positives = [
            ("cloud_power", self.cloud_power),
            ("cloud_access_price", self.cloud_access_price),
            ("learning_rate", self.learning_rate),
            ("mapping_factor", self.mapping_factor),
            ("discount_rate", self.discount_rate),
            ("ecp_weights", self.ecp_weights.revenue),
            ("ecp_weights", self.ecp_weights.payment),
            ("ecp_weights", self.ecp_weights.mismatch),
            ("ccp_weights", self.ccp_weights.revenue),
            ("ccp_weights", self.ccp_weights.sales),
            ("ccp_weights", self.ccp_weights.mismatch),
            ("nominal_rate", self.nominal_rate),
            ("horizon", self.horizon),
        ];
        for (field, v) in positives {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(field, "must be positive and finite"));
            }
        }
        if !(self.population_delay >= 0.0 && self.population_delay.is_finite()) {
            return Err(Error::invalid("population_delay", "must be non-negative"));
        }
        if let Some(cap) = self.price_cap {
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(Error::invalid("price_cap", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Population shares `[x_1..x_N, x_c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState(Vec<f64>);

impl PopulationState {
    /// Checked constructor: entries in `[0, 1]` summing to one within
    /// [`SIMPLEX_TOL`].
    pub fn new(shares: Vec<f64>) -> Result<Self> {
        if shares.len() < 2 {
            return Err(Error::invalid(
                "shares",
                "need at least one edge provider and the cloud",
            ));
        }
        for (i, &x) in shares.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::invalid("shares", format!("entry {i} = {x} outside [0, 1]")));
            }
        }
        let total: f64 = shares.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid("shares", format!("sum is {total}, expected 1")));
        }
        Ok(Self(shares))
    }

    /// Wraps a raw vector without checks. Used for intermediate integrator
    /// stages and formal perturbations off the simplex.
    pub fn new_unchecked(shares: Vec<f64>) -> Self {
        Self(shares)
    }

    /// Uniform distribution over `n_strategies` strategies.
    pub fn uniform(n_strategies: usize) -> Self {
        Self(vec![1.0 / n_strategies as f64; n_strategies])
    }

    pub fn shares(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n_ecps(&self) -> usize {
        self.0.len() - 1
    }

    pub fn ecp_shares(&self) -> &[f64] {
        &self.0[..self.0.len() - 1]
    }

    pub fn cloud(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Max-norm distance to another state.
    pub fn distance(&self, other: &PopulationState) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Requested fractions `r_n` of cloud compute; the cloud keeps the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationState(Vec<f64>);

impl AllocationState {
    /// Checked constructor: every `r_n ∈ [0, 1)` and `Σ r_n ≤ 1`.
    pub fn new(requests: Vec<f64>) -> Result<Self> {
        for (i, &r) in requests.iter().enumerate() {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::invalid("requests", format!("entry {i} = {r} outside [0, 1)")));
            }
        }
        let total: f64 = requests.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::invalid("requests", format!("sum is {total}, exceeds 1")));
        }
        Ok(Self(requests))
    }

    /// Unconstrained requests, e.g. a stationary point before projection.
    pub fn new_unchecked(requests: Vec<f64>) -> Self {
        Self(requests)
    }

    pub fn zeros(n_ecps: usize) -> Self {
        Self(vec![0.0; n_ecps])
    }

    pub fn requests(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `r_c = 1 − Σ r_n`.
    pub fn cloud_remainder(&self) -> f64 {
        1.0 - self.total()
    }
}

/// State, controls and time bundled for the instantaneous functions.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSnapshot {
    pub population: PopulationState,
    pub allocation: AllocationState,
    /// Unit price of cloud compute.
    pub price: f64,
    pub time: f64,
}

impl MarketSnapshot {
    pub fn new(population: PopulationState, allocation: AllocationState, price: f64) -> Self {
        Self {
            population,
            allocation,
            price,
            time: 0.0,
        }
    }
}

pub(crate) fn check_dims(cfg: &SystemConfig, pop: &PopulationState, alloc: &AllocationState) -> Result<()> {
    let n = cfg.n_ecps();
    if pop.len() != n + 1 {
        return Err(Error::Dimension {
            what: "population",
            expected: n + 1,
            got: pop.len(),
        });
    }
    if alloc.requests().len() != n {
        return Err(Error::Dimension {
            what: "allocation",
            expected: n,
            got: alloc.requests().len(),
        });
    }
    Ok(())
}

/// Compute held by each provider after cloud sharing:
/// `[R_1 + R_c r_1, .., R_N + R_c r_N, R_c r_c]`.
pub fn provider_capacity(cfg: &SystemConfig, alloc: &AllocationState) -> Vec<f64> {
    let mut cap: Vec<f64> = cfg
        .ecp_power
        .iter()
        .zip(alloc.requests())
        .map(|(&power, &r)| power + cfg.cloud_power * r)
        .collect();
    cap.push(cfg.cloud_power * alloc.cloud_remainder());
    cap
}

/// Capacity over access price for every strategy; proportional to the
/// evolutionary equilibrium shares.
pub fn capacity_per_price(cfg: &SystemConfig, alloc: &AllocationState) -> Vec<f64> {
    provider_capacity(cfg, alloc)
        .into_iter()
        .enumerate()
        .map(|(s, c)| c / cfg.access_price(s))
        .collect()
}

fn per_user_power_parts(cfg: &SystemConfig, pop: &PopulationState, alloc: &AllocationState) -> Result<Vec<f64>> {
    check_dims(cfg, pop, alloc)?;
    let k = cfg.k();
    provider_capacity(cfg, alloc)
        .into_iter()
        .zip(pop.shares())
        .enumerate()
        .map(|(s, (cap, &x))| {
            if x == 0.0 {
                if cap == 0.0 {
                    Ok(0.0)
                } else {
                    Err(Error::ZeroShare { index: s })
                }
            } else {
                Ok(cap / (k * x))
            }
        })
        .collect()
}

/// Compute received by each user of every strategy, `ω_s`.
pub fn per_user_power(cfg: &SystemConfig, snap: &MarketSnapshot) -> Result<Vec<f64>> {
    per_user_power_parts(cfg, &snap.population, &snap.allocation)
}

/// User utilities `π_s = β ω_s / p_s`.
pub fn user_utility(cfg: &SystemConfig, snap: &MarketSnapshot) -> Result<Vec<f64>> {
    user_utility_at(cfg, &snap.population, &snap.allocation)
}

/// [`user_utility`] without building a snapshot.
pub fn user_utility_at(cfg: &SystemConfig, pop: &PopulationState, alloc: &AllocationState) -> Result<Vec<f64>> {
    let omega = per_user_power_parts(cfg, pop, alloc)?;
    Ok(omega
        .into_iter()
        .enumerate()
        .map(|(s, w)| cfg.mapping_factor * w / cfg.access_price(s))
        .collect())
}

/// Population-weighted mean of `utils`.
pub fn mean_utility(pop: &PopulationState, utils: &[f64]) -> f64 {
    debug_assert_eq!(pop.len(), utils.len());
    pop.shares().iter().zip(utils).map(|(x, u)| x * u).sum()
}

/// `Θ = (δβ/K) Σ_s capacity_s / p_s`.
pub fn theta(cfg: &SystemConfig, alloc: &AllocationState) -> f64 {
    cfg.rate_scale() * capacity_per_price(cfg, alloc).iter().sum::<f64>()
}

/// Instantaneous utility `u_n` of edge provider `n`.
pub fn ecp_instant_utility(cfg: &SystemConfig, snap: &MarketSnapshot, n: usize) -> f64 {
    let w = cfg.ecp_weights;
    let k = cfg.k();
    let x = snap.population.shares()[n];
    let r = snap.allocation.requests()[n];
    let mismatch = k * cfg.nominal_rate * x - (cfg.ecp_power[n] + cfg.cloud_power * r);
    w.revenue * cfg.ecp_access_price[n] * k * x
        - w.payment * cfg.cloud_power * snap.price * r
        - w.mismatch * mismatch * mismatch
}

/// Instantaneous utility `u_c` of the cloud provider.
pub fn ccp_instant_utility(cfg: &SystemConfig, snap: &MarketSnapshot) -> f64 {
    let w = cfg.ccp_weights;
    let k = cfg.k();
    let xc = snap.population.cloud();
    let sold = snap.allocation.total();
    let mismatch = k * cfg.nominal_rate * xc - cfg.cloud_power * (1.0 - sold);
    w.revenue * cfg.cloud_access_price * k * xc + w.sales * cfg.cloud_power * snap.price * sold
        - w.mismatch * mismatch * mismatch
}

/// Instantaneous utilities of every provider, `[u_1..u_N, u_c]`.
pub fn provider_utilities(cfg: &SystemConfig, snap: &MarketSnapshot) -> Vec<f64> {
    let mut out: Vec<f64> = (0..cfg.n_ecps()).map(|n| ecp_instant_utility(cfg, snap, n)).collect();
    out.push(ccp_instant_utility(cfg, snap));
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Two edge providers, low-power cloud, everything else at unit defaults.
    pub fn scenario_a() -> SystemConfig {
        SystemConfig {
            ecp_power: vec![2.0, 1.0],
            ecp_access_price: vec![0.3, 0.2],
            n_users: 100,
            cloud_power: 2.0,
            cloud_access_price: 0.2,
            learning_rate: 1.0,
            mapping_factor: 1.0,
            discount_rate: 0.1,
            ecp_weights: EcpWeights::default(),
            ccp_weights: CcpWeights::default(),
            nominal_rate: 0.05,
            horizon: 50.0,
            population_delay: 0.0,
            price_cap: None,
        }
    }

    /// One edge provider with every parameter equal to one.
    pub fn unit() -> SystemConfig {
        SystemConfig {
            ecp_power: vec![1.0],
            ecp_access_price: vec![1.0],
            n_users: 1,
            cloud_power: 1.0,
            cloud_access_price: 1.0,
            learning_rate: 1.0,
            mapping_factor: 1.0,
            discount_rate: 0.1,
            ecp_weights: EcpWeights::default(),
            ccp_weights: CcpWeights::default(),
            nominal_rate: 1.0,
            horizon: 1.0,
            population_delay: 0.0,
            price_cap: None,
        }
    }

    pub fn pop(v: &[f64]) -> PopulationState {
        PopulationState::new_unchecked(v.to_vec())
    }

    pub fn alloc(v: &[f64]) -> AllocationState {
        AllocationState::new_unchecked(v.to_vec())
    }

    pub fn snap(x: &[f64], r: &[f64], price: f64) -> MarketSnapshot {
        MarketSnapshot::new(pop(x), alloc(r), price)
    }
}
