//! Provider-level differential game: Hamiltonians, costate dynamics and the
//! closed-form open-loop controls of the followers (edge providers) and the
//! leader (cloud provider).
//!
//! Costates follow the share ordering of the edge providers only; the
//! cloud-share component is eliminated through `Σ x = 1`.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::model::{
    ccp_instant_utility, ecp_instant_utility, theta, AllocationState, MarketSnapshot, PopulationState, SystemConfig,
};
use crate::replicator::replicator_rhs;

/// Requests are kept at most `1 − REQUEST_MARGIN`, individually and in total.
pub const REQUEST_MARGIN: f64 = 1e-6;

/// Costates of all edge providers: row `n` is `Λ_n`, entry `(n, m)` pairs
/// provider `n` with share `x_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EcpCostate {
    pub lambda: DMatrix<f64>,
}

/// Costates of the cloud provider: `μ_cn` for the shares and `θ_nm` for the
/// followers' costates.
#[derive(Debug, Clone, PartialEq)]
pub struct CcpCostate {
    pub mu: DVector<f64>,
    pub theta: DMatrix<f64>,
}

impl EcpCostate {
    pub fn zeros(n: usize) -> Self {
        Self {
            lambda: DMatrix::zeros(n, n),
        }
    }
}

impl CcpCostate {
    pub fn zeros(n: usize) -> Self {
        Self {
            mu: DVector::zeros(n),
            theta: DMatrix::zeros(n, n),
        }
    }
}

/// Every costate of the game at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Costates {
    pub ecp: EcpCostate,
    pub ccp: CcpCostate,
}

impl Costates {
    pub fn zeros(n: usize) -> Self {
        Self {
            ecp: EcpCostate::zeros(n),
            ccp: CcpCostate::zeros(n),
        }
    }

    pub fn n_ecps(&self) -> usize {
        self.ccp.mu.len()
    }

    /// Flat layout: `Λ` column-major, then `μ`, then `Ψ` column-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.ecp.lambda.len() + self.ccp.mu.len());
        v.extend_from_slice(self.ecp.lambda.as_slice());
        v.extend_from_slice(self.ccp.mu.as_slice());
        v.extend_from_slice(self.ccp.theta.as_slice());
        v
    }

    pub fn from_flat(n: usize, v: &[f64]) -> Self {
        let nn = n * n;
        debug_assert_eq!(v.len(), 2 * nn + n);
        Self {
            ecp: EcpCostate {
                lambda: DMatrix::from_column_slice(n, n, &v[..nn]),
            },
            ccp: CcpCostate {
                mu: DVector::from_column_slice(&v[nn..nn + n]),
                theta: DMatrix::from_column_slice(n, n, &v[nn + n..]),
            },
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.to_flat().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Both providers' controls at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Controls {
    pub allocation: AllocationState,
    pub price: f64,
}

/// Follower response `r_n = A_n − B p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearResponse {
    pub intercept: f64,
    pub slope: f64,
}

impl LinearResponse {
    pub fn at(&self, price: f64) -> f64 {
        self.intercept - self.slope * price
    }
}

/// `q_n = i_n / p_n − (1/p_n − 1/p_c) [x_1..x_N]`: sensitivity of the edge
/// shares' velocity to provider `n`'s request, divided by `δβR_c/K`.
pub fn q_vector(cfg: &SystemConfig, pop: &PopulationState, n: usize) -> DVector<f64> {
    let inv_pn = 1.0 / cfg.ecp_access_price[n];
    let gap = inv_pn - 1.0 / cfg.cloud_access_price;
    let mut q = DVector::from_iterator(cfg.n_ecps(), pop.ecp_shares().iter().map(|&x| -gap * x));
    q[n] += inv_pn;
    q
}

fn costate_coupling(cfg: &SystemConfig, pop: &PopulationState, costate: &EcpCostate, n: usize) -> f64 {
    costate.lambda.row(n).transpose().dot(&q_vector(cfg, pop, n))
}

/// Unconstrained maximizer of `H_n` over `r_n` at the given price.
pub fn optimal_request(cfg: &SystemConfig, pop: &PopulationState, price: f64, costate: &EcpCostate, n: usize) -> f64 {
    let w = cfg.ecp_weights;
    let rc = cfg.cloud_power;
    let k = cfg.k();
    -(w.payment / (2.0 * w.mismatch * rc)) * price
        + (k * cfg.nominal_rate * pop.shares()[n] - cfg.ecp_power[n]) / rc
        + cfg.rate_scale() * costate_coupling(cfg, pop, costate, n) / (2.0 * w.mismatch * rc)
}

/// Splits [`optimal_request`] into its price-independent intercept `A_n`
/// and the common slope `B = η2 / (2 η3 R_c)`.
pub fn decompose_request(cfg: &SystemConfig, pop: &PopulationState, costate: &EcpCostate, n: usize) -> LinearResponse {
    let w = cfg.ecp_weights;
    let rc = cfg.cloud_power;
    let demand = (cfg.k() * cfg.nominal_rate * pop.shares()[n] - cfg.ecp_power[n]) / rc;
    let steer = cfg.rate_scale() * costate_coupling(cfg, pop, costate, n) / (2.0 * w.mismatch * rc);
    LinearResponse {
        intercept: demand + steer,
        slope: w.payment / (2.0 * w.mismatch * rc),
    }
}

/// `H_n = u_n + Σ_m λ_nm ẋ_m` over the edge shares.
pub fn ecp_hamiltonian(cfg: &SystemConfig, snap: &MarketSnapshot, costate: &EcpCostate, n: usize) -> Result<f64> {
    let xdot = replicator_rhs(cfg, &snap.population, &snap.allocation)?;
    let coupling: f64 = (0..cfg.n_ecps()).map(|m| costate.lambda[(n, m)] * xdot[m]).sum();
    Ok(ecp_instant_utility(cfg, snap, n) + coupling)
}

/// `λ̇_nm = λ_nm (ρ + Θ) − [n = m] η1 p_n K`.
pub fn ecp_costate_rhs(cfg: &SystemConfig, alloc: &AllocationState, costate: &EcpCostate, n: usize) -> DVector<f64> {
    let growth = cfg.discount_rate + theta(cfg, alloc);
    let mut d = costate.lambda.row(n).transpose() * growth;
    d[n] -= cfg.ecp_weights.revenue * cfg.ecp_access_price[n] * cfg.k();
    d
}

/// `λ̇` for every edge provider at once.
pub fn ecp_costate_rhs_all(cfg: &SystemConfig, alloc: &AllocationState, costate: &EcpCostate) -> EcpCostate {
    let n = cfg.n_ecps();
    let mut lambda = DMatrix::zeros(n, n);
    for i in 0..n {
        lambda.set_row(i, &ecp_costate_rhs(cfg, alloc, costate, i).transpose());
    }
    EcpCostate { lambda }
}

/// Leader's unconstrained maximizer of `H_c` once the followers' linear
/// responses are substituted.
pub fn optimal_price(cfg: &SystemConfig, pop: &PopulationState, ecp: &EcpCostate, ccp: &CcpCostate) -> f64 {
    let n = cfg.n_ecps();
    let nf = n as f64;
    let k = cfg.k();
    let rc = cfg.cloud_power;
    let xi = cfg.ccp_weights;
    let responses: Vec<LinearResponse> = (0..n).map(|i| decompose_request(cfg, pop, ecp, i)).collect();
    let b = responses[0].slope;
    let sum_a: f64 = responses.iter().map(|r| r.intercept).sum();
    let xs = pop.ecp_shares();
    let sum_x: f64 = xs.iter().sum();

    let inv_sum: f64 = cfg.ecp_access_price.iter().map(|p| 1.0 / p).sum();
    let price_gap = -inv_sum + nf / cfg.cloud_access_price;
    let share_term: f64 = (0..n)
        .map(|i| ccp.mu[i] * (-1.0 / cfg.ecp_access_price[i] - xs[i] * price_gap))
        .sum();
    let costate_term: f64 = ccp.theta.component_mul(&ecp.lambda).sum() * price_gap;

    let numerator = xi.sales * sum_a
        + 2.0 * xi.mismatch * nf * b * (k * cfg.nominal_rate * (1.0 - sum_x) - rc * (1.0 - sum_a))
        + cfg.rate_scale() * b * (share_term + costate_term);
    numerator / (2.0 * nf * b * (xi.sales + xi.mismatch * rc * nf * b))
}

/// `H_c = u_c + Σ_n μ_cn ẋ_n + Σ_nm θ_nm λ̇_nm`.
pub fn ccp_hamiltonian(cfg: &SystemConfig, snap: &MarketSnapshot, ecp: &EcpCostate, ccp: &CcpCostate) -> Result<f64> {
    let xdot = replicator_rhs(cfg, &snap.population, &snap.allocation)?;
    let share_term: f64 = (0..cfg.n_ecps()).map(|i| ccp.mu[i] * xdot[i]).sum();
    let lambda_dot = ecp_costate_rhs_all(cfg, &snap.allocation, ecp);
    let costate_term = ccp.theta.component_mul(&lambda_dot.lambda).sum();
    Ok(ccp_instant_utility(cfg, snap) + share_term + costate_term)
}

/// `H_c` as a function of the price alone, with every follower playing its
/// unconstrained response `A_n − B p`.
pub fn leader_hamiltonian(
    cfg: &SystemConfig,
    pop: &PopulationState,
    price: f64,
    ecp: &EcpCostate,
    ccp: &CcpCostate,
) -> Result<f64> {
    let requests = (0..cfg.n_ecps())
        .map(|i| decompose_request(cfg, pop, ecp, i).at(price))
        .collect();
    let snap = MarketSnapshot::new(pop.clone(), AllocationState::new_unchecked(requests), price);
    ccp_hamiltonian(cfg, &snap, ecp, ccp)
}

/// `μ̇_cn = μ_cn (ρ + Θ) − ξ1 p_c K`, `θ̇_nm = θ_nm Θ`.
pub fn ccp_costate_rhs(cfg: &SystemConfig, alloc: &AllocationState, ccp: &CcpCostate) -> CcpCostate {
    let th = theta(cfg, alloc);
    let drive = cfg.ccp_weights.revenue * cfg.cloud_access_price * cfg.k();
    CcpCostate {
        mu: ccp.mu.map(|m| m * (cfg.discount_rate + th) - drive),
        theta: &ccp.theta * th,
    }
}

/// Time derivative of every costate under the given allocation.
pub fn costate_rhs(cfg: &SystemConfig, alloc: &AllocationState, costates: &Costates) -> Costates {
    Costates {
        ecp: ecp_costate_rhs_all(cfg, alloc, &costates.ecp),
        ccp: ccp_costate_rhs(cfg, alloc, &costates.ccp),
    }
}

/// Maps raw requests and price into the feasible set: `p ∈ [0, p_max]`,
/// `r_n ∈ [0, 1 − ε]`, then a proportional rescale if `Σ r_n > 1 − ε`.
pub fn project_controls(cfg: &SystemConfig, requests: &[f64], price: f64) -> Controls {
    let price = price.clamp(0.0, cfg.price_cap());
    let ceiling = 1.0 - REQUEST_MARGIN;
    let mut r: Vec<f64> = requests.iter().map(|v| v.clamp(0.0, ceiling)).collect();
    let total: f64 = r.iter().sum();
    if total > ceiling {
        let scale = ceiling / total;
        r.iter_mut().for_each(|v| *v *= scale);
    }
    Controls {
        allocation: AllocationState::new_unchecked(r),
        price,
    }
}

/// Leader prices first, followers respond to the (projected) price, then
/// the requests are projected.
pub fn stackelberg_controls(cfg: &SystemConfig, pop: &PopulationState, costates: &Costates) -> Controls {
    let price = optimal_price(cfg, pop, &costates.ecp, &costates.ccp).clamp(0.0, cfg.price_cap());
    let requests: Vec<f64> = (0..cfg.n_ecps())
        .map(|n| decompose_request(cfg, pop, &costates.ecp, n).at(price))
        .collect();
    project_controls(cfg, &requests, price)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::replicator::analytic_ess;

    #[test]
    fn q_vector_examples() {
        let mut cfg = scenario_a();
        cfg.ecp_access_price = vec![0.5, 0.3];
        cfg.cloud_access_price = 0.25;
        let q = q_vector(&cfg, &pop(&[0.2, 0.3, 0.5]), 0);
        assert!((q[0] - 2.4).abs() < 1e-12);
        assert!((q[1] - 0.6).abs() < 1e-12);

        let q = q_vector(&cfg, &pop(&[0.0, 0.0, 1.0]), 1);
        assert!(q[0].abs() < 1e-15 && (q[1] - 1.0 / 0.3).abs() < 1e-12);

        cfg.ecp_access_price = vec![0.25, 0.25];
        let q = q_vector(&cfg, &pop(&[0.2, 0.3, 0.5]), 0);
        assert_eq!(q.as_slice(), &[4.0, 0.0]);
    }

    #[test]
    fn request_examples() {
        let mut cfg = scenario_a();
        // Kφ x_n = R_n and a free cloud: no request.
        cfg.nominal_rate = 2.0 / (100.0 * 0.3);
        let zero = EcpCostate::zeros(2);
        let x = pop(&[0.3, 0.3, 0.4]);
        assert!(optimal_request(&cfg, &x, 0.0, &zero, 0).abs() < 1e-15);
        let b = cfg.ecp_weights.payment / (2.0 * cfg.ecp_weights.mismatch * cfg.cloud_power);
        assert!((optimal_request(&cfg, &x, 0.7, &zero, 0) + b * 0.7).abs() < 1e-15);

        let mut cfg = scenario_a();
        cfg.ecp_weights = crate::model::EcpWeights {
            revenue: 1.0,
            payment: 2.0,
            mismatch: 1.0,
        };
        cfg.n_users = 10;
        cfg.nominal_rate = 0.5;
        cfg.ecp_power = vec![1.0, 1.0];
        let x = pop(&[0.4, 0.3, 0.3]);
        let r = optimal_request(&cfg, &x, 1.0, &zero, 0);
        assert!(r.abs() < 1e-15, "{r}");
        // Grid argmax of H_n over r_n lands on the same point.
        let best = (-5000..=5000)
            .map(|i| i as f64 * 1e-4)
            .map(|rn| {
                let s = snap(x.shares(), &[rn, 0.0], 1.0);
                (rn, ecp_hamiltonian(&cfg, &s, &zero, 0).unwrap())
            })
            .fold(
                (f64::NAN, f64::NEG_INFINITY),
                |acc, v| if v.1 > acc.1 { v } else { acc },
            );
        assert!(best.0.abs() <= 1e-4, "{best:?}");
    }

    #[test]
    fn decomposition_examples() {
        let mut cfg = scenario_a();
        cfg.ecp_weights.payment = 0.0;
        let x = pop(&[0.3, 0.3, 0.4]);
        let zero = EcpCostate::zeros(2);
        assert_eq!(decompose_request(&cfg, &x, &zero, 0).slope, 0.0);

        let mut cfg = scenario_a();
        cfg.nominal_rate = 1.0 / (100.0 * 0.3);
        assert!(decompose_request(&cfg, &x, &zero, 1).intercept.abs() < 1e-15);
    }

    #[test]
    fn hamiltonian_examples() {
        let cfg = scenario_a();
        let s = snap(&[0.3, 0.3, 0.4], &[0.1, 0.2], 0.4);
        let zero = EcpCostate::zeros(2);
        assert_eq!(
            ecp_hamiltonian(&cfg, &s, &zero, 0).unwrap(),
            ecp_instant_utility(&cfg, &s, 0)
        );
        let r = alloc(&[0.1, 0.2]);
        let ess = analytic_ess(&cfg, &r).shares;
        let s = MarketSnapshot::new(ess, r, 0.4);
        let lam = EcpCostate {
            lambda: DMatrix::from_row_slice(2, 2, &[50.0, -3.0, 7.0, 20.0]),
        };
        let h = ecp_hamiltonian(&cfg, &s, &lam, 1).unwrap();
        assert!((h - ecp_instant_utility(&cfg, &s, 1)).abs() < 1e-10);

        let zc = CcpCostate::zeros(2);
        let s = snap(&[0.3, 0.3, 0.4], &[0.1, 0.2], 0.4);
        assert_eq!(
            ccp_hamiltonian(&cfg, &s, &zero, &zc).unwrap(),
            ccp_instant_utility(&cfg, &s)
        );
    }

    #[test]
    fn costate_rhs_examples() {
        let cfg = scenario_a();
        let r = alloc(&[0.0, 0.0]);
        let zero = EcpCostate::zeros(2);
        let d = ecp_costate_rhs(&cfg, &r, &zero, 0);
        assert_eq!(d[1], 0.0);
        assert!((d[0] + 30.0).abs() < 1e-12);

        let growth = cfg.discount_rate + theta(&cfg, &r);
        let mut lam = EcpCostate::zeros(2);
        lam.lambda[(0, 0)] = 30.0 / growth;
        assert!(ecp_costate_rhs(&cfg, &r, &lam, 0)[0].abs() < 1e-12);

        let d = ccp_costate_rhs(&cfg, &r, &CcpCostate::zeros(2));
        assert!(d.mu.iter().all(|m| (m + 20.0).abs() < 1e-12));
        assert!(d.theta.iter().all(|t| *t == 0.0));
        let mut c = CcpCostate::zeros(2);
        c.mu.fill(20.0 / growth);
        assert!(ccp_costate_rhs(&cfg, &r, &c).mu.iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn price_reduces_without_costates_or_mismatch() {
        let mut cfg = scenario_a();
        cfg.ccp_weights.mismatch = 0.0;
        let x = pop(&[0.3, 0.3, 0.4]);
        let zero = EcpCostate::zeros(2);
        let p = optimal_price(&cfg, &x, &zero, &CcpCostate::zeros(2));
        let resp: Vec<_> = (0..2).map(|n| decompose_request(&cfg, &x, &zero, n)).collect();
        let sum_a: f64 = resp.iter().map(|r| r.intercept).sum();
        assert!((p - sum_a / (2.0 * 2.0 * resp[0].slope)).abs() < 1e-12);
    }

    #[test]
    fn flat_round_trip() {
        let mut c = Costates::zeros(3);
        for (i, v) in c.ecp.lambda.iter_mut().enumerate() {
            *v = i as f64;
        }
        c.ccp.mu[2] = -4.0;
        c.ccp.theta[(1, 2)] = 9.0;
        assert_eq!(Costates::from_flat(3, &c.to_flat()), c);
    }

    #[test]
    fn projection_respects_bounds() {
        let cfg = scenario_a();
        let c = project_controls(&cfg, &[-0.2, 0.5], -1.0);
        assert_eq!(c.price, 0.0);
        assert_eq!(c.allocation.requests(), &[0.0, 0.5]);
        let c = project_controls(&cfg, &[0.9, 0.9], 1e9);
        assert_eq!(c.price, cfg.price_cap());
        assert!((c.allocation.total() - (1.0 - REQUEST_MARGIN)).abs() < 1e-15);
        assert!((c.allocation.requests()[0] - c.allocation.requests()[1]).abs() < 1e-15);
        let c = project_controls(&cfg, &[1.5, 0.0], 0.1);
        assert_eq!(c.allocation.requests()[0], 1.0 - REQUEST_MARGIN);
    }
}
