//! Evolutionary population dynamics and Stackelberg pricing for a market of
//! edge compute providers that resell cloud capacity to a shared user pool.
//!
//! Users pick a provider by replicator dynamics on the compute they receive
//! per unit of access fee. Edge providers (followers) buy cloud capacity at a
//! unit price set by the cloud provider (leader). [`solver`] computes the
//! open-loop equilibrium by forward-backward sweeping and the myopic
//! baseline that ignores the population dynamics.

// `!(a > b)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod model;
pub mod replicator;
pub mod solver;
pub mod stackelberg;

pub use error::{Error, Result};
pub use model::{AllocationState, CcpWeights, EcpWeights, MarketSnapshot, PopulationState, SystemConfig};
pub use replicator::{analytic_ess, EssResult, MeanWeights};
pub use solver::{simulate_fixed, solve_open_loop, solve_ssec, Player, SweepParams, SweepReport, Trajectory, Verdict};
pub use stackelberg::{Controls, Costates};
