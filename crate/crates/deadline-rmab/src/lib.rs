//! Stochastic deadline scheduling as a restless multi-armed bandit.
//!
//! Jobs with random workloads and deadlines arrive at a queue of `N`
//! positions; at most `M` processors work per slot, paying a Markov-
//! modulated marginal cost and earning a unit payment per processed slot;
//! unfinished work at a deadline incurs a convex penalty. The crate
//! computes Whittle indices for this problem (closed form under constant
//! cost, bisection otherwise), runs index and heuristic policies in a
//! seeded discrete-time simulator, solves small instances exactly as an
//! optimality oracle, and evaluates the gap-to-optimality and Poisson tail
//! bounds that explain when the index policy is near optimal.
//!
//! Start from the `examples/` directory — one runnable example per
//! capability — or from the `dlsched` binary, which wraps the same entry
//! points in subcommands (`fit-costs`, `build-index`, `simulate`, `exact`,
//! `bounds`, `preset`).

pub mod bounds;
pub mod config;
pub mod data;
pub mod error;
pub mod exact;
pub mod model;
pub mod policy;
pub mod preset;
pub mod sim;
pub mod whittle;

pub use error::{Error, Result};
pub use model::{
    Action, ArrivalDistribution, ArrivalMode, CostChain, JobState, PenaltyFunction, ProblemSpec,
    SystemState,
};
pub use policy::{Policy, PolicyKind};
pub use sim::{SimConfig, SimReport};
pub use whittle::{
    build_index_table, closed_form_index, index_by_bisection, subsidy_value_iteration, IndexTable,
};
