//! Exact solution of small instances: optimal values, greedy actions, the
//! three-job instance on which no index policy can be optimal, and the
//! sandwich `simulated <= optimal <= dual bound`.
//!
//! ```sh
//! cargo run --example exact_oracle
//! ```

use deadline_rmab::exact::{default_nu_grid, lagrangian_upper_bound, solve_joint};
use deadline_rmab::model::{
    ArrivalDistribution, CostChain, JobState, PenaltyFunction, ProblemSpec, SystemState,
};
use deadline_rmab::policy::{Policy, PolicyKind};
use deadline_rmab::sim::{run, SimConfig};
use deadline_rmab::whittle::{build_index_table, BISECTION_TOL};
use std::sync::Arc;

fn job(t: u32, b: u32) -> JobState {
    JobState::new(t, b).unwrap()
}

fn main() {
    // Zero profit (c = 1), quadratic penalty, zero-laxity arrivals: the
    // optimal choice between a (1,1) and a (2,2) job depends on the rest of
    // the queue, so no per-job index can reproduce it.
    let spec = ProblemSpec::new(
        3,
        1,
        0.4,
        ArrivalDistribution::new(vec![(1, 1, 0.5), (2, 2, 0.5)]).unwrap(),
        PenaltyFunction::quadratic(1.0).unwrap(),
        CostChain::new(vec![1.0], vec![vec![1.0]]).unwrap(),
    )
    .unwrap();
    let table = solve_joint(&spec, 1e-10).unwrap();
    println!("joint states solved: {} ({} sweeps)", table.n_states(), table.iterations);

    for jobs in [
        vec![job(1, 1), job(2, 2), job(2, 2)],
        vec![job(1, 1), job(1, 1), job(2, 2)],
    ] {
        let state = SystemState::new(0, jobs.clone());
        let action = table.greedy_action(&state);
        let served: Vec<(u32, u32)> = jobs
            .iter()
            .zip(&action.active)
            .filter(|(_, &a)| a)
            .map(|(j, _)| (j.lead_time, j.remaining_work))
            .collect();
        println!(
            "state {:?}: value {:>8.4}, greedy serves {:?}",
            jobs.iter().map(|j| (j.lead_time, j.remaining_work)).collect::<Vec<_>>(),
            table.value(&state),
            served
        );
    }

    // sandwich on a second small instance with real profits
    let spec = ProblemSpec::new(
        2,
        1,
        0.8,
        ArrivalDistribution::new(vec![(0, 0, 0.4), (2, 1, 0.3), (3, 2, 0.3)]).unwrap(),
        PenaltyFunction::quadratic(0.3).unwrap(),
        CostChain::new(vec![0.3, 0.9], vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap(),
    )
    .unwrap();
    let exact = solve_joint(&spec, 1e-10).unwrap();
    let initial = SystemState::empty(spec.n, 0);
    let opt = exact.value(&initial);
    let ub = lagrangian_upper_bound(&spec, &initial, &default_nu_grid(&spec, 200));
    let whittle = Policy::new(
        PolicyKind::Whittle,
        &spec,
        Some(Arc::new(build_index_table(&spec, BISECTION_TOL).unwrap())),
        0,
    )
    .unwrap();
    let report = run(&spec, &whittle, &SimConfig::new(&spec, 400, 11)).unwrap();
    println!(
        "\nsandwich: simulated {:.4} (± {:.4})  <=  optimal {:.4}  <=  dual bound {:.4}",
        report.mean_reward, report.stderr_reward, opt, ub
    );
}
