//! The single-arm subsidy problem behind the index: value iteration against
//! the exact finite solver, the passive-minus-active preference `f`, and the
//! single-crossing structure that makes the index well defined.
//!
//! ```sh
//! cargo run --example subsidy_problem
//! ```

use deadline_rmab::model::{ArrivalDistribution, CostChain, PenaltyFunction, ProblemSpec};
use deadline_rmab::whittle::{
    single_crossing_probe, subsidy_value_iteration, ArmAction, SingleArmSolution,
};

fn main() {
    let spec = ProblemSpec::new(
        1,
        1,
        0.9,
        ArrivalDistribution::uniform_jobs(0.4, 4, 3).unwrap(),
        PenaltyFunction::quadratic(0.2).unwrap(),
        CostChain::new(vec![0.3, 0.8], vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap(),
    )
    .unwrap();

    let nu = 0.4;
    let vi = subsidy_value_iteration(&spec, nu, 1e-10).unwrap();
    let fast = SingleArmSolution::solve(&spec, nu);
    println!("subsidy nu = {nu}: value iteration converged in {} sweeps", vi.sweeps);
    println!("state (T,B,c)   V (iterated)   V (exact)      f = passive - active");
    for (t, b) in [(4u32, 3u32), (3, 2), (2, 1), (1, 1), (2, 0)] {
        for j in 0..2 {
            println!(
                "({t},{b},{:.1})    {:>12.6}   {:>12.6}   {:>12.6}",
                spec.costs.cost(j),
                vi.value(t, b, j),
                fast.value(t, b, j),
                fast.action_pref(&spec, t, b, j),
            );
        }
    }

    // the optimal action flips from active to passive exactly once in nu
    let grid: Vec<f64> = (0..60).map(|i| -1.0 + 0.05 * i as f64).collect();
    let acts = single_crossing_probe(&spec, (3, 2, 0), &grid);
    let switch = acts.iter().position(|&a| a == ArmAction::Passive).unwrap();
    println!(
        "\nstate (3,2,c0): active for nu < {:.2}, passive beyond — the index sits in between",
        grid[switch]
    );
}
