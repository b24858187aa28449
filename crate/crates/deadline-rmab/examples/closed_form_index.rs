//! Closed-form Whittle indices under a constant processing cost.
//!
//! Prints the index across the lead-time/workload grid: the processing
//! profit `1 - c0` while a job still fits its deadline, rising by the
//! discounted marginal penalty once it cannot finish.
//!
//! ```sh
//! cargo run --example closed_form_index
//! ```

use deadline_rmab::whittle::closed_form_index;
use deadline_rmab::PenaltyFunction;

fn main() {
    let c0 = 0.5;
    let beta = 0.999;
    let penalty = PenaltyFunction::quadratic(0.2).unwrap();
    let (t_bar, b_bar) = (12u32, 9u32);

    print!("T\\B ");
    for b in 0..=b_bar {
        print!("{b:>7}");
    }
    println!();
    for t in 0..=t_bar {
        print!("{t:>3} ");
        for b in 0..=b_bar {
            if t == 0 && b > 0 {
                print!("{:>7}", "-");
            } else {
                print!("{:>7.3}", closed_form_index(t, b, c0, beta, &penalty));
            }
        }
        println!();
    }
    println!();
    println!("feasible jobs (B < T) all share the profit 1 - c0 = {:.3};", 1.0 - c0);
    println!("jobs past the point of completion add the marginal penalty step.");
}
