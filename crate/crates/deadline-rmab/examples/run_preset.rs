//! Run a built-in experiment preset (shrunk for a quick demonstration) and
//! show the CSV it writes. `dlsched preset --name <name>` does the same from
//! the command line at full preset scale.
//!
//! ```sh
//! cargo run --release --example run_preset
//! ```

use deadline_rmab::preset::{built_in, built_in_names, run_preset};

fn main() {
    println!("built-in presets: {:?}\n", built_in_names());

    let mut preset = built_in("constant-cost-ratio").unwrap();
    // shrink for the example: fewer paths, shorter horizon
    preset.replications = 8;
    preset.horizon = Some(1200);
    let outcome = run_preset(&preset, "out").unwrap();

    println!("wrote {}", outcome.csv_path.display());
    println!("{:<6} {:<14} {:>12} {:>9} {:>11}", "M/N", "policy", "mean", "stderr", "completion");
    for row in &outcome.rows {
        println!(
            "{:<6} {:<14} {:>12.2} {:>9.2} {:>11.4}",
            row.sweep, row.policy, row.mean_reward, row.stderr, row.completion_ratio
        );
    }
    println!("\nat M/N = 1 every policy can serve every job and the rows coincide.");
}
