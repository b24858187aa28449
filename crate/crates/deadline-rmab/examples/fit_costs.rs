//! Fit a cost Markov chain from a price trace: synthesize a day-cycling
//! price series, quantize it, and read off the transition structure.
//!
//! ```sh
//! cargo run --example fit_costs
//! ```

use deadline_rmab::data::{fit_cost_chain, PriceTrace, Quantizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn main() {
    // hourly prices: a daily sinusoid plus noise and occasional spikes
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    let samples: Vec<(i64, f64)> = (0..24 * 120)
        .map(|h| {
            let phase = (h % 24) as f64 / 24.0 * std::f64::consts::TAU;
            let base = 0.5 + 0.3 * (phase - 1.0).sin();
            let noise = 0.08 * rng.gen::<f64>();
            let spike = if rng.gen::<f64>() < 0.02 { 0.6 } else { 0.0 };
            (h as i64, base + noise + spike)
        })
        .collect();
    let trace = PriceTrace::new(samples).unwrap();

    for quantizer in [Quantizer::EqualFrequency, Quantizer::EqualWidth] {
        let fit = fit_cost_chain(&trace, 5, quantizer).unwrap();
        println!("{quantizer:?}: states {:?}", fit.chain.states());
        for j in 0..fit.chain.n_states() {
            let row: Vec<String> =
                fit.chain.row(j).iter().map(|p| format!("{p:.3}")).collect();
            println!("  from {:.3}: [{}]", fit.chain.cost(j), row.join(", "));
        }
        if fit.degenerate {
            println!("  (trace collapsed below the requested state count)");
        }
        println!();
    }
}
