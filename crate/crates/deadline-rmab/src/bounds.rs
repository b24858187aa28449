//! Performance bounds: the window-arrival gap bound and the Poisson tail
//! bound behind the asymptotic-optimality argument.
//!
//! The gap between the optimal value and the index policy's value is at most
//!
//! ```text
//! C/(1-β) · E[I 1(I > M)],   C = |1-c_min| + F(B̄) + |1-c_max|,
//! ```
//!
//! where `I` counts the jobs admitted to the queue within one maximum-lead-
//! time window. For Poisson `I` with mean `μ` and `M > μ-1` the tail term is
//! dominated by `μ·Pr(I=M)/(1 - μ/(M+1))`, which Stirling's formula turns
//! into a closed form that vanishes as `M` grows when `μ <= M/e`.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::model::{ArrivalMode, ProblemSpec};
use crate::sim::OccupancyProcess;

/// Burn-in before window statistics are recorded, in windows.
pub const BURN_IN_WINDOWS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMethod {
    /// Per-position admissions are independent Bernoulli draws. Exact when
    /// every arriving job occupies its position for a full window, i.e. the
    /// arrival support puts all jobs at `T = T̄`.
    ExactBinomial,
    /// Simulate the occupancy process and histogram the window counts.
    MonteCarlo,
}

/// Distribution of `I[t]`, the number of jobs admitted during the trailing
/// window of `T̄` slots, in the stationary regime.
#[derive(Debug, Clone)]
pub struct ArrivalWindowStats {
    /// Window length in slots.
    pub window: u32,
    /// `probs[k] = Pr(I = k)`. Under the binomial method the support is
    /// `0..=N`; Monte Carlo extends it if short jobs let a position admit
    /// twice within one window.
    pub probs: Vec<f64>,
    pub method: WindowMethod,
    /// Monte-Carlo sample count (`None` for the exact method).
    pub samples: Option<usize>,
}

impl ArrivalWindowStats {
    pub fn point_mass(window: u32, k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Self { window, probs, method: WindowMethod::ExactBinomial, samples: None }
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    /// `Σ_{k>m} k·Pr(I=k)`, the tail expectation entering the gap bound.
    pub fn weighted_tail(&self, m: usize) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .skip(m + 1)
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// Binomial standard error of `probs[k]` (Monte Carlo only).
    pub fn stderr(&self, k: usize) -> f64 {
        match self.samples {
            Some(n) if n > 0 => {
                let p = self.probs.get(k).copied().unwrap_or(0.0);
                (p * (1.0 - p) / n as f64).sqrt()
            }
            _ => 0.0,
        }
    }
}

/// Distribution of admitted-job counts per window.
///
/// `ExactBinomial` uses the renewal argument: with all jobs pinned at
/// `T = T̄`, one position admits at most one job per window, at rate
/// `1/(T̄ + Q(0,0)/(1-Q(0,0)))` per slot, so the window count is
/// `Binomial(N, p)` with `p = T̄ / (T̄ + Q(0,0)/(1-Q(0,0)))`.
pub fn arrival_window_distribution(
    spec: &ProblemSpec,
    method: WindowMethod,
    samples: usize,
    seed: u64,
) -> Result<ArrivalWindowStats> {
    arrival_window_distribution_under(spec, ArrivalMode::Independent, method, samples, seed)
}

/// Same statistic under an explicit arrival mode; the Poisson mode feeds the
/// asymptotic experiments.
pub fn arrival_window_distribution_under(
    spec: &ProblemSpec,
    mode: ArrivalMode,
    method: WindowMethod,
    samples: usize,
    seed: u64,
) -> Result<ArrivalWindowStats> {
    let window = spec.t_bar().max(1);
    match method {
        WindowMethod::ExactBinomial => {
            if !matches!(mode, ArrivalMode::Independent) {
                return Err(Error::MethodInvalid(
                    "exact_binomial applies to the independent arrival model".into(),
                ));
            }
            let q00 = spec.arrivals.q00();
            if q00 >= 1.0 {
                return Ok(ArrivalWindowStats::point_mass(window, 0));
            }
            let t_bar = spec.t_bar();
            if spec.arrivals.support().iter().any(|&(t, _, _)| t >= 1 && t != t_bar) {
                return Err(Error::MethodInvalid(
                    "exact_binomial needs every job to occupy a full window (all arrivals at T = T̄)"
                        .into(),
                ));
            }
            let p = t_bar as f64 / (t_bar as f64 + q00 / (1.0 - q00));
            Ok(ArrivalWindowStats {
                window,
                probs: binomial_pmf(spec.n, p),
                method,
                samples: None,
            })
        }
        WindowMethod::MonteCarlo => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut process = OccupancyProcess::new(spec, mode);
            let burn_in = (BURN_IN_WINDOWS * window) as usize;
            // Windows recorded one renewal cycle apart are close to
            // independent, so the binomial standard errors apply.
            let stride = window as usize + renewal_cycle_estimate(spec, mode);
            let mut recent = std::collections::VecDeque::with_capacity(window as usize);
            let mut in_window = 0usize;
            let mut counts: Vec<usize> = Vec::new();
            let mut recorded = 0usize;
            let total_slots = burn_in + samples.saturating_mul(stride);
            for slot in 0..total_slots {
                let admitted = process.step(&mut rng);
                in_window += admitted;
                recent.push_back(admitted);
                if recent.len() > window as usize {
                    in_window -= recent.pop_front().unwrap();
                }
                if slot >= burn_in && (slot - burn_in) % stride == 0 {
                    if counts.len() <= in_window {
                        counts.resize(in_window + 1, 0);
                    }
                    counts[in_window] += 1;
                    recorded += 1;
                }
            }
            let probs = counts.iter().map(|&c| c as f64 / recorded as f64).collect();
            Ok(ArrivalWindowStats { window, probs, method, samples: Some(recorded) })
        }
    }
}

/// Rough per-position renewal length, used to decorrelate recorded windows.
fn renewal_cycle_estimate(spec: &ProblemSpec, mode: ArrivalMode) -> usize {
    match mode {
        ArrivalMode::Independent => {
            let q00 = spec.arrivals.q00();
            let wait = if q00 < 1.0 { q00 / (1.0 - q00) } else { 0.0 };
            (spec.arrivals.mean_job_lead_time() + wait).ceil().min(1e6) as usize + 1
        }
        ArrivalMode::PoissonUniform { .. } => spec.t_bar().max(1) as usize,
    }
}

fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    if p <= 0.0 {
        let mut probs = vec![0.0; n + 1];
        probs[0] = 1.0;
        return probs;
    }
    if p >= 1.0 {
        let mut probs = vec![0.0; n + 1];
        probs[n] = 1.0;
        return probs;
    }
    let mut probs = vec![0.0; n + 1];
    probs[0] = (1.0 - p).powi(n as i32);
    for k in 0..n {
        probs[k + 1] = probs[k] * ((n - k) as f64 / (k + 1) as f64) * (p / (1.0 - p));
    }
    probs
}

/// `C/(1-β) · Σ_{k>M} k·Pr(I=k)` with `C = |1-c_min| + F(B̄) + |1-c_max|`.
pub fn gap_bound(spec: &ProblemSpec, stats: &ArrivalWindowStats) -> f64 {
    gap_constant(spec) / (1.0 - spec.beta) * stats.weighted_tail(spec.m)
}

/// The per-event reward-difference constant `C`.
pub fn gap_constant(spec: &ProblemSpec) -> f64 {
    (1.0 - spec.costs.min_cost()).abs()
        + spec.penalty.eval(spec.b_bar())
        + (1.0 - spec.costs.max_cost()).abs()
}

/// The two sides of the Poisson tail estimate.
#[derive(Debug, Clone, Copy)]
pub struct PoissonTail {
    /// `μ·Pr(I >= M)`, by direct summation.
    pub exact_tail: f64,
    /// `μ·Pr(I = M)/(1 - μ/(M+1))`, the geometric-domination form.
    pub ratio_bound: f64,
    /// The ratio form with `M!` replaced by its Stirling lower bound.
    pub stirling_bound: f64,
}

/// Evaluate the tail chain for Poisson mean `mu` at capacity `m`.
/// Requires `m > mu - 1`; for `mu > 0` the strict chain
/// `exact_tail < ratio_bound <= stirling_bound` holds.
pub fn poisson_tail_bound(mu: f64, m: u32) -> Result<PoissonTail> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::DomainError(format!("mean {mu} must be nonnegative")));
    }
    if (m as f64) <= mu - 1.0 {
        return Err(Error::DomainError(format!("need M > mu - 1, got M={m}, mu={mu}")));
    }
    if mu == 0.0 {
        return Ok(PoissonTail { exact_tail: 0.0, ratio_bound: 0.0, stirling_bound: 0.0 });
    }
    let pmf_m = poisson_pmf_at(mu, m);
    let exact_tail = mu * poisson_tail_prob(mu, m);
    let ratio_bound = mu * pmf_m / (1.0 - mu / (m + 1) as f64);
    let mf = m as f64;
    let log_stirling = (mf + 1.0) * mu.ln() + (mf - mu) + (mf + 1.0).ln()
        - 0.5 * (2.0 * std::f64::consts::PI).ln()
        - (mf + 0.5) * mf.ln()
        - (mf + 1.0 - mu).ln();
    Ok(PoissonTail { exact_tail, ratio_bound, stirling_bound: log_stirling.exp() })
}

fn poisson_pmf_at(mu: f64, m: u32) -> f64 {
    let mut pmf = (-mu).exp();
    for k in 0..m {
        pmf *= mu / (k + 1) as f64;
    }
    pmf
}

/// `Pr(I >= m)` by direct tail summation — no cancellation for tiny tails.
fn poisson_tail_prob(mu: f64, m: u32) -> f64 {
    let mut pmf = poisson_pmf_at(mu, m);
    let mut total = 0.0;
    let mut k = m as u64;
    loop {
        total += pmf;
        pmf *= mu / (k + 1) as f64;
        k += 1;
        if (k as f64) > mu && pmf < total * 1e-18 + 1e-300 {
            break;
        }
    }
    total.min(1.0)
}

/// `μ·Pr(I >= m)` for a Poisson mean `mu`. Unlike [`poisson_tail_bound`]
/// this carries no domain restriction.
pub fn poisson_mass_tail(mu: f64, m: u32) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    mu * poisson_tail_prob(mu, m)
}

/// `Σ_{k >= m+1} k·pmf(k)` for a Poisson mean `mu`, summed until the residual
/// mass is negligible. Equals `μ·Pr(I >= m)` exactly; the tests assert the
/// identity numerically.
pub fn poisson_weighted_tail(mu: f64, m: u32) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    let mut pmf = (-mu).exp();
    let mut k = 0u64;
    // skip to k = m+1
    while k <= m as u64 {
        pmf *= mu / (k + 1) as f64;
        k += 1;
    }
    let mut total = 0.0;
    loop {
        total += k as f64 * pmf;
        pmf *= mu / (k + 1) as f64;
        k += 1;
        if pmf * (k as f64) < 1e-15 && (k as f64) > mu {
            break;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArrivalDistribution, CostChain, PenaltyFunction};

    fn spec_with_arrivals(n: usize, m: usize, arrivals: ArrivalDistribution) -> ProblemSpec {
        ProblemSpec::new(
            n,
            m,
            0.9,
            arrivals,
            PenaltyFunction::quadratic(0.2).unwrap(),
            CostChain::constant(0.5),
        )
        .unwrap()
    }

    #[test]
    fn saturated_queue_admits_n_per_window() {
        // No empty outcome: every expiry admits immediately, jobs span T̄.
        let spec = spec_with_arrivals(2, 1, ArrivalDistribution::new(vec![(3, 2, 1.0)]).unwrap());
        let stats =
            arrival_window_distribution(&spec, WindowMethod::ExactBinomial, 0, 0).unwrap();
        assert_eq!(stats.probs, vec![0.0, 0.0, 1.0]);
        let mc = arrival_window_distribution(&spec, WindowMethod::MonteCarlo, 20_000, 1).unwrap();
        assert!((mc.probs[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_arrivals_admit_nothing() {
        let spec = spec_with_arrivals(3, 1, ArrivalDistribution::never());
        let stats =
            arrival_window_distribution(&spec, WindowMethod::ExactBinomial, 0, 0).unwrap();
        assert_eq!(stats.probs[0], 1.0);
    }

    #[test]
    fn binomial_matches_monte_carlo() {
        // T̄ = 3 point mass, Q(0,0) = 7/8 gives p = 3/(3+7) = 0.3 per position.
        let q00 = 7.0 / 8.0;
        let spec = spec_with_arrivals(
            10,
            3,
            ArrivalDistribution::new(vec![(0, 0, q00), (3, 2, 1.0 - q00)]).unwrap(),
        );
        let exact =
            arrival_window_distribution(&spec, WindowMethod::ExactBinomial, 0, 0).unwrap();
        let p: f64 = 0.3;
        // spot-check the binomial pmf itself
        let pmf3 = 120.0 * p.powi(3) * (1.0 - p).powi(7);
        assert!((exact.probs[3] - pmf3).abs() < 1e-12);
        let mc =
            arrival_window_distribution(&spec, WindowMethod::MonteCarlo, 200_000, 7).unwrap();
        for k in 0..=10usize {
            let se = mc.stderr(k).max(1e-4);
            let diff = (exact.probs[k] - mc.probs.get(k).copied().unwrap_or(0.0)).abs();
            assert!(diff < 3.0 * se, "k={k}: exact {} mc {:?}", exact.probs[k], mc.probs.get(k));
        }
    }

    #[test]
    fn binomial_rejects_mixed_lead_times() {
        let spec = spec_with_arrivals(
            4,
            2,
            ArrivalDistribution::new(vec![(0, 0, 0.4), (2, 1, 0.3), (3, 1, 0.3)]).unwrap(),
        );
        assert!(matches!(
            arrival_window_distribution(&spec, WindowMethod::ExactBinomial, 0, 0),
            Err(Error::MethodInvalid(_))
        ));
    }

    #[test]
    fn gap_constant_hand_value() {
        let spec = ProblemSpec::new(
            3,
            1,
            0.5,
            ArrivalDistribution::new(vec![(0, 0, 0.5), (3, 3, 0.5)]).unwrap(),
            PenaltyFunction::quadratic(1.0).unwrap(),
            CostChain::new(vec![0.2, 0.8], vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(),
        )
        .unwrap();
        assert!((gap_constant(&spec) - 10.0).abs() < 1e-12);
        // uniform window counts on {0,1,2,3}, M = 1: 20·(2+3)/4 = 25
        let stats = ArrivalWindowStats {
            window: 3,
            probs: vec![0.25; 4],
            method: WindowMethod::ExactBinomial,
            samples: None,
        };
        assert!((gap_bound(&spec, &stats) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn gap_bound_zero_without_tail_mass() {
        let spec = spec_with_arrivals(3, 3, ArrivalDistribution::new(vec![(3, 2, 1.0)]).unwrap());
        let stats = ArrivalWindowStats::point_mass(3, 2);
        assert_eq!(gap_bound(&spec, &stats), 0.0);
    }

    #[test]
    fn gap_bound_monotone_in_penalty_and_cost_spread() {
        let stats = ArrivalWindowStats {
            window: 3,
            probs: vec![0.2, 0.3, 0.3, 0.2],
            method: WindowMethod::ExactBinomial,
            samples: None,
        };
        let arrivals = ArrivalDistribution::new(vec![(0, 0, 0.5), (3, 3, 0.5)]).unwrap();
        let base = |kappa: f64, lo: f64, hi: f64| {
            ProblemSpec::new(
                3,
                1,
                0.9,
                arrivals.clone(),
                PenaltyFunction::quadratic(kappa).unwrap(),
                CostChain::new(vec![lo, hi], vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(),
            )
            .unwrap()
        };
        // heavier penalty -> larger bound
        assert!(gap_bound(&base(0.5, 0.3, 0.8), &stats) > gap_bound(&base(0.2, 0.3, 0.8), &stats));
        // wider |1 - c| at either end -> larger bound
        assert!(gap_bound(&base(0.2, 0.1, 0.8), &stats) > gap_bound(&base(0.2, 0.3, 0.8), &stats));
        assert!(gap_bound(&base(0.2, 0.3, 1.5), &stats) > gap_bound(&base(0.2, 0.3, 0.8), &stats));
    }

    #[test]
    fn gap_bound_monotone_in_capacity() {
        let stats = ArrivalWindowStats {
            window: 3,
            probs: vec![0.1, 0.2, 0.3, 0.25, 0.15],
            method: WindowMethod::ExactBinomial,
            samples: None,
        };
        let arrivals = ArrivalDistribution::new(vec![(0, 0, 0.5), (3, 3, 0.5)]).unwrap();
        let mut prev = f64::INFINITY;
        for m in 1..=4 {
            let spec = spec_with_arrivals(4, m, arrivals.clone());
            let b = gap_bound(&spec, &stats);
            assert!(b <= prev);
            prev = b;
        }
    }

    #[test]
    fn weighted_tail_equals_conditional_form() {
        let probs = [0.05, 0.15, 0.2, 0.25, 0.2, 0.1, 0.05];
        let stats = ArrivalWindowStats {
            window: 4,
            probs: probs.to_vec(),
            method: WindowMethod::ExactBinomial,
            samples: None,
        };
        for m in 0..probs.len() {
            let tail_prob: f64 = probs.iter().skip(m + 1).sum();
            let conditional = if tail_prob > 0.0 {
                let e: f64 = probs
                    .iter()
                    .enumerate()
                    .skip(m + 1)
                    .map(|(k, p)| k as f64 * p / tail_prob)
                    .sum();
                e * tail_prob
            } else {
                0.0
            };
            assert!((stats.weighted_tail(m) - conditional).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_tail_example_values() {
        let t = poisson_tail_bound(1.0, 2).unwrap();
        assert!((t.exact_tail - (1.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-12);
        assert!((t.ratio_bound - 0.75 * (-1.0f64).exp()).abs() < 1e-12);
        assert!(t.exact_tail < t.ratio_bound);
        assert!(t.ratio_bound <= t.stirling_bound);
    }

    #[test]
    fn poisson_tail_zero_mean() {
        let t = poisson_tail_bound(0.0, 4).unwrap();
        assert_eq!(t.exact_tail, 0.0);
    }

    #[test]
    fn poisson_domain_check() {
        assert!(poisson_tail_bound(3.5, 2).is_err());
        assert!(poisson_tail_bound(2.9, 2).is_ok());
    }

    #[test]
    fn stirling_bound_decreases_in_light_traffic() {
        let mut prev = f64::INFINITY;
        for m in 5..=50u32 {
            let mu = m as f64 / std::f64::consts::E;
            let t = poisson_tail_bound(mu, m).unwrap();
            assert!(t.stirling_bound < prev, "M={m}");
            prev = t.stirling_bound;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn poisson_weighted_tail_identity() {
        for &mu in &[0.5, 1.0, 5.0] {
            for m in 1..=20u32 {
                let mass = poisson_mass_tail(mu, m);
                let direct = poisson_weighted_tail(mu, m);
                assert!(
                    (mass - direct).abs() < 1e-12,
                    "mu={mu} M={m}: {mass} vs {direct}"
                );
            }
        }
    }
}
