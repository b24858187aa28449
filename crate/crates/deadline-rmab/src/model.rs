//! Problem data types and single-slot dynamics.
//!
//! A queue has `N` positions. Position `i` holds at most one job, described by
//! its lead time `T` (slots until the deadline) and remaining work `B` (slots
//! of processing still required). `(0,0)` marks an empty position; a job that
//! finished early but has not reached its deadline sits at `(T, 0)` with
//! `T > 0`. Processing one slot pays `1 - c` where `c` is the current marginal
//! cost, drawn from a finite Markov chain. A job removed at its deadline with
//! `B` slots unfinished costs the convex penalty `F(B)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// State of one queue position: lead time and remaining workload.
///
/// `(0,0)` is the empty state. `lead_time == 0` forces `remaining_work == 0`;
/// the converse does not hold (a finished job occupies its position until the
/// deadline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JobState {
    pub lead_time: u32,
    pub remaining_work: u32,
}

impl JobState {
    pub fn new(lead_time: u32, remaining_work: u32) -> Result<Self> {
        if lead_time == 0 && remaining_work > 0 {
            return Err(Error::InvalidSpec(format!(
                "job state (0, {remaining_work}) has workload but no lead time"
            )));
        }
        Ok(Self { lead_time, remaining_work })
    }

    pub const fn empty() -> Self {
        Self { lead_time: 0, remaining_work: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.lead_time == 0
    }

    /// Laxity `L = T - B`; negative for infeasible jobs.
    pub fn laxity(&self) -> i64 {
        self.lead_time as i64 - self.remaining_work as i64
    }
}

/// Finite Markov chain of marginal processing costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostChain {
    states: Vec<f64>,
    transition: Vec<Vec<f64>>,
}

const ROW_SUM_TOL: f64 = 1e-12;

impl CostChain {
    pub fn new(states: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidSpec("cost chain needs at least one state".into()));
        }
        if !states.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidSpec("cost states must be finite".into()));
        }
        if states.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec("cost states must be strictly increasing".into()));
        }
        if transition.len() != states.len() {
            return Err(Error::InvalidSpec(format!(
                "transition matrix has {} rows for {} states",
                transition.len(),
                states.len()
            )));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != states.len() {
                return Err(Error::InvalidSpec(format!("transition row {i} has wrong length")));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidSpec(format!("transition row {i} has entries outside [0,1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidSpec(format!(
                    "transition row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { states, transition })
    }

    /// Single-state chain with cost fixed at `c0`.
    pub fn constant(c0: f64) -> Self {
        Self { states: vec![c0], transition: vec![vec![1.0]] }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn cost(&self, index: usize) -> f64 {
        self.states[index]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.transition[index]
    }

    pub fn min_cost(&self) -> f64 {
        self.states[0]
    }

    pub fn max_cost(&self) -> f64 {
        *self.states.last().unwrap()
    }
}

/// Distribution of what appears at a freed queue position: either nothing,
/// with mass `Q(0,0)`, or a job `(T, B)` with `T, B >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalDistribution {
    /// Sorted support, `(t, b, prob)`, including the empty outcome `(0,0)`.
    mass: Vec<(u32, u32, f64)>,
}

impl ArrivalDistribution {
    pub fn new(points: Vec<(u32, u32, f64)>) -> Result<Self> {
        let mut mass: Vec<(u32, u32, f64)> = Vec::new();
        for (t, b, p) in points {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidSpec(format!("arrival mass Q({t},{b}) = {p} is invalid")));
            }
            if p == 0.0 {
                continue;
            }
            if t == 0 && b > 0 {
                return Err(Error::InvalidSpec(format!("arrival ({t},{b}) has workload but no deadline")));
            }
            if t >= 1 && b == 0 {
                return Err(Error::InvalidSpec(format!("arrival ({t},{b}) has a deadline but no workload")));
            }
            match mass.iter_mut().find(|(mt, mb, _)| *mt == t && *mb == b) {
                Some(entry) => entry.2 += p,
                None => mass.push((t, b, p)),
            }
        }
        mass.sort_by_key(|&(t, b, _)| (t, b));
        let total: f64 = mass.iter().map(|&(_, _, p)| p).sum();
        if (total - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidSpec(format!("arrival masses sum to {total}, not 1")));
        }
        Ok(Self { mass })
    }

    /// Point mass at "no arrival": the queue drains and stays empty.
    pub fn never() -> Self {
        Self::new(vec![(0, 0, 1.0)]).unwrap()
    }

    /// `Q(0,0)` plus a uniform spread over the grid `{1..=t_bar} x {1..=b_bar}`.
    pub fn uniform_jobs(q00: f64, t_bar: u32, b_bar: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&q00) {
            return Err(Error::InvalidSpec(format!("Q(0,0) = {q00} outside [0,1]")));
        }
        if t_bar == 0 || b_bar == 0 {
            return Err(Error::InvalidSpec("uniform_jobs needs t_bar, b_bar >= 1".into()));
        }
        let mut points = vec![(0, 0, q00)];
        let per = (1.0 - q00) / (t_bar as f64 * b_bar as f64);
        for t in 1..=t_bar {
            for b in 1..=b_bar {
                points.push((t, b, per));
            }
        }
        Self::new(points)
    }

    pub fn support(&self) -> &[(u32, u32, f64)] {
        &self.mass
    }

    pub fn q00(&self) -> f64 {
        self.mass
            .iter()
            .find(|&&(t, b, _)| t == 0 && b == 0)
            .map(|&(_, _, p)| p)
            .unwrap_or(0.0)
    }

    /// Largest lead time in the support (0 if jobs never arrive).
    pub fn t_bar(&self) -> u32 {
        self.mass.iter().map(|&(t, _, _)| t).max().unwrap_or(0)
    }

    /// Largest workload in the support (0 if jobs never arrive).
    pub fn b_bar(&self) -> u32 {
        self.mass.iter().map(|&(_, b, _)| b).max().unwrap_or(0)
    }

    /// Mean lead time of actual jobs (conditional on a job arriving).
    pub fn mean_job_lead_time(&self) -> f64 {
        let p_job = 1.0 - self.q00();
        if p_job <= 0.0 {
            return 0.0;
        }
        self.mass
            .iter()
            .filter(|&&(t, _, _)| t > 0)
            .map(|&(t, _, p)| t as f64 * p)
            .sum::<f64>()
            / p_job
    }

    /// Draw one outcome, possibly the empty one.
    pub fn sample(&self, rng: &mut impl Rng) -> JobState {
        let mut u: f64 = rng.gen();
        let mut last = JobState::empty();
        for &(t, b, p) in &self.mass {
            last = JobState { lead_time: t, remaining_work: b };
            if u < p {
                return last;
            }
            u -= p;
        }
        last
    }

    /// Draw a job conditional on one arriving; errors if `Q(0,0) = 1`.
    pub fn sample_job(&self, rng: &mut impl Rng) -> Result<JobState> {
        let p_job = 1.0 - self.q00();
        if p_job <= 0.0 {
            return Err(Error::DomainError("arrival distribution has no jobs".into()));
        }
        let mut u: f64 = rng.gen::<f64>() * p_job;
        let mut last = JobState::empty();
        for &(t, b, p) in self.mass.iter().filter(|&&(t, _, _)| t > 0) {
            last = JobState { lead_time: t, remaining_work: b };
            if u < p {
                return Ok(last);
            }
            u -= p;
        }
        Ok(last)
    }
}

/// Non-completion penalty `F`, convex and nondecreasing with `F(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyFunction {
    /// `F(B) = kappa * B^2`
    Quadratic { kappa: f64 },
    /// `F(B) = kappa * B`
    Linear { kappa: f64 },
    /// Explicit values `F(0), F(1), ...`
    Tabulated { values: Vec<f64> },
}

impl PenaltyFunction {
    pub fn quadratic(kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::InvalidSpec(format!("penalty coefficient {kappa} must be >= 0")));
        }
        Ok(Self::Quadratic { kappa })
    }

    pub fn linear(kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::InvalidSpec(format!("penalty coefficient {kappa} must be >= 0")));
        }
        Ok(Self::Linear { kappa })
    }

    /// Validates `F(0)=0`, monotonicity, and discrete convexity
    /// (`F(B+1)-F(B)` nondecreasing).
    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values[0] != 0.0 {
            return Err(Error::InvalidSpec("tabulated penalty must start with F(0) = 0".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidSpec("tabulated penalty must be nondecreasing".into()));
        }
        let steps: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        if steps.windows(2).any(|w| w[1] < w[0] - ROW_SUM_TOL) {
            return Err(Error::InvalidSpec("tabulated penalty must be convex".into()));
        }
        Ok(Self::Tabulated { values })
    }

    pub fn eval(&self, b: u32) -> f64 {
        match self {
            Self::Quadratic { kappa } => kappa * (b as f64) * (b as f64),
            Self::Linear { kappa } => kappa * b as f64,
            Self::Tabulated { values } => values[b as usize],
        }
    }

    /// Marginal step `F(B) - F(B-1)` for `B >= 1`.
    pub fn step(&self, b: u32) -> f64 {
        assert!(b >= 1);
        self.eval(b) - self.eval(b - 1)
    }
}

/// A full problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// Queue positions.
    pub n: usize,
    /// Processors.
    pub m: usize,
    /// Discount factor in (0, 1).
    pub beta: f64,
    pub arrivals: ArrivalDistribution,
    pub penalty: PenaltyFunction,
    pub costs: CostChain,
}

impl ProblemSpec {
    pub fn new(
        n: usize,
        m: usize,
        beta: f64,
        arrivals: ArrivalDistribution,
        penalty: PenaltyFunction,
        costs: CostChain,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidSpec("need n >= 1 and m >= 1".into()));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidSpec(format!("beta = {beta} outside (0,1)")));
        }
        if let PenaltyFunction::Tabulated { values } = &penalty {
            if values.len() < arrivals.b_bar() as usize + 1 {
                return Err(Error::InvalidSpec(
                    "tabulated penalty shorter than the maximum workload".into(),
                ));
            }
        }
        Ok(Self { n, m, beta, arrivals, penalty, costs })
    }

    pub fn t_bar(&self) -> u32 {
        self.arrivals.t_bar()
    }

    pub fn b_bar(&self) -> u32 {
        self.arrivals.b_bar()
    }

    /// Bounds of the per-position state grid used by the solvers. At least
    /// `(1, 1)` so that degenerate no-arrival instances still expose the
    /// one-slot states.
    pub fn grid_bounds(&self) -> (u32, u32) {
        (self.t_bar().max(1), self.b_bar().max(1))
    }

    /// `max_j |1 - c_j|`.
    pub fn max_abs_profit(&self) -> f64 {
        self.costs
            .states()
            .iter()
            .map(|c| (1.0 - c).abs())
            .fold(0.0, f64::max)
    }

    /// Bound on the magnitude of the per-slot system reward.
    pub fn reward_bound_per_slot(&self) -> f64 {
        self.n as f64 * (self.max_abs_profit() + self.penalty.eval(self.b_bar()))
    }

    /// Re-run all construction checks (for data deserialized from files).
    pub fn revalidated(&self) -> Result<ProblemSpec> {
        let penalty = match &self.penalty {
            PenaltyFunction::Quadratic { kappa } => PenaltyFunction::quadratic(*kappa)?,
            PenaltyFunction::Linear { kappa } => PenaltyFunction::linear(*kappa)?,
            PenaltyFunction::Tabulated { values } => PenaltyFunction::tabulated(values.clone())?,
        };
        ProblemSpec::new(
            self.n,
            self.m,
            self.beta,
            ArrivalDistribution::new(self.arrivals.support().to_vec())?,
            penalty,
            CostChain::new(
                self.costs.states().to_vec(),
                (0..self.costs.n_states()).map(|j| self.costs.row(j).to_vec()).collect(),
            )?,
        )
    }

    /// Hash of the canonical serialization; index tables are keyed by it.
    pub fn spec_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            use std::fmt::Write;
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// How jobs reach the queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ArrivalMode {
    /// Each freed position draws independently from the arrival distribution.
    Independent,
    /// Aggregate arrivals are Poisson with `mean` jobs per `T̄`-slot window,
    /// each assigned uniformly at random to an empty position (dropped when
    /// none is free); job attributes follow the arrival distribution
    /// conditioned on a job being present.
    PoissonUniform { mean: f64 },
}

/// Joint state: current cost index plus the state of every position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemState {
    pub cost_index: usize,
    pub jobs: Vec<JobState>,
}

impl SystemState {
    pub fn new(cost_index: usize, jobs: Vec<JobState>) -> Self {
        Self { cost_index, jobs }
    }

    /// All positions empty, cost at `cost_index`.
    pub fn empty(n: usize, cost_index: usize) -> Self {
        Self { cost_index, jobs: vec![JobState::empty(); n] }
    }
}

/// Activation vector over the regular positions; dummy arms are implicit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub active: Vec<bool>,
}

impl Action {
    pub fn idle(n: usize) -> Self {
        Self { active: vec![false; n] }
    }

    pub fn from_positions(n: usize, positions: &[usize]) -> Self {
        let mut active = vec![false; n];
        for &i in positions {
            active[i] = true;
        }
        Self { active }
    }

    pub fn count_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// One-slot evolution of a single position. Active (`a = 1`) removes one unit
/// of work when `T > 1`; at `T <= 1` the position resolves and the next
/// occupant (possibly none) is drawn from the arrival distribution.
pub fn step_job(
    job: JobState,
    active: bool,
    arrivals: &ArrivalDistribution,
    rng: &mut impl Rng,
) -> JobState {
    if job.lead_time > 1 {
        let worked = if active { 1 } else { 0 };
        JobState {
            lead_time: job.lead_time - 1,
            remaining_work: job.remaining_work.saturating_sub(worked),
        }
    } else {
        arrivals.sample(rng)
    }
}

/// Per-slot reward of one position: processing profit `(1-c)a`, minus the
/// penalty `F(B-a)` in the deadline slot. Empty positions pay and earn
/// nothing regardless of the action.
pub fn reward(job: JobState, cost: f64, active: bool, penalty: &PenaltyFunction) -> f64 {
    let a = if active { 1u32 } else { 0 };
    if job.remaining_work > 0 && job.lead_time > 1 {
        (1.0 - cost) * a as f64
    } else if job.remaining_work > 0 && job.lead_time == 1 {
        (1.0 - cost) * a as f64 - penalty.eval(job.remaining_work - a)
    } else {
        0.0
    }
}

/// Draw the next cost index from row `cost_index` of the chain.
pub fn step_cost(cost_index: usize, chain: &CostChain, rng: &mut impl Rng) -> usize {
    let row = chain.row(cost_index);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    row.len() - 1
}

/// Advance the whole system one slot: collect the slot reward, step every
/// position independently, step the cost once.
pub fn system_step(
    state: &SystemState,
    action: &Action,
    spec: &ProblemSpec,
    rng: &mut impl Rng,
) -> Result<(SystemState, f64)> {
    let used = action.count_active();
    if used > spec.m {
        return Err(Error::CapacityViolation { used, limit: spec.m });
    }
    let cost = spec.costs.cost(state.cost_index);
    let mut slot_reward = 0.0;
    let mut jobs = Vec::with_capacity(state.jobs.len());
    for (job, &a) in state.jobs.iter().zip(&action.active) {
        slot_reward += reward(*job, cost, a, &spec.penalty);
        jobs.push(step_job(*job, a, &spec.arrivals, rng));
    }
    let cost_index = step_cost(state.cost_index, &spec.costs, rng);
    Ok((SystemState { cost_index, jobs }, slot_reward))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn quad(kappa: f64) -> PenaltyFunction {
        PenaltyFunction::quadratic(kappa).unwrap()
    }

    fn point_mass(t: u32, b: u32) -> ArrivalDistribution {
        ArrivalDistribution::new(vec![(t, b, 1.0)]).unwrap()
    }

    #[test]
    fn step_job_decrements_under_work() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let job = JobState::new(3, 2).unwrap();
        let next = step_job(job, true, &ArrivalDistribution::never(), &mut rng);
        assert_eq!(next, JobState::new(2, 1).unwrap());
    }

    #[test]
    fn step_job_clamps_finished_work() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let job = JobState::new(2, 0).unwrap();
        let next = step_job(job, true, &ArrivalDistribution::never(), &mut rng);
        assert_eq!(next, JobState::new(1, 0).unwrap());
    }

    #[test]
    fn step_job_resamples_at_deadline() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let job = JobState::new(1, 2).unwrap();
        let next = step_job(job, false, &point_mass(4, 3), &mut rng);
        assert_eq!(next, JobState::new(4, 3).unwrap());
    }

    #[test]
    fn reward_matches_hand_values() {
        let f = quad(0.2);
        assert_eq!(reward(JobState::new(3, 2).unwrap(), 0.5, true, &f), 0.5);
        let r = reward(JobState::new(1, 2).unwrap(), 0.5, true, &f);
        assert!((r - 0.3).abs() < 1e-15);
        assert_eq!(reward(JobState::empty(), 0.5, true, &f), 0.0);
    }

    #[test]
    fn reward_zero_for_finished_resident_job() {
        let f = quad(0.2);
        assert_eq!(reward(JobState::new(3, 0).unwrap(), 0.2, true, &f), 0.0);
        assert_eq!(reward(JobState::new(1, 0).unwrap(), 0.2, false, &f), 0.0);
    }

    #[test]
    fn step_cost_identity_and_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let id = CostChain::new(
            vec![0.1, 0.5, 0.9],
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        )
        .unwrap();
        assert_eq!(step_cost(2, &id, &mut rng), 2);
        let flip = CostChain::new(vec![0.2, 0.8], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(step_cost(0, &flip, &mut rng), 1);
    }

    #[test]
    fn step_cost_empirical_frequency() {
        // Two-state chain: frequency of 0 -> 1 over many steps approaches 0.1.
        let chain =
            CostChain::new(vec![0.2, 0.8], vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 100_000;
        let mut moved = 0usize;
        for _ in 0..n {
            if step_cost(0, &chain, &mut rng) == 1 {
                moved += 1;
            }
        }
        let freq = moved as f64 / n as f64;
        assert!((freq - 0.1).abs() < 0.01, "freq = {freq}");
    }

    #[test]
    fn system_step_single_arm_composition() {
        let spec = ProblemSpec::new(
            1,
            1,
            0.9,
            ArrivalDistribution::never(),
            quad(0.2),
            CostChain::constant(0.5),
        )
        .unwrap();
        let state = SystemState::new(0, vec![JobState::new(3, 2).unwrap()]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let (next, r) = system_step(&state, &Action::from_positions(1, &[0]), &spec, &mut rng).unwrap();
        assert_eq!(next.jobs[0], JobState::new(2, 1).unwrap());
        assert!((r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn system_step_empty_queue_earns_nothing() {
        let spec = ProblemSpec::new(
            2,
            2,
            0.9,
            ArrivalDistribution::never(),
            quad(0.2),
            CostChain::constant(0.5),
        )
        .unwrap();
        let state = SystemState::empty(2, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let (_, r) = system_step(&state, &Action::from_positions(2, &[0, 1]), &spec, &mut rng).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn system_step_hand_evaluated_slot_reward() {
        let spec = ProblemSpec::new(
            2,
            1,
            0.9,
            ArrivalDistribution::never(),
            quad(0.2),
            CostChain::constant(0.5),
        )
        .unwrap();
        let state = SystemState::new(
            0,
            vec![JobState::new(1, 1).unwrap(), JobState::new(1, 2).unwrap()],
        );
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let (_, r) = system_step(&state, &Action::from_positions(2, &[0]), &spec, &mut rng).unwrap();
        assert!((r - (-0.3)).abs() < 1e-12, "r = {r}");
    }

    #[test]
    fn system_step_rejects_overloaded_action() {
        let spec = ProblemSpec::new(
            2,
            1,
            0.9,
            ArrivalDistribution::never(),
            quad(0.2),
            CostChain::constant(0.5),
        )
        .unwrap();
        let state = SystemState::new(
            0,
            vec![JobState::new(2, 1).unwrap(), JobState::new(2, 1).unwrap()],
        );
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let err = system_step(&state, &Action::from_positions(2, &[0, 1]), &spec, &mut rng);
        assert!(matches!(err, Err(Error::CapacityViolation { used: 2, limit: 1 })));
    }

    #[test]
    fn queue_drains_without_arrivals() {
        let arrivals = ArrivalDistribution::never();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut job = JobState::new(4, 3).unwrap();
        for _ in 0..4 {
            job = step_job(job, false, &arrivals, &mut rng);
        }
        assert!(job.is_empty());
    }

    #[test]
    fn arrival_frequencies_match_two_point_distribution() {
        let q = ArrivalDistribution::new(vec![(0, 0, 0.25), (2, 1, 0.45), (3, 2, 0.30)]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 100_000usize;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let s = q.sample(&mut rng);
            match (s.lead_time, s.remaining_work) {
                (0, 0) => counts[0] += 1,
                (2, 1) => counts[1] += 1,
                (3, 2) => counts[2] += 1,
                other => panic!("unexpected sample {other:?}"),
            }
        }
        for (&count, &p) in counts.iter().zip(&[0.25, 0.45, 0.30]) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let freq = count as f64 / n as f64;
            assert!((freq - p).abs() < 3.0 * se, "freq {freq} vs p {p}");
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(JobState::new(0, 1).is_err());
        assert!(CostChain::new(vec![0.5, 0.5], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).is_err());
        assert!(CostChain::new(vec![0.2, 0.8], vec![vec![0.6, 0.5], vec![0.0, 1.0]]).is_err());
        assert!(ArrivalDistribution::new(vec![(0, 0, 0.5), (2, 0, 0.5)]).is_err());
        assert!(ArrivalDistribution::new(vec![(0, 0, 0.9)]).is_err());
        assert!(PenaltyFunction::tabulated(vec![0.0, 2.0, 3.0]).is_err()); // concave step
        assert!(PenaltyFunction::tabulated(vec![1.0, 2.0]).is_err());
        assert!(PenaltyFunction::quadratic(-0.1).is_err());
    }

    #[test]
    fn tabulated_penalty_accepts_valid_table() {
        let f = PenaltyFunction::tabulated(vec![0.0, 1.0, 3.0, 6.0]).unwrap();
        assert_eq!(f.eval(2), 3.0);
        assert_eq!(f.step(3), 3.0);
    }

    #[test]
    fn spec_hash_is_stable_and_sensitive() {
        let spec = ProblemSpec::new(
            2,
            1,
            0.9,
            ArrivalDistribution::uniform_jobs(0.3, 3, 2).unwrap(),
            quad(0.2),
            CostChain::constant(0.5),
        )
        .unwrap();
        let other = ProblemSpec { m: 2, ..spec.clone() };
        assert_eq!(spec.spec_hash(), spec.clone().spec_hash());
        assert_ne!(spec.spec_hash(), other.spec_hash());
    }
}
