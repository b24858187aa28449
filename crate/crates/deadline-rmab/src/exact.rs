//! Exact solution of the joint constrained problem on small instances.
//!
//! Value iteration over the full product state space (cost state times every
//! position's job state), enumerating all activation subsets of size at most
//! `M`. Exponential in `N` — this is the optimality oracle for tests and
//! small studies, not a production scheduler.

use crate::error::{Error, Result};
use crate::model::{Action, JobState, ProblemSpec, SystemState};
use crate::whittle::SingleArmSolution;

/// Default cap on the joint state count.
pub const STATE_SPACE_CAP: usize = 5_000_000;
const MAX_SWEEPS: usize = 1_000_000;

/// Optimal values and greedy actions for every joint state.
#[derive(Debug, Clone)]
pub struct JointValueTable {
    pub tol: f64,
    pub iterations: usize,
    n: usize,
    t_max: u32,
    b_max: u32,
    n_costs: usize,
    per_pos: usize,
    values: Vec<f64>,
    greedy: Vec<u32>,
}

impl JointValueTable {
    fn job_code(&self, job: &JobState) -> usize {
        job_code(job, self.b_max)
    }

    /// Flat index of a joint state.
    pub fn encode(&self, state: &SystemState) -> usize {
        assert_eq!(state.jobs.len(), self.n);
        assert!(state.cost_index < self.n_costs);
        let mut idx = 0usize;
        for job in &state.jobs {
            assert!(job.lead_time <= self.t_max && job.remaining_work <= self.b_max);
            idx = idx * self.per_pos + self.job_code(job);
        }
        idx * self.n_costs + state.cost_index
    }

    pub fn value(&self, state: &SystemState) -> f64 {
        self.values[self.encode(state)]
    }

    pub fn greedy_action(&self, state: &SystemState) -> Action {
        let mask = self.greedy[self.encode(state)];
        Action { active: (0..self.n).map(|i| mask & (1 << i) != 0).collect() }
    }

    pub fn n_states(&self) -> usize {
        self.values.len()
    }

    /// Every joint state, in encoding order.
    pub fn enumerate_states(&self) -> Vec<SystemState> {
        let joint = self.values.len() / self.n_costs;
        let mut out = Vec::with_capacity(self.values.len());
        for state in 0..joint {
            let mut rem = state;
            let mut jobs = vec![JobState::empty(); self.n];
            for i in (0..self.n).rev() {
                jobs[i] = decode_job(rem % self.per_pos, self.b_max);
                rem /= self.per_pos;
            }
            for j in 0..self.n_costs {
                out.push(SystemState::new(j, jobs.clone()));
            }
        }
        out
    }
}

#[inline]
fn job_code(job: &JobState, b_max: u32) -> usize {
    if job.lead_time == 0 {
        0
    } else {
        1 + (job.lead_time as usize - 1) * (b_max as usize + 1) + job.remaining_work as usize
    }
}

fn decode_job(code: usize, b_max: u32) -> JobState {
    if code == 0 {
        JobState::empty()
    } else {
        let t = 1 + (code - 1) / (b_max as usize + 1);
        let b = (code - 1) % (b_max as usize + 1);
        JobState { lead_time: t as u32, remaining_work: b as u32 }
    }
}

pub fn solve_joint(spec: &ProblemSpec, tol: f64) -> Result<JointValueTable> {
    solve_joint_capped(spec, tol, STATE_SPACE_CAP)
}

pub fn solve_joint_capped(spec: &ProblemSpec, tol: f64, cap: usize) -> Result<JointValueTable> {
    assert!(tol > 0.0);
    let n = spec.n;
    let (t_max, b_max) = spec.grid_bounds();
    let nc = spec.costs.n_states();
    let per_pos = 1 + t_max as usize * (b_max as usize + 1);
    let mut size = nc;
    for _ in 0..n {
        size = size.saturating_mul(per_pos);
        if size > cap {
            return Err(Error::StateSpaceTooLarge { size, cap });
        }
    }

    let jobs_of_code: Vec<JobState> = (0..per_pos).map(|c| decode_job(c, b_max)).collect();
    let beta = spec.beta;
    let support = spec.arrivals.support();

    // Value of one joint (job-codes, cost) pair under a given action mask.
    // `scratch` holds the per-position next codes; resampling positions get
    // their combos enumerated by an odometer over the arrival support.
    let eval = |v: &[f64], codes: &[usize], j: usize, mask: u32| -> f64 {
        let cost = spec.costs.cost(j);
        let mut immediate = 0.0;
        let mut fixed_next = vec![0usize; codes.len()];
        let mut resample: Vec<usize> = Vec::new();
        for (i, &code) in codes.iter().enumerate() {
            let job = jobs_of_code[code];
            let active = mask & (1 << i) != 0;
            immediate += crate::model::reward(job, cost, active, &spec.penalty);
            if job.lead_time > 1 {
                let worked = if active { 1 } else { 0 };
                let next = JobState {
                    lead_time: job.lead_time - 1,
                    remaining_work: job.remaining_work.saturating_sub(worked),
                };
                fixed_next[i] = job_code(&next, b_max);
            } else {
                resample.push(i);
            }
        }
        // odometer over arrival outcomes of the resampling positions
        let mut expected = 0.0;
        let mut combo = vec![0usize; resample.len()];
        loop {
            let mut prob = 1.0;
            for (slot, &pos) in resample.iter().enumerate() {
                let (t, b, q) = support[combo[slot]];
                prob *= q;
                fixed_next[pos] = job_code(&JobState { lead_time: t, remaining_work: b }, b_max);
            }
            if prob > 0.0 {
                let mut base = 0usize;
                for &code in fixed_next.iter() {
                    base = base * per_pos + code;
                }
                base *= nc;
                let row = spec.costs.row(j);
                let mixed: f64 = (0..nc).map(|k| row[k] * v[base + k]).sum();
                expected += prob * mixed;
            }
            // advance odometer
            let mut slot = 0;
            loop {
                if slot == combo.len() {
                    return immediate + beta * expected;
                }
                combo[slot] += 1;
                if combo[slot] < support.len() {
                    break;
                }
                combo[slot] = 0;
                slot += 1;
            }
        }
    };

    // actions: subsets of positions holding unfinished work, size <= M
    let masks_for = |codes: &[usize]| -> Vec<u32> {
        let eligible: Vec<usize> = codes
            .iter()
            .enumerate()
            .filter(|(_, &c)| jobs_of_code[c].remaining_work > 0)
            .map(|(i, _)| i)
            .collect();
        let mut masks = Vec::with_capacity(1 << eligible.len());
        for pick in 0u32..(1 << eligible.len()) {
            if (pick.count_ones() as usize) <= spec.m {
                let mut mask = 0u32;
                for (slot, &pos) in eligible.iter().enumerate() {
                    if pick & (1 << slot) != 0 {
                        mask |= 1 << pos;
                    }
                }
                masks.push(mask);
            }
        }
        masks.sort_unstable();
        masks.dedup();
        masks
    };

    let mut values = vec![0.0f64; size];
    let mut iterations = 0usize;
    loop {
        let mut next = vec![0.0f64; size];
        let mut delta = 0.0f64;
        let mut codes = vec![0usize; n];
        for state in 0..size / nc {
            // decode position codes
            let mut rem = state;
            for i in (0..n).rev() {
                codes[i] = rem % per_pos;
                rem /= per_pos;
            }
            let masks = masks_for(&codes);
            for j in 0..nc {
                let best = masks
                    .iter()
                    .map(|&mask| eval(&values, &codes, j, mask))
                    .fold(f64::NEG_INFINITY, f64::max);
                let idx = state * nc + j;
                next[idx] = best;
                delta = delta.max((best - values[idx]).abs());
            }
        }
        values = next;
        iterations += 1;
        if delta <= tol {
            break;
        }
        if iterations >= MAX_SWEEPS {
            return Err(Error::NonConvergence { iterations });
        }
    }

    // greedy extraction: first maximizer in canonical mask order
    let mut greedy = vec![0u32; size];
    let mut codes = vec![0usize; n];
    for state in 0..size / nc {
        let mut rem = state;
        for i in (0..n).rev() {
            codes[i] = rem % per_pos;
            rem /= per_pos;
        }
        let masks = masks_for(&codes);
        for j in 0..nc {
            let mut best = f64::NEG_INFINITY;
            let mut best_mask = 0u32;
            for &mask in &masks {
                let v = eval(&values, &codes, j, mask);
                if v > best {
                    best = v;
                    best_mask = mask;
                }
            }
            greedy[state * nc + j] = best_mask;
        }
    }

    Ok(JointValueTable {
        tol,
        iterations,
        n,
        t_max,
        b_max,
        n_costs: nc,
        per_pos,
        values,
        greedy,
    })
}

/// Weak-duality upper bound on the optimal joint value from `initial`.
///
/// Relaxing the per-slot capacity to an average constraint decouples the
/// arms: for any subsidy `ν`, the sum of single-arm subsidy values plus the
/// dummy-arm values, minus the subsidy paid out for the `N` passive slots per
/// step, bounds the constrained optimum. The bound is the minimum over the
/// grid; the dual is convex in `ν`, so a grid minimum is adequate.
pub fn lagrangian_upper_bound(spec: &ProblemSpec, initial: &SystemState, nu_grid: &[f64]) -> f64 {
    assert!(!nu_grid.is_empty());
    assert_eq!(initial.jobs.len(), spec.n);
    let horizon_mass = 1.0 / (1.0 - spec.beta);
    nu_grid
        .iter()
        .map(|&nu| {
            let arm = SingleArmSolution::solve(spec, nu);
            let sum: f64 = initial
                .jobs
                .iter()
                .map(|job| arm.value(job.lead_time, job.remaining_work, initial.cost_index))
                .sum();
            sum + spec.m as f64 * arm.dummy_value() - nu * spec.n as f64 * horizon_mass
        })
        .fold(f64::INFINITY, f64::min)
}

/// Evenly spaced subsidy grid covering `[0, cap]` where `cap` exceeds every
/// index of the instance (profit plus the largest marginal penalty step).
pub fn default_nu_grid(spec: &ProblemSpec, points: usize) -> Vec<f64> {
    assert!(points >= 2);
    let b_bar = spec.b_bar().max(1);
    let profit = spec
        .costs
        .states()
        .iter()
        .map(|c| 1.0 - c)
        .fold(0.0f64, f64::max)
        .max(0.0);
    let hi = profit + spec.penalty.step(b_bar) + 1.0;
    (0..points).map(|i| hi * i as f64 / (points - 1) as f64).collect()
}
