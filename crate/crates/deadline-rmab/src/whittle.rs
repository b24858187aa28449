//! Whittle indices for the single-arm subsidy problem.
//!
//! The subsidy problem pays an extra reward `ν` whenever the arm is passive.
//! Its value function `V^ν(T,B,c)` satisfies
//!
//! ```text
//! V^ν(s) = max{ R_0(s) + ν + β E[V^ν(s') | a=0],  R_1(s) + β E[V^ν(s') | a=1] }
//! ```
//!
//! and the index of a state is the smallest subsidy at which the passive
//! action becomes optimal. Two diagnostic functions drive everything here:
//!
//! * `g^ν(T,B,c) = V^ν(T,B+1,c) - V^ν(T,B,c)` — workload marginal value,
//! * `f^ν(T,B,c) = ν - (1-c) + β Σ_k P_{j,k} g^ν(T-1,B-1,c_k)` — the
//!   passive-minus-active preference (`f >= 0` means passive is optimal;
//!   `f` is continuous and nondecreasing in `ν`, which makes bisection on it
//!   exact).
//!
//! Because the lead time decreases deterministically until the position
//! resets through an arrival, the continuation value after the reset enters
//! every same-`T` state with the same weight. Differences like `f` and `g`
//! are therefore independent of the reset value, and the preference can be
//! evaluated by a finite recursion over `T` — no fixed-point iteration. The
//! reset value itself solves a small linear system over the cost states,
//! which recovers the full `V^ν`. [`subsidy_value_iteration`] keeps the
//! plain Bellman iteration as an independent route; the two agree to the
//! iteration tolerance and the tests hold them against each other.

use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{PenaltyFunction, ProblemSpec};

/// Default sup-norm tolerance for value iteration.
pub const VALUE_ITER_TOL: f64 = 1e-9;
/// Default width tolerance for index bisection.
pub const BISECTION_TOL: f64 = 1e-7;
/// Default sweep cap for value iteration.
pub const MAX_SWEEPS: usize = 2_000_000;

/// Optimal action of a single arm at one subsidy level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmAction {
    Active,
    Passive,
}

// ── state grid ─────────────────────────────────────────────────────────────

/// Dense array over the extended states `(T, B, c)`,
/// `T ∈ 0..=t_max`, `B ∈ 0..=b_max`, `c` a cost index.
#[derive(Debug, Clone)]
struct Grid {
    t_max: u32,
    b_max: u32,
    n_costs: usize,
    data: Vec<f64>,
}

impl Grid {
    fn zeros(t_max: u32, b_max: u32, n_costs: usize) -> Self {
        let len = (t_max as usize + 1) * (b_max as usize + 1) * n_costs;
        Self { t_max, b_max, n_costs, data: vec![0.0; len] }
    }

    #[inline]
    fn idx(&self, t: u32, b: u32, j: usize) -> usize {
        debug_assert!(t <= self.t_max && b <= self.b_max && j < self.n_costs);
        (t as usize * (self.b_max as usize + 1) + b as usize) * self.n_costs + j
    }

    #[inline]
    fn get(&self, t: u32, b: u32, j: usize) -> f64 {
        self.data[self.idx(t, b, j)]
    }

    #[inline]
    fn set(&mut self, t: u32, b: u32, j: usize, v: f64) {
        let i = self.idx(t, b, j);
        self.data[i] = v;
    }
}

fn mix(row: &[f64], grid: &Grid, t: u32, b: u32) -> f64 {
    let base = grid.idx(t, b, 0);
    row.iter()
        .zip(&grid.data[base..base + grid.n_costs])
        .map(|(&p, &v)| p * v)
        .sum()
}

// ── exact single-arm solver ────────────────────────────────────────────────

/// Exact solution of the subsidy problem on the finite state grid.
///
/// `v` is the value function, `reset_value[j]` the expected value of a
/// freshly resolved position under cost `c_j` (job and cost both stepped).
#[derive(Debug, Clone)]
pub struct SingleArmSolution {
    pub nu: f64,
    v: Grid,
    v_free: Grid,
    beta: f64,
}

impl SingleArmSolution {
    pub fn solve(spec: &ProblemSpec, nu: f64) -> Self {
        let (t_max, b_max) = spec.grid_bounds();
        let nc = spec.costs.n_states();
        let beta = spec.beta;
        let v_free = recurse_free_values(spec, nu, t_max, b_max);

        // Reset value w solves (I - A) w = rhs over the cost states, with
        // A = Σ_{(t',b'), t'>=1} Q(t',b') β^{t'} P^{t'} + Q(0,0) β P.
        let powers = transition_powers(spec, t_max as usize);
        let mut a = vec![vec![0.0; nc]; nc];
        let mut rhs = vec![0.0; nc];
        for &(t, b, q) in spec.arrivals.support() {
            if t >= 1 {
                let scale = q * beta.powi(t as i32);
                let pw = &powers[t as usize];
                for j in 0..nc {
                    for k in 0..nc {
                        a[j][k] += scale * pw[j][k];
                    }
                    rhs[j] += q * mix(spec.costs.row(j), &v_free, t, b);
                }
            } else {
                let scale = q * beta;
                for j in 0..nc {
                    for k in 0..nc {
                        a[j][k] += scale * powers[1][j][k];
                    }
                    rhs[j] += q * nu.max(0.0);
                }
            }
        }
        let mut system = vec![vec![0.0; nc]; nc];
        for j in 0..nc {
            for k in 0..nc {
                system[j][k] = if j == k { 1.0 - a[j][k] } else { -a[j][k] };
            }
        }
        let reset_value = solve_linear(system, rhs);

        // v = v_free + β^max(T,1) (P^{max(T,1)-1} reset_value) per cost row.
        let mut v = v_free.clone();
        for t in 0..=t_max {
            let steps = t.max(1);
            let weight = beta.powi(steps as i32);
            let pw = &powers[steps as usize - 1];
            for j in 0..nc {
                let shift: f64 = (0..nc).map(|k| pw[j][k] * reset_value[k]).sum();
                for b in 0..=b_max {
                    if t == 0 && b > 0 {
                        continue;
                    }
                    let cur = v.get(t, b, j);
                    v.set(t, b, j, cur + weight * shift);
                }
            }
        }

        Self { nu, v, v_free, beta }
    }

    pub fn bounds(&self) -> (u32, u32, usize) {
        (self.v.t_max, self.v.b_max, self.v.n_costs)
    }

    pub fn value(&self, t: u32, b: u32, j: usize) -> f64 {
        self.v.get(t, b, j)
    }

    /// Passive-minus-active preference; `f >= 0` means passive is optimal.
    /// States with `B = 0` behave like dummy arms: `f = ν`.
    pub fn action_pref(&self, spec: &ProblemSpec, t: u32, b: u32, j: usize) -> f64 {
        action_pref_from(&self.v_free, spec, self.nu, t, b, j)
    }

    /// Marginal value `g(T,B,c) = V(T,B+1,c) - V(T,B,c)` for `B < b_max`.
    pub fn workload_marginal(&self, t: u32, b: u32, j: usize) -> f64 {
        self.v.get(t, b + 1, j) - self.v.get(t, b, j)
    }

    pub fn optimal_action(&self, spec: &ProblemSpec, t: u32, b: u32, j: usize) -> ArmAction {
        if self.action_pref(spec, t, b, j) >= 0.0 {
            ArmAction::Passive
        } else {
            ArmAction::Active
        }
    }

    /// Value of a dummy arm at this subsidy level.
    pub fn dummy_value(&self) -> f64 {
        self.nu.max(0.0) / (1.0 - self.beta)
    }
}

/// Value recursion with the continuation after a reset set to zero. The
/// omitted term is identical across actions and across same-`T` states, so
/// action preferences and workload marginals computed from these values are
/// exact.
fn recurse_free_values(spec: &ProblemSpec, nu: f64, t_max: u32, b_max: u32) -> Grid {
    let nc = spec.costs.n_states();
    let beta = spec.beta;
    let idle = nu.max(0.0);
    let mut grid = Grid::zeros(t_max, b_max, nc);
    for j in 0..nc {
        grid.set(0, 0, j, idle);
    }
    for t in 1..=t_max {
        for j in 0..nc {
            let c = spec.costs.cost(j);
            for b in 0..=b_max {
                let value = if b == 0 {
                    if t == 1 {
                        idle
                    } else {
                        idle + beta * mix(spec.costs.row(j), &grid, t - 1, 0)
                    }
                } else if t == 1 {
                    let passive = nu - spec.penalty.eval(b);
                    let active = 1.0 - c - spec.penalty.eval(b - 1);
                    passive.max(active)
                } else {
                    let passive = nu + beta * mix(spec.costs.row(j), &grid, t - 1, b);
                    let active = 1.0 - c + beta * mix(spec.costs.row(j), &grid, t - 1, b - 1);
                    passive.max(active)
                };
                grid.set(t, b, j, value);
            }
        }
    }
    grid
}

fn action_pref_from(free: &Grid, spec: &ProblemSpec, nu: f64, t: u32, b: u32, j: usize) -> f64 {
    if b == 0 {
        return nu;
    }
    assert!(t >= 1, "state ({t},{b}) has workload but no lead time");
    let c = spec.costs.cost(j);
    if t == 1 {
        nu - (1.0 - c) - spec.penalty.step(b)
    } else {
        let row = spec.costs.row(j);
        let marginal = mix(row, free, t - 1, b) - mix(row, free, t - 1, b - 1);
        nu - (1.0 - c) + spec.beta * marginal
    }
}

/// `P^0 ..= P^k` of the cost chain.
fn transition_powers(spec: &ProblemSpec, k: usize) -> Vec<Vec<Vec<f64>>> {
    let nc = spec.costs.n_states();
    let mut powers = Vec::with_capacity(k.max(1) + 1);
    let mut identity = vec![vec![0.0; nc]; nc];
    for j in 0..nc {
        identity[j][j] = 1.0;
    }
    powers.push(identity);
    let p: Vec<Vec<f64>> = (0..nc).map(|j| spec.costs.row(j).to_vec()).collect();
    for step in 1..=k.max(1) {
        let prev = &powers[step - 1];
        let mut next = vec![vec![0.0; nc]; nc];
        for j in 0..nc {
            for l in 0..nc {
                let v = prev[j][l];
                if v == 0.0 {
                    continue;
                }
                for kk in 0..nc {
                    next[j][kk] += v * p[l][kk];
                }
            }
        }
        powers.push(next);
    }
    powers
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        let d = a[col][col];
        for r in col + 1..n {
            let factor = a[r][col] / d;
            if factor != 0.0 {
                for c in col..n {
                    let head = a[col][c];
                    a[r][c] -= factor * head;
                }
                rhs[r] -= factor * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = rhs[r];
        for c in r + 1..n {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    x
}

// ── value iteration route ──────────────────────────────────────────────────

/// Converged subsidy value function with the `f`/`g` diagnostics.
#[derive(Debug, Clone)]
pub struct SubsidyValueTable {
    pub nu: f64,
    pub sweeps: usize,
    t_max: u32,
    b_max: u32,
    n_costs: usize,
    values: Grid,
    pref: Grid,
}

impl SubsidyValueTable {
    pub fn bounds(&self) -> (u32, u32, usize) {
        (self.t_max, self.b_max, self.n_costs)
    }

    pub fn value(&self, t: u32, b: u32, j: usize) -> f64 {
        self.values.get(t, b, j)
    }

    /// Passive-minus-active preference `f^ν`; defined for `B >= 1`
    /// (and equal to `ν` on the idle states).
    pub fn action_pref(&self, t: u32, b: u32, j: usize) -> f64 {
        self.pref.get(t, b, j)
    }

    /// `g^ν(T,B,c) = V^ν(T,B+1,c) - V^ν(T,B,c)` for `B < b_max`.
    pub fn workload_marginal(&self, t: u32, b: u32, j: usize) -> f64 {
        self.values.get(t, b + 1, j) - self.values.get(t, b, j)
    }
}

/// Plain Bellman iteration for the subsidy problem, from `V = 0`, stopping
/// when a sweep moves no state by more than `tol` (so the fixed point is
/// within `tol/(1-β)` in sup norm).
pub fn subsidy_value_iteration(spec: &ProblemSpec, nu: f64, tol: f64) -> Result<SubsidyValueTable> {
    subsidy_value_iteration_capped(spec, nu, tol, MAX_SWEEPS)
}

pub fn subsidy_value_iteration_capped(
    spec: &ProblemSpec,
    nu: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<SubsidyValueTable> {
    assert!(tol > 0.0);
    let (t_max, b_max) = spec.grid_bounds();
    let nc = spec.costs.n_states();
    let mut v = Grid::zeros(t_max, b_max, nc);
    let mut sweeps = 0usize;
    loop {
        let (next, delta) = bellman_sweep(spec, &v, nu, t_max, b_max);
        v = next;
        sweeps += 1;
        if delta <= tol {
            break;
        }
        if sweeps >= max_sweeps {
            return Err(Error::NonConvergence { iterations: sweeps });
        }
    }
    // Populate the preference from the converged values.
    let mut pref = Grid::zeros(t_max, b_max, nc);
    for t in 0..=t_max {
        for b in 0..=b_max {
            if t == 0 && b > 0 {
                continue;
            }
            for j in 0..nc {
                let f = if b == 0 {
                    nu
                } else {
                    let (passive, active) = action_values(spec, &v, nu, t, b, j);
                    passive - active
                };
                pref.set(t, b, j, f);
            }
        }
    }
    Ok(SubsidyValueTable { nu, sweeps, t_max, b_max, n_costs: nc, values: v, pref })
}

/// Expected next-slot value of a freshly resolved position under cost `j`.
fn reset_continuation(spec: &ProblemSpec, v: &Grid, j: usize) -> f64 {
    let row = spec.costs.row(j);
    spec.arrivals
        .support()
        .iter()
        .map(|&(t, b, q)| q * mix(row, v, t, b))
        .sum()
}

/// (passive, active) action values at a state with `B >= 1`.
fn action_values(spec: &ProblemSpec, v: &Grid, nu: f64, t: u32, b: u32, j: usize) -> (f64, f64) {
    let c = spec.costs.cost(j);
    let beta = spec.beta;
    if t == 1 {
        let w = reset_continuation(spec, v, j);
        (nu - spec.penalty.eval(b) + beta * w, 1.0 - c - spec.penalty.eval(b - 1) + beta * w)
    } else {
        let row = spec.costs.row(j);
        (
            nu + beta * mix(row, v, t - 1, b),
            1.0 - c + beta * mix(row, v, t - 1, b - 1),
        )
    }
}

fn bellman_sweep(spec: &ProblemSpec, v: &Grid, nu: f64, t_max: u32, b_max: u32) -> (Grid, f64) {
    let nc = spec.costs.n_states();
    let beta = spec.beta;
    let mut next = Grid::zeros(t_max, b_max, nc);
    let mut delta = 0.0f64;
    for j in 0..nc {
        let row = spec.costs.row(j);
        let w = reset_continuation(spec, v, j);
        for t in 0..=t_max {
            for b in 0..=b_max {
                if t == 0 && b > 0 {
                    continue;
                }
                let value = if b == 0 {
                    let cont = if t <= 1 { w } else { mix(row, v, t - 1, 0) };
                    nu.max(0.0) + beta * cont
                } else {
                    let (passive, active) = action_values(spec, v, nu, t, b, j);
                    passive.max(active)
                };
                next.set(t, b, j, value);
                delta = delta.max((value - v.get(t, b, j)).abs());
            }
        }
    }
    (next, delta)
}

// ── closed form and bisection ──────────────────────────────────────────────

/// Closed-form index under a constant processing cost `c0`:
/// `0` when `B = 0`; the processing profit `1 - c0` while the job is still
/// feasible (`B <= T-1`); and profit plus the discounted marginal penalty
/// `β^{T-1} [F(B-T+1) - F(B-T)]` once completion is out of reach (`T <= B`).
pub fn closed_form_index(t: u32, b: u32, c0: f64, beta: f64, penalty: &PenaltyFunction) -> f64 {
    if b == 0 || t == 0 {
        0.0
    } else if b < t {
        1.0 - c0
    } else {
        1.0 - c0 + beta.powi(t as i32 - 1) * (penalty.eval(b - t + 1) - penalty.eval(b - t))
    }
}

/// Reusable evaluator of the action preference `f^ν` for one instance.
pub struct PrefEvaluator<'a> {
    spec: &'a ProblemSpec,
    t_max: u32,
    b_max: u32,
}

impl<'a> PrefEvaluator<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Self {
        let (t_max, b_max) = spec.grid_bounds();
        Self { spec, t_max, b_max }
    }

    /// `f^ν` at one state. Exact up to floating point; no iteration.
    pub fn action_pref(&self, nu: f64, t: u32, b: u32, j: usize) -> f64 {
        if b == 0 {
            return nu;
        }
        let free = recurse_free_values(self.spec, nu, self.t_max, self.b_max);
        action_pref_from(&free, self.spec, nu, t, b, j)
    }

    pub fn optimal_action(&self, nu: f64, t: u32, b: u32, j: usize) -> ArmAction {
        if self.action_pref(nu, t, b, j) >= 0.0 {
            ArmAction::Passive
        } else {
            ArmAction::Active
        }
    }
}

/// Locate the index of `(t, b, j)` by bisecting the sign change of `f^ν`
/// over `[nu_lo, nu_hi]`. Returns a point within `tol` of the smallest
/// subsidy at which the passive action is optimal. States with `B = 0`
/// report index 0 immediately.
pub fn index_by_bisection(
    spec: &ProblemSpec,
    state: (u32, u32, usize),
    nu_lo: f64,
    nu_hi: f64,
    tol: f64,
) -> Result<f64> {
    let (t, b, j) = state;
    if b == 0 || t == 0 {
        return Ok(0.0);
    }
    assert!(tol > 0.0 && nu_lo < nu_hi);
    let eval = PrefEvaluator::new(spec);
    bisect_state(&eval, t, b, j, nu_lo, nu_hi, tol)
}

fn bisect_state(
    eval: &PrefEvaluator,
    t: u32,
    b: u32,
    j: usize,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64> {
    if eval.action_pref(lo, t, b, j) >= 0.0 || eval.action_pref(hi, t, b, j) < 0.0 {
        return Err(Error::BracketError { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if eval.action_pref(mid, t, b, j) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

// ── index tables ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexMethod {
    ClosedForm,
    Bisection,
}

impl IndexMethod {
    pub fn label(&self) -> &'static str {
        match self {
            IndexMethod::ClosedForm => "closed_form",
            IndexMethod::Bisection => "bisection",
        }
    }
}

/// Precomputed Whittle indices over the extended state grid.
#[derive(Debug, Clone)]
pub struct IndexTable {
    pub spec_hash: String,
    pub tol: f64,
    pub method: IndexMethod,
    t_max: u32,
    b_max: u32,
    n_costs: usize,
    values: Vec<f64>,
}

impl IndexTable {
    pub fn bounds(&self) -> (u32, u32, usize) {
        (self.t_max, self.b_max, self.n_costs)
    }

    #[inline]
    fn slot(&self, t: u32, b: u32, j: usize) -> usize {
        (t as usize * (self.b_max as usize + 1) + b as usize) * self.n_costs + j
    }

    pub fn index(&self, t: u32, b: u32, j: usize) -> f64 {
        if t == 0 || b == 0 {
            return 0.0;
        }
        self.values[self.slot(t, b, j)]
    }

    pub fn max_index(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Flat CSV, one row per extended state.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,B,cost_index,nu\n");
        for t in 0..=self.t_max {
            for b in 0..=self.b_max {
                if t == 0 && b > 0 {
                    continue;
                }
                for j in 0..self.n_costs {
                    out.push_str(&format!("{t},{b},{j},{}\n", self.index(t, b, j)));
                }
            }
        }
        out
    }

    pub fn write_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(b"DLRMABIX");
        buf.write_u32::<LittleEndian>(1)?;
        buf.write_u32::<LittleEndian>(self.spec_hash.len() as u32)?;
        buf.extend_from_slice(self.spec_hash.as_bytes());
        buf.write_u8(match self.method {
            IndexMethod::ClosedForm => 0,
            IndexMethod::Bisection => 1,
        })?;
        buf.write_f64::<LittleEndian>(self.tol)?;
        buf.write_u32::<LittleEndian>(self.t_max)?;
        buf.write_u32::<LittleEndian>(self.b_max)?;
        buf.write_u32::<LittleEndian>(self.n_costs as u32)?;
        buf.write_u64::<LittleEndian>(self.values.len() as u64)?;
        for &v in &self.values {
            buf.write_f64::<LittleEndian>(v)?;
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_cache(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut cur = std::io::Cursor::new(bytes);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic)?;
        if &magic != b"DLRMABIX" {
            return Err(Error::Parse("not an index cache file".into()));
        }
        let version = cur.read_u32::<LittleEndian>()?;
        if version != 1 {
            return Err(Error::Parse(format!("unsupported cache version {version}")));
        }
        let hash_len = cur.read_u32::<LittleEndian>()? as usize;
        let mut hash = vec![0u8; hash_len];
        cur.read_exact(&mut hash)?;
        let spec_hash = String::from_utf8(hash).map_err(|e| Error::Parse(e.to_string()))?;
        let method = match cur.read_u8()? {
            0 => IndexMethod::ClosedForm,
            1 => IndexMethod::Bisection,
            other => return Err(Error::Parse(format!("unknown method tag {other}"))),
        };
        let tol = cur.read_f64::<LittleEndian>()?;
        let t_max = cur.read_u32::<LittleEndian>()?;
        let b_max = cur.read_u32::<LittleEndian>()?;
        let n_costs = cur.read_u32::<LittleEndian>()? as usize;
        let len = cur.read_u64::<LittleEndian>()? as usize;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(cur.read_f64::<LittleEndian>()?);
        }
        Ok(Self { spec_hash, tol, method, t_max, b_max, n_costs, values })
    }
}

/// Build the index table for every extended state: closed form when the cost
/// chain has a single state, bisection otherwise.
pub fn build_index_table(spec: &ProblemSpec, tol: f64) -> Result<IndexTable> {
    let method = if spec.costs.n_states() == 1 {
        IndexMethod::ClosedForm
    } else {
        IndexMethod::Bisection
    };
    build_index_table_with(spec, tol, method)
}

pub fn build_index_table_with(
    spec: &ProblemSpec,
    tol: f64,
    method: IndexMethod,
) -> Result<IndexTable> {
    let (t_max, b_max) = spec.grid_bounds();
    let nc = spec.costs.n_states();
    let len = (t_max as usize + 1) * (b_max as usize + 1) * nc;
    let values = match method {
        IndexMethod::ClosedForm => {
            if nc != 1 {
                return Err(Error::MethodInvalid(
                    "closed form requires a single-state cost chain".into(),
                ));
            }
            let c0 = spec.costs.cost(0);
            let mut values = vec![0.0; len];
            for t in 1..=t_max {
                for b in 1..=b_max {
                    let idx = (t as usize * (b_max as usize + 1) + b as usize) * nc;
                    values[idx] = closed_form_index(t, b, c0, spec.beta, &spec.penalty);
                }
            }
            values
        }
        IndexMethod::Bisection => {
            let f_bar = spec.penalty.eval(b_bar_for_bracket(spec));
            let (lo0, hi0) = (-f_bar - 2.0, f_bar + 2.0);
            let states: Vec<(u32, u32, usize)> = (1..=t_max)
                .flat_map(|t| (1..=b_max).flat_map(move |b| (0..nc).map(move |j| (t, b, j))))
                .collect();
            let eval = PrefEvaluator::new(spec);
            let solved: Vec<Result<f64>> = states
                .par_iter()
                .map(|&(t, b, j)| {
                    let (mut lo, mut hi) = (lo0, hi0);
                    for _ in 0..8 {
                        match bisect_state(&eval, t, b, j, lo, hi, tol) {
                            Ok(v) => return Ok(v),
                            Err(Error::BracketError { .. }) => {
                                let width = hi - lo;
                                lo -= width;
                                hi += width;
                            }
                            Err(e) => return Err(e),
                        }
                    }
                    Err(Error::BracketError { lo, hi })
                })
                .collect();
            let mut values = vec![0.0; len];
            for (&(t, b, j), v) in states.iter().zip(solved) {
                values[(t as usize * (b_max as usize + 1) + b as usize) * nc + j] = v?;
            }
            values
        }
    };
    Ok(IndexTable {
        spec_hash: spec.spec_hash(),
        tol,
        method,
        t_max,
        b_max,
        n_costs: nc,
        values,
    })
}

fn b_bar_for_bracket(spec: &ProblemSpec) -> u32 {
    spec.b_bar().max(1)
}

/// Optimal single-arm action at `state` for each subsidy in `nu_grid`
/// (ties resolve passive). Tests use this to check the single-crossing
/// property behind indexability.
pub fn single_crossing_probe(
    spec: &ProblemSpec,
    state: (u32, u32, usize),
    nu_grid: &[f64],
) -> Vec<ArmAction> {
    assert!(nu_grid.windows(2).all(|w| w[0] < w[1]), "grid must be strictly increasing");
    let (t, b, j) = state;
    let eval = PrefEvaluator::new(spec);
    nu_grid.iter().map(|&nu| eval.optimal_action(nu, t, b, j)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArrivalDistribution, CostChain, PenaltyFunction};

    fn quad(kappa: f64) -> PenaltyFunction {
        PenaltyFunction::quadratic(kappa).unwrap()
    }

    fn constant_cost_spec(c0: f64, beta: f64, t_bar: u32, b_bar: u32) -> ProblemSpec {
        ProblemSpec::new(
            1,
            1,
            beta,
            ArrivalDistribution::uniform_jobs(0.3, t_bar, b_bar).unwrap(),
            quad(0.2),
            CostChain::constant(c0),
        )
        .unwrap()
    }

    fn two_cost_spec(beta: f64) -> ProblemSpec {
        ProblemSpec::new(
            1,
            1,
            beta,
            ArrivalDistribution::uniform_jobs(0.4, 4, 3).unwrap(),
            quad(0.2),
            CostChain::new(vec![0.3, 0.8], vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap(),
        )
        .unwrap()
    }

    fn no_arrival_spec(c0: f64, beta: f64) -> ProblemSpec {
        ProblemSpec::new(
            1,
            1,
            beta,
            ArrivalDistribution::never(),
            quad(0.2),
            CostChain::constant(c0),
        )
        .unwrap()
    }

    #[test]
    fn value_iteration_idle_arm_values() {
        let spec = no_arrival_spec(0.5, 0.9);
        let v0 = subsidy_value_iteration(&spec, 0.0, 1e-10).unwrap();
        assert!(v0.value(0, 0, 0).abs() < 1e-9);
        let v1 = subsidy_value_iteration(&spec, 1.0, 1e-10).unwrap();
        assert!((v1.value(0, 0, 0) - 10.0).abs() < 1e-7, "got {}", v1.value(0, 0, 0));
    }

    #[test]
    fn value_iteration_one_step_state() {
        // (1,1): choose between -F(1) and 1 - c0, both followed by nothing.
        let spec = no_arrival_spec(0.5, 0.9);
        let v = subsidy_value_iteration(&spec, 0.0, 1e-10).unwrap();
        assert!((v.value(1, 1, 0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn value_iteration_non_convergence_error() {
        let spec = no_arrival_spec(0.5, 0.9);
        let err = subsidy_value_iteration_capped(&spec, 0.3, 1e-14, 3);
        assert!(matches!(err, Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn exact_solver_matches_value_iteration() {
        let spec = two_cost_spec(0.9);
        for &nu in &[-0.5, 0.0, 0.4, 1.3] {
            let vi = subsidy_value_iteration(&spec, nu, 1e-12).unwrap();
            let fast = SingleArmSolution::solve(&spec, nu);
            let (t_max, b_max, nc) = vi.bounds();
            for t in 0..=t_max {
                for b in 0..=b_max {
                    if t == 0 && b > 0 {
                        continue;
                    }
                    for j in 0..nc {
                        let a = vi.value(t, b, j);
                        let e = fast.value(t, b, j);
                        assert!((a - e).abs() < 1e-9, "nu={nu} state=({t},{b},{j}): {a} vs {e}");
                        if b >= 1 {
                            let fa = vi.action_pref(t, b, j);
                            let fe = fast.action_pref(&spec, t, b, j);
                            assert!((fa - fe).abs() < 1e-9, "pref nu={nu} ({t},{b},{j})");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn dummy_value_closed_form() {
        let spec = two_cost_spec(0.8);
        let fast = SingleArmSolution::solve(&spec, 0.7);
        assert!((fast.dummy_value() - 0.7 / 0.2).abs() < 1e-12);
    }

    #[test]
    fn closed_form_examples() {
        let f = quad(0.2);
        assert!((closed_form_index(1, 2, 0.5, 0.999, &f) - 1.1).abs() < 1e-12);
        assert!((closed_form_index(3, 2, 0.5, 0.999, &f) - 0.5).abs() < 1e-12);
        assert!((closed_form_index(2, 3, 0.5, 0.9, &f) - 1.04).abs() < 1e-12);
        assert_eq!(closed_form_index(0, 0, 0.5, 0.9, &f), 0.0);
        assert_eq!(closed_form_index(4, 0, 0.5, 0.9, &f), 0.0);
    }

    /// Constant-cost preference at (2,1) is piecewise linear with known
    /// pieces; checks the recursion against hand algebra.
    #[test]
    fn preference_piecewise_form_at_2_1() {
        let c0 = 0.5;
        let beta = 0.9;
        let spec = constant_cost_spec(c0, beta, 4, 3);
        let eval = PrefEvaluator::new(&spec);
        let f1 = spec.penalty.eval(1);
        let cases = [
            (-0.5, -0.5 - (1.0 - beta) * (1.0 - c0)),
            (0.2, (1.0 - beta) * (0.2 - (1.0 - c0))),
            (0.6, (1.0 - beta) * (0.6 - (1.0 - c0))),
            (1.0 - c0 + f1 + 0.3, 1.0 - c0 + f1 + 0.3 - (1.0 - c0) - beta * f1),
        ];
        for (nu, expect) in cases {
            let got = eval.action_pref(nu, 2, 1, 0);
            assert!((got - expect).abs() < 1e-12, "nu={nu}: {got} vs {expect}");
        }
    }

    #[test]
    fn bisection_agrees_with_closed_form() {
        let spec = constant_cost_spec(0.5, 0.95, 5, 4);
        for t in 1..=5u32 {
            for b in 1..=4u32 {
                let by_bisect =
                    index_by_bisection(&spec, (t, b, 0), -6.0, 6.0, BISECTION_TOL).unwrap();
                let exact = closed_form_index(t, b, 0.5, 0.95, &spec.penalty);
                assert!(
                    (by_bisect - exact).abs() <= 10.0 * BISECTION_TOL,
                    "({t},{b}): {by_bisect} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn bisection_zero_penalty_one_slot_state() {
        let spec = ProblemSpec::new(
            1,
            1,
            0.9,
            ArrivalDistribution::uniform_jobs(0.3, 2, 2).unwrap(),
            PenaltyFunction::tabulated(vec![0.0, 0.0, 0.0]).unwrap(),
            CostChain::constant(0.5),
        )
        .unwrap();
        let nu = index_by_bisection(&spec, (1, 1, 0), -4.0, 4.0, 1e-9).unwrap();
        assert!((nu - 0.5).abs() < 1e-7);
    }

    #[test]
    fn bisection_dummy_state_is_zero() {
        let spec = constant_cost_spec(0.5, 0.9, 3, 3);
        assert_eq!(index_by_bisection(&spec, (0, 0, 0), -1.0, 1.0, 1e-9).unwrap(), 0.0);
        assert_eq!(index_by_bisection(&spec, (2, 0, 0), -1.0, 1.0, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn bisection_bracket_error() {
        let spec = constant_cost_spec(0.5, 0.9, 3, 3);
        // Index at (3,1) is 0.5; a bracket entirely above it has no sign change.
        let err = index_by_bisection(&spec, (3, 1, 0), 1.0, 2.0, 1e-9);
        assert!(matches!(err, Err(Error::BracketError { .. })));
    }

    #[test]
    fn table_single_cost_uses_closed_form() {
        let spec = constant_cost_spec(0.5, 0.95, 4, 4);
        let table = build_index_table(&spec, BISECTION_TOL).unwrap();
        assert_eq!(table.method, IndexMethod::ClosedForm);
        for t in 0..=4u32 {
            for b in 0..=4u32 {
                if t == 0 && b > 0 {
                    continue;
                }
                assert_eq!(
                    table.index(t, b, 0),
                    closed_form_index(t, b, 0.5, 0.95, &spec.penalty)
                );
            }
        }
    }

    #[test]
    fn table_zero_rows_and_one_slot_closed_form_any_chain() {
        let spec = two_cost_spec(0.9);
        let table = build_index_table(&spec, BISECTION_TOL).unwrap();
        assert_eq!(table.method, IndexMethod::Bisection);
        let (t_max, b_max, nc) = table.bounds();
        for t in 0..=t_max {
            for j in 0..nc {
                assert_eq!(table.index(t, 0, j), 0.0);
            }
        }
        // One-slot states have a chain-independent closed form.
        for b in 1..=b_max {
            for j in 0..nc {
                let expect = 1.0 - spec.costs.cost(j) + spec.penalty.step(b);
                assert!(
                    (table.index(1, b, j) - expect).abs() < 10.0 * BISECTION_TOL,
                    "b={b}, j={j}"
                );
            }
        }
    }

    #[test]
    fn table_monotone_in_workload_where_positive() {
        let spec = two_cost_spec(0.9);
        let table = build_index_table(&spec, BISECTION_TOL).unwrap();
        let (t_max, b_max, nc) = table.bounds();
        for t in 1..=t_max {
            for b in 1..b_max {
                for j in 0..nc {
                    let cur = table.index(t, b, j);
                    if cur > 0.0 {
                        assert!(
                            table.index(t, b + 1, j) >= cur - 1e-6,
                            "({t},{b},{j}) -> ({t},{},{j})",
                            b + 1
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn preference_nondecreasing_in_subsidy() {
        let spec = two_cost_spec(0.9);
        let eval = PrefEvaluator::new(&spec);
        for t in 1..=4u32 {
            for b in 1..=3u32 {
                for j in 0..2 {
                    let mut prev = f64::NEG_INFINITY;
                    let mut nu = -4.0;
                    while nu <= 4.0 {
                        let f = eval.action_pref(nu, t, b, j);
                        assert!(f >= prev - 1e-12, "f decreased at ({t},{b},{j}), nu={nu}");
                        prev = f;
                        nu += 0.22;
                    }
                }
            }
        }
    }

    #[test]
    fn single_crossing_probe_behaviour() {
        let spec = constant_cost_spec(0.5, 0.999, 3, 3);
        // Dummy state switches exactly at 0.
        let acts = single_crossing_probe(&spec, (0, 0, 0), &[-1.0, 0.0, 1.0]);
        assert_eq!(acts, vec![ArmAction::Active, ArmAction::Passive, ArmAction::Passive]);
        // (1,2): switch lands in the cell containing the closed-form value 1.1.
        let grid: Vec<f64> = (0..30).map(|i| 0.05 * i as f64).collect();
        let acts = single_crossing_probe(&spec, (1, 2, 0), &grid);
        let switch = acts.iter().position(|&a| a == ArmAction::Passive).unwrap();
        assert!(grid[switch] >= 1.1 - 1e-9 && grid[switch - 1] < 1.1);
        // Far above every index: all passive.
        let acts = single_crossing_probe(&spec, (2, 3, 0), &[50.0, 60.0, 70.0]);
        assert!(acts.iter().all(|&a| a == ArmAction::Passive));
    }

    #[test]
    fn single_crossing_over_fine_grid() {
        let spec = two_cost_spec(0.85);
        let (t_max, b_max) = spec.grid_bounds();
        let grid: Vec<f64> = (0..200).map(|i| -4.0 + i as f64 * 0.04).collect();
        for t in 0..=t_max {
            for b in 0..=b_max {
                if t == 0 && b > 0 {
                    continue;
                }
                for j in 0..2 {
                    let acts = single_crossing_probe(&spec, (t, b, j), &grid);
                    let switches = acts
                        .windows(2)
                        .filter(|w| w[0] != w[1])
                        .count();
                    assert!(switches <= 1, "state ({t},{b},{j}) switched {switches} times");
                    if switches == 1 {
                        assert_eq!(acts.first(), Some(&ArmAction::Active));
                    }
                }
            }
        }
    }

    #[test]
    fn value_concave_in_workload_for_positive_subsidy() {
        let spec = two_cost_spec(0.9);
        let (t_max, b_max, nc) = {
            let s = SingleArmSolution::solve(&spec, 0.5);
            s.bounds()
        };
        for &nu in &[0.1, 0.5, 1.2] {
            let sol = SingleArmSolution::solve(&spec, nu);
            for t in 1..=t_max {
                for b in 0..b_max.saturating_sub(1) {
                    for j in 0..nc {
                        let second = sol.value(t, b + 2, j) - 2.0 * sol.value(t, b + 1, j)
                            + sol.value(t, b, j);
                        assert!(second <= 1e-9, "nu={nu} ({t},{b},{j}): {second}");
                    }
                }
            }
        }
    }

    #[test]
    fn cache_round_trip() {
        let spec = two_cost_spec(0.9);
        let table = build_index_table(&spec, BISECTION_TOL).unwrap();
        let dir = std::env::temp_dir().join(format!("dlrmab-cache-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("table.bin");
        table.write_cache(&path).unwrap();
        let back = IndexTable::read_cache(&path).unwrap();
        assert_eq!(back.spec_hash, table.spec_hash);
        assert_eq!(back.values, table.values);
        std::fs::remove_dir_all(&dir).ok();
    }
}
