//! Scheduling policies: Whittle index (optionally with laxity/size tie
//! refinement), earliest deadline first, and least laxity first.
//!
//! All policies map the joint state to an activation set of at most `M`
//! positions. EDF and LLF always use the full capacity when enough unfinished
//! jobs exist. The index policies activate only arms whose index is strictly
//! positive — an arm with index `<= 0` loses to a dummy arm, which models
//! idling a processor when processing is unprofitable.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, ProblemSpec, SystemState};
use crate::whittle::IndexTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Whittle,
    WhittleLllp,
    WhittleLlsp,
    Edf,
    Llf,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Whittle,
        PolicyKind::WhittleLllp,
        PolicyKind::WhittleLlsp,
        PolicyKind::Edf,
        PolicyKind::Llf,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::Whittle => "whittle",
            PolicyKind::WhittleLllp => "whittle-lllp",
            PolicyKind::WhittleLlsp => "whittle-llsp",
            PolicyKind::Edf => "edf",
            PolicyKind::Llf => "llf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "whittle" => Ok(PolicyKind::Whittle),
            "whittle-lllp" => Ok(PolicyKind::WhittleLllp),
            "whittle-llsp" => Ok(PolicyKind::WhittleLlsp),
            "edf" => Ok(PolicyKind::Edf),
            "llf" => Ok(PolicyKind::Llf),
            other => Err(Error::Parse(format!("unknown policy `{other}`"))),
        }
    }

    pub fn needs_index(&self) -> bool {
        matches!(self, PolicyKind::Whittle | PolicyKind::WhittleLllp | PolicyKind::WhittleLlsp)
    }

    /// Stable id used to derive the tie-break stream; identical kinds see
    /// identical tie-breaks on shared sample paths.
    pub fn stream_code(&self) -> u64 {
        Self::ALL.iter().position(|k| k == self).unwrap() as u64
    }
}

/// How to refine the order among arms whose indices tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieRefinement {
    /// Random only.
    None,
    /// Least laxity first, then larger remaining work first.
    LeastLaxityLongerWork,
    /// Least laxity first, then smaller remaining work first.
    LeastLaxitySmallerWork,
}

/// One position offered to the index ranking.
#[derive(Debug, Clone, Copy)]
pub struct Candidate {
    pub position: usize,
    pub index: f64,
    pub laxity: i64,
    pub remaining_work: u32,
}

/// Indices closer than this tie.
pub const INDEX_TIE_TOL: f64 = 1e-9;

fn tie_bucket(index: f64) -> i64 {
    (index / INDEX_TIE_TOL).round() as i64
}

/// Sort candidates by descending index; within an index tie, apply the
/// refinement keys, and break what remains uniformly at random. With
/// `TieRefinement::None` and distinct indices this is the plain index order.
pub fn order_candidates(candidates: &mut [Candidate], refine: TieRefinement, rng: &mut impl Rng) {
    let mut keyed: Vec<(i64, i64, i64, u64, Candidate)> = candidates
        .iter()
        .map(|&c| {
            let bucket = tie_bucket(c.index);
            let (lax, work) = match refine {
                TieRefinement::None => (0, 0),
                TieRefinement::LeastLaxityLongerWork => (c.laxity, -(c.remaining_work as i64)),
                TieRefinement::LeastLaxitySmallerWork => (c.laxity, c.remaining_work as i64),
            };
            (bucket, lax, work, rng.gen::<u64>(), c)
        })
        .collect();
    keyed.sort_by(|a, b| {
        b.0.cmp(&a.0) // higher index first
            .then(a.1.cmp(&b.1)) // smaller laxity first
            .then(a.2.cmp(&b.2)) // refinement work key
            .then(a.3.cmp(&b.3)) // random
    });
    for (slot, (_, _, _, _, c)) in keyed.into_iter().enumerate() {
        candidates[slot] = c;
    }
}

/// A policy instance. Whittle variants carry the index table for their
/// instance; the tie-break stream makes repeated decisions reproducible.
#[derive(Debug, Clone)]
pub struct Policy {
    kind: PolicyKind,
    table: Option<Arc<IndexTable>>,
    tie_rng: ChaCha12Rng,
}

impl Policy {
    pub fn new(
        kind: PolicyKind,
        spec: &ProblemSpec,
        table: Option<Arc<IndexTable>>,
        tie_seed: u64,
    ) -> Result<Self> {
        let table = if kind.needs_index() {
            let table = table.ok_or_else(|| {
                Error::TableMismatch(format!("policy `{}` needs an index table", kind.label()))
            })?;
            if table.spec_hash != spec.spec_hash() {
                return Err(Error::TableMismatch(
                    "index table was built for a different instance".into(),
                ));
            }
            Some(table)
        } else {
            None
        };
        Ok(Self { kind, table, tie_rng: ChaCha12Rng::seed_from_u64(tie_seed) })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// Same policy with a fresh tie-break stream (one per replication).
    pub fn with_tie_stream(&self, rng: ChaCha12Rng) -> Self {
        Self { kind: self.kind, table: self.table.clone(), tie_rng: rng }
    }

    /// Pick at most `m` positions to activate.
    pub fn choose(&mut self, state: &SystemState, m: usize) -> Action {
        let n = state.jobs.len();
        match self.kind {
            PolicyKind::Edf => {
                let mut cands: Vec<(u32, u64, usize)> = state
                    .jobs
                    .iter()
                    .enumerate()
                    .filter(|(_, j)| j.remaining_work > 0)
                    .map(|(i, j)| (j.lead_time, self.tie_rng.gen::<u64>(), i))
                    .collect();
                cands.sort();
                Action::from_positions(
                    n,
                    &cands.iter().take(m).map(|&(_, _, i)| i).collect::<Vec<_>>(),
                )
            }
            PolicyKind::Llf => {
                let mut cands: Vec<(i64, u64, usize)> = state
                    .jobs
                    .iter()
                    .enumerate()
                    .filter(|(_, j)| j.remaining_work > 0)
                    .map(|(i, j)| (j.laxity(), self.tie_rng.gen::<u64>(), i))
                    .collect();
                cands.sort();
                Action::from_positions(
                    n,
                    &cands.iter().take(m).map(|&(_, _, i)| i).collect::<Vec<_>>(),
                )
            }
            PolicyKind::Whittle | PolicyKind::WhittleLllp | PolicyKind::WhittleLlsp => {
                let table = self.table.as_ref().expect("validated at construction");
                let refine = match self.kind {
                    PolicyKind::WhittleLllp => TieRefinement::LeastLaxityLongerWork,
                    PolicyKind::WhittleLlsp => TieRefinement::LeastLaxitySmallerWork,
                    _ => TieRefinement::None,
                };
                let mut cands: Vec<Candidate> = state
                    .jobs
                    .iter()
                    .enumerate()
                    .map(|(i, j)| Candidate {
                        position: i,
                        index: table.index(j.lead_time, j.remaining_work, state.cost_index),
                        laxity: j.laxity(),
                        remaining_work: j.remaining_work,
                    })
                    .filter(|c| c.index > 0.0)
                    .collect();
                order_candidates(&mut cands, refine, &mut self.tie_rng);
                Action::from_positions(
                    n,
                    &cands.iter().take(m).map(|c| c.position).collect::<Vec<_>>(),
                )
            }
        }
    }
}
