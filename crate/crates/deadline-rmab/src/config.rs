//! Problem configuration files.
//!
//! A [`ProblemSpec`] round-trips through a TOML document shaped like:
//!
//! ```toml
//! n = 10
//! m = 5
//! beta = 0.999
//!
//! [penalty]
//! kind = "quadratic"   # or "linear", "tabulated"
//! kappa = 0.2          # "tabulated" uses `values = [0.0, ...]` instead
//!
//! [[arrivals]]
//! t = 0
//! b = 0
//! prob = 0.3
//!
//! [[arrivals]]
//! t = 3
//! b = 2
//! prob = 0.7
//!
//! [cost_chain]
//! states = [0.5]
//! transition = [[1.0]]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArrivalDistribution, CostChain, PenaltyFunction, ProblemSpec};

#[derive(Debug, Serialize, Deserialize)]
struct SpecFile {
    n: usize,
    m: usize,
    beta: f64,
    penalty: PenaltyEntry,
    arrivals: Vec<ArrivalEntry>,
    cost_chain: CostChainEntry,
}

#[derive(Debug, Serialize, Deserialize)]
struct PenaltyEntry {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrivalEntry {
    t: u32,
    b: u32,
    prob: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CostChainEntry {
    states: Vec<f64>,
    transition: Vec<Vec<f64>>,
}

impl SpecFile {
    fn from_spec(spec: &ProblemSpec) -> Self {
        let penalty = match &spec.penalty {
            PenaltyFunction::Quadratic { kappa } => PenaltyEntry {
                kind: "quadratic".into(),
                kappa: Some(*kappa),
                values: None,
            },
            PenaltyFunction::Linear { kappa } => PenaltyEntry {
                kind: "linear".into(),
                kappa: Some(*kappa),
                values: None,
            },
            PenaltyFunction::Tabulated { values } => PenaltyEntry {
                kind: "tabulated".into(),
                kappa: None,
                values: Some(values.clone()),
            },
        };
        SpecFile {
            n: spec.n,
            m: spec.m,
            beta: spec.beta,
            penalty,
            arrivals: spec
                .arrivals
                .support()
                .iter()
                .map(|&(t, b, prob)| ArrivalEntry { t, b, prob })
                .collect(),
            cost_chain: CostChainEntry {
                states: spec.costs.states().to_vec(),
                transition: (0..spec.costs.n_states())
                    .map(|j| spec.costs.row(j).to_vec())
                    .collect(),
            },
        }
    }

    fn into_spec(self) -> Result<ProblemSpec> {
        let penalty = match self.penalty.kind.as_str() {
            "quadratic" => PenaltyFunction::quadratic(
                self.penalty.kappa.ok_or_else(|| Error::Parse("quadratic penalty needs kappa".into()))?,
            )?,
            "linear" => PenaltyFunction::linear(
                self.penalty.kappa.ok_or_else(|| Error::Parse("linear penalty needs kappa".into()))?,
            )?,
            "tabulated" => PenaltyFunction::tabulated(
                self.penalty.values.ok_or_else(|| Error::Parse("tabulated penalty needs values".into()))?,
            )?,
            other => return Err(Error::Parse(format!("unknown penalty kind `{other}`"))),
        };
        let arrivals = ArrivalDistribution::new(
            self.arrivals.into_iter().map(|a| (a.t, a.b, a.prob)).collect(),
        )?;
        let costs = CostChain::new(self.cost_chain.states, self.cost_chain.transition)?;
        ProblemSpec::new(self.n, self.m, self.beta, arrivals, penalty, costs)
    }
}

pub fn to_toml(spec: &ProblemSpec) -> String {
    toml::to_string(&SpecFile::from_spec(spec)).expect("spec serializes to TOML")
}

pub fn from_toml(text: &str) -> Result<ProblemSpec> {
    let file: SpecFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_spec()
}

pub fn load(path: impl AsRef<Path>) -> Result<ProblemSpec> {
    from_toml(&std::fs::read_to_string(path)?)
}

pub fn save(spec: &ProblemSpec, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_toml(spec))?;
    Ok(())
}
