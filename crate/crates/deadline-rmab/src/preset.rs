//! Experiment presets: parameter sweeps producing one CSV per preset.
//!
//! A preset bundles a problem template, a swept variable with its grid, a
//! policy list, and simulation settings. The shipped presets reproduce the
//! standard study layout at desk scale: constant-cost and dynamic-cost
//! capacity sweeps, the asymptotic gap-versus-capacity experiment with its
//! bound columns, a hard-deadline completion-ratio sweep, and the
//! independent-versus-Poisson arrival validation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bounds::{arrival_window_distribution_under, gap_bound, WindowMethod};
use crate::error::{Error, Result};
use crate::exact::{default_nu_grid, lagrangian_upper_bound};
use crate::model::{
    ArrivalDistribution, ArrivalMode, CostChain, PenaltyFunction, ProblemSpec, SystemState,
};
use crate::policy::{Policy, PolicyKind};
use crate::sim::{self, SimConfig};
use crate::whittle::{build_index_table, BISECTION_TOL};

/// Which spec field the grid sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVar {
    /// Grid entries are processor counts `M`.
    Capacity,
    /// Grid entries are queue sizes `N`.
    QueueSize,
    /// Grid entries are ratios `M/N`; `M = max(1, round(ratio·N))`.
    CapacityRatio,
}

/// Mean arrivals per `T̄`-slot window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMean {
    Fixed(f64),
    /// Track the swept capacity: `μ = M`.
    EqualCapacity,
}

impl WindowMean {
    fn resolve(&self, m: usize) -> f64 {
        match self {
            WindowMean::Fixed(v) => *v,
            WindowMean::EqualCapacity => m as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationKind {
    /// Match the realized admission mean per window, accounting for the
    /// slots a position spends occupied (renewal formula).
    RealizedMean,
    /// Match the offered rate only: `N·(1-Q00) = μ/T̄` per slot. Occupied
    /// positions then thin the realized admissions at small `N`; the loss
    /// vanishes as the queue grows.
    OfferedRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub target: WindowMean,
    pub kind: CalibrationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetArrival {
    Independent,
    PoissonUniform { mean: WindowMean },
    /// Run both models and emit a row per mode.
    CompareModes { mean: WindowMean },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: String,
    pub sweep: SweepVar,
    pub grid: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    pub replications: usize,
    pub seed: u64,
    /// Fixed horizon; `None` derives it from the discount factor.
    pub horizon: Option<usize>,
    pub arrival: PresetArrival,
    /// Rewrite `Q(0,0)` at each grid point so the independent model offers
    /// or admits the target number of jobs per window.
    pub calibrate_q00: Option<Calibration>,
    pub include_upper_bound: bool,
    pub include_gap_bound: bool,
    pub spec: ProblemSpec,
}

impl ExperimentPreset {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("preset serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let preset: ExperimentPreset =
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if preset.grid.is_empty() || preset.policies.is_empty() {
            return Err(Error::InvalidSpec("preset needs a nonempty grid and policy list".into()));
        }
        preset.spec.revalidated()?;
        Ok(preset)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// The five-state persistent cost chain shipped with the dynamic presets.
pub fn reference_cost_chain() -> CostChain {
    CostChain::new(
        vec![0.15, 0.35, 0.55, 0.80, 1.10],
        vec![
            vec![0.60, 0.25, 0.10, 0.04, 0.01],
            vec![0.20, 0.50, 0.20, 0.08, 0.02],
            vec![0.08, 0.22, 0.45, 0.20, 0.05],
            vec![0.03, 0.10, 0.25, 0.47, 0.15],
            vec![0.02, 0.08, 0.15, 0.30, 0.45],
        ],
    )
    .unwrap()
}

fn standard_arrivals() -> ArrivalDistribution {
    ArrivalDistribution::uniform_jobs(0.3, 12, 9).unwrap()
}

/// Jobs with no slack: `B = min(T, 9)`, uniform over lead times. Every
/// resident job demands processing every slot, so capacity actually binds —
/// the regime where the gap-to-bound trend is visible at desk scale.
fn near_critical_arrivals() -> ArrivalDistribution {
    let mut points = vec![(0u32, 0u32, 0.3f64)];
    let per = 0.7 / 12.0;
    for t in 1..=12u32 {
        points.push((t, t.min(9), per));
    }
    ArrivalDistribution::new(points).unwrap()
}

fn standard_penalty() -> PenaltyFunction {
    PenaltyFunction::quadratic(0.2).unwrap()
}

pub fn built_in_names() -> Vec<&'static str> {
    vec![
        "constant-cost-ratio",
        "dynamic-cost-ratio",
        "asymptotic-gap",
        "hard-deadline",
        "arrival-validation",
    ]
}

pub fn built_in(name: &str) -> Result<ExperimentPreset> {
    let preset = match name {
        "constant-cost-ratio" => ExperimentPreset {
            name: name.into(),
            sweep: SweepVar::CapacityRatio,
            grid: vec![0.2, 0.5, 0.8, 1.0],
            policies: PolicyKind::ALL.to_vec(),
            replications: 24,
            seed: 20240601,
            horizon: Some(6000),
            arrival: PresetArrival::Independent,
            calibrate_q00: None,
            include_upper_bound: true,
            include_gap_bound: false,
            spec: ProblemSpec::new(
                10,
                5,
                0.999,
                standard_arrivals(),
                standard_penalty(),
                CostChain::constant(0.5),
            )?,
        },
        "dynamic-cost-ratio" => ExperimentPreset {
            name: name.into(),
            sweep: SweepVar::CapacityRatio,
            grid: vec![0.2, 0.5, 0.8, 1.0],
            policies: PolicyKind::ALL.to_vec(),
            replications: 24,
            seed: 20240602,
            horizon: Some(6000),
            arrival: PresetArrival::Independent,
            calibrate_q00: None,
            include_upper_bound: true,
            include_gap_bound: false,
            spec: ProblemSpec::new(
                10,
                5,
                0.999,
                standard_arrivals(),
                standard_penalty(),
                reference_cost_chain(),
            )?,
        },
        "asymptotic-gap" => ExperimentPreset {
            name: name.into(),
            sweep: SweepVar::Capacity,
            grid: vec![5.0, 10.0, 20.0, 40.0],
            policies: vec![PolicyKind::Whittle],
            replications: 48,
            seed: 20240603,
            horizon: None,
            arrival: PresetArrival::PoissonUniform { mean: WindowMean::EqualCapacity },
            calibrate_q00: Some(Calibration {
                target: WindowMean::EqualCapacity,
                kind: CalibrationKind::RealizedMean,
            }),
            include_upper_bound: true,
            include_gap_bound: true,
            spec: ProblemSpec::new(
                100,
                5,
                0.999,
                near_critical_arrivals(),
                standard_penalty(),
                reference_cost_chain(),
            )?,
        },
        "hard-deadline" => ExperimentPreset {
            name: name.into(),
            sweep: SweepVar::CapacityRatio,
            grid: vec![0.2, 0.4, 0.6, 0.8],
            policies: PolicyKind::ALL.to_vec(),
            replications: 12,
            seed: 20240604,
            horizon: Some(5000),
            arrival: PresetArrival::Independent,
            calibrate_q00: None,
            include_upper_bound: false,
            include_gap_bound: false,
            spec: ProblemSpec::new(
                100,
                20,
                0.999,
                standard_arrivals(),
                PenaltyFunction::linear(10.0)?,
                CostChain::constant(0.95),
            )?,
        },
        "arrival-validation" => ExperimentPreset {
            name: name.into(),
            sweep: SweepVar::QueueSize,
            grid: vec![20.0, 50.0, 100.0, 200.0],
            policies: vec![PolicyKind::Whittle, PolicyKind::Edf],
            replications: 12,
            seed: 20240605,
            horizon: Some(8000),
            arrival: PresetArrival::CompareModes { mean: WindowMean::Fixed(10.0) },
            calibrate_q00: Some(Calibration {
                target: WindowMean::Fixed(10.0),
                kind: CalibrationKind::OfferedRate,
            }),
            include_upper_bound: false,
            include_gap_bound: false,
            spec: ProblemSpec::new(
                20,
                10,
                0.999,
                standard_arrivals(),
                standard_penalty(),
                reference_cost_chain(),
            )?,
        },
        other => return Err(Error::Parse(format!("unknown preset `{other}`"))),
    };
    Ok(preset)
}

/// Rewrite `Q(0,0)` toward `target` jobs per window. `RealizedMean` solves
/// the renewal equation `N·T̄/(E[T|job] + Q00/(1-Q00)) = target`;
/// `OfferedRate` sets `1-Q00 = target/(N·T̄)` directly.
pub fn calibrate_arrivals(
    spec: &ProblemSpec,
    target: f64,
    kind: CalibrationKind,
) -> Result<ProblemSpec> {
    let t_bar = spec.t_bar().max(1) as f64;
    if target <= 0.0 {
        return Err(Error::DomainError("target window mean must be positive".into()));
    }
    let q00 = match kind {
        CalibrationKind::RealizedMean => {
            let mean_t = spec.arrivals.mean_job_lead_time();
            let odds = (spec.n as f64 * t_bar / target - mean_t).max(0.0);
            odds / (1.0 + odds)
        }
        CalibrationKind::OfferedRate => {
            let rate = target / (spec.n as f64 * t_bar);
            if rate > 1.0 {
                return Err(Error::DomainError(format!(
                    "offered rate {rate} per position-slot exceeds 1"
                )));
            }
            1.0 - rate
        }
    };
    let jobs: Vec<(u32, u32, f64)> = spec
        .arrivals
        .support()
        .iter()
        .filter(|&&(t, _, _)| t > 0)
        .map(|&(t, b, p)| (t, b, p))
        .collect();
    let job_mass: f64 = jobs.iter().map(|&(_, _, p)| p).sum();
    let mut points = vec![(0, 0, q00)];
    for (t, b, p) in jobs {
        points.push((t, b, p / job_mass * (1.0 - q00)));
    }
    ProblemSpec::new(
        spec.n,
        spec.m,
        spec.beta,
        ArrivalDistribution::new(points)?,
        spec.penalty.clone(),
        spec.costs.clone(),
    )
}

/// One output row of a preset run.
#[derive(Debug, Clone)]
pub struct PresetRow {
    pub sweep: f64,
    pub policy: String,
    pub mode: &'static str,
    pub mu: Option<f64>,
    pub mean_reward: f64,
    pub stderr: f64,
    pub completion_ratio: f64,
    /// Jobs admitted per replication, averaged.
    pub mean_arrivals: f64,
    pub truncation_error: f64,
    pub upper_bound: Option<f64>,
    pub gap: Option<f64>,
    pub gap_bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PresetOutcome {
    pub rows: Vec<PresetRow>,
    pub csv_path: PathBuf,
}

/// Run every grid point and write `<out_dir>/<name>.csv`. All rows are
/// computed before anything is written, so a failure leaves no partial file.
pub fn run_preset(preset: &ExperimentPreset, out_dir: impl AsRef<Path>) -> Result<PresetOutcome> {
    let rows = run_preset_rows(preset)?;
    std::fs::create_dir_all(out_dir.as_ref())?;
    let csv_path = out_dir.as_ref().join(format!("{}.csv", preset.name));
    std::fs::write(&csv_path, render_csv(preset, &rows))?;
    Ok(PresetOutcome { rows, csv_path })
}

pub fn render_csv(preset: &ExperimentPreset, rows: &[PresetRow]) -> String {
    let mut out = String::from(
        "sweep,policy,mode,mu,mean_reward,stderr,completion_ratio,mean_arrivals,truncation_error",
    );
    if preset.include_upper_bound {
        out.push_str(",upper_bound,gap");
    }
    if preset.include_gap_bound {
        out.push_str(",gap_bound");
    }
    out.push('\n');
    for r in rows {
        let mu = r.mu.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}",
            r.sweep,
            r.policy,
            r.mode,
            mu,
            r.mean_reward,
            r.stderr,
            r.completion_ratio,
            r.mean_arrivals,
            r.truncation_error
        ));
        if preset.include_upper_bound {
            out.push_str(&format!(
                ",{},{}",
                r.upper_bound.unwrap_or(f64::NAN),
                r.gap.unwrap_or(f64::NAN)
            ));
        }
        if preset.include_gap_bound {
            out.push_str(&format!(",{}", r.gap_bound.unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}

pub fn run_preset_rows(preset: &ExperimentPreset) -> Result<Vec<PresetRow>> {
    let mut rows = Vec::new();
    for &point in &preset.grid {
        let (n, m) = match preset.sweep {
            SweepVar::Capacity => (preset.spec.n, (point.round() as usize).max(1)),
            SweepVar::QueueSize => ((point.round() as usize).max(1), preset.spec.m),
            SweepVar::CapacityRatio => {
                let n = preset.spec.n;
                (n, ((point * n as f64).round() as usize).clamp(1, n))
            }
        };
        let mut spec = ProblemSpec::new(
            n,
            m,
            preset.spec.beta,
            ArrivalDistribution::new(preset.spec.arrivals.support().to_vec())?,
            preset.spec.penalty.clone(),
            preset.spec.costs.clone(),
        )?;
        if let Some(calibration) = preset.calibrate_q00 {
            spec = calibrate_arrivals(&spec, calibration.target.resolve(m), calibration.kind)?;
        }

        let table = if preset.policies.iter().any(|k| k.needs_index()) {
            Some(Arc::new(build_index_table(&spec, BISECTION_TOL)?))
        } else {
            None
        };
        let policies: Vec<Policy> = preset
            .policies
            .iter()
            .map(|&kind| Policy::new(kind, &spec, table.clone(), preset.seed))
            .collect::<Result<_>>()?;

        let modes: Vec<(ArrivalMode, &'static str, Option<f64>)> = match preset.arrival {
            PresetArrival::Independent => vec![(ArrivalMode::Independent, "independent", None)],
            PresetArrival::PoissonUniform { mean } => {
                let mu = mean.resolve(m);
                vec![(ArrivalMode::PoissonUniform { mean: mu }, "poisson", Some(mu))]
            }
            PresetArrival::CompareModes { mean } => {
                let mu = mean.resolve(m);
                vec![
                    (ArrivalMode::Independent, "independent", None),
                    (ArrivalMode::PoissonUniform { mean: mu }, "poisson", Some(mu)),
                ]
            }
        };

        let upper_bound = if preset.include_upper_bound {
            Some(lagrangian_upper_bound(
                &spec,
                &SystemState::empty(spec.n, 0),
                &default_nu_grid(&spec, 200),
            ))
        } else {
            None
        };
        let bound = if preset.include_gap_bound {
            let mode = modes[0].0;
            let stats = arrival_window_distribution_under(
                &spec,
                mode,
                WindowMethod::MonteCarlo,
                20_000,
                preset.seed ^ 0x5eed,
            )?;
            Some(gap_bound(&spec, &stats))
        } else {
            None
        };

        for (mode, mode_label, mu) in modes {
            let mut cfg = SimConfig::new(&spec, preset.replications, preset.seed).with_mode(mode);
            if let Some(h) = preset.horizon {
                cfg = cfg.with_horizon(h);
            }
            let paired = sim::paired_compare(&spec, &policies, &cfg)?;
            for report in &paired.reports {
                let mean_arrivals = report
                    .replications
                    .iter()
                    .map(|r| r.arrived as f64)
                    .sum::<f64>()
                    / report.replications.len() as f64;
                rows.push(PresetRow {
                    sweep: point,
                    policy: report.policy.clone(),
                    mode: mode_label,
                    mu,
                    mean_reward: report.mean_reward,
                    stderr: report.stderr_reward,
                    completion_ratio: report.completion_ratio,
                    mean_arrivals,
                    truncation_error: report.truncation_error,
                    upper_bound,
                    gap: upper_bound.map(|ub| ub - report.mean_reward),
                    gap_bound: bound,
                });
            }
        }
    }
    Ok(rows)
}
