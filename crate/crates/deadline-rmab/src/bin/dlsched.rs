//! Thin CLI over the library: each subcommand wires files to one library
//! entry point and writes CSV. Identical inputs and seed give byte-identical
//! outputs.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use deadline_rmab::bounds::{
    arrival_window_distribution_under, gap_bound, poisson_tail_bound, WindowMethod,
};
use deadline_rmab::config;
use deadline_rmab::data::{fit_cost_chain, PriceTrace, Quantizer};
use deadline_rmab::exact::solve_joint;
use deadline_rmab::model::{ArrivalMode, JobState, ProblemSpec, SystemState};
use deadline_rmab::policy::{Policy, PolicyKind};
use deadline_rmab::preset::{built_in, built_in_names, run_preset, ExperimentPreset};
use deadline_rmab::sim::{paired_compare, SimConfig};
use deadline_rmab::whittle::{build_index_table, IndexTable, BISECTION_TOL};
use deadline_rmab::{Error, Result};

#[derive(Parser)]
#[command(name = "dlsched", version, about = "Deadline scheduling as a restless bandit")]
struct Cli {
    /// Problem configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for all randomized work
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (0 = one per core)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a cost Markov chain from a price trace CSV (`timestamp,price`)
    FitCosts {
        /// Input trace
        #[arg(long)]
        trace: PathBuf,
        /// Number of price states
        #[arg(long, default_value_t = 5)]
        n_states: usize,
        /// `equal-width` or `equal-frequency`
        #[arg(long, default_value = "equal-frequency")]
        quantizer: String,
    },
    /// Compute the Whittle index table for the configured instance
    BuildIndex {
        /// Bisection tolerance
        #[arg(long, default_value_t = BISECTION_TOL)]
        tol: f64,
        /// Binary cache path; reused when it matches the instance
        #[arg(long)]
        index_cache: Option<PathBuf>,
    },
    /// Simulate one or more policies (comma-separated) on shared sample paths
    Simulate {
        /// e.g. `whittle` or `whittle,whittle-lllp,edf`
        #[arg(long, default_value = "whittle")]
        policy: String,
        #[arg(long, default_value_t = 100)]
        replications: usize,
        /// Slots per replication (0 = derive from the discount factor)
        #[arg(long, default_value_t = 0)]
        horizon: usize,
        /// `independent` or `poisson`
        #[arg(long, default_value = "independent")]
        arrival_mode: String,
        /// Mean jobs per window (poisson mode)
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long)]
        index_cache: Option<PathBuf>,
    },
    /// Solve a small instance exactly; dump values and greedy actions
    Exact {
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Joint job state, e.g. `1:1|2:2|2:2` (repeatable); all states if omitted
        #[arg(long = "state")]
        states: Vec<String>,
        #[arg(long, default_value_t = 0)]
        cost_index: usize,
    },
    /// Poisson tail bounds and the window gap bound
    Bounds {
        /// Poisson window means (repeatable)
        #[arg(long = "mu", required = true)]
        mus: Vec<f64>,
        /// Capacities (repeatable)
        #[arg(long = "m", required = true)]
        ms: Vec<u32>,
        /// Monte-Carlo windows for the admission statistics
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Run an experiment preset (built-in name or TOML file)
    Preset {
        /// Built-in preset name
        #[arg(long, conflicts_with = "file")]
        name: Option<String>,
        /// Preset TOML file
        #[arg(long)]
        file: Option<PathBuf>,
        /// List built-in presets
        #[arg(long)]
        list: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn load_config(cli: &Cli) -> Result<ProblemSpec> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Parse("this subcommand needs --config <file>".into()))?;
    config::load(path)
}

fn load_or_build_table(
    spec: &ProblemSpec,
    tol: f64,
    cache: Option<&PathBuf>,
) -> Result<IndexTable> {
    if let Some(path) = cache {
        if path.exists() {
            let table = IndexTable::read_cache(path)?;
            if table.spec_hash == spec.spec_hash() {
                return Ok(table);
            }
            eprintln!("note: cache does not match this instance, rebuilding");
        }
    }
    let table = build_index_table(spec, tol)?;
    if let Some(path) = cache {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        table.write_cache(path)?;
    }
    Ok(table)
}

fn parse_joint_state(raw: &str, n: usize, cost_index: usize) -> Result<SystemState> {
    let jobs: Result<Vec<JobState>> = raw
        .split('|')
        .map(|pair| {
            let (t, b) = pair
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("bad job state `{pair}`, expected T:B")))?;
            let t: u32 = t.trim().parse().map_err(|_| Error::Parse(format!("bad T in `{pair}`")))?;
            let b: u32 = b.trim().parse().map_err(|_| Error::Parse(format!("bad B in `{pair}`")))?;
            JobState::new(t, b)
        })
        .collect();
    let jobs = jobs?;
    if jobs.len() != n {
        return Err(Error::Parse(format!("state has {} positions, instance has {n}", jobs.len())));
    }
    Ok(SystemState::new(cost_index, jobs))
}

fn format_joint_state(state: &SystemState) -> String {
    state
        .jobs
        .iter()
        .map(|j| format!("{}:{}", j.lead_time, j.remaining_work))
        .collect::<Vec<_>>()
        .join("|")
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        // ignore failure when a pool already exists (e.g. repeated calls in tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    std::fs::create_dir_all(&cli.out)?;

    match &cli.command {
        Command::FitCosts { trace, n_states, quantizer } => {
            let trace = PriceTrace::load_csv(trace)?;
            let fit = fit_cost_chain(&trace, *n_states, Quantizer::parse(quantizer)?)?;
            if fit.degenerate {
                eprintln!(
                    "warning: trace collapsed to {} state(s)",
                    fit.chain.n_states()
                );
            }
            for row in &fit.smoothed_rows {
                eprintln!("warning: state {row} had no outgoing transitions; row smoothed to uniform");
            }
            let mut text = String::from("[cost_chain]\nstates = [");
            text.push_str(
                &fit.chain.states().iter().map(f64::to_string).collect::<Vec<_>>().join(", "),
            );
            text.push_str("]\ntransition = [\n");
            for j in 0..fit.chain.n_states() {
                text.push_str("    [");
                text.push_str(
                    &fit.chain.row(j).iter().map(f64::to_string).collect::<Vec<_>>().join(", "),
                );
                text.push_str("],\n");
            }
            text.push_str("]\n");
            let path = cli.out.join("cost_chain.toml");
            std::fs::write(&path, text)?;
            println!("{}", path.display());
        }

        Command::BuildIndex { tol, index_cache } => {
            let spec = load_config(&cli)?;
            let table = load_or_build_table(&spec, *tol, index_cache.as_ref())?;
            let path = cli.out.join("index.csv");
            std::fs::write(&path, table.to_csv())?;
            println!("{}", path.display());
        }

        Command::Simulate { policy, replications, horizon, arrival_mode, mu, index_cache } => {
            let spec = load_config(&cli)?;
            let kinds: Vec<PolicyKind> = policy
                .split(',')
                .map(|s| PolicyKind::parse(s.trim()))
                .collect::<Result<_>>()?;
            let table = if kinds.iter().any(|k| k.needs_index()) {
                Some(Arc::new(load_or_build_table(&spec, BISECTION_TOL, index_cache.as_ref())?))
            } else {
                None
            };
            let seed = cli.seed.unwrap_or(0);
            let policies: Vec<Policy> = kinds
                .iter()
                .map(|&k| Policy::new(k, &spec, table.clone(), seed))
                .collect::<Result<_>>()?;
            let mode = match arrival_mode.as_str() {
                "independent" => ArrivalMode::Independent,
                "poisson" | "poisson-uniform" => {
                    if *mu <= 0.0 {
                        return Err(Error::Parse("poisson mode needs --mu > 0".into()));
                    }
                    ArrivalMode::PoissonUniform { mean: *mu }
                }
                other => return Err(Error::Parse(format!("unknown arrival mode `{other}`"))),
            };
            let mut cfg = SimConfig::new(&spec, *replications, seed).with_mode(mode);
            if *horizon > 0 {
                cfg = cfg.with_horizon(*horizon);
            }
            let paired = paired_compare(&spec, &policies, &cfg)?;

            let mut runs = String::from(
                "policy,replication,seed,discounted_reward,completion_ratio,truncation_error\n",
            );
            for report in &paired.reports {
                for r in &report.replications {
                    runs.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        report.policy,
                        r.replication,
                        cfg.seed,
                        r.discounted_reward,
                        r.completion_ratio(),
                        report.truncation_error
                    ));
                }
            }
            let runs_path = cli.out.join("simulate_runs.csv");
            std::fs::write(&runs_path, runs)?;

            let mut summary = String::from(
                "policy,replications,mean_reward,stderr,completion_ratio,vacuous_completion,truncation_error,mean_diff_vs_first,stderr_diff\n",
            );
            for (report, diff) in paired.reports.iter().zip(&paired.diffs) {
                summary.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    report.policy,
                    report.replications.len(),
                    report.mean_reward,
                    report.stderr_reward,
                    report.completion_ratio,
                    report.vacuous_completion,
                    report.truncation_error,
                    diff.mean_diff,
                    diff.stderr_diff
                ));
            }
            let summary_path = cli.out.join("simulate_summary.csv");
            std::fs::write(&summary_path, summary)?;
            println!("{}", runs_path.display());
            println!("{}", summary_path.display());
        }

        Command::Exact { tol, states, cost_index } => {
            let spec = load_config(&cli)?;
            let table = solve_joint(&spec, *tol)?;
            let targets: Vec<SystemState> = if states.is_empty() {
                if table.n_states() > 50_000 {
                    return Err(Error::Parse(
                        "instance too large to dump every state; pass --state".into(),
                    ));
                }
                table.enumerate_states()
            } else {
                states
                    .iter()
                    .map(|s| parse_joint_state(s, spec.n, *cost_index))
                    .collect::<Result<_>>()?
            };
            let mut out = String::from("state,cost_index,value,greedy_action\n");
            for state in &targets {
                let action = table.greedy_action(state);
                let bits: String =
                    action.active.iter().map(|&a| if a { '1' } else { '0' }).collect();
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    format_joint_state(state),
                    state.cost_index,
                    table.value(state),
                    bits
                ));
            }
            let path = cli.out.join("exact.csv");
            std::fs::write(&path, out)?;
            println!("{}", path.display());
        }

        Command::Bounds { mus, ms, samples } => {
            // gap bound needs an instance; poisson bounds do not
            let spec = cli.config.as_deref().map(config::load).transpose()?;
            let stats = match &spec {
                Some(s) => Some(arrival_window_distribution_under(
                    s,
                    ArrivalMode::Independent,
                    WindowMethod::MonteCarlo,
                    *samples,
                    cli.seed.unwrap_or(0),
                )?),
                None => None,
            };
            let mut out = String::from("mu,M,exact_tail,stirling_bound,gap_bound\n");
            for &mu in mus {
                for &m in ms {
                    if (m as f64) <= mu - 1.0 {
                        continue; // outside the bound's domain
                    }
                    let tail = poisson_tail_bound(mu, m)?;
                    let gap = match (&spec, &stats) {
                        (Some(s), Some(stats)) => {
                            let with_m = ProblemSpec { m: m as usize, ..s.clone() };
                            gap_bound(&with_m, stats).to_string()
                        }
                        _ => String::new(),
                    };
                    out.push_str(&format!(
                        "{mu},{m},{},{},{gap}\n",
                        tail.exact_tail, tail.stirling_bound
                    ));
                }
            }
            let path = cli.out.join("bounds.csv");
            std::fs::write(&path, out)?;
            println!("{}", path.display());
        }

        Command::Preset { name, file, list } => {
            if *list {
                for name in built_in_names() {
                    println!("{name}");
                }
                return Ok(());
            }
            let mut preset: ExperimentPreset = match (name, file) {
                (Some(name), None) => built_in(name)?,
                (None, Some(path)) => ExperimentPreset::load(path)?,
                _ => return Err(Error::Parse("pass --name <builtin> or --file <toml>".into())),
            };
            if let Some(seed) = cli.seed {
                preset.seed = seed;
            }
            let outcome = run_preset(&preset, &cli.out)?;
            println!("{}", outcome.csv_path.display());
        }
    }
    Ok(())
}
