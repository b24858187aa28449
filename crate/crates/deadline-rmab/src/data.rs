//! Price-trace ingestion: quantize a real-valued price series into a finite
//! cost Markov chain by binning the prices and counting transitions.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::CostChain;

/// An ordered price series. Timestamps are integer slot indices or epoch
/// seconds parsed from ISO-8601 stamps; they only have to be strictly
/// increasing.
#[derive(Debug, Clone)]
pub struct PriceTrace {
    pub samples: Vec<(i64, f64)>,
}

impl PriceTrace {
    pub fn new(samples: Vec<(i64, f64)>) -> Result<Self> {
        if samples.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Parse("timestamps must be strictly increasing".into()));
        }
        if samples.iter().any(|&(_, p)| !p.is_finite()) {
            return Err(Error::Parse("trace contains non-finite prices".into()));
        }
        Ok(Self { samples })
    }

    /// Parse a CSV with header `timestamp,price`.
    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut samples = Vec::new();
        for record in csv.records() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let ts_raw = record
                .get(0)
                .ok_or_else(|| Error::Parse("missing timestamp column".into()))?;
            let price_raw = record
                .get(1)
                .ok_or_else(|| Error::Parse("missing price column".into()))?;
            let ts = parse_timestamp(ts_raw.trim())?;
            let price: f64 = price_raw
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad price `{price_raw}`")))?;
            samples.push((ts, price));
        }
        Self::new(samples)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn parse_timestamp(raw: &str) -> Result<i64> {
    if let Ok(slot) = raw.parse::<i64>() {
        return Ok(slot);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(naive.and_utc().timestamp());
        }
    }
    Err(Error::Parse(format!("cannot parse timestamp `{raw}`")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantizer {
    EqualWidth,
    EqualFrequency,
}

impl Quantizer {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "equal-width" | "equal_width" => Ok(Quantizer::EqualWidth),
            "equal-frequency" | "equal_frequency" => Ok(Quantizer::EqualFrequency),
            other => Err(Error::Parse(format!("unknown quantizer `{other}`"))),
        }
    }
}

/// A fitted chain plus fitting diagnostics.
#[derive(Debug, Clone)]
pub struct FittedChain {
    pub chain: CostChain,
    /// The trace collapsed to fewer states than requested (e.g. constant
    /// price); the caller should surface a warning.
    pub degenerate: bool,
    /// Rows that saw no transitions and received uniform smoothing.
    pub smoothed_rows: Vec<usize>,
}

/// Quantize `trace` into `n_states` cost levels and estimate the transition
/// matrix from empirical transition frequencies. State values are per-bin
/// means. Rows without observations are smoothed to uniform.
pub fn fit_cost_chain(trace: &PriceTrace, n_states: usize, quantizer: Quantizer) -> Result<FittedChain> {
    if n_states < 2 {
        return Err(Error::InvalidSpec("need at least 2 states".into()));
    }
    let transitions = trace.len().saturating_sub(1);
    if transitions < 10 * n_states {
        return Err(Error::InsufficientData { needed: 10 * n_states + 1, got: trace.len() });
    }
    let prices: Vec<f64> = trace.samples.iter().map(|&(_, p)| p).collect();

    // bin label per sample
    let labels: Vec<usize> = match quantizer {
        Quantizer::EqualWidth => {
            let lo = prices.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = prices.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi <= lo {
                vec![0; prices.len()]
            } else {
                let width = (hi - lo) / n_states as f64;
                prices
                    .iter()
                    .map(|&p| (((p - lo) / width) as usize).min(n_states - 1))
                    .collect()
            }
        }
        Quantizer::EqualFrequency => {
            // rank-based assignment: bin sizes differ by at most one
            let mut order: Vec<usize> = (0..prices.len()).collect();
            order.sort_by(|&a, &b| {
                prices[a].partial_cmp(&prices[b]).unwrap().then(a.cmp(&b))
            });
            let len = prices.len();
            let base = len / n_states;
            let extra = len % n_states;
            let mut labels = vec![0usize; len];
            let mut cursor = 0usize;
            for bin in 0..n_states {
                let size = base + usize::from(bin < extra);
                for _ in 0..size {
                    labels[order[cursor]] = bin;
                    cursor += 1;
                }
            }
            labels
        }
    };

    // per-bin means, dropping empty bins
    let mut sums = vec![0.0; n_states];
    let mut counts = vec![0usize; n_states];
    for (&label, &p) in labels.iter().zip(&prices) {
        sums[label] += p;
        counts[label] += 1;
    }
    let mut means: Vec<(usize, f64)> = (0..n_states)
        .filter(|&b| counts[b] > 0)
        .map(|b| (b, sums[b] / counts[b] as f64))
        .collect();
    means.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    // merge bins whose means collide so the state list is strictly increasing
    let mut groups: Vec<(Vec<usize>, f64)> = Vec::new();
    for (bin, mean) in means {
        match groups.last_mut() {
            Some((bins, m)) if (*m - mean).abs() < 1e-12 => bins.push(bin),
            _ => groups.push((vec![bin], mean)),
        }
    }
    let k = groups.len();
    let degenerate = k < n_states;
    if k == 1 {
        return Ok(FittedChain {
            chain: CostChain::new(vec![groups[0].1], vec![vec![1.0]])?,
            degenerate: true,
            smoothed_rows: vec![],
        });
    }
    let mut relabel = vec![usize::MAX; n_states];
    for (state, (bins, _)) in groups.iter().enumerate() {
        for &b in bins {
            relabel[b] = state;
        }
    }

    // transition counts
    let mut counts = vec![vec![0usize; k]; k];
    for w in labels.windows(2) {
        counts[relabel[w[0]]][relabel[w[1]]] += 1;
    }
    let mut transition = vec![vec![0.0; k]; k];
    let mut smoothed_rows = Vec::new();
    for (row, obs) in counts.iter().enumerate() {
        let total: usize = obs.iter().sum();
        if total == 0 {
            // add-one smoothing: uniform row
            smoothed_rows.push(row);
            for entry in transition[row].iter_mut() {
                *entry = 1.0 / k as f64;
            }
        } else {
            for (col, &c) in obs.iter().enumerate() {
                transition[row][col] = c as f64 / total as f64;
            }
        }
    }
    // renormalize against accumulated rounding
    for row in transition.iter_mut() {
        let sum: f64 = row.iter().sum();
        for entry in row.iter_mut() {
            *entry /= sum;
        }
    }

    Ok(FittedChain {
        chain: CostChain::new(groups.into_iter().map(|(_, m)| m).collect(), transition)?,
        degenerate,
        smoothed_rows,
    })
}
