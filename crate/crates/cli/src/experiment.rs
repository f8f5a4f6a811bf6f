//! Experiment files, the trial runner and result rows.
//!
//! A spec file holds one `[[experiment]]` table per experiment:
//!
//! ```toml
//! [[experiment]]
//! id = "rate-bernoulli"
//! source = "bernoulli-0.7"
//! mode = "capped"        # or "full"
//! order = 8              # capped mode only
//! alpha = "1"            # decimal or "p/q"; defaults to 1
//! n = 100000
//! seeds = [1, 2, 3]
//! checkpoints = [1000, 100000]   # optional
//! metrics = ["rate", "error"]
//! tolerance = 0.02       # optional; grades rows whose reference is not an estimate
//! ```

use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ppmu::base::tv_distance;
use ppmu::ppm::{Mode, PpmConfig, PpmModel, DEFAULT_FULL_LIMIT};
use ppmu::predict::argmax_predict;
use ppmu::sources::{Source, Zoo, ZooSource};
use ppmu::{Alphabet, Rational, Seed, SeqModel};

use crate::error::{CliError, Result};
use crate::format::sig9;

/// Default checkpoints, clipped to `n` (and `n` itself appended).
pub const DEFAULT_CHECKPOINTS: [usize; 4] = [100, 1000, 10_000, 100_000];

/// Sample length and seed of the Monte Carlo reference for sources without
/// closed-form rates.
pub const ESTIMATE_LENGTH: usize = 100_000;
pub const ESTIMATE_SEED: Seed = Seed(0);

const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rate,
    Error,
    CesaroTv,
    Drift,
    Bounds,
}

impl Metric {
    fn parse(s: &str) -> Option<Metric> {
        Some(match s {
            "rate" => Metric::Rate,
            "error" => Metric::Error,
            "cesaro_tv" => Metric::CesaroTv,
            "drift" => Metric::Drift,
            "bounds" => Metric::Bounds,
            _ => return None,
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Rate => "rate",
            Metric::Error => "error",
            Metric::CesaroTv => "cesaro_tv",
            Metric::Drift => "drift",
            Metric::Bounds => "bounds",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Closed form from the sources module.
    ClosedForm,
    /// Monte Carlo interval mean; not a ground truth.
    Estimate,
    /// The value the metric takes for an exact model (0).
    Exact,
    /// Count of bound violations; 0 is required.
    Bound,
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceKind::ClosedForm => "closed_form",
            ReferenceKind::Estimate => "estimate",
            ReferenceKind::Exact => "exact",
            ReferenceKind::Bound => "bound",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: String,
    pub source: String,
    pub config: PpmConfig,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub checkpoints: Vec<usize>,
    pub metrics: Vec<Metric>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    pub checkpoint: usize,
    pub metric: Metric,
    pub value: f64,
    pub reference: f64,
    pub reference_kind: ReferenceKind,
    pub pass: Option<bool>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Num {
    Int(u64),
    Float(f64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    id: String,
    source: String,
    #[serde(default)]
    mode: Option<String>,
    #[serde(default)]
    order: Option<usize>,
    #[serde(default)]
    alpha: Option<Num>,
    n: usize,
    seeds: Vec<u64>,
    #[serde(default)]
    checkpoints: Option<Vec<usize>>,
    metrics: Vec<String>,
    #[serde(default)]
    tolerance: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(default)]
    experiment: Vec<RawExperiment>,
}

fn parse_alpha(v: &Num) -> std::result::Result<Rational, String> {
    let text = match v {
        Num::Int(i) => i.to_string(),
        Num::Float(f) => f.to_string(),
        Num::Text(s) => s.clone(),
    };
    text.parse::<Rational>().map_err(|e| e.to_string())
}

/// Parses and validates a spec file against `zoo`, reporting every
/// violation at once.
pub fn parse_spec(text: &str, zoo: &Zoo) -> Result<Vec<ExperimentSpec>> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| CliError::Spec(e.message().trim().to_string()))?;
    let mut problems = Vec::new();
    let mut specs = Vec::new();
    let mut ids = HashSet::new();
    if raw.experiment.is_empty() {
        problems.push("no [[experiment]] tables".to_string());
    }
    for e in raw.experiment {
        let before = problems.len();
        let mut bad = |msg: String| problems.push(format!("experiment {:?}: {msg}", e.id));
        if !ids.insert(e.id.clone()) {
            bad("duplicate id".into());
        }
        let source = zoo.get(&e.source).ok();
        if source.is_none() {
            bad(format!("unknown source {:?}", e.source));
        }
        if e.n == 0 {
            bad("n must be positive".into());
        }
        let alpha = match e.alpha.as_ref().map(parse_alpha).unwrap_or(Ok(Rational::ONE)) {
            Ok(a) if a.num > 0 => Some(a),
            Ok(_) => {
                bad("alpha must be positive".into());
                None
            }
            Err(m) => {
                bad(format!("alpha: {m}"));
                None
            }
        };
        let mode = match (e.mode.as_deref().unwrap_or("capped"), e.order) {
            ("full", None) => Some(Mode::Full),
            ("full", Some(_)) => {
                bad("order is only meaningful in capped mode".into());
                None
            }
            ("capped", Some(k)) => Some(Mode::Capped(k)),
            ("capped", None) => {
                bad("capped mode needs an order".into());
                None
            }
            (m, _) => {
                bad(format!("unknown mode {m:?} (expected full or capped)"));
                None
            }
        };
        if mode == Some(Mode::Full) && e.n > DEFAULT_FULL_LIMIT {
            bad(format!("full mode is limited to n <= {DEFAULT_FULL_LIMIT}"));
        }
        if e.seeds.is_empty() {
            bad("seeds must not be empty".into());
        }
        if e.seeds.iter().collect::<HashSet<_>>().len() != e.seeds.len() {
            bad("seeds must be distinct".into());
        }
        let checkpoints = e.checkpoints.clone().unwrap_or_else(|| {
            let mut c: Vec<usize> = DEFAULT_CHECKPOINTS.iter().copied().filter(|&c| c < e.n).collect();
            c.push(e.n);
            c
        });
        if checkpoints.is_empty() {
            bad("checkpoints must not be empty".into());
        }
        if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            bad("checkpoints must be strictly increasing".into());
        }
        if checkpoints.iter().any(|&c| c == 0 || c > e.n) {
            bad(format!("checkpoints must lie in 1..={}", e.n));
        }
        let mut metrics = Vec::new();
        for m in &e.metrics {
            match Metric::parse(m) {
                Some(m) if metrics.contains(&m) => bad(format!("metric {m} listed twice")),
                Some(m) => metrics.push(m),
                None => bad(format!("unknown metric {m:?} (rate, error, cesaro_tv, drift, bounds)")),
            }
        }
        if e.metrics.is_empty() {
            bad("metrics must not be empty".into());
        }
        if metrics.contains(&Metric::Bounds) && alpha.is_some_and(|a| a != Rational::ONE) {
            bad("the bounds metric needs alpha = 1".into());
        }
        if e.tolerance.is_some_and(|t| t.is_nan() || t < 0.0) {
            bad("tolerance must be nonnegative".into());
        }
        let mut config = None;
        if let (Some(src), Some(mode), Some(alpha)) = (source, mode, alpha) {
            let cfg = match mode {
                Mode::Full => PpmConfig::full(src.alphabet()),
                Mode::Capped(k) => PpmConfig::capped(src.alphabet(), k),
            }
            .with_smoothing(alpha);
            match cfg.validate() {
                Ok(()) => config = Some(cfg),
                Err(err) => bad(err.to_string()),
            }
        }
        if problems.len() == before {
            metrics.sort();
            specs.push(ExperimentSpec {
                id: e.id,
                source: e.source,
                config: config.expect("validated"),
                n: e.n,
                seeds: e.seeds,
                checkpoints,
                metrics,
                tolerance: e.tolerance,
            });
        }
    }
    if problems.is_empty() {
        Ok(specs)
    } else {
        Err(CliError::Spec(problems.join("\n")))
    }
}

struct References {
    rate: (f64, ReferenceKind),
    error: (f64, ReferenceKind),
}

fn references(src: &ZooSource) -> References {
    match src {
        ZooSource::Markov(m) => References {
            rate: (m.entropy_rate(), ReferenceKind::ClosedForm),
            error: (m.unpredictability_rate(), ReferenceKind::ClosedForm),
        },
        ZooSource::Hmm(h) => {
            let (hi, ui) = h.rate_intervals(ESTIMATE_LENGTH, ESTIMATE_SEED, 20, 3.0);
            References { rate: (hi.mean, ReferenceKind::Estimate), error: (ui.mean, ReferenceKind::Estimate) }
        }
    }
}

fn run_trial(spec: &ExperimentSpec, src: &ZooSource, refs: &References, seed: u64) -> Result<Vec<ResultRow>> {
    let x = src.sample(spec.n, Seed(seed));
    let alphabet: Alphabet = src.alphabet();
    let d = alphabet.size() as f64;
    let full = spec.config.mode == Mode::Full;
    let mut model = PpmModel::new(spec.config.clone())?;
    let needs_truth = spec.metrics.iter().any(|m| matches!(m, Metric::CesaroTv | Metric::Drift));
    let mut truth: Option<Box<dyn SeqModel + '_>> = needs_truth.then(|| src.model());

    let (mut errors, mut tv_sum, mut drift_sum, mut violations) = (0u64, 0.0, 0.0, 0u64);
    let mut rows = Vec::new();
    let mut cp = spec.checkpoints.iter().peekable();
    for (i, &s) in x.as_slice().iter().enumerate() {
        let c = model.conditional();
        if argmax_predict(&c) != s {
            errors += 1;
        }
        let z = -c.prob(s).log2();
        if let Some(t) = truth.as_mut() {
            let p = t.conditional();
            tv_sum += tv_distance(&c, &p)?;
            let expected: f64 =
                p.probs().iter().zip(c.probs()).filter(|(&pa, _)| pa > 0.0).map(|(&pa, &ra)| -pa * ra.log2()).sum();
            drift_sum += z - expected;
            t.observe(s)?;
        }
        if z > 3.0 * (i as f64 + d).log2() + BOUND_SLACK {
            violations += 1;
        }
        model.ingest(s)?;
        let n = i + 1;
        if full && model.total_neg_log().bits() > 2.0 * ((n + 1) as f64).log2() + n as f64 * alphabet.log2_size() + BOUND_SLACK {
            violations += 1;
        }
        while cp.peek().is_some_and(|&&c| c == n) {
            cp.next();
            for &metric in &spec.metrics {
                let (value, (reference, kind)) = match metric {
                    Metric::Rate => (model.total_neg_log().rate(n), refs.rate),
                    Metric::Error => (errors as f64 / n as f64, refs.error),
                    Metric::CesaroTv => (tv_sum / n as f64, (0.0, ReferenceKind::Exact)),
                    Metric::Drift => (drift_sum / n as f64, (0.0, ReferenceKind::Exact)),
                    Metric::Bounds => (violations as f64, (0.0, ReferenceKind::Bound)),
                };
                let pass = match metric {
                    Metric::Bounds => Some(violations == 0),
                    _ if kind == ReferenceKind::Estimate => None,
                    _ => spec.tolerance.map(|t| (value - reference).abs() <= t),
                };
                rows.push(ResultRow {
                    experiment: spec.id.clone(),
                    seed,
                    checkpoint: n,
                    metric,
                    value,
                    reference,
                    reference_kind: kind,
                    pass,
                });
            }
        }
    }
    Ok(rows)
}

/// Runs every `(experiment, seed)` trial in parallel and returns the rows
/// sorted by experiment order, seed, checkpoint and metric.
pub fn run_experiments(specs: &[ExperimentSpec], zoo: &Zoo) -> Result<Vec<ResultRow>> {
    let refs: Vec<References> =
        specs.iter().map(|s| zoo.get(&s.source).map(references)).collect::<ppmu::Result<_>>()?;
    let trials: Vec<(usize, u64)> =
        specs.iter().enumerate().flat_map(|(i, s)| s.seeds.iter().map(move |&seed| (i, seed))).collect();
    let results: Vec<Result<Vec<ResultRow>>> = trials
        .par_iter()
        .map(|&(i, seed)| {
            let spec = &specs[i];
            run_trial(spec, zoo.get(&spec.source)?, &refs[i], seed)
        })
        .collect();
    let mut rows = Vec::new();
    for (&(i, _), r) in trials.iter().zip(results) {
        rows.extend(r?.into_iter().map(|row| (i, row)));
    }
    rows.sort_by(|(ia, a), (ib, b)| {
        (ia, a.seed, a.checkpoint, a.metric).cmp(&(ib, b.seed, b.checkpoint, b.metric))
    });
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

#[derive(Serialize)]
struct CsvRow<'a> {
    experiment: &'a str,
    seed: u64,
    checkpoint: usize,
    metric: String,
    value: String,
    reference: String,
    reference_kind: String,
    pass: &'static str,
}

fn pass_str(p: Option<bool>) -> &'static str {
    match p {
        Some(true) => "true",
        Some(false) => "false",
        None => "",
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(CsvRow {
            experiment: &r.experiment,
            seed: r.seed,
            checkpoint: r.checkpoint,
            metric: r.metric.to_string(),
            value: sig9(r.value),
            reference: sig9(r.reference),
            reference_kind: r.reference_kind.to_string(),
            pass: pass_str(r.pass),
        })
        .map_err(|e| CliError::Format(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(["experiment", "seed", "checkpoint", "metric", "value", "reference", "reference_kind", "pass"])
            .map_err(|e| CliError::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_to_json(rows: &[ResultRow]) -> String {
    let values: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "experiment": r.experiment,
                "seed": r.seed,
                "checkpoint": r.checkpoint,
                "metric": r.metric,
                "value": crate::format::round9(r.value),
                "reference": crate::format::round9(r.reference),
                "reference_kind": r.reference_kind,
                "pass": r.pass,
            })
        })
        .collect();
    serde_json::to_string_pretty(&values).expect("rows serialize") + "\n"
}
