//! Seeded batch experiments.
//!
//! Four experiments share one report shape ([`TrialBatchReport`]):
//!
//! * `success-rate`: many independent runs of the sampler on one instance,
//!   each audited against the exact optimum.
//! * `flip-rate`: how often a costlier point `b` scores no worse than a
//!   cheaper point `a` on a fresh evaluator sample, next to the
//!   `exp(-eps^2 k / 64)` bound.
//! * `key-lemma`: exhaustive check, on each instance, that the `ell`-th
//!   closest point to an optimum costs at most
//!   [`lemma_ratio_bound`]`(ell, n)` times the optimum.
//! * `ratio-sweep`: observed ratio distributions over an (epsilon, family)
//!   grid.
//!
//! Trial `i` of a batch draws from the stream keyed by `(master seed, i)`, so
//! rows do not depend on execution order or on `parallelism`.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::generators::{generate, Family, GenSpec};
use crate::median::{
    approx_median_with, lemma_ratio_bound, order_by_distance_from, sample_points, ApproxParams, Audit, CostTable,
    MedianReport, Mode,
};
use crate::metric::{DistanceOracle, MetricSpace, PointId, Space};
use crate::rng::{derive_seed, stream};

/// Environment variable overriding every size cap.
pub const MAX_N_ENV: &str = "ULTRAMEDIAN_MAX_N";
pub const DEFAULT_AUDIT_CAP: usize = 10_000;
pub const DEFAULT_KEY_LEMMA_CAP: usize = 4096;
/// Relative tolerance of the key-lemma comparison.
pub const KEY_LEMMA_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    pub audit: usize,
    pub key_lemma: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            audit: DEFAULT_AUDIT_CAP,
            key_lemma: DEFAULT_KEY_LEMMA_CAP,
        }
    }
}

impl Caps {
    /// Defaults, or `ULTRAMEDIAN_MAX_N` for every cap when it is set.
    pub fn from_env() -> Result<Self> {
        match std::env::var(MAX_N_ENV) {
            Ok(v) => {
                let cap: usize = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::domain(format!("{MAX_N_ENV}=`{v}` is not a point count")))?;
                Ok(Caps {
                    audit: cap,
                    key_lemma: cap,
                })
            }
            Err(_) => Ok(Caps::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SuccessRate,
    FlipRate,
    KeyLemma,
    RatioSweep,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::SuccessRate => "success-rate",
            Experiment::FlipRate => "flip-rate",
            Experiment::KeyLemma => "key-lemma",
            Experiment::RatioSweep => "ratio-sweep",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Experiment::SuccessRate,
            Experiment::FlipRate,
            Experiment::KeyLemma,
            Experiment::RatioSweep,
        ]
        .into_iter()
        .find(|e| e.name() == s)
        .ok_or_else(|| Error::domain(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct TrialBatchSpec {
    pub instance: GenSpec,
    /// `params.seed` is the master seed of the batch.
    pub params: ApproxParams,
    /// Trials, or instances for `key-lemma`.
    pub trials: usize,
    pub parallelism: usize,
    pub experiment: Experiment,
    /// Exact-cost audit of every trial (success-rate and ratio-sweep).
    pub audit: bool,
    pub caps: Caps,
}

impl TrialBatchSpec {
    pub fn new(experiment: Experiment, instance: GenSpec, params: ApproxParams, trials: usize) -> Self {
        TrialBatchSpec {
            instance,
            params,
            trials,
            parallelism: 1,
            experiment,
            audit: true,
            caps: Caps::default(),
        }
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism;
        self
    }

    fn check(&self, want: Experiment) -> Result<()> {
        if self.experiment != want {
            return Err(Error::domain(format!(
                "batch spec is for {}, not {want}",
                self.experiment
            )));
        }
        if self.trials == 0 {
            return Err(Error::domain("trials must be at least 1"));
        }
        if self.parallelism == 0 {
            return Err(Error::domain("parallelism must be at least 1"));
        }
        self.params.hk().map(|_| ())
    }

    /// Seed of trial `i`.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(&[self.params.seed, trial as u64])
    }

    fn metadata(&self) -> Vec<(String, Value)> {
        let (h, k) = self.params.hk().unwrap_or((0, 0));
        vec![
            ("experiment".into(), json!(self.experiment.name())),
            ("instance".into(), json!(self.instance.to_string())),
            ("epsilon".into(), json!(self.params.epsilon)),
            ("c_h".into(), json!(self.params.c_h)),
            ("c_k".into(), json!(self.params.c_k)),
            ("h".into(), json!(h)),
            ("k".into(), json!(k)),
            ("master_seed".into(), json!(self.params.seed)),
            ("fallback".into(), json!(self.params.fallback.to_string())),
            ("trials".into(), json!(self.trials)),
            ("audit".into(), json!(self.audit)),
        ]
    }
}

/// One sampler run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub selected: PointId,
    pub sample_cost: f64,
    pub exact_cost: Option<f64>,
    pub opt_cost: Option<f64>,
    pub ratio: Option<f64>,
    pub queries_used: u64,
    pub mode: Mode,
}

impl TrialRow {
    fn new(trial: usize, seed: u64, r: MedianReport) -> Self {
        TrialRow {
            trial,
            seed,
            selected: r.selected,
            sample_cost: r.sample_cost,
            exact_cost: r.exact_cost,
            opt_cost: r.opt_cost,
            ratio: r.ratio,
            queries_used: r.queries_used,
            mode: r.mode,
        }
    }
}

/// One fresh evaluator sample in the flip experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlipRow {
    pub trial: usize,
    pub seed: u64,
    pub sum_a: f64,
    pub sum_b: f64,
    pub flipped: bool,
}

/// Key-lemma outcome on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyLemmaRow {
    pub instance: usize,
    pub spec: String,
    pub n: usize,
    pub opt: PointId,
    pub opt_cost: f64,
    pub violations: usize,
    /// Smallest `(bound - cost(p_ell)) / bound` over `ell`.
    pub min_slack: f64,
    pub min_slack_ell: usize,
    pub max_slack: f64,
}

/// One run within a ratio-sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub family: String,
    pub trial: usize,
    pub seed: u64,
    pub selected: PointId,
    pub ratio: Option<f64>,
    pub queries_used: u64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Rows {
    Trials(Vec<TrialRow>),
    Flips(Vec<FlipRow>),
    Instances(Vec<KeyLemmaRow>),
    Sweep(Vec<SweepRow>),
}

impl Rows {
    pub fn len(&self) -> usize {
        match self {
            Rows::Trials(r) => r.len(),
            Rows::Flips(r) => r.len(),
            Rows::Instances(r) => r.len(),
            Rows::Sweep(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A named pass/fail check of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialBatchReport {
    pub experiment: Experiment,
    #[serde(serialize_with = "ser_pairs")]
    pub metadata: Vec<(String, Value)>,
    pub rows: Rows,
    #[serde(serialize_with = "ser_pairs")]
    pub aggregates: Vec<(String, Value)>,
    pub checks: Vec<Check>,
    /// Excluded from reproducibility comparisons.
    pub wall_time_s: f64,
}

fn ser_pairs<S: serde::Serializer>(pairs: &[(String, Value)], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(pairs.len()))?;
    for (k, v) in pairs {
        map.serialize_entry(k, v)?;
    }
    map.end()
}

/// Prefix of the wall-time footer line in CSV output.
pub const WALL_TIME_LINE: &str = "#agg,wall_time_s,";

impl TrialBatchReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn aggregate(&self, key: &str) -> Option<&Value> {
        self.aggregates.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn aggregate_f64(&self, key: &str) -> Option<f64> {
        self.aggregate(key).and_then(Value::as_f64)
    }

    /// Per-row CSV followed by the `#agg,key,value` footer. The wall time
    /// is the last footer line when `with_wall_time` is set.
    pub fn to_csv(&self, with_wall_time: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        match &self.rows {
            Rows::Trials(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
            Rows::Flips(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
            Rows::Instances(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
            Rows::Sweep(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
        }
        let mut out = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        for (k, v) in &self.aggregates {
            let v = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            writeln!(out, "#agg,{k},{v}")?;
        }
        for c in &self.checks {
            writeln!(out, "#agg,check:{},{}", c.name, if c.passed { "pass" } else { "fail" })?;
        }
        if with_wall_time {
            writeln!(out, "{WALL_TIME_LINE}{}", self.wall_time_s)?;
        }
        String::from_utf8(out).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv(true)?)?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Drops the wall-time footer line from CSV text.
pub fn strip_wall_time(csv: &str) -> String {
    csv.lines()
        .filter(|l| !l.starts_with(WALL_TIME_LINE))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Runs `f(0..trials)` on up to `parallelism` threads; results keep trial order.
fn run_trials<T, F>(parallelism: usize, trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if parallelism <= 1 {
        return (0..trials).map(f).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| (0..trials).into_par_iter().map(&f).collect())
}

/// Nearest-rank percentile of sorted data, `p` in `[0, 100]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn ratio_stats(ratios: &[f64], prefix: &str) -> Vec<(String, Value)> {
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    vec![
        (format!("{prefix}mean_ratio"), json!(mean)),
        (format!("{prefix}p50_ratio"), json!(percentile(&sorted, 50.0))),
        (format!("{prefix}p95_ratio"), json!(percentile(&sorted, 95.0))),
        (format!("{prefix}max_ratio"), json!(percentile(&sorted, 100.0))),
    ]
}

/// Approximation threshold `(1 + eps)(1 + 2 eps)` of a single sampler run.
pub fn lemma_success_threshold(epsilon: f64) -> f64 {
    (1.0 + epsilon) * (1.0 + 2.0 * epsilon)
}

fn audit_table(space: &Space, caps: &Caps) -> Result<CostTable> {
    let n = space.len();
    if n > caps.audit {
        return Err(Error::CapExceeded {
            what: "exact audit; rerun with --no-audit",
            n,
            cap: caps.audit,
        });
    }
    CostTable::compute(space)
}

/// Independent audited sampler runs on one instance.
///
/// `success_fraction` is the share of trials whose ratio is at most
/// `(1 + eps)(1 + 2 eps)`. The batch check asserts it is at least `1 - 2 eps`.
pub fn run_success_rate(spec: &TrialBatchSpec) -> Result<TrialBatchReport> {
    spec.check(Experiment::SuccessRate)?;
    let start = Instant::now();
    let instance = generate(&spec.instance)?;
    let table = if spec.audit {
        Some(audit_table(&instance.space, &spec.caps)?)
    } else {
        None
    };
    let space = &instance.space;
    let rows = run_trials(spec.parallelism, spec.trials, |trial| {
        let seed = spec.trial_seed(trial);
        let oracle = DistanceOracle::new(space);
        let params = spec.params.with_seed(seed);
        let audit = table.as_ref().map_or(Audit::None, Audit::Table);
        Ok(TrialRow::new(trial, seed, approx_median_with(&oracle, &params, audit)?))
    })?;

    let eps = spec.params.epsilon;
    let threshold = lemma_success_threshold(eps);
    let mut aggregates = vec![
        ("n".to_string(), json!(space.len())),
        ("trials".into(), json!(rows.len())),
        (
            "queries_per_trial_max".into(),
            json!(rows.iter().map(|r| r.queries_used).max()),
        ),
        (
            "exact_fallback_trials".into(),
            json!(rows.iter().filter(|r| r.mode == Mode::ExactFallback).count()),
        ),
    ];
    let mut checks = Vec::new();
    if let Some(table) = &table {
        let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
        let frac = |t: f64| ratios.iter().filter(|&&r| r <= t).count() as f64 / ratios.len() as f64;
        let success = frac(threshold);
        aggregates.extend([
            ("opt".to_string(), json!(table.opt)),
            ("opt_cost".into(), json!(table.opt_cost)),
            ("success_threshold".into(), json!(threshold)),
            ("success_fraction".into(), json!(success)),
            ("fraction_within_1_plus_eps".into(), json!(frac(1.0 + eps))),
        ]);
        aggregates.extend(ratio_stats(&ratios, ""));
        let floor = 1.0 - 2.0 * eps;
        checks.push(Check {
            name: "success_fraction_at_least_1_minus_2eps".into(),
            passed: success >= floor,
            detail: format!("success_fraction {success} vs floor {floor}"),
        });
        let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        checks.push(Check {
            name: "ratios_at_least_one".into(),
            passed: min_ratio >= 1.0,
            detail: format!("minimum ratio {min_ratio}"),
        });
    }
    Ok(TrialBatchReport {
        experiment: Experiment::SuccessRate,
        metadata: spec.metadata(),
        rows: Rows::Trials(rows),
        aggregates,
        checks,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// `exp(-eps^2 k / 64)`.
pub fn flip_bound(epsilon: f64, k: u64) -> f64 {
    (-(epsilon * epsilon) * k as f64 / 64.0).exp()
}

/// Picks `a` = the optimum and `b` = the cheapest point whose cost exceeds
/// `(1 + eps) cost(a)`. `None` when no point is that far from optimal.
pub fn find_flip_pair(table: &CostTable, epsilon: f64) -> Option<(PointId, PointId)> {
    let a = table.opt;
    let floor = (1.0 + epsilon) * table.cost(a);
    let mut best: Option<usize> = None;
    for (i, &c) in table.costs.iter().enumerate() {
        if c > floor && best.is_none_or(|b| c < table.costs[b]) {
            best = Some(i);
        }
    }
    best.map(|b| (a, PointId::from_index(b)))
}

/// Estimates `Pr[sum_j d(b, v_j) <= sum_j d(a, v_j)]` over fresh samples of
/// `k` evaluators.
///
/// Requires `cost(b) > (1 + eps) cost(a)`; when `pair` is `None` the pair is
/// chosen by [`find_flip_pair`]. `k` defaults to the sampler's `k`. The check
/// passes when the estimate is within three binomial standard errors above
/// the bound.
pub fn run_flip_rate(
    spec: &TrialBatchSpec,
    pair: Option<(PointId, PointId)>,
    k: Option<u64>,
) -> Result<TrialBatchReport> {
    spec.check(Experiment::FlipRate)?;
    let start = Instant::now();
    let instance = generate(&spec.instance)?;
    let space = &instance.space;
    let eps = spec.params.epsilon;
    let k = match k {
        Some(0) => return Err(Error::domain("k must be at least 1")),
        Some(k) => k,
        None => spec.params.hk()?.1,
    };
    let table = audit_table(space, &spec.caps)?;
    let (a, b) = match pair {
        Some((a, b)) => {
            a.checked_index(space.len())?;
            b.checked_index(space.len())?;
            (a, b)
        }
        None => find_flip_pair(&table, eps).ok_or_else(|| {
            Error::domain(format!(
                "no point costs more than (1+{eps}) times the optimum; flip-rate needs such a pair"
            ))
        })?,
    };
    let (cost_a, cost_b) = (table.cost(a), table.cost(b));
    if cost_b <= (1.0 + eps) * cost_a {
        return Err(Error::domain(format!(
            "flip-rate needs cost(b) > (1+eps) cost(a): cost({b})/cost({a}) = {} <= {}",
            cost_b / cost_a,
            1.0 + eps
        )));
    }

    let (ai, bi) = (a.index(), b.index());
    let n = space.len();
    let rows = run_trials(spec.parallelism, spec.trials, |trial| {
        let seed = spec.trial_seed(trial);
        let mut rng = stream(&[seed]);
        let evaluators = sample_points(n, k as usize, &mut rng)?;
        let (mut sum_a, mut sum_b) = (0.0, 0.0);
        for v in &evaluators {
            sum_a += space.distance(ai, v.index());
            sum_b += space.distance(bi, v.index());
        }
        Ok(FlipRow {
            trial,
            seed,
            sum_a,
            sum_b,
            flipped: sum_b <= sum_a,
        })
    })?;

    let flips = rows.iter().filter(|r| r.flipped).count();
    let trials = rows.len() as f64;
    let estimate = flips as f64 / trials;
    let bound = flip_bound(eps, k);
    let std_error = (bound * (1.0 - bound) / trials).sqrt();
    let limit = bound + 3.0 * std_error;
    let aggregates = vec![
        ("n".to_string(), json!(n)),
        ("a".into(), json!(a)),
        ("b".into(), json!(b)),
        ("cost_a".into(), json!(cost_a)),
        ("cost_b".into(), json!(cost_b)),
        ("cost_ratio".into(), json!(cost_b / cost_a)),
        ("epsilon".into(), json!(eps)),
        ("k".into(), json!(k)),
        ("trials".into(), json!(rows.len())),
        ("flips".into(), json!(flips)),
        ("flip_estimate".into(), json!(estimate)),
        ("flip_bound".into(), json!(bound)),
        ("bound_std_error".into(), json!(std_error)),
    ];
    let checks = vec![Check {
        name: "flip_estimate_within_bound".into(),
        passed: estimate <= limit,
        detail: format!("estimate {estimate} vs bound {bound} (+3 s.e. = {limit})"),
    }];
    Ok(TrialBatchReport {
        experiment: Experiment::FlipRate,
        metadata: spec.metadata(),
        rows: Rows::Flips(rows),
        aggregates,
        checks,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Key-lemma statistics for one space.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyLemmaOutcome {
    pub opt: PointId,
    pub opt_cost: f64,
    /// `ell` values (1-based) where the bound fails.
    pub violations: Vec<usize>,
    pub min_slack: f64,
    pub min_slack_ell: usize,
    pub max_slack: f64,
}

/// Checks `cost(p_ell) <= lemma_ratio_bound(ell, n) * cost(OPT)` for every
/// `ell`, with `p` the points ordered by distance from the optimum.
pub fn key_lemma_check<S: MetricSpace + ?Sized>(space: &S) -> Result<KeyLemmaOutcome> {
    let n = space.len();
    let table = CostTable::compute(space)?;
    let order = order_by_distance_from(space, table.opt)?;
    let mut out = KeyLemmaOutcome {
        opt: table.opt,
        opt_cost: table.opt_cost,
        violations: Vec::new(),
        min_slack: f64::INFINITY,
        min_slack_ell: 1,
        max_slack: f64::NEG_INFINITY,
    };
    for (pos, p) in order.iter().enumerate() {
        let ell = pos + 1;
        let bound = lemma_ratio_bound(ell, n)? * table.opt_cost;
        let actual = table.cost(*p);
        if actual > bound * (1.0 + KEY_LEMMA_RTOL) {
            out.violations.push(ell);
        }
        let slack = if bound > 0.0 { (bound - actual) / bound } else { 0.0 };
        if slack < out.min_slack {
            out.min_slack = slack;
            out.min_slack_ell = ell;
        }
        out.max_slack = out.max_slack.max(slack);
    }
    Ok(out)
}

/// Key-lemma sweep over `trials` instances; instance `i` uses seed
/// `instance.seed + i`.
pub fn run_key_lemma(spec: &TrialBatchSpec) -> Result<TrialBatchReport> {
    spec.check(Experiment::KeyLemma)?;
    if spec.instance.n > spec.caps.key_lemma {
        return Err(Error::CapExceeded {
            what: "key-lemma sweep",
            n: spec.instance.n,
            cap: spec.caps.key_lemma,
        });
    }
    let start = Instant::now();
    let rows = run_trials(spec.parallelism, spec.trials, |i| {
        let gen = GenSpec {
            seed: spec.instance.seed.wrapping_add(i as u64),
            ..spec.instance.clone()
        };
        let instance = generate(&gen)?;
        let o = key_lemma_check(&instance.space)?;
        Ok(KeyLemmaRow {
            instance: i,
            spec: gen.to_string(),
            n: instance.space.len(),
            opt: o.opt,
            opt_cost: o.opt_cost,
            violations: o.violations.len(),
            min_slack: o.min_slack,
            min_slack_ell: o.min_slack_ell,
            max_slack: o.max_slack,
        })
    })?;
    Ok(key_lemma_report(spec.metadata(), rows, start))
}

/// Assembles a key-lemma report from precomputed rows.
pub fn key_lemma_report(metadata: Vec<(String, Value)>, rows: Vec<KeyLemmaRow>, start: Instant) -> TrialBatchReport {
    let violations: usize = rows.iter().map(|r| r.violations).sum();
    let bad_instances = rows.iter().filter(|r| r.violations > 0).count();
    let min_slack = rows.iter().map(|r| r.min_slack).fold(f64::INFINITY, f64::min);
    let max_slack = rows.iter().map(|r| r.max_slack).fold(f64::NEG_INFINITY, f64::max);
    let aggregates = vec![
        ("instances".to_string(), json!(rows.len())),
        ("violations".into(), json!(violations)),
        ("instances_with_violations".into(), json!(bad_instances)),
        ("min_slack".into(), json!(min_slack)),
        ("max_slack".into(), json!(max_slack)),
    ];
    let checks = vec![Check {
        name: "zero_key_lemma_violations".into(),
        passed: violations == 0,
        detail: format!("{violations} violation(s) in {bad_instances} instance(s)"),
    }];
    TrialBatchReport {
        experiment: Experiment::KeyLemma,
        metadata,
        rows: Rows::Instances(rows),
        aggregates,
        checks,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

/// Ratio distributions over an (epsilon, family) grid. Each cell uses the
/// instance spec with its family replaced and `trials` audited runs. Purely
/// observational: the report carries no failing checks.
pub fn run_ratio_sweep(spec: &TrialBatchSpec, epsilons: &[f64], families: &[Family]) -> Result<TrialBatchReport> {
    spec.check(Experiment::RatioSweep)?;
    if epsilons.is_empty() || families.is_empty() {
        return Err(Error::domain("ratio sweep needs at least one epsilon and one family"));
    }
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut aggregates = vec![("n".to_string(), json!(spec.instance.n))];
    for &family in families {
        let gen = GenSpec {
            family,
            ..spec.instance.clone()
        };
        let instance = generate(&gen)?;
        let table = audit_table(&instance.space, &spec.caps)?;
        if let Some(v) = instance.verdict {
            aggregates.push((format!("verdict@{family}"), json!(v.label())));
        }
        for &eps in epsilons {
            let params = ApproxParams {
                epsilon: eps,
                ..spec.params
            };
            params.hk()?;
            let space = &instance.space;
            let cell = run_trials(spec.parallelism, spec.trials, |trial| {
                let seed = spec.trial_seed(trial);
                let oracle = DistanceOracle::new(space);
                let r = approx_median_with(&oracle, &params.with_seed(seed), Audit::Table(&table))?;
                Ok(SweepRow {
                    epsilon: eps,
                    family: family.name().to_string(),
                    trial,
                    seed,
                    selected: r.selected,
                    ratio: r.ratio,
                    queries_used: r.queries_used,
                    mode: r.mode,
                })
            })?;
            let ratios: Vec<f64> = cell.iter().filter_map(|r| r.ratio).collect();
            aggregates.extend(ratio_stats(&ratios, &format!("{family}@{eps}:")));
            rows.extend(cell);
        }
    }
    Ok(TrialBatchReport {
        experiment: Experiment::RatioSweep,
        metadata: spec.metadata(),
        rows: Rows::Sweep(rows),
        aggregates,
        checks: Vec::new(),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::median::Fallback;
    use crate::metric::DistanceMatrix;

    fn p(i: u32) -> PointId {
        PointId::new(i).unwrap()
    }

    #[test]
    fn percentile_nearest_rank() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(percentile(&v, 50.0), 5.0);
        assert_eq!(percentile(&v, 95.0), 10.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&[3.0], 95.0), 3.0);
    }

    #[test]
    fn flip_bound_value() {
        assert!((flip_bound(0.2, 1600) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((flip_bound(0.2, 1600) - 0.367_879).abs() < 1e-6);
    }

    #[test]
    fn flip_pair_on_running_example() {
        let m = DistanceMatrix::from_rows(&[
            [0.0, 1.0, 4.0, 4.0],
            [1.0, 0.0, 4.0, 4.0],
            [4.0, 4.0, 0.0, 2.0],
            [4.0, 4.0, 2.0, 0.0],
        ])
        .unwrap();
        let t = CostTable::compute(&m).unwrap();
        // 10 > 1.1 * 9 = 9.9
        assert_eq!(find_flip_pair(&t, 0.1), Some((p(1), p(3))));
        assert_eq!(find_flip_pair(&t, 0.2), None);
    }

    #[test]
    fn success_rate_equal_distance_is_perfect() {
        let spec = TrialBatchSpec::new(
            Experiment::SuccessRate,
            GenSpec::new(Family::EqualDistance, 40, 0),
            ApproxParams::new(0.25).with_fallback(Fallback::ForceSample),
            100,
        );
        let r = run_success_rate(&spec).unwrap();
        assert_eq!(r.rows.len(), 100);
        assert_eq!(r.aggregate_f64("success_fraction"), Some(1.0));
        assert_eq!(r.aggregate_f64("max_ratio"), Some(1.0));
        assert!(r.passed());
    }

    #[test]
    fn single_trial_single_row() {
        let spec = TrialBatchSpec::new(
            Experiment::SuccessRate,
            GenSpec::new(Family::RandomDendrogram, 100, 2),
            ApproxParams::default(),
            1,
        );
        let r = run_success_rate(&spec).unwrap();
        let csv = r.to_csv(false).unwrap();
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 2);
    }

    #[test]
    fn parallelism_does_not_change_rows() {
        let base = TrialBatchSpec::new(
            Experiment::SuccessRate,
            GenSpec::new(Family::RandomDendrogram, 300, 4),
            ApproxParams::default().with_seed(9),
            24,
        );
        let seq = run_success_rate(&base).unwrap();
        let par = run_success_rate(&base.clone().with_parallelism(4)).unwrap();
        assert_eq!(seq.rows, par.rows);
        assert_eq!(seq.to_csv(false).unwrap(), par.to_csv(false).unwrap());
    }

    #[test]
    fn audit_cap_enforced() {
        let mut spec = TrialBatchSpec::new(
            Experiment::SuccessRate,
            GenSpec::new(Family::RandomDendrogram, 50, 0),
            ApproxParams::default(),
            2,
        );
        spec.caps.audit = 10;
        assert!(matches!(run_success_rate(&spec), Err(Error::CapExceeded { .. })));
        spec.audit = false;
        let r = run_success_rate(&spec).unwrap();
        assert!(r.aggregate("success_fraction").is_none());
    }

    #[test]
    fn flip_rate_precondition() {
        let spec = TrialBatchSpec::new(
            Experiment::FlipRate,
            GenSpec::new(Family::EqualDistance, 10, 0),
            ApproxParams::new(0.2),
            10,
        );
        assert_eq!(run_flip_rate(&spec, None, Some(100)).unwrap_err().exit_code(), 2);
        assert_eq!(
            run_flip_rate(&spec, Some((p(1), p(2))), Some(100))
                .unwrap_err()
                .exit_code(),
            2
        );
    }

    #[test]
    fn key_lemma_running_example_second_point() {
        let m = DistanceMatrix::from_rows(&[
            [0.0, 1.0, 4.0, 4.0],
            [1.0, 0.0, 4.0, 4.0],
            [4.0, 4.0, 0.0, 2.0],
            [4.0, 4.0, 2.0, 0.0],
        ])
        .unwrap();
        let o = key_lemma_check(&m).unwrap();
        assert!(o.violations.is_empty());
        // ell = 2: cost(p2) = 9 against (4/3) * 9 = 12
        assert_eq!(lemma_ratio_bound(2, 4).unwrap() * o.opt_cost, 12.0);
        // ell = 1 is tight; ell = 4 has bound 36 against cost 10
        assert_eq!((o.min_slack, o.min_slack_ell), (0.0, 1));
        assert_eq!(o.max_slack, 26.0 / 36.0);
    }

    #[test]
    fn key_lemma_catches_non_ultrametric_violation() {
        // star: center 1 at distance 1 from all, leaves pairwise 2
        let n = 6;
        let star = DistanceMatrix::from_fn(n, |i, j| match (i, j) {
            _ if i == j => 0.0,
            (0, _) | (_, 0) => 1.0,
            _ => 2.0,
        })
        .unwrap();
        // ell = 2: cost(leaf) = 1 + 2 * 4 = 9 > (1 + 1/5) * 5 = 6
        let o = key_lemma_check(&star).unwrap();
        assert!(o.violations.contains(&2));
    }

    #[test]
    fn sweep_shapes() {
        let spec = TrialBatchSpec::new(
            Experiment::RatioSweep,
            GenSpec::new(Family::RandomDendrogram, 60, 1).with_delta(1.0),
            ApproxParams::default(),
            1,
        );
        let r = run_ratio_sweep(&spec, &[0.25], &[Family::RandomDendrogram]).unwrap();
        assert_eq!(r.rows.len(), 1);
        let r = run_ratio_sweep(&spec, &[0.25], &[Family::RandomDendrogram, Family::PerturbedMetric]).unwrap();
        match &r.rows {
            Rows::Sweep(rows) => assert!(rows.iter().all(|row| row.ratio.unwrap() >= 1.0)),
            _ => unreachable!(),
        }
        assert!(r.aggregate("verdict@perturbed-metric").is_some());
    }

    #[test]
    fn csv_footer_and_strip() {
        let spec = TrialBatchSpec::new(
            Experiment::KeyLemma,
            GenSpec::new(Family::RandomDendrogram, 16, 0),
            ApproxParams::default(),
            3,
        );
        let r = run_key_lemma(&spec).unwrap();
        let csv = r.to_csv(true).unwrap();
        assert!(csv.starts_with("instance,spec,n,opt,opt_cost,violations,"));
        assert!(csv.contains("#agg,violations,0\n"));
        assert!(csv.contains("#agg,check:zero_key_lemma_violations,pass\n"));
        assert_eq!(strip_wall_time(&csv), r.to_csv(false).unwrap());
        let json: Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(json["aggregates"]["instances"], 3);
        assert_eq!(json["rows"].as_array().unwrap().len(), 3);
    }
}
