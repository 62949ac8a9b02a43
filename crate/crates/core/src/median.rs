//! Exact and sampled 1-median selection.
//!
//! [`approx_median`] is the constant-query sampling algorithm: draw `h`
//! candidate points and `k` evaluator points uniformly with replacement,
//! score every candidate by its summed distance to the evaluators, and return
//! the best-scoring candidate. It issues exactly `h * k` distance queries,
//! independent of `n`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{DistanceOracle, MetricSpace, PointId};
use crate::rng::{stream, Stream};

/// Constant of the original analysis for both `h` and `k`.
pub const PAPER_CONSTANT: f64 = 1e9;
/// Desk-scale default for `c_h` and `c_k`.
pub const DEFAULT_CONSTANT: f64 = 8.0;
pub const DEFAULT_EPSILON: f64 = 0.25;
/// Sampled runs above this many queries are refused as infeasible.
pub const MAX_SAMPLED_QUERIES: u64 = 100_000_000_000;
/// Relative gap below which two sample sums count as tied.
pub const SUM_TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    /// Brute force when `epsilon < n^(-2/3)`, sampling otherwise.
    #[default]
    Auto,
    ForceSample,
    ForceExact,
}

impl FromStr for Fallback {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Fallback::Auto),
            "force-sample" => Ok(Fallback::ForceSample),
            "force-exact" => Ok(Fallback::ForceExact),
            other => Err(Error::domain(format!(
                "unknown fallback `{other}` (expected auto, force-sample or force-exact)"
            ))),
        }
    }
}

impl fmt::Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fallback::Auto => "auto",
            Fallback::ForceSample => "force-sample",
            Fallback::ForceExact => "force-exact",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxParams {
    pub epsilon: f64,
    pub c_h: f64,
    pub c_k: f64,
    pub seed: u64,
    pub fallback: Fallback,
}

impl Default for ApproxParams {
    fn default() -> Self {
        ApproxParams {
            epsilon: DEFAULT_EPSILON,
            c_h: DEFAULT_CONSTANT,
            c_k: DEFAULT_CONSTANT,
            seed: 0,
            fallback: Fallback::Auto,
        }
    }
}

impl ApproxParams {
    pub fn new(epsilon: f64) -> Self {
        ApproxParams {
            epsilon,
            ..Default::default()
        }
    }

    pub fn with_constants(mut self, c_h: f64, c_k: f64) -> Self {
        self.c_h = c_h;
        self.c_k = c_k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_fallback(mut self, fallback: Fallback) -> Self {
        self.fallback = fallback;
        self
    }

    /// `(h, k)` for these parameters.
    pub fn hk(&self) -> Result<(u64, u64)> {
        params_hk(self.epsilon, self.c_h, self.c_k)
    }
}

/// Sample sizes `h = ceil(c_h ln(1/eps) / eps)` and
/// `k = ceil(c_k ln(1/eps) / eps^2)`.
pub fn params_hk(epsilon: f64, c_h: f64, c_k: f64) -> Result<(u64, u64)> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    for (name, c) in [("c_h", c_h), ("c_k", c_k)] {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive, got {c}")));
        }
    }
    let log = (1.0 / epsilon).ln();
    let h = (c_h * log / epsilon).ceil();
    let k = (c_k * log / (epsilon * epsilon)).ceil();
    let to_u64 = |v: f64, name: &str| {
        if v.is_finite() && v < u64::MAX as f64 {
            Ok((v as u64).max(1))
        } else {
            Err(Error::domain(format!("{name} = {v} overflows the sample size range")))
        }
    };
    Ok((to_u64(h, "h")?, to_u64(k, "k")?))
}

/// `n^(-2/3)`: below this epsilon the brute force fits the query budget.
pub fn fallback_threshold(n: usize) -> f64 {
    (n as f64).powf(-2.0 / 3.0)
}

/// Sum of distances from `x` to every point, `d(x, x)` included.
pub fn cost<S: MetricSpace + ?Sized>(space: &S, x: PointId) -> Result<f64> {
    let i = x.checked_index(space.len())?;
    Ok(row_sum(space, i))
}

#[inline]
fn row_sum<S: MetricSpace + ?Sized>(space: &S, i: usize) -> f64 {
    (0..space.len()).map(|j| space.distance(i, j)).sum()
}

/// Exact cost of every point, plus the optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    pub costs: Vec<f64>,
    pub opt: PointId,
    pub opt_cost: f64,
}

impl CostTable {
    /// `n^2` distance reads.
    pub fn compute<S: MetricSpace + ?Sized>(space: &S) -> Result<Self> {
        let n = space.len();
        if n == 0 {
            return Err(Error::domain("space has no points"));
        }
        let costs: Vec<f64> = (0..n).map(|i| row_sum(space, i)).collect();
        let (opt, opt_cost) = exact_argmin(&costs);
        Ok(CostTable {
            costs,
            opt: PointId::from_index(opt),
            opt_cost,
        })
    }

    pub fn cost(&self, x: PointId) -> f64 {
        self.costs[x.index()]
    }

    /// `cost(x) / OPT`; 1 when both are zero.
    pub fn ratio(&self, x: PointId) -> f64 {
        ratio(self.cost(x), self.opt_cost)
    }
}

fn ratio(cost: f64, opt: f64) -> f64 {
    if opt > 0.0 {
        cost / opt
    } else if cost == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Lowest index attaining the exact minimum.
fn exact_argmin(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    (best, values[best])
}

/// Exact 1-median by evaluating every cost.
///
/// Issues exactly `n^2` distance reads (no symmetry shortcut, so the count is
/// the same through an oracle). Ties go to the lowest index.
pub fn brute_force_median<S: MetricSpace + ?Sized>(space: &S) -> Result<(PointId, f64)> {
    let n = space.len();
    if n == 0 {
        return Err(Error::domain("space has no points"));
    }
    let costs: Vec<f64> = (0..n).map(|i| row_sum(space, i)).collect();
    let (best, value) = exact_argmin(&costs);
    Ok((PointId::from_index(best), value))
}

/// All points sorted by distance from `origin`, ties by index, origin first.
pub fn order_by_distance_from<S: MetricSpace + ?Sized>(space: &S, origin: PointId) -> Result<Vec<PointId>> {
    let o = origin.checked_index(space.len())?;
    let mut keyed: Vec<(f64, bool, usize)> = (0..space.len()).map(|i| (space.distance(o, i), i != o, i)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    Ok(keyed.into_iter().map(|(_, _, i)| PointId::from_index(i)).collect())
}

/// `m` independent uniform draws from `1..=n`, with replacement.
pub fn sample_points(n: usize, m: usize, rng: &mut impl Rng) -> Result<Vec<PointId>> {
    if n == 0 {
        return Err(Error::domain("cannot sample from an empty point set"));
    }
    // u64 range keeps the draw sequence independent of pointer width
    Ok((0..m)
        .map(|_| PointId::from_index(rng.gen_range(0..n as u64) as usize))
        .collect())
}

/// Scores each candidate by its summed distance to the evaluators and returns
/// the 0-based position of the best one together with all the sums.
///
/// Sums within a relative [`SUM_TIE_RTOL`] of the running best count as ties
/// and keep the earlier candidate. Issues exactly
/// `candidates.len() * evaluators.len()` distance reads.
pub fn empirical_argmin<S: MetricSpace + ?Sized>(
    space: &S,
    candidates: &[PointId],
    evaluators: &[PointId],
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::domain("empirical argmin needs at least one candidate"));
    }
    let n = space.len();
    let cand = candidates
        .iter()
        .map(|c| c.checked_index(n))
        .collect::<Result<Vec<_>>>()?;
    let eval = evaluators
        .iter()
        .map(|v| v.checked_index(n))
        .collect::<Result<Vec<_>>>()?;

    let sums: Vec<f64> = cand
        .iter()
        .map(|&c| eval.iter().map(|&v| space.distance(c, v)).sum())
        .collect();
    let mut best = 0;
    for (i, &s) in sums.iter().enumerate().skip(1) {
        if s < sums[best] - SUM_TIE_RTOL * sums[best].abs() {
            best = i;
        }
    }
    Ok((best, sums))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sampled,
    ExactFallback,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sampled => "sampled",
            Mode::ExactFallback => "exact-fallback",
        })
    }
}

/// Outcome of one 1-median computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianReport {
    pub selected: PointId,
    /// Summed distance from `selected` to the evaluators (all points in
    /// exact mode).
    pub sample_cost: f64,
    pub exact_cost: Option<f64>,
    pub opt_cost: Option<f64>,
    pub ratio: Option<f64>,
    pub queries_used: u64,
    pub mode: Mode,
}

impl MedianReport {
    pub const FIELDS: [&'static str; 7] = [
        "selected",
        "sample_cost",
        "exact_cost",
        "opt_cost",
        "ratio",
        "queries_used",
        "mode",
    ];

    fn values(&self) -> [String; 7] {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        [
            self.selected.to_string(),
            self.sample_cost.to_string(),
            opt(self.exact_cost),
            opt(self.opt_cost),
            opt(self.ratio),
            self.queries_used.to_string(),
            self.mode.to_string(),
        ]
    }

    /// One `key=value` line per field; absent values are left empty.
    pub fn to_key_value(&self) -> String {
        Self::FIELDS
            .iter()
            .zip(self.values())
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn csv_header() -> String {
        Self::FIELDS.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.values().join(",")
    }

    fn audit(&mut self, table: &CostTable) {
        let exact = table.cost(self.selected);
        self.exact_cost = Some(exact);
        self.opt_cost = Some(table.opt_cost);
        self.ratio = Some(ratio(exact, table.opt_cost));
    }
}

/// How a report gets its exact-cost audit.
#[derive(Debug, Clone, Copy)]
pub enum Audit<'a> {
    None,
    /// Brute force over the backing space (uncounted reads).
    BruteForce,
    /// A table computed once and shared by many runs.
    Table(&'a CostTable),
}

/// Sampling 1-median with the fallback policy of `params`.
///
/// With `with_exact_audit` the report also carries the exact cost of the
/// selected point, the optimum and their ratio. Audit reads bypass the
/// oracle and do not appear in `queries_used`.
pub fn approx_median<S: MetricSpace>(
    oracle: &DistanceOracle<S>,
    params: &ApproxParams,
    with_exact_audit: bool,
) -> Result<MedianReport> {
    let audit = if with_exact_audit {
        Audit::BruteForce
    } else {
        Audit::None
    };
    approx_median_with(oracle, params, audit)
}

pub fn approx_median_with<S: MetricSpace>(
    oracle: &DistanceOracle<S>,
    params: &ApproxParams,
    audit: Audit<'_>,
) -> Result<MedianReport> {
    let n = oracle.len();
    if n == 0 {
        return Err(Error::domain("space has no points"));
    }
    let (h, k) = params.hk()?;
    let exact = match params.fallback {
        Fallback::Auto => params.epsilon < fallback_threshold(n),
        Fallback::ForceExact => true,
        Fallback::ForceSample => false,
    };
    if let Audit::Table(t) = audit {
        if t.costs.len() != n {
            return Err(Error::domain("audit table does not match the space"));
        }
    }

    let before = oracle.query_count();
    let mut report = if exact {
        let (selected, opt) = brute_force_median(oracle)?;
        MedianReport {
            selected,
            sample_cost: opt,
            exact_cost: None,
            opt_cost: None,
            ratio: None,
            queries_used: oracle.query_count() - before,
            mode: Mode::ExactFallback,
        }
    } else {
        if h.saturating_mul(k) > MAX_SAMPLED_QUERIES {
            return Err(Error::domain(format!(
                "h*k = {h}*{k} queries is infeasible; use smaller constants or force-exact"
            )));
        }
        let mut rng: Stream = stream(&[params.seed]);
        let candidates = sample_points(n, h as usize, &mut rng)?;
        let evaluators = sample_points(n, k as usize, &mut rng)?;
        let (t, sums) = empirical_argmin(oracle, &candidates, &evaluators)?;
        MedianReport {
            selected: candidates[t],
            sample_cost: sums[t],
            exact_cost: None,
            opt_cost: None,
            ratio: None,
            queries_used: oracle.query_count() - before,
            mode: Mode::Sampled,
        }
    };

    match audit {
        Audit::None => {}
        Audit::BruteForce => report.audit(&CostTable::compute(oracle.space())?),
        Audit::Table(t) => report.audit(t),
    }
    Ok(report)
}

/// The `(1 + eps)` contract: runs the sampler with `eps / 4`.
pub fn approx_median_theorem<S: MetricSpace>(
    oracle: &DistanceOracle<S>,
    params: &ApproxParams,
    audit: Audit<'_>,
) -> Result<MedianReport> {
    if !(params.epsilon > 0.0 && params.epsilon < 1.0) {
        return Err(Error::domain(format!(
            "epsilon must lie in (0, 1), got {}",
            params.epsilon
        )));
    }
    let inner = ApproxParams {
        epsilon: params.epsilon / 4.0,
        ..*params
    };
    approx_median_with(oracle, &inner, audit)
}

/// `1 + (ell - 1) / (n - ell + 1)`: how far the `ell`-th closest point to an
/// optimum can be from optimal in an ultrametric.
pub fn lemma_ratio_bound(ell: usize, n: usize) -> Result<f64> {
    if ell == 0 || ell > n {
        return Err(Error::domain(format!("ell must lie in [1, {n}], got {ell}")));
    }
    Ok(1.0 + (ell - 1) as f64 / (n - ell + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::DistanceMatrix;

    fn p(i: u32) -> PointId {
        PointId::new(i).unwrap()
    }

    fn d4() -> DistanceMatrix {
        DistanceMatrix::from_rows(&[
            [0.0, 1.0, 4.0, 4.0],
            [1.0, 0.0, 4.0, 4.0],
            [4.0, 4.0, 0.0, 2.0],
            [4.0, 4.0, 2.0, 0.0],
        ])
        .unwrap()
    }

    fn equal(n: usize, c: f64) -> DistanceMatrix {
        DistanceMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { c }).unwrap()
    }

    #[test]
    fn costs_of_running_example() {
        assert_eq!(cost(&d4(), p(1)).unwrap(), 9.0);
        assert_eq!(cost(&d4(), p(3)).unwrap(), 10.0);
        let single = DistanceMatrix::from_rows(&[[0.0]]).unwrap();
        assert_eq!(cost(&single, p(1)).unwrap(), 0.0);
        assert!(cost(&d4(), p(5)).is_err());
    }

    #[test]
    fn brute_force_ties_go_low() {
        assert_eq!(brute_force_median(&d4()).unwrap(), (p(1), 9.0));
        assert_eq!(brute_force_median(&equal(7, 2.0)).unwrap(), (p(1), 12.0));
        let single = DistanceMatrix::from_rows(&[[0.0]]).unwrap();
        assert_eq!(brute_force_median(&single).unwrap(), (p(1), 0.0));
    }

    #[test]
    fn brute_force_query_count() {
        let oracle = DistanceOracle::new(d4());
        brute_force_median(&oracle).unwrap();
        assert_eq!(oracle.query_count(), 16);
    }

    #[test]
    fn ordering() {
        let ids = |v: &[u32]| v.iter().map(|&i| p(i)).collect::<Vec<_>>();
        assert_eq!(order_by_distance_from(&d4(), p(1)).unwrap(), ids(&[1, 2, 3, 4]));
        assert_eq!(order_by_distance_from(&d4(), p(3)).unwrap(), ids(&[3, 4, 1, 2]));
        let single = DistanceMatrix::from_rows(&[[0.0]]).unwrap();
        assert_eq!(order_by_distance_from(&single, p(1)).unwrap(), ids(&[1]));
    }

    #[test]
    fn ordering_puts_origin_first_even_with_zero_distances() {
        let m = DistanceMatrix::from_rows(&[[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]]).unwrap();
        assert_eq!(order_by_distance_from(&m, p(2)).unwrap(), vec![p(2), p(1), p(3)]);
    }

    #[test]
    fn sample_sizes() {
        let e = (-1.0f64).exp();
        assert_eq!(params_hk(e, 1.0, 1.0).unwrap(), (3, 8));
        assert_eq!(
            params_hk(0.5, PAPER_CONSTANT, PAPER_CONSTANT).unwrap(),
            (1_386_294_362, 2_772_588_723)
        );
        // 8 ln 4 / 0.25 = 44.36, 8 ln 4 / 0.0625 = 177.45
        assert_eq!(params_hk(0.25, 8.0, 8.0).unwrap(), (45, 178));
        for bad in [0.0, 1.0, 1.5, -0.1, f64::NAN] {
            assert_eq!(params_hk(bad, 1.0, 1.0).unwrap_err().exit_code(), 2);
        }
        assert!(params_hk(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn sampling_edges() {
        let mut rng = stream(&[1]);
        assert_eq!(sample_points(1, 3, &mut rng).unwrap(), vec![p(1); 3]);
        assert!(sample_points(5, 0, &mut rng).unwrap().is_empty());
        assert!(sample_points(0, 3, &mut rng).is_err());
    }

    #[test]
    fn argmin_examples() {
        let m = d4();
        assert_eq!(empirical_argmin(&m, &[p(3)], &[p(1), p(2)]).unwrap().0, 0);
        assert_eq!(
            empirical_argmin(&m, &[p(1), p(3)], &[p(1), p(2), p(3), p(4)]).unwrap(),
            (0, vec![9.0, 10.0])
        );
        assert_eq!(
            empirical_argmin(&m, &[p(1), p(2)], &[p(3), p(4)]).unwrap(),
            (0, vec![8.0, 8.0])
        );
        assert!(empirical_argmin(&m, &[], &[p(1)]).is_err());
        assert!(empirical_argmin(&m, &[p(9)], &[p(1)]).is_err());
    }

    #[test]
    fn argmin_query_count() {
        let oracle = DistanceOracle::new(d4());
        empirical_argmin(&oracle, &[p(1), p(2), p(3)], &[p(1), p(4)]).unwrap();
        assert_eq!(oracle.query_count(), 6);
    }

    #[test]
    fn approx_on_running_example_falls_back() {
        // 4^(-2/3) = 0.3969 > 0.3
        assert!((fallback_threshold(4) - 0.396_850_262_992_049_9).abs() < 1e-15);
        let oracle = DistanceOracle::new(d4());
        let r = approx_median(&oracle, &ApproxParams::new(0.3), true).unwrap();
        assert_eq!(r.mode, Mode::ExactFallback);
        assert_eq!(r.selected, p(1));
        assert_eq!(r.ratio, Some(1.0));
        assert_eq!(r.queries_used, 16);
    }

    #[test]
    fn sampled_on_equal_distance_is_optimal() {
        let oracle = DistanceOracle::new(equal(50, 3.0));
        for seed in 0..5 {
            let params = ApproxParams::new(0.25)
                .with_seed(seed)
                .with_fallback(Fallback::ForceSample);
            let r = approx_median(&oracle, &params, true).unwrap();
            assert_eq!(r.mode, Mode::Sampled);
            assert_eq!(r.ratio, Some(1.0));
            assert_eq!(r.queries_used, 45 * 178);
        }
    }

    #[test]
    fn force_exact_and_theorem_wrapper() {
        let oracle = DistanceOracle::new(d4());
        let params = ApproxParams::new(0.9).with_fallback(Fallback::ForceExact);
        assert_eq!(
            approx_median(&oracle, &params, false).unwrap().mode,
            Mode::ExactFallback
        );

        // eps = 0.9 samples directly on 4 points, eps/4 = 0.225 < 0.397 falls back
        let params = ApproxParams::new(0.9);
        assert_eq!(approx_median(&oracle, &params, false).unwrap().mode, Mode::Sampled);
        let r = approx_median_theorem(&oracle, &params, Audit::BruteForce).unwrap();
        assert_eq!(r.mode, Mode::ExactFallback);
        assert_eq!(r.ratio, Some(1.0));
        assert!(approx_median_theorem(&oracle, &ApproxParams::new(1.5), Audit::None).is_err());
    }

    #[test]
    fn paper_constants_refused_when_sampling() {
        let oracle = DistanceOracle::new(equal(10, 1.0));
        let params = ApproxParams::new(0.5)
            .with_constants(PAPER_CONSTANT, PAPER_CONSTANT)
            .with_fallback(Fallback::ForceSample);
        assert_eq!(approx_median(&oracle, &params, false).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn lemma_bound_values() {
        assert_eq!(lemma_ratio_bound(1, 17).unwrap(), 1.0);
        assert_eq!(lemma_ratio_bound(17, 17).unwrap(), 17.0);
        assert_eq!(lemma_ratio_bound(10, 100).unwrap(), 1.0 + 9.0 / 91.0);
        assert!(lemma_ratio_bound(0, 5).is_err());
        assert!(lemma_ratio_bound(6, 5).is_err());
    }

    #[test]
    fn report_serialization() {
        let r = MedianReport {
            selected: p(3),
            sample_cost: 12.5,
            exact_cost: Some(20.0),
            opt_cost: Some(16.0),
            ratio: Some(1.25),
            queries_used: 8010,
            mode: Mode::Sampled,
        };
        assert_eq!(
            MedianReport::csv_header(),
            "selected,sample_cost,exact_cost,opt_cost,ratio,queries_used,mode"
        );
        assert_eq!(r.to_csv_row(), "3,12.5,20,16,1.25,8010,sampled");
        let unaudited = MedianReport {
            exact_cost: None,
            opt_cost: None,
            ratio: None,
            ..r.clone()
        };
        assert_eq!(
            unaudited.to_key_value(),
            "selected=3\nsample_cost=12.5\nexact_cost=\nopt_cost=\nratio=\nqueries_used=8010\nmode=sampled\n"
        );
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<MedianReport>(&json).unwrap(), r);
    }
}
