//! Seeded instance generators.
//!
//! Each family draws from its own stream keyed by `(seed, family, n)`, so the
//! same [`GenSpec`] always yields the same instance, bit for bit.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::metric::{validate, Dendrogram, DendrogramNode, DistanceMatrix, Space, Verdict};
use crate::rng::{stream, tag};

/// Minimum gap enforced between consecutive merge heights.
pub const HEIGHT_SPACING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    RandomDendrogram,
    KLevel,
    EqualDistance,
    PerturbedMetric,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::RandomDendrogram,
        Family::KLevel,
        Family::EqualDistance,
        Family::PerturbedMetric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::RandomDendrogram => "random-dendrogram",
            Family::KLevel => "k-level",
            Family::EqualDistance => "equal-distance",
            Family::PerturbedMetric => "perturbed-metric",
        }
    }

    pub fn is_ultrametric(self) -> bool {
        self != Family::PerturbedMetric
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| {
            Error::domain(format!(
                "unknown family `{s}` (expected one of random-dendrogram, k-level, equal-distance, perturbed-metric)"
            ))
        })
    }
}

/// Instance recipe.
///
/// String form: `family:n=..,seed=..,k=..,delta=..` plus the optional
/// `heights=h1/h2/..` and `branching=b` (k-level), `c=..` (equal-distance)
/// and `scale=..` (upper bound of random merge heights).
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub family: Family,
    pub n: usize,
    pub seed: u64,
    /// Level count for `k-level`.
    pub k: usize,
    /// Per-level heights for `k-level`; defaults to `1, 2, .., k`.
    pub heights: Option<Vec<f64>>,
    /// Branching factor for `k-level`; defaults to `ceil(n^(1/k))`.
    pub branching: Option<usize>,
    /// Common distance for `equal-distance`.
    pub c: f64,
    /// Random merge heights are drawn from `(0, scale]`.
    pub scale: f64,
    /// Multiplicative noise magnitude for `perturbed-metric`.
    pub delta: f64,
}

impl GenSpec {
    pub fn new(family: Family, n: usize, seed: u64) -> Self {
        GenSpec {
            family,
            n,
            seed,
            k: 2,
            heights: None,
            branching: None,
            c: 1.0,
            scale: 1.0,
            delta: 0.5,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_heights(mut self, heights: Vec<f64>) -> Self {
        self.heights = Some(heights);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::domain("n must be at least 1"));
        }
        if u32::try_from(self.n).is_err() {
            return Err(Error::domain("n does not fit the point id range"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::domain("c must be positive"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::domain("scale must be positive"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::domain("delta must be non-negative"));
        }
        Ok(())
    }

    fn stream(&self) -> crate::rng::Stream {
        self.stream_for(self.family)
    }

    fn stream_for(&self, family: Family) -> crate::rng::Stream {
        stream(&[self.seed, tag(family.name()), self.n as u64])
    }
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:n={},seed={}", self.family, self.n, self.seed)?;
        match self.family {
            Family::KLevel => {
                write!(f, ",k={}", self.k)?;
                if let Some(h) = &self.heights {
                    let h: Vec<String> = h.iter().map(f64::to_string).collect();
                    write!(f, ",heights={}", h.join("/"))?;
                }
                if let Some(b) = self.branching {
                    write!(f, ",branching={b}")?;
                }
            }
            Family::EqualDistance => write!(f, ",c={}", self.c)?,
            Family::RandomDendrogram => {
                if self.scale != 1.0 {
                    write!(f, ",scale={}", self.scale)?;
                }
            }
            Family::PerturbedMetric => {
                write!(f, ",delta={}", self.delta)?;
                if self.scale != 1.0 {
                    write!(f, ",scale={}", self.scale)?;
                }
            }
        }
        Ok(())
    }
}

impl FromStr for GenSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, params) = s.split_once(':').unwrap_or((s, ""));
        let mut spec = GenSpec::new(family.trim().parse()?, 0, 0);
        let mut saw_n = false;
        for kv in params.split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::domain(format!("expected key=value in generator spec, got `{kv}`")))?;
            let bad = |what: &str| Error::domain(format!("invalid {what} `{value}` in generator spec"));
            match key.trim() {
                "n" => {
                    spec.n = value.parse().map_err(|_| bad("n"))?;
                    saw_n = true;
                }
                "seed" => spec.seed = value.parse().map_err(|_| bad("seed"))?,
                "k" => spec.k = value.parse().map_err(|_| bad("k"))?,
                "delta" => spec.delta = value.parse().map_err(|_| bad("delta"))?,
                "c" => spec.c = value.parse().map_err(|_| bad("c"))?,
                "scale" => spec.scale = value.parse().map_err(|_| bad("scale"))?,
                "branching" => spec.branching = Some(value.parse().map_err(|_| bad("branching"))?),
                "heights" => {
                    let h = value
                        .split('/')
                        .map(|v| v.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad("heights"))?;
                    spec.heights = Some(h);
                }
                other => return Err(Error::domain(format!("unknown generator parameter `{other}`"))),
            }
        }
        if !saw_n {
            return Err(Error::domain("generator spec needs n=.."));
        }
        spec.check()?;
        Ok(spec)
    }
}

/// A generated instance plus the validator's verdict where one was computed.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: GenSpec,
    pub space: Space,
    /// Recorded for perturbed metrics; `None` for dendrogram families,
    /// which are ultrametric by construction.
    pub verdict: Option<Verdict>,
}

/// Builds the instance described by `spec`.
pub fn generate(spec: &GenSpec) -> Result<Instance> {
    spec.check()?;
    let (space, verdict) = match spec.family {
        Family::RandomDendrogram => (gen_random_dendrogram(spec)?.into(), None),
        Family::KLevel => (gen_k_level(spec)?.into(), None),
        Family::EqualDistance => (gen_equal_distance(spec)?.into(), None),
        Family::PerturbedMetric => {
            let (m, v) = gen_perturbed_metric(spec)?;
            (m.into(), Some(v))
        }
    };
    Ok(Instance {
        spec: spec.clone(),
        space,
        verdict,
    })
}

fn merge_heights(rng: &mut impl Rng, count: usize, scale: f64) -> Vec<f64> {
    let mut h: Vec<f64> = (0..count).map(|_| scale * (1.0 - rng.gen::<f64>())).collect();
    h.sort_by(f64::total_cmp);
    for i in 1..h.len() {
        if h[i] <= h[i - 1] {
            h[i] = h[i - 1] + HEIGHT_SPACING;
        }
    }
    h
}

/// Random binary merge tree: `n - 1` merges of two uniformly chosen active
/// clusters at strictly increasing heights drawn from `(0, scale]`.
pub fn gen_random_dendrogram(spec: &GenSpec) -> Result<Dendrogram> {
    spec.check()?;
    let n = spec.n;
    let mut rng = spec.stream();
    random_merge_tree(&mut rng, n, spec.scale)
}

fn random_merge_tree(rng: &mut impl Rng, n: usize, scale: f64) -> Result<Dendrogram> {
    if n == 1 {
        return Ok(Dendrogram::singleton());
    }
    let heights = merge_heights(rng, n - 1, scale);
    let mut nodes: Vec<DendrogramNode> = (0..n).map(DendrogramNode::leaf).collect();
    let mut active: Vec<usize> = (0..n).collect();
    for h in heights {
        let i = rng.gen_range(0..active.len());
        let mut j = rng.gen_range(0..active.len() - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (active[i], active[j]);
        // remove the larger position first so the smaller stays valid
        active.swap_remove(i.max(j));
        active.swap_remove(i.min(j));
        nodes.push(DendrogramNode::internal(h, vec![a, b]));
        active.push(nodes.len() - 1);
    }
    let root = active[0];
    Dendrogram::new(nodes, root).map_err(|e| Error::Internal(format!("generated dendrogram rejected: {e}")))
}

/// Balanced tree of depth `k` with fixed per-level heights.
///
/// Leaves are split into `branching` near-equal consecutive blocks at each
/// level, top down. Blocks of one point become leaves directly, so every
/// internal node has at least two children. No randomness is involved.
pub fn gen_k_level(spec: &GenSpec) -> Result<Dendrogram> {
    spec.check()?;
    let (n, k) = (spec.n, spec.k);
    if k == 0 {
        return Err(Error::domain("k-level needs k >= 1"));
    }
    let heights = match &spec.heights {
        Some(h) => h.clone(),
        None => (1..=k).map(|i| i as f64).collect(),
    };
    if heights.len() != k {
        return Err(Error::domain(format!(
            "k-level needs {k} heights, got {}",
            heights.len()
        )));
    }
    if heights.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::domain("k-level heights must be positive"));
    }
    if heights.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("k-level heights must be strictly increasing"));
    }
    let branching = match spec.branching {
        Some(b) if b >= 2 => b,
        Some(b) => return Err(Error::domain(format!("branching must be at least 2, got {b}"))),
        None => smallest_branching(n, k),
    };
    if (branching as f64).powi(k as i32) < n as f64 {
        return Err(Error::domain(format!(
            "branching {branching}^{k} cannot hold {n} points"
        )));
    }

    let mut nodes: Vec<DendrogramNode> = (0..n).map(DendrogramNode::leaf).collect();
    let root = build_level(&mut nodes, 0, n, k, &heights, branching);
    Dendrogram::new(nodes, root).map_err(|e| Error::Internal(format!("k-level tree rejected: {e}")))
}

fn smallest_branching(n: usize, k: usize) -> usize {
    let mut b = 2usize;
    while (b as f64).powi(k as i32) < n as f64 {
        b += 1;
    }
    b
}

fn build_level(
    nodes: &mut Vec<DendrogramNode>,
    start: usize,
    len: usize,
    level: usize,
    heights: &[f64],
    branching: usize,
) -> usize {
    if len == 1 {
        return start;
    }
    let parts = branching.min(len);
    let (base, extra) = (len / parts, len % parts);
    let mut children = Vec::with_capacity(parts);
    let mut offset = start;
    for p in 0..parts {
        let size = base + usize::from(p < extra);
        let child = if level == 1 {
            // bottom level: blocks are flat groups of leaves
            debug_assert_eq!(size, 1);
            offset
        } else {
            build_level(nodes, offset, size, level - 1, heights, branching)
        };
        children.push(child);
        offset += size;
    }
    nodes.push(DendrogramNode::internal(heights[level - 1], children));
    nodes.len() - 1
}

/// Every pair at distance `c`.
pub fn gen_equal_distance(spec: &GenSpec) -> Result<Dendrogram> {
    spec.check()?;
    if spec.n == 1 {
        return Ok(Dendrogram::singleton());
    }
    let mut nodes: Vec<DendrogramNode> = (0..spec.n).map(DendrogramNode::leaf).collect();
    nodes.push(DendrogramNode::internal(spec.c, (0..spec.n).collect()));
    let root = nodes.len() - 1;
    Dendrogram::new(nodes, root)
}

/// Random-dendrogram ultrametric with symmetric multiplicative noise in
/// `[1, 1 + delta)`, repaired by shortest-path closure.
///
/// The closure runs Floyd-Warshall, O(n^3). Returns the matrix and the
/// validator's verdict on it.
pub fn gen_perturbed_metric(spec: &GenSpec) -> Result<(DistanceMatrix, Verdict)> {
    spec.check()?;
    let n = spec.n;
    // same base tree as random-dendrogram with this seed and n
    let base = random_merge_tree(&mut spec.stream_for(Family::RandomDendrogram), n, spec.scale)?;
    let mut m = base.to_matrix();
    let mut rng = stream(&[spec.seed, tag("perturbed-metric/noise"), n as u64]);
    if spec.delta > 0.0 {
        let d = m.as_mut_slice();
        for i in 0..n {
            for j in i + 1..n {
                let f = 1.0 + spec.delta * rng.gen::<f64>();
                let v = d[i * n + j] * f;
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        shortest_path_closure(d, n);
    }
    let verdict = validate(&m)?.verdict;
    if !verdict.is_valid() {
        return Err(Error::Internal(format!(
            "shortest-path closure left an invalid metric: {verdict}"
        )));
    }
    Ok((m, verdict))
}

fn shortest_path_closure(d: &mut [f64], n: usize) {
    for via in 0..n {
        for i in 0..n {
            let d_iv = d[i * n + via];
            for j in 0..n {
                let alt = d_iv + d[via * n + j];
                if alt < d[i * n + j] {
                    d[i * n + j] = alt;
                }
            }
        }
    }
}
