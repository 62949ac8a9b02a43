use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream;

use super::{approx_eq, approx_le, MetricSpace, PointId, Space, ABS_TOL};

/// Largest `n` for which every triple is checked; larger spaces are sampled.
pub const DEFAULT_FULL_VALIDATION_CAP: usize = 2048;
const DEFAULT_SAMPLE_BUDGET: u64 = 20_000_000;

/// Evidence that an axiom fails. Points are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Witness {
    NonZeroDiagonal {
        point: PointId,
    },
    Asymmetric {
        a: PointId,
        b: PointId,
    },
    /// `d(a, b) = 0` for distinct points.
    ZeroDistance {
        a: PointId,
        b: PointId,
    },
    /// `d(x, z) > d(x, y) + d(y, z)`.
    Triangle {
        x: PointId,
        y: PointId,
        z: PointId,
    },
    /// `d(x, z) > max(d(x, y), d(y, z))`.
    StrongTriangle {
        x: PointId,
        y: PointId,
        z: PointId,
    },
    /// The two largest distances among `x, y, z` differ.
    Isosceles {
        x: PointId,
        y: PointId,
        z: PointId,
    },
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::NonZeroDiagonal { point } => write!(f, "d({point},{point}) != 0"),
            Witness::Asymmetric { a, b } => write!(f, "d({a},{b}) != d({b},{a})"),
            Witness::ZeroDistance { a, b } => write!(f, "d({a},{b}) = 0 for distinct points"),
            Witness::Triangle { x, y, z } => {
                write!(f, "triangle inequality fails: d({x},{z}) > d({x},{y}) + d({y},{z})")
            }
            Witness::StrongTriangle { x, y, z } => {
                write!(
                    f,
                    "strong triangle inequality fails: d({x},{z}) > max(d({x},{y}), d({y},{z}))"
                )
            }
            Witness::Isosceles { x, y, z } => {
                write!(f, "two largest distances of ({x},{y},{z}) differ")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ultrametric,
    /// A metric that fails the strong triangle inequality at the witness.
    MetricOnly(Witness),
    Invalid(Witness),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        !matches!(self, Verdict::Invalid(_))
    }

    pub fn is_ultrametric(&self) -> bool {
        matches!(self, Verdict::Ultrametric)
    }

    /// Short label: `ultrametric`, `metric-only` or `invalid`.
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Ultrametric => "ultrametric",
            Verdict::MetricOnly(_) => "metric-only",
            Verdict::Invalid(_) => "invalid",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Ultrametric => f.write_str("ultrametric"),
            Verdict::MetricOnly(w) => write!(f, "metric-only ({w})"),
            Verdict::Invalid(w) => write!(f, "invalid ({w})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    /// Downgrade zero off-diagonal distances to warnings.
    pub allow_pseudo: bool,
    /// Spaces with more points are validated on sampled triples.
    pub full_cap: usize,
    /// Number of triples drawn above the cap.
    pub sample_budget: u64,
    pub seed: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            allow_pseudo: false,
            full_cap: DEFAULT_FULL_VALIDATION_CAP,
            sample_budget: DEFAULT_SAMPLE_BUDGET,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub verdict: Verdict,
    pub warnings: Vec<Witness>,
    /// False when triples were sampled rather than enumerated.
    pub exhaustive: bool,
}

/// Validates with default options.
pub fn validate<S: MetricSpace + ?Sized>(space: &S) -> Result<Validation> {
    validate_with(space, &ValidateOptions::default())
}

/// Classifies a space as ultrametric, metric-only or invalid.
///
/// Pairwise checks (zero diagonal, symmetry, positivity) run first, then the
/// triples: the first strong-triangle failure becomes the `MetricOnly`
/// witness, and any ordinary triangle failure makes the space `Invalid`.
/// NaN, infinite or negative entries are format errors.
pub fn validate_with<S: MetricSpace + ?Sized>(space: &S, opts: &ValidateOptions) -> Result<Validation> {
    let n = space.len();
    if n == 0 {
        return Err(Error::format("space has no points"));
    }
    let mut warnings = Vec::new();
    let invalid = |w| Validation {
        verdict: Verdict::Invalid(w),
        warnings: Vec::new(),
        exhaustive: true,
    };
    for i in 0..n {
        for j in 0..n {
            let v = space.distance(i, j);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::format(format!(
                    "distance ({}, {}) = {v} is not a finite non-negative number",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    for i in 0..n {
        if space.distance(i, i).abs() > ABS_TOL {
            return Ok(invalid(Witness::NonZeroDiagonal {
                point: PointId::from_index(i),
            }));
        }
        for j in i + 1..n {
            let (a, b) = (PointId::from_index(i), PointId::from_index(j));
            let (dij, dji) = (space.distance(i, j), space.distance(j, i));
            if !approx_eq(dij, dji) {
                return Ok(invalid(Witness::Asymmetric { a, b }));
            }
            if dij <= ABS_TOL {
                let w = Witness::ZeroDistance { a, b };
                if opts.allow_pseudo {
                    warnings.push(w);
                } else {
                    return Ok(invalid(w));
                }
            }
        }
    }

    let mut strong: Option<Witness> = None;
    let mut check = |x: usize, y: usize, z: usize| -> Option<Witness> {
        let (dxy, dyz, dxz) = (space.distance(x, y), space.distance(y, z), space.distance(x, z));
        if approx_le(dxz, dxy.max(dyz)) {
            return None;
        }
        let ids = (PointId::from_index(x), PointId::from_index(y), PointId::from_index(z));
        if !approx_le(dxz, dxy + dyz) {
            return Some(Witness::Triangle {
                x: ids.0,
                y: ids.1,
                z: ids.2,
            });
        }
        strong.get_or_insert(Witness::StrongTriangle {
            x: ids.0,
            y: ids.1,
            z: ids.2,
        });
        None
    };

    let exhaustive = n <= opts.full_cap;
    if exhaustive {
        for x in 0..n {
            for z in x + 1..n {
                for y in 0..n {
                    if y == x || y == z {
                        continue;
                    }
                    if let Some(w) = check(x, y, z) {
                        return Ok(Validation { warnings, ..invalid(w) });
                    }
                }
            }
        }
    } else {
        let mut rng = stream(&[opts.seed, n as u64, 0x7661_6c69]);
        for _ in 0..opts.sample_budget {
            let (x, y, z) = distinct_triple(&mut rng, n);
            if let Some(w) = check(x.min(z), y, x.max(z)) {
                return Ok(Validation {
                    warnings,
                    exhaustive: false,
                    ..invalid(w)
                });
            }
        }
    }

    let verdict = match strong {
        None => Verdict::Ultrametric,
        Some(w) => Verdict::MetricOnly(w),
    };
    Ok(Validation {
        verdict,
        warnings,
        exhaustive,
    })
}

impl Space {
    /// Dendrograms are ultrametric by construction; their structure was
    /// checked when they were built. Matrices get the full triple check.
    pub fn validate(&self, opts: &ValidateOptions) -> Result<Validation> {
        match self {
            Space::Matrix(m) => validate_with(m, opts),
            Space::Dendrogram(_) => Ok(Validation {
                verdict: Verdict::Ultrametric,
                warnings: Vec::new(),
                exhaustive: true,
            }),
        }
    }
}

fn distinct_triple(rng: &mut impl Rng, n: usize) -> (usize, usize, usize) {
    debug_assert!(n >= 3);
    let x = rng.gen_range(0..n);
    let mut y = rng.gen_range(0..n - 1);
    if y >= x {
        y += 1;
    }
    let mut z = rng.gen_range(0..n - 2);
    for lo in [x.min(y), x.max(y)] {
        if z >= lo {
            z += 1;
        }
    }
    (x, y, z)
}

/// Checks that in every triple the two largest distances agree.
///
/// Enumerates all triples when `n^3 <= sample_budget`, otherwise samples
/// `sample_budget` of them. Returns the first violating triple.
pub fn isosceles_check<S: MetricSpace + ?Sized>(space: &S, sample_budget: u64, seed: u64) -> Option<Witness> {
    let n = space.len();
    if n < 3 {
        return None;
    }
    let holds = |x: usize, y: usize, z: usize| {
        let mut d = [space.distance(x, y), space.distance(y, z), space.distance(x, z)];
        d.sort_by(f64::total_cmp);
        approx_eq(d[1], d[2])
    };
    let witness = |x, y, z| Witness::Isosceles {
        x: PointId::from_index(x),
        y: PointId::from_index(y),
        z: PointId::from_index(z),
    };
    let total = (n as u64).saturating_pow(3);
    if total <= sample_budget {
        for x in 0..n {
            for y in x + 1..n {
                for z in y + 1..n {
                    if !holds(x, y, z) {
                        return Some(witness(x, y, z));
                    }
                }
            }
        }
    } else {
        let mut rng = stream(&[seed, n as u64, 0x6973_6f73]);
        for _ in 0..sample_budget {
            let (x, y, z) = distinct_triple(&mut rng, n);
            let mut t = [x, y, z];
            t.sort_unstable();
            if !holds(t[0], t[1], t[2]) {
                return Some(witness(t[0], t[1], t[2]));
            }
        }
    }
    None
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

    fn path3() -> DistanceMatrix {
        DistanceMatrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]).unwrap()
    }

    /// Independent reference: checks every ordered triple with no tolerance.
    fn brute_is_ultrametric(m: &DistanceMatrix) -> bool {
        let n = m.len();
        (0..n).all(|i| (0..n).all(|j| (0..n).all(|k| m.distance(i, k) <= m.distance(i, j).max(m.distance(j, k)))))
    }

    #[test]
    fn running_example_is_ultrametric() {
        assert!(brute_is_ultrametric(&d4()));
        let v = validate(&d4()).unwrap();
        assert_eq!(v.verdict, Verdict::Ultrametric);
        assert!(v.exhaustive);
        assert_eq!(isosceles_check(&d4(), 1_000, 0), None);
    }

    #[test]
    fn path_is_metric_only_with_witness() {
        let v = validate(&path3()).unwrap();
        assert_eq!(
            v.verdict,
            Verdict::MetricOnly(Witness::StrongTriangle {
                x: p(1),
                y: p(2),
                z: p(3)
            })
        );
        assert_eq!(
            isosceles_check(&path3(), 1_000, 0),
            Some(Witness::Isosceles {
                x: p(1),
                y: p(2),
                z: p(3)
            })
        );
    }

    #[test]
    fn single_point() {
        let m = DistanceMatrix::from_rows(&[[0.0]]).unwrap();
        assert_eq!(validate(&m).unwrap().verdict, Verdict::Ultrametric);
        assert_eq!(isosceles_check(&m, 10, 0), None);
    }

    #[test]
    fn invalid_cases() {
        let asym = DistanceMatrix::from_rows(&[[0.0, 1.0], [2.0, 0.0]]).unwrap();
        assert_eq!(
            validate(&asym).unwrap().verdict,
            Verdict::Invalid(Witness::Asymmetric { a: p(1), b: p(2) })
        );
        let diag = DistanceMatrix::from_rows(&[[1.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(
            validate(&diag).unwrap().verdict,
            Verdict::Invalid(Witness::NonZeroDiagonal { point: p(1) })
        );
        let tri = DistanceMatrix::from_rows(&[[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]]).unwrap();
        assert_eq!(
            validate(&tri).unwrap().verdict,
            Verdict::Invalid(Witness::Triangle {
                x: p(1),
                y: p(2),
                z: p(3)
            })
        );
    }

    #[test]
    fn pseudo_metric_flag() {
        let m = DistanceMatrix::from_rows(&[[0.0, 0.0, 3.0], [0.0, 0.0, 3.0], [3.0, 3.0, 0.0]]).unwrap();
        assert!(!validate(&m).unwrap().verdict.is_valid());
        let opts = ValidateOptions {
            allow_pseudo: true,
            ..Default::default()
        };
        let v = validate_with(&m, &opts).unwrap();
        assert_eq!(v.verdict, Verdict::Ultrametric);
        assert_eq!(v.warnings, vec![Witness::ZeroDistance { a: p(1), b: p(2) }]);
    }

    #[test]
    fn sampled_mode_above_cap() {
        let opts = ValidateOptions {
            full_cap: 2,
            sample_budget: 500,
            ..Default::default()
        };
        let v = validate_with(&d4(), &opts).unwrap();
        assert_eq!(v.verdict, Verdict::Ultrametric);
        assert!(!v.exhaustive);
        let v = validate_with(&path3(), &opts).unwrap();
        assert!(matches!(v.verdict, Verdict::MetricOnly(_)));
    }

    #[test]
    fn tolerance_accepts_rounding_noise() {
        let e = 1e-13;
        let m = DistanceMatrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 2.0 + e], [2.0, 2.0 + e, 0.0]]).unwrap();
        assert_eq!(validate(&m).unwrap().verdict, Verdict::Ultrametric);
    }

    #[test]
    fn distinct_triples_are_distinct() {
        let mut rng = stream(&[1]);
        for n in 3..8 {
            for _ in 0..200 {
                let (x, y, z) = distinct_triple(&mut rng, n);
                assert!(x != y && y != z && x != z && x.max(y).max(z) < n);
            }
        }
    }
}
