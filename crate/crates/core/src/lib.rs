//! Constant-query approximate 1-median selection in ultrametric spaces.
//!
//! The crate is organised around four pieces:
//!
//! * [`metric`]: distance matrices, dendrograms, the query-counting
//!   [`DistanceOracle`](metric::DistanceOracle) and axiom validators.
//! * [`generators`]: seeded ultrametric and perturbed-metric instances.
//! * [`median`]: exact brute force, the sampling algorithm and the helpers
//!   it is built from.
//! * [`harness`]: seeded batch experiments with CSV/JSON reports.
//!
//! ```
//! use ultramedian::metric::{DistanceMatrix, DistanceOracle};
//! use ultramedian::median::{approx_median, ApproxParams, Fallback};
//!
//! let m = DistanceMatrix::from_rows(&[
//!     [0.0, 1.0, 4.0, 4.0],
//!     [1.0, 0.0, 4.0, 4.0],
//!     [4.0, 4.0, 0.0, 2.0],
//!     [4.0, 4.0, 2.0, 0.0],
//! ]).unwrap();
//! let oracle = DistanceOracle::new(m);
//! let params = ApproxParams::new(0.25).with_fallback(Fallback::ForceSample);
//! let report = approx_median(&oracle, &params, true).unwrap();
//! assert_eq!(report.queries_used, oracle.query_count());
//! assert!(report.ratio.unwrap() >= 1.0);
//! ```

pub mod error;
pub mod generators;
pub mod harness;
pub mod median;
pub mod metric;
pub mod rng;

pub use error::{Error, Result};
