//! Lattice approximation of perpetuities `X = AX + b` with certified error bounds.
//!
//! The iteration ([`iterator`]) pushes a point mass through the discretised
//! fixed-point map on refining lattices `{k/s(n)}`; [`bounds`] turns the
//! contraction of the map into `l_p`, Kolmogorov and density sup-norm
//! certificates for the result.
//!
//! ```
//! use perpetua::{bounds, presets, DiscretisationSchedule, IterationPlan, Pmf};
//!
//! let spec = presets::interval_splitting();
//! let sched = DiscretisationSchedule::polynomial(2);
//! let result = perpetua::iterator::run::<f64>(&IterationPlan::new(spec.clone(), sched, 12)).unwrap();
//! let pmf: Pmf = result.final_pmf;
//! let cert = bounds::optimize_p(&spec, &sched, 12, 1.5, bounds::P_RANGE).unwrap();
//! assert!(perpetua::kolmogorov_vs(&pmf, &|x: f64| 3.0 * x * x - 2.0 * x * x * x) <= cert.bound);
//! ```

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ax1;
pub mod bounds;
pub mod error;
pub mod iterator;
pub mod lattice;
pub mod model;
pub mod oracle;
pub mod quickselect;
pub mod scalar;

pub use error::{Error, Result};
pub use iterator::{IterationPlan, IterationResult};
pub use lattice::{extract_density, kolmogorov_between, kolmogorov_vs, DensityEstimate, LatticePmf};
pub use model::{presets, DiscretisationSchedule, PerpetuitySpec, UMode};
pub use scalar::{MomentScalar, Real};

/// Double-precision lattice PMF.
pub type Pmf = LatticePmf<f64>;
/// Single-precision lattice PMF.
pub type Pmf32 = LatticePmf<f32>;
pub type Density = DensityEstimate<f64>;
pub type Iteration = IterationResult<f64>;
/// Exact rational moments.
pub type Rational = num_rational::BigRational;
