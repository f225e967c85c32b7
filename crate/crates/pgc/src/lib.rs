//! Heavy-tailed marginals joined by a Gaussian copula: model construction,
//! exact simulation, closed-form joint-tail asymptotics driven by a small
//! quadratic program, Hill-based estimation of the marginal tail indices and
//! the Gaussian correlation matrix, and the asymptotic-normality machinery
//! for confidence intervals. Monte Carlo oracles for everything analytic
//! live in [`diagnostics`].
//!
//! The usual round trip:
//!
//! ```
//! use pgc::{CorrelationMatrix, MarginalSpec, PgcModel, RandomStream};
//! use pgc::estimation::{fit_pgc, KPolicy};
//!
//! let model = PgcModel::new(
//!     vec![
//!         MarginalSpec::pareto(2.0).unwrap(),
//!         MarginalSpec::pareto(3.0).unwrap(),
//!     ],
//!     CorrelationMatrix::from_rho(0.3).unwrap(),
//! ).unwrap();
//! let sample = model.sample(10_000, &RandomStream::new(42, 0)).unwrap();
//! let report = fit_pgc(&sample.columns(), &KPolicy::Fixed(1000)).unwrap();
//! let pair = &report.pairs[0];
//! assert!((pair.rho_hat.unwrap() - 0.3).abs() < 0.2);
//! ```

pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod io;
pub mod linalg;
pub mod marginals;
pub mod model;
pub mod normal;
pub mod qp;
pub mod rng;
mod special;
#[doc(hidden)]
pub mod testutil;

pub use error::{Error, Result};
pub use linalg::{CorrelationMatrix, Matrix};
pub use marginals::{Family, MarginalSpec};
pub use model::{PgcModel, SampleMatrix};
pub use qp::{QpSolution, Regime, TailAsymptotic};
pub use rng::RandomStream;
