//! Self-exciting point process with marks and time-decaying infectivity
//! (MaSEPTiDE) for retweet cascades.
//!
//! - [`model`]: cascades, parameters, intensity and compensator
//! - [`estimation`]: log-likelihood and Nelder–Mead maximum likelihood
//! - [`gof`]: time-rescaled residuals and the Kolmogorov–Smirnov test
//! - [`prediction`]: mean-intensity equation solved by B-spline collocation
//! - [`simulation`]: cluster-Poisson simulation and Monte-Carlo prediction
//! - [`data_io`]: cascade files and corpora
//! - [`evaluate`]: corpus-scale prediction scoring
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`).

pub mod bspline;
pub mod data_io;
pub mod error;
pub mod estimation;
pub mod evaluate;
pub mod gof;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod prediction;
pub mod quadrature;
pub mod scalar;
pub mod simulation;

pub use error::{Error, Result};
pub use estimation::{fit, log_likelihood, FitResult, SimplexConfig};
pub use gof::{goodness_of_fit, GofReport};
pub use model::{compensator, intensity, mean_impact, Cascade, Event, MarkDistribution, ModelParams};
pub use prediction::{predict_mean_count, ContinuationModel, SolverSettings};
pub use scalar::Scalar;
pub use simulation::{predict_by_simulation, SimConfig};

pub type Cascade64 = Cascade<f64>;
pub type Cascade32 = Cascade<f32>;
pub type Params64 = ModelParams<f64>;
pub type Params32 = ModelParams<f32>;
pub type Continuation64 = ContinuationModel<f64>;
pub type FitResult64 = FitResult<f64>;
