//! Variable selection for Gaussian-process regression and classification.
//!
//! The model uses an inverse-RBF kernel whose per-feature inverse
//! length-scales `ell2_k` carry exponential (LASSO-like) priors. A known
//! irrelevant nuisance column is appended to the design, the model is refit
//! `M` times with fresh nuisance columns, and a feature is declared active
//! when the median of its fitted `ell2_k` reaches the `q`-th percentile of
//! the nuisance column's fitted values.
//!
//! * [`kernelmath`]: standardization, covariance, Cholesky, PCA, percentiles
//! * [`model`]: likelihoods, priors, log joint, Gaussian and Laplace evidences
//! * [`inference`]: MAP fitting of hyperparameters and prediction
//! * [`selection`]: the two nuisance-column selection algorithms
//! * [`simlab`]: simulation designs and repetition studies

pub mod error;
pub mod inference;
pub mod kernelmath;
pub mod model;
pub mod selection;
pub mod simlab;

pub use error::{Error, Result};
