//! Deterministic numerical building blocks: standardization, the inverse-RBF
//! covariance, Cholesky solves, PCA, percentiles and correlations.

mod cov;
mod design;
mod pca;
mod simd;
mod stats;

pub(crate) use cov::sqdiff_traces;
pub use cov::{chol_solve_logdet, inverse_rbf_cov, inverse_rbf_cross, CholFactor, CovMatrix, JITTER_MAX, JITTER_START};
pub use design::{standardize, standardize_column, DesignMatrix, Standardization, StandardizedDesign, MIN_COLUMN_SD};
pub use pca::{pca_fit, PcaBasis, DEGENERATE_EIGEN_REL};
pub(crate) use simd::clear_upper_state;
pub use stats::{max_abs_corr, mean, median, pearson, percentile, sample_var};
