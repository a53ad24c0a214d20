//! Densities of the GP model: likelihood families, hyper-priors, the log
//! joint density, the exact Gaussian marginal and the Laplace objective.

mod laplace;
mod likelihood;
mod priors;

use serde::{Deserialize, Serialize};

pub use laplace::{find_mode, LaplaceMode, NEWTON_GRAD_TOL, NEWTON_MAX_ITERS, NEWTON_REL_TOL};
pub use likelihood::{log_lik, logistic, softplus, Family, Likelihood};
pub use priors::{log_prior_ell2, log_prior_lognormal, HyperPriors, LogNormalPrior, DEFAULT_LOGNORMAL};

use crate::error::{Error, Result};
use crate::kernelmath::{CholFactor, CovMatrix};

/// Kernel and noise hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub sigma2: f64,
    /// Inverse length-scales; in an augmented fit index 0 is the nuisance column.
    pub ell2: Vec<f64>,
    /// Observation noise variance, Gaussian family only.
    pub noise_var: Option<f64>,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::NonPositiveVariance);
        }
        if let Some(k) = self.ell2.iter().position(|&l| !(l >= 0.0)) {
            return Err(Error::NegativeLengthScale(k));
        }
        if let Some(v) = self.noise_var {
            if !(v > 0.0) {
                return Err(Error::NonPositiveValue(v));
            }
        }
        Ok(())
    }

    pub fn likelihood(&self, family: Family) -> Result<Likelihood> {
        Ok(match family {
            Family::Gaussian => {
                let noise_var = self
                    .noise_var
                    .ok_or_else(|| Error::InvalidConfig("Gaussian family needs a noise variance".into()))?;
                if !(noise_var > 0.0) {
                    return Err(Error::NonPositiveValue(noise_var));
                }
                Likelihood::GaussianIdentity { noise_var }
            }
            Family::Bernoulli => Likelihood::BernoulliLogit,
            Family::Poisson => Likelihood::PoissonLog,
        })
    }

    /// Sum of the hyper-prior log densities (variance, noise, length-scales).
    pub fn log_prior(&self, priors: &HyperPriors) -> Result<f64> {
        let mut total = log_prior_ell2(&self.ell2, priors.tau)?;
        if let Some(p) = priors.sigma2 {
            total += p.log_density(self.sigma2)?;
        }
        if let (Some(p), Some(v)) = (priors.noise, self.noise_var) {
            total += p.log_density(v)?;
        }
        Ok(total)
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Log joint density up to the `(2π)^{n/2}` constant of the GP prior:
/// `log p(y | f) - log|C|/2 - f' C^{-1} f / 2 + hyper-priors`.
pub fn log_joint(
    y: &[f64],
    f: &[f64],
    hp: &Hyperparams,
    priors: &HyperPriors,
    c: &CovMatrix,
    family: Family,
) -> Result<f64> {
    check_len(c.dim(), y.len())?;
    check_len(c.dim(), f.len())?;
    let lik = hp.likelihood(family)?;
    let ll = log_lik(y, f, lik)?;
    let factor = CholFactor::new(c)?;
    let alpha = factor.solve(f);
    let quad: f64 = alpha.iter().zip(f).map(|(a, b)| a * b).sum();
    Ok(ll - 0.5 * factor.logdet() - 0.5 * quad + hp.log_prior(priors)?)
}

/// Exact log evidence of the Gaussian model plus hyper-priors:
/// `log N(y; 0, C + noise_var I) + hyper-priors`.
pub fn gaussian_log_marginal(y: &[f64], hp: &Hyperparams, priors: &HyperPriors, c: &CovMatrix) -> Result<f64> {
    check_len(c.dim(), y.len())?;
    Family::Gaussian.check_response(y)?;
    let noise = match hp.likelihood(Family::Gaussian)? {
        Likelihood::GaussianIdentity { noise_var } => noise_var,
        _ => unreachable!(),
    };
    let mut ct = c.mat().to_owned();
    for i in 0..y.len() {
        ct[(i, i)] += noise;
    }
    let factor = CholFactor::factor(ct.as_ref())?;
    let alpha = factor.solve(y);
    let quad: f64 = alpha.iter().zip(y).map(|(a, b)| a * b).sum();
    let n = y.len() as f64;
    Ok(-0.5 * quad - 0.5 * factor.logdet() - 0.5 * n * (2.0 * std::f64::consts::PI).ln() + hp.log_prior(priors)?)
}

/// Laplace-approximate objective for a non-Gaussian family.
#[derive(Debug, Clone)]
pub struct LaplaceFit {
    pub value: f64,
    pub f_hat: Vec<f64>,
    pub w: Vec<f64>,
    pub newton_iters: usize,
}

/// `log p(y | f_hat) - f_hat' C^{-1} f_hat / 2 - log|I + W^{1/2} C W^{1/2}| / 2 + hyper-priors`.
pub fn laplace_objective(
    y: &[f64],
    hp: &Hyperparams,
    priors: &HyperPriors,
    family: Family,
    c: &CovMatrix,
) -> Result<LaplaceFit> {
    check_len(c.dim(), y.len())?;
    if family.is_gaussian() {
        return Err(Error::InvalidConfig(
            "the Laplace objective is for non-Gaussian families".into(),
        ));
    }
    family.check_response(y)?;
    let lik = hp.likelihood(family)?;
    let mode = find_mode(c.mat(), y, lik, None)?;
    Ok(LaplaceFit {
        value: mode.log_evidence() + hp.log_prior(priors)?,
        newton_iters: mode.iterations(),
        f_hat: mode.f,
        w: mode.w,
    })
}
