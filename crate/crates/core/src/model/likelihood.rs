use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response family tag, as chosen in configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Identity link, `y ~ N(f, noise_var)`.
    Gaussian,
    /// Logit link, `y ∈ {0, 1}`.
    Bernoulli,
    /// Log link, `y ∈ {0, 1, 2, ...}`.
    Poisson,
}

impl Family {
    pub fn is_gaussian(self) -> bool {
        matches!(self, Family::Gaussian)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
        }
    }

    /// Checks that every response value is admissible for this family.
    pub fn check_response(self, y: &[f64]) -> Result<()> {
        for (i, &v) in y.iter().enumerate() {
            let ok = match self {
                Family::Gaussian => v.is_finite(),
                Family::Bernoulli => v == 0.0 || v == 1.0,
                Family::Poisson => v.is_finite() && v >= 0.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(Error::DomainMismatch(format!(
                    "y[{i}] = {v} is not a valid {} response",
                    self.name()
                )));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" | "regression" => Ok(Family::Gaussian),
            "bernoulli" | "binary" | "logit" | "classification" => Ok(Family::Bernoulli),
            "poisson" | "count" => Ok(Family::Poisson),
            other => Err(Error::InvalidConfig(format!("unknown likelihood family '{other}'"))),
        }
    }
}

/// A fully parameterized observation model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Likelihood {
    GaussianIdentity { noise_var: f64 },
    BernoulliLogit,
    PoissonLog,
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn ln_factorial(k: f64) -> f64 {
    statrs::function::factorial::ln_factorial(k as u64)
}

/// First derivative, negated second derivative and third derivative of
/// `log p(y | f)` with respect to `f`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Derivs {
    pub d1: f64,
    pub w: f64,
    pub d3: f64,
}

impl Likelihood {
    pub fn family(&self) -> Family {
        match self {
            Likelihood::GaussianIdentity { .. } => Family::Gaussian,
            Likelihood::BernoulliLogit => Family::Bernoulli,
            Likelihood::PoissonLog => Family::Poisson,
        }
    }

    fn check(&self) -> Result<()> {
        if let Likelihood::GaussianIdentity { noise_var } = *self {
            if !(noise_var > 0.0) {
                return Err(Error::NonPositiveValue(noise_var));
            }
        }
        Ok(())
    }

    /// `log p(y_i | f_i)` for one observation; the response is assumed valid.
    pub(crate) fn point(&self, y: f64, f: f64) -> f64 {
        match *self {
            Likelihood::GaussianIdentity { noise_var } => {
                let r = y - f;
                -0.5 * (2.0 * std::f64::consts::PI * noise_var).ln() - r * r / (2.0 * noise_var)
            }
            Likelihood::BernoulliLogit => y * f - softplus(f),
            Likelihood::PoissonLog => y * f - f.exp() - ln_factorial(y),
        }
    }

    pub(crate) fn derivs(&self, y: f64, f: f64) -> Derivs {
        match *self {
            Likelihood::GaussianIdentity { noise_var } => Derivs {
                d1: (y - f) / noise_var,
                w: 1.0 / noise_var,
                d3: 0.0,
            },
            Likelihood::BernoulliLogit => {
                let p = logistic(f);
                let w = p * (1.0 - p);
                Derivs {
                    d1: y - p,
                    w,
                    d3: -w * (1.0 - 2.0 * p),
                }
            }
            Likelihood::PoissonLog => {
                let m = f.exp();
                Derivs {
                    d1: y - m,
                    w: m,
                    d3: -m,
                }
            }
        }
    }

    pub(crate) fn total(&self, y: &[f64], f: &[f64]) -> f64 {
        y.iter().zip(f).map(|(&yi, &fi)| self.point(yi, fi)).sum()
    }
}

/// `sum_i log p(y_i | f_i)`.
pub fn log_lik(y: &[f64], f: &[f64], lik: Likelihood) -> Result<f64> {
    if y.len() != f.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: f.len(),
        });
    }
    lik.check()?;
    lik.family().check_response(y)?;
    Ok(lik.total(y, f))
}
