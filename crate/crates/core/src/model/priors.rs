use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-normal prior: `log v ~ N(logmean, logsd^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalPrior {
    pub logmean: f64,
    pub logsd: f64,
}

impl LogNormalPrior {
    pub const fn new(logmean: f64, logsd: f64) -> Self {
        Self { logmean, logsd }
    }

    pub fn log_density(&self, v: f64) -> Result<f64> {
        log_prior_lognormal(v, self.logmean, self.logsd)
    }

    /// Derivative of `log_density(exp(theta))` with respect to `theta`.
    /// There is no change-of-variables term: the density stays in the
    /// original parameterization.
    pub(crate) fn dlog_dtheta(&self, theta: f64) -> f64 {
        -1.0 - (theta - self.logmean) / (self.logsd * self.logsd)
    }
}

/// Prior configuration for one GP fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPriors {
    /// Rate of the exponential prior on every inverse length-scale;
    /// `0` switches the prior off.
    pub tau: f64,
    pub sigma2: Option<LogNormalPrior>,
    /// Only used by the Gaussian family.
    pub noise: Option<LogNormalPrior>,
}

/// `LN(0, 2)`, with 2 the standard deviation of `log v`.
pub const DEFAULT_LOGNORMAL: LogNormalPrior = LogNormalPrior::new(0.0, 2.0);

impl HyperPriors {
    pub fn with_tau(tau: f64) -> Self {
        Self {
            tau,
            sigma2: Some(DEFAULT_LOGNORMAL),
            noise: Some(DEFAULT_LOGNORMAL),
        }
    }

    /// Only the exponential prior; no variance priors.
    pub fn tau_only(tau: f64) -> Self {
        Self {
            tau,
            sigma2: None,
            noise: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidConfig(format!("tau must be >= 0, got {}", self.tau)));
        }
        for p in [self.sigma2, self.noise].into_iter().flatten() {
            if !(p.logsd > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "log-normal sd must be > 0, got {}",
                    p.logsd
                )));
            }
        }
        Ok(())
    }
}

/// Log density of the exponential prior on every entry of `ell2`:
/// `len * log(tau) - tau * sum(ell2)`, or `0` when `tau == 0` (flat).
pub fn log_prior_ell2(ell2: &[f64], tau: f64) -> Result<f64> {
    if let Some(k) = ell2.iter().position(|&l| !(l >= 0.0)) {
        return Err(Error::NegativeLengthScale(k));
    }
    if tau < 0.0 {
        return Err(Error::InvalidConfig(format!("tau must be >= 0, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    Ok(ell2.len() as f64 * tau.ln() - tau * ell2.iter().sum::<f64>())
}

/// Log-normal log density at `v`, including the `-log v` Jacobian.
pub fn log_prior_lognormal(v: f64, logmean: f64, logsd: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::NonPositiveValue(v));
    }
    if !(logsd > 0.0) {
        return Err(Error::NonPositiveValue(logsd));
    }
    let z = (v.ln() - logmean) / logsd;
    Ok(-0.5 * (2.0 * std::f64::consts::PI).ln() - logsd.ln() - v.ln() - 0.5 * z * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exponential_examples() {
        assert!((log_prior_ell2(&[0.0], 4.0).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((log_prior_ell2(&[1.0], 1.0).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(log_prior_ell2(&[3.0, 0.2], 0.0).unwrap(), 0.0);
        assert_eq!(
            log_prior_ell2(&[0.1, -0.2], 1.0).unwrap_err(),
            Error::NegativeLengthScale(1)
        );
    }

    #[test]
    fn lognormal_examples() {
        let c = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((log_prior_lognormal(1.0, 0.0, 1.0).unwrap() - c).abs() < 1e-15);
        assert!((log_prior_lognormal(1f64.exp(), 1.0, 1.0).unwrap() - (c - 1.0)).abs() < 1e-14);
        assert_eq!(
            log_prior_lognormal(0.0, 0.0, 1.0).unwrap_err(),
            Error::NonPositiveValue(0.0)
        );
    }

    #[test]
    fn lognormal_theta_derivative() {
        let p = LogNormalPrior::new(0.3, 1.7);
        let h = 1e-6;
        for theta in [-2.0, 0.0, 1.5] {
            let fd =
                (p.log_density(f64::exp(theta + h)).unwrap() - p.log_density(f64::exp(theta - h)).unwrap()) / (2.0 * h);
            assert!((fd - p.dlog_dtheta(theta)).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn exponential_prior_is_linear_with_slope_minus_tau(
            ell in prop::collection::vec(0f64..5.0, 1..6),
            tau in 0.01f64..10.0,
            idx in 0usize..6,
            delta in 0f64..3.0,
        ) {
            let k = idx % ell.len();
            let mut bumped = ell.clone();
            bumped[k] += delta;
            let diff = log_prior_ell2(&bumped, tau).unwrap() - log_prior_ell2(&ell, tau).unwrap();
            prop_assert!((diff + tau * delta).abs() < 1e-9 * (1.0 + tau * delta));
        }
    }
}
