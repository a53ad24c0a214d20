use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use super::objective::KERNEL_JITTER;
use super::FitResult;
use crate::error::{Error, Result};
use crate::kernelmath::{clear_upper_state, inverse_rbf_cov, inverse_rbf_cross, CholFactor, StandardizedDesign};
use crate::model::{find_mode, Family};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Posterior mean of the latent function at each test point.
    pub latent_mean: Vec<f64>,
    /// Gaussian: the latent mean; Bernoulli: class 0/1; Poisson: `exp(latent_mean)`.
    pub response: Vec<f64>,
}

/// Predicts at the rows of `test`, which must already be standardized with
/// the training means and scales.
pub fn predict(
    fit: &FitResult,
    train: &StandardizedDesign,
    y_train: &[f64],
    test: MatRef<'_, f64>,
    family: Family,
) -> Result<Prediction> {
    let hp = &fit.hp_hat;
    hp.validate()?;
    let p = train.ncols();
    if hp.ell2.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: hp.ell2.len(),
        });
    }
    if test.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: test.ncols(),
        });
    }
    if y_train.len() != train.nrows() {
        return Err(Error::DimensionMismatch {
            expected: train.nrows(),
            found: y_train.len(),
        });
    }
    family.check_response(y_train)?;
    let n = y_train.len();
    let mut k = inverse_rbf_cov(train.data(), hp.sigma2, &hp.ell2, KERNEL_JITTER * hp.sigma2)?.into_mat();
    let weights = match family {
        Family::Gaussian => {
            let noise = hp.likelihood(family).map(|_| hp.noise_var.unwrap_or(0.0))?;
            for i in 0..n {
                k[(i, i)] += noise;
            }
            CholFactor::factor(k.as_ref())?.solve(y_train)
        }
        _ => {
            // at the mode, C^{-1} f_hat equals the likelihood gradient
            find_mode(k.as_ref(), y_train, hp.likelihood(family)?, None)?.a
        }
    };
    let ks = inverse_rbf_cross(test, train.data(), hp.sigma2, &hp.ell2)?;
    let mean = &ks * Mat::from_fn(n, 1, |i, _| weights[i]);
    clear_upper_state();
    let latent_mean = mean.col_as_slice(0).to_vec();
    let response = latent_mean
        .iter()
        .map(|&m| match family {
            Family::Gaussian => m,
            Family::Bernoulli => f64::from(u8::from(m >= 0.0)),
            Family::Poisson => m.exp(),
        })
        .collect();
    Ok(Prediction { latent_mean, response })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernelmath::{standardize, DesignMatrix};
    use crate::model::Hyperparams;

    fn fit_with(hp: Hyperparams) -> FitResult {
        FitResult {
            hp_hat: hp,
            objective: 0.0,
            converged: true,
            iters_used: 0,
            grad_norm_final: 0.0,
            initial_objective: 0.0,
            restart_objectives: vec![0.0],
        }
    }

    fn design() -> StandardizedDesign {
        standardize(
            &DesignMatrix::from_rows(&[vec![0.1, 2.0], vec![1.3, -1.0], vec![-0.7, 0.4], vec![2.2, 0.9]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_interpolates_as_noise_vanishes() {
        let sd = design();
        let y = [0.3, -1.2, 0.8, 2.0];
        let fit = fit_with(Hyperparams {
            sigma2: 1.0,
            ell2: vec![1.0, 0.5],
            noise_var: Some(1e-10),
        });
        let pred = predict(&fit, &sd, &y, sd.data(), Family::Gaussian).unwrap();
        for (p, t) in pred.response.iter().zip(y) {
            assert!((p - t).abs() < 1e-5, "{p} vs {t}");
        }
    }

    #[test]
    fn feature_blind_kernel_predicts_a_constant() {
        let sd = design();
        let y = [0.3, -1.2, 0.8, 2.0];
        let (s2, nv) = (1.5, 0.4);
        let fit = fit_with(Hyperparams {
            sigma2: s2,
            ell2: vec![0.0, 0.0],
            noise_var: Some(nv),
        });
        let test = Mat::from_fn(3, 2, |i, j| (i as f64) - 0.5 * j as f64);
        let pred = predict(&fit, &sd, &y, test.as_ref(), Family::Gaussian).unwrap();
        // C = s2 11' (+ tiny jitter): mean = s2 1'y / (nv + n s2)
        let want = s2 * y.iter().sum::<f64>() / (nv + 4.0 * s2);
        for p in &pred.response {
            assert!((p - want).abs() < 1e-6);
        }
    }

    #[test]
    fn classification_returns_labels() {
        let sd = design();
        let y = [1.0, 0.0, 1.0, 0.0];
        let fit = fit_with(Hyperparams {
            sigma2: 2.0,
            ell2: vec![0.3, 0.3],
            noise_var: None,
        });
        let pred = predict(&fit, &sd, &y, sd.data(), Family::Bernoulli).unwrap();
        assert!(pred.response.iter().all(|&r| r == 0.0 || r == 1.0));
        for (r, m) in pred.response.iter().zip(&pred.latent_mean) {
            assert_eq!(*r == 1.0, *m >= 0.0);
        }
    }

    #[test]
    fn wrong_test_width_is_rejected() {
        let sd = design();
        let fit = fit_with(Hyperparams {
            sigma2: 1.0,
            ell2: vec![1.0, 1.0],
            noise_var: Some(0.1),
        });
        let test = Mat::<f64>::zeros(2, 3);
        assert_eq!(
            predict(&fit, &sd, &[0.0; 4], test.as_ref(), Family::Gaussian).unwrap_err(),
            Error::DimensionMismatch { expected: 2, found: 3 }
        );
    }
}
