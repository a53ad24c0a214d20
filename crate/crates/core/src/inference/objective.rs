use std::cell::RefCell;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::kernelmath::{clear_upper_state, inverse_rbf_cov, sqdiff_traces, CholFactor, StandardizedDesign};
use crate::model::{find_mode, Family, HyperPriors, Hyperparams};

/// Smallest log inverse length-scale; `exp(-15) ≈ 3.1e-7` counts as zero.
pub const LOG_ELL2_FLOOR: f64 = -15.0;
pub const LOG_ELL2_CEIL: f64 = 12.0;
pub const LOG_VAR_FLOOR: f64 = -12.0;
pub const LOG_VAR_CEIL: f64 = 12.0;

/// Diagonal jitter relative to `sigma2`, part of the kernel itself so that
/// `dC/dlog(sigma2) = C` holds exactly.
pub const KERNEL_JITTER: f64 = 1e-8;

/// Position of each hyperparameter in the unconstrained vector
/// `theta = [log sigma2, log ell2_0, ..., log ell2_{p-1}, log noise_var]`.
///
/// The noise slot exists for every family and stays inert unless the family
/// is Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub n_ell: usize,
    pub gaussian: bool,
}

impl ParamLayout {
    pub fn new(n_ell: usize, family: Family) -> Self {
        Self {
            n_ell,
            gaussian: family.is_gaussian(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_ell + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sigma2(&self) -> usize {
        0
    }

    pub fn ell(&self, k: usize) -> usize {
        1 + k
    }

    pub fn noise(&self) -> usize {
        self.n_ell + 1
    }

    /// Whether slot `i` is optimized at all.
    pub fn is_free(&self, i: usize) -> bool {
        i != self.noise() || self.gaussian
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        if i >= 1 && i <= self.n_ell {
            (LOG_ELL2_FLOOR, LOG_ELL2_CEIL)
        } else {
            (LOG_VAR_FLOOR, LOG_VAR_CEIL)
        }
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (i, t) in theta.iter_mut().enumerate() {
            let (lo, hi) = self.bounds(i);
            *t = t.clamp(lo, hi);
        }
    }

    pub fn to_hyperparams(&self, theta: &[f64]) -> Hyperparams {
        Hyperparams {
            sigma2: theta[0].exp(),
            ell2: theta[1..=self.n_ell].iter().map(|t| t.exp()).collect(),
            noise_var: self.gaussian.then(|| theta[self.noise()].exp()),
        }
    }

    pub fn to_theta(&self, hp: &Hyperparams) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.len());
        theta.push(hp.sigma2.ln());
        theta.extend(hp.ell2.iter().map(|l| l.max(f64::MIN_POSITIVE).ln()));
        theta.push(hp.noise_var.unwrap_or(1.0).ln());
        theta
    }
}

/// Log-space objective of one fit: the exact Gaussian evidence or the Laplace
/// evidence, plus hyper-priors in the original parameterization.
///
/// Keeps the last latent mode to warm-start the next Newton solve, so a
/// single instance must not be shared between threads.
pub struct Objective<'a> {
    x: MatRef<'a, f64>,
    y: &'a [f64],
    family: Family,
    priors: HyperPriors,
    layout: ParamLayout,
    warm: RefCell<Option<Vec<f64>>>,
}

impl<'a> Objective<'a> {
    pub fn new(x: MatRef<'a, f64>, y: &'a [f64], family: Family, priors: HyperPriors) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        family.check_response(y)?;
        priors.validate()?;
        Ok(Self {
            x,
            y,
            family,
            priors,
            layout: ParamLayout::new(x.ncols(), family),
            warm: RefCell::new(None),
        })
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        self.eval(theta, false).map(|(v, _)| v)
    }

    /// Objective and its gradient with respect to `theta`.
    pub fn value_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.eval(theta, true)
    }

    fn eval(&self, theta: &[f64], with_grad: bool) -> Result<(f64, Vec<f64>)> {
        if theta.len() != self.layout.len() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.len(),
                found: theta.len(),
            });
        }
        let hp = self.layout.to_hyperparams(theta);
        let k = inverse_rbf_cov(self.x, hp.sigma2, &hp.ell2, KERNEL_JITTER * hp.sigma2)?.into_mat();
        let (value, mut grad) = if self.family.is_gaussian() {
            self.gaussian_terms(&k, &hp, with_grad)?
        } else {
            self.laplace_terms(&k, &hp, with_grad)?
        };
        let value = value + hp.log_prior(&self.priors)?;
        if with_grad {
            self.add_prior_grad(theta, &hp, &mut grad);
        }
        Ok((value, grad))
    }

    fn add_prior_grad(&self, theta: &[f64], hp: &Hyperparams, grad: &mut [f64]) {
        let l = self.layout;
        if let Some(p) = self.priors.sigma2 {
            grad[l.sigma2()] += p.dlog_dtheta(theta[l.sigma2()]);
        }
        if self.priors.tau > 0.0 {
            for (k, ell) in hp.ell2.iter().enumerate() {
                grad[l.ell(k)] -= self.priors.tau * ell;
            }
        }
        if let (true, Some(p)) = (l.gaussian, self.priors.noise) {
            grad[l.noise()] += p.dlog_dtheta(theta[l.noise()]);
        }
    }

    /// Gradient entries for the kernel parameters given the symmetric matrix
    /// `m` with `d value / d theta_j = 1/2 tr(m dK/dtheta_j)`.
    fn kernel_trace_grad(&self, m: &Mat<f64>, k: &Mat<f64>, hp: &Hyperparams, grad: &mut [f64]) {
        let n = k.nrows();
        let mk = Mat::from_fn(n, n, |i, j| m[(i, j)] * k[(i, j)]);
        let l = self.layout;
        let mut tr = 0.0;
        for j in 0..n {
            tr += mk.col_as_slice(j).iter().sum::<f64>();
        }
        grad[l.sigma2()] = 0.5 * tr;
        let traces = sqdiff_traces(self.x, mk.as_ref());
        for (kk, t) in traces.iter().enumerate() {
            // dK/dlog ell2_k = -1/2 ell2_k D_k ∘ K
            grad[l.ell(kk)] = -0.25 * hp.ell2[kk] * t;
        }
    }

    fn gaussian_terms(&self, k: &Mat<f64>, hp: &Hyperparams, with_grad: bool) -> Result<(f64, Vec<f64>)> {
        let n = self.y.len();
        let noise = hp.noise_var.expect("gaussian layout carries noise");
        let mut ct = k.clone();
        for i in 0..n {
            ct[(i, i)] += noise;
        }
        let factor = CholFactor::factor(ct.as_ref())?;
        let alpha = factor.solve(self.y);
        let quad: f64 = alpha.iter().zip(self.y).map(|(a, b)| a * b).sum();
        let value = -0.5 * quad - 0.5 * factor.logdet() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        let mut grad = vec![0.0; self.layout.len()];
        if !with_grad {
            return Ok((value, grad));
        }
        let ci = factor.inverse();
        let m = Mat::from_fn(n, n, |i, j| alpha[i] * alpha[j] - ci[(i, j)]);
        self.kernel_trace_grad(&m, k, hp, &mut grad);
        let tr_ci: f64 = (0..n).map(|i| ci[(i, i)]).sum();
        let aa: f64 = alpha.iter().map(|a| a * a).sum();
        grad[self.layout.noise()] = 0.5 * noise * (aa - tr_ci);
        Ok((value, grad))
    }

    /// Laplace evidence and its total derivative, including the implicit
    /// dependence of the mode on the hyperparameters (Rasmussen & Williams,
    /// Algorithm 5.1).
    fn laplace_terms(&self, k: &Mat<f64>, hp: &Hyperparams, with_grad: bool) -> Result<(f64, Vec<f64>)> {
        let n = self.y.len();
        let lik = hp.likelihood(self.family)?;
        let warm = self.warm.borrow().clone();
        let mode = find_mode(k.as_ref(), self.y, lik, warm.as_deref())?;
        *self.warm.borrow_mut() = Some(mode.a.clone());
        let value = mode.log_evidence();
        let mut grad = vec![0.0; self.layout.len()];
        if !with_grad {
            return Ok((value, grad));
        }

        let sw = &mode.sqrt_w;
        let binv = mode.b_factor.inverse();
        let r = Mat::from_fn(n, n, |i, j| sw[i] * binv[(i, j)] * sw[j]);
        let kr = k * &r;
        clear_upper_state();
        let mut d1 = vec![0.0; n];
        let mut s2 = vec![0.0; n];
        for i in 0..n {
            let d = lik.derivs(self.y[i], mode.f[i]);
            d1[i] = d.d1;
            let mut krk = 0.0;
            for j in 0..n {
                krk += kr[(i, j)] * k[(j, i)];
            }
            // derivative of the log-determinant term through W(f_hat)
            s2[i] = 0.5 * (k[(i, i)] - krk) * d.d3;
        }

        // explicit part: 1/2 a' dK a - 1/2 tr(R dK)
        let a = &d1;
        let m = Mat::from_fn(n, n, |i, j| a[i] * a[j] - r[(i, j)]);
        self.kernel_trace_grad(&m, k, hp, &mut grad);

        // implicit part: s2' (I - K R) dK a
        let p = self.layout.n_ell;
        let mut bmat = Mat::<f64>::zeros(n, p + 1);
        let ka = k * Mat::from_fn(n, 1, |i, _| a[i]);
        let ax = Mat::from_fn(n, p, |i, kk| a[i] * self.x[(i, kk)]);
        let ax2 = Mat::from_fn(n, p, |i, kk| a[i] * self.x[(i, kk)] * self.x[(i, kk)]);
        let kax = k * &ax;
        let kax2 = k * &ax2;
        for i in 0..n {
            bmat[(i, 0)] = ka[(i, 0)];
            for kk in 0..p {
                let xi = self.x[(i, kk)];
                // (D_k ∘ K) a
                let dka = xi * xi * ka[(i, 0)] - 2.0 * xi * kax[(i, kk)] + kax2[(i, kk)];
                bmat[(i, kk + 1)] = -0.5 * hp.ell2[kk] * dka;
            }
        }
        let s3 = &bmat - &kr * &bmat;
        let l = self.layout;
        for j in 0..=p {
            let implicit: f64 = (0..n).map(|i| s2[i] * s3[(i, j)]).sum();
            let slot = if j == 0 { l.sigma2() } else { l.ell(j - 1) };
            grad[slot] += implicit;
        }
        Ok((value, grad))
    }
}

/// Log-space gradient of the fitting objective at `hp`, ordered as
/// `[log sigma2, log ell2_0.., log noise_var]` (noise entry zero for
/// non-Gaussian families).
pub fn grad_objective(
    y: &[f64],
    design: &StandardizedDesign,
    family: Family,
    priors: &HyperPriors,
    hp: &Hyperparams,
) -> Result<Vec<f64>> {
    hp.validate()?;
    if hp.ell2.len() != design.ncols() {
        return Err(Error::DimensionMismatch {
            expected: design.ncols(),
            found: hp.ell2.len(),
        });
    }
    let obj = Objective::new(design.data(), y, family, *priors)?;
    let theta = obj.layout().to_theta(hp);
    obj.value_grad(&theta).map(|(_, g)| g)
}

/// The fitting objective itself at `hp` (evidence plus hyper-priors).
pub fn objective_value(
    y: &[f64],
    design: &StandardizedDesign,
    family: Family,
    priors: &HyperPriors,
    hp: &Hyperparams,
) -> Result<f64> {
    hp.validate()?;
    let obj = Objective::new(design.data(), y, family, *priors)?;
    obj.value(&obj.layout().to_theta(hp))
}
