use faer::{Mat, MatRef};

use super::likelihood::Likelihood;
use crate::error::{Error, Result};
use crate::kernelmath::{clear_upper_state, CholFactor};

pub const NEWTON_MAX_ITERS: usize = 100;
pub const NEWTON_GRAD_TOL: f64 = 1e-6;
pub const NEWTON_REL_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 40;

/// Mode of `log p(y | f) - f' C^{-1} f / 2` and the quantities needed around it.
#[derive(Debug)]
pub struct LaplaceMode {
    /// Latent mode `f_hat`.
    pub f: Vec<f64>,
    /// `C^{-1} f_hat`, which equals the likelihood gradient at the mode.
    pub a: Vec<f64>,
    /// `-d^2/df^2 log p(y | f)` at the mode.
    pub w: Vec<f64>,
    pub sqrt_w: Vec<f64>,
    /// Cholesky factor of `B = I + W^{1/2} C W^{1/2}`.
    pub b_factor: CholFactor,
    pub log_lik: f64,
    /// `log p(y | f_hat) - a' f_hat / 2`.
    pub psi: f64,
    /// Penalized objective after every accepted Newton update, starting point first.
    pub trace: Vec<f64>,
}

impl LaplaceMode {
    /// Laplace approximation of `log ∫ p(y | f) N(f; 0, C) df`.
    pub fn log_evidence(&self) -> f64 {
        self.psi - 0.5 * self.b_factor.logdet()
    }

    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

fn matvec(k: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    let col = Mat::from_fn(v.len(), 1, |i, _| v[i]);
    let out = k * &col;
    clear_upper_state();
    out.col_as_slice(0).to_vec()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Newton iteration with step halving (Rasmussen & Williams, Algorithm 3.1,
/// parameterized by `a = C^{-1} f` so `C` itself is never inverted).
///
/// `warm_a` seeds the iteration with a previous `a`; otherwise it starts at `f = 0`.
/// Once the stopping rule fires, one more Newton update is taken so the
/// returned mode is accurate well beyond the stopping tolerance.
pub fn find_mode(k: MatRef<'_, f64>, y: &[f64], lik: Likelihood, warm_a: Option<&[f64]>) -> Result<LaplaceMode> {
    let n = y.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k.nrows(),
        });
    }
    let mut a = match warm_a {
        Some(w) if w.len() == n && w.iter().all(|v| v.is_finite()) => w.to_vec(),
        _ => vec![0.0; n],
    };
    let mut f = matvec(k, &a);
    let mut psi = lik.total(y, &f) - 0.5 * dot(&a, &f);
    if !psi.is_finite() {
        a = vec![0.0; n];
        f = vec![0.0; n];
        psi = lik.total(y, &f);
    }
    let mut trace = vec![psi];
    let mut last_change = f64::INFINITY;
    let mut polishing = false;

    for _ in 0..NEWTON_MAX_ITERS {
        let mut d1 = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n {
            let d = lik.derivs(y[i], f[i]);
            d1[i] = d.d1;
            w[i] = d.w.max(0.0);
        }
        let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let b = Mat::from_fn(n, n, |i, j| {
            let v = sqrt_w[i] * k[(i, j)] * sqrt_w[j];
            if i == j {
                1.0 + v
            } else {
                v
            }
        });
        let b_factor = CholFactor::factor(b.as_ref())?;

        if polishing {
            let log_lik = lik.total(y, &f);
            return Ok(LaplaceMode {
                f,
                a,
                w,
                sqrt_w,
                b_factor,
                log_lik,
                psi,
                trace,
            });
        }
        let grad_inf = d1.iter().zip(&a).map(|(g, ai)| (g - ai).abs()).fold(0.0, f64::max);
        if grad_inf < NEWTON_GRAD_TOL || last_change < NEWTON_REL_TOL {
            polishing = true;
        }

        // a_new = b - W^{1/2} B^{-1} W^{1/2} C b, with b = W f + grad
        let bvec: Vec<f64> = (0..n).map(|i| w[i] * f[i] + d1[i]).collect();
        let kb = matvec(k, &bvec);
        let t: Vec<f64> = (0..n).map(|i| sqrt_w[i] * kb[i]).collect();
        let s = b_factor.solve(&t);
        let a_new: Vec<f64> = (0..n).map(|i| bvec[i] - sqrt_w[i] * s[i]).collect();
        let da: Vec<f64> = a_new.iter().zip(&a).map(|(x, y)| x - y).collect();

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let a_try: Vec<f64> = a.iter().zip(&da).map(|(x, d)| x + step * d).collect();
            let f_try = matvec(k, &a_try);
            let psi_try = lik.total(y, &f_try) - 0.5 * dot(&a_try, &f_try);
            // the polishing step moves psi by less than its rounding error
            let slack = if polishing {
                8.0 * f64::EPSILON * psi.abs().max(1.0)
            } else {
                0.0
            };
            if psi_try.is_finite() && psi_try >= psi - slack {
                last_change = (psi_try - psi).abs() / psi.abs().max(1.0);
                a = a_try;
                f = f_try;
                if psi_try >= psi {
                    trace.push(psi_try);
                }
                psi = psi_try;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no ascent direction left at working precision
            last_change = 0.0;
            polishing = true;
        }
    }
    Err(Error::NewtonDivergence {
        iters: NEWTON_MAX_ITERS,
    })
}
