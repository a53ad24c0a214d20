use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::objective::ParamLayout;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[serde(alias = "adam")]
    AdaptiveMoment,
    #[serde(alias = "lbfgs", alias = "l-bfgs")]
    QuasiNewton,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "adaptive-moment" | "adam" => Ok(Self::AdaptiveMoment),
            "quasi-newton" | "lbfgs" | "l-bfgs" => Ok(Self::QuasiNewton),
            other => Err(format!("unknown optimizer '{other}'")),
        }
    }
}

pub(crate) struct Settings {
    pub max_iters: usize,
    pub learning_rate: f64,
    pub tol_grad: f64,
    pub tol_obj: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub theta: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub converged: bool,
    pub iters: usize,
    pub grad_norm: f64,
}

/// Gradient with entries zeroed where the box constraint is active and the
/// gradient points outward, or the slot is not optimized.
fn projected(layout: &ParamLayout, theta: &[f64], g: &[f64]) -> Vec<f64> {
    g.iter()
        .enumerate()
        .map(|(i, &gi)| {
            if !layout.is_free(i) {
                return 0.0;
            }
            let (lo, hi) = layout.bounds(i);
            if (theta[i] <= lo && gi < 0.0) || (theta[i] >= hi && gi > 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn plateau(prev: f64, cur: f64, tol: f64) -> bool {
    (cur - prev).abs() <= tol * (1.0 + cur.abs())
}

/// Projected Adam ascent in log space. Returns the best iterate seen.
pub(crate) fn adaptive_moment<F>(layout: &ParamLayout, theta0: Vec<f64>, s: &Settings, mut eval: F) -> Result<Outcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let d = theta0.len();
    let mut theta = theta0;
    layout.clamp(&mut theta);
    let (v0, g0) = eval(&theta)?;
    let mut best = Outcome {
        theta: theta.clone(),
        value: v0,
        initial_value: v0,
        converged: false,
        iters: 0,
        grad_norm: norm(&projected(layout, &theta, &g0)),
    };
    let mut m = vec![0.0; d];
    let mut v = vec![0.0; d];
    let (mut value, mut grad) = (v0, g0);
    let mut iters = 0;
    let mut converged = false;
    for t in 1..=s.max_iters {
        let pg = projected(layout, &theta, &grad);
        if norm(&pg) <= s.tol_grad {
            converged = true;
            break;
        }
        let (c1, c2) = (1.0 - B1.powi(t as i32), 1.0 - B2.powi(t as i32));
        for i in 0..d {
            if !layout.is_free(i) {
                continue;
            }
            m[i] = B1 * m[i] + (1.0 - B1) * grad[i];
            v[i] = B2 * v[i] + (1.0 - B2) * grad[i] * grad[i];
            theta[i] += s.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
        }
        layout.clamp(&mut theta);
        let prev = value;
        iters = t;
        match eval(&theta) {
            Ok(vg) => (value, grad) = vg,
            Err(e) if e.is_numerical() => break,
            Err(e) => return Err(e),
        }
        if value > best.value {
            best.theta.clone_from(&theta);
            best.value = value;
            best.grad_norm = norm(&projected(layout, &theta, &grad));
        }
        if plateau(prev, value, s.tol_obj) && norm(&projected(layout, &theta, &grad)) <= s.tol_grad.sqrt() {
            converged = true;
            break;
        }
    }
    best.iters = iters;
    // a stopping rule met at a worse iterate says nothing about the returned one
    best.converged = (converged && best.theta == theta) || best.grad_norm <= s.tol_grad;
    Ok(best)
}

/// Projected limited-memory BFGS ascent with backtracking along the
/// projection arc.
pub(crate) fn quasi_newton<F>(layout: &ParamLayout, theta0: Vec<f64>, s: &Settings, mut eval: F) -> Result<Outcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    const MEMORY: usize = 10;
    const ARMIJO: f64 = 1e-4;
    const MAX_STEP: f64 = 2.0;
    let d = theta0.len();
    let mut theta = theta0;
    layout.clamp(&mut theta);
    let (mut value, mut grad) = eval(&theta)?;
    let initial_value = value;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iters = 0;
    let mut converged = false;

    for t in 1..=s.max_iters {
        let pg = projected(layout, &theta, &grad);
        if norm(&pg) <= s.tol_grad {
            converged = true;
            break;
        }
        // two-loop recursion on the minimization problem -value
        let mut q: Vec<f64> = pg.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (sv, yv, rho) in hist.iter().rev() {
            let a = rho * dot(sv, &q);
            for i in 0..d {
                q[i] -= a * yv[i];
            }
            alphas.push(a);
        }
        if let Some((sv, yv, _)) = hist.back() {
            let gamma = dot(sv, yv) / dot(yv, yv);
            q.iter_mut().for_each(|x| *x *= gamma);
        }
        for ((sv, yv, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(yv, &q);
            for i in 0..d {
                q[i] += (a - b) * sv[i];
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|x| -x).collect();
        for i in 0..d {
            if pg[i] == 0.0 {
                dir[i] = 0.0;
            }
        }
        if dot(&dir, &pg) <= 0.0 {
            hist.clear();
            dir = pg.clone();
        }
        let dn = norm(&dir);
        let mut step = if hist.is_empty() { (1.0 / dn).min(1.0) } else { 1.0 };
        if step * dn > MAX_STEP {
            step = MAX_STEP / dn;
        }

        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, di)| t + step * di).collect();
            layout.clamp(&mut trial);
            let moved: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
            match eval(&trial) {
                Ok((tv, tg)) if tv.is_finite() && tv >= value + ARMIJO * dot(&pg, &moved) => {
                    accepted = Some((trial, tv, tg, moved));
                    break;
                }
                Ok(_) => {}
                Err(e) if e.is_numerical() => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        let Some((trial, tv, tg, sv)) = accepted else {
            converged = norm(&pg) <= s.tol_grad.sqrt();
            break;
        };
        // curvature pair for the minimization problem
        let yv: Vec<f64> = tg.iter().zip(&grad).map(|(a, b)| -(a - b)).collect();
        let sy = dot(&sv, &yv);
        if sy > 1e-12 * norm(&sv) * norm(&yv) {
            if hist.len() == MEMORY {
                hist.pop_front();
            }
            hist.push_back((sv, yv, 1.0 / sy));
        }
        let prev = value;
        theta = trial;
        value = tv;
        grad = tg;
        iters = t;
        if plateau(prev, value, s.tol_obj) {
            converged = true;
            break;
        }
    }
    let grad_norm = norm(&projected(layout, &theta, &grad));
    Ok(Outcome {
        theta,
        value,
        initial_value,
        converged: converged || grad_norm <= s.tol_grad,
        iters,
        grad_norm,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;

    fn quad(theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        // concave with maximum at (1, -2, 0.5, ...)
        let target = [1.0, -2.0, 0.5, 3.0];
        let v = -theta
            .iter()
            .zip(target)
            .enumerate()
            .map(|(i, (t, c))| (i as f64 + 1.0) * (t - c).powi(2))
            .sum::<f64>();
        let g = theta
            .iter()
            .zip(target)
            .enumerate()
            .map(|(i, (t, c))| -2.0 * (i as f64 + 1.0) * (t - c))
            .collect();
        Ok((v, g))
    }

    fn settings() -> Settings {
        Settings {
            max_iters: 2000,
            learning_rate: 0.05,
            tol_grad: 1e-7,
            tol_obj: 1e-15,
        }
    }

    #[test]
    fn both_optimizers_find_interior_maximum() {
        let layout = ParamLayout::new(2, Family::Gaussian);
        let adam = adaptive_moment(&layout, vec![0.0; 4], &settings(), quad).unwrap();
        let qn = quasi_newton(&layout, vec![0.0; 4], &settings(), quad).unwrap();
        for out in [adam, qn] {
            assert!(out.value >= out.initial_value);
            assert!((out.theta[0] - 1.0).abs() < 1e-3, "{:?}", out.theta);
            assert!((out.theta[1] + 2.0).abs() < 1e-3);
            assert!((out.theta[3] - 3.0).abs() < 1e-3);
        }
    }

    #[test]
    fn bounds_are_respected_and_frozen_slot_untouched() {
        // slot 1 wants to go to -20, below the floor
        let f = |t: &[f64]| {
            let v = -(t[0] - 1.0).powi(2) - (t[1] + 20.0).powi(2) - (t[2] - 4.0).powi(2);
            Ok((v, vec![-2.0 * (t[0] - 1.0), -2.0 * (t[1] + 20.0), -2.0 * (t[2] - 4.0)]))
        };
        let layout = ParamLayout::new(1, Family::Bernoulli);
        for out in [
            adaptive_moment(&layout, vec![0.0; 3], &settings(), f).unwrap(),
            quasi_newton(&layout, vec![0.0; 3], &settings(), f).unwrap(),
        ] {
            assert_eq!(out.theta[1], super::super::objective::LOG_ELL2_FLOOR);
            assert_eq!(out.theta[2], 0.0);
            assert!(out.converged);
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("adaptive-moment".parse(), Ok(OptimizerKind::AdaptiveMoment));
        assert_eq!("quasi-newton".parse(), Ok(OptimizerKind::QuasiNewton));
        assert!("sgd".parse::<OptimizerKind>().is_err());
    }
}
