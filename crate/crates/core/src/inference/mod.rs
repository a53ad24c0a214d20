//! MAP fitting of the kernel hyperparameters for one design.

mod objective;
mod optimizer;
mod predict;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use objective::{
    grad_objective, objective_value, Objective, ParamLayout, KERNEL_JITTER, LOG_ELL2_CEIL, LOG_ELL2_FLOOR,
    LOG_VAR_CEIL, LOG_VAR_FLOOR,
};
pub use optimizer::OptimizerKind;
pub use predict::{predict, Prediction};

use crate::error::{Error, Result};
use crate::kernelmath::StandardizedDesign;
use crate::model::{Family, HyperPriors, Hyperparams};

pub const MAX_RESTARTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iters: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Number of optimizer runs; `0` behaves like `1`. Runs after the first
    /// start from a seeded perturbation of the initial point.
    pub restarts: usize,
    pub init_ell2: f64,
    pub init_sigma2: f64,
    pub init_noise_var: f64,
    pub tol_grad: f64,
    pub tol_obj: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            learning_rate: 0.05,
            optimizer: OptimizerKind::AdaptiveMoment,
            restarts: 1,
            init_ell2: 0.1,
            init_sigma2: 1.0,
            init_noise_var: 1.0,
            tol_grad: 1e-5,
            tol_obj: 1e-9,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if self.restarts > MAX_RESTARTS {
            return Err(Error::InvalidConfig(format!("restarts must be at most {MAX_RESTARTS}")));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("init_ell2", self.init_ell2),
            ("init_sigma2", self.init_sigma2),
            ("init_noise_var", self.init_noise_var),
            ("tol_grad", self.tol_grad),
            ("tol_obj", self.tol_obj),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub hp_hat: Hyperparams,
    pub objective: f64,
    pub converged: bool,
    pub iters_used: usize,
    pub grad_norm_final: f64,
    /// Objective at the starting point of the winning run.
    pub initial_objective: f64,
    /// Final objective of every run that finished, in run order.
    pub restart_objectives: Vec<f64>,
}

fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maximizes the log-space objective over `[log sigma2, log ell2, log noise]`
/// and returns the best run.
pub fn fit_map(
    y: &[f64],
    design: &StandardizedDesign,
    family: Family,
    priors: &HyperPriors,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let settings = optimizer::Settings {
        max_iters: cfg.max_iters,
        learning_rate: cfg.learning_rate,
        tol_grad: cfg.tol_grad,
        tol_obj: cfg.tol_obj,
    };
    let runs = cfg.restarts.max(1);
    let mut best: Option<optimizer::Outcome> = None;
    let mut objectives = Vec::with_capacity(runs);
    let mut last_err = None;
    let mut layout = None;
    for r in 0..runs {
        let obj = Objective::new(design.data(), y, family, *priors)?;
        let l = obj.layout();
        layout = Some(l);
        let mut theta0 = l.to_theta(&Hyperparams {
            sigma2: cfg.init_sigma2,
            ell2: vec![cfg.init_ell2; design.ncols()],
            noise_var: Some(cfg.init_noise_var),
        });
        if r > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, r as u64));
            for t in theta0.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *t += z;
            }
        }
        let eval = |th: &[f64]| obj.value_grad(th);
        let out = match cfg.optimizer {
            OptimizerKind::AdaptiveMoment => optimizer::adaptive_moment(&l, theta0, &settings, eval),
            OptimizerKind::QuasiNewton => optimizer::quasi_newton(&l, theta0, &settings, eval),
        };
        match out {
            Ok(o) if o.value.is_finite() => {
                objectives.push(o.value);
                if best.as_ref().is_none_or(|b| o.value > b.value) {
                    best = Some(o);
                }
            }
            Ok(o) => last_err = Some(format!("non-finite objective {}", o.value)),
            Err(e) if e.is_numerical() => last_err = Some(e.to_string()),
            Err(e) => return Err(e),
        }
    }
    let (Some(b), Some(l)) = (best, layout) else {
        return Err(Error::AllRestartsFailed(last_err.unwrap_or_default()));
    };
    Ok(FitResult {
        hp_hat: l.to_hyperparams(&b.theta),
        objective: b.value,
        converged: b.converged,
        iters_used: b.iters,
        grad_norm_final: b.grad_norm,
        initial_objective: b.initial_value,
        restart_objectives: objectives,
    })
}
