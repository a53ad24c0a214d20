//! The nuisance-column selection algorithms: augment the design with a known
//! irrelevant column `M` times, refit, and compare each feature's median
//! inverse length-scale with percentiles of the nuisance column's estimates.

mod nuisance;
mod table;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use nuisance::{derive_seed, make_nuisance, NuisanceKind, NuisanceSource};
pub use table::{
    boxplot_export, decide_active, decide_active_per_feature, q_key, BoxplotDocument, BoxplotMeta, FeatureSummary,
    LengthScaleTable,
};

use crate::error::{Error, Result};
use crate::inference::{fit_map, FitConfig, FitResult};
use crate::kernelmath::{pca_fit, standardize, DesignMatrix, StandardizedDesign};
use crate::model::{Family, HyperPriors};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_Q_LIST: [f64; 3] = [60.0, 80.0, 90.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Number of augmentation iterations.
    #[serde(rename = "M")]
    pub m: usize,
    pub q_list: Vec<f64>,
    pub tau: f64,
    pub family: Family,
    pub fit: FitConfig,
    pub source: NuisanceSource,
}

impl SelectionConfig {
    pub fn new(family: Family, tau: f64, kind: NuisanceKind, seed: u64) -> Self {
        Self {
            m: 20,
            q_list: DEFAULT_Q_LIST.to_vec(),
            tau,
            family,
            fit: FitConfig {
                seed,
                ..FitConfig::default()
            },
            source: NuisanceSource::new(kind, seed),
        }
    }

    pub fn priors(&self) -> HyperPriors {
        HyperPriors::with_tau(self.tau)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidConfig(format!("M must be at least 2, got {}", self.m)));
        }
        if self.q_list.is_empty() {
            return Err(Error::InvalidConfig("q_list is empty".into()));
        }
        for &q in &self.q_list {
            table::check_q(q)?;
        }
        self.priors().validate()?;
        self.fit.validate()
    }
}

/// Outcome of one augmentation iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub m: usize,
    pub converged: bool,
    pub iters_used: usize,
    pub objective: Option<f64>,
    pub grad_norm_final: Option<f64>,
    /// Set when the fit failed and the iteration was dropped from the table.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub schema_version: u32,
    pub algorithm: String,
    /// Median fitted inverse length-scale of every feature.
    pub medians: Vec<f64>,
    pub alpha: BTreeMap<String, f64>,
    pub active: BTreeMap<String, Vec<bool>>,
    /// 1-based indices of the active features for each threshold.
    pub active_indices: BTreeMap<String, Vec<usize>>,
    pub table: LengthScaleTable,
    pub iterations: Vec<IterationRecord>,
    pub config: SelectionConfig,
    pub seed: u64,
}

impl SelectionReport {
    pub fn failed_iterations(&self) -> usize {
        self.iterations.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn boxplot(&self) -> Result<BoxplotDocument> {
        boxplot_export(
            &self.table,
            &self.config.q_list,
            BoxplotMeta {
                seed: self.seed,
                m: self.config.m,
                tau: self.config.tau,
                algorithm: self.algorithm.clone(),
            },
        )
    }
}

/// Runs the selection loop on an already standardized design.
pub fn run_selection_standardized(
    y: &[f64],
    sd: &StandardizedDesign,
    cfg: &SelectionConfig,
) -> Result<SelectionReport> {
    cfg.validate()?;
    if y.len() != sd.nrows() {
        return Err(Error::DimensionMismatch {
            expected: sd.nrows(),
            found: y.len(),
        });
    }
    cfg.family.check_response(y)?;
    let pca = match cfg.source.kind {
        NuisanceKind::PcaTail => {
            let basis = pca_fit(sd)?;
            if cfg.m > basis.usable() {
                return Err(Error::PcaIndexOutOfRange {
                    m: cfg.m,
                    available: basis.usable(),
                });
            }
            Some(basis)
        }
        _ => None,
    };
    let priors = cfg.priors();

    let outcomes: Vec<Result<FitResult>> = (1..=cfg.m)
        .into_par_iter()
        .map(|m| {
            let x0 = make_nuisance(&cfg.source, sd, pca.as_ref(), m)?;
            let aug = sd.augment_front(&x0)?;
            let fit_cfg = FitConfig {
                seed: derive_seed(cfg.fit.seed, m as u64),
                ..cfg.fit.clone()
            };
            fit_map(y, &aug, cfg.family, &priors, &fit_cfg)
        })
        .collect();

    let mut rows = Vec::with_capacity(cfg.m);
    let mut iterations = Vec::with_capacity(cfg.m);
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let m = i + 1;
        match outcome {
            Ok(fit) => {
                iterations.push(IterationRecord {
                    m,
                    converged: fit.converged,
                    iters_used: fit.iters_used,
                    objective: Some(fit.objective),
                    grad_norm_final: Some(fit.grad_norm_final),
                    error: None,
                });
                rows.push(fit.hp_hat.ell2);
            }
            Err(e) if e.is_numerical() => iterations.push(IterationRecord {
                m,
                converged: false,
                iters_used: 0,
                objective: None,
                grad_norm_final: None,
                error: Some(e.to_string()),
            }),
            Err(e) => return Err(e),
        }
    }
    let failed = cfg.m - rows.len();
    if 2 * failed > cfg.m {
        return Err(Error::TooManyFailedFits { failed, total: cfg.m });
    }
    let table = LengthScaleTable::new(rows)?;
    let medians = table.medians();
    let mut alpha = BTreeMap::new();
    let mut active = BTreeMap::new();
    let mut active_indices = BTreeMap::new();
    for &q in &cfg.q_list {
        let a = table.alpha(q)?;
        let flags: Vec<bool> = medians.iter().map(|&m| m >= a).collect();
        let key = q_key(q);
        active_indices.insert(
            key.clone(),
            flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .map(|(k, _)| k + 1)
                .collect(),
        );
        alpha.insert(key.clone(), a);
        active.insert(key, flags);
    }
    Ok(SelectionReport {
        schema_version: SCHEMA_VERSION,
        algorithm: cfg.source.kind.algorithm().to_string(),
        medians,
        alpha,
        active,
        active_indices,
        table,
        iterations,
        config: cfg.clone(),
        seed: cfg.source.seed,
    })
}

/// Standardizes `x` and runs the selection loop.
pub fn run_selection(y: &[f64], x: &DesignMatrix, cfg: &SelectionConfig) -> Result<SelectionReport> {
    let sd = standardize(x)?;
    run_selection_standardized(y, &sd, cfg)
}
