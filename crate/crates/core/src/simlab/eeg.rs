//! Synthetic subjects × locations × time tensors and a per-slice
//! cross-validation driver that classifies each held-out subject from its
//! sequence of per-slice predictions.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::runs::{longest_run_classify_with, TieBreak};
use crate::error::{Error, Result};
use crate::inference::{fit_map, predict, FitConfig};
use crate::kernelmath::{standardize, DesignMatrix};
use crate::model::{Family, HyperPriors};
use crate::selection::{q_key, run_selection, NuisanceKind, SelectionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegSpec {
    pub subjects: usize,
    pub locations: usize,
    pub slices: usize,
    /// 1-based locations whose signal depends on the subject's class.
    pub active: Vec<usize>,
    /// Shift of the active locations between the two classes.
    pub effect: f64,
    /// Lag-one autocorrelation of the background signal over time.
    pub ar: f64,
    pub seed: u64,
}

impl Default for EegSpec {
    fn default() -> Self {
        Self {
            subjects: 60,
            locations: 10,
            slices: 5,
            active: vec![1, 2, 3],
            effect: 1.0,
            ar: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EegTensor {
    /// One `subjects × locations` design per time slice.
    pub slices: Vec<DesignMatrix>,
    pub labels: Vec<f64>,
    pub truth: Vec<usize>,
}

pub fn generate_eeg(spec: &EegSpec) -> Result<EegTensor> {
    let (n, k, t) = (spec.subjects, spec.locations, spec.slices);
    if n < 4 || k == 0 || t == 0 {
        return Err(Error::InvalidConfig(format!(
            "tensor needs at least 4 subjects, 1 location and 1 slice, got {n}x{k}x{t}"
        )));
    }
    if let Some(&bad) = spec.active.iter().find(|&&a| a == 0 || a > k) {
        return Err(Error::InvalidConfig(format!("active location {bad} outside 1..={k}")));
    }
    if !(spec.ar.abs() < 1.0) {
        return Err(Error::InvalidConfig(format!("|ar| must be < 1, got {}", spec.ar)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    labels.shuffle(&mut rng);
    let innov = (1.0 - spec.ar * spec.ar).sqrt();
    let mut cols = vec![vec![vec![0.0; n]; k]; t];
    for (i, &label) in labels.iter().enumerate() {
        for loc in 0..k {
            let mut e: f64 = StandardNormal.sample(&mut rng);
            let shift = if spec.active.contains(&(loc + 1)) {
                spec.effect * (2.0 * label - 1.0)
            } else {
                0.0
            };
            for slice in cols.iter_mut() {
                slice[loc][i] = e + shift;
                e = spec.ar * e + innov * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let slices = cols
        .iter()
        .map(|c| DesignMatrix::from_columns(c))
        .collect::<Result<_>>()?;
    let mut truth = spec.active.clone();
    truth.sort_unstable();
    truth.dedup();
    Ok(EegTensor { slices, labels, truth })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegCvOptions {
    pub folds: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub tau: f64,
    pub q: f64,
    pub source: NuisanceKind,
    pub fit: FitConfig,
    pub tie: TieBreak,
    pub seed: u64,
    /// Minimum mean Jaccard similarity with the consensus sets for a fold to
    /// count as consistent.
    pub consistency: f64,
}

impl Default for EegCvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            m: 8,
            tau: 2.0,
            q: 80.0,
            source: NuisanceKind::RandomStandardNormal,
            fit: FitConfig {
                max_iters: 200,
                ..FitConfig::default()
            },
            tie: TieBreak::Zero,
            seed: 0,
            consistency: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_subjects: Vec<usize>,
    /// 1-based active locations for each slice.
    pub active: Vec<Vec<usize>>,
    pub predicted: Vec<u8>,
    pub accuracy: f64,
    /// Mean Jaccard similarity of this fold's active sets with the consensus.
    pub agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegCvResult {
    pub folds: Vec<FoldResult>,
    /// Locations active in more than half of the folds, per slice.
    pub consensus: Vec<Vec<usize>>,
    pub consistent_folds: usize,
    pub accuracy: f64,
    pub options: EegCvOptions,
}

fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let a: BTreeSet<_> = a.iter().collect();
    let b: BTreeSet<_> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(&b).count() as f64 / union as f64
    }
}

fn majority(labels: &[f64]) -> u8 {
    let ones = labels.iter().filter(|&&v| v == 1.0).count();
    u8::from(2 * ones > labels.len())
}

/// Per-slice 0/1 predictions for the test subjects using only `active`.
fn slice_predictions(
    x: &DesignMatrix,
    y: &[f64],
    train: &[usize],
    test: &[usize],
    active: &[usize],
    opts: &EegCvOptions,
) -> Result<Vec<u8>> {
    let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    if active.is_empty() {
        return Ok(vec![majority(&y_train); test.len()]);
    }
    let cols: Vec<usize> = active.iter().map(|a| a - 1).collect();
    let xs = x.select_columns(&cols)?;
    let sd = standardize(&xs.select_rows(train)?)?;
    let test_std = sd.apply(&xs.select_rows(test)?)?;
    let priors = HyperPriors::with_tau(opts.tau);
    let fit = fit_map(&y_train, &sd, Family::Bernoulli, &priors, &opts.fit)?;
    let pred = predict(&fit, &sd, &y_train, test_std.as_ref(), Family::Bernoulli)?;
    Ok(pred.response.iter().map(|&r| r as u8).collect())
}

/// `folds`-fold cross-validation: per fold and slice, select locations on the
/// training subjects, predict the held-out subjects from the selected
/// locations, then classify each subject by its longest run of predictions.
pub fn run_eeg_cv(tensor: &EegTensor, opts: &EegCvOptions) -> Result<EegCvResult> {
    let n = tensor.labels.len();
    if opts.folds < 2 || opts.folds > n {
        return Err(Error::InvalidConfig(format!(
            "folds must lie in 2..={n}, got {}",
            opts.folds
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let mut folds = Vec::with_capacity(opts.folds);
    for f in 0..opts.folds {
        let mut test: Vec<usize> = order.iter().copied().skip(f).step_by(opts.folds).collect();
        test.sort_unstable();
        let train: Vec<usize> = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
        let y_train: Vec<f64> = train.iter().map(|&i| tensor.labels[i]).collect();
        let mut active = Vec::with_capacity(tensor.slices.len());
        let mut per_slice = Vec::with_capacity(tensor.slices.len());
        for x in &tensor.slices {
            let mut cfg = SelectionConfig::new(Family::Bernoulli, opts.tau, opts.source, opts.seed);
            cfg.m = opts.m;
            cfg.q_list = vec![opts.q];
            cfg.fit = FitConfig {
                seed: opts.seed,
                ..opts.fit.clone()
            };
            let report = run_selection(&y_train, &x.select_rows(&train)?, &cfg)?;
            let sel = report.active_indices[&q_key(opts.q)].clone();
            per_slice.push(slice_predictions(x, &tensor.labels, &train, &test, &sel, opts)?);
            active.push(sel);
        }
        let predicted: Vec<u8> = (0..test.len())
            .map(|s| {
                let seq: Vec<u8> = per_slice.iter().map(|p| p[s]).collect();
                longest_run_classify_with(&seq, opts.tie)
            })
            .collect::<Result<_>>()?;
        let correct = test
            .iter()
            .zip(&predicted)
            .filter(|(&i, &p)| tensor.labels[i] == f64::from(p))
            .count();
        folds.push(FoldResult {
            fold: f,
            accuracy: correct as f64 / test.len() as f64,
            test_subjects: test,
            active,
            predicted,
            agreement: 0.0,
        });
    }

    let n_slices = tensor.slices.len();
    let consensus: Vec<Vec<usize>> = (0..n_slices)
        .map(|t| {
            let k = tensor.slices[t].ncols();
            (1..=k)
                .filter(|loc| {
                    let votes = folds.iter().filter(|f| f.active[t].contains(loc)).count();
                    2 * votes > folds.len()
                })
                .collect()
        })
        .collect();
    for fold in folds.iter_mut() {
        fold.agreement = (0..n_slices)
            .map(|t| jaccard(&fold.active[t], &consensus[t]))
            .sum::<f64>()
            / n_slices as f64;
    }
    let consistent_folds = folds.iter().filter(|f| f.agreement >= opts.consistency).count();
    let total: usize = folds.iter().map(|f| f.test_subjects.len()).sum();
    let correct: f64 = folds.iter().map(|f| f.accuracy * f.test_subjects.len() as f64).sum();
    Ok(EegCvResult {
        folds,
        consensus,
        consistent_folds,
        accuracy: correct / total as f64,
        options: opts.clone(),
    })
}
