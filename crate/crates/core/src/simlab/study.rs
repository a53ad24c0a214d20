use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::designs::{generate, SimDesign, SimTag};
use crate::error::{Error, Result};
use crate::inference::FitConfig;
use crate::selection::{q_key, run_selection, NuisanceKind, SelectionConfig, SCHEMA_VERSION};

/// One column of a study table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub source: NuisanceKind,
    pub tau: f64,
    pub q: f64,
}

impl GridCell {
    pub fn new(source: NuisanceKind, tau: f64, q: f64) -> Self {
        Self { source, tau, q }
    }

    /// Column label such as `random/tau=4/q=80`.
    pub fn label(&self) -> String {
        format!("{}/tau={}/q={}", self.source.algorithm(), self.tau, q_key(self.q))
    }
}

/// Cross product of sources, prior rates and thresholds.
pub fn grid(sources: &[NuisanceKind], taus: &[f64], qs: &[f64]) -> Vec<GridCell> {
    let mut cells = Vec::with_capacity(sources.len() * taus.len() * qs.len());
    for &s in sources {
        for &t in taus {
            for &q in qs {
                cells.push(GridCell::new(s, t, q));
            }
        }
    }
    cells
}

/// Repetition count and sample size of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyProfile {
    /// 50 repetitions at the published sample size.
    Paper,
    /// 25 repetitions at the published sample size.
    Desk,
    /// 10 repetitions at half the published sample size.
    #[default]
    Ci,
}

impl StudyProfile {
    pub fn reps(self) -> usize {
        match self {
            StudyProfile::Paper => 50,
            StudyProfile::Desk => 25,
            StudyProfile::Ci => 10,
        }
    }

    pub fn design(self, tag: SimTag, seed: u64) -> SimDesign {
        let (n, _) = tag.shape();
        match self {
            StudyProfile::Ci => SimDesign::with_n(tag, n / 2, seed),
            _ => SimDesign::paper(tag, seed),
        }
    }
}

impl std::str::FromStr for StudyProfile {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            "ci" => Ok(Self::Ci),
            other => Err(format!("unknown profile '{other}' (paper, desk or ci)")),
        }
    }
}

/// Settings shared by every selection run of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyOptions {
    #[serde(rename = "M")]
    pub m: usize,
    pub fit: FitConfig,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            m: 20,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: GridCell,
    pub label: String,
    /// Repetitions whose selection run succeeded.
    pub reps_used: usize,
    /// Discovery proportion of each feature, features in order.
    pub proportions: Vec<f64>,
    /// Mean proportion over the truly inactive features.
    pub inactive_aggregate: f64,
}

impl CellResult {
    /// Proportion for the 1-based feature `k`.
    pub fn feature(&self, k: usize) -> f64 {
        self.proportions[k - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub source: NuisanceKind,
    pub tau: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub schema_version: u32,
    pub design: SimDesign,
    pub reps: usize,
    pub base_seed: u64,
    pub truth: Vec<usize>,
    pub options: StudyOptions,
    pub cells: Vec<CellResult>,
    pub failures: Vec<RepFailure>,
}

impl StudyResult {
    pub fn cell(&self, source: NuisanceKind, tau: f64, q: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.cell.source == source && c.cell.tau == tau && c.cell.q == q)
    }

    /// Rows are `x1..xK` then `inactive_aggregate`, one column per grid cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature");
        for c in &self.cells {
            out.push(',');
            out.push_str(&c.label);
        }
        out.push('\n');
        for k in 0..self.design.k {
            out.push_str(&format!("x{}", k + 1));
            for c in &self.cells {
                out.push_str(&format!(",{}", c.proportions[k]));
            }
            out.push('\n');
        }
        out.push_str("inactive_aggregate");
        for c in &self.cells {
            out.push_str(&format!(",{}", c.inactive_aggregate));
        }
        out.push('\n');
        out
    }
}

fn group_key(cell: &GridCell) -> (NuisanceKind, u64) {
    (cell.source, cell.tau.to_bits())
}

type RepOutcome = Vec<std::result::Result<BTreeMap<String, Vec<bool>>, String>>;

/// Runs `reps` repetitions of `design` over `grid` with default options.
pub fn run_study(design: &SimDesign, reps: usize, grid: &[GridCell], base_seed: u64) -> Result<StudyResult> {
    run_study_with(design, reps, grid, base_seed, &StudyOptions::default())
}

/// Repetition `r` draws its data and seeds its selection runs with
/// `base_seed ^ r`. Cells sharing a source and prior rate share their fits.
pub fn run_study_with(
    design: &SimDesign,
    reps: usize,
    grid: &[GridCell],
    base_seed: u64,
    opts: &StudyOptions,
) -> Result<StudyResult> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    if grid.is_empty() {
        return Err(Error::InvalidConfig("study grid is empty".into()));
    }
    let mut groups: Vec<((NuisanceKind, u64), Vec<f64>)> = Vec::new();
    for cell in grid {
        let key = group_key(cell);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, qs)) => {
                if !qs.contains(&cell.q) {
                    qs.push(cell.q)
                }
            }
            None => groups.push((key, vec![cell.q])),
        }
    }
    let family = design.tag.family();
    let configs: Vec<SelectionConfig> = groups
        .iter()
        .map(|&((source, tau_bits), ref qs)| {
            let mut cfg = SelectionConfig::new(family, f64::from_bits(tau_bits), source, 0);
            cfg.m = opts.m;
            cfg.q_list = qs.clone();
            cfg.fit = opts.fit.clone();
            cfg.validate().map(|_| cfg)
        })
        .collect::<Result<_>>()?;

    let outcomes: Vec<Result<RepOutcome>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = base_seed ^ r as u64;
            let data = generate(&SimDesign { seed, ..*design })?;
            configs
                .iter()
                .map(|base| {
                    let mut cfg = base.clone();
                    cfg.fit.seed = seed;
                    cfg.source.seed = seed;
                    match run_selection(&data.y, &data.x, &cfg) {
                        Ok(rep) => Ok(Ok(rep.active)),
                        Err(e) if e.is_numerical() => Ok(Err(e.to_string())),
                        Err(e) => Err(e),
                    }
                })
                .collect()
        })
        .collect();

    let k = design.k;
    let mut hits: Vec<Vec<usize>> = vec![vec![0; k]; grid.len()];
    let mut used = vec![0usize; grid.len()];
    let mut failures = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        for (g, res) in outcome?.into_iter().enumerate() {
            let (key, _) = &groups[g];
            match res {
                Ok(active) => {
                    for (ci, cell) in grid.iter().enumerate() {
                        if group_key(cell) != *key {
                            continue;
                        }
                        used[ci] += 1;
                        for (h, &a) in hits[ci].iter_mut().zip(&active[&q_key(cell.q)]) {
                            *h += usize::from(a);
                        }
                    }
                }
                Err(error) => failures.push(RepFailure {
                    rep: r,
                    source: key.0,
                    tau: f64::from_bits(key.1),
                    error,
                }),
            }
        }
    }

    let truth = design.tag.truth();
    let inactive: Vec<usize> = (1..=k).filter(|j| !truth.contains(j)).collect();
    let cells = grid
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            if used[ci] == 0 {
                return Err(Error::TooManyFailedFits {
                    failed: reps,
                    total: reps,
                });
            }
            let proportions: Vec<f64> = hits[ci].iter().map(|&h| h as f64 / used[ci] as f64).collect();
            let inactive_aggregate = if inactive.is_empty() {
                0.0
            } else {
                inactive.iter().map(|&j| proportions[j - 1]).sum::<f64>() / inactive.len() as f64
            };
            Ok(CellResult {
                cell: *cell,
                label: cell.label(),
                reps_used: used[ci],
                proportions,
                inactive_aggregate,
            })
        })
        .collect::<Result<_>>()?;

    Ok(StudyResult {
        schema_version: SCHEMA_VERSION,
        design: *design,
        reps,
        base_seed,
        truth,
        options: opts.clone(),
        cells,
        failures,
    })
}
