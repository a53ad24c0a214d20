use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernelmath::{median, percentile};

/// Fitted inverse length-scales, one row per successful augmentation
/// iteration. Column 0 is the nuisance column, columns `1..=K` the features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthScaleTable {
    rows: Vec<Vec<f64>>,
}

impl LengthScaleTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map(Vec::len).ok_or(Error::EmptyInput)?;
        if width < 2 {
            return Err(Error::InvalidDesign(
                "a table needs the nuisance column and at least one feature".into(),
            ));
        }
        for row in &rows {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    found: row.len(),
                });
            }
            if let Some(j) = row.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::NegativeLengthScale(j));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len() - 1
    }

    /// Column `j` of the table (0 = nuisance).
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn nuisance(&self) -> Vec<f64> {
        self.column(0)
    }

    /// Median of every feature column, features in order.
    pub fn medians(&self) -> Vec<f64> {
        (1..=self.n_features())
            .map(|j| median(&self.column(j)).expect("non-empty table"))
            .collect()
    }

    /// `q`-th percentile of the nuisance column.
    pub fn alpha(&self, q: f64) -> Result<f64> {
        check_q(q)?;
        percentile(&self.nuisance(), q)
    }
}

pub(crate) fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 100.0) {
        return Err(Error::InvalidConfig(format!("q must lie in (0, 100), got {q}")));
    }
    Ok(())
}

/// Map key for a threshold: `"60"` for whole numbers, otherwise the shortest
/// decimal form.
pub fn q_key(q: f64) -> String {
    if q.fract() == 0.0 {
        format!("{}", q as i64)
    } else {
        format!("{q}")
    }
}

/// Feature `k` is active when the median of its column is at least the
/// `q`-th percentile of the nuisance column; equality counts as active.
pub fn decide_active(table: &LengthScaleTable, q: f64) -> Result<Vec<bool>> {
    let alpha = table.alpha(q)?;
    Ok(table.medians().into_iter().map(|m| m >= alpha).collect())
}

/// As [`decide_active`], with a separate threshold for each feature.
pub fn decide_active_per_feature(table: &LengthScaleTable, qs: &[f64]) -> Result<Vec<bool>> {
    if qs.len() != table.n_features() {
        return Err(Error::DimensionMismatch {
            expected: table.n_features(),
            found: qs.len(),
        });
    }
    let nuisance = table.nuisance();
    table
        .medians()
        .into_iter()
        .zip(qs)
        .map(|(m, &q)| {
            check_q(q)?;
            Ok(m >= percentile(&nuisance, q)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    /// 1-based feature index.
    pub index: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotMeta {
    pub seed: u64,
    #[serde(rename = "M")]
    pub m: usize,
    pub tau: f64,
    pub algorithm: String,
}

/// Plot data for per-feature box plots with the threshold lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotDocument {
    pub features: Vec<FeatureSummary>,
    pub alpha: BTreeMap<String, f64>,
    pub meta: BoxplotMeta,
}

fn five_numbers(index: usize, values: &[f64]) -> Result<FeatureSummary> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(FeatureSummary {
        index,
        min,
        q25: percentile(values, 25.0)?,
        median: median(values)?,
        q75: percentile(values, 75.0)?,
        max,
    })
}

pub fn boxplot_export(table: &LengthScaleTable, q_list: &[f64], meta: BoxplotMeta) -> Result<BoxplotDocument> {
    let features = (1..=table.n_features())
        .map(|j| five_numbers(j, &table.column(j)))
        .collect::<Result<Vec<_>>>()?;
    let alpha = q_list
        .iter()
        .map(|&q| Ok((q_key(q), table.alpha(q)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(BoxplotDocument { features, alpha, meta })
}
