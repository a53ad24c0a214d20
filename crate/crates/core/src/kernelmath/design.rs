use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns whose sample standard deviation is at or below this are rejected.
pub const MIN_COLUMN_SD: f64 = 1e-12;

/// Raw `n × K` design matrix, one row per observation.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    data: Mat<f64>,
}

impl DesignMatrix {
    pub fn new(data: Mat<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::InvalidDesign(format!(
                "need at least 2 observations, got {}",
                data.nrows()
            )));
        }
        if data.ncols() < 1 {
            return Err(Error::InvalidDesign("need at least 1 feature".into()));
        }
        for j in 0..data.ncols() {
            if let Some(i) = data.col_as_slice(j).iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidDesign(format!("non-finite entry at row {i}, column {j}")));
            }
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: bad.len(),
            });
        }
        Self::new(Mat::from_fn(n, k, |i, j| rows[i][j]))
    }

    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let k = cols.len();
        let n = cols.first().map_or(0, Vec::len);
        if let Some(bad) = cols.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        Self::new(Mat::from_fn(n, k, |i, j| cols[j][i]))
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.data.as_ref()
    }

    pub fn column(&self, k: usize) -> &[f64] {
        self.data.col_as_slice(k)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.ncols()).map(|k| self.data[(i, k)]).collect()
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.ncols()) {
            return Err(Error::DimensionMismatch {
                expected: self.ncols(),
                found: bad + 1,
            });
        }
        Self::new(Mat::from_fn(self.nrows(), cols.len(), |i, j| self.data[(i, cols[j])]))
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::new(Mat::from_fn(rows.len(), self.ncols(), |i, j| self.data[(rows[i], j)]))
    }
}

/// Per-column centring and scaling learned from a training design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Applies the stored statistics to new observations (e.g. a test set).
    pub fn apply(&self, raw: &DesignMatrix) -> Result<Mat<f64>> {
        if raw.ncols() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                found: raw.ncols(),
            });
        }
        Ok(Mat::from_fn(raw.nrows(), raw.ncols(), |i, k| {
            (raw.as_mat()[(i, k)] - self.means[k]) / self.scales[k]
        }))
    }
}

/// Column-standardized design: every column has mean 0 and sample sd 1.
#[derive(Debug, Clone)]
pub struct StandardizedDesign {
    data: Mat<f64>,
    stats: Standardization,
}

impl StandardizedDesign {
    pub fn data(&self) -> MatRef<'_, f64> {
        self.data.as_ref()
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn col_means(&self) -> &[f64] {
        &self.stats.means
    }

    pub fn col_scales(&self) -> &[f64] {
        &self.stats.scales
    }

    pub fn stats(&self) -> &Standardization {
        &self.stats
    }

    pub fn column(&self, k: usize) -> &[f64] {
        self.data.col_as_slice(k)
    }

    /// `D_k[i, j] = (x_ik - x_jk)^2`, built on demand.
    pub fn sqdiff(&self, k: usize) -> Mat<f64> {
        let col = self.column(k);
        Mat::from_fn(self.nrows(), self.nrows(), |i, j| {
            let d = col[i] - col[j];
            d * d
        })
    }

    /// Returns `(x0, X)`: the design with an already-standardized column
    /// prepended at index 0.
    pub fn augment_front(&self, x0: &[f64]) -> Result<Self> {
        if x0.len() != self.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.nrows(),
                found: x0.len(),
            });
        }
        let data = Mat::from_fn(self.nrows(), self.ncols() + 1, |i, j| {
            if j == 0 {
                x0[i]
            } else {
                self.data[(i, j - 1)]
            }
        });
        let mut means = Vec::with_capacity(self.ncols() + 1);
        means.push(0.0);
        means.extend_from_slice(&self.stats.means);
        let mut scales = Vec::with_capacity(self.ncols() + 1);
        scales.push(1.0);
        scales.extend_from_slice(&self.stats.scales);
        Ok(Self {
            data,
            stats: Standardization { means, scales },
        })
    }

    /// Standardizes new raw observations with this design's statistics.
    pub fn apply(&self, raw: &DesignMatrix) -> Result<Mat<f64>> {
        self.stats.apply(raw)
    }
}

/// Centres and scales one column to mean 0, sample sd 1 (divisor `n - 1`).
///
/// Returns the standardized values together with the mean and sd that were
/// removed. `index` only labels the error.
pub fn standardize_column(values: &[f64], index: usize) -> Result<(Vec<f64>, f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidDesign(format!("need at least 2 observations, got {n}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut centred: Vec<f64> = values.iter().map(|v| v - mean).collect();
    // second pass removes the rounding residue of the first mean
    let resid = centred.iter().sum::<f64>() / n as f64;
    centred.iter_mut().for_each(|v| *v -= resid);
    let ss: f64 = centred.iter().map(|v| v * v).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    if !(sd > MIN_COLUMN_SD) {
        return Err(Error::ConstantColumn(index));
    }
    centred.iter_mut().for_each(|v| *v /= sd);
    Ok((centred, mean + resid, sd))
}

pub fn standardize(x: &DesignMatrix) -> Result<StandardizedDesign> {
    let (n, k) = (x.nrows(), x.ncols());
    let mut data = Mat::<f64>::zeros(n, k);
    let mut means = Vec::with_capacity(k);
    let mut scales = Vec::with_capacity(k);
    for j in 0..k {
        let (col, mean, sd) = standardize_column(x.column(j), j)?;
        data.col_as_slice_mut(j).copy_from_slice(&col);
        means.push(mean);
        scales.push(sd);
    }
    Ok(StandardizedDesign {
        data,
        stats: Standardization { means, scales },
    })
}

/// Row-major copy of a matrix, used by the pairwise kernel loops.
#[cfg(test)]
mod tests {
    use super::*;

    fn mean_sd(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
        (m, (ss / (n - 1.0)).sqrt())
    }

    #[test]
    fn one_two_three() {
        let x = DesignMatrix::from_columns(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let sd = standardize(&x).unwrap();
        let col = sd.column(0);
        for (got, want) in col.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(sd.col_means(), &[2.0]);
        assert_eq!(sd.col_scales(), &[1.0]);
    }

    #[test]
    fn constant_column_rejected() {
        let x = DesignMatrix::from_columns(&[vec![1.0, 2.0, 4.0], vec![5.0; 3]]).unwrap();
        assert_eq!(standardize(&x).unwrap_err(), Error::ConstantColumn(1));
    }

    #[test]
    fn idempotent() {
        let x =
            DesignMatrix::from_columns(&[vec![0.3, -1.2, 4.0, 2.2, 0.0], vec![10.0, 11.0, 9.5, 10.2, 12.0]]).unwrap();
        let once = standardize(&x).unwrap();
        let again = standardize(&DesignMatrix::new(once.data().to_owned()).unwrap()).unwrap();
        for j in 0..2 {
            let (m, s) = mean_sd(once.column(j));
            assert!(m.abs() <= 1e-10 && (s - 1.0).abs() <= 1e-10);
            for (a, b) in once.column(j).iter().zip(again.column(j)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sqdiff_shape() {
        let x = DesignMatrix::from_columns(&[vec![1.0, 2.0, 4.0, 8.0]]).unwrap();
        let sd = standardize(&x).unwrap();
        let d = sd.sqdiff(0);
        for i in 0..4 {
            assert_eq!(d[(i, i)], 0.0);
            for j in 0..4 {
                assert_eq!(d[(i, j)], d[(j, i)]);
                assert!(d[(i, j)] >= 0.0);
            }
        }
    }

    #[test]
    fn test_rows_use_training_stats() {
        let x = DesignMatrix::from_columns(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let sd = standardize(&x).unwrap();
        let test = DesignMatrix::from_columns(&[vec![4.0, 2.0]]).unwrap();
        let z = sd.apply(&test).unwrap();
        assert_eq!(z[(0, 0)], 2.0);
        assert_eq!(z[(1, 0)], 0.0);
    }

    #[test]
    fn rejects_non_finite_and_tiny() {
        assert!(DesignMatrix::from_columns(&[vec![1.0]]).is_err());
        assert!(DesignMatrix::from_columns(&[vec![1.0, f64::NAN]]).is_err());
    }
}
