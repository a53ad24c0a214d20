use faer::{Mat, MatRef, Side};

use super::design::StandardizedDesign;
use crate::error::{Error, Result};

/// Components with eigenvalue below this fraction of the largest one carry no
/// variance (rank deficiency, `K >= n`) and are not used as nuisance columns.
pub const DEGENERATE_EIGEN_REL: f64 = 1e-10;

/// Principal directions of a standardized design, in descending-variance order.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    components: Mat<f64>,
    eigenvalues: Vec<f64>,
    transformed: Mat<f64>,
}

impl PcaBasis {
    /// `K × K`, one principal direction per column.
    pub fn components(&self) -> MatRef<'_, f64> {
        self.components.as_ref()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `n × K` scores, `data · components`.
    pub fn transformed(&self) -> MatRef<'_, f64> {
        self.transformed.as_ref()
    }

    pub fn score(&self, j: usize) -> &[f64] {
        self.transformed.col_as_slice(j)
    }

    /// Number of leading components with non-negligible variance.
    pub fn usable(&self) -> usize {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0);
        self.eigenvalues
            .iter()
            .take_while(|&&e| e > DEGENERATE_EIGEN_REL * top)
            .count()
    }
}

/// Eigendecomposition of the sample covariance of the standardized design.
///
/// Each component is signed so that its largest-magnitude entry is positive.
pub fn pca_fit(sd: &StandardizedDesign) -> Result<PcaBasis> {
    let x = sd.data();
    let (n, k) = (x.nrows(), x.ncols());
    if n < 2 {
        return Err(Error::InvalidDesign("PCA needs at least 2 rows".into()));
    }
    let mut cov = x.transpose() * x;
    let denom = (n - 1) as f64;
    for i in 0..k {
        for j in 0..=i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]) / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let evd = cov
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::DecompositionFailure(format!("{e:?}")))?;
    let u = evd.U();
    let s = evd.S();

    // faer returns ascending eigenvalues
    let order: Vec<usize> = (0..k).rev().collect();
    let eigenvalues: Vec<f64> = order.iter().map(|&j| s[j].max(0.0)).collect();
    let mut components = Mat::<f64>::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        let col = u.col(src);
        let mut pivot = 0;
        for i in 1..k {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..k {
            components[(i, dst)] = sign * col[i];
        }
    }
    let transformed = x * &components;
    Ok(PcaBasis {
        components,
        eigenvalues,
        transformed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernelmath::design::{standardize, DesignMatrix};
    use crate::kernelmath::stats::pearson;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_design(n: usize, k: usize, seed: u64) -> StandardizedDesign {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        standardize(&DesignMatrix::from_columns(&cols).unwrap()).unwrap()
    }

    #[test]
    fn orthonormal_sorted_and_energy_preserving() {
        let sd = random_design(40, 6, 3);
        let p = pca_fit(&sd).unwrap();
        let g = p.components().transpose() * p.components();
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-8);
            }
        }
        assert!(p.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        let total: f64 = p.eigenvalues().iter().sum();
        assert!((total - 6.0).abs() < 1e-6);
        for a in 0..6 {
            for b in 0..a {
                assert!(pearson(p.score(a), p.score(b)).unwrap().abs() < 1e-8);
            }
        }
    }

    #[test]
    fn duplicated_column_gives_null_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..30).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..30).map(|_| StandardNormal.sample(&mut rng)).collect();
        let sd = standardize(&DesignMatrix::from_columns(&[a.clone(), b, a]).unwrap()).unwrap();
        let p = pca_fit(&sd).unwrap();
        assert!(p.eigenvalues()[2] <= 1e-10);
        assert_eq!(p.usable(), 2);
    }

    #[test]
    fn sign_convention() {
        let sd = random_design(25, 4, 11);
        let p = pca_fit(&sd).unwrap();
        for j in 0..4 {
            let col = p.components().col(j);
            let big = (0..4).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs())).unwrap();
            assert!(col[big] > 0.0);
        }
    }
}
