use faer::linalg::solvers::{DenseSolveCore, Llt, Solve};
use faer::{Mat, MatRef, Side};

use super::simd::clear_upper_state;
use crate::error::{Error, Result};

/// First extra jitter tried when a factorization fails, relative to the
/// mean diagonal.
pub const JITTER_START: f64 = 1e-8;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-2;

/// Symmetric covariance matrix together with the jitter already on its
/// diagonal.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    mat: Mat<f64>,
    jitter: f64,
}

impl CovMatrix {
    /// Wraps an arbitrary symmetric matrix; `jitter` is added to the diagonal.
    pub fn from_mat(mut mat: Mat<f64>, jitter: f64) -> Result<Self> {
        let n = mat.nrows();
        if mat.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: mat.ncols(),
            });
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (mat[(i, j)], mat[(j, i)]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidDesign(format!("covariance not symmetric at ({i}, {j})")));
                }
                mat[(j, i)] = a;
            }
            mat[(i, i)] += jitter;
        }
        Ok(Self { mat, jitter })
    }

    pub fn mat(&self) -> MatRef<'_, f64> {
        self.mat.as_ref()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn into_mat(self) -> Mat<f64> {
        self.mat
    }
}

fn check_kernel_params(sigma2: f64, ell2: &[f64]) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::NonPositiveVariance);
    }
    if let Some(k) = ell2.iter().position(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::NegativeLengthScale(k));
    }
    Ok(())
}

/// Inverse-RBF covariance over the rows of `x`:
/// `C[i, j] = sigma2 * exp(-0.5 * sum_k ell2[k] * (x_ik - x_jk)^2) + jitter * [i == j]`.
pub fn inverse_rbf_cov(x: MatRef<'_, f64>, sigma2: f64, ell2: &[f64], jitter: f64) -> Result<CovMatrix> {
    check_kernel_params(sigma2, ell2)?;
    if ell2.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            found: ell2.len(),
        });
    }
    let n = x.nrows();
    let d2 = weighted_sqdist(x, x, ell2);
    clear_upper_state();
    let mut c = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in j + 1..n {
            let v = sigma2 * (-0.5 * d2[(i, j)]).exp();
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
        c[(j, j)] = sigma2 + jitter;
    }
    Ok(CovMatrix { mat: c, jitter })
}

/// Cross-covariance between the rows of `xa` (rows of the result) and `xb`.
pub fn inverse_rbf_cross(xa: MatRef<'_, f64>, xb: MatRef<'_, f64>, sigma2: f64, ell2: &[f64]) -> Result<Mat<f64>> {
    check_kernel_params(sigma2, ell2)?;
    let k = ell2.len();
    if xa.ncols() != k || xb.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: if xa.ncols() != k { xa.ncols() } else { xb.ncols() },
        });
    }
    let d2 = weighted_sqdist(xa, xb, ell2);
    clear_upper_state();
    Ok(Mat::from_fn(xa.nrows(), xb.nrows(), |i, j| {
        sigma2 * (-0.5 * d2[(i, j)]).exp()
    }))
}

/// `D[i, j] = sum_k ell2[k] (a_ik - b_jk)^2`, expanded into one matrix product.
fn weighted_sqdist(a: MatRef<'_, f64>, b: MatRef<'_, f64>, ell2: &[f64]) -> Mat<f64> {
    let root: Vec<f64> = ell2.iter().map(|l| l.sqrt()).collect();
    let sa = Mat::from_fn(a.nrows(), a.ncols(), |i, k| a[(i, k)] * root[k]);
    let sb = Mat::from_fn(b.nrows(), b.ncols(), |i, k| b[(i, k)] * root[k]);
    let norms = |m: &Mat<f64>| -> Vec<f64> {
        let mut out = vec![0.0; m.nrows()];
        for k in 0..m.ncols() {
            for (o, v) in out.iter_mut().zip(m.col_as_slice(k)) {
                *o += v * v;
            }
        }
        out
    };
    let (na, nb) = (norms(&sa), norms(&sb));
    let mut g = &sa * sb.transpose();
    for j in 0..g.ncols() {
        for (i, v) in g.col_as_slice_mut(j).iter_mut().enumerate() {
            *v = (na[i] + nb[j] - 2.0 * *v).max(0.0);
        }
    }
    g
}

/// For a symmetric weight matrix `w`, returns `g[k] = sum_ij w_ij (x_ik - x_jk)^2`
/// for every column `k` of `x`.
///
/// Expands the square so the work is one `n × n × K` product instead of a
/// triple loop.
pub(crate) fn sqdiff_traces(x: MatRef<'_, f64>, w: MatRef<'_, f64>) -> Vec<f64> {
    let n = x.nrows();
    let wx = w * x;
    let row_sums: Vec<f64> = (0..n).map(|i| w.row(i).iter().sum()).collect();
    (0..x.ncols())
        .map(|k| {
            let mut a = 0.0;
            let mut b = 0.0;
            for i in 0..n {
                let xi = x[(i, k)];
                a += xi * xi * row_sums[i];
                b += xi * wx[(i, k)];
            }
            2.0 * (a - b)
        })
        .collect()
}

/// Cholesky factor of a covariance matrix, with jitter escalation.
#[derive(Debug)]
pub struct CholFactor {
    llt: Llt<f64>,
    logdet: f64,
    extra_jitter: f64,
}

impl CholFactor {
    /// Factorizes `c`. On failure, extra diagonal jitter of
    /// `JITTER_START * scale` is added and multiplied by 10 until
    /// `JITTER_MAX * scale`, where `scale` is the mean diagonal entry.
    pub fn new(c: &CovMatrix) -> Result<Self> {
        Self::factor(c.mat())
    }

    pub fn factor(mat: MatRef<'_, f64>) -> Result<Self> {
        let n = mat.nrows();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if let Ok(llt) = mat.llt(Side::Lower) {
            return Ok(Self::from_llt(llt, 0.0));
        }
        let scale = (0..n).map(|i| mat[(i, i)]).sum::<f64>() / n as f64;
        let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
        let mut rel = JITTER_START;
        let mut work = mat.to_owned();
        while rel <= JITTER_MAX * (1.0 + 1e-9) {
            let add = rel * scale;
            for i in 0..n {
                work[(i, i)] = mat[(i, i)] + add;
            }
            if let Ok(llt) = work.llt(Side::Lower) {
                return Ok(Self::from_llt(llt, add));
            }
            rel *= 10.0;
        }
        Err(Error::NotPositiveDefinite {
            jitter: JITTER_MAX * scale,
        })
    }

    fn from_llt(llt: Llt<f64>, extra_jitter: f64) -> Self {
        let l = llt.L();
        clear_upper_state();
        let logdet = 2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
        Self {
            llt,
            logdet,
            extra_jitter,
        }
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Jitter that had to be added on top of the matrix's own diagonal.
    pub fn extra_jitter(&self) -> f64 {
        self.extra_jitter
    }

    pub fn l(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let sol = self.llt.solve(&rhs);
        sol.col_as_slice(0).to_vec()
    }

    pub fn solve_mat(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        self.llt.solve(b)
    }

    pub fn inverse(&self) -> Mat<f64> {
        self.llt.inverse()
    }
}

/// Returns `(C^{-1} b, log|C|)`.
pub fn chol_solve_logdet(c: &CovMatrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    if b.len() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            found: b.len(),
        });
    }
    let f = CholFactor::new(c)?;
    Ok((f.solve(b), f.logdet()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Mat<f64> {
        Mat::from_fn(v.len(), 1, |i, _| v[i])
    }

    #[test]
    fn diagonal_is_sigma2_plus_jitter() {
        let x = col(&[0.1, -0.5, 2.0]);
        let c = inverse_rbf_cov(x.as_ref(), 1.7, &[0.3], 0.01).unwrap();
        for i in 0..3 {
            assert_eq!(c.mat()[(i, i)], 1.71);
        }
    }

    #[test]
    fn unit_distance_value() {
        let x = col(&[0.0, 1.0]);
        let c = inverse_rbf_cov(x.as_ref(), 1.0, &[2.0], 0.0).unwrap();
        assert!((c.mat()[(0, 1)] - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    fn direct(xa: MatRef<'_, f64>, xb: MatRef<'_, f64>, s2: f64, ell2: &[f64]) -> Mat<f64> {
        Mat::from_fn(xa.nrows(), xb.nrows(), |i, j| {
            let s: f64 = (0..ell2.len())
                .map(|k| ell2[k] * (xa[(i, k)] - xb[(j, k)]).powi(2))
                .sum();
            s2 * (-0.5 * s).exp()
        })
    }

    #[test]
    fn matches_pairwise_loop() {
        let x = Mat::from_fn(30, 5, |i, j| ((i * 7 + j * 13) % 11) as f64 / 3.0 - 1.5);
        let z = Mat::from_fn(7, 5, |i, j| ((i * 5 + j * 3) % 7) as f64 / 2.0 - 1.0);
        let ell = [0.3, 1.2, 0.0, 2.5, 0.05];
        let c = inverse_rbf_cov(x.as_ref(), 1.3, &ell, 0.0).unwrap();
        let want = direct(x.as_ref(), x.as_ref(), 1.3, &ell);
        let cross = inverse_rbf_cross(z.as_ref(), x.as_ref(), 1.3, &ell).unwrap();
        let want_cross = direct(z.as_ref(), x.as_ref(), 1.3, &ell);
        for i in 0..30 {
            for j in 0..30 {
                assert!((c.mat()[(i, j)] - want[(i, j)]).abs() < 1e-12);
                assert_eq!(c.mat()[(i, j)], c.mat()[(j, i)]);
            }
            for j in 0..7 {
                assert!((cross[(j, i)] - want_cross[(j, i)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_scales_give_constant_kernel() {
        let x = Mat::from_fn(4, 2, |i, j| (i * 3 + j) as f64 * 0.7);
        let c = inverse_rbf_cov(x.as_ref(), 2.5, &[0.0, 0.0], 0.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(c.mat()[(i, j)], 2.5);
            }
        }
    }

    #[test]
    fn parameter_errors() {
        let x = col(&[0.0, 1.0]);
        assert_eq!(
            inverse_rbf_cov(x.as_ref(), 1.0, &[-0.1], 0.0).unwrap_err(),
            Error::NegativeLengthScale(0)
        );
        assert_eq!(
            inverse_rbf_cov(x.as_ref(), 0.0, &[0.1], 0.0).unwrap_err(),
            Error::NonPositiveVariance
        );
    }

    #[test]
    fn identity_solve() {
        let c = CovMatrix::from_mat(Mat::identity(3, 3), 0.0).unwrap();
        let (s, ld) = chol_solve_logdet(&c, &[1.0, -2.0, 3.5]).unwrap();
        assert_eq!(s, vec![1.0, -2.0, 3.5]);
        assert_eq!(ld, 0.0);
    }

    #[test]
    fn twice_identity_solve() {
        let c = CovMatrix::from_mat(Mat::<f64>::identity(3, 3) * faer::Scale(2.0), 0.0).unwrap();
        let (s, ld) = chol_solve_logdet(&c, &[1.0, 1.0, 1.0]).unwrap();
        for v in s {
            assert!((v - 0.5).abs() < 1e-15);
        }
        assert!((ld - 3.0 * 2f64.ln()).abs() < 1e-14);
        assert!((ld - 2.079_441_541_679_836).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_rescued_by_jitter() {
        let c = CovMatrix::from_mat(Mat::from_fn(3, 3, |_, _| 1.0), 0.0).unwrap();
        let f = CholFactor::new(&c).unwrap();
        assert!(f.extra_jitter() > 0.0);
    }

    #[test]
    fn indefinite_matrix_fails_after_cap() {
        let m = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        let c = CovMatrix::from_mat(m, 0.0).unwrap();
        assert!(matches!(
            chol_solve_logdet(&c, &[1.0, 1.0]),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn traces_match_direct_sum() {
        let x = Mat::from_fn(5, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * j as f64);
        let w = Mat::from_fn(5, 5, |i, j| 1.0 / (1.0 + (i + j) as f64));
        let g = sqdiff_traces(x.as_ref(), w.as_ref());
        for k in 0..3 {
            let mut direct = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    let d = x[(i, k)] - x[(j, k)];
                    direct += w[(i, j)] * d * d;
                }
            }
            assert!((g[k] - direct).abs() < 1e-12 * direct.abs().max(1.0));
        }
    }
}
