use faer::MatRef;

use crate::error::{Error, Result};

/// Linear-interpolation percentile, `q` in `[0, 100]`.
///
/// With the sorted values `v[0..M]` and `h = (M - 1) q / 100`, returns
/// `v[floor(h)] + (h - floor(h)) (v[floor(h) + 1] - v[floor(h)])`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::InvalidConfig(format!("percentile {q} outside [0, 100]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDesign("non-finite value in percentile input".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    if lo + 1 >= v.len() {
        return Ok(v[v.len() - 1]);
    }
    let frac = h - lo as f64;
    Ok(v[lo] + frac * (v[lo + 1] - v[lo]))
}

pub fn median(values: &[f64]) -> Result<f64> {
    percentile(values, 50.0)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with divisor `n - 1`.
pub fn sample_var(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Pearson correlation. Errors with `ConstantColumn(0)` / `ConstantColumn(1)`
/// when either input has no spread.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let tiny = 1e-24 * a.len() as f64;
    if saa <= tiny {
        return Err(Error::ConstantColumn(0));
    }
    if sbb <= tiny {
        return Err(Error::ConstantColumn(1));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Largest absolute Pearson correlation between `x0` and any column of `x`.
///
/// `ConstantColumn(k)` names the offending column of `x`; a constant `x0` is
/// reported as `ConstantColumn(usize::MAX)`.
pub fn max_abs_corr(x0: &[f64], x: MatRef<'_, f64>) -> Result<f64> {
    if x0.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: x0.len(),
        });
    }
    let mut best: f64 = 0.0;
    for k in 0..x.ncols() {
        let col: Vec<f64> = x.col(k).iter().copied().collect();
        let r = pearson(x0, &col).map_err(|e| match e {
            Error::ConstantColumn(0) => Error::ConstantColumn(usize::MAX),
            Error::ConstantColumn(_) => Error::ConstantColumn(k),
            other => other,
        })?;
        best = best.max(r.abs());
    }
    Ok(best)
}
