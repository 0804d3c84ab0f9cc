//! Distribution and correctness metrics over surrogate outputs.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2, Axis};
use scene_data::SemanticLayout;

use crate::error::{EvalError, Result};

/// Tolerance on probability rows summing to one.
pub const ROW_SUM_TOL: f64 = 1e-6;
/// Ridge added to both covariances before the matrix square root.
pub const COV_RIDGE: f64 = 1e-6;

fn contract(msg: impl Into<String>) -> EvalError {
    EvalError::Contract(msg.into())
}

/// Mean and population standard deviation of `exp(E_x KL(p(y|x) ‖ p(y)))`
/// over `splits` contiguous chunks.
pub fn inception_score(probs: &Array2<f64>, splits: usize) -> Result<(f64, f64)> {
    let (n, k) = probs.dim();
    if splits == 0 || n < splits {
        return Err(contract(format!("{n} rows cannot form {splits} splits")));
    }
    for (i, row) in probs.outer_iter().enumerate() {
        let s = row.sum();
        if (s - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|&p| !(p >= 0.0)) {
            return Err(contract(format!("row {i} is not a distribution (sum {s})")));
        }
    }
    let mut scores = Vec::with_capacity(splits);
    for s in 0..splits {
        let (lo, hi) = (s * n / splits, (s + 1) * n / splits);
        let part = probs.slice(ndarray::s![lo..hi, ..]);
        let marginal = part.mean_axis(Axis(0)).expect("non-empty split");
        let mut kl = 0.0;
        for row in part.outer_iter() {
            for j in 0..k {
                let p = row[j];
                if p > 0.0 {
                    kl += p * (p.ln() - marginal[j].ln());
                }
            }
        }
        scores.push((kl / (hi - lo) as f64).exp());
    }
    let mean = scores.iter().sum::<f64>() / splits as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / splits as f64;
    Ok((mean, var.sqrt()))
}

fn moments(x: ArrayView2<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (n, d) = x.dim();
    let mean = x.mean_axis(Axis(0)).expect("rows").to_vec();
    let mut cov = DMatrix::zeros(d, d);
    for row in x.outer_iter() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[(i, j)] /= (n - 1) as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    (mean, cov)
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2(Σa Σb)^{½})` with unbiased covariances.
pub fn frechet_distance(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.ncols() != b.ncols() {
        return Err(contract(format!("feature dimensions {} and {} differ", a.ncols(), b.ncols())));
    }
    if a.nrows() < 2 || b.nrows() < 2 {
        return Err(contract("each feature set needs at least two rows"));
    }
    let d = a.ncols();
    let (ma, mut ca) = moments(a.view());
    let (mb, mut cb) = moments(b.view());
    for i in 0..d {
        ca[(i, i)] += COV_RIDGE;
        cb[(i, i)] += COV_RIDGE;
    }
    let mean_term: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y).powi(2)).sum();
    // Tr((Σa Σb)^{½}) = Tr((Σa^{½} Σb Σa^{½})^{½}), which is symmetric.
    let ra = sym_sqrt(&ca);
    let inner = &ra * &cb * &ra;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((mean_term + ca.trace() + cb.trace() - 2.0 * cross).max(0.0))
}

/// Mean squared error over rows and dimensions.
pub fn attribute_mse(predicted: &Array2<f64>, targets: &Array2<f64>) -> Result<f64> {
    if predicted.dim() != targets.dim() {
        return Err(contract(format!("predictions {:?} vs targets {:?}", predicted.dim(), targets.dim())));
    }
    if predicted.is_empty() {
        return Err(contract("no attribute rows"));
    }
    Ok((predicted - targets).mapv(|v| v * v).mean().expect("non-empty"))
}

/// Pixel accuracy in percent.
pub fn segmentation_accuracy(predicted: &[Array2<u8>], layouts: &[&SemanticLayout]) -> Result<f64> {
    if predicted.len() != layouts.len() || predicted.is_empty() {
        return Err(contract(format!("{} predictions for {} layouts", predicted.len(), layouts.len())));
    }
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, l) in predicted.iter().zip(layouts) {
        if p.dim() != l.dim() {
            return Err(contract(format!("prediction {:?} vs layout {:?}", p.dim(), l.dim())));
        }
        hit += p.iter().zip(l.labels().iter()).filter(|(a, b)| a == b).count();
        total += p.len();
    }
    Ok(100.0 * hit as f64 / total as f64)
}

/// Average ranks with ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(contract("spearman needs two equally long series of length ≥ 2"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_of_reversed_order() {
        assert!((spearman(&[0.0, 1.0, 2.0], &[5.0, 3.0, -1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rows() {
        let p = Array2::from_shape_vec((2, 2), vec![0.5, 0.4, 0.5, 0.5]).unwrap();
        assert!(inception_score(&p, 1).is_err());
        assert!(inception_score(&Array2::from_elem((1, 2), 0.5), 2).is_err());
    }
}
