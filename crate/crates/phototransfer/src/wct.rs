//! Per-region whitening and coloring of pixel features.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array2, Array3};
use scene_data::SemanticLayout;

use crate::error::{Result, TransferError};

/// Eigenvalue floor applied before square roots.
pub const EIG_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct RegionStats {
    pub mean: DVector<f64>,
    /// Unbiased sample covariance; zero for regions of fewer than 2 pixels.
    pub cov: DMatrix<f64>,
    pub count: usize,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl RegionStats {
    /// Statistics of the rows of an `n×C` matrix.
    pub fn from_rows(rows: &Array2<f64>) -> Result<Self> {
        let (n, c) = rows.dim();
        if n == 0 {
            return Err(TransferError::EmptyRegion);
        }
        let mut mean = DVector::zeros(c);
        for row in rows.outer_iter() {
            for k in 0..c {
                mean[k] += row[k];
            }
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(c, c);
        if n >= 2 {
            for row in rows.outer_iter() {
                for i in 0..c {
                    let di = row[i] - mean[i];
                    for j in i..c {
                        cov[(i, j)] += di * (row[j] - mean[j]);
                    }
                }
            }
            cov /= (n - 1) as f64;
            for i in 0..c {
                for j in 0..i {
                    cov[(i, j)] = cov[(j, i)];
                }
            }
        }
        let eig = SymmetricEigen::new(cov.clone());
        let eigenvalues = eig.eigenvalues.map(|v| v.max(EIG_FLOOR));
        Ok(Self { mean, cov, count: n, eigenvalues, eigenvectors: eig.eigenvectors })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Fewer than two pixels: only the mean is meaningful.
    pub fn is_degenerate(&self) -> bool {
        self.count < 2
    }

    /// `E·diag(λ^p)·Eᵀ` with clamped eigenvalues.
    fn power(&self, p: f64) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&self.eigenvalues.map(|v| v.powf(p)));
        &self.eigenvectors * d * self.eigenvectors.transpose()
    }
}

/// Rows of `features` where `mask` is set.
pub fn masked_rows(features: &Array3<f64>, mask: &Array2<bool>) -> Result<Array2<f64>> {
    let (h, w, c) = features.dim();
    if mask.dim() != (h, w) {
        return Err(TransferError::Shape(format!("mask {:?} vs features {h}x{w}", mask.dim())));
    }
    let n = mask.iter().filter(|&&m| m).count();
    let mut rows = Array2::zeros((n, c));
    let mut i = 0;
    for ((y, x), &m) in mask.indexed_iter() {
        if m {
            for k in 0..c {
                rows[[i, k]] = features[[y, x, k]];
            }
            i += 1;
        }
    }
    Ok(rows)
}

pub fn region_stats(features: &Array3<f64>, mask: &Array2<bool>) -> Result<RegionStats> {
    RegionStats::from_rows(&masked_rows(features, mask)?)
}

/// Maps each row `f` to `C_s^{½}·C_c^{−½}·(f − μ_c) + μ_s`.
///
/// Degenerate content or style statistics fall back to a mean shift.
pub fn wct_region(content: &Array2<f64>, content_stats: &RegionStats, style_stats: &RegionStats) -> Result<Array2<f64>> {
    let c = content.ncols();
    if content_stats.channels() != c || style_stats.channels() != c {
        return Err(TransferError::Shape("feature dimensions disagree".into()));
    }
    let transform = if content_stats.is_degenerate() || style_stats.is_degenerate() {
        DMatrix::identity(c, c)
    } else {
        style_stats.power(0.5) * content_stats.power(-0.5)
    };
    let mut out = Array2::zeros(content.dim());
    let mut centered = DVector::zeros(c);
    for (i, row) in content.outer_iter().enumerate() {
        for k in 0..c {
            centered[k] = row[k] - content_stats.mean[k];
        }
        let mapped = &transform * &centered + &style_stats.mean;
        for k in 0..c {
            out[[i, k]] = mapped[k];
        }
    }
    Ok(out)
}

fn all_true(h: usize, w: usize) -> Array2<bool> {
    Array2::from_elem((h, w), true)
}

/// Region-matched transfer: every label present in both layouts is mapped
/// onto the style's statistics for that label; the rest use global style
/// statistics. Output is clamped to `[-1, 1]`.
pub fn stylize(
    content: &Array3<f64>,
    style: &Array3<f64>,
    content_layout: &SemanticLayout,
    style_layout: &SemanticLayout,
    per_label: bool,
) -> Result<Array3<f64>> {
    let (h, w, c) = content.dim();
    if content_layout.dim() != (h, w) {
        return Err(TransferError::Shape("content image and layout differ in size".into()));
    }
    if style_layout.dim() != (style.dim().0, style.dim().1) || style.dim().2 != c {
        return Err(TransferError::Shape("style image and layout disagree".into()));
    }
    let global_style = region_stats(style, &all_true(style.dim().0, style.dim().1))?;
    let content_labels: BTreeSet<u8> = content_layout.labels().iter().copied().collect();
    let style_hist = style_layout.histogram();
    let shared = content_labels.iter().filter(|&&l| style_hist.get(l as usize).copied().unwrap_or(0) > 0).count();
    if per_label && shared == 0 {
        log::warn!("content and style share no labels; using global style statistics");
    }
    let mut out = content.clone();
    let regions: Vec<Array2<bool>> = if per_label {
        content_labels.iter().map(|&l| content_layout.mask(l)).collect()
    } else {
        vec![all_true(h, w)]
    };
    let labels: Vec<Option<u8>> = if per_label { content_labels.iter().map(|&l| Some(l)).collect() } else { vec![None] };
    for (mask, label) in regions.iter().zip(labels) {
        let rows = masked_rows(content, mask)?;
        let cstats = RegionStats::from_rows(&rows)?;
        let sstats = match label {
            Some(l) if style_hist.get(l as usize).copied().unwrap_or(0) > 0 => region_stats(style, &style_layout.mask(l))?,
            _ => global_style.clone(),
        };
        let mapped = wct_region(&rows, &cstats, &sstats)?;
        let mut i = 0;
        for ((y, x), &m) in mask.indexed_iter() {
            if m {
                for k in 0..c {
                    out[[y, x, k]] = mapped[[i, k]].clamp(-1.0, 1.0);
                }
                i += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_pixel_hand_computation() {
        let s = RegionStats::from_rows(&array![[0.0], [2.0]]).unwrap();
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.cov[(0, 0)], 2.0);
    }

    #[test]
    fn constant_region_has_zero_covariance() {
        let s = RegionStats::from_rows(&Array2::from_elem((10, 3), 0.4)).unwrap();
        assert!(s.mean.iter().all(|&v| (v - 0.4).abs() < 1e-15));
        assert!(s.cov.iter().all(|&v| v.abs() < 1e-30));
    }

    #[test]
    fn empty_mask_is_error() {
        let f = Array3::zeros((2, 2, 3));
        assert!(matches!(region_stats(&f, &Array2::from_elem((2, 2), false)), Err(TransferError::EmptyRegion)));
    }
}
