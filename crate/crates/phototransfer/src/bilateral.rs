//! Cross (joint) bilateral filtering.

use ndarray::Array3;

use crate::error::{Result, TransferError};

/// Window radius for a spatial sigma.
pub fn window_radius(sigma_spatial: f64) -> usize {
    (3.0 * sigma_spatial).ceil() as usize
}

/// Filters `target` with spatial Gaussian weights times range weights taken
/// from `guide`. Weights are renormalised over in-bounds pixels. A zero
/// `sigma_range` keeps only neighbours of identical guide colour.
pub fn cross_bilateral(target: &Array3<f64>, guide: &Array3<f64>, sigma_spatial: f64, sigma_range: f64) -> Result<Array3<f64>> {
    let (h, w, c) = target.dim();
    let (gh, gw, gc) = guide.dim();
    if (gh, gw) != (h, w) {
        return Err(TransferError::Shape(format!("target {h}x{w} vs guide {gh}x{gw}")));
    }
    if !(sigma_spatial > 0.0) {
        return Err(TransferError::Config(format!("sigma_spatial must be positive, got {sigma_spatial}")));
    }
    if !(sigma_range >= 0.0) {
        return Err(TransferError::Config(format!("sigma_range must be non-negative, got {sigma_range}")));
    }
    let r = window_radius(sigma_spatial) as isize;
    let side = (2 * r + 1) as usize;
    let spatial: Vec<f64> = (0..side * side)
        .map(|i| {
            let dy = (i / side) as isize - r;
            let dx = (i % side) as isize - r;
            (-((dy * dy + dx * dx) as f64) / (2.0 * sigma_spatial * sigma_spatial)).exp()
        })
        .collect();
    let range = |d2: f64| -> f64 {
        if sigma_range == 0.0 {
            if d2 == 0.0 { 1.0 } else { 0.0 }
        } else {
            (-d2 / (2.0 * sigma_range * sigma_range)).exp()
        }
    };
    let mut out = Array3::zeros((h, w, c));
    let mut acc = vec![0.0; c];
    for y in 0..h as isize {
        for x in 0..w as isize {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut norm = 0.0;
            for dy in -r..=r {
                let ny = y + dy;
                if ny < 0 || ny >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let nx = x + dx;
                    if nx < 0 || nx >= w as isize {
                        continue;
                    }
                    let (py, px, qy, qx) = (y as usize, x as usize, ny as usize, nx as usize);
                    let d2: f64 = (0..gc).map(|k| (guide[[py, px, k]] - guide[[qy, qx, k]]).powi(2)).sum();
                    let wt = spatial[((dy + r) as usize) * side + (dx + r) as usize] * range(d2);
                    if wt == 0.0 {
                        continue;
                    }
                    norm += wt;
                    for k in 0..c {
                        acc[k] += wt * target[[qy, qx, k]];
                    }
                }
            }
            for k in 0..c {
                out[[y as usize, x as usize, k]] = acc[k] / norm;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_unchanged() {
        let t = Array3::from_elem((6, 7, 3), 0.3);
        let g = Array3::from_shape_fn((6, 7, 3), |(y, x, _)| (y * x) as f64 * 0.01);
        let out = cross_bilateral(&t, &g, 1.5, 0.1).unwrap();
        assert!(out.iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn radius_rounds_up() {
        assert_eq!(window_radius(1.0), 3);
        assert_eq!(window_radius(1.1), 4);
    }
}
