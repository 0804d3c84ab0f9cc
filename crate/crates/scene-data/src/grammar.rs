//! Procedural layout grammar: sky band over ground plus up to three blobs.

use ndarray::Array2;
use rand::Rng;

use crate::layout::SemanticLayout;
use crate::oracle::{BUILDING, GRASS, MOUNTAIN, SKY, TREE, WATER};

pub const DESK_NUM_CLASSES: u32 = 6;

/// Samples a desk-vocabulary layout. Sky never reaches the bottom half.
pub fn sample_layout<R: Rng + ?Sized>(rng: &mut R, height: usize, width: usize) -> SemanticLayout {
    let (h, w) = (height as f64, width as f64);
    let center = rng.random_range(0.3..0.5) * h;
    let slope = rng.random_range(-0.1..0.1);
    let horizon: Vec<f64> = (0..width)
        .map(|x| (center + slope * (x as f64 + 0.5 - w / 2.0)).clamp(0.2 * h, 0.5 * h))
        .collect();
    let mut labels = Array2::from_shape_fn((height, width), |(y, x)| {
        if (y as f64) + 0.5 < horizon[x] {
            SKY
        } else {
            GRASS
        }
    });

    let blobs = rng.random_range(0..=3);
    for _ in 0..blobs {
        match rng.random_range(0..4) {
            0 => {
                let cx = rng.random_range(0.0..w);
                let half = rng.random_range(0.15..0.3) * w;
                let peak = rng.random_range(0.1..0.25) * h;
                for x in 0..width {
                    let d = ((x as f64 + 0.5 - cx).abs() / half).min(1.0);
                    let top = horizon[x] - peak * (1.0 - d);
                    for y in 0..height {
                        let yc = y as f64 + 0.5;
                        if yc >= top && yc < horizon[x] {
                            labels[[y, x]] = MOUNTAIN;
                        }
                    }
                }
            }
            1 => {
                let x0 = rng.random_range(0.0..0.9) * w;
                let bw = rng.random_range(0.08..0.2) * w;
                let bh = rng.random_range(0.1..0.3) * h;
                for x in 0..width {
                    let xc = x as f64 + 0.5;
                    if xc < x0 || xc >= x0 + bw {
                        continue;
                    }
                    for y in 0..height {
                        let yc = y as f64 + 0.5;
                        if yc >= horizon[x] - bh && yc < horizon[x] + 0.05 * h {
                            labels[[y, x]] = BUILDING;
                        }
                    }
                }
            }
            2 => {
                let cx = rng.random_range(0.0..w);
                let cy = rng.random_range((center - 0.05 * h)..(0.9 * h));
                let rx = rng.random_range(0.06..0.15) * w;
                let ry = rx * rng.random_range(0.8..1.4);
                fill_ellipse(&mut labels, cx, cy, rx, ry, TREE, |_| true);
            }
            _ => {
                let lo = (center + 0.5 * (h - center)).min(0.9 * h);
                let cy = rng.random_range(lo..(0.95 * h).max(lo + 1.0));
                let cx = rng.random_range(0.0..w);
                let rx = rng.random_range(0.15..0.35) * w;
                let ry = rng.random_range(0.05..0.12) * h;
                fill_ellipse(&mut labels, cx, cy, rx, ry, WATER, |l| l == GRASS);
            }
        }
    }
    SemanticLayout::new(labels, DESK_NUM_CLASSES).expect("grammar emits desk labels")
}

fn fill_ellipse(
    labels: &mut Array2<u8>,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    label: u8,
    replace: impl Fn(u8) -> bool,
) {
    for ((y, x), l) in labels.indexed_iter_mut() {
        let dx = (x as f64 + 0.5 - cx) / rx;
        let dy = (y as f64 + 0.5 - cy) / ry;
        if dx * dx + dy * dy <= 1.0 && replace(*l) {
            *l = label;
        }
    }
}
