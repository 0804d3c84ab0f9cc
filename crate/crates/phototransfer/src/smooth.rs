//! Manifold-ranking smoothing over a guide-image affinity graph.

use ndarray::{Array3, Axis};

use crate::cg::{self, CgOptions, CgReport, SpdOperator};
use crate::error::{Result, TransferError};

/// Default colour bandwidth of the affinity kernel, in `[-1, 1]` units.
pub const DEFAULT_AFFINITY_SIGMA: f64 = 0.1;

const OFFSETS: [(isize, isize); 4] = [(0, 1), (1, -1), (1, 0), (1, 1)];

/// Sparse symmetric 8-neighbour affinity `W_pq = exp(-‖I_p − I_q‖² / σ²)`.
#[derive(Debug, Clone)]
pub struct AffinityGraph {
    height: usize,
    width: usize,
    /// Each undirected edge once, as `(p, q, w)` with `p < q`.
    edges: Vec<(usize, usize, f64)>,
    degree: Vec<f64>,
}

impl AffinityGraph {
    pub fn from_guide(guide: &Array3<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(TransferError::Config(format!("affinity sigma must be positive, got {sigma}")));
        }
        let (h, w, c) = guide.dim();
        let mut edges = Vec::with_capacity(h * w * 4);
        let mut degree = vec![0.0; h * w];
        let inv = 1.0 / (sigma * sigma);
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                for (dy, dx) in OFFSETS {
                    let (ny, nx) = (y as isize + dy, x as isize + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let (ny, nx) = (ny as usize, nx as usize);
                    let d2: f64 = (0..c).map(|k| (guide[[y, x, k]] - guide[[ny, nx, k]]).powi(2)).sum();
                    let wt = (-d2 * inv).exp();
                    let q = ny * w + nx;
                    edges.push((p, q, wt));
                    degree[p] += wt;
                    degree[q] += wt;
                }
            }
        }
        // Isolated pixels keep a unit self-degree so that D stays invertible.
        for d in &mut degree {
            if *d <= f64::MIN_POSITIVE {
                *d = 1.0;
            }
        }
        Ok(Self { height: h, width: w, edges, degree })
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// `W x`.
    pub fn apply_weights(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(p, q, w) in &self.edges {
            out[p] += w * x[q];
            out[q] += w * x[p];
        }
    }

    /// `W̄ x = D⁻¹ W x`; rows of `W̄` sum to one.
    pub fn apply_normalized(&self, x: &[f64], out: &mut [f64]) {
        self.apply_weights(x, out);
        for (o, d) in out.iter_mut().zip(&self.degree) {
            *o /= d;
        }
    }
}

/// `D − αW`, the symmetric form of `I − αW̄` scaled by `D`.
struct RankingOperator<'a> {
    graph: &'a AffinityGraph,
    alpha: f64,
}

impl SpdOperator for RankingOperator<'_> {
    fn len(&self) -> usize {
        self.graph.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.graph.apply_weights(x, out);
        for i in 0..out.len() {
            out[i] = self.graph.degree[i] * x[i] - self.alpha * out[i];
        }
    }

    fn diagonal(&self, i: usize) -> f64 {
        self.graph.degree[i]
    }
}

/// `R = (1−α)(I − αW̄)⁻¹ Y`, channel by channel.
pub fn smooth_with_graph(y: &Array3<f64>, graph: &AffinityGraph, alpha: f64, opts: CgOptions) -> Result<(Array3<f64>, Vec<CgReport>)> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(TransferError::Config(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let (h, w, c) = y.dim();
    if h * w != graph.len() {
        return Err(TransferError::Shape(format!("image {h}x{w} vs graph of {} pixels", graph.len())));
    }
    if alpha == 0.0 {
        return Ok((y.clone(), vec![CgReport { iterations: 0, residual: 0.0 }; c]));
    }
    let op = RankingOperator { graph, alpha };
    let channels: Vec<Vec<f64>> = y.axis_iter(Axis(2)).map(|ch| ch.iter().copied().collect()).collect();
    let solved: Vec<Result<(Vec<f64>, CgReport)>> = std::thread::scope(|s| {
        let handles: Vec<_> = channels
            .iter()
            .map(|ch| {
                let op = &op;
                s.spawn(move || {
                    let b: Vec<f64> = ch.iter().zip(&graph.degree).map(|(v, d)| (1.0 - alpha) * d * v).collect();
                    let mut x = ch.clone();
                    let report = cg::solve(op, &b, &mut x, &graph.degree, opts, "smooth_affinity")?;
                    Ok((x, report))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    let mut out = Array3::zeros((h, w, c));
    let mut reports = Vec::with_capacity(c);
    for (k, res) in solved.into_iter().enumerate() {
        let (x, report) = res?;
        for (i, v) in x.into_iter().enumerate() {
            out[[i / w, i % w, k]] = v;
        }
        reports.push(report);
    }
    Ok((out, reports))
}

pub fn smooth_affinity(y: &Array3<f64>, guide: &Array3<f64>, alpha: f64, sigma: f64) -> Result<Array3<f64>> {
    if y.dim().0 != guide.dim().0 || y.dim().1 != guide.dim().1 {
        return Err(TransferError::Shape("smoothing target and guide differ in size".into()));
    }
    let graph = AffinityGraph::from_guide(guide, sigma)?;
    Ok(smooth_with_graph(y, &graph, alpha, CgOptions::default())?.0)
}

/// `‖(I − αW̄)R − (1−α)Y‖∞` over all channels.
pub fn smoothing_residual(r: &Array3<f64>, y: &Array3<f64>, graph: &AffinityGraph, alpha: f64) -> f64 {
    let (h, w, _) = r.dim();
    let mut worst: f64 = 0.0;
    let mut wr = vec![0.0; h * w];
    for (rc, yc) in r.axis_iter(Axis(2)).zip(y.axis_iter(Axis(2))) {
        let rv: Vec<f64> = rc.iter().copied().collect();
        graph.apply_normalized(&rv, &mut wr);
        for ((ri, wi), yi) in rv.iter().zip(&wr).zip(yc.iter()) {
            worst = worst.max((ri - alpha * wi - (1.0 - alpha) * yi).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Array3<f64> {
        Array3::from_shape_fn((h, w, 3), |(y, x, k)| ((y * 7 + x * 3 + k * 5) % 11) as f64 / 11.0 - 0.5)
    }

    #[test]
    fn normalized_rows_sum_to_one() {
        let g = AffinityGraph::from_guide(&ramp(5, 6), 0.3).unwrap();
        let mut out = vec![0.0; 30];
        g.apply_normalized(&[1.0; 30], &mut out);
        assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn alpha_zero_is_exact() {
        let y = ramp(4, 4);
        assert_eq!(smooth_affinity(&y, &ramp(4, 4), 0.0, 0.1).unwrap(), y);
    }

    #[test]
    fn rejects_alpha_one() {
        assert!(smooth_affinity(&ramp(2, 2), &ramp(2, 2), 1.0, 0.1).is_err());
    }
}
