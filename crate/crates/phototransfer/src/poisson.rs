//! Screened Poisson enhancement with Neumann boundaries.

use ndarray::{Array3, Axis};

use crate::cg::{self, CgOptions, CgReport, SpdOperator};
use crate::error::{Result, TransferError};

/// `(λI + L)` where `L` is the 4-neighbour graph Laplacian (the negated
/// 5-point Laplacian with mirrored borders).
struct ScreenedOperator {
    height: usize,
    width: usize,
    lambda: f64,
}

impl ScreenedOperator {
    fn neighbours(&self, y: usize, x: usize) -> usize {
        (y > 0) as usize + (y + 1 < self.height) as usize + (x > 0) as usize + (x + 1 < self.width) as usize
    }
}

/// `L x` on an `h×w` grid.
pub fn graph_laplacian(x: &[f64], h: usize, w: usize, out: &mut [f64]) {
    for y in 0..h {
        for xx in 0..w {
            let p = y * w + xx;
            let v = x[p];
            let mut acc = 0.0;
            if y > 0 {
                acc += v - x[p - w];
            }
            if y + 1 < h {
                acc += v - x[p + w];
            }
            if xx > 0 {
                acc += v - x[p - 1];
            }
            if xx + 1 < w {
                acc += v - x[p + 1];
            }
            out[p] = acc;
        }
    }
}

impl SpdOperator for ScreenedOperator {
    fn len(&self) -> usize {
        self.height * self.width
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        graph_laplacian(x, self.height, self.width, out);
        for (o, v) in out.iter_mut().zip(x) {
            *o += self.lambda * v;
        }
    }

    fn diagonal(&self, i: usize) -> f64 {
        self.lambda + self.neighbours(i / self.width, i % self.width) as f64
    }
}

fn check(s: &Array3<f64>, u: &Array3<f64>, lambda: f64) -> Result<()> {
    if s.dim() != u.dim() {
        return Err(TransferError::Shape(format!("stylized {:?} vs input {:?}", s.dim(), u.dim())));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(TransferError::Config(format!("lambda_f must be positive, got {lambda}")));
    }
    Ok(())
}

/// Minimises `λ‖f − s‖² + ‖∇f − ∇u‖²` per channel, starting from `s`.
pub fn screened_poisson_with(s: &Array3<f64>, u: &Array3<f64>, lambda: f64, opts: CgOptions) -> Result<(Array3<f64>, Vec<CgReport>)> {
    check(s, u, lambda)?;
    let (h, w, c) = s.dim();
    let op = ScreenedOperator { height: h, width: w, lambda };
    let ones = vec![1.0; h * w];
    let solved: Vec<Result<(Vec<f64>, CgReport)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..c)
            .map(|k| {
                let (op, ones) = (&op, &ones);
                scope.spawn(move || {
                    let sv: Vec<f64> = s.index_axis(Axis(2), k).iter().copied().collect();
                    let uv: Vec<f64> = u.index_axis(Axis(2), k).iter().copied().collect();
                    let mut b = vec![0.0; h * w];
                    graph_laplacian(&uv, h, w, &mut b);
                    for (bi, si) in b.iter_mut().zip(&sv) {
                        *bi += lambda * si;
                    }
                    let mut x = sv;
                    let report = cg::solve(op, &b, &mut x, ones, opts, "screened_poisson")?;
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

pub fn screened_poisson(s: &Array3<f64>, u: &Array3<f64>, lambda: f64) -> Result<Array3<f64>> {
    Ok(screened_poisson_with(s, u, lambda, CgOptions::default())?.0)
}

/// `λ‖f − s‖² + Σ_edges ((f_p − f_q) − (u_p − u_q))²`, summed over channels.
pub fn poisson_energy(f: &Array3<f64>, s: &Array3<f64>, u: &Array3<f64>, lambda: f64) -> f64 {
    let (h, w, c) = f.dim();
    let mut e = 0.0;
    for y in 0..h {
        for x in 0..w {
            for k in 0..c {
                e += lambda * (f[[y, x, k]] - s[[y, x, k]]).powi(2);
                if x + 1 < w {
                    e += ((f[[y, x + 1, k]] - f[[y, x, k]]) - (u[[y, x + 1, k]] - u[[y, x, k]])).powi(2);
                }
                if y + 1 < h {
                    e += ((f[[y + 1, x, k]] - f[[y, x, k]]) - (u[[y + 1, x, k]] - u[[y, x, k]])).powi(2);
                }
            }
        }
    }
    e
}

/// `‖(λI + L) f − (λ s + L u)‖∞`.
pub fn poisson_residual(f: &Array3<f64>, s: &Array3<f64>, u: &Array3<f64>, lambda: f64) -> f64 {
    let (h, w, _) = f.dim();
    let mut lf = vec![0.0; h * w];
    let mut lu = vec![0.0; h * w];
    let mut worst: f64 = 0.0;
    for ((fc, sc), uc) in f.axis_iter(Axis(2)).zip(s.axis_iter(Axis(2))).zip(u.axis_iter(Axis(2))) {
        let fv: Vec<f64> = fc.iter().copied().collect();
        let uv: Vec<f64> = uc.iter().copied().collect();
        graph_laplacian(&fv, h, w, &mut lf);
        graph_laplacian(&uv, h, w, &mut lu);
        for (i, si) in sc.iter().enumerate() {
            worst = worst.max((lambda * fv[i] + lf[i] - lambda * si - lu[i]).abs());
        }
    }
    worst
}
