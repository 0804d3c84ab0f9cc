//! Jacobi-preconditioned conjugate gradients for the sparse SPD systems used here.

use crate::error::{Result, TransferError};

/// A symmetric positive definite operator with a known diagonal.
pub trait SpdOperator {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn diagonal(&self, i: usize) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub max_iters: usize,
    /// Stop once `max_i |r_i| / scale_i` drops below this.
    pub tol: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { max_iters: 10_000, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub residual: f64,
}

fn scaled_residual(r: &[f64], scale: &[f64]) -> f64 {
    r.iter().zip(scale).map(|(r, s)| (r / s).abs()).fold(0.0, f64::max)
}

/// Solves `A x = b` starting from `x`; the stopping residual is measured
/// after dividing each row by `scale`.
pub fn solve(
    a: &impl SpdOperator,
    b: &[f64],
    x: &mut [f64],
    scale: &[f64],
    opts: CgOptions,
    solver: &'static str,
) -> Result<CgReport> {
    let n = a.len();
    let mut ax = vec![0.0; n];
    a.apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / a.diagonal(i)).collect();
    let mut residual = scaled_residual(&r, scale);
    if residual < opts.tol {
        return Ok(CgReport { iterations: 0, residual });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iters {
        a.apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        residual = scaled_residual(&r, scale);
        if residual < opts.tol {
            // Recompute the true residual to guard against drift.
            a.apply(x, &mut ax);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            residual = scaled_residual(&r, scale);
            if residual < opts.tol {
                return Ok(CgReport { iterations: it, residual });
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(TransferError::NoConvergence { solver, iterations: opts.max_iters, residual })
}
