//! Dense NCHW kernels shared by the forward and backward passes.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

/// Square-kernel convolution geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        Self { kernel, stride, pad }
    }

    /// Output side of a forward convolution, `None` if the window does not fit.
    pub fn conv_out(&self, n: usize) -> Option<usize> {
        let padded = n + 2 * self.pad;
        (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
    }

    /// Output side of a transposed convolution.
    pub fn transpose_out(&self, n: usize, output_padding: usize) -> Option<usize> {
        ((n - 1) * self.stride + self.kernel + output_padding).checked_sub(2 * self.pad)
    }
}

/// Unfolds one `C×H×W` plane stack into `(C·k·k) × (Ho·Wo)` columns.
#[allow(clippy::too_many_arguments)]
pub fn im2col(src: &[f64], c: usize, h: usize, w: usize, g: ConvGeom, ho: usize, wo: usize, dst: &mut [f64]) {
    let k = g.kernel;
    let hw_out = ho * wo;
    debug_assert_eq!(dst.len(), c * k * k * hw_out);
    let mut row = 0;
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let out = &mut dst[row * hw_out..(row + 1) * hw_out];
                for oy in 0..ho {
                    let orow = &mut out[oy * wo..(oy + 1) * wo];
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        orow.fill(0.0);
                        continue;
                    }
                    let irow = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, o) in orow.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *o = if ix >= 0 && ix < w as isize { irow[ix as usize] } else { 0.0 };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `dst`.
#[allow(clippy::too_many_arguments)]
pub fn col2im(cols: &[f64], c: usize, h: usize, w: usize, g: ConvGeom, ho: usize, wo: usize, dst: &mut [f64]) {
    let k = g.kernel;
    let hw_out = ho * wo;
    let mut row = 0;
    for ci in 0..c {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let col = &cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = iy as usize * w;
                    let crow = &col[oy * wo..(oy + 1) * wo];
                    for (ox, &v) in crow.iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            plane[base + ix as usize] += v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn view2(data: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("slice length matches shape")
}

fn view2_mut(data: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("slice length matches shape")
}

pub struct ConvShape {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub ho: usize,
    pub wo: usize,
}

/// `y = conv(x, w) + b`; `w` is `[O, C, k, k]`.
pub fn conv2d_forward(x: &[f64], w: &[f64], b: Option<&[f64]>, s: &ConvShape, g: ConvGeom, y: &mut [f64]) {
    let ck = s.c_in * g.kernel * g.kernel;
    let howo = s.ho * s.wo;
    let mut cols = vec![0.0; ck * howo];
    let wmat = view2(w, s.c_out, ck);
    for n in 0..s.n {
        let xn = &x[n * s.c_in * s.h * s.w..(n + 1) * s.c_in * s.h * s.w];
        im2col(xn, s.c_in, s.h, s.w, g, s.ho, s.wo, &mut cols);
        let yn = &mut y[n * s.c_out * howo..(n + 1) * s.c_out * howo];
        general_mat_mul(1.0, &wmat, &view2(&cols, ck, howo), 0.0, &mut view2_mut(yn, s.c_out, howo));
        if let Some(b) = b {
            for (o, chunk) in yn.chunks_mut(howo).enumerate() {
                chunk.iter_mut().for_each(|v| *v += b[o]);
            }
        }
    }
}

/// Accumulates input, weight and bias gradients of [`conv2d_forward`].
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    s: &ConvShape,
    g: ConvGeom,
    dx: Option<&mut [f64]>,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    let ck = s.c_in * g.kernel * g.kernel;
    let howo = s.ho * s.wo;
    let in_len = s.c_in * s.h * s.w;
    let mut cols = vec![0.0; ck * howo];
    let wmat = view2(w, s.c_out, ck);
    let mut dx = dx;
    let mut dw_mat = dw.map(|d| view2_mut(d, s.c_out, ck));
    for n in 0..s.n {
        let dyn_ = view2(&dy[n * s.c_out * howo..(n + 1) * s.c_out * howo], s.c_out, howo);
        if let Some(dw_mat) = dw_mat.as_mut() {
            im2col(&x[n * in_len..(n + 1) * in_len], s.c_in, s.h, s.w, g, s.ho, s.wo, &mut cols);
            general_mat_mul(1.0, &dyn_, &view2(&cols, ck, howo).t(), 1.0, dw_mat);
        }
        if let Some(dx) = dx.as_deref_mut() {
            general_mat_mul(1.0, &wmat.t(), &dyn_, 0.0, &mut view2_mut(&mut cols, ck, howo));
            col2im(&cols, s.c_in, s.h, s.w, g, s.ho, s.wo, &mut dx[n * in_len..(n + 1) * in_len]);
        }
    }
    if let Some(db) = db {
        for n in 0..s.n {
            for (o, chunk) in dy[n * s.c_out * howo..(n + 1) * s.c_out * howo].chunks(howo).enumerate() {
                db[o] += chunk.iter().sum::<f64>();
            }
        }
    }
}

/// Transposed convolution; `w` is `[C_in, C_out, k, k]`, output `[N, C_out, Ho, Wo]`.
pub fn conv_transpose2d_forward(x: &[f64], w: &[f64], b: Option<&[f64]>, s: &ConvShape, g: ConvGeom, y: &mut [f64]) {
    let ok = s.c_out * g.kernel * g.kernel;
    let hw = s.h * s.w;
    let out_len = s.c_out * s.ho * s.wo;
    let mut cols = vec![0.0; ok * hw];
    let wmat = view2(w, s.c_in, ok);
    y.fill(0.0);
    for n in 0..s.n {
        let xn = view2(&x[n * s.c_in * hw..(n + 1) * s.c_in * hw], s.c_in, hw);
        general_mat_mul(1.0, &wmat.t(), &xn, 0.0, &mut view2_mut(&mut cols, ok, hw));
        let yn = &mut y[n * out_len..(n + 1) * out_len];
        // The transposed op is the adjoint of a conv from (C_out, Ho, Wo) to (·, H, W).
        col2im(&cols, s.c_out, s.ho, s.wo, g, s.h, s.w, yn);
        if let Some(b) = b {
            for (o, chunk) in yn.chunks_mut(s.ho * s.wo).enumerate() {
                chunk.iter_mut().for_each(|v| *v += b[o]);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv_transpose2d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    s: &ConvShape,
    g: ConvGeom,
    dx: Option<&mut [f64]>,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    let ok = s.c_out * g.kernel * g.kernel;
    let hw = s.h * s.w;
    let out_len = s.c_out * s.ho * s.wo;
    let mut cols = vec![0.0; ok * hw];
    let wmat = view2(w, s.c_in, ok);
    let mut dx = dx;
    let mut dw_mat = dw.map(|d| view2_mut(d, s.c_in, ok));
    for n in 0..s.n {
        im2col(&dy[n * out_len..(n + 1) * out_len], s.c_out, s.ho, s.wo, g, s.h, s.w, &mut cols);
        let cols_v = view2(&cols, ok, hw);
        if let Some(dx) = dx.as_deref_mut() {
            let mut dxn = view2_mut(&mut dx[n * s.c_in * hw..(n + 1) * s.c_in * hw], s.c_in, hw);
            general_mat_mul(1.0, &wmat, &cols_v, 1.0, &mut dxn);
        }
        if let Some(dw_mat) = dw_mat.as_mut() {
            let xn = view2(&x[n * s.c_in * hw..(n + 1) * s.c_in * hw], s.c_in, hw);
            general_mat_mul(1.0, &xn, &cols_v.t(), 1.0, dw_mat);
        }
    }
    if let Some(db) = db {
        for n in 0..s.n {
            for (o, chunk) in dy[n * out_len..(n + 1) * out_len].chunks(s.ho * s.wo).enumerate() {
                db[o] += chunk.iter().sum::<f64>();
            }
        }
    }
}

/// Per-(sample, channel) normalization in place. Returns `1/σ` for each plane.
pub fn instance_norm_forward(x: &mut [f64], planes: usize, eps: f64) -> Vec<f64> {
    let len = x.len() / planes;
    x.chunks_mut(len)
        .map(|p| {
            let mean = p.iter().sum::<f64>() / len as f64;
            let var = p.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
            let inv = 1.0 / (var + eps).sqrt();
            p.iter_mut().for_each(|v| *v = (*v - mean) * inv);
            inv
        })
        .collect()
}

/// `dx = (dy − mean(dy) − y·mean(dy·y)) / σ` per plane, accumulated into `dx`.
pub fn instance_norm_backward(y: &[f64], dy: &[f64], inv_std: &[f64], dx: &mut [f64]) {
    let planes = inv_std.len();
    let len = y.len() / planes;
    for p in 0..planes {
        let r = p * len..(p + 1) * len;
        let (yp, dyp) = (&y[r.clone()], &dy[r.clone()]);
        let mean_dy = dyp.iter().sum::<f64>() / len as f64;
        let mean_dyy = dyp.iter().zip(yp).map(|(a, b)| a * b).sum::<f64>() / len as f64;
        for ((d, &g), &v) in dx[r].iter_mut().zip(dyp).zip(yp) {
            *d += inv_std[p] * (g - mean_dy - v * mean_dyy);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct sliding-window convolution.
    fn naive_conv(x: &[f64], w: &[f64], s: &ConvShape, g: ConvGeom) -> Vec<f64> {
        let k = g.kernel;
        let mut y = vec![0.0; s.n * s.c_out * s.ho * s.wo];
        for n in 0..s.n {
            for o in 0..s.c_out {
                for oy in 0..s.ho {
                    for ox in 0..s.wo {
                        let mut acc = 0.0;
                        for c in 0..s.c_in {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < s.h && (ix as usize) < s.w {
                                        acc += x[((n * s.c_in + c) * s.h + iy as usize) * s.w + ix as usize]
                                            * w[((o * s.c_in + c) * k + ki) * k + kj];
                                    }
                                }
                            }
                        }
                        y[((n * s.c_out + o) * s.ho + oy) * s.wo + ox] = acc;
                    }
                }
            }
        }
        y
    }

    fn seq(n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|i| ((i * 37 % 23) as f64 - 11.0) * scale).collect()
    }

    #[test]
    fn conv_matches_naive() {
        for &(k, st, p) in &[(3, 1, 1), (3, 2, 1), (4, 2, 2), (7, 1, 3), (1, 1, 0)] {
            let g = ConvGeom::new(k, st, p);
            let (h, w) = (9, 7);
            let s = ConvShape { n: 2, c_in: 3, h, w, c_out: 4, ho: g.conv_out(h).unwrap(), wo: g.conv_out(w).unwrap() };
            let x = seq(2 * 3 * h * w, 0.1);
            let wt = seq(4 * 3 * k * k, 0.05);
            let mut y = vec![0.0; 2 * 4 * s.ho * s.wo];
            conv2d_forward(&x, &wt, None, &s, g, &mut y);
            let expect = naive_conv(&x, &wt, &s, g);
            for (a, b) in y.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transpose_is_adjoint_of_conv() {
        // <conv(u), v> == <u, conv_t(v)> with shared weights.
        let g = ConvGeom::new(3, 2, 1);
        let (h, w) = (8, 6);
        let (ho, wo) = (g.conv_out(h).unwrap(), g.conv_out(w).unwrap());
        let conv_s = ConvShape { n: 1, c_in: 2, h, w, c_out: 3, ho, wo };
        let u = seq(2 * h * w, 0.1);
        let wt = seq(3 * 2 * 9, 0.07);
        let mut cu = vec![0.0; 3 * ho * wo];
        conv2d_forward(&u, &wt, None, &conv_s, g, &mut cu);
        let v = seq(3 * ho * wo, 0.03);
        // Transposed conv maps (3, ho, wo) -> (2, h, w); its weight is [C_in=3, C_out=2, k, k].
        let t_s = ConvShape { n: 1, c_in: 3, h: ho, w: wo, c_out: 2, ho: h, wo: w };
        let mut tv = vec![0.0; 2 * h * w];
        conv_transpose2d_forward(&v, &wt, None, &t_s, g, &mut tv);
        let lhs: f64 = cu.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&tv).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn instance_norm_moments() {
        let mut x = seq(2 * 50, 0.3);
        instance_norm_forward(&mut x, 2, 1e-5);
        for p in x.chunks(50) {
            let m = p.iter().sum::<f64>() / 50.0;
            let v = p.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 50.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-4);
        }
    }
}
