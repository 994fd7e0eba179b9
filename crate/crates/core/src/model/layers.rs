//! Stateless pieces of the network and their derivatives.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::Real;

pub(crate) const LN_EPS: f64 = 1e-6;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044715;

/// Interleaved `(sin, cos)` pairs of `t * 10000^(-i / (dim/2))`.
pub fn timestep_embedding(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        let arg = t * freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

fn sincos_1d(dim: usize, pos: f64, out: &mut [f64]) {
    let quarter = dim / 2;
    for i in 0..quarter {
        let omega = 1.0 / 10000f64.powf(i as f64 / quarter as f64);
        out[i] = (pos * omega).sin();
        out[quarter + i] = (pos * omega).cos();
    }
}

/// Fixed 2-D position term, one row per token (row-major, x fastest). The
/// first half of each row encodes the column index, the second the row index.
pub fn sincos_pos_embed(dim: usize, gw: usize, gh: usize) -> Array2<f64> {
    let mut out = Array2::zeros((gw * gh, dim));
    for gy in 0..gh {
        for gx in 0..gw {
            let mut row = out.row_mut(gy * gw + gx);
            let row = row.as_slice_mut().unwrap();
            let (a, b) = row.split_at_mut(dim / 2);
            sincos_1d(dim / 2, gx as f64, a);
            sincos_1d(dim / 2, gy as f64, b);
        }
    }
    out
}

/// Cuts channel-major `values` (`channels * ny * nx`) into `p x p` patches.
/// Row `l = py * (nx/p) + px`; within a row the order is `(dy, dx, c)` with
/// channels fastest.
pub fn patchify<T: Copy + Default>(values: &[T], channels: usize, nx: usize, ny: usize, p: usize) -> Array2<T> {
    let (gw, gh) = (nx / p, ny / p);
    let mut out = Array2::from_elem((gw * gh, p * p * channels), T::default());
    for gy in 0..gh {
        for gx in 0..gw {
            let mut row = out.row_mut(gy * gw + gx);
            for dy in 0..p {
                for dx in 0..p {
                    let cell = (gy * p + dy) * nx + gx * p + dx;
                    for c in 0..channels {
                        row[(dy * p + dx) * channels + c] = values[c * nx * ny + cell];
                    }
                }
            }
        }
    }
    out
}

/// Inverse of [`patchify`].
pub fn unpatchify<T: Copy + Default>(tokens: ArrayView2<T>, channels: usize, nx: usize, ny: usize, p: usize) -> Vec<T> {
    let gw = nx / p;
    let mut out = vec![T::default(); channels * nx * ny];
    for (l, row) in tokens.outer_iter().enumerate() {
        let (gy, gx) = (l / gw, l % gw);
        for dy in 0..p {
            for dx in 0..p {
                let cell = (gy * p + dy) * nx + gx * p + dx;
                for c in 0..channels {
                    out[c * nx * ny + cell] = row[(dy * p + dx) * channels + c];
                }
            }
        }
    }
    out
}

/// Copies a `channels x ny x nx` block into a zero `channels x nyp x nxp` one.
pub(crate) fn pad<T: Copy + Default>(
    values: &[T],
    channels: usize,
    nx: usize,
    ny: usize,
    nxp: usize,
    nyp: usize,
) -> Vec<T> {
    if (nx, ny) == (nxp, nyp) {
        return values.to_vec();
    }
    let mut out = vec![T::default(); channels * nxp * nyp];
    for c in 0..channels {
        for j in 0..ny {
            let src = &values[c * nx * ny + j * nx..][..nx];
            out[c * nxp * nyp + j * nxp..][..nx].copy_from_slice(src);
        }
    }
    out
}

pub(crate) fn crop<T: Copy>(values: &[T], channels: usize, nxp: usize, nyp: usize, nx: usize, ny: usize) -> Vec<T> {
    if (nx, ny) == (nxp, nyp) {
        return values.to_vec();
    }
    let mut out = Vec::with_capacity(channels * nx * ny);
    for c in 0..channels {
        for j in 0..ny {
            out.extend_from_slice(&values[c * nxp * nyp + j * nxp..][..nx]);
        }
    }
    out
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn silu<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

pub(crate) fn silu_grad<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

pub(crate) fn gelu<T: Real>(x: T) -> T {
    let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh())
}

pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    let th = u.tanh();
    let du = T::of(GELU_C) * (T::one() + T::of(3.0 * GELU_A) * x * x);
    T::of(0.5) * (T::one() + th) + T::of(0.5) * x * (T::one() - th * th) * du
}

/// Row-wise layer norm without affine parameters. Returns normalized rows and
/// the reciprocal standard deviations.
pub(crate) fn layer_norm<T: Real>(x: &Array2<T>) -> (Array2<T>, Array1<T>) {
    let d = T::of(x.ncols() as f64);
    let mut out = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in out.outer_iter_mut().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        *r = T::one() / (var + T::of(LN_EPS)).sqrt();
        let k = *r;
        row.mapv_inplace(|v| v * k);
    }
    (out, rstd)
}

pub(crate) fn layer_norm_backward<T: Real>(dxhat: &Array2<T>, xhat: &Array2<T>, rstd: &Array1<T>) -> Array2<T> {
    let d = T::of(xhat.ncols() as f64);
    let mut dx = Array2::zeros(xhat.raw_dim());
    for (((mut out, g), h), &r) in dx.outer_iter_mut().zip(dxhat.outer_iter()).zip(xhat.outer_iter()).zip(rstd) {
        let mg = g.sum() / d;
        let mgh = g.iter().zip(h).map(|(&a, &b)| a * b).sum::<T>() / d;
        for ((o, &gi), &hi) in out.iter_mut().zip(g).zip(h) {
            *o = r * (gi - mg - hi * mgh);
        }
    }
    dx
}

/// `h * (1 + scale) + shift`, broadcasting the vectors over rows.
pub(crate) fn modulate<T: Real>(h: &Array2<T>, shift: &Array1<T>, scale: &Array1<T>) -> Array2<T> {
    let one_plus = scale.mapv(|v| T::one() + v);
    h * &one_plus + shift
}

/// Gradients of [`modulate`]: `(d_h, d_shift, d_scale)`.
pub(crate) fn modulate_backward<T: Real>(
    dm: &Array2<T>,
    h: &Array2<T>,
    scale: &Array1<T>,
) -> (Array2<T>, Array1<T>, Array1<T>) {
    let one_plus = scale.mapv(|v| T::one() + v);
    let dh = dm * &one_plus;
    let dshift = dm.sum_axis(Axis(0));
    let dscale = (dm * h).sum_axis(Axis(0));
    (dh, dshift, dscale)
}

pub(crate) fn softmax_rows<T: Real>(s: &mut Array2<T>) {
    for mut row in s.outer_iter_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

pub(crate) fn softmax_rows_backward<T: Real>(dp: &Array2<T>, p: &Array2<T>) -> Array2<T> {
    let mut ds = dp * p;
    for (mut row, prow) in ds.outer_iter_mut().zip(p.outer_iter()) {
        let dot = row.sum();
        for (v, &pv) in row.iter_mut().zip(prow) {
            *v -= pv * dot;
        }
    }
    ds
}

/// The `i`-th `width`-long segment of a `1 x (k * width)` row.
pub(crate) fn segment<T: Real>(row: &Array2<T>, i: usize, width: usize) -> Array1<T> {
    row.slice(s![0, i * width..(i + 1) * width]).to_owned()
}
