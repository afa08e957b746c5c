//! Forward and backward kernels for every layer kind the detectors use.
//!
//! All functions are pure: forward passes return whatever the matching
//! backward pass needs as an explicit cache value.

use crate::arch::BBox;
use crate::nn::Tensor;
use crate::{Error, Result, Scalar};

fn shape_err(what: &str, a: [usize; 4], b: [usize; 4]) -> Error {
    Error::contract(format!("{what}: incompatible shapes {a:?} and {b:?}"))
}

/// Output spatial size of a convolution along one axis.
pub fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < k {
        None
    } else {
        Some((padded - k) / stride + 1)
    }
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input_shape: [usize; 4],
    /// im2col matrix per sample, `(c_in·k·k) × (oh·ow)`; empty for 1×1/stride 1/pad 0
    cols: Vec<Vec<T>>,
    input: Option<Tensor<T>>,
    stride: usize,
    pad: usize,
    k: usize,
    out_hw: (usize, usize),
}

fn is_pointwise(k: usize, stride: usize, pad: usize) -> bool {
    k == 1 && stride == 1 && pad == 0
}

fn im2col<T: Scalar>(
    x: &[T],
    (c, h, w): (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let p = oh * ow;
    let mut cols = vec![T::zero(); c * k * k * p];
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * p..][..p];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..][..w];
                    let dst = &mut row[oy * ow..][..ow];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(
    cols: &[T],
    dx: &mut [T],
    (c, h, w): (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) {
    let p = oh * ow;
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * p..][..p];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            let d = &mut plane[iy as usize * w + ix as usize];
                            *d = *d + row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `input (n, c_in, h, w)` with `weight (c_out, c_in, k, k)` plus bias.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &[T],
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    conv2d_forward(input, weight, bias, stride, pad).map(|(y, _)| y)
}

pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &[T],
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, ConvCache<T>)> {
    let [n, c_in, h, w] = input.shape();
    let [c_out, wc_in, k, k2] = weight.shape();
    if wc_in != c_in || k != k2 {
        return Err(shape_err("conv2d input vs weight", input.shape(), weight.shape()));
    }
    if bias.len() != c_out {
        return Err(Error::contract(format!(
            "conv2d: bias has {} entries for {c_out} output channels",
            bias.len()
        )));
    }
    if stride == 0 {
        return Err(Error::contract("conv2d: stride must be at least 1"));
    }
    let (Some(oh), Some(ow)) = (conv_out_dim(h, k, stride, pad), conv_out_dim(w, k, stride, pad))
    else {
        return Err(shape_err("conv2d kernel larger than padded input", input.shape(), weight.shape()));
    };
    let p = oh * ow;
    let kk = c_in * k * k;
    let mut out = Tensor::zeros([n, c_out, oh, ow]);
    let pointwise = is_pointwise(k, stride, pad);
    let mut all_cols = Vec::with_capacity(if pointwise { 0 } else { n });
    let in_per = c_in * h * w;
    let out_per = c_out * p;
    for b in 0..n {
        let x = &input.data()[b * in_per..(b + 1) * in_per];
        let y = &mut out.data_mut()[b * out_per..(b + 1) * out_per];
        for (co, row) in y.chunks_mut(p).enumerate() {
            row.fill(bias[co]);
        }
        if pointwise {
            T::gemm(c_out, kk, p, T::one(), weight.data(), false, x, false, T::one(), y);
        } else {
            let cols = im2col(x, (c_in, h, w), k, stride, pad, (oh, ow));
            T::gemm(c_out, kk, p, T::one(), weight.data(), false, &cols, false, T::one(), y);
            all_cols.push(cols);
        }
    }
    let cache = ConvCache {
        input_shape: input.shape(),
        cols: all_cols,
        input: pointwise.then(|| input.clone()),
        stride,
        pad,
        k,
        out_hw: (oh, ow),
    };
    Ok((out, cache))
}

/// Returns `(d_input, d_weight, d_bias)`.
pub fn conv2d_backward<T: Scalar>(
    cache: &ConvCache<T>,
    weight: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let [n, c_in, h, w] = cache.input_shape;
    let c_out = weight.shape()[0];
    let (oh, ow) = cache.out_hw;
    if dy.shape() != [n, c_out, oh, ow] {
        return Err(shape_err("conv2d backward", dy.shape(), [n, c_out, oh, ow]));
    }
    let k = cache.k;
    let p = oh * ow;
    let kk = c_in * k * k;
    let mut dx = Tensor::zeros(cache.input_shape);
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = vec![T::zero(); c_out];
    let in_per = c_in * h * w;
    let mut dcols = vec![T::zero(); kk * p];
    for b in 0..n {
        let g = &dy.data()[b * c_out * p..(b + 1) * c_out * p];
        for (co, row) in g.chunks(p).enumerate() {
            db[co] = db[co] + row.iter().copied().sum::<T>();
        }
        let cols: &[T] = match &cache.input {
            Some(x) => &x.data()[b * in_per..(b + 1) * in_per],
            None => &cache.cols[b],
        };
        T::gemm(c_out, p, kk, T::one(), g, false, cols, true, T::one(), dw.data_mut());
        let dxb = &mut dx.data_mut()[b * in_per..(b + 1) * in_per];
        if cache.input.is_some() {
            T::gemm(kk, c_out, p, T::one(), weight.data(), true, g, false, T::zero(), dxb);
        } else {
            T::gemm(kk, c_out, p, T::one(), weight.data(), true, g, false, T::zero(), &mut dcols);
            col2im(&dcols, dxb, (c_in, h, w), k, cache.stride, cache.pad, (oh, ow));
        }
    }
    Ok((dx, dw, db))
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of relu given the forward *output* (positive exactly where the input was).
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (d, &y) in dx.data_mut().iter_mut().zip(output.data()) {
        if y <= T::zero() {
            *d = T::zero();
        }
    }
    dx
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    input_shape: [usize; 4],
    argmax: Vec<usize>,
}

/// 2×2 max pooling with stride 2; a trailing odd row/column is dropped.
pub fn maxpool2x2<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolCache)> {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(Error::contract(format!("maxpool2x2 needs at least 2×2 input, got {:?}", x.shape())));
    }
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let src = x.data();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                out.data_mut()[o] = src[best];
                argmax.push(best);
                o += 1;
            }
        }
    }
    Ok((out, PoolCache { input_shape: x.shape(), argmax }))
}

pub fn maxpool2x2_backward<T: Scalar>(cache: &PoolCache, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(cache.input_shape);
    for (&i, &g) in cache.argmax.iter().zip(dy.data()) {
        dx.data_mut()[i] = dx.data_mut()[i] + g;
    }
    dx
}

/// Affine map on the flattened input: `x (n, d)` and `weight (out, d, 1, 1)` give `(n, out, 1, 1)`.
pub fn fully_connected<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    let n = x.n();
    let d = if n == 0 { 0 } else { x.len() / n };
    let [out, wd, wh, ww] = weight.shape();
    if wd * wh * ww != d || bias.len() != out {
        return Err(shape_err("fully_connected input vs weight", x.shape(), weight.shape()));
    }
    let mut y = Tensor::zeros([n, out, 1, 1]);
    for row in y.data_mut().chunks_mut(out) {
        row.copy_from_slice(bias);
    }
    T::gemm(n, d, out, T::one(), x.data(), false, weight.data(), true, T::one(), y.data_mut());
    Ok(y)
}

/// Returns `(d_input, d_weight, d_bias)`; `d_input` has the original input shape.
pub fn fully_connected_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Vec<T>) {
    let n = x.n();
    let d = if n == 0 { 0 } else { x.len() / n };
    let out = weight.shape()[0];
    let mut dw = Tensor::zeros(weight.shape());
    T::gemm(out, n, d, T::one(), dy.data(), true, x.data(), false, T::zero(), dw.data_mut());
    let mut dx = Tensor::zeros(x.shape());
    T::gemm(n, out, d, T::one(), dy.data(), false, weight.data(), false, T::zero(), dx.data_mut());
    let mut db = vec![T::zero(); out];
    for row in dy.data().chunks(out) {
        for (b, &g) in db.iter_mut().zip(row) {
            *b = *b + g;
        }
    }
    (dx, dw, db)
}

/// Softmax across channels at every `(n, y, x)` position.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let mut y = x.clone();
    let plane = h * w;
    for b in 0..n {
        for pos in 0..plane {
            let idx = |ch: usize| (b * c + ch) * plane + pos;
            let max = (0..c).map(|ch| x.data()[idx(ch)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for ch in 0..c {
                let e = (x.data()[idx(ch)] - max).exp();
                y.data_mut()[idx(ch)] = e;
                total = total + e;
            }
            for ch in 0..c {
                y.data_mut()[idx(ch)] = y.data()[idx(ch)] / total;
            }
        }
    }
    y
}

/// Backward of [`softmax`] given its output.
pub fn softmax_backward<T: Scalar>(output: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = output.shape();
    let plane = h * w;
    let mut dx = Tensor::zeros(output.shape());
    for b in 0..n {
        for pos in 0..plane {
            let idx = |ch: usize| (b * c + ch) * plane + pos;
            let dot: T = (0..c).map(|ch| output.data()[idx(ch)] * dy.data()[idx(ch)]).sum();
            for ch in 0..c {
                dx.data_mut()[idx(ch)] = output.data()[idx(ch)] * (dy.data()[idx(ch)] - dot);
            }
        }
    }
    dx
}

/// Stacks `a` and `b` along the channel axis, `a` first.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, ca, h, w] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if (n, h, w) != (nb, hb, wb) {
        return Err(shape_err("concat_channels", a.shape(), b.shape()));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(a.len() + b.len());
    for s in 0..n {
        data.extend_from_slice(&a.data()[s * ca * plane..(s + 1) * ca * plane]);
        data.extend_from_slice(&b.data()[s * cb * plane..(s + 1) * cb * plane]);
    }
    Tensor::from_vec([n, ca + cb, h, w], data)
}

/// Splits an incoming gradient at channel `ca`.
pub fn concat_channels_backward<T: Scalar>(dy: &Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let cb = dy.c() - ca;
    (dy.channel_slice(0, ca), dy.channel_slice(ca, cb))
}

/// Feature-cell window `[start, end)` of an RoI along one axis.
///
/// The start corner is floored; the end corner is floored and treated as
/// inclusive. Both are clamped to the map and at least one cell survives.
pub fn roi_cell_range(lo: f64, hi: f64, scale: f64, size: usize) -> (usize, usize) {
    let max = size as isize - 1;
    let start = ((lo * scale).floor() as isize).clamp(0, max);
    let last = ((hi * scale).floor() as isize).clamp(0, max);
    let end = last.max(start) + 1;
    (start as usize, end as usize)
}

/// Bin `i` of `bins` over a window of `len` cells: `[⌊i·len/bins⌋, ⌈(i+1)·len/bins⌉)`.
pub fn roi_bin(i: usize, bins: usize, len: usize) -> (usize, usize) {
    let start = (i * len) / bins;
    let end = ((i + 1) * len).div_ceil(bins);
    (start, end)
}

#[derive(Debug, Clone)]
pub struct RoiCache {
    input_shape: [usize; 4],
    argmax: Vec<usize>,
}

/// Max-pools the region of `features (1, c, h, w)` under `roi` into a fixed `out_h × out_w` grid.
pub fn roi_pool<T: Scalar>(
    features: &Tensor<T>,
    roi: &BBox<T>,
    spatial_scale: f64,
    (out_h, out_w): (usize, usize),
) -> Result<(Tensor<T>, RoiCache)> {
    let [n, c, h, w] = features.shape();
    if n != 1 {
        return Err(Error::contract(format!("roi_pool expects a single feature map, got {:?}", features.shape())));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::contract("roi_pool output size must be at least 1×1"));
    }
    let (x0, x1) = roi_cell_range(roi.x1.as_f64(), roi.x2.as_f64(), spatial_scale, w);
    let (y0, y1) = roi_cell_range(roi.y1.as_f64(), roi.y2.as_f64(), spatial_scale, h);
    let (rw, rh) = (x1 - x0, y1 - y0);
    let mut out = Tensor::zeros([1, c, out_h, out_w]);
    let mut argmax = Vec::with_capacity(c * out_h * out_w);
    let src = features.data();
    let mut o = 0;
    for ch in 0..c {
        let base = ch * h * w;
        for by in 0..out_h {
            let (sy, ey) = roi_bin(by, out_h, rh);
            for bx in 0..out_w {
                let (sx, ex) = roi_bin(bx, out_w, rw);
                let mut best = base + (y0 + sy) * w + x0 + sx;
                for yy in y0 + sy..y0 + ey {
                    for xx in x0 + sx..x0 + ex {
                        let i = base + yy * w + xx;
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                }
                out.data_mut()[o] = src[best];
                argmax.push(best);
                o += 1;
            }
        }
    }
    Ok((out, RoiCache { input_shape: features.shape(), argmax }))
}

/// Accumulates an RoI's output gradient into `d_features` at the argmax cells.
pub fn roi_pool_backward<T: Scalar>(cache: &RoiCache, dy: &[T], d_features: &mut Tensor<T>) -> Result<()> {
    if d_features.shape() != cache.input_shape || dy.len() != cache.argmax.len() {
        return Err(shape_err("roi_pool backward", d_features.shape(), cache.input_shape));
    }
    let buf = d_features.data_mut();
    for (&i, &g) in cache.argmax.iter().zip(dy) {
        buf[i] = buf[i] + g;
    }
    Ok(())
}
