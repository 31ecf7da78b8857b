//! Forward kernels and their backward counterparts.
//!
//! The forward functions are usable on their own (eager evaluation); the
//! [`Tape`](super::Tape) records them together with whatever the backward
//! pass needs.

use super::scalar::{gemm, Layout};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new<T: Scalar>(
        x: &Tensor<T>,
        weight: &Tensor<T>,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Self> {
        let (n, cin, h, w) = x.dims4("conv2d")?;
        let (cout, wcin, kh, kw) = weight.dims4("conv2d")?;
        if wcin != cin {
            return Err(Error::dim(
                "conv2d",
                format!("input channels (axis 1) = {cin} but weight expects {wcin}"),
            ));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::dim("conv2d", "stride must be positive"));
        }
        if h + 2 * pad.0 < kh || w + 2 * pad.1 < kw {
            return Err(Error::dim(
                "conv2d",
                format!(
                    "kernel {kh}×{kw} larger than padded input {}×{} (axes 2, 3)",
                    h + 2 * pad.0,
                    w + 2 * pad.1
                ),
            ));
        }
        Ok(Self {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            sh: stride.0,
            sw: stride.1,
            ph: pad.0,
            pw: pad.1,
            oh: (h + 2 * pad.0 - kh) / stride.0 + 1,
            ow: (w + 2 * pad.1 - kw) / stride.1 + 1,
        })
    }

    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// 1×1, unit stride, no padding: the input plane already is the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1 && self.ph == 0 && self.pw == 0
    }

    /// Output columns `ox` whose input column `ox*sw + kj - pw` lies inside `[0, w)`.
    fn valid_ox(&self, kj: usize) -> (usize, usize) {
        let lo = if kj >= self.pw {
            0
        } else {
            (self.pw - kj).div_ceil(self.sw)
        };
        let hi = if self.w + self.pw > kj {
            ((self.w - 1 + self.pw - kj) / self.sw + 1).min(self.ow)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let p = self.positions();
        for c in 0..self.cin {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    let (lo, hi) = self.valid_ox(kj);
                    for oy in 0..self.oh {
                        let out = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        let iy = (oy * self.sh + ki) as isize - self.ph as isize;
                        if iy < 0 || iy >= self.h as isize {
                            out.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        out[..lo].fill(T::zero());
                        out[hi..].fill(T::zero());
                        if self.sw == 1 {
                            let start = lo + kj - self.pw;
                            out[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                        } else {
                            for (ox, o) in out.iter_mut().enumerate().take(hi).skip(lo) {
                                *o = src[ox * self.sw + kj - self.pw];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let p = self.positions();
        for c in 0..self.cin {
            let plane = &mut dx[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * p..(row + 1) * p];
                    let (lo, hi) = self.valid_ox(kj);
                    for oy in 0..self.oh {
                        let iy = (oy * self.sh + ki) as isize - self.ph as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        let s = &src[oy * self.ow..(oy + 1) * self.ow];
                        for ox in lo..hi {
                            dst[ox * self.sw + kj - self.pw] += s[ox];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation with zero padding.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<Tensor<T>> {
    let g = ConvGeom::new(x, weight, stride, pad)?;
    if let Some(b) = bias {
        if b.shape() != [g.cout] {
            return Err(Error::dim(
                "conv2d",
                format!("bias shape {:?} but {} output channels", b.shape(), g.cout),
            ));
        }
    }
    let (k, p) = (g.patch(), g.positions());
    let in_stride = g.cin * g.h * g.w;
    let out_stride = g.cout * p;
    let mut out = vec![T::zero(); g.n * out_stride];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); k * p]
    };
    for i in 0..g.n {
        let xi = &x.data()[i * in_stride..(i + 1) * in_stride];
        let yi = &mut out[i * out_stride..(i + 1) * out_stride];
        let cm: &[T] = if g.is_pointwise() {
            xi
        } else {
            g.im2col(xi, &mut cols);
            &cols
        };
        gemm(g.cout, p, k, weight.data(), Layout::Normal, cm, Layout::Normal, yi, false);
        if let Some(b) = bias {
            for (co, row) in yi.chunks_exact_mut(p).enumerate() {
                let bv = b.data()[co];
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Tensor::new(vec![g.n, g.cout, g.oh, g.ow], out)
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Option<Tensor<T>>,
    pub db: Option<Tensor<T>>,
}

pub(crate) fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    gy: &Tensor<T>,
    stride: (usize, usize),
    pad: (usize, usize),
    need: (bool, bool, bool),
) -> Result<ConvGrads<T>> {
    let g = ConvGeom::new(x, weight, stride, pad)?;
    let (k, p) = (g.patch(), g.positions());
    let in_stride = g.cin * g.h * g.w;
    let out_stride = g.cout * p;
    let (need_dx, need_dw, need_db) = need;
    let mut dx = need_dx.then(|| vec![T::zero(); x.len()]);
    let mut dw = need_dw.then(|| vec![T::zero(); weight.len()]);
    let mut db = need_db.then(|| vec![T::zero(); g.cout]);
    let pointwise = g.is_pointwise();
    let mut cols = vec![T::zero(); if pointwise { 0 } else { k * p }];
    let mut dcols = vec![T::zero(); if pointwise || !need_dx { 0 } else { k * p }];
    for i in 0..g.n {
        let gyi = &gy.data()[i * out_stride..(i + 1) * out_stride];
        if let Some(db) = db.as_mut() {
            for (co, row) in gyi.chunks_exact(p).enumerate() {
                db[co] += row.iter().copied().fold(T::zero(), |a, b| a + b);
            }
        }
        if let Some(dw) = dw.as_mut() {
            let xi = &x.data()[i * in_stride..(i + 1) * in_stride];
            let cm: &[T] = if pointwise {
                xi
            } else {
                g.im2col(xi, &mut cols);
                &cols
            };
            gemm(g.cout, k, p, gyi, Layout::Normal, cm, Layout::Transposed, dw, true);
        }
        if let Some(dx) = dx.as_mut() {
            let dxi = &mut dx[i * in_stride..(i + 1) * in_stride];
            if pointwise {
                gemm(k, p, g.cout, weight.data(), Layout::Transposed, gyi, Layout::Normal, dxi, true);
            } else {
                gemm(
                    k,
                    p,
                    g.cout,
                    weight.data(),
                    Layout::Transposed,
                    gyi,
                    Layout::Normal,
                    &mut dcols,
                    false,
                );
                g.col2im(&dcols, dxi);
            }
        }
    }
    Ok(ConvGrads {
        dx: dx.map(|d| Tensor::new(x.shape().to_vec(), d)).transpose()?,
        dw: dw.map(|d| Tensor::new(weight.shape().to_vec(), d)).transpose()?,
        db: db.map(|d| Tensor::new(vec![g.cout], d)).transpose()?,
    })
}

/// Floor-mode max pooling without padding.
///
/// Returns the pooled tensor and, for every output element, the flat input
/// index that won (first index on ties).
pub fn maxpool2d<T: Scalar>(
    x: &Tensor<T>,
    kernel: (usize, usize),
    stride: (usize, usize),
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = x.dims4("maxpool2d")?;
    let (kh, kw) = kernel;
    let (sh, sw) = stride;
    if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
        return Err(Error::dim("maxpool2d", "kernel and stride must be positive"));
    }
    if h < kh || w < kw {
        return Err(Error::dim(
            "maxpool2d",
            format!("kernel {kh}×{kw} larger than input {h}×{w} (axes 2, 3)"),
        ));
    }
    let oh = (h - kh) / sh + 1;
    let ow = (w - kw) / sw + 1;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    let xd = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * sh * w + ox * sw;
                let mut best_v = xd[best];
                for ki in 0..kh {
                    let row = base + (oy * sh + ki) * w + ox * sw;
                    for kj in 0..kw {
                        let v = xd[row + kj];
                        if v > best_v {
                            best_v = v;
                            best = row + kj;
                        }
                    }
                }
                out.push(best_v);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, oh, ow], out)?, arg))
}

/// Max-feature-map: elementwise max of channel `k` and channel `k + C`,
/// halving the channel axis (axis 1) of a rank-2 or rank-4 tensor.
///
/// The returned mask is `true` where the first half won (ties included).
pub fn mfm<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<bool>)> {
    let shape = x.shape();
    if shape.len() != 2 && shape.len() != 4 {
        return Err(Error::dim("mfm", format!("expected rank 2 or 4, got {shape:?}")));
    }
    let channels = shape[1];
    if !channels.is_multiple_of(2) {
        return Err(Error::dim(
            "mfm",
            format!("channel axis (axis 1) has odd size {channels}"),
        ));
    }
    let half = channels / 2;
    let inner: usize = shape[2..].iter().product();
    let n = shape[0];
    let mut out = Vec::with_capacity(x.len() / 2);
    let mut mask = Vec::with_capacity(x.len() / 2);
    for i in 0..n {
        let sample = &x.data()[i * channels * inner..(i + 1) * channels * inner];
        let (a, b) = sample.split_at(half * inner);
        for (&u, &v) in a.iter().zip(b) {
            let first = u >= v;
            out.push(if first { u } else { v });
            mask.push(first);
        }
    }
    let mut out_shape = shape.to_vec();
    out_shape[1] = half;
    Ok((Tensor::new(out_shape, out)?, mask))
}

/// `y = x·Wᵀ + b` for `x: N×D_in`, `W: D_out×D_in`.
pub fn linear<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (n, din) = x.dims2("linear")?;
    let (dout, wdin) = weight.dims2("linear")?;
    if din != wdin {
        return Err(Error::dim(
            "linear",
            format!("input features (axis 1) = {din} but weight expects {wdin}"),
        ));
    }
    let mut out = vec![T::zero(); n * dout];
    gemm(n, dout, din, x.data(), Layout::Normal, weight.data(), Layout::Transposed, &mut out, false);
    if let Some(b) = bias {
        if b.shape() != [dout] {
            return Err(Error::dim(
                "linear",
                format!("bias shape {:?} but {dout} outputs", b.shape()),
            ));
        }
        for row in out.chunks_exact_mut(dout) {
            row.iter_mut().zip(b.data()).for_each(|(v, &bv)| *v += bv);
        }
    }
    Tensor::new(vec![n, dout], out)
}

/// Batch normalization hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BnConfig {
    pub momentum: f64,
    pub eps: f64,
}

impl Default for BnConfig {
    fn default() -> Self {
        Self {
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

/// Running mean/variance of a batch-normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T = f32> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// Number of training batches folded into the statistics.
    pub batches: u64,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            batches: 0,
        }
    }
}

/// Batch-normalization mode: training updates running statistics in place.
pub enum BnMode<'a, T> {
    Train(&'a mut RunningStats<T>),
    Eval(&'a RunningStats<T>),
}

pub(crate) struct BnSaved<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub train: bool,
}

pub(crate) fn batchnorm2d<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mode: BnMode<'_, T>,
    cfg: BnConfig,
) -> Result<(Tensor<T>, BnSaved<T>)> {
    let (n, c, h, w) = x.dims4("batchnorm2d")?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::dim(
            "batchnorm2d",
            format!(
                "{c} channels but gamma {:?} / beta {:?}",
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    let stats_channels = match &mode {
        BnMode::Train(s) => s.mean.len(),
        BnMode::Eval(s) => s.mean.len(),
    };
    if stats_channels != c {
        return Err(Error::dim(
            "batchnorm2d",
            format!("{c} channels but running stats hold {stats_channels}"),
        ));
    }
    let hw = h * w;
    let count = n * hw;
    let eps = T::from_f64(cfg.eps);
    let xd = x.data();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    let train = matches!(mode, BnMode::Train(_));
    match mode {
        BnMode::Train(stats) => {
            for ch in 0..c {
                let mut s = 0.0f64;
                for i in 0..n {
                    let off = (i * c + ch) * hw;
                    s += xd[off..off + hw].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let m = s / count as f64;
                let mut ss = 0.0f64;
                for i in 0..n {
                    let off = (i * c + ch) * hw;
                    ss += xd[off..off + hw]
                        .iter()
                        .map(|v| (v.as_f64() - m).powi(2))
                        .sum::<f64>();
                }
                let v = ss / count as f64;
                mean[ch] = T::from_f64(m);
                var[ch] = T::from_f64(v);
                let unbiased = if count > 1 { ss / (count - 1) as f64 } else { v };
                let mom = cfg.momentum;
                stats.mean[ch] = T::from_f64((1.0 - mom) * stats.mean[ch].as_f64() + mom * m);
                stats.var[ch] =
                    T::from_f64((1.0 - mom) * stats.var[ch].as_f64() + mom * unbiased);
            }
            stats.batches += 1;
        }
        BnMode::Eval(stats) => {
            if stats.batches == 0 {
                log::warn!("batchnorm2d in eval mode before any statistics were recorded");
            }
            mean.copy_from_slice(&stats.mean);
            var.copy_from_slice(&stats.var);
        }
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            let (m, s, g, b) = (mean[ch], inv_std[ch], gamma.data()[ch], beta.data()[ch]);
            for j in off..off + hw {
                let xh = (xd[j] - m) * s;
                xhat[j] = xh;
                out[j] = g * xh + b;
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), out)?,
        BnSaved {
            xhat,
            inv_std,
            train,
        },
    ))
}

pub(crate) fn batchnorm2d_backward<T: Scalar>(
    gy: &Tensor<T>,
    gamma: &Tensor<T>,
    saved: &BnSaved<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = gy.dims4("batchnorm2d")?;
    let hw = h * w;
    let count = T::from_f64((n * hw) as f64);
    let gd = gy.data();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            for (g, xh) in gd[off..off + hw].iter().zip(&saved.xhat[off..off + hw]) {
                dgamma[ch] += *g * *xh;
                dbeta[ch] += *g;
            }
        }
    }
    let mut dx = vec![T::zero(); gy.len()];
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            let g = gamma.data()[ch];
            let s = saved.inv_std[ch];
            if saved.train {
                let scale = g * s / count;
                for j in off..off + hw {
                    dx[j] = scale * (count * gd[j] - dbeta[ch] - saved.xhat[j] * dgamma[ch]);
                }
            } else {
                for j in off..off + hw {
                    dx[j] = gd[j] * g * s;
                }
            }
        }
    }
    Ok((
        Tensor::new(gy.shape().to_vec(), dx)?,
        Tensor::new(vec![c], dgamma)?,
        Tensor::new(vec![c], dbeta)?,
    ))
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Per-channel spatial mean: `N×C×H×W → N×C`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("global_avg_pool")?;
    let hw = h * w;
    let inv = T::from_f64(1.0 / hw as f64);
    let data = x
        .data()
        .chunks_exact(hw)
        .map(|plane| plane.iter().copied().fold(T::zero(), |a, b| a + b) * inv)
        .collect();
    Tensor::new(vec![n, c], data)
}

/// Multiply every `H×W` plane of `x: N×C×H×W` by the matching entry of `s: N×C`.
pub fn scale_channels<T: Scalar>(x: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("scale_channels")?;
    if s.shape() != [n, c] {
        return Err(Error::dim(
            "scale_channels",
            format!("scale shape {:?} does not match N×C = {n}×{c}", s.shape()),
        ));
    }
    let hw = h * w;
    let mut out = x.data().to_vec();
    for (plane, &k) in out.chunks_exact_mut(hw).zip(s.data()) {
        plane.iter_mut().for_each(|v| *v *= k);
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::dim(
            "add",
            format!("shapes {:?} and {:?} differ", a.shape(), b.shape()),
        ));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// Row-wise log-softmax of `N×K` logits.
pub fn log_softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, k) = logits.dims2("log_softmax")?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row
            .iter()
            .map(|&v| (v - max).exp())
            .fold(T::zero(), |a, b| a + b)
            .ln()
            + max;
        row.iter_mut().for_each(|v| *v -= lse);
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// Mean softmax cross-entropy and the softmax probabilities.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
) -> Result<(T, Tensor<T>)> {
    let (n, k) = logits.dims2("softmax_cross_entropy")?;
    if targets.len() != n {
        return Err(Error::dim(
            "softmax_cross_entropy",
            format!("{n} rows of logits but {} targets", targets.len()),
        ));
    }
    if let Some((row, &t)) = targets.iter().enumerate().find(|(_, &t)| t >= k) {
        return Err(Error::Domain(format!(
            "softmax_cross_entropy: target {t} in row {row} outside [0, {k})"
        )));
    }
    let logp = log_softmax(logits)?;
    let mut loss = T::zero();
    for (row, &t) in targets.iter().enumerate() {
        loss -= logp.data()[row * k + t];
    }
    let probs = logp.map(|v| v.exp());
    Ok((loss / T::from_f64(n as f64), probs))
}
