//! Layer specifications, shape propagation and the per-layer kernels.
//!
//! Activations are NCHW for images and `(N, features)` once flattened.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::float::{gemm, Float};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LEAKY_SLOPE: f64 = 0.01;

/// Per-sample activation shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat(usize),
}

impl Shape {
    pub fn image(channels: usize, height: usize, width: usize) -> Self {
        Shape::Image {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            Shape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Full tensor shape for a batch of `n`.
    pub fn with_batch(&self, n: usize) -> Vec<usize> {
        match *self {
            Shape::Image {
                channels,
                height,
                width,
            } => vec![n, channels, height, width],
            Shape::Flat(f) => vec![n, f],
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Image {
                channels,
                height,
                width,
            } => write!(f, "{channels}×{height}×{width}"),
            Shape::Flat(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv {
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
        stride_h: usize,
        stride_w: usize,
        pad_h: usize,
        pad_w: usize,
    },
    MaxPool {
        k: usize,
        stride: usize,
    },
    LeakyRelu {
        slope: f64,
    },
    Relu,
    Linear {
        inputs: usize,
        outputs: usize,
    },
    Dropout {
        p: f64,
    },
    Reshape {
        features: usize,
    },
    LogSoftMax,
    BatchNorm2d {
        features: usize,
    },
    BatchNorm1d {
        features: usize,
    },
    BatchFlip {
        p: f64,
    },
}

/// Shape, decay flag and fan-in of one learnable tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: &'static str,
    pub shape: Vec<usize>,
    /// Weight decay applies (weights of Conv and Linear only).
    pub decay: bool,
    /// Number of inputs feeding each output, used for initialization.
    pub fan_in: usize,
}

impl LayerSpec {
    pub fn conv(in_ch: usize, out_ch: usize, k: usize, pad: usize) -> Self {
        LayerSpec::Conv {
            in_ch,
            out_ch,
            kh: k,
            kw: k,
            stride_h: 1,
            stride_w: 1,
            pad_h: pad,
            pad_w: pad,
        }
    }

    pub fn pool(k: usize) -> Self {
        LayerSpec::MaxPool { k, stride: k }
    }

    pub fn leaky() -> Self {
        LayerSpec::LeakyRelu { slope: LEAKY_SLOPE }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            LayerSpec::Dropout { p } | LayerSpec::BatchFlip { p } if *p > 0.0
        )
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |v: usize, what: &str| {
            if v == 0 {
                Err(format!("{what} must be positive"))
            } else {
                Ok(())
            }
        };
        match *self {
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kh,
                kw,
                stride_h,
                stride_w,
                ..
            } => {
                positive(in_ch, "in_ch")?;
                positive(out_ch, "out_ch")?;
                positive(kh, "kernel height")?;
                positive(kw, "kernel width")?;
                positive(stride_h, "stride")?;
                positive(stride_w, "stride")
            }
            LayerSpec::MaxPool { k, stride } => {
                positive(k, "pool size")?;
                positive(stride, "pool stride")
            }
            LayerSpec::LeakyRelu { slope } if !slope.is_finite() => Err("slope must be finite".into()),
            LayerSpec::Linear { inputs, outputs } => {
                positive(inputs, "inputs")?;
                positive(outputs, "outputs")
            }
            LayerSpec::Dropout { p } | LayerSpec::BatchFlip { p } if !(0.0..1.0).contains(&p) => {
                Err(format!("probability {p} outside [0, 1)"))
            }
            LayerSpec::Reshape { features } => positive(features, "features"),
            LayerSpec::BatchNorm2d { features } | LayerSpec::BatchNorm1d { features } => {
                positive(features, "features")
            }
            _ => Ok(()),
        }
    }

    /// Symbolic forward shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape, String> {
        self.validate()?;
        match (*self, input) {
            (
                LayerSpec::Conv {
                    in_ch,
                    out_ch,
                    kh,
                    kw,
                    stride_h,
                    stride_w,
                    pad_h,
                    pad_w,
                },
                Shape::Image {
                    channels,
                    height,
                    width,
                },
            ) => {
                if channels != in_ch {
                    return Err(format!("expects {in_ch} channels, got {channels}"));
                }
                let (ph, pw) = (height + 2 * pad_h, width + 2 * pad_w);
                if ph < kh || pw < kw {
                    return Err(format!("kernel {kh}×{kw} larger than padded input {ph}×{pw}"));
                }
                Ok(Shape::image(
                    out_ch,
                    (ph - kh) / stride_h + 1,
                    (pw - kw) / stride_w + 1,
                ))
            }
            (
                LayerSpec::MaxPool { k, stride },
                Shape::Image {
                    channels,
                    height,
                    width,
                },
            ) => {
                if height < k || width < k {
                    return Err(format!("pool {k}×{k} larger than input {height}×{width}"));
                }
                Ok(Shape::image(
                    channels,
                    (height - k) / stride + 1,
                    (width - k) / stride + 1,
                ))
            }
            (LayerSpec::Linear { inputs, outputs }, Shape::Flat(n)) => {
                if n != inputs {
                    Err(format!("expects {inputs} features, got {n}"))
                } else {
                    Ok(Shape::Flat(outputs))
                }
            }
            (LayerSpec::Reshape { features }, s) => {
                if s.len() != features {
                    Err(format!("cannot view {s} ({} values) as {features}", s.len()))
                } else {
                    Ok(Shape::Flat(features))
                }
            }
            (LayerSpec::LogSoftMax, s @ Shape::Flat(_)) => Ok(s),
            (LayerSpec::BatchNorm2d { features }, s @ Shape::Image { channels, .. }) => {
                if channels != features {
                    Err(format!("expects {features} channels, got {channels}"))
                } else {
                    Ok(s)
                }
            }
            (LayerSpec::BatchNorm1d { features }, Shape::Flat(n)) => {
                if n != features {
                    Err(format!("expects {features} features, got {n}"))
                } else {
                    Ok(Shape::Flat(n))
                }
            }
            (LayerSpec::BatchFlip { .. }, s @ Shape::Image { .. }) => Ok(s),
            (LayerSpec::LeakyRelu { .. } | LayerSpec::Relu | LayerSpec::Dropout { .. }, s) => Ok(s),
            (spec, s) => Err(format!("{spec} cannot take input {s}")),
        }
    }

    pub fn params(&self) -> Vec<ParamInfo> {
        match *self {
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kh,
                kw,
                ..
            } => {
                let fan_in = in_ch * kh * kw;
                vec![
                    ParamInfo {
                        name: "weight",
                        shape: vec![out_ch, in_ch, kh, kw],
                        decay: true,
                        fan_in,
                    },
                    ParamInfo {
                        name: "bias",
                        shape: vec![out_ch],
                        decay: false,
                        fan_in,
                    },
                ]
            }
            LayerSpec::Linear { inputs, outputs } => vec![
                ParamInfo {
                    name: "weight",
                    shape: vec![outputs, inputs],
                    decay: true,
                    fan_in: inputs,
                },
                ParamInfo {
                    name: "bias",
                    shape: vec![outputs],
                    decay: false,
                    fan_in: inputs,
                },
            ],
            LayerSpec::BatchNorm2d { features } | LayerSpec::BatchNorm1d { features } => vec![
                ParamInfo {
                    name: "gamma",
                    shape: vec![features],
                    decay: false,
                    fan_in: 0,
                },
                ParamInfo {
                    name: "beta",
                    shape: vec![features],
                    decay: false,
                    fan_in: 0,
                },
            ],
            _ => Vec::new(),
        }
    }

    /// Number of running-statistic values (mean then variance per feature).
    pub fn running_len(&self) -> usize {
        match *self {
            LayerSpec::BatchNorm2d { features } | LayerSpec::BatchNorm1d { features } => 2 * features,
            _ => 0,
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kh,
                kw,
                stride_h,
                stride_w,
                pad_h,
                pad_w,
            } => write!(
                f,
                "Conv({in_ch} -> {out_ch}, {kh}x{kw}, {stride_h},{stride_w}, {pad_h},{pad_w})"
            ),
            LayerSpec::MaxPool { k, stride } => write!(f, "MaxPool({k}x{k}, {stride},{stride})"),
            LayerSpec::LeakyRelu { slope } => write!(f, "LeakyReLU({slope})"),
            LayerSpec::Relu => write!(f, "ReLU"),
            LayerSpec::Linear { inputs, outputs } => write!(f, "Linear({inputs} -> {outputs})"),
            LayerSpec::Dropout { p } => write!(f, "Dropout({p})"),
            LayerSpec::Reshape { features } => write!(f, "Reshape({features})"),
            LayerSpec::LogSoftMax => write!(f, "LogSoftMax"),
            LayerSpec::BatchNorm2d { features } => write!(f, "BatchNorm2d({features})"),
            LayerSpec::BatchNorm1d { features } => write!(f, "BatchNorm1d({features})"),
            LayerSpec::BatchFlip { p } => write!(f, "BatchFlip({p})"),
        }
    }
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn from_spec(spec: &LayerSpec, input: Shape, output: Shape) -> Self {
        match (*spec, input, output) {
            (
                LayerSpec::Conv {
                    kh,
                    kw,
                    stride_h,
                    stride_w,
                    pad_h,
                    pad_w,
                    ..
                },
                Shape::Image {
                    channels,
                    height,
                    width,
                },
                Shape::Image {
                    channels: o,
                    height: ho,
                    width: wo,
                },
            ) => ConvGeom {
                c: channels,
                h: height,
                w: width,
                o,
                kh,
                kw,
                sh: stride_h,
                sw: stride_w,
                ph: pad_h,
                pw: pad_w,
                ho,
                wo,
            },
            _ => unreachable!("conv geometry from a non-conv layer"),
        }
    }

    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn hw(&self) -> usize {
        self.ho * self.wo
    }

    /// Batch items per GEMM: enough columns to keep the kernel busy, bounded memory.
    fn chunk(&self, n: usize) -> usize {
        let by_cols = 2048usize.div_ceil(self.hw()).max(1);
        let by_mem = ((8 << 20) / (self.k() * self.hw()).max(1)).max(1);
        by_cols.min(by_mem).min(n).max(1)
    }

    /// Writes the patches of `x` (one item, CHW) into `col`, one row of
    /// `c·kh·kw` values per output position (patch-major).
    fn im2col<F: Float>(&self, x: &[F], col: &mut [F]) {
        let k = self.k();
        let plane_len = self.h * self.w;
        for oy in 0..self.ho {
            for ox in 0..self.wo {
                let row = &mut col[(oy * self.wo + ox) * k..(oy * self.wo + ox + 1) * k];
                let ix0 = (ox * self.sw) as isize - self.pw as isize;
                let inside_x = ix0 >= 0 && ix0 as usize + self.kw <= self.w;
                for ci in 0..self.c {
                    let plane = &x[ci * plane_len..(ci + 1) * plane_len];
                    for ky in 0..self.kh {
                        let dst = &mut row[(ci * self.kh + ky) * self.kw..(ci * self.kh + ky + 1) * self.kw];
                        let iy = (oy * self.sh + ky) as isize - self.ph as isize;
                        if iy < 0 || iy as usize >= self.h {
                            dst.fill(F::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        if inside_x {
                            let ix0 = ix0 as usize;
                            dst.copy_from_slice(&src[ix0..ix0 + self.kw]);
                        } else {
                            for (kx, d) in dst.iter_mut().enumerate() {
                                let ix = ix0 + kx as isize;
                                *d = if ix >= 0 && (ix as usize) < self.w { src[ix as usize] } else { F::zero() };
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`]: accumulates patch rows back into the image `dx`.
    fn col2im<F: Float>(&self, col: &[F], dx: &mut [F]) {
        let k = self.k();
        let plane_len = self.h * self.w;
        for oy in 0..self.ho {
            for ox in 0..self.wo {
                let row = &col[(oy * self.wo + ox) * k..(oy * self.wo + ox + 1) * k];
                let ix0 = (ox * self.sw) as isize - self.pw as isize;
                for ci in 0..self.c {
                    let plane = &mut dx[ci * plane_len..(ci + 1) * plane_len];
                    for ky in 0..self.kh {
                        let iy = (oy * self.sh + ky) as isize - self.ph as isize;
                        if iy < 0 || iy as usize >= self.h {
                            continue;
                        }
                        let src = &row[(ci * self.kh + ky) * self.kw..(ci * self.kh + ky + 1) * self.kw];
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (kx, &g) in src.iter().enumerate() {
                            let ix = ix0 + kx as isize;
                            if ix >= 0 && (ix as usize) < self.w {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `out = conv(x) + bias` for a batch of `n` CHW items.
pub(crate) fn conv_forward<F: Float>(
    g: &ConvGeom,
    x: &[F],
    n: usize,
    weight: &[F],
    bias: &[F],
    out: &mut [F],
) {
    let (k, hw) = (g.k(), g.hw());
    let in_len = g.c * g.h * g.w;
    let out_len = g.o * hw;
    let chunk = g.chunk(n);
    let mut col = vec![F::zero(); k * chunk * hw];
    let mut tmp = vec![F::zero(); g.o * chunk * hw];
    for start in (0..n).step_by(chunk) {
        let b = chunk.min(n - start);
        let ld = b * hw;
        for i in 0..b {
            g.im2col(&x[(start + i) * in_len..(start + i + 1) * in_len], &mut col[i * hw * k..(i + 1) * hw * k]);
        }
        gemm(false, true, g.o, ld, k, F::one(), weight, &col[..k * ld], F::zero(), &mut tmp[..g.o * ld]);
        for i in 0..b {
            let dst = &mut out[(start + i) * out_len..(start + i + 1) * out_len];
            for o in 0..g.o {
                let bo = bias[o];
                let src = &tmp[o * ld + i * hw..o * ld + (i + 1) * hw];
                for (d, &s) in dst[o * hw..(o + 1) * hw].iter_mut().zip(src) {
                    *d = s + bo;
                }
            }
        }
    }
}

/// Overwrites `dweight`/`dbias`; accumulates into `dx` when given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<F: Float>(
    g: &ConvGeom,
    x: &[F],
    n: usize,
    weight: &[F],
    dy: &[F],
    dweight: &mut [F],
    dbias: &mut [F],
    mut dx: Option<&mut [F]>,
) {
    let (k, hw) = (g.k(), g.hw());
    let in_len = g.c * g.h * g.w;
    let out_len = g.o * hw;
    let chunk = g.chunk(n);
    let mut col = vec![F::zero(); k * chunk * hw];
    let mut dtmp = vec![F::zero(); g.o * chunk * hw];
    dweight.fill(F::zero());
    dbias.fill(F::zero());
    for start in (0..n).step_by(chunk) {
        let b = chunk.min(n - start);
        let ld = b * hw;
        for i in 0..b {
            g.im2col(&x[(start + i) * in_len..(start + i + 1) * in_len], &mut col[i * hw * k..(i + 1) * hw * k]);
            let src = &dy[(start + i) * out_len..(start + i + 1) * out_len];
            for o in 0..g.o {
                let s = &src[o * hw..(o + 1) * hw];
                dtmp[o * ld + i * hw..o * ld + (i + 1) * hw].copy_from_slice(s);
                dbias[o] += s.iter().copied().sum::<F>();
            }
        }
        gemm(false, false, g.o, k, ld, F::one(), &dtmp[..g.o * ld], &col[..k * ld], F::one(), dweight);
        if let Some(dx) = dx.as_deref_mut() {
            gemm(true, false, ld, k, g.o, F::one(), &dtmp[..g.o * ld], weight, F::zero(), &mut col[..k * ld]);
            for i in 0..b {
                g.col2im(&col[i * hw * k..(i + 1) * hw * k], &mut dx[(start + i) * in_len..(start + i + 1) * in_len]);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Pooling

/// Floor-mode max pooling; records the flat input index of each maximum
/// (first occurrence on ties).
pub(crate) fn maxpool_forward<F: Float>(
    x: &[F],
    planes: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    out: &mut [F],
    argmax: &mut [u32],
) {
    let (ho, wo) = ((h - k) / stride + 1, (w - k) / stride + 1);
    let rows = out.chunks_exact_mut(wo).zip(argmax.chunks_exact_mut(wo));
    for (r, (out_row, arg_row)) in rows.take(planes * ho).enumerate() {
        let (p, oy) = (r / ho, r % ho);
        let base = p * h * w;
        let plane = &x[base..base + h * w];
        for (ox, (o, a)) in out_row.iter_mut().zip(arg_row.iter_mut()).enumerate() {
            let first = oy * stride * w + ox * stride;
            let (mut bi, mut bv) = (first, plane[first]);
            for dy in 0..k {
                let start = first + dy * w;
                for (j, &v) in plane[start..start + k].iter().enumerate() {
                    // branch-free select; NaN never wins
                    let gt = v > bv;
                    bv = if gt { v } else { bv };
                    bi = if gt { start + j } else { bi };
                }
            }
            *o = bv;
            *a = (base + bi) as u32;
        }
    }
}

/// Scatters `dy` onto the recorded maxima; `dx` must start zeroed.
pub(crate) fn maxpool_backward<F: Float>(dy: &[F], argmax: &[u32], dx: &mut [F]) {
    for (&g, &i) in dy.iter().zip(argmax) {
        dx[i as usize] += g;
    }
}

// ---------------------------------------------------------------------------
// Dense layers

/// `y = x · Wᵀ + b` with `x: n×inputs`, `W: outputs×inputs`.
pub(crate) fn linear_forward<F: Float>(
    x: &[F],
    n: usize,
    inputs: usize,
    outputs: usize,
    weight: &[F],
    bias: &[F],
    out: &mut [F],
) {
    for row in out.chunks_exact_mut(outputs) {
        row.copy_from_slice(bias);
    }
    gemm(false, true, n, outputs, inputs, F::one(), x, weight, F::one(), out);
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward<F: Float>(
    x: &[F],
    n: usize,
    inputs: usize,
    outputs: usize,
    weight: &[F],
    dy: &[F],
    dweight: &mut [F],
    dbias: &mut [F],
    dx: Option<&mut [F]>,
) {
    gemm(true, false, outputs, inputs, n, F::one(), dy, x, F::zero(), dweight);
    dbias.fill(F::zero());
    for row in dy.chunks_exact(outputs) {
        for (d, &g) in dbias.iter_mut().zip(row) {
            *d += g;
        }
    }
    if let Some(dx) = dx {
        gemm(false, false, n, inputs, outputs, F::one(), dy, weight, F::zero(), dx);
    }
}

// ---------------------------------------------------------------------------
// Normalization

/// Train-mode batch normalization over `n` items of `features` channels with
/// `spatial` positions each. Returns `(xhat, inv_std)` for the backward pass
/// and updates the running statistics (variance stored unbiased).
#[allow(clippy::too_many_arguments)]
pub(crate) fn batchnorm_train<F: Float>(
    x: &[F],
    n: usize,
    features: usize,
    spatial: usize,
    gamma: &[F],
    beta: &[F],
    running: &mut [F],
    out: &mut [F],
) -> (Vec<F>, Vec<F>) {
    let m = (n * spatial) as f64;
    let mut xhat = vec![F::zero(); x.len()];
    let mut inv_std = vec![F::zero(); features];
    for c in 0..features {
        let values = || {
            (0..n).flat_map(move |i| {
                let base = (i * features + c) * spatial;
                x[base..base + spatial].iter().map(|v| v.as_f64())
            })
        };
        let mean = values().sum::<f64>() / m;
        let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        let istd = 1.0 / (var + BN_EPS).sqrt();
        inv_std[c] = F::lit(istd);
        let (mean_f, g, b) = (F::lit(mean), gamma[c], beta[c]);
        for i in 0..n {
            let base = (i * features + c) * spatial;
            for j in base..base + spatial {
                let h = (x[j] - mean_f) * inv_std[c];
                xhat[j] = h;
                out[j] = g * h + b;
            }
        }
        let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
        let mom = F::lit(BN_MOMENTUM);
        running[c] = (F::one() - mom) * running[c] + mom * F::lit(mean);
        running[features + c] = (F::one() - mom) * running[features + c] + mom * F::lit(unbiased);
    }
    (xhat, inv_std)
}

pub(crate) fn batchnorm_eval<F: Float>(
    x: &[F],
    features: usize,
    spatial: usize,
    gamma: &[F],
    beta: &[F],
    running: &[F],
    out: &mut [F],
) {
    let eps = F::lit(BN_EPS);
    let scale: Vec<F> = (0..features)
        .map(|c| gamma[c] / (running[features + c] + eps).sqrt())
        .collect();
    for (j, (o, &v)) in out.iter_mut().zip(x).enumerate() {
        let c = (j / spatial) % features;
        *o = (v - running[c]) * scale[c] + beta[c];
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn batchnorm_backward<F: Float>(
    dy: &[F],
    n: usize,
    features: usize,
    spatial: usize,
    gamma: &[F],
    xhat: &[F],
    inv_std: &[F],
    dgamma: &mut [F],
    dbeta: &mut [F],
    dx: Option<&mut [F]>,
) {
    let m = F::lit((n * spatial) as f64);
    let index = |i: usize, c: usize| (i * features + c) * spatial;
    let mut sums = vec![(F::zero(), F::zero()); features];
    for (c, s) in sums.iter_mut().enumerate() {
        for i in 0..n {
            let base = index(i, c);
            for j in base..base + spatial {
                s.0 += dy[j];
                s.1 += dy[j] * xhat[j];
            }
        }
        dbeta[c] = s.0;
        dgamma[c] = s.1;
    }
    if let Some(dx) = dx {
        for (c, &(sum_dy, sum_dy_xhat)) in sums.iter().enumerate() {
            let k = gamma[c] * inv_std[c] / m;
            for i in 0..n {
                let base = index(i, c);
                for j in base..base + spatial {
                    dx[j] = k * (m * dy[j] - sum_dy - xhat[j] * sum_dy_xhat);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Log-softmax

pub(crate) fn log_softmax_rows<F: Float>(x: &[F], classes: usize, out: &mut [F]) {
    for (row, o) in x.chunks_exact(classes).zip(out.chunks_exact_mut(classes)) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<F>().ln();
        for (d, &v) in o.iter_mut().zip(row) {
            *d = (v - max) - log_sum;
        }
    }
}

pub(crate) fn log_softmax_backward<F: Float>(y: &[F], dy: &[F], classes: usize, dx: &mut [F]) {
    for ((yr, gr), dr) in y
        .chunks_exact(classes)
        .zip(dy.chunks_exact(classes))
        .zip(dx.chunks_exact_mut(classes))
    {
        let sum: F = gr.iter().copied().sum();
        for ((d, &yv), &g) in dr.iter_mut().zip(yr).zip(gr) {
            *d = g - yv.exp() * sum;
        }
    }
}
