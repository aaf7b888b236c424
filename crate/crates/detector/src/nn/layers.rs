//! Layers with cached activations for the training pass. `forward` is the
//! read-only inference path; `forward_train` stores what `backward` needs.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{gemm, join, Param, Parameters, Scalar, Tensor};

fn out_size(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

// --- convolution ---------------------------------------------------------------

/// 2-D convolution without bias. Weight layout `[out, in, k, k]`.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// Kaiming-normal initialization in fan-out mode for ReLU networks.
    pub fn new<R: Rng>(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize, rng: &mut R) -> Self {
        let fan_out = (out_channels * kernel * kernel) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_out).sqrt()).expect("valid std");
        let value = (0..out_channels * in_channels * kernel * kernel).map(|_| T::lit(normal.sample(rng))).collect();
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::learnable(vec![out_channels, in_channels, kernel, kernel], value),
            cache: None,
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    fn output_shape(&self, x: &Tensor<T>) -> [usize; 4] {
        assert_eq!(x.c(), self.in_channels, "conv input channels");
        [
            x.n(),
            self.out_channels,
            out_size(x.h(), self.kernel, self.stride, self.padding),
            out_size(x.w(), self.kernel, self.stride, self.padding),
        ]
    }

    /// Output columns `[lo, hi)` whose input column `ox * stride + kx - pad`
    /// falls inside `0..w`.
    fn valid_range(&self, kx: usize, w: usize, ow: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.padding);
        let lo = if kx >= p { 0 } else { (p - kx).div_ceil(s) };
        let hi = if w + p > kx { ((w + p - kx - 1) / s + 1).min(ow) } else { 0 };
        (lo.min(hi), hi)
    }

    /// Unfolds one image `[c, h, w]` into rows `c*k*k` of a column matrix
    /// with row stride `ld`, writing columns `col0..col0 + oh*ow`.
    #[allow(clippy::too_many_arguments)]
    fn im2col(&self, img: &[T], h: usize, w: usize, oh: usize, ow: usize, cols: &mut [T], ld: usize, col0: usize) {
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        for c in 0..self.in_channels {
            let src = &img[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let (lo, hi) = self.valid_range(kx, w, ow);
                    let row = &mut cols[((c * k + ky) * k + kx) * ld + col0..][..oh * ow];
                    for oy in 0..oh {
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        let iy = oy * s + ky;
                        if iy < p || iy - p >= h {
                            dst.fill(T::zero());
                            continue;
                        }
                        let line = &src[(iy - p) * w..(iy - p + 1) * w];
                        dst[..lo].fill(T::zero());
                        dst[hi..].fill(T::zero());
                        if lo < hi {
                            let start = lo * s + kx - p;
                            if s == 1 {
                                dst[lo..hi].copy_from_slice(&line[start..start + hi - lo]);
                            } else {
                                for (d, v) in dst[lo..hi].iter_mut().zip(line[start..].iter().step_by(s)) {
                                    *d = *v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: folds columns back onto an image,
    /// accumulating overlaps.
    #[allow(clippy::too_many_arguments)]
    fn col2im(&self, cols: &[T], ld: usize, col0: usize, h: usize, w: usize, oh: usize, ow: usize, img: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        for c in 0..self.in_channels {
            let dst = &mut img[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let (lo, hi) = self.valid_range(kx, w, ow);
                    if lo >= hi {
                        continue;
                    }
                    let row = &cols[((c * k + ky) * k + kx) * ld + col0..][..oh * ow];
                    for oy in 0..oh {
                        let iy = oy * s + ky;
                        if iy < p || iy - p >= h {
                            continue;
                        }
                        let line = &mut dst[(iy - p) * w..(iy - p + 1) * w];
                        let start = lo * s + kx - p;
                        let src = &row[oy * ow + lo..oy * ow + hi];
                        if s == 1 {
                            line[start..start + hi - lo].iter_mut().zip(src).for_each(|(d, v)| *d += *v);
                        } else {
                            for (d, v) in line[start..].iter_mut().step_by(s).zip(src) {
                                *d += *v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Images per GEMM: small output planes are batched side by side so the
    /// multiply sees at least ~1024 columns.
    fn group_size(&self, n: usize, plane: usize) -> usize {
        1024usize.div_ceil(plane).clamp(1, n.max(1))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let shape = self.output_shape(x);
        let (oh, ow) = (shape[2], shape[3]);
        let plane = oh * ow;
        let ckk = self.in_channels * self.kernel * self.kernel;
        let mut y = Tensor::zeros(shape);
        if self.is_pointwise() && plane >= 1024 {
            for i in 0..x.n() {
                gemm(self.out_channels, ckk, plane, &self.weight.value, false, x.item(i), false, T::zero(), y.item_mut(i));
            }
            return y;
        }
        let g = self.group_size(x.n(), plane);
        let mut cols = vec![T::zero(); ckk * g * plane];
        let mut out = vec![T::zero(); self.out_channels * g * plane];
        for first in (0..x.n()).step_by(g) {
            let count = g.min(x.n() - first);
            let ld = count * plane;
            for j in 0..count {
                self.im2col(x.item(first + j), x.h(), x.w(), oh, ow, &mut cols, ld, j * plane);
            }
            gemm(self.out_channels, ckk, ld, &self.weight.value, false, &cols, false, T::zero(), &mut out);
            for j in 0..count {
                let dst = y.item_mut(first + j);
                for o in 0..self.out_channels {
                    dst[o * plane..(o + 1) * plane].copy_from_slice(&out[o * ld + j * plane..o * ld + (j + 1) * plane]);
                }
            }
        }
        y
    }

    pub fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let y = self.forward(&x);
        self.cache = Some(x);
        y
    }

    /// Accumulates the weight gradient; returns the input gradient when
    /// `input_grad` is set.
    pub fn backward(&mut self, dy: &Tensor<T>, input_grad: bool) -> Option<Tensor<T>> {
        let x = self.cache.take().expect("backward without forward_train");
        let (oh, ow) = (dy.h(), dy.w());
        let ckk = self.in_channels * self.kernel * self.kernel;
        let plane = oh * ow;
        let g = self.group_size(x.n(), plane);
        let mut cols = vec![T::zero(); ckk * g * plane];
        let mut dout = vec![T::zero(); self.out_channels * g * plane];
        let mut dx = input_grad.then(|| Tensor::zeros(x.shape));
        for first in (0..x.n()).step_by(g) {
            let count = g.min(x.n() - first);
            let ld = count * plane;
            for j in 0..count {
                self.im2col(x.item(first + j), x.h(), x.w(), oh, ow, &mut cols, ld, j * plane);
                let src = dy.item(first + j);
                for o in 0..self.out_channels {
                    dout[o * ld + j * plane..o * ld + (j + 1) * plane].copy_from_slice(&src[o * plane..(o + 1) * plane]);
                }
            }
            gemm(self.out_channels, ld, ckk, &dout, false, &cols, true, T::one(), &mut self.weight.grad);
            if let Some(dx) = dx.as_mut() {
                gemm(ckk, self.out_channels, ld, &self.weight.value, true, &dout, false, T::zero(), &mut cols);
                for j in 0..count {
                    self.col2im(&cols, ld, j * plane, x.h(), x.w(), oh, ow, dx.item_mut(first + j));
                }
            }
        }
        dx
    }
}

impl<T: Scalar> Parameters<T> for Conv2d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param<T>)) {
        f(join(prefix, "weight"), &self.weight);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<T>)) {
        f(join(prefix, "weight"), &mut self.weight);
    }
}

// --- batch normalization ---------------------------------------------------------

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug)]
struct BnCache<T> {
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    shape: [usize; 4],
}

/// Per-channel batch normalization with running statistics.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    cache: Option<BnCache<T>>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            channels,
            gamma: Param::learnable(vec![channels], vec![T::one(); channels]),
            beta: Param::learnable(vec![channels], vec![T::zero(); channels]),
            running_mean: Param::buffer(vec![channels], vec![T::zero(); channels]),
            running_var: Param::buffer(vec![channels], vec![T::one(); channels]),
            cache: None,
        }
    }

    /// Inference: normalizes with the running statistics.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c(), self.channels, "batch norm channels");
        let plane = x.h() * x.w();
        let eps = T::lit(BN_EPS);
        let mut y = x.clone();
        for c in 0..self.channels {
            let scale = self.gamma.value[c] / (self.running_var.value[c] + eps).sqrt();
            let shift = self.beta.value[c] - self.running_mean.value[c] * scale;
            for i in 0..x.n() {
                y.item_mut(i)[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v = *v * scale + shift);
            }
        }
        y
    }

    /// Training: normalizes with batch statistics and updates the running
    /// estimates (unbiased variance, momentum 0.1).
    pub fn forward_train(&mut self, mut x: Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c(), self.channels, "batch norm channels");
        let (n, plane) = (x.n(), x.h() * x.w());
        let count = n * plane;
        let mut x_hat = vec![T::zero(); x.data.len()];
        let mut inv_stds = vec![T::zero(); self.channels];
        let momentum = T::lit(BN_MOMENTUM);
        for c in 0..self.channels {
            let mut sum = 0.0f64;
            for i in 0..n {
                sum += x.item(i)[c * plane..(c + 1) * plane].iter().map(|v| v.to_f64().unwrap()).sum::<f64>();
            }
            let mean = sum / count as f64;
            let mut sq = 0.0f64;
            for i in 0..n {
                sq += x.item(i)[c * plane..(c + 1) * plane].iter().map(|v| (v.to_f64().unwrap() - mean).powi(2)).sum::<f64>();
            }
            let var = sq / count as f64;
            let inv_std = 1.0 / (var + BN_EPS).sqrt();
            let (mean_t, inv_t) = (T::lit(mean), T::lit(inv_std));
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            let item_len = x.item_len();
            for i in 0..n {
                let range = i * item_len + c * plane..i * item_len + (c + 1) * plane;
                for (xv, xh) in x.data[range.clone()].iter_mut().zip(&mut x_hat[range]) {
                    *xh = (*xv - mean_t) * inv_t;
                    *xv = *xh * g + b;
                }
            }
            inv_stds[c] = inv_t;
            let unbiased = if count > 1 { var * count as f64 / (count - 1) as f64 } else { var };
            let rm = &mut self.running_mean.value[c];
            *rm = (T::one() - momentum) * *rm + momentum * mean_t;
            let rv = &mut self.running_var.value[c];
            *rv = (T::one() - momentum) * *rv + momentum * T::lit(unbiased);
        }
        self.cache = Some(BnCache { x_hat, inv_std: inv_stds, shape: x.shape });
        x
    }

    pub fn backward(&mut self, mut dy: Tensor<T>) -> Tensor<T> {
        let cache = self.cache.take().expect("backward without forward_train");
        assert_eq!(cache.shape, dy.shape);
        let (n, plane, item_len) = (dy.n(), dy.h() * dy.w(), dy.item_len());
        let count = T::lit((n * plane) as f64);
        for c in 0..self.channels {
            let (mut sum_dy, mut sum_dy_xhat) = (T::zero(), T::zero());
            for i in 0..n {
                let range = i * item_len + c * plane..i * item_len + (c + 1) * plane;
                for (d, xh) in dy.data[range.clone()].iter().zip(&cache.x_hat[range]) {
                    sum_dy += *d;
                    sum_dy_xhat += *d * *xh;
                }
            }
            self.gamma.grad[c] += sum_dy_xhat;
            self.beta.grad[c] += sum_dy;
            let k = self.gamma.value[c] * cache.inv_std[c] / count;
            for i in 0..n {
                let range = i * item_len + c * plane..i * item_len + (c + 1) * plane;
                for (d, xh) in dy.data[range.clone()].iter_mut().zip(&cache.x_hat[range]) {
                    *d = k * (count * *d - sum_dy - *xh * sum_dy_xhat);
                }
            }
        }
        dy
    }
}

impl<T: Scalar> Parameters<T> for BatchNorm2d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param<T>)) {
        f(join(prefix, "weight"), &self.gamma);
        f(join(prefix, "bias"), &self.beta);
        f(join(prefix, "running_mean"), &self.running_mean);
        f(join(prefix, "running_var"), &self.running_var);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<T>)) {
        f(join(prefix, "weight"), &mut self.gamma);
        f(join(prefix, "bias"), &mut self.beta);
        f(join(prefix, "running_mean"), &mut self.running_mean);
        f(join(prefix, "running_var"), &mut self.running_var);
    }
}

// --- activation and pooling -------------------------------------------------------

#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut y = x.clone();
        y.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
        y
    }

    pub fn forward_train<T: Scalar>(&mut self, mut x: Tensor<T>) -> Tensor<T> {
        let mask: Vec<bool> = x.data.iter().map(|v| *v > T::zero()).collect();
        x.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
        self.mask = Some(mask);
        x
    }

    pub fn backward<T: Scalar>(&mut self, mut dy: Tensor<T>) -> Tensor<T> {
        let mask = self.mask.take().expect("backward without forward_train");
        dy.data.iter_mut().zip(mask).for_each(|(d, on)| *d = if on { *d } else { T::zero() });
        dy
    }
}

/// Max pooling with square window and implicit negative-infinity padding.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    cache: Option<(Vec<u32>, [usize; 4])>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        MaxPool2d { kernel, stride, padding, cache: None }
    }

    fn run<T: Scalar>(&self, x: &Tensor<T>, mut argmax: Option<&mut Vec<u32>>) -> Tensor<T> {
        let (oh, ow) = (out_size(x.h(), self.kernel, self.stride, self.padding), out_size(x.w(), self.kernel, self.stride, self.padding));
        let (h, w, p) = (x.h() as isize, x.w() as isize, self.padding as isize);
        let mut y = Tensor::zeros([x.n(), x.c(), oh, ow]);
        let mut o = 0usize;
        for plane_idx in 0..x.n() * x.c() {
            let src = &x.data[plane_idx * x.h() * x.w()..(plane_idx + 1) * x.h() * x.w()];
            for oy in 0..oh {
                for ox in 0..ow {
                    let (mut best, mut best_idx) = (T::neg_infinity(), 0u32);
                    for ky in 0..self.kernel as isize {
                        let iy = (oy * self.stride) as isize + ky - p;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        for kx in 0..self.kernel as isize {
                            let ix = (ox * self.stride) as isize + kx - p;
                            if ix < 0 || ix >= w {
                                continue;
                            }
                            let idx = (iy * w + ix) as usize;
                            if src[idx] > best {
                                best = src[idx];
                                best_idx = idx as u32;
                            }
                        }
                    }
                    y.data[o] = best;
                    if let Some(a) = argmax.as_mut() {
                        a.push(best_idx);
                    }
                    o += 1;
                }
            }
        }
        y
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Tensor<T> {
        self.run(x, None)
    }

    pub fn forward_train<T: Scalar>(&mut self, x: Tensor<T>) -> Tensor<T> {
        let mut argmax = Vec::new();
        let y = self.run(&x, Some(&mut argmax));
        self.cache = Some((argmax, x.shape));
        y
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let (argmax, shape) = self.cache.take().expect("backward without forward_train");
        let mut dx = Tensor::zeros(shape);
        let (in_plane, out_plane) = (shape[2] * shape[3], dy.h() * dy.w());
        for (o, (d, idx)) in dy.data.iter().zip(&argmax).enumerate() {
            let plane_idx = o / out_plane;
            dx.data[plane_idx * in_plane + *idx as usize] += *d;
        }
        dx
    }
}

/// Averages each channel plane to a single value: `[n, c, h, w] -> [n, c, 1, 1]`.
#[derive(Clone, Debug, Default)]
pub struct GlobalAvgPool {
    cache: Option<[usize; 4]>,
}

impl GlobalAvgPool {
    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Tensor<T> {
        let plane = x.h() * x.w();
        let inv = T::lit(1.0 / plane as f64);
        let data = x.data.chunks(plane).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        Tensor::from_vec([x.n(), x.c(), 1, 1], data)
    }

    pub fn forward_train<T: Scalar>(&mut self, x: Tensor<T>) -> Tensor<T> {
        self.cache = Some(x.shape);
        self.forward(&x)
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let shape = self.cache.take().expect("backward without forward_train");
        let plane = shape[2] * shape[3];
        let inv = T::lit(1.0 / plane as f64);
        let mut dx = Tensor::zeros(shape);
        for (chunk, d) in dx.data.chunks_mut(plane).zip(&dy.data) {
            chunk.iter_mut().for_each(|v| *v = *d * inv);
        }
        dx
    }
}

// --- fully connected ------------------------------------------------------------

/// `y = x W^T + b` on `[n, in, 1, 1]` inputs; weight layout `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    /// Uniform initialization in `±1/sqrt(in_features)` for weight and bias.
    pub fn new<R: Rng>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        let dist = Uniform::new(-bound, bound).expect("valid bound");
        let weight = (0..in_features * out_features).map(|_| T::lit(dist.sample(rng))).collect();
        let bias = (0..out_features).map(|_| T::lit(dist.sample(rng))).collect();
        Linear {
            in_features,
            out_features,
            weight: Param::learnable(vec![out_features, in_features], weight),
            bias: Param::learnable(vec![out_features], bias),
            cache: None,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.item_len(), self.in_features, "linear input features");
        let n = x.n();
        let mut y = Tensor::zeros([n, self.out_features, 1, 1]);
        for i in 0..n {
            y.item_mut(i).copy_from_slice(&self.bias.value);
        }
        gemm(n, self.in_features, self.out_features, &x.data, false, &self.weight.value, true, T::one(), &mut y.data);
        y
    }

    pub fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let y = self.forward(&x);
        self.cache = Some(x);
        y
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let x = self.cache.take().expect("backward without forward_train");
        let n = x.n();
        gemm(self.out_features, n, self.in_features, &dy.data, true, &x.data, false, T::one(), &mut self.weight.grad);
        for i in 0..n {
            self.bias.grad.iter_mut().zip(dy.item(i)).for_each(|(g, d)| *g += *d);
        }
        let mut dx = Tensor::zeros(x.shape);
        gemm(n, self.out_features, self.in_features, &dy.data, false, &self.weight.value, false, T::zero(), &mut dx.data);
        dx
    }
}

impl<T: Scalar> Parameters<T> for Linear<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param<T>)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<T>)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}
