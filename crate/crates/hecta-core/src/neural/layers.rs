//! Hand-rolled differentiable layers: dense, 3x3 convolution, 2x2 max-pool,
//! ReLU, and the conv block used by the feature extractors.
//!
//! Layers are thin descriptors holding parameter *names*; the values live in
//! a [`ParamStore`]. Every `backward` accumulates parameter gradients into a
//! gradient store (same keys) and returns the gradient w.r.t. its input.

use rand::Rng;

use super::tensor::{ParamStore, Tensor};
use super::NeuralError;

pub(crate) fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o = acc;
    }
}

/// out[c] += sum_r w[r][c] * dy[r]  (transpose matvec, accumulating)
pub(crate) fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, dy: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(dy.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * d;
        }
    }
}

/// grad[r][c] += dy[r] * x[c]  (outer product, accumulating)
pub(crate) fn outer_acc(grad: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    debug_assert_eq!(grad.len(), dy.len() * cols);
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &mut grad[r * cols..(r + 1) * cols];
        for (g, a) in row.iter_mut().zip(x) {
            *g += d * a;
        }
    }
}

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: String,
    pub b: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new(prefix: &str, in_dim: usize, out_dim: usize) -> Self {
        Dense {
            w: format!("{prefix}.w"),
            b: format!("{prefix}.b"),
            in_dim,
            out_dim,
        }
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        store.insert(
            &self.w,
            Tensor::uniform_fan_in(&[self.out_dim, self.in_dim], self.in_dim, rng),
        );
        store.insert(
            &self.b,
            Tensor::uniform_fan_in(&[self.out_dim], self.in_dim, rng),
        );
    }

    pub fn forward(&self, ps: &ParamStore, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        if x.len() != self.in_dim {
            return Err(NeuralError::ShapeMismatch {
                context: "Dense::forward",
                expected: self.in_dim,
                actual: x.len(),
            });
        }
        let w = ps.get(&self.w).data();
        let b = ps.get(&self.b).data();
        let mut y = vec![0.0; self.out_dim];
        matvec(w, self.out_dim, self.in_dim, x, &mut y);
        for (yi, bi) in y.iter_mut().zip(b) {
            *yi += bi;
        }
        Ok(y)
    }

    /// Accumulates dW, db into `grads`; returns dL/dx.
    pub fn backward(&self, ps: &ParamStore, x: &[f64], dy: &[f64], grads: &mut ParamStore) -> Vec<f64> {
        debug_assert_eq!(dy.len(), self.out_dim);
        outer_acc(grads.get_mut(&self.w).data_mut(), dy, x);
        grads.accumulate(&self.b, dy);
        let w = ps.get(&self.w).data();
        let mut dx = vec![0.0; self.in_dim];
        matvec_t_acc(w, self.out_dim, self.in_dim, dy, &mut dx);
        dx
    }
}

pub fn relu(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// dL/dx given dL/dy and the pre-activation values.
pub fn relu_backward(pre: &[f64], dy: &[f64]) -> Vec<f64> {
    pre.iter()
        .zip(dy)
        .map(|(&p, &d)| if p > 0.0 { d } else { 0.0 })
        .collect()
}

/// 2-D convolution, 3x3 kernel, stride 1, no padding, over a CxHxW input.
#[derive(Debug, Clone)]
pub struct Conv3x3 {
    pub w: String,
    pub b: String,
    pub in_c: usize,
    pub out_c: usize,
}

pub const KERNEL: usize = 3;

impl Conv3x3 {
    pub fn new(prefix: &str, in_c: usize, out_c: usize) -> Self {
        Conv3x3 {
            w: format!("{prefix}.w"),
            b: format!("{prefix}.b"),
            in_c,
            out_c,
        }
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let fan_in = self.in_c * KERNEL * KERNEL;
        store.insert(
            &self.w,
            Tensor::uniform_fan_in(&[self.out_c, self.in_c, KERNEL, KERNEL], fan_in, rng),
        );
        store.insert(&self.b, Tensor::uniform_fan_in(&[self.out_c], fan_in, rng));
    }

    pub fn out_hw(h: usize, w: usize) -> (usize, usize) {
        (h - KERNEL + 1, w - KERNEL + 1)
    }

    /// Input `x` is CxHxW row-major; output is out_c x (H-2) x (W-2).
    pub fn forward(
        &self,
        ps: &ParamStore,
        x: &[f64],
        h: usize,
        w: usize,
    ) -> Result<Vec<f64>, NeuralError> {
        if x.len() != self.in_c * h * w || h < KERNEL || w < KERNEL {
            return Err(NeuralError::ShapeMismatch {
                context: "Conv3x3::forward",
                expected: self.in_c * h * w,
                actual: x.len(),
            });
        }
        let (oh, ow) = Self::out_hw(h, w);
        let kw = ps.get(&self.w).data();
        let kb = ps.get(&self.b).data();
        let mut y = vec![0.0; self.out_c * oh * ow];
        for oc in 0..self.out_c {
            let kernel = &kw[oc * self.in_c * 9..(oc + 1) * self.in_c * 9];
            let bias = kb[oc];
            let plane = &mut y[oc * oh * ow..(oc + 1) * oh * ow];
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = bias;
                    for ic in 0..self.in_c {
                        let kern = &kernel[ic * 9..ic * 9 + 9];
                        let base = ic * h * w + r * w + c;
                        for (kr, krow) in kern.chunks_exact(3).enumerate() {
                            let xrow = &x[base + kr * w..base + kr * w + 3];
                            acc += krow[0] * xrow[0] + krow[1] * xrow[1] + krow[2] * xrow[2];
                        }
                    }
                    plane[r * ow + c] = acc;
                }
            }
        }
        Ok(y)
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        x: &[f64],
        h: usize,
        w: usize,
        dy: &[f64],
        grads: &mut ParamStore,
    ) -> Vec<f64> {
        let (oh, ow) = Self::out_hw(h, w);
        debug_assert_eq!(dy.len(), self.out_c * oh * ow);
        let kw = ps.get(&self.w).data();
        let gw = grads.get_mut(&self.w).data_mut();
        let mut dx = vec![0.0; self.in_c * h * w];
        let mut db = vec![0.0; self.out_c];
        for oc in 0..self.out_c {
            let dplane = &dy[oc * oh * ow..(oc + 1) * oh * ow];
            let kernel = &kw[oc * self.in_c * 9..(oc + 1) * self.in_c * 9];
            let gkernel = &mut gw[oc * self.in_c * 9..(oc + 1) * self.in_c * 9];
            for r in 0..oh {
                for c in 0..ow {
                    let d = dplane[r * ow + c];
                    if d == 0.0 {
                        continue;
                    }
                    db[oc] += d;
                    for ic in 0..self.in_c {
                        let base = ic * h * w + r * w + c;
                        let gk = &mut gkernel[ic * 9..ic * 9 + 9];
                        let kern = &kernel[ic * 9..ic * 9 + 9];
                        for kr in 0..3 {
                            for kc in 0..3 {
                                gk[kr * 3 + kc] += d * x[base + kr * w + kc];
                                dx[base + kr * w + kc] += d * kern[kr * 3 + kc];
                            }
                        }
                    }
                }
            }
        }
        grads.accumulate(&self.b, &db);
        dx
    }
}

/// 2x2 max-pool with stride 2 over CxHxW; trailing odd row/column dropped.
/// Ties break toward the first index scanned (row-major), which keeps the
/// backward routing deterministic.
pub fn maxpool2(x: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut y = vec![0.0; c * ph * pw];
    let mut argmax = vec![0usize; c * ph * pw];
    for ch in 0..c {
        for r in 0..ph {
            for col in 0..pw {
                let base = ch * h * w + (2 * r) * w + 2 * col;
                let cand = [base, base + 1, base + w, base + w + 1];
                let mut best = cand[0];
                for &i in &cand[1..] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                let o = ch * ph * pw + r * pw + col;
                y[o] = x[best];
                argmax[o] = best;
            }
        }
    }
    (y, argmax)
}

pub fn maxpool2_backward(dy: &[f64], argmax: &[usize], input_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&d, &i) in dy.iter().zip(argmax) {
        dx[i] += d;
    }
    dx
}

/// conv(3x3, no padding) -> ReLU -> max-pool(2) -> flatten.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv3x3,
    pub h: usize,
    pub w: usize,
}

#[derive(Debug, Clone)]
pub struct ConvBlockCache {
    pub input: Vec<f64>,
    pub pre_relu: Vec<f64>,
    pub pool_argmax: Vec<usize>,
}

impl ConvBlock {
    pub fn new(prefix: &str, in_c: usize, out_c: usize, h: usize, w: usize) -> Self {
        ConvBlock {
            conv: Conv3x3::new(prefix, in_c, out_c),
            h,
            w,
        }
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.conv.register(store, rng);
    }

    pub fn out_dim(&self) -> usize {
        let (oh, ow) = Conv3x3::out_hw(self.h, self.w);
        self.conv.out_c * (oh / 2) * (ow / 2)
    }

    pub fn forward(
        &self,
        ps: &ParamStore,
        x: &[f64],
    ) -> Result<(Vec<f64>, ConvBlockCache), NeuralError> {
        let pre_relu = self.conv.forward(ps, x, self.h, self.w)?;
        let mut act = pre_relu.clone();
        relu(&mut act);
        let (oh, ow) = Conv3x3::out_hw(self.h, self.w);
        let (pooled, pool_argmax) = maxpool2(&act, self.conv.out_c, oh, ow);
        Ok((
            pooled,
            ConvBlockCache {
                input: x.to_vec(),
                pre_relu,
                pool_argmax,
            },
        ))
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &ConvBlockCache,
        dy: &[f64],
        grads: &mut ParamStore,
    ) -> Vec<f64> {
        let d_act = maxpool2_backward(dy, &cache.pool_argmax, cache.pre_relu.len());
        let d_pre = relu_backward(&cache.pre_relu, &d_act);
        self.conv
            .backward(ps, &cache.input, self.h, self.w, &d_pre, grads)
    }
}
