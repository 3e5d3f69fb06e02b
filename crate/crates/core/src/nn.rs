//! Minimal neural-network toolkit: contiguous f32 tensors, dense and
//! (transposed) convolution layers with hand-written backward passes, batch
//! normalization, and Adam.
//!
//! Layers own their parameters, gradient accumulators and Adam moments.
//! `forward` runs in inference mode; `forward_train` additionally returns a
//! cache consumed by `backward`. Backward passes take an `accumulate`
//! flag so a loss can be propagated *through* a frozen player (input
//! gradients only) without touching its parameter gradients.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;

/// A contiguous row-major f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per sample.
    pub fn sample_dim(&self) -> usize {
        self.shape[1..].iter().product()
    }
}

/// Row-major GEMM: C = alpha * A(m x k) * B(k x n) + beta * C(m x n).
///
/// Strides are in elements; passing swapped strides transposes an operand
/// without copying.
#[allow(clippy::too_many_arguments)]
fn sgemm_strided(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    rsa: isize,
    csa: isize,
    b: &[f32],
    rsb: isize,
    csb: isize,
    beta: f32,
    c: &mut [f32],
) {
    debug_assert!(c.len() >= m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// C(m x n) = A(m x k) * B(k x n), overwriting C.
fn matmul(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    sgemm_strided(m, k, n, 1.0, a, k as isize, 1, b, n as isize, 1, 0.0, c);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// Optimizer hyperparameters plus the shared step counter.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// 1-based step count (bias correction).
    pub t: u64,
}

/// First/second moment buffers for one parameter tensor.
#[derive(Debug, Clone, Default)]
struct AdamState {
    m: Vec<f32>,
    v: Vec<f32>,
}

impl AdamState {
    fn sized(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut [f32], grads: &[f32], p: &AdamParams) {
        let bc1 = 1.0 - p.beta1.powi(p.t as i32);
        let bc2 = 1.0 - p.beta2.powi(p.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = p.beta1 * self.m[i] + (1.0 - p.beta1) * g;
            self.v[i] = p.beta2 * self.v[i] + (1.0 - p.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= p.lr * m_hat / (v_hat.sqrt() + p.eps);
        }
    }
}

/// Named parameter tensors, used by the checkpoint archive.
pub type ParamMap = BTreeMap<String, (Vec<usize>, Vec<f32>)>;

pub(crate) fn load_tensor(
    map: &ParamMap,
    name: &str,
    expected: &[usize],
    out: &mut [f32],
) -> crate::error::Result<()> {
    let (shape, data) = map.get(name).ok_or_else(|| {
        crate::error::Error::InvalidInput(format!("checkpoint is missing tensor '{name}'"))
    })?;
    if shape != expected {
        return Err(crate::error::Error::ShapeMismatch {
            expected: format!("{name}: {expected:?}"),
            actual: format!("{shape:?}"),
        });
    }
    out.copy_from_slice(data);
    Ok(())
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// Fully connected layer: y = x W^T + b, with W stored [out, in].
#[derive(Debug, Clone)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f32>,
    pub b: Vec<f32>,
    pub gw: Vec<f32>,
    pub gb: Vec<f32>,
    opt_w: AdamState,
    opt_b: AdamState,
}

pub struct DenseCache {
    x: Tensor,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        // Default MLP init: uniform +-1/sqrt(fan_in).
        let bound = 1.0 / (in_dim as f32).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Dense {
            in_dim,
            out_dim,
            w,
            b: vec![0.0; out_dim],
            gw: vec![0.0; in_dim * out_dim],
            gb: vec![0.0; out_dim],
            opt_w: AdamState::sized(in_dim * out_dim),
            opt_b: AdamState::sized(out_dim),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let n = x.batch();
        assert_eq!(x.sample_dim(), self.in_dim, "dense input dim");
        let mut y = Tensor::zeros(&[n, self.out_dim]);
        // y = x * W^T
        sgemm_strided(
            n,
            self.in_dim,
            self.out_dim,
            1.0,
            &x.data,
            self.in_dim as isize,
            1,
            &self.w,
            1,
            self.in_dim as isize,
            0.0,
            &mut y.data,
        );
        for row in y.data.chunks_mut(self.out_dim) {
            for (v, b) in row.iter_mut().zip(&self.b) {
                *v += b;
            }
        }
        y
    }

    pub fn forward_train(&self, x: &Tensor) -> (Tensor, DenseCache) {
        let y = self.forward(x);
        (y, DenseCache { x: x.clone() })
    }

    pub fn backward(&mut self, cache: &DenseCache, dy: &Tensor, accumulate: bool) -> Tensor {
        let n = dy.batch();
        if accumulate {
            // gw += dy^T * x  ([out, n] * [n, in])
            sgemm_strided(
                self.out_dim,
                n,
                self.in_dim,
                1.0,
                &dy.data,
                1,
                self.out_dim as isize,
                &cache.x.data,
                self.in_dim as isize,
                1,
                1.0,
                &mut self.gw,
            );
            for row in dy.data.chunks(self.out_dim) {
                for (g, d) in self.gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        // dx = dy * W
        let mut dx = Tensor::zeros(&[n, self.in_dim]);
        matmul(
            n,
            self.out_dim,
            self.in_dim,
            &dy.data,
            &self.w,
            &mut dx.data,
        );
        dx
    }

    pub fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }

    pub fn adam_step(&mut self, p: &AdamParams) {
        self.opt_w.step(&mut self.w, &self.gw, p);
        self.opt_b.step(&mut self.b, &self.gb, p);
    }

    pub fn save_into(&self, prefix: &str, map: &mut ParamMap) {
        map.insert(
            format!("{prefix}.w"),
            (vec![self.out_dim, self.in_dim], self.w.clone()),
        );
        map.insert(format!("{prefix}.b"), (vec![self.out_dim], self.b.clone()));
    }

    pub fn load_from(&mut self, prefix: &str, map: &ParamMap) -> crate::error::Result<()> {
        load_tensor(
            map,
            &format!("{prefix}.w"),
            &[self.out_dim, self.in_dim],
            &mut self.w,
        )?;
        load_tensor(map, &format!("{prefix}.b"), &[self.out_dim], &mut self.b)
    }
}

// ---------------------------------------------------------------------------
// im2col / col2im
// ---------------------------------------------------------------------------

/// Output side length of a stride-s, pad-p, kernel-k convolution.
pub fn conv_out_side(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Unfold `img` [c, h, w] into a block of a batched column matrix.
///
/// The logical matrix has `c*k*k` rows of `col_stride` columns; this
/// sample's `oh*ow` columns start at `col_offset`. Batching every sample
/// of a mini-batch into one matrix lets each layer run a single large
/// GEMM instead of many small ones.
#[allow(clippy::too_many_arguments)]
fn im2col(
    img: &[f32],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    cols: &mut [f32],
    col_stride: usize,
    col_offset: usize,
) {
    let oh = conv_out_side(h, k, stride, pad);
    let ow = conv_out_side(w, k, stride, pad);
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * col_stride + col_offset;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let out_base = row + oy * ow;
                    if iy < 0 || iy >= h as isize {
                        cols[out_base..out_base + ow].fill(0.0);
                        continue;
                    }
                    let src_base = (ch * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        cols[out_base + ox] = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            img[src_base + ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Fold one sample's block of a batched column matrix back into `img`
/// [c, h, w], accumulating.
#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &[f32],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    img: &mut [f32],
    col_stride: usize,
    col_offset: usize,
) {
    let oh = conv_out_side(h, k, stride, pad);
    let ow = conv_out_side(w, k, stride, pad);
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * col_stride + col_offset;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_base = (ch * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            img[dst_base + ix as usize] += cols[row + oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Gather NCHW tensor data into a channel-major matrix [c, n * plane],
/// with sample `i`'s plane at columns `i*plane .. (i+1)*plane`.
fn gather_channel_major(src: &[f32], n: usize, c: usize, plane: usize, dst: &mut [f32]) {
    for i in 0..n {
        for ch in 0..c {
            let s = (i * c + ch) * plane;
            let d = ch * n * plane + i * plane;
            dst[d..d + plane].copy_from_slice(&src[s..s + plane]);
        }
    }
}

/// Inverse of [`gather_channel_major`].
fn scatter_channel_major(src: &[f32], n: usize, c: usize, plane: usize, dst: &mut [f32]) {
    for i in 0..n {
        for ch in 0..c {
            let s = ch * n * plane + i * plane;
            let d = (i * c + ch) * plane;
            dst[d..d + plane].copy_from_slice(&src[s..s + plane]);
        }
    }
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

/// 2-d convolution, weight [out_c, in_c, k, k], square kernel.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub w: Vec<f32>,
    pub b: Vec<f32>,
    pub gw: Vec<f32>,
    pub gb: Vec<f32>,
    opt_w: AdamState,
    opt_b: AdamState,
}

pub struct Conv2dCache {
    x: Tensor,
}

impl Conv2d {
    pub fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        // DCGAN convention: zero-mean normal, sigma = 0.02.
        let w = (0..out_c * in_c * k * k)
            .map(|_| 0.02 * sample_normal(rng))
            .collect();
        Conv2d {
            in_c,
            out_c,
            k,
            stride,
            pad,
            w,
            b: vec![0.0; out_c],
            gw: vec![0.0; out_c * in_c * k * k],
            gb: vec![0.0; out_c],
            opt_w: AdamState::sized(out_c * in_c * k * k),
            opt_b: AdamState::sized(out_c),
        }
    }

    fn geom(&self, x: &Tensor) -> (usize, usize, usize, usize) {
        let (h, w) = (x.shape[2], x.shape[3]);
        let oh = conv_out_side(h, self.k, self.stride, self.pad);
        let ow = conv_out_side(w, self.k, self.stride, self.pad);
        (h, w, oh, ow)
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.shape[1], self.in_c, "conv input channels");
        let n = x.batch();
        let (h, w, oh, ow) = self.geom(x);
        let n_pos = oh * ow;
        let kk = self.in_c * self.k * self.k;
        let total = n * n_pos;
        let in_stride = self.in_c * h * w;

        // One batched im2col + one GEMM for the whole mini-batch.
        let mut cols = vec![0.0f32; kk * total];
        for i in 0..n {
            im2col(
                &x.data[i * in_stride..(i + 1) * in_stride],
                self.in_c,
                h,
                w,
                self.k,
                self.stride,
                self.pad,
                &mut cols,
                total,
                i * n_pos,
            );
        }
        let mut y_big = vec![0.0f32; self.out_c * total];
        matmul(self.out_c, kk, total, &self.w, &cols, &mut y_big);

        let mut y = Tensor::zeros(&[n, self.out_c, oh, ow]);
        scatter_channel_major(&y_big, n, self.out_c, n_pos, &mut y.data);
        for i in 0..n {
            let y_i = &mut y.data[i * self.out_c * n_pos..(i + 1) * self.out_c * n_pos];
            for (c, bias) in self.b.iter().enumerate() {
                for v in &mut y_i[c * n_pos..(c + 1) * n_pos] {
                    *v += bias;
                }
            }
        }
        y
    }

    pub fn forward_train(&self, x: &Tensor) -> (Tensor, Conv2dCache) {
        let y = self.forward(x);
        (y, Conv2dCache { x: x.clone() })
    }

    pub fn backward(&mut self, cache: &Conv2dCache, dy: &Tensor, accumulate: bool) -> Tensor {
        let x = &cache.x;
        let n = x.batch();
        let (h, w, oh, ow) = self.geom(x);
        let n_pos = oh * ow;
        let kk = self.in_c * self.k * self.k;
        let total = n * n_pos;
        let in_stride = self.in_c * h * w;

        // dy rearranged channel-major once; both GEMMs consume it.
        let mut dy_big = vec![0.0f32; self.out_c * total];
        gather_channel_major(&dy.data, n, self.out_c, n_pos, &mut dy_big);

        if accumulate {
            let mut cols = vec![0.0f32; kk * total];
            for i in 0..n {
                im2col(
                    &x.data[i * in_stride..(i + 1) * in_stride],
                    self.in_c,
                    h,
                    w,
                    self.k,
                    self.stride,
                    self.pad,
                    &mut cols,
                    total,
                    i * n_pos,
                );
            }
            // gw += dy_big [out_c, total] * cols^T [total, kk]
            sgemm_strided(
                self.out_c,
                total,
                kk,
                1.0,
                &dy_big,
                total as isize,
                1,
                &cols,
                1,
                total as isize,
                1.0,
                &mut self.gw,
            );
            for (c, g) in self.gb.iter_mut().enumerate() {
                *g += dy_big[c * total..(c + 1) * total].iter().sum::<f32>();
            }
        }

        // dcols = W^T [kk, out_c] * dy_big [out_c, total], then fold back.
        let mut dcols = vec![0.0f32; kk * total];
        sgemm_strided(
            kk,
            self.out_c,
            total,
            1.0,
            &self.w,
            1,
            kk as isize,
            &dy_big,
            total as isize,
            1,
            0.0,
            &mut dcols,
        );
        let mut dx = Tensor::zeros(&x.shape);
        for i in 0..n {
            col2im(
                &dcols,
                self.in_c,
                h,
                w,
                self.k,
                self.stride,
                self.pad,
                &mut dx.data[i * in_stride..(i + 1) * in_stride],
                total,
                i * n_pos,
            );
        }
        dx
    }

    pub fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }

    pub fn adam_step(&mut self, p: &AdamParams) {
        self.opt_w.step(&mut self.w, &self.gw, p);
        self.opt_b.step(&mut self.b, &self.gb, p);
    }

    pub fn save_into(&self, prefix: &str, map: &mut ParamMap) {
        map.insert(
            format!("{prefix}.w"),
            (vec![self.out_c, self.in_c, self.k, self.k], self.w.clone()),
        );
        map.insert(format!("{prefix}.b"), (vec![self.out_c], self.b.clone()));
    }

    pub fn load_from(&mut self, prefix: &str, map: &ParamMap) -> crate::error::Result<()> {
        load_tensor(
            map,
            &format!("{prefix}.w"),
            &[self.out_c, self.in_c, self.k, self.k],
            &mut self.w,
        )?;
        load_tensor(map, &format!("{prefix}.b"), &[self.out_c], &mut self.b)
    }
}

fn sample_normal(rng: &mut ChaCha8Rng) -> f32 {
    let v: f64 = rng.sample(StandardNormal);
    v as f32
}

// ---------------------------------------------------------------------------
// ConvTranspose2d
// ---------------------------------------------------------------------------

/// Transposed 2-d convolution, weight [in_c, out_c, k, k]. The forward pass
/// is the data-gradient of the mirror convolution, so the spatial geometry
/// satisfies out = (in - 1) * stride - 2 pad + k.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub w: Vec<f32>,
    pub b: Vec<f32>,
    pub gw: Vec<f32>,
    pub gb: Vec<f32>,
    opt_w: AdamState,
    opt_b: AdamState,
}

pub struct ConvT2dCache {
    x: Tensor,
}

impl ConvTranspose2d {
    pub fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = (0..in_c * out_c * k * k)
            .map(|_| 0.02 * sample_normal(rng))
            .collect();
        ConvTranspose2d {
            in_c,
            out_c,
            k,
            stride,
            pad,
            w,
            b: vec![0.0; out_c],
            gw: vec![0.0; in_c * out_c * k * k],
            gb: vec![0.0; out_c],
            opt_w: AdamState::sized(in_c * out_c * k * k),
            opt_b: AdamState::sized(out_c),
        }
    }

    pub fn out_side(&self, input: usize) -> usize {
        (input - 1) * self.stride + self.k - 2 * self.pad
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.shape[1], self.in_c, "tconv input channels");
        let n = x.batch();
        let (ih, iw) = (x.shape[2], x.shape[3]);
        let (oh, ow) = (self.out_side(ih), self.out_side(iw));
        let n_pos = ih * iw;
        let kk = self.out_c * self.k * self.k;
        let total = n * n_pos;
        let out_stride = self.out_c * oh * ow;

        let mut x_big = vec![0.0f32; self.in_c * total];
        gather_channel_major(&x.data, n, self.in_c, n_pos, &mut x_big);

        // cols = W^T [kk, in_c] * x_big [in_c, total]
        let mut cols = vec![0.0f32; kk * total];
        sgemm_strided(
            kk,
            self.in_c,
            total,
            1.0,
            &self.w,
            1,
            kk as isize,
            &x_big,
            total as isize,
            1,
            0.0,
            &mut cols,
        );

        let mut y = Tensor::zeros(&[n, self.out_c, oh, ow]);
        for i in 0..n {
            let y_i = &mut y.data[i * out_stride..(i + 1) * out_stride];
            col2im(
                &cols,
                self.out_c,
                oh,
                ow,
                self.k,
                self.stride,
                self.pad,
                y_i,
                total,
                i * n_pos,
            );
            for (c, bias) in self.b.iter().enumerate() {
                for v in &mut y_i[c * oh * ow..(c + 1) * oh * ow] {
                    *v += bias;
                }
            }
        }
        y
    }

    pub fn forward_train(&self, x: &Tensor) -> (Tensor, ConvT2dCache) {
        let y = self.forward(x);
        (y, ConvT2dCache { x: x.clone() })
    }

    pub fn backward(&mut self, cache: &ConvT2dCache, dy: &Tensor, accumulate: bool) -> Tensor {
        let x = &cache.x;
        let n = x.batch();
        let (ih, iw) = (x.shape[2], x.shape[3]);
        let (oh, ow) = (dy.shape[2], dy.shape[3]);
        let n_pos = ih * iw;
        let kk = self.out_c * self.k * self.k;
        let total = n * n_pos;
        let out_stride = self.out_c * oh * ow;

        // Columns of the mirror convolution over dy, batched.
        let mut cols = vec![0.0f32; kk * total];
        for i in 0..n {
            im2col(
                &dy.data[i * out_stride..(i + 1) * out_stride],
                self.out_c,
                oh,
                ow,
                self.k,
                self.stride,
                self.pad,
                &mut cols,
                total,
                i * n_pos,
            );
        }

        if accumulate {
            let mut x_big = vec![0.0f32; self.in_c * total];
            gather_channel_major(&x.data, n, self.in_c, n_pos, &mut x_big);
            // gw [in_c, kk] += x_big [in_c, total] * cols^T [total, kk]
            sgemm_strided(
                self.in_c,
                total,
                kk,
                1.0,
                &x_big,
                total as isize,
                1,
                &cols,
                1,
                total as isize,
                1.0,
                &mut self.gw,
            );
            for (c, g) in self.gb.iter_mut().enumerate() {
                let mut acc = 0.0f32;
                for i in 0..n {
                    let base = i * out_stride + c * oh * ow;
                    acc += dy.data[base..base + oh * ow].iter().sum::<f32>();
                }
                *g += acc;
            }
        }

        // dx_big = W [in_c, kk] * cols [kk, total], then back to NCHW.
        let mut dx_big = vec![0.0f32; self.in_c * total];
        matmul(self.in_c, kk, total, &self.w, &cols, &mut dx_big);
        let mut dx = Tensor::zeros(&x.shape);
        scatter_channel_major(&dx_big, n, self.in_c, n_pos, &mut dx.data);
        dx
    }

    pub fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }

    pub fn adam_step(&mut self, p: &AdamParams) {
        self.opt_w.step(&mut self.w, &self.gw, p);
        self.opt_b.step(&mut self.b, &self.gb, p);
    }

    pub fn save_into(&self, prefix: &str, map: &mut ParamMap) {
        map.insert(
            format!("{prefix}.w"),
            (vec![self.in_c, self.out_c, self.k, self.k], self.w.clone()),
        );
        map.insert(format!("{prefix}.b"), (vec![self.out_c], self.b.clone()));
    }

    pub fn load_from(&mut self, prefix: &str, map: &ParamMap) -> crate::error::Result<()> {
        load_tensor(
            map,
            &format!("{prefix}.w"),
            &[self.in_c, self.out_c, self.k, self.k],
            &mut self.w,
        )?;
        load_tensor(map, &format!("{prefix}.b"), &[self.out_c], &mut self.b)
    }
}

// ---------------------------------------------------------------------------
// BatchNorm2d
// ---------------------------------------------------------------------------

/// Per-channel batch normalization over (N, H, W), biased variance.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub c: usize,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
    pub momentum: f32,
    pub g_gamma: Vec<f32>,
    pub g_beta: Vec<f32>,
    opt_g: AdamState,
    opt_b: AdamState,
}

pub struct BatchNormCache {
    x_hat: Tensor,
    inv_std: Vec<f32>,
}

impl BatchNorm2d {
    pub fn new(c: usize, rng: &mut ChaCha8Rng) -> Self {
        let gamma = (0..c).map(|_| 1.0 + 0.02 * sample_normal(rng)).collect();
        BatchNorm2d {
            c,
            gamma,
            beta: vec![0.0; c],
            running_mean: vec![0.0; c],
            running_var: vec![1.0; c],
            eps: 1e-5,
            momentum: 0.1,
            g_gamma: vec![0.0; c],
            g_beta: vec![0.0; c],
            opt_g: AdamState::sized(c),
            opt_b: AdamState::sized(c),
        }
    }

    fn plane(&self, x: &Tensor) -> usize {
        x.shape[2] * x.shape[3]
    }

    pub fn forward_eval(&self, x: &Tensor) -> Tensor {
        let plane = self.plane(x);
        let mut y = x.clone();
        for i in 0..x.batch() {
            for ch in 0..self.c {
                let inv = 1.0 / (self.running_var[ch] + self.eps).sqrt();
                let base = (i * self.c + ch) * plane;
                for v in &mut y.data[base..base + plane] {
                    *v = self.gamma[ch] * (*v - self.running_mean[ch]) * inv + self.beta[ch];
                }
            }
        }
        y
    }

    pub fn forward_train(&mut self, x: &Tensor) -> (Tensor, BatchNormCache) {
        let n = x.batch();
        let plane = self.plane(x);
        let count = (n * plane) as f32;
        let mut y = Tensor::zeros(&x.shape);
        let mut x_hat = Tensor::zeros(&x.shape);
        let mut inv_std = vec![0.0f32; self.c];
        for ch in 0..self.c {
            let mut mean = 0.0f32;
            for i in 0..n {
                let base = (i * self.c + ch) * plane;
                mean += x.data[base..base + plane].iter().sum::<f32>();
            }
            mean /= count;
            let mut var = 0.0f32;
            for i in 0..n {
                let base = (i * self.c + ch) * plane;
                for &v in &x.data[base..base + plane] {
                    let d = v - mean;
                    var += d * d;
                }
            }
            var /= count;
            let inv = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = inv;
            for i in 0..n {
                let base = (i * self.c + ch) * plane;
                for p in 0..plane {
                    let xh = (x.data[base + p] - mean) * inv;
                    x_hat.data[base + p] = xh;
                    y.data[base + p] = self.gamma[ch] * xh + self.beta[ch];
                }
            }
            self.running_mean[ch] =
                (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean;
            self.running_var[ch] =
                (1.0 - self.momentum) * self.running_var[ch] + self.momentum * var;
        }
        (y, BatchNormCache { x_hat, inv_std })
    }

    pub fn backward(&mut self, cache: &BatchNormCache, dy: &Tensor, accumulate: bool) -> Tensor {
        let n = dy.batch();
        let plane = self.plane(dy);
        let count = (n * plane) as f32;
        let mut dx = Tensor::zeros(&dy.shape);
        for ch in 0..self.c {
            let mut sum_dy = 0.0f32;
            let mut sum_dy_xhat = 0.0f32;
            for i in 0..n {
                let base = (i * self.c + ch) * plane;
                for p in 0..plane {
                    sum_dy += dy.data[base + p];
                    sum_dy_xhat += dy.data[base + p] * cache.x_hat.data[base + p];
                }
            }
            if accumulate {
                self.g_gamma[ch] += sum_dy_xhat;
                self.g_beta[ch] += sum_dy;
            }
            let scale = self.gamma[ch] * cache.inv_std[ch];
            let mean_dy = sum_dy / count;
            let mean_dy_xhat = sum_dy_xhat / count;
            for i in 0..n {
                let base = (i * self.c + ch) * plane;
                for p in 0..plane {
                    dx.data[base + p] = scale
                        * (dy.data[base + p] - mean_dy - cache.x_hat.data[base + p] * mean_dy_xhat);
                }
            }
        }
        dx
    }

    pub fn zero_grad(&mut self) {
        self.g_gamma.fill(0.0);
        self.g_beta.fill(0.0);
    }

    pub fn adam_step(&mut self, p: &AdamParams) {
        self.opt_g.step(&mut self.gamma, &self.g_gamma, p);
        self.opt_b.step(&mut self.beta, &self.g_beta, p);
    }

    pub fn save_into(&self, prefix: &str, map: &mut ParamMap) {
        map.insert(
            format!("{prefix}.gamma"),
            (vec![self.c], self.gamma.clone()),
        );
        map.insert(format!("{prefix}.beta"), (vec![self.c], self.beta.clone()));
        map.insert(
            format!("{prefix}.running_mean"),
            (vec![self.c], self.running_mean.clone()),
        );
        map.insert(
            format!("{prefix}.running_var"),
            (vec![self.c], self.running_var.clone()),
        );
    }

    pub fn load_from(&mut self, prefix: &str, map: &ParamMap) -> crate::error::Result<()> {
        load_tensor(map, &format!("{prefix}.gamma"), &[self.c], &mut self.gamma)?;
        load_tensor(map, &format!("{prefix}.beta"), &[self.c], &mut self.beta)?;
        load_tensor(
            map,
            &format!("{prefix}.running_mean"),
            &[self.c],
            &mut self.running_mean,
        )?;
        load_tensor(
            map,
            &format!("{prefix}.running_var"),
            &[self.c],
            &mut self.running_var,
        )
    }
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Relu,
    Tanh,
    Identity,
}

pub const LEAKY_SLOPE: f32 = 0.2;

pub struct ActCache {
    /// Input for (leaky) relu, output for tanh.
    saved: Tensor,
}

pub fn act_forward(act: Activation, x: &Tensor) -> (Tensor, ActCache) {
    match act {
        Activation::Identity => (
            x.clone(),
            ActCache {
                saved: Tensor::zeros(&[0]),
            },
        ),
        Activation::LeakyRelu => {
            let mut y = x.clone();
            for v in &mut y.data {
                if *v < 0.0 {
                    *v *= LEAKY_SLOPE;
                }
            }
            (y, ActCache { saved: x.clone() })
        }
        Activation::Relu => {
            let mut y = x.clone();
            for v in &mut y.data {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            (y, ActCache { saved: x.clone() })
        }
        Activation::Tanh => {
            let mut y = x.clone();
            for v in &mut y.data {
                *v = v.tanh();
            }
            let cache = ActCache { saved: y.clone() };
            (y, cache)
        }
    }
}

pub fn act_backward(act: Activation, cache: &ActCache, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    match act {
        Activation::Identity => {}
        Activation::LeakyRelu => {
            for (d, &x) in dx.data.iter_mut().zip(&cache.saved.data) {
                if x < 0.0 {
                    *d *= LEAKY_SLOPE;
                }
            }
        }
        Activation::Relu => {
            for (d, &x) in dx.data.iter_mut().zip(&cache.saved.data) {
                if x < 0.0 {
                    *d = 0.0;
                }
            }
        }
        Activation::Tanh => {
            for (d, &y) in dx.data.iter_mut().zip(&cache.saved.data) {
                *d *= 1.0 - y * y;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn rand_tensor(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
        let data = (0..shape.iter().product::<usize>())
            .map(|_| r.random_range(-1.0f32..1.0))
            .collect();
        Tensor::from_vec(shape, data)
    }

    /// Central difference of a scalar function of one perturbation.
    fn finite_diff(mut eval_at: impl FnMut(f32) -> f64, h: f32) -> f64 {
        (eval_at(h) - eval_at(-h)) / (2.0 * h as f64)
    }

    fn weighted_sum(y: &Tensor, probe: &[f32]) -> f64 {
        y.data
            .iter()
            .zip(probe)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    }

    #[test]
    fn dense_forward_matches_naive() {
        let mut r = rng(1);
        let layer = Dense::new(4, 3, &mut r);
        let x = rand_tensor(&[2, 4], &mut r);
        let y = layer.forward(&x);
        for i in 0..2 {
            for o in 0..3 {
                let mut acc = layer.b[o] as f64;
                for k in 0..4 {
                    acc += layer.w[o * 4 + k] as f64 * x.data[i * 4 + k] as f64;
                }
                assert!((y.data[i * 3 + o] as f64 - acc).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut r = rng(2);
        let mut layer = Dense::new(5, 4, &mut r);
        let x = rand_tensor(&[3, 5], &mut r);
        let probe: Vec<f32> = (0..12).map(|_| r.random_range(-1.0f32..1.0)).collect();

        let (_, cache) = layer.forward_train(&x);
        let dy = Tensor::from_vec(&[3, 4], probe.clone());
        layer.zero_grad();
        let dx = layer.backward(&cache, &dy, true);

        for idx in [0usize, 7, 14] {
            let fd = finite_diff(
                |dv| {
                    let mut x2 = x.clone();
                    x2.data[idx] += dv;
                    weighted_sum(&layer.forward(&x2), &probe)
                },
                1e-2,
            );
            assert!(
                (dx.data[idx] as f64 - fd).abs() < 2e-2 * fd.abs().max(1.0),
                "dx[{idx}]: analytic {} vs fd {fd}",
                dx.data[idx]
            );
        }
        for idx in [0usize, 9, 19] {
            let fd = finite_diff(
                |dv| {
                    let mut l2 = layer.clone();
                    l2.w[idx] += dv;
                    weighted_sum(&l2.forward(&x), &probe)
                },
                1e-2,
            );
            assert!(
                (layer.gw[idx] as f64 - fd).abs() < 2e-2 * fd.abs().max(1.0),
                "gw[{idx}]: analytic {} vs fd {fd}",
                layer.gw[idx]
            );
        }
    }

    /// Naive O(everything) convolution in f64, the oracle for the GEMM path.
    #[allow(clippy::too_many_arguments)]
    fn conv_naive(
        x: &Tensor,
        w: &[f32],
        b: &[f32],
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Vec<f64> {
        let (n, h, wd) = (x.shape[0], x.shape[2], x.shape[3]);
        let oh = conv_out_side(h, k, stride, pad);
        let ow = conv_out_side(wd, k, stride, pad);
        let mut out = vec![0.0f64; n * out_c * oh * ow];
        for i in 0..n {
            for oc in 0..out_c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b[oc] as f64;
                        for ic in 0..in_c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    let xv = x.data
                                        [((i * in_c + ic) * h + iy as usize) * wd + ix as usize];
                                    let wv = w[((oc * in_c + ic) * k + ky) * k + kx];
                                    acc += xv as f64 * wv as f64;
                                }
                            }
                        }
                        out[((i * out_c + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_forward_matches_naive() {
        let mut r = rng(3);
        let layer = Conv2d::new(2, 3, 4, 2, 1, &mut r);
        let x = rand_tensor(&[2, 2, 8, 8], &mut r);
        let y = layer.forward(&x);
        assert_eq!(y.shape, vec![2, 3, 4, 4]);
        let oracle = conv_naive(&x, &layer.w, &layer.b, 2, 3, 4, 2, 1);
        for (a, b) in y.data.iter().zip(&oracle) {
            assert!((*a as f64 - b).abs() < 1e-4);
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut r = rng(4);
        let mut layer = Conv2d::new(2, 3, 4, 2, 1, &mut r);
        let x = rand_tensor(&[2, 2, 8, 8], &mut r);
        let probe: Vec<f32> = (0..2 * 3 * 16)
            .map(|_| r.random_range(-1.0f32..1.0))
            .collect();
        let (_, cache) = layer.forward_train(&x);
        let dy = Tensor::from_vec(&[2, 3, 4, 4], probe.clone());
        layer.zero_grad();
        let dx = layer.backward(&cache, &dy, true);

        for idx in [0usize, 33, 101, 200] {
            let fd = finite_diff(
                |dv| {
                    let mut x2 = x.clone();
                    x2.data[idx] += dv;
                    weighted_sum(&layer.forward(&x2), &probe)
                },
                1e-2,
            );
            assert!(
                (dx.data[idx] as f64 - fd).abs() < 2e-2 * fd.abs().max(1.0),
                "dx[{idx}] {} vs {fd}",
                dx.data[idx]
            );
        }
        for idx in [0usize, 17, 50, 95] {
            let fd = finite_diff(
                |dv| {
                    let mut l2 = layer.clone();
                    l2.w[idx] += dv;
                    weighted_sum(&l2.forward(&x), &probe)
                },
                1e-2,
            );
            assert!(
                (layer.gw[idx] as f64 - fd).abs() < 2e-2 * fd.abs().max(1.0),
                "gw[{idx}] {} vs {fd}",
                layer.gw[idx]
            );
        }
    }

    #[test]
    fn tconv_shape_and_backward() {
        let mut r = rng(5);
        let mut layer = ConvTranspose2d::new(3, 2, 4, 2, 1, &mut r);
        let x = rand_tensor(&[2, 3, 4, 4], &mut r);
        let y = layer.forward(&x);
        assert_eq!(y.shape, vec![2, 2, 8, 8]);

        let probe: Vec<f32> = (0..y.data.len())
            .map(|_| r.random_range(-1.0f32..1.0))
            .collect();
        let (_, cache) = layer.forward_train(&x);
        let dy = Tensor::from_vec(&y.shape, probe.clone());
        layer.zero_grad();
        let dx = layer.backward(&cache, &dy, true);

        for idx in [0usize, 20, 47, 90] {
            let fd = finite_diff(
                |dv| {
                    let mut x2 = x.clone();
                    x2.data[idx] += dv;
                    weighted_sum(&layer.forward(&x2), &probe)
                },
                1e-2,
            );
            assert!(
                (dx.data[idx] as f64 - fd).abs() < 2e-2 * fd.abs().max(1.0),
                "dx[{idx}] {} vs {fd}",
                dx.data[idx]
            );
        }
        for idx in [0usize, 31, 64] {
            let fd = finite_diff(
                |dv| {
                    let mut l2 = layer.clone();
                    l2.w[idx] += dv;
                    weighted_sum(&l2.forward(&x), &probe)
                },
                1e-2,
            );
            assert!(
                (layer.gw[idx] as f64 - fd).abs() < 2e-2 * fd.abs().max(1.0),
                "gw[{idx}] {} vs {fd}",
                layer.gw[idx]
            );
        }
    }

    #[test]
    fn batchnorm_normalizes_and_backward_checks() {
        let mut r = rng(6);
        let mut bn = BatchNorm2d::new(3, &mut r);
        let x = rand_tensor(&[4, 3, 5, 5], &mut r);
        let (y, cache) = bn.forward_train(&x);

        // Batch statistics of x_hat are ~(0, 1) per channel.
        let plane = 25;
        for ch in 0..3 {
            let mut sum = 0.0f64;
            let mut sq = 0.0f64;
            for i in 0..4 {
                let base = (i * 3 + ch) * plane;
                for p in 0..plane {
                    let v = cache.x_hat.data[base + p] as f64;
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / 100.0;
            let var = sq / 100.0 - mean * mean;
            assert!(mean.abs() < 1e-4 && (var - 1.0).abs() < 1e-3);
        }

        let probe: Vec<f32> = (0..y.data.len())
            .map(|_| r.random_range(-1.0f32..1.0))
            .collect();
        let dy = Tensor::from_vec(&y.shape, probe.clone());
        bn.zero_grad();
        let dx = bn.backward(&cache, &dy, true);

        for idx in [0usize, 77, 150, 299] {
            let fd = finite_diff(
                |dv| {
                    let mut bn2 = bn.clone();
                    let mut x2 = x.clone();
                    x2.data[idx] += dv;
                    let (y, _) = bn2.forward_train(&x2);
                    weighted_sum(&y, &probe)
                },
                1e-2,
            );
            assert!(
                (dx.data[idx] as f64 - fd).abs() < 3e-2 * fd.abs().max(1.0),
                "dx[{idx}] {} vs {fd}",
                dx.data[idx]
            );
        }
    }

    #[test]
    fn activations_roundtrip() {
        let x = Tensor::from_vec(&[1, 4], vec![-2.0, -0.5, 0.5, 2.0]);
        let (y, cache) = act_forward(Activation::LeakyRelu, &x);
        assert_eq!(y.data, vec![-0.4, -0.1, 0.5, 2.0]);
        let dy = Tensor::from_vec(&[1, 4], vec![1.0; 4]);
        let dx = act_backward(Activation::LeakyRelu, &cache, &dy);
        assert_eq!(dx.data, vec![0.2, 0.2, 1.0, 1.0]);

        let (y, cache) = act_forward(Activation::Tanh, &x);
        assert!(y.data.iter().all(|v| v.abs() <= 1.0));
        let dx = act_backward(Activation::Tanh, &cache, &dy);
        for (d, &yv) in dx.data.iter().zip(&y.data) {
            assert!((d - (1.0 - yv * yv)).abs() < 1e-6);
        }
    }

    #[test]
    fn adam_first_step_magnitude() {
        // With fresh moments the first step is lr * g / (|g| + eps) ~ lr * sign(g).
        let mut r = rng(7);
        let mut layer = Dense::new(2, 2, &mut r);
        let before = layer.w.clone();
        layer.gw = vec![0.3, -0.7, 0.1, -0.2];
        layer.adam_step(&AdamParams {
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            t: 1,
        });
        for i in 0..4 {
            let delta = layer.w[i] - before[i];
            let expect = -1e-3 * layer.gw[i].signum();
            assert!((delta - expect).abs() < 1e-6, "delta {delta} vs {expect}");
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let mut r = rng(8);
        let layer = Dense::new(3, 2, &mut r);
        let mut map = ParamMap::new();
        layer.save_into("enc.fc0", &mut map);
        let mut other = Dense::new(3, 2, &mut r);
        other.load_from("enc.fc0", &map).unwrap();
        assert_eq!(layer.w, other.w);
        assert_eq!(layer.b, other.b);

        // Shape mismatch is rejected.
        let mut wrong = Dense::new(2, 2, &mut r);
        assert!(wrong.load_from("enc.fc0", &map).is_err());
    }
}
