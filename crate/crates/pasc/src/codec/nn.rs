//! Minimal dense/convolution machinery with hand-written backward passes.
//!
//! Everything is f64 and single-threaded; the layer set is exactly what the
//! semantic codec needs (strided same-padding convolution, nearest-neighbor
//! upsampling, dense, ReLU, tanh).

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Channel-major feature map: data[c][h][w] flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Feat {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Feat {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    #[inline]
    pub fn at(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.h + i) * self.w + j]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    /// w[cout][cin][k][k] flattened.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// w[out][in] flattened.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ConvParams {
    pub fn zeros(s: ConvShape) -> Self {
        Self {
            w: vec![0.0; s.cout * s.cin * s.k * s.k],
            b: vec![0.0; s.cout],
        }
    }

    pub fn init(s: ConvShape, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (s.cin * s.k * s.k) as f64;
        let dist = Normal::new(0.0, (2.0 / fan_in).sqrt()).unwrap();
        Self {
            w: (0..s.cout * s.cin * s.k * s.k).map(|_| dist.sample(rng)).collect(),
            // slightly positive so rectified units start active; with sparse
            // near-zero targets a zero start lets whole layers die in epoch 1
            b: vec![0.1; s.cout],
        }
    }
}

impl DenseParams {
    pub fn zeros(nin: usize, nout: usize) -> Self {
        Self {
            w: vec![0.0; nout * nin],
            b: vec![0.0; nout],
        }
    }

    pub fn init(nin: usize, nout: usize, rng: &mut ChaCha8Rng) -> Self {
        let dist = Normal::new(0.0, (1.0 / nin as f64).sqrt()).unwrap();
        Self {
            w: (0..nout * nin).map(|_| dist.sample(rng)).collect(),
            b: vec![0.1; nout],
        }
    }
}

/// Same-padding strided convolution; input dims must divide the stride.
pub fn conv_forward(x: &Feat, p: &ConvParams, s: ConvShape) -> Feat {
    debug_assert_eq!(x.c, s.cin);
    debug_assert_eq!(x.h % s.stride, 0);
    debug_assert_eq!(x.w % s.stride, 0);
    let (ho, wo) = (x.h / s.stride, x.w / s.stride);
    let pad = (s.k - 1) / 2;
    let mut out = Feat::zeros(s.cout, ho, wo);
    let ksz = s.k * s.k;
    for co in 0..s.cout {
        let wbase = co * s.cin * ksz;
        for i in 0..ho {
            for j in 0..wo {
                let mut acc = p.b[co];
                let ci0 = (i * s.stride) as i64 - pad as i64;
                let cj0 = (j * s.stride) as i64 - pad as i64;
                for ci in 0..s.cin {
                    let xbase = ci * x.h;
                    let kbase = wbase + ci * ksz;
                    for ki in 0..s.k {
                        let yy = ci0 + ki as i64;
                        if yy < 0 || yy >= x.h as i64 {
                            continue;
                        }
                        let row = (xbase + yy as usize) * x.w;
                        let krow = kbase + ki * s.k;
                        for kj in 0..s.k {
                            let xx = cj0 + kj as i64;
                            if xx < 0 || xx >= x.w as i64 {
                                continue;
                            }
                            acc += p.w[krow + kj] * x.data[row + xx as usize];
                        }
                    }
                }
                out.data[(co * ho + i) * wo + j] = acc;
            }
        }
    }
    out
}

/// Backward pass of [`conv_forward`]: returns the input gradient and
/// accumulates parameter gradients into `gp`.
pub fn conv_backward(x: &Feat, p: &ConvParams, s: ConvShape, gout: &Feat, gp: &mut ConvParams) -> Feat {
    let (ho, wo) = (x.h / s.stride, x.w / s.stride);
    let pad = (s.k - 1) / 2;
    let mut gin = Feat::zeros(x.c, x.h, x.w);
    let ksz = s.k * s.k;
    for co in 0..s.cout {
        let wbase = co * s.cin * ksz;
        for i in 0..ho {
            for j in 0..wo {
                let g = gout.data[(co * ho + i) * wo + j];
                if g == 0.0 {
                    continue;
                }
                gp.b[co] += g;
                let ci0 = (i * s.stride) as i64 - pad as i64;
                let cj0 = (j * s.stride) as i64 - pad as i64;
                for ci in 0..s.cin {
                    let xbase = ci * x.h;
                    let kbase = wbase + ci * ksz;
                    for ki in 0..s.k {
                        let yy = ci0 + ki as i64;
                        if yy < 0 || yy >= x.h as i64 {
                            continue;
                        }
                        let row = (xbase + yy as usize) * x.w;
                        let krow = kbase + ki * s.k;
                        for kj in 0..s.k {
                            let xx = cj0 + kj as i64;
                            if xx < 0 || xx >= x.w as i64 {
                                continue;
                            }
                            gp.w[krow + kj] += x.data[row + xx as usize] * g;
                            gin.data[row + xx as usize] += p.w[krow + kj] * g;
                        }
                    }
                }
            }
        }
    }
    gin
}

pub fn upsample(x: &Feat, f: usize) -> Feat {
    let mut out = Feat::zeros(x.c, x.h * f, x.w * f);
    for c in 0..x.c {
        for i in 0..x.h * f {
            for j in 0..x.w * f {
                out.data[(c * x.h * f + i) * x.w * f + j] = x.at(c, i / f, j / f);
            }
        }
    }
    out
}

pub fn upsample_backward(gout: &Feat, f: usize) -> Feat {
    let (h, w) = (gout.h / f, gout.w / f);
    let mut gin = Feat::zeros(gout.c, h, w);
    for c in 0..gout.c {
        for i in 0..gout.h {
            for j in 0..gout.w {
                gin.data[(c * h + i / f) * w + j / f] += gout.data[(c * gout.h + i) * gout.w + j];
            }
        }
    }
    gin
}

pub fn dense_forward(x: &[f64], p: &DenseParams, nin: usize, nout: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), nin);
    let mut out = vec![0.0; nout];
    for (o, v) in out.iter_mut().enumerate() {
        let row = &p.w[o * nin..(o + 1) * nin];
        let mut acc = p.b[o];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *v = acc;
    }
    out
}

pub fn dense_backward(x: &[f64], p: &DenseParams, nin: usize, nout: usize, gout: &[f64], gp: &mut DenseParams) -> Vec<f64> {
    let mut gin = vec![0.0; nin];
    for o in 0..nout {
        let g = gout[o];
        if g == 0.0 {
            continue;
        }
        gp.b[o] += g;
        let row = &p.w[o * nin..(o + 1) * nin];
        let grow = &mut gp.w[o * nin..(o + 1) * nin];
        for i in 0..nin {
            grow[i] += x[i] * g;
            gin[i] += row[i] * g;
        }
    }
    gin
}

pub fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Backward of ReLU given the *output* of the forward pass.
pub fn relu_backward(out: &[f64], g: &mut [f64]) {
    for (gi, oi) in g.iter_mut().zip(out) {
        if *oi <= 0.0 {
            *gi = 0.0;
        }
    }
}

pub fn tanh_inplace(x: &mut [f64]) {
    for v in x {
        *v = v.tanh();
    }
}

/// Backward of tanh given the *output* of the forward pass.
pub fn tanh_backward(out: &[f64], g: &mut [f64]) {
    for (gi, oi) in g.iter_mut().zip(out) {
        *gi *= 1.0 - oi * oi;
    }
}

/// Adam optimizer state over a flat list of parameter vectors.
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update step; `params` and `grads` must be in the same fixed order
    /// as the sizes passed at construction.
    pub fn step(&mut self, params: &mut [&mut Vec<f64>], grads: &[&Vec<f64>]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / b1t;
                let vhat = v[i] / b2t;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
