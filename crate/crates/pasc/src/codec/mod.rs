//! Trainable semantic encoder/decoder with a binarized bottleneck.
//!
//! Encoder: four strided convolution blocks (kernels 13/7/5/3, downsampling
//! 4/2/2/2, ReLU) followed by a dense layer with tanh and a hard decision to
//! bits. Decoder mirrors it: dense + ReLU back to the bottleneck shape, four
//! convolution blocks with matching upsampling, and a final 3x3 convolution
//! with tanh. Training runs end to end through a binary symmetric channel;
//! the hard decision uses a straight-through estimator (tanh gradient kept,
//! BSC treated as identity in the backward pass).

mod io;
mod nn;

pub use io::{load_weights, save_weights};
pub use nn::{ConvParams, DenseParams};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffmask::DiffImage;
use crate::error::{Error, Result};
use crate::image::{Image, Pose};
use crate::seedmix::mix;
use nn::{ConvShape, Feat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "PASC")]
    Pasc,
    #[serde(rename = "JSCC")]
    Jscc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub variant: Variant,
    pub height: usize,
    pub width: usize,
    /// Channel widths of the four encoder blocks.
    pub widths: [usize; 4],
    pub bits_out: usize,
    /// Mask threshold the codec was trained for (PASC only).
    pub eps_trained: Option<f64>,
    /// Display label, e.g. `PASC(1k, eps=0.4)`.
    pub label: String,
}

impl CodecConfig {
    pub fn new(variant: Variant, height: usize, width: usize, widths: [usize; 4], bits_out: usize, eps_trained: Option<f64>) -> Result<Self> {
        if height % 32 != 0 || width % 32 != 0 || height == 0 || width == 0 {
            return Err(Error::Config(format!(
                "codec input {height}x{width} must be divisible by 32"
            )));
        }
        if bits_out == 0 {
            return Err(Error::Config("bits_out must be positive".into()));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        let label = match variant {
            Variant::Pasc => match eps_trained {
                Some(e) => format!("PASC({}, eps={})", kbits(bits_out), e),
                None => format!("PASC({})", kbits(bits_out)),
            },
            Variant::Jscc => format!("JSCC({})", kbits(bits_out)),
        };
        Ok(Self {
            variant,
            height,
            width,
            widths,
            bits_out,
            eps_trained,
            label,
        })
    }

    /// Desk-scale default: 64x32 input, widths [8, 16, 32, 64].
    pub fn desk(variant: Variant, bits_out: usize, eps_trained: Option<f64>) -> Self {
        Self::new(variant, 64, 32, [8, 16, 32, 64], bits_out, eps_trained).expect("desk defaults are valid")
    }

    fn arch(&self) -> Arch {
        let [w0, w1, w2, w3] = self.widths;
        Arch {
            enc: [
                ConvShape { cin: 3, cout: w0, k: 13, stride: 4 },
                ConvShape { cin: w0, cout: w1, k: 7, stride: 2 },
                ConvShape { cin: w1, cout: w2, k: 5, stride: 2 },
                ConvShape { cin: w2, cout: w3, k: 3, stride: 2 },
            ],
            bottleneck: (w3, self.height / 32, self.width / 32),
            dec: [
                ConvShape { cin: w3, cout: w2, k: 3, stride: 1 },
                ConvShape { cin: w2, cout: w1, k: 5, stride: 1 },
                ConvShape { cin: w1, cout: w0, k: 7, stride: 1 },
                ConvShape { cin: w0, cout: w0, k: 13, stride: 1 },
            ],
            dec_up: [2, 2, 2, 4],
            out: ConvShape { cin: w0, cout: 3, k: 3, stride: 1 },
            bits: self.bits_out,
        }
    }
}

fn kbits(bits: usize) -> String {
    if bits % 1000 == 0 && bits >= 1000 {
        format!("{}k", bits / 1000)
    } else if bits % 1024 == 0 && bits >= 1024 {
        format!("{}k", bits / 1024)
    } else {
        format!("{bits}")
    }
}

#[derive(Debug, Clone, Copy)]
struct Arch {
    enc: [ConvShape; 4],
    bottleneck: (usize, usize, usize),
    dec: [ConvShape; 4],
    dec_up: [usize; 4],
    out: ConvShape,
    bits: usize,
}

impl Arch {
    fn flat(&self) -> usize {
        self.bottleneck.0 * self.bottleneck.1 * self.bottleneck.2
    }
}

/// All trainable parameters, in a fixed named order (see [`save_weights`]).
#[derive(Debug, Clone, PartialEq)]
pub struct CodecWeights {
    pub enc_conv: Vec<ConvParams>,
    pub enc_dense: DenseParams,
    pub dec_dense: DenseParams,
    pub dec_conv: Vec<ConvParams>,
    pub out_conv: ConvParams,
}

impl CodecWeights {
    pub fn init(cfg: &CodecConfig, seed: u64) -> Self {
        let a = cfg.arch();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0x57]));
        Self {
            enc_conv: a.enc.iter().map(|&s| ConvParams::init(s, &mut rng)).collect(),
            enc_dense: DenseParams::init(a.flat(), a.bits, &mut rng),
            dec_dense: DenseParams::init(a.bits, a.flat(), &mut rng),
            dec_conv: a.dec.iter().map(|&s| ConvParams::init(s, &mut rng)).collect(),
            out_conv: {
                // small output stage: reconstruction starts near zero, so the
                // first updates refine features instead of silencing them
                let mut p = ConvParams::init(a.out, &mut rng);
                for v in &mut p.w {
                    *v *= 0.3;
                }
                p.b.fill(0.0);
                p
            },
        }
    }

    pub fn zeros(cfg: &CodecConfig) -> Self {
        let a = cfg.arch();
        Self {
            enc_conv: a.enc.iter().map(|&s| ConvParams::zeros(s)).collect(),
            enc_dense: DenseParams::zeros(a.flat(), a.bits),
            dec_dense: DenseParams::zeros(a.bits, a.flat()),
            dec_conv: a.dec.iter().map(|&s| ConvParams::zeros(s)).collect(),
            out_conv: ConvParams::zeros(a.out),
        }
    }

    /// Parameter vectors in serialization order.
    pub fn param_vecs(&self) -> Vec<&Vec<f64>> {
        let mut v: Vec<&Vec<f64>> = Vec::new();
        for c in &self.enc_conv {
            v.push(&c.w);
            v.push(&c.b);
        }
        v.push(&self.enc_dense.w);
        v.push(&self.enc_dense.b);
        v.push(&self.dec_dense.w);
        v.push(&self.dec_dense.b);
        for c in &self.dec_conv {
            v.push(&c.w);
            v.push(&c.b);
        }
        v.push(&self.out_conv.w);
        v.push(&self.out_conv.b);
        v
    }

    pub fn param_vecs_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = Vec::new();
        for c in &mut self.enc_conv {
            v.push(&mut c.w);
            v.push(&mut c.b);
        }
        v.push(&mut self.enc_dense.w);
        v.push(&mut self.enc_dense.b);
        v.push(&mut self.dec_dense.w);
        v.push(&mut self.dec_dense.b);
        for c in &mut self.dec_conv {
            v.push(&mut c.w);
            v.push(&mut c.b);
        }
        v.push(&mut self.out_conv.w);
        v.push(&mut self.out_conv.b);
        v
    }

    fn matches(&self, cfg: &CodecConfig) -> bool {
        let a = cfg.arch();
        self.enc_conv.len() == 4
            && self.dec_conv.len() == 4
            && self
                .enc_conv
                .iter()
                .zip(&a.enc)
                .all(|(p, s)| p.w.len() == s.cout * s.cin * s.k * s.k && p.b.len() == s.cout)
            && self
                .dec_conv
                .iter()
                .zip(&a.dec)
                .all(|(p, s)| p.w.len() == s.cout * s.cin * s.k * s.k && p.b.len() == s.cout)
            && self.enc_dense.w.len() == a.bits * a.flat()
            && self.dec_dense.w.len() == a.bits * a.flat()
            && self.out_conv.w.len() == a.out.cout * a.out.cin * a.out.k * a.out.k
    }

    /// FNV-1a 64 over the serialized parameter bytes; used to compare
    /// transmitter and receiver knowledge-base copies.
    pub fn content_hash(&self) -> u64 {
        let mut h = io::Fnv64::new();
        for v in self.param_vecs() {
            for x in v {
                h.update(&(*x as f32).to_le_bytes());
            }
        }
        h.finish()
    }
}

/// Knowledge shared by both link ends.
#[derive(Debug, Clone)]
pub struct SharedKb {
    pub weights: CodecWeights,
    pub config: CodecConfig,
    pub shared_image: Image,
    pub pose: Pose,
    /// Frame counter of the last update.
    pub freshness: u64,
}

impl SharedKb {
    pub fn content_hash(&self) -> u64 {
        let mut h = io::Fnv64::new();
        h.update(&self.weights.content_hash().to_le_bytes());
        for v in &self.shared_image.data {
            h.update(&v.to_le_bytes());
        }
        h.finish()
    }
}

fn image_to_feat(img: &Image) -> Feat {
    let mut f = Feat::zeros(3, img.height, img.width);
    for c in 0..3 {
        for i in 0..img.height {
            for j in 0..img.width {
                f.data[(c * img.height + i) * img.width + j] = img.data[(i * img.width + j) * 3 + c];
            }
        }
    }
    f
}

fn feat_to_image(f: &Feat) -> Image {
    let mut img = Image {
        height: f.h,
        width: f.w,
        data: vec![0.0; f.h * f.w * 3],
    };
    for c in 0..3 {
        for i in 0..f.h {
            for j in 0..f.w {
                img.data[(i * f.w + j) * 3 + c] = f.data[(c * f.h + i) * f.w + j];
            }
        }
    }
    img
}

/// Scales a masked difference ([-2, 2]) into the codec's [-1, 1] input range.
pub fn diff_to_codec_input(d: &DiffImage) -> Image {
    Image {
        height: d.height,
        width: d.width,
        data: d.data.iter().map(|v| v / 2.0).collect(),
    }
}

/// Rescales a decoded codec output back to difference range.
pub fn codec_output_to_diff(img: &Image, eps: f64) -> DiffImage {
    DiffImage {
        height: img.height,
        width: img.width,
        data: img.data.iter().map(|v| v * 2.0).collect(),
        eps,
    }
}

struct Fwd {
    enc_acts: Vec<Feat>,  // inputs to each encoder conv (a0..a3)
    enc_outs: Vec<Feat>,  // relu outputs of each encoder conv (a1..a4)
    tanh_out: Vec<f64>,   // t
    dec_in: Vec<f64>,     // decoder dense input (t for soft, +-1 after BSC for hard)
    dec_dense_out: Vec<f64>,
    dec_acts: Vec<Feat>,  // inputs to each decoder conv (post-upsample of previous)
    dec_outs: Vec<Feat>,  // relu outputs of each decoder conv
    out_feat: Feat,       // tanh output
}

fn check_encode_args(x: &Image, w: &CodecWeights, cfg: &CodecConfig) -> Result<()> {
    if x.height != cfg.height || x.width != cfg.width {
        return Err(Error::Argument(format!(
            "input {}x{} does not match codec config {}x{}",
            x.height, x.width, cfg.height, cfg.width
        )));
    }
    if !w.matches(cfg) {
        return Err(Error::Argument("weights do not match codec config".into()));
    }
    Ok(())
}

fn encoder_forward(x: &Feat, w: &CodecWeights, a: &Arch) -> (Vec<Feat>, Vec<Feat>, Vec<f64>, Vec<u8>) {
    let mut acts = vec![x.clone()];
    let mut outs = Vec::with_capacity(4);
    for l in 0..4 {
        let mut z = nn::conv_forward(acts.last().unwrap(), &w.enc_conv[l], a.enc[l]);
        nn::relu_inplace(&mut z.data);
        outs.push(z.clone());
        acts.push(z);
    }
    let flat = acts.last().unwrap().data.clone();
    let mut t = nn::dense_forward(&flat, &w.enc_dense, a.flat(), a.bits);
    nn::tanh_inplace(&mut t);
    let bits: Vec<u8> = t.iter().map(|&v| u8::from(v > 0.0)).collect();
    acts.pop();
    (acts, outs, t, bits)
}

fn decoder_forward(v: &[f64], w: &CodecWeights, a: &Arch) -> (Vec<f64>, Vec<Feat>, Vec<Feat>, Feat) {
    let mut d0 = nn::dense_forward(v, &w.dec_dense, a.bits, a.flat());
    nn::relu_inplace(&mut d0);
    let (bc, bh, bw) = a.bottleneck;
    let mut cur = Feat {
        c: bc,
        h: bh,
        w: bw,
        data: d0.clone(),
    };
    let mut acts = Vec::with_capacity(4);
    let mut outs = Vec::with_capacity(4);
    for l in 0..4 {
        acts.push(cur.clone());
        let mut z = nn::conv_forward(&cur, &w.dec_conv[l], a.dec[l]);
        nn::relu_inplace(&mut z.data);
        outs.push(z.clone());
        cur = nn::upsample(&z, a.dec_up[l]);
    }
    acts.push(cur.clone()); // input to the output conv
    let mut y = nn::conv_forward(&cur, &w.out_conv, a.out);
    nn::tanh_inplace(&mut y.data);
    (d0, acts, outs, y)
}

fn run_forward(x: &Feat, w: &CodecWeights, a: &Arch, bsc_flips: Option<&[bool]>) -> Fwd {
    let (enc_acts, enc_outs, tanh_out, bits) = encoder_forward(x, w, a);
    let dec_in: Vec<f64> = match bsc_flips {
        None => tanh_out.clone(),
        Some(flips) => bits
            .iter()
            .zip(flips)
            .map(|(&b, &f)| {
                let b = if f { 1 - b } else { b };
                if b == 1 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect(),
    };
    let (dec_dense_out, dec_acts, dec_outs, out_feat) = decoder_forward(&dec_in, w, a);
    Fwd {
        enc_acts,
        enc_outs,
        tanh_out,
        dec_in,
        dec_dense_out,
        dec_acts,
        dec_outs,
        out_feat,
    }
}

/// MSE between the decoded output and the target, averaged over components.
fn loss_of(fwd: &Fwd, target: &Feat) -> f64 {
    let n = target.len() as f64;
    fwd.out_feat
        .data
        .iter()
        .zip(&target.data)
        .map(|(y, t)| (y - t) * (y - t))
        .sum::<f64>()
        / n
}

/// Backpropagates the MSE loss, accumulating into `g`. The gradient crosses
/// the hard decision unchanged (straight-through), and the BSC is treated as
/// identity.
fn run_backward(fwd: &Fwd, x: &Feat, target: &Feat, w: &CodecWeights, a: &Arch, g: &mut CodecWeights) {
    let n = target.len() as f64;
    let mut gy = Feat {
        c: fwd.out_feat.c,
        h: fwd.out_feat.h,
        w: fwd.out_feat.w,
        data: fwd
            .out_feat
            .data
            .iter()
            .zip(&target.data)
            .map(|(y, t)| 2.0 * (y - t) / n)
            .collect(),
    };
    nn::tanh_backward(&fwd.out_feat.data, &mut gy.data);
    let mut gcur = nn::conv_backward(&fwd.dec_acts[4], &w.out_conv, a.out, &gy, &mut g.out_conv);
    for l in (0..4).rev() {
        let mut gz = nn::upsample_backward(&gcur, a.dec_up[l]);
        nn::relu_backward(&fwd.dec_outs[l].data, &mut gz.data);
        gcur = nn::conv_backward(&fwd.dec_acts[l], &w.dec_conv[l], a.dec[l], &gz, &mut g.dec_conv[l]);
    }
    let mut gd0 = gcur.data;
    nn::relu_backward(&fwd.dec_dense_out, &mut gd0);
    let gv = nn::dense_backward(&fwd.dec_in, &w.dec_dense, a.bits, a.flat(), &gd0, &mut g.dec_dense);

    // straight-through: gradient w.r.t. the tanh output is gv unchanged
    let mut gt = gv;
    nn::tanh_backward(&fwd.tanh_out, &mut gt);
    let flat = fwd.enc_outs[3].data.clone();
    let mut gflat = nn::dense_backward(&flat, &w.enc_dense, a.flat(), a.bits, &gt, &mut g.enc_dense);
    for l in (0..4).rev() {
        nn::relu_backward(&fwd.enc_outs[l].data, &mut gflat);
        let gf = Feat {
            c: fwd.enc_outs[l].c,
            h: fwd.enc_outs[l].h,
            w: fwd.enc_outs[l].w,
            data: gflat,
        };
        let gin = nn::conv_backward(&fwd.enc_acts[l], &w.enc_conv[l], a.enc[l], &gf, &mut g.enc_conv[l]);
        gflat = gin.data;
    }
    let _ = x;
}

/// Encodes an image (or scaled difference) into exactly `bits_out` bits.
pub fn encode(x: &Image, w: &CodecWeights, cfg: &CodecConfig) -> Result<Vec<u8>> {
    check_encode_args(x, w, cfg)?;
    let a = cfg.arch();
    let f = image_to_feat(x);
    let (_, _, _, bits) = encoder_forward(&f, w, &a);
    Ok(bits)
}

/// Decodes a bit vector into an image-shaped array in (-1, 1).
pub fn decode(bits: &[u8], w: &CodecWeights, cfg: &CodecConfig) -> Result<Image> {
    if bits.len() != cfg.bits_out {
        return Err(Error::Argument(format!(
            "expected {} bits, got {}",
            cfg.bits_out,
            bits.len()
        )));
    }
    if !w.matches(cfg) {
        return Err(Error::Argument("weights do not match codec config".into()));
    }
    let a = cfg.arch();
    let v: Vec<f64> = bits.iter().map(|&b| if b == 1 { 1.0 } else { -1.0 }).collect();
    let (_, _, _, y) = decoder_forward(&v, w, &a);
    Ok(feat_to_image(&y))
}

/// Binary symmetric channel: each bit flips independently with probability
/// `ber` under the seeded generator.
pub fn bsc(bits: &[u8], ber: f64, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    bits.iter()
        .map(|&b| if rng.random::<f64>() < ber { 1 - b } else { b })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct TrainParams {
    pub ber: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            ber: 0.01,
            lr: 1e-3,
            batch: 8,
            epochs: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: CodecWeights,
    /// Mean per-sample MSE of the freshly initialized model, before any
    /// update (same BSC statistics as training).
    pub initial_loss: f64,
    /// Mean per-sample MSE for each epoch.
    pub loss_history: Vec<f64>,
}

/// End-to-end training through encode -> BSC -> decode, minimizing MSE with
/// Adam. Deterministic given the seed (serial sample order, fixed reduction).
pub fn train(
    dataset: &[Image],
    cfg: &CodecConfig,
    opt: &TrainParams,
    seed: u64,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::Argument("training dataset is empty".into()));
    }
    for img in dataset {
        if img.height != cfg.height || img.width != cfg.width {
            return Err(Error::Argument(format!(
                "dataset entry {}x{} does not match codec config {}x{}",
                img.height, img.width, cfg.height, cfg.width
            )));
        }
    }
    let a = cfg.arch();
    let mut w = CodecWeights::init(cfg, seed);
    let sizes: Vec<usize> = w.param_vecs().iter().map(|v| v.len()).collect();
    let mut adam = nn::Adam::new(opt.lr, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0x7121]));

    let feats: Vec<Feat> = dataset.iter().map(image_to_feat).collect();
    let mut order: Vec<usize> = (0..feats.len()).collect();
    let mut history = Vec::with_capacity(opt.epochs);
    let mut last_good = w.clone();

    let initial_loss = {
        let mut acc = 0.0;
        let mut irng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0x1717]));
        for x in &feats {
            let flips: Vec<bool> = (0..a.bits).map(|_| irng.random::<f64>() < opt.ber).collect();
            acc += loss_of(&run_forward(x, &w, &a, Some(&flips)), x);
        }
        acc / feats.len() as f64
    };

    for epoch in 0..opt.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(opt.batch.max(1)) {
            let mut grads = CodecWeights::zeros(cfg);
            for &idx in chunk {
                let x = &feats[idx];
                let flips: Vec<bool> = (0..a.bits).map(|_| rng.random::<f64>() < opt.ber).collect();
                let fwd = run_forward(x, &w, &a, Some(&flips));
                epoch_loss += loss_of(&fwd, x);
                run_backward(&fwd, x, x, &w, &a, &mut grads);
            }
            let scale = 1.0 / chunk.len() as f64;
            for gv in grads.param_vecs_mut() {
                for g in gv.iter_mut() {
                    *g *= scale;
                }
            }
            let gvecs = grads.param_vecs();
            let mut pv = w.param_vecs_mut();
            adam.step(&mut pv, &gvecs);
        }
        let loss = epoch_loss / feats.len() as f64;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                checkpoint: Box::new(last_good),
            });
        }
        last_good = w.clone();
        history.push(loss);
        progress(epoch, loss);
    }
    Ok(TrainOutcome {
        weights: w,
        initial_loss,
        loss_history: history,
    })
}

/// Loss of the differentiable path (tanh feeds the decoder directly; no hard
/// decision, no BSC). Used by the finite-difference gradient oracle.
pub fn loss_soft(x: &Image, w: &CodecWeights, cfg: &CodecConfig) -> Result<f64> {
    check_encode_args(x, w, cfg)?;
    let a = cfg.arch();
    let f = image_to_feat(x);
    let fwd = run_forward(&f, w, &a, None);
    Ok(loss_of(&fwd, &f))
}

/// Analytic gradient of [`loss_soft`] for every parameter.
pub fn grad_soft(x: &Image, w: &CodecWeights, cfg: &CodecConfig) -> Result<CodecWeights> {
    check_encode_args(x, w, cfg)?;
    let a = cfg.arch();
    let f = image_to_feat(x);
    let fwd = run_forward(&f, w, &a, None);
    let mut g = CodecWeights::zeros(cfg);
    // soft path: tanh output went straight into the decoder, so the
    // straight-through identity is exact here
    run_backward(&fwd, &f, &f, w, &a, &mut g);
    Ok(g)
}

/// Mean reconstruction MSE of `encode -> bsc -> decode` over a dataset.
pub fn eval_mse(dataset: &[Image], w: &CodecWeights, cfg: &CodecConfig, ber: f64, seed: u64) -> Result<f64> {
    let mut total = 0.0;
    for (i, img) in dataset.iter().enumerate() {
        let bits = encode(img, w, cfg)?;
        let recv = bsc(&bits, ber, mix(&[seed, i as u64]));
        let out = decode(&recv, w, cfg)?;
        total += crate::metrics::mse(img, &out)?;
    }
    Ok(total / dataset.len() as f64)
}
