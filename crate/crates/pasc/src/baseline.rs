//! Conventional separated-coding baseline: 8x8 block DCT with uniform
//! quantization and Exp-Golomb entropy coding, protected by a rate-1/2
//! constraint-length-7 convolutional code (generators 171/133 octal) with
//! hard-decision Viterbi decoding.
//!
//! The source bitstream carries a small header and a CRC-32 so the receiver
//! can tell a residually corrupted payload from a clean one.

use crate::error::{Error, Result};
use crate::image::Image;

const BLOCK: usize = 8;
const BASE_STEP: f64 = 0.1;
const K: usize = 7;
const G0: u32 = 0o171;
const G1: u32 = 0o133;

// ---------------------------------------------------------------- bitstream

#[derive(Default)]
pub struct BitWriter {
    bits: Vec<u8>,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bit: u8) {
        self.bits.push(bit & 1);
    }

    /// MSB-first fixed-width field.
    pub fn uint(&mut self, v: u64, width: usize) {
        for i in (0..width).rev() {
            self.push(((v >> i) & 1) as u8);
        }
    }

    /// Unsigned Exp-Golomb.
    pub fn ue(&mut self, v: u64) {
        let x = v + 1;
        let n = 64 - x.leading_zeros() as usize;
        for _ in 0..n - 1 {
            self.push(0);
        }
        self.uint(x, n);
    }

    /// Signed Exp-Golomb: 0, 1, -1, 2, -2, ...
    pub fn se(&mut self, v: i64) {
        let u = if v > 0 { (2 * v - 1) as u64 } else { (-2 * v) as u64 };
        self.ue(u);
    }

    pub fn into_bits(self) -> Vec<u8> {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

pub struct BitReader<'a> {
    bits: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bits: &'a [u8]) -> Self {
        Self { bits, pos: 0 }
    }

    pub fn bit(&mut self) -> Result<u8> {
        let b = *self
            .bits
            .get(self.pos)
            .ok_or_else(|| Error::DecodeFailure("bitstream exhausted".into()))?;
        self.pos += 1;
        Ok(b & 1)
    }

    pub fn uint(&mut self, width: usize) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.bit()? as u64;
        }
        Ok(v)
    }

    pub fn ue(&mut self) -> Result<u64> {
        let mut zeros = 0usize;
        while self.bit()? == 0 {
            zeros += 1;
            if zeros > 63 {
                return Err(Error::DecodeFailure("malformed Exp-Golomb code".into()));
            }
        }
        let mut x = 1u64;
        for _ in 0..zeros {
            x = (x << 1) | self.bit()? as u64;
        }
        Ok(x - 1)
    }

    pub fn se(&mut self) -> Result<i64> {
        let u = self.ue()? as i64;
        Ok(if u % 2 == 1 { (u + 1) / 2 } else { -u / 2 })
    }

    pub fn pos(&self) -> usize {
        self.pos
    }
}

fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | b) << (8 - c.len()))
        .collect()
}

pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ 0xEDB8_8320 } else { crc >> 1 };
        }
    }
    !crc
}

// ---------------------------------------------------------------- transform

/// Orthonormal 1-D DCT-II basis, c[k][n] applied as `X = C x`.
fn dct_basis() -> [[f64; BLOCK]; BLOCK] {
    let mut c = [[0.0; BLOCK]; BLOCK];
    let n = BLOCK as f64;
    for (k, row) in c.iter_mut().enumerate() {
        let a = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for (i, v) in row.iter_mut().enumerate() {
            *v = a * (std::f64::consts::PI * (i as f64 + 0.5) * k as f64 / n).cos();
        }
    }
    c
}

pub fn dct2_forward(block: &[f64; 64]) -> [f64; 64] {
    let c = dct_basis();
    let mut tmp = [0.0; 64];
    for i in 0..BLOCK {
        for k in 0..BLOCK {
            tmp[i * BLOCK + k] = (0..BLOCK).map(|j| c[k][j] * block[i * BLOCK + j]).sum();
        }
    }
    let mut out = [0.0; 64];
    for k in 0..BLOCK {
        for l in 0..BLOCK {
            out[k * BLOCK + l] = (0..BLOCK).map(|i| c[k][i] * tmp[i * BLOCK + l]).sum();
        }
    }
    out
}

pub fn dct2_inverse(coef: &[f64; 64]) -> [f64; 64] {
    let c = dct_basis();
    let mut tmp = [0.0; 64];
    for k in 0..BLOCK {
        for j in 0..BLOCK {
            tmp[k * BLOCK + j] = (0..BLOCK).map(|l| c[l][j] * coef[k * BLOCK + l]).sum();
        }
    }
    let mut out = [0.0; 64];
    for i in 0..BLOCK {
        for j in 0..BLOCK {
            out[i * BLOCK + j] = (0..BLOCK).map(|k| c[k][i] * tmp[k * BLOCK + j]).sum();
        }
    }
    out
}

fn zigzag_order() -> [usize; 64] {
    let mut order = [0usize; 64];
    let mut idx = 0;
    for s in 0..2 * BLOCK - 1 {
        let coords: Vec<(usize, usize)> = (0..=s.min(BLOCK - 1))
            .filter_map(|i| {
                let j = s.checked_sub(i)?;
                (j < BLOCK).then_some((i, j))
            })
            .collect();
        let iter: Box<dyn Iterator<Item = &(usize, usize)>> = if s % 2 == 0 {
            Box::new(coords.iter().rev())
        } else {
            Box::new(coords.iter())
        };
        for &(i, j) in iter {
            order[idx] = i * BLOCK + j;
            idx += 1;
        }
    }
    order
}

fn quant_step(quality: u8) -> f64 {
    let q = quality.clamp(1, 100) as f64;
    let scale = if q < 50.0 { 50.0 / q } else { 2.0 - q / 50.0 };
    (BASE_STEP * scale).max(1e-4)
}

// ------------------------------------------------------------- source codec

/// Transform-codes an image into a self-delimiting bitstream (header,
/// Exp-Golomb coefficient payload, CRC-32 of the payload).
pub fn src_encode(img: &Image, quality: u8) -> Result<Vec<u8>> {
    if img.height % BLOCK != 0 || img.width % BLOCK != 0 {
        return Err(Error::Argument(format!(
            "image {}x{} is not a multiple of the block size",
            img.height, img.width
        )));
    }
    let step = quant_step(quality);
    let zz = zigzag_order();
    let mut payload = BitWriter::new();
    for c in 0..3 {
        let mut prev_dc = 0i64;
        for by in (0..img.height).step_by(BLOCK) {
            for bx in (0..img.width).step_by(BLOCK) {
                let mut block = [0.0; 64];
                for i in 0..BLOCK {
                    for j in 0..BLOCK {
                        block[i * BLOCK + j] = img.get(by + i, bx + j)[c];
                    }
                }
                let coef = dct2_forward(&block);
                let q: Vec<i64> = coef.iter().map(|v| (v / step).round() as i64).collect();
                payload.se(q[0] - prev_dc);
                prev_dc = q[0];
                // run-length over the zigzag AC scan; level 0 is end-of-block
                let mut run = 0u64;
                for &pos in &zz[1..] {
                    if q[pos] == 0 {
                        run += 1;
                    } else {
                        payload.ue(run);
                        payload.se(q[pos]);
                        run = 0;
                    }
                }
                payload.ue(0);
                payload.se(0);
            }
        }
    }

    let payload = payload.into_bits();
    let crc = crc32(&bits_to_bytes(&payload));
    let mut out = BitWriter::new();
    out.uint(img.height as u64, 16);
    out.uint(img.width as u64, 16);
    out.uint(quality as u64, 8);
    out.uint(payload.len() as u64, 32);
    let mut bits = out.into_bits();
    bits.extend_from_slice(&payload);
    let mut tail = BitWriter::new();
    tail.uint(crc as u64, 32);
    bits.extend(tail.into_bits());
    Ok(bits)
}

/// Inverse of [`src_encode`]. Fails with [`Error::DecodeFailure`] when the
/// header is implausible or the payload CRC does not match.
pub fn src_decode(bits: &[u8]) -> Result<Image> {
    let mut r = BitReader::new(bits);
    let h = r.uint(16)? as usize;
    let w = r.uint(16)? as usize;
    let quality = r.uint(8)? as u8;
    let n_payload = r.uint(32)? as usize;
    if h == 0 || w == 0 || h % BLOCK != 0 || w % BLOCK != 0 || h > 4096 || w > 4096 {
        return Err(Error::DecodeFailure(format!("implausible header {h}x{w}")));
    }
    if bits.len() < 72 + n_payload + 32 {
        return Err(Error::DecodeFailure("payload shorter than header claims".into()));
    }
    let payload = &bits[72..72 + n_payload];
    let mut tail = BitReader::new(&bits[72 + n_payload..]);
    let crc_stored = tail.uint(32)? as u32;
    if crc32(&bits_to_bytes(payload)) != crc_stored {
        return Err(Error::DecodeFailure("payload checksum mismatch".into()));
    }

    let step = quant_step(quality);
    let zz = zigzag_order();
    let mut r = BitReader::new(payload);
    let mut img = Image::new(h, w)?;
    for c in 0..3 {
        let mut prev_dc = 0i64;
        for by in (0..h).step_by(BLOCK) {
            for bx in (0..w).step_by(BLOCK) {
                let mut q = [0i64; 64];
                prev_dc += r.se()?;
                q[0] = prev_dc;
                let mut scan = 1usize;
                loop {
                    let run = r.ue()? as usize;
                    let level = r.se()?;
                    if level == 0 {
                        break;
                    }
                    scan += run;
                    if scan >= 64 {
                        return Err(Error::DecodeFailure("AC run past end of block".into()));
                    }
                    q[zz[scan]] = level;
                    scan += 1;
                }
                let mut coef = [0.0; 64];
                for (dst, &v) in coef.iter_mut().zip(&q) {
                    *dst = v as f64 * step;
                }
                let block = dct2_inverse(&coef);
                for i in 0..BLOCK {
                    for j in 0..BLOCK {
                        let k = img.idx(by + i, bx + j);
                        img.data[k + c] = block[i * BLOCK + j].clamp(-1.0, 1.0);
                    }
                }
            }
        }
    }
    Ok(img)
}

// ------------------------------------------------------------ channel code

#[inline]
fn parity(x: u32) -> u8 {
    (x.count_ones() % 2) as u8
}

/// Rate-1/2 convolutional encoder, generators 171/133 (octal), six tail zeros
/// to flush the register. Output length is `2 * (n + 6)`.
pub fn conv_encode(bits: &[u8]) -> Vec<u8> {
    let mut state = 0u32; // previous K-1 inputs, newest in the high bit
    let mut out = Vec::with_capacity(2 * (bits.len() + K - 1));
    for &b in bits.iter().chain(std::iter::repeat_n(&0u8, K - 1)) {
        let reg = ((b as u32) << (K - 1)) | state;
        out.push(parity(reg & G0));
        out.push(parity(reg & G1));
        state = reg >> 1;
    }
    out
}

/// Hard-decision Viterbi decoder for [`conv_encode`]. The traceback assumes
/// the encoder was flushed, so it starts from state 0.
pub fn viterbi_decode(coded: &[u8]) -> Result<Vec<u8>> {
    if coded.len() % 2 != 0 || coded.len() < 2 * (K - 1) {
        return Err(Error::DecodeFailure(format!(
            "coded length {} is not a valid rate-1/2 stream",
            coded.len()
        )));
    }
    let steps = coded.len() / 2;
    let n_states = 1usize << (K - 1);
    const INF: u32 = u32::MAX / 2;
    let mut metric = vec![INF; n_states];
    metric[0] = 0;
    // survivors[t][s] = (previous state, input bit)
    let mut survivors = vec![vec![(0usize, 0u8); n_states]; steps];

    for (t, pair) in coded.chunks(2).enumerate() {
        let (r0, r1) = (pair[0], pair[1]);
        let mut next = vec![INF; n_states];
        for s in 0..n_states {
            if metric[s] == INF {
                continue;
            }
            for b in 0..2u32 {
                let reg = (b << (K - 1)) | s as u32;
                let cost = (parity(reg & G0) != r0) as u32 + (parity(reg & G1) != r1) as u32;
                let ns = (reg >> 1) as usize;
                let m = metric[s] + cost;
                if m < next[ns] {
                    next[ns] = m;
                    survivors[t][ns] = (s, b as u8);
                }
            }
        }
        metric = next;
    }

    let mut state = 0usize; // flushed encoder ends in state 0
    let mut bits = vec![0u8; steps];
    for t in (0..steps).rev() {
        let (prev, b) = survivors[t][state];
        bits[t] = b;
        state = prev;
    }
    bits.truncate(steps - (K - 1)); // drop the tail
    Ok(bits)
}

/// Source-encode then channel-encode.
pub fn encode_frame(img: &Image, quality: u8) -> Result<Vec<u8>> {
    Ok(interleave(&conv_encode(&src_encode(img, quality)?)))
}

/// Channel-decode then source-decode.
pub fn decode_frame(coded: &[u8]) -> Result<Image> {
    src_decode(&viterbi_decode(&deinterleave(coded))?)
}

/// Seeded pseudo-random permutation of the coded bits. The fading channel
/// hits the same subcarriers all frame long; spreading those bursts lets the
/// Viterbi decoder see near-independent errors instead.
fn permutation(n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(crate::seedmix::mix(&[n as u64, 0x1317]));
    idx.shuffle(&mut rng);
    idx
}

pub fn interleave(bits: &[u8]) -> Vec<u8> {
    let perm = permutation(bits.len());
    perm.iter().map(|&i| bits[i]).collect()
}

pub fn deinterleave(bits: &[u8]) -> Vec<u8> {
    let perm = permutation(bits.len());
    let mut out = vec![0u8; bits.len()];
    for (k, &i) in perm.iter().enumerate() {
        out[i] = bits[k];
    }
    out
}
