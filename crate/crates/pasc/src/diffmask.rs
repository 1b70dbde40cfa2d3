//! Thresholded difference masking and its inverse combination.
//!
//! A pixel of the difference image is transmitted only when the sum of its
//! absolute channel differences exceeds the threshold (strict inequality);
//! otherwise it is exactly (0, 0, 0). The receiver adds the (decoded)
//! difference back onto the shared synthetic image.

use crate::error::{Error, Result};
use crate::image::Image;

/// Masked difference between an image and its synthetic counterpart.
///
/// Components lie in [-2, 2]. For outputs of [`mask_diff`] every pixel is
/// either exactly zero or has channel-absolute-sum above `eps`; decoded
/// differences coming back from the codec are approximate and carry no such
/// guarantee.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    /// Threshold used (or assumed) when this difference was produced.
    pub eps: f64,
}

impl DiffImage {
    pub fn zeros(height: usize, width: usize, eps: f64) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 3],
            eps,
        }
    }

    pub fn from_raw(height: usize, width: usize, data: Vec<f64>, eps: f64) -> Self {
        assert_eq!(data.len(), height * width * 3);
        Self {
            height,
            width,
            data,
            eps,
        }
    }
}

/// Per-pixel thresholded difference `p - p_syn`.
pub fn mask_diff(p: &Image, p_syn: &Image, eps: f64) -> Result<DiffImage> {
    if !p.same_shape(p_syn) {
        return Err(Error::Argument(format!(
            "mask_diff shape mismatch: {}x{} vs {}x{}",
            p.height, p.width, p_syn.height, p_syn.width
        )));
    }
    if !(eps >= 0.0) {
        return Err(Error::Argument(format!("mask_diff eps must be >= 0, got {eps}")));
    }
    let mut out = DiffImage::zeros(p.height, p.width, eps);
    for px in 0..p.n_pixels() {
        let k = px * 3;
        let d0 = p.data[k] - p_syn.data[k];
        let d1 = p.data[k + 1] - p_syn.data[k + 1];
        let d2 = p.data[k + 2] - p_syn.data[k + 2];
        if d0.abs() + d1.abs() + d2.abs() > eps {
            out.data[k] = d0;
            out.data[k + 1] = d1;
            out.data[k + 2] = d2;
        }
    }
    Ok(out)
}

/// Fraction of difference pixels that are exactly (0, 0, 0).
pub fn zero_ratio(d: &DiffImage) -> f64 {
    let n = d.height * d.width;
    if n == 0 {
        return 1.0;
    }
    let zeros = (0..n)
        .filter(|px| {
            let k = px * 3;
            d.data[k] == 0.0 && d.data[k + 1] == 0.0 && d.data[k + 2] == 0.0
        })
        .count();
    zeros as f64 / n as f64
}

/// Receiver-side fusion: `p_syn + d_hat`, clamped to [-1, 1].
pub fn combine(p_syn: &Image, d_hat: &DiffImage) -> Result<Image> {
    combine_opts(p_syn, d_hat, None)
}

/// Like [`combine`], with optional 3x3 median smoothing at pixels whose
/// decoded difference magnitude stays below `smooth_floor` (off by default).
pub fn combine_opts(p_syn: &Image, d_hat: &DiffImage, smooth_floor: Option<f64>) -> Result<Image> {
    if p_syn.height != d_hat.height || p_syn.width != d_hat.width {
        return Err(Error::Argument(format!(
            "combine shape mismatch: {}x{} vs {}x{}",
            p_syn.height, p_syn.width, d_hat.height, d_hat.width
        )));
    }
    let mut out = p_syn.clone();
    for (v, d) in out.data.iter_mut().zip(d_hat.data.iter()) {
        *v = (*v + d).clamp(-1.0, 1.0);
    }
    if let Some(floor) = smooth_floor {
        let fused = out.clone();
        for i in 0..out.height {
            for j in 0..out.width {
                let k = out.idx(i, j);
                let mag = d_hat.data[k].abs() + d_hat.data[k + 1].abs() + d_hat.data[k + 2].abs();
                if mag < floor {
                    out.set(i, j, median3x3(&fused, i, j));
                }
            }
        }
    }
    Ok(out)
}

fn median3x3(img: &Image, row: usize, col: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut vals: Vec<f64> = Vec::with_capacity(9);
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                let i = (row as i64 + di).clamp(0, img.height as i64 - 1) as usize;
                let j = (col as i64 + dj).clamp(0, img.width as i64 - 1) as usize;
                vals.push(img.get(i, j)[c]);
            }
        }
        vals.sort_by(f64::total_cmp);
        *o = vals[4];
    }
    out
}
