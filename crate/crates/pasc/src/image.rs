//! Image and pose types shared across the pipeline.
//!
//! Pixels are stored row-major as interleaved RGB with every component in
//! [-1, 1]. Renders are quantized to multiples of 1/256 so that difference
//! masking and recombination are exact in floating point.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// H x W x 3 image with components in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    /// Row-major, RGB interleaved; length = height * width * 3.
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        check_size(height, width)?;
        Ok(Self {
            height,
            width,
            data: vec![0.0; height * width * 3],
        })
    }

    /// Builds an image by evaluating `f(row, col) -> [r, g, b]` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut img = Self::new(height, width)?;
        for i in 0..height {
            for j in 0..width {
                img.set(i, j, f(i, j));
            }
        }
        Ok(img)
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize) -> usize {
        (row * self.width + col) * 3
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [f64; 3] {
        let k = self.idx(row, col);
        [self.data[k], self.data[k + 1], self.data[k + 2]]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let k = self.idx(row, col);
        self.data[k] = rgb[0];
        self.data[k + 1] = rgb[1];
        self.data[k + 2] = rgb[2];
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    /// Clamps every component to [-1, 1] and snaps it to the nearest multiple
    /// of 1/256. All quantized values (and their pairwise differences) are
    /// exactly representable, which keeps mask/combine round trips bit-exact.
    pub fn quantize(&mut self) {
        for v in &mut self.data {
            let c = v.clamp(-1.0, 1.0);
            *v = (c * 256.0).round() / 256.0;
        }
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(-1.0, 1.0);
        }
    }
}

pub(crate) fn check_size(height: usize, width: usize) -> Result<()> {
    if height < 8 || width < 8 || height % 2 != 0 || width % 2 != 0 {
        return Err(Error::Config(format!(
            "image size {height}x{width} invalid: dimensions must be even and >= 8"
        )));
    }
    Ok(())
}

/// Camera position and viewing direction in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians, normalized to [0, 2*pi).
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() || !heading.is_finite() {
            return Err(Error::Argument("pose coordinates must be finite".into()));
        }
        Ok(Self {
            x,
            y,
            heading: normalize_heading(heading),
        })
    }
}

pub fn normalize_heading(h: f64) -> f64 {
    let r = h.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}
