//! Image- and link-quality measurement: MSE, PSNR, windowed SSIM, BER.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// PSNR is capped here when the images are identical.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Dynamic range of [-1, 1] pixels.
const L: f64 = 2.0;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub zero_ratio: Option<f64>,
    pub ber: Option<f64>,
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Argument("mse shape mismatch".into()));
    }
    let n = a.data.len() as f64;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / n)
}

/// PSNR over peak-to-peak range 2.0, in dB; identical images report the cap.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(psnr_from_mse(m))
}

pub fn psnr_from_mse(m: f64) -> f64 {
    if m <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * ((L * L) / m).log10()).min(PSNR_CAP_DB)
}

/// Windowed SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01*L)^2,
/// C2=(0.03*L)^2, valid windows only, averaged over channels and positions.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Argument("ssim shape mismatch".into()));
    }
    const WIN: usize = 11;
    if a.height < WIN || a.width < WIN {
        return Err(Error::Argument(format!(
            "ssim needs min dimension >= {WIN}, got {}x{}",
            a.height, a.width
        )));
    }
    let w = gaussian_window(WIN, 1.5);
    let c1 = (0.01 * L) * (0.01 * L);
    let c2 = (0.03 * L) * (0.03 * L);

    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        for i0 in 0..=(a.height - WIN) {
            for j0 in 0..=(a.width - WIN) {
                let mut mu_x = 0.0;
                let mut mu_y = 0.0;
                for di in 0..WIN {
                    for dj in 0..WIN {
                        let wij = w[di * WIN + dj];
                        mu_x += wij * a.get(i0 + di, j0 + dj)[c];
                        mu_y += wij * b.get(i0 + di, j0 + dj)[c];
                    }
                }
                let mut var_x = 0.0;
                let mut var_y = 0.0;
                let mut cov = 0.0;
                for di in 0..WIN {
                    for dj in 0..WIN {
                        let wij = w[di * WIN + dj];
                        let dx = a.get(i0 + di, j0 + dj)[c] - mu_x;
                        let dy = b.get(i0 + di, j0 + dj)[c] - mu_y;
                        var_x += wij * dx * dx;
                        var_y += wij * dy * dy;
                        cov += wij * dx * dy;
                    }
                }
                let s = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2))
                    / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
                total += s;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

fn gaussian_window(n: usize, sigma: f64) -> Vec<f64> {
    let half = (n as f64 - 1.0) / 2.0;
    let mut w = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let di = i as f64 - half;
            let dj = j as f64 - half;
            let v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            w[i * n + j] = v;
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Hamming distance divided by length.
pub fn ber(sent: &[u8], recv: &[u8]) -> Result<f64> {
    if sent.len() != recv.len() {
        return Err(Error::Argument(format!(
            "ber length mismatch: {} vs {}",
            sent.len(),
            recv.len()
        )));
    }
    if sent.is_empty() {
        return Ok(0.0);
    }
    let errs = sent.iter().zip(recv).filter(|(a, b)| a != b).count();
    Ok(errs as f64 / sent.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_img(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::new(h, w).unwrap();
        for v in &mut img.data {
            *v = rng.random_range(-1.0..1.0);
        }
        img
    }

    #[test]
    fn mse_and_psnr_basics() {
        let a = rand_img(1, 16, 16);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);

        let ones = Image::from_fn(16, 16, |_, _| [1.0, 1.0, 1.0]).unwrap();
        let neg = Image::from_fn(16, 16, |_, _| [-1.0, -1.0, -1.0]).unwrap();
        assert_eq!(mse(&ones, &neg).unwrap(), 4.0);
        assert!((psnr(&ones, &neg).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn mse_matches_reordered_summation_oracle() {
        let a = rand_img(2, 16, 16);
        let b = rand_img(3, 16, 16);
        let m = mse(&a, &b).unwrap();
        // independent route: per-pixel accumulation in reverse order
        let mut sum = 0.0;
        for px in (0..a.n_pixels()).rev() {
            for c in (0..3).rev() {
                let d = a.data[px * 3 + c] - b.data[px * 3 + c];
                sum += d * d;
            }
        }
        let oracle = sum / a.data.len() as f64;
        assert!((m - oracle).abs() < 1e-12);
    }

    #[test]
    fn psnr_mse_consistency() {
        let a = rand_img(4, 16, 16);
        let b = rand_img(5, 16, 16);
        let m = mse(&a, &b).unwrap();
        let p = psnr(&a, &b).unwrap();
        assert!((p - 10.0 * (4.0 / m).log10()).abs() < 1e-12);
    }

    #[test]
    fn ssim_identity_symmetry_and_range() {
        let a = rand_img(6, 16, 16);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);

        let mut shifted = a.clone();
        for v in &mut shifted.data {
            *v = (*v + 0.5).clamp(-1.0, 1.0);
        }
        let s = ssim(&a, &shifted).unwrap();
        assert!(s < 1.0);
        assert!((-1.0..=1.0).contains(&s));

        let b = rand_img(7, 16, 16);
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = rand_img(8, 8, 8);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn ber_counts_flips() {
        let a = vec![0u8; 1000];
        let mut b = a.clone();
        assert_eq!(ber(&a, &b).unwrap(), 0.0);
        b[17] = 1;
        assert_eq!(ber(&a, &b).unwrap(), 0.001);
        let c: Vec<u8> = a.iter().map(|x| 1 - x).collect();
        assert_eq!(ber(&a, &c).unwrap(), 1.0);
        assert!(ber(&a, &b[..10].to_vec()).is_err());
    }
}
