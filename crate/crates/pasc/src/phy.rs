//! OFDM physical layer: QPSK mapping, IFFT/CP framing, a tapped-delay-line
//! channel with optional Rayleigh fading, least-squares pilot channel
//! estimation, and single-tap equalization.
//!
//! Conventions: 256 subcarriers of which 150 are used (guards and DC are
//! zeroed), every sixth used bin carries a unit pilot (25 pilots, 125 data
//! bins), cyclic prefix of 64 samples, 40 symbols per frame. The transmit
//! IFFT is scaled by 1/N so the receive FFT restores bins exactly. `snr_db`
//! is the time-domain ratio of mean received signal power to noise power;
//! the resulting per-data-bin symbol SNR is `snr * n / n_used`.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::seedmix::mix;

#[derive(Debug, Clone, PartialEq)]
pub struct OfdmConfig {
    pub n: usize,
    pub cp: usize,
    /// First and last used bin (inclusive).
    pub used_lo: usize,
    pub used_hi: usize,
    /// Every `pilot_stride`-th used bin is a pilot, starting at the first.
    pub pilot_stride: usize,
    pub symbols_per_frame: usize,
    /// Seed for the pseudo-random QPSK pilot sequence known to both ends.
    pub pilot_seed: u64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            n: 256,
            cp: 64,
            used_lo: 53,
            used_hi: 202,
            pilot_stride: 6,
            symbols_per_frame: 40,
            pilot_seed: 0x9E37,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.used_hi >= self.n || self.used_lo > self.used_hi {
            return Err(Error::Config("invalid OFDM band layout".into()));
        }
        if self.pilot_stride < 2 || self.symbols_per_frame == 0 {
            return Err(Error::Config("invalid OFDM pilot/frame settings".into()));
        }
        Ok(())
    }

    pub fn used_bins(&self) -> Vec<usize> {
        (self.used_lo..=self.used_hi).collect()
    }

    pub fn n_used(&self) -> usize {
        self.used_hi - self.used_lo + 1
    }

    pub fn pilot_bins(&self) -> Vec<usize> {
        self.used_bins()
            .into_iter()
            .step_by(self.pilot_stride)
            .collect()
    }

    pub fn data_bins(&self) -> Vec<usize> {
        let pilots = self.pilot_bins();
        self.used_bins()
            .into_iter()
            .filter(|b| !pilots.contains(b))
            .collect()
    }

    /// Pilot QPSK values, one per pilot bin, reproducible from `pilot_seed`.
    pub fn pilot_symbols(&self) -> Vec<Complex64> {
        let n = self.pilot_bins().len();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[self.pilot_seed, 0x9107]));
        let bits: Vec<u8> = (0..2 * n).map(|_| rng.random_range(0..2u8)).collect();
        qpsk_mod(&bits).expect("even bit count")
    }

    pub fn data_symbols_per_frame(&self) -> usize {
        self.data_bins().len() * self.symbols_per_frame
    }

    /// QPSK payload bits carried by one frame.
    pub fn bits_per_frame(&self) -> usize {
        2 * self.data_symbols_per_frame()
    }

    pub fn samples_per_symbol(&self) -> usize {
        self.n + self.cp
    }
}

/// Gray-mapped QPSK: bit pair (b0, b1) -> ((1-2 b0) + i (1-2 b1)) / sqrt(2).
pub fn qpsk_mod(bits: &[u8]) -> Result<Vec<Complex64>> {
    if bits.len() % 2 != 0 {
        return Err(Error::Argument("QPSK needs an even number of bits".into()));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Ok(bits
        .chunks(2)
        .map(|p| Complex64::new((1.0 - 2.0 * p[0] as f64) * s, (1.0 - 2.0 * p[1] as f64) * s))
        .collect())
}

/// Hard decision per axis; an exact zero decides for bit 0.
pub fn qpsk_demod(symbols: &[Complex64]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(symbols.len() * 2);
    for s in symbols {
        bits.push(u8::from(s.re < 0.0));
        bits.push(u8::from(s.im < 0.0));
    }
    bits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fading {
    /// Deterministic real taps (frequency-selective but static).
    None,
    /// Independent complex Gaussian taps, redrawn per frame.
    Rayleigh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    /// Tap delays in samples.
    pub delays: Vec<usize>,
    /// Tap mean powers in dB (normalized to unit total on draw).
    pub powers_db: Vec<f64>,
    pub fading: Fading,
}

impl ChannelProfile {
    /// Three-tap hilly-terrain style profile: 0/-5/-10 dB at 0/4/10 samples.
    pub fn multipath(fading: Fading) -> Self {
        Self {
            delays: vec![0, 4, 10],
            powers_db: vec![0.0, -5.0, -10.0],
            fading,
        }
    }

    /// Single unit tap (pure AWGN link).
    pub fn awgn() -> Self {
        Self {
            delays: vec![0],
            powers_db: vec![0.0],
            fading: Fading::None,
        }
    }

    fn norm_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self.powers_db.iter().map(|p| 10f64.powf(p / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        lin.into_iter().map(|p| p / total).collect()
    }
}

/// One quasi-static realization: (delay, complex gain) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<(usize, Complex64)>,
}

impl ChannelRealization {
    pub fn max_delay(&self) -> usize {
        self.taps.iter().map(|(d, _)| *d).max().unwrap_or(0)
    }

    /// DFT of the impulse response: H[k] = sum_l a_l exp(-2 pi i k d_l / n).
    pub fn freq_response(&self, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|k| {
                self.taps
                    .iter()
                    .map(|&(d, a)| {
                        let phi = -2.0 * std::f64::consts::PI * (k * d % n) as f64 / n as f64;
                        a * Complex64::new(phi.cos(), phi.sin())
                    })
                    .sum()
            })
            .collect()
    }
}

pub fn draw_channel(profile: &ChannelProfile, seed: u64) -> ChannelRealization {
    let powers = profile.norm_powers();
    let taps = match profile.fading {
        Fading::None => profile
            .delays
            .iter()
            .zip(&powers)
            .map(|(&d, &p)| (d, Complex64::new(p.sqrt(), 0.0)))
            .collect(),
        Fading::Rayleigh => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0xC4A7]));
            let n01 = Normal::new(0.0, 1.0).unwrap();
            profile
                .delays
                .iter()
                .zip(&powers)
                .map(|(&d, &p)| {
                    let s = (p / 2.0).sqrt();
                    (d, Complex64::new(s * n01.sample(&mut rng), s * n01.sample(&mut rng)))
                })
                .collect()
        }
    };
    ChannelRealization { taps }
}

/// Linear convolution with the taps, then AWGN sized from the measured mean
/// received power. `snr_db = f64::INFINITY` disables the noise.
pub fn channel_apply(signal: &[Complex64], ch: &ChannelRealization, snr_db: f64, seed: u64) -> Vec<Complex64> {
    let out_len = signal.len() + ch.max_delay();
    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    for &(d, a) in &ch.taps {
        for (i, s) in signal.iter().enumerate() {
            out[i + d] += a * s;
        }
    }
    if snr_db.is_finite() {
        let p_rx: f64 = out.iter().map(|v| v.norm_sqr()).sum::<f64>() / out_len as f64;
        let var = p_rx / 10f64.powf(snr_db / 10.0);
        let n01 = Normal::new(0.0, (var / 2.0).sqrt()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0xA96E]));
        for v in &mut out {
            *v += Complex64::new(n01.sample(&mut rng), n01.sample(&mut rng));
        }
    }
    out
}

/// Maps one frame of data symbols onto time samples (pilots inserted, IFFT
/// scaled by 1/N, cyclic prefix prepended).
pub fn ofdm_modulate(data: &[Complex64], cfg: &OfdmConfig) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    if data.len() != cfg.data_symbols_per_frame() {
        return Err(Error::Argument(format!(
            "frame expects {} data symbols, got {}",
            cfg.data_symbols_per_frame(),
            data.len()
        )));
    }
    let pilots = cfg.pilot_bins();
    let pilot_vals = cfg.pilot_symbols();
    let data_bins = cfg.data_bins();
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(cfg.n);
    let mut out = Vec::with_capacity(cfg.symbols_per_frame * cfg.samples_per_symbol());
    for s in 0..cfg.symbols_per_frame {
        let mut bins = vec![Complex64::new(0.0, 0.0); cfg.n];
        for (&b, &v) in pilots.iter().zip(&pilot_vals) {
            bins[b] = v;
        }
        for (i, &b) in data_bins.iter().enumerate() {
            bins[b] = data[s * data_bins.len() + i];
        }
        ifft.process(&mut bins);
        let scale = 1.0 / cfg.n as f64;
        for v in &mut bins {
            *v *= scale;
        }
        out.extend_from_slice(&bins[cfg.n - cfg.cp..]);
        out.extend_from_slice(&bins);
    }
    Ok(out)
}

/// Splits a received frame back into per-symbol frequency bins (CP dropped,
/// forward FFT). Extra trailing samples (channel tail) are ignored.
pub fn ofdm_demodulate(samples: &[Complex64], cfg: &OfdmConfig) -> Result<Vec<Vec<Complex64>>> {
    cfg.validate()?;
    let per = cfg.samples_per_symbol();
    if samples.len() < per * cfg.symbols_per_frame {
        return Err(Error::Argument("received frame is too short".into()));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.n);
    let mut out = Vec::with_capacity(cfg.symbols_per_frame);
    for s in 0..cfg.symbols_per_frame {
        let start = s * per + cfg.cp;
        let mut bins = samples[start..start + cfg.n].to_vec();
        fft.process(&mut bins);
        out.push(bins);
    }
    Ok(out)
}

/// Least-squares channel estimate: Y/P at the pilot bins averaged over the
/// frame, linearly interpolated between pilots and held flat past the last
/// one. Returns the estimate on every used bin, indexed by absolute bin.
pub fn estimate_channel(symbols: &[Vec<Complex64>], cfg: &OfdmConfig) -> Vec<Complex64> {
    let pilots = cfg.pilot_bins();
    let pilot_vals = cfg.pilot_symbols();
    let mut h_p = vec![Complex64::new(0.0, 0.0); pilots.len()];
    for sym in symbols {
        for (i, &b) in pilots.iter().enumerate() {
            h_p[i] += sym[b] / pilot_vals[i];
        }
    }
    for h in &mut h_p {
        *h /= symbols.len() as f64;
    }
    let mut out = vec![Complex64::new(0.0, 0.0); cfg.n];
    for bin in cfg.used_bins() {
        let pos = match pilots.binary_search(&bin) {
            Ok(i) => {
                out[bin] = h_p[i];
                continue;
            }
            Err(p) => p,
        };
        out[bin] = if pos == 0 {
            h_p[0]
        } else if pos == pilots.len() {
            h_p[pilots.len() - 1]
        } else {
            let (b0, b1) = (pilots[pos - 1], pilots[pos]);
            let t = (bin - b0) as f64 / (b1 - b0) as f64;
            h_p[pos - 1] * (1.0 - t) + h_p[pos] * t
        };
    }
    out
}

/// Single-tap equalization `y / h`; bins with |h| below 1e-6 are erased to 0.
pub fn equalize(y: Complex64, h: Complex64) -> Complex64 {
    if h.norm() < 1e-6 {
        Complex64::new(0.0, 0.0)
    } else {
        y / h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Csi {
    Perfect,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkStats {
    pub ber: f64,
    pub frames_used: usize,
}

/// Full link: QPSK map, OFDM framing, channel (redrawn per frame), channel
/// estimation or perfect CSI, equalization, hard demodulation. Input is
/// zero-padded up to a whole number of frames; the returned bits are cut back
/// to the input length.
pub fn transmit_bits(
    bits: &[u8],
    cfg: &OfdmConfig,
    profile: &ChannelProfile,
    snr_db: f64,
    csi: Csi,
    seed: u64,
) -> Result<(Vec<u8>, LinkStats)> {
    cfg.validate()?;
    if let Some(&d) = profile.delays.iter().max() {
        if d >= cfg.cp {
            return Err(Error::Config(format!(
                "tap delay {d} reaches the cyclic prefix ({}): inter-symbol interference would break the per-bin model",
                cfg.cp
            )));
        }
    }
    if bits.is_empty() {
        return Ok((
            Vec::new(),
            LinkStats {
                ber: 0.0,
                frames_used: 0,
            },
        ));
    }
    let per_frame = cfg.bits_per_frame();
    let n_frames = bits.len().div_ceil(per_frame);
    let mut padded = bits.to_vec();
    padded.resize(n_frames * per_frame, 0);

    let data_bins = cfg.data_bins();
    let mut out = Vec::with_capacity(padded.len());
    for f in 0..n_frames {
        let chunk = &padded[f * per_frame..(f + 1) * per_frame];
        let syms = qpsk_mod(chunk)?;
        let tx = ofdm_modulate(&syms, cfg)?;
        let ch = draw_channel(profile, mix(&[seed, f as u64, 0xF4]));
        let rx = channel_apply(&tx, &ch, snr_db, mix(&[seed, f as u64, 0x40]));
        let rx_syms = ofdm_demodulate(&rx, cfg)?;
        let h = match csi {
            Csi::Perfect => ch.freq_response(cfg.n),
            Csi::Estimated => estimate_channel(&rx_syms, cfg),
        };
        let mut eq = Vec::with_capacity(cfg.data_symbols_per_frame());
        for sym in &rx_syms {
            for &b in &data_bins {
                eq.push(equalize(sym[b], h[b]));
            }
        }
        out.extend(qpsk_demod(&eq));
    }
    out.truncate(bits.len());
    let errs = out.iter().zip(bits).filter(|(a, b)| a != b).count();
    let stats = LinkStats {
        ber: errs as f64 / bits.len() as f64,
        frames_used: n_frames,
    };
    Ok((out, stats))
}
