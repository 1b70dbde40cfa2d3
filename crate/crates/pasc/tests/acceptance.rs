//! End-to-end acceptance suite. Each test prints a single `criterion N:
//! PASS/FAIL` line (visible with `--nocapture`) and asserts the same
//! condition, so the suite is both a report and a gate.
//!
//! Trained codec weights are cached under `CARGO_TARGET_TMPDIR`, keyed by the
//! full training recipe, so repeat runs are fast.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use pasc::adapt::{self, Method, PolicyObjective, Route};
use pasc::codec::{self, CodecConfig, CodecWeights, TrainParams, Variant};
use pasc::diffmask::{combine, mask_diff, zero_ratio};
use pasc::harness::{self, ExperimentConfig, PipelineSpec, ResultRow};
use pasc::image::Image;
use pasc::metrics;
use pasc::phy::{self, ChannelProfile, Csi, Fading, OfdmConfig};
use pasc::scene::Scenario;

fn report(id: u32, pass: bool, detail: &str) {
    println!("criterion {id}: {} - {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id}: {detail}");
}

// ------------------------------------------------------------ weight cache

struct Recipe {
    variant: Variant,
    bits: usize,
    eps: f64,
    fidelity: f64,
    samples: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
}

/// Trains (or loads a cached copy of) a codec with the given recipe.
fn cached_codec(r: &Recipe) -> (CodecWeights, CodecConfig) {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("pascw-cache");
    fs::create_dir_all(&dir).expect("cache dir");
    let tag = match r.variant {
        Variant::Pasc => "pasc",
        Variant::Jscc => "jscc",
    };
    let path = dir.join(format!(
        "{tag}{}-e{}-f{}-s{}-ep{}-lr{}-sd{}.pascw",
        r.bits, r.eps, r.fidelity, r.samples, r.epochs, r.lr, r.seed
    ));
    if let Ok(pair) = codec::load_weights(&path) {
        return pair;
    }
    let eps_trained = matches!(r.variant, Variant::Pasc).then_some(r.eps);
    let cfg = CodecConfig::desk(r.variant, r.bits, eps_trained);
    let data = harness::build_training_set(r.variant, cfg.height, cfg.width, r.eps, r.fidelity, r.samples, r.seed)
        .expect("training set");
    let params = TrainParams {
        lr: r.lr,
        epochs: r.epochs,
        ..TrainParams::default()
    };
    let out = codec::train(&data, &cfg, &params, r.seed, |_, _| {}).expect("training");
    codec::save_weights(&out.weights, &cfg, &path).expect("cache write");
    (out.weights, cfg)
}

fn cache_path(r: &Recipe) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("pascw-cache");
    let tag = match r.variant {
        Variant::Pasc => "pasc",
        Variant::Jscc => "jscc",
    };
    dir.join(format!(
        "{tag}{}-e{}-f{}-s{}-ep{}-lr{}-sd{}.pascw",
        r.bits, r.eps, r.fidelity, r.samples, r.epochs, r.lr, r.seed
    ))
}

/// Shared deployment recipe for the comparison sweeps.
fn deploy_recipe(variant: Variant, bits: usize) -> Recipe {
    Recipe {
        variant,
        bits,
        eps: DEPLOY_EPS,
        fidelity: TRAIN_FIDELITY,
        samples: 200,
        epochs: 30,
        lr: 3e-4,
        seed: 11,
    }
}

const DEPLOY_EPS: f64 = 0.2;
const TRAIN_FIDELITY: f64 = 0.6;
const SWEEP_FIDELITY: f64 = 0.5;

fn qfunc(x: f64) -> f64 {
    // Abramowitz & Stegun 7.1.26 complementary-error-function approximation
    let t = 1.0 / (1.0 + 0.3275911 * (x / std::f64::consts::SQRT_2));
    let poly = t
        * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    0.5 * poly * (-(x * x) / 2.0).exp()
}

fn rand_bits(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

fn rand_quantized_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
    let mut img = Image::from_fn(h, w, |_, _| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).unwrap();
    img.quantize();
    img
}

// ------------------------------------------------------------- criteria

#[test]
fn criterion_1_qpsk_ofdm_ber_matches_closed_form() {
    let start = Instant::now();
    let cfg = OfdmConfig::default();
    let gamma_b = 10f64.powf(4.0 / 10.0);
    let snr_time = 2.0 * gamma_b * cfg.n_used() as f64 / cfg.n as f64;
    let snr_db = 10.0 * snr_time.log10();
    let bits = rand_bits(1_000_000, 0xACC1);
    let (out, _) = phy::transmit_bits(&bits, &cfg, &ChannelProfile::awgn(), snr_db, Csi::Perfect, 0xACC1).unwrap();
    let measured = metrics::ber(&bits, &out).unwrap();
    let theory = qfunc((2.0 * gamma_b).sqrt());
    let rel = (measured - theory).abs() / theory;
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        rel < 0.15 && secs < 60.0,
        &format!("AWGN Eb/N0=4dB over 1e6 bits: BER {measured:.5} vs Q-function {theory:.5} (rel {rel:.3}), {secs:.1}s"),
    );
}

#[test]
fn criterion_2_subcarrier_response_matches_dft_oracle() {
    let cfg = OfdmConfig::default();
    let profile = ChannelProfile::multipath(Fading::None);
    let ch = phy::draw_channel(&profile, 7);
    let oracle = ch.freq_response(cfg.n);

    let n_data = cfg.data_symbols_per_frame();
    let tx = phy::qpsk_mod(&rand_bits(2 * n_data, 0xACC2)).unwrap();
    let time = phy::ofdm_modulate(&tx, &cfg).unwrap();
    let rx_time = phy::channel_apply(&time, &ch, f64::INFINITY, 0);
    let symbols = phy::ofdm_demodulate(&rx_time, &cfg).unwrap();

    // measured per-subcarrier response on every loaded bin of every symbol
    let mut max_resp_err: f64 = 0.0;
    let mut max_sym_err: f64 = 0.0;
    let pilots = cfg.pilot_bins();
    let pilot_vals = cfg.pilot_symbols();
    let data_bins = cfg.data_bins();
    let mut k = 0;
    for sym in &symbols {
        for (i, &bin) in pilots.iter().enumerate() {
            let resp = sym[bin] / pilot_vals[i];
            max_resp_err = max_resp_err.max((resp - oracle[bin]).norm());
        }
        for &bin in &data_bins {
            if k >= tx.len() {
                break;
            }
            let resp = sym[bin] / tx[k];
            max_resp_err = max_resp_err.max((resp - oracle[bin]).norm());
            let eq = phy::equalize(sym[bin], oracle[bin]);
            max_sym_err = max_sym_err.max((eq - tx[k]).norm());
            k += 1;
        }
    }
    report(
        2,
        max_resp_err < 1e-9 && max_sym_err < 1e-9,
        &format!("noiseless 3-tap channel: response err {max_resp_err:.2e}, equalized err {max_sym_err:.2e}"),
    );
}

#[test]
fn criterion_3_mask_combine_roundtrip_and_monotone_sparsity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC3);
    let mut exact = true;
    let mut monotone = true;
    for _ in 0..100 {
        let p = rand_quantized_image(&mut rng, 32, 16);
        let p_syn = rand_quantized_image(&mut rng, 32, 16);
        let rt = combine(&p_syn, &mask_diff(&p, &p_syn, 0.0).unwrap()).unwrap();
        exact &= rt == p;
        let ratios: Vec<f64> = [0.0, 0.2, 0.4, 1.0]
            .iter()
            .map(|&e| zero_ratio(&mask_diff(&p, &p_syn, e).unwrap()))
            .collect();
        monotone &= ratios.windows(2).all(|w| w[1] >= w[0]);
    }
    report(
        3,
        exact && monotone,
        &format!("100 random pairs: bit-exact roundtrip {exact}, zero-ratio nondecreasing in eps {monotone}"),
    );
}

#[test]
fn criterion_4_policy_reproduces_reference_decisions() {
    let start = Instant::now();
    let t = adapt::reference_table();
    let target = 0.23;
    use PolicyObjective::*;
    // the six decision cells: both objectives at -5, 5, and 10 dB
    let cells = [
        (-5.0, ComplexityFirst, "PASC[eps=0.4]", 16384, 0.2676, false),
        (-5.0, BandwidthFirst, "PASC[eps=0.4]", 16384, 0.2676, false),
        (5.0, ComplexityFirst, "JSCC", 16384, 0.1801, true),
        (5.0, BandwidthFirst, "JSCC", 16384, 0.1801, true),
        (10.0, ComplexityFirst, "JSCC", 16384, 0.1821, true),
        (10.0, BandwidthFirst, "PASC[eps=0.4]", 2048, 0.2105, true),
    ];
    let mut ok = true;
    for (snr, obj, method, bits, metric, sat) in cells {
        let d = adapt::select(&t, snr, target, obj).unwrap();
        ok &= d.record.method.to_string() == method
            && d.record.bits == bits
            && d.record.metric == metric
            && d.satisfied == sat;
    }
    let r = adapt::recommend_new(&t, -5.0, target).unwrap();
    ok &= r.method == Method::Pasc { eps: 1.0 } && r.bits == 8192;
    let r = adapt::recommend_new(&t, 5.0, target).unwrap();
    ok &= r.method == Method::Pasc { eps: 0.4 } && r.bits == 8192;
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        ok && secs < 1.0,
        &format!("six decision cells + both recommendations on the shipped table, {secs:.3}s"),
    );
}

#[test]
fn criterion_5_mismatch_rule_routes_scenarios() {
    let mut pasc_hits = 0;
    let mut fallback_hits = 0;
    for seed in 0..100u64 {
        if harness::detect_for_world(1000 + seed, Scenario::OutdoorMatch, 64, 32).unwrap() == Route::UsePasc {
            pasc_hits += 1;
        }
        if harness::detect_for_world(2000 + seed, Scenario::Indoor, 64, 32).unwrap() == Route::UseFallback {
            fallback_hits += 1;
        }
    }
    report(
        5,
        pasc_hits >= 95 && fallback_hits >= 90,
        &format!("OutdoorMatch -> PASC {pasc_hits}/100 (need >=95), Indoor -> fallback {fallback_hits}/100 (need >=90)"),
    );
}

#[test]
fn criterion_6_codec_training_learns_and_gradients_check() {
    let start = Instant::now();
    let cfg = CodecConfig::desk(Variant::Pasc, 512, Some(DEPLOY_EPS));
    let data =
        harness::build_training_set(Variant::Pasc, 64, 32, DEPLOY_EPS, TRAIN_FIDELITY, 200, 77).unwrap();
    let params = TrainParams {
        lr: 3e-4,
        epochs: 30,
        ..TrainParams::default()
    };
    let out = codec::train(&data, &cfg, &params, 77, |_, _| {}).unwrap();
    let final_loss = *out.loss_history.last().unwrap();
    let halved = final_loss <= 0.5 * out.initial_loss;

    let held_out =
        harness::build_training_set(Variant::Pasc, 64, 32, DEPLOY_EPS, TRAIN_FIDELITY, 50, 500_077).unwrap();
    let trained_mse = codec::eval_mse(&held_out, &out.weights, &cfg, 0.01, 1).unwrap();
    let random_mse = codec::eval_mse(&held_out, &CodecWeights::init(&cfg, 123_456), &cfg, 0.01, 1).unwrap();
    let generalizes = trained_mse <= 0.5 * random_mse;

    // central finite differences on the differentiable path
    let x = &data[0];
    let w = CodecWeights::init(&cfg, 5);
    let g = codec::grad_soft(x, &w, &cfg).unwrap();
    let mut wp = w.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0xFD6);
    let mut checked = 0usize;
    let mut grad_ok = true;
    let mut worst: f64 = 0.0;
    let n_tensors = w.param_vecs().len();
    for t in 0..n_tensors {
        let len = w.param_vecs()[t].len();
        for _ in 0..4usize.min(len) {
            let i = (rng.random::<u64>() as usize) % len;
            let orig = wp.param_vecs()[t][i];
            let h = 1e-5 * orig.abs().max(1.0);
            wp.param_vecs_mut()[t][i] = orig + h;
            let lp = codec::loss_soft(x, &wp, &cfg).unwrap();
            wp.param_vecs_mut()[t][i] = orig - h;
            let lm = codec::loss_soft(x, &wp, &cfg).unwrap();
            wp.param_vecs_mut()[t][i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let an = g.param_vecs()[t][i];
            let denom = an.abs().max(fd.abs());
            if denom < 1e-9 {
                continue;
            }
            let rel = (an - fd).abs() / denom;
            worst = worst.max(rel);
            grad_ok &= rel <= 1e-4;
            checked += 1;
        }
    }
    grad_ok &= checked > 20;

    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        halved && generalizes && grad_ok && secs < 900.0,
        &format!(
            "loss {:.6}->{final_loss:.6} (ratio {:.2}), held-out {trained_mse:.6} vs random {random_mse:.6}, \
             {checked} gradients (worst rel {worst:.2e}), {secs:.0}s",
            out.initial_loss,
            final_loss / out.initial_loss
        ),
    );
}

fn mean_mse(rows: &[ResultRow], pipeline: &str) -> f64 {
    let sel: Vec<&ResultRow> = rows.iter().filter(|r| r.pipeline == pipeline).collect();
    sel.iter().map(|r| r.mse).sum::<f64>() / sel.len() as f64
}

fn comparison_config(snr_db: f64, pasc: PathBuf, jscc: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        master_seed: 2026,
        height: 64,
        width: 32,
        snrs_db: vec![snr_db],
        trials: 50,
        scenario: Scenario::OutdoorMatch,
        fidelity: SWEEP_FIDELITY,
        eps: DEPLOY_EPS,
        pipelines: vec![PipelineSpec::Pasc { weights: pasc }, PipelineSpec::Jscc { weights: jscc }],
        rayleigh: true,
        estimated_csi: true,
    }
}

#[test]
fn criterion_7_semantic_pipelines_order_by_snr() {
    let p1k = deploy_recipe(Variant::Pasc, 1024);
    let j1k = deploy_recipe(Variant::Jscc, 1024);
    let p16k = deploy_recipe(Variant::Pasc, 16384);
    let j16k = Recipe {
        samples: 500,
        epochs: 60,
        ..deploy_recipe(Variant::Jscc, 16384)
    };
    for r in [&p1k, &j1k, &p16k, &j16k] {
        cached_codec(r);
    }

    let low = harness::sweep(&comparison_config(0.0, cache_path(&p1k), cache_path(&j1k)), 4).unwrap();
    let (pasc_low, jscc_low) = (mean_mse(&low, "pasc"), mean_mse(&low, "jscc"));

    let high = harness::sweep(&comparison_config(10.0, cache_path(&p16k), cache_path(&j16k)), 4).unwrap();
    let (pasc_high, jscc_high) = (mean_mse(&high, "pasc"), mean_mse(&high, "jscc"));

    let low_ok = pasc_low < jscc_low;
    let high_ok = jscc_high <= 1.2 * pasc_high;
    report(
        7,
        low_ok && high_ok,
        &format!(
            "0dB/1k: PASC {pasc_low:.6} vs JSCC {jscc_low:.6}; 10dB/16k: JSCC {jscc_high:.6} vs 1.2x PASC {:.6}",
            1.2 * pasc_high
        ),
    );
}

#[test]
fn criterion_8_baseline_cliff() {
    let cfg = ExperimentConfig {
        master_seed: 2026,
        height: 64,
        width: 32,
        snrs_db: vec![15.0, -5.0],
        trials: 50,
        scenario: Scenario::OutdoorMatch,
        fidelity: SWEEP_FIDELITY,
        eps: DEPLOY_EPS,
        pipelines: vec![PipelineSpec::Baseline { quality: 75 }],
        rayleigh: true,
        estimated_csi: false,
    };
    let rows = harness::sweep(&cfg, 4).unwrap();
    let success = |snr: f64| {
        let sel: Vec<&ResultRow> = rows.iter().filter(|r| r.snr_db == snr).collect();
        sel.iter().filter(|r| r.decode_ok).count() as f64 / sel.len() as f64
    };
    let (hi, lo) = (success(15.0), success(-5.0));
    report(
        8,
        hi >= 0.95 && lo <= 0.05,
        &format!("decode success {hi:.2} at 15dB (need >=0.95), {lo:.2} at -5dB (need <=0.05)"),
    );
}

#[test]
fn criterion_9_sweeps_are_deterministic() {
    let p1k = deploy_recipe(Variant::Pasc, 1024);
    cached_codec(&p1k);
    let cfg = ExperimentConfig {
        master_seed: 424_242,
        height: 64,
        width: 32,
        snrs_db: vec![0.0, 10.0],
        trials: 3,
        scenario: Scenario::OutdoorMatch,
        fidelity: SWEEP_FIDELITY,
        eps: DEPLOY_EPS,
        pipelines: vec![
            PipelineSpec::Pasc { weights: cache_path(&p1k) },
            PipelineSpec::Baseline { quality: 60 },
        ],
        rayleigh: true,
        estimated_csi: true,
    };
    let a = harness::rows_to_csv(&harness::sweep(&cfg, 1).unwrap());
    let b = harness::rows_to_csv(&harness::sweep(&cfg, 1).unwrap());
    let c = harness::rows_to_csv(&harness::sweep(&cfg, 4).unwrap());
    report(
        9,
        a == b && a == c,
        &format!("CSV byte-identical across reruns ({}) and across 1 vs 4 workers ({})", a == b, a == c),
    );
}
