use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pasc::adapt::{self, PolicyObjective};
use pasc::codec::{self, CodecConfig, TrainParams, Variant};
use pasc::harness::{self, ExperimentConfig, Link, PipelineSpec};
use pasc::scene::{self, Scenario, WorldConfig};
use pasc::seedmix::mix;
use pasc::Result;

#[derive(Parser)]
#[command(name = "pasc", about = "Position-aided semantic communication simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Pasc,
    Jscc,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Pasc => Variant::Pasc,
            VariantArg::Jscc => Variant::Jscc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Complexity,
    Bandwidth,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scenario and write target/synthesized PNGs plus metadata.
    GenScene {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "OutdoorMatch")]
        scenario: Scenario,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = scene::DEFAULT_FIDELITY)]
        fidelity: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a semantic codec and save its weights.
    TrainCodec {
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[arg(long, default_value_t = 2048)]
        bits: usize,
        #[arg(long, default_value_t = 0.4)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        ber: f64,
        #[arg(long, default_value_t = 3e-4)]
        lr: f64,
        /// Synthesis fidelity of the training scenes.
        #[arg(long, default_value_t = 0.6)]
        fidelity: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one pipeline once and print the result row as JSON.
    Run {
        /// pasc | jscc | baseline
        #[arg(long)]
        pipeline: String,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 75)]
        quality: u8,
        #[arg(long, default_value_t = 10.0)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "OutdoorMatch")]
        scenario: Scenario,
        #[arg(long, default_value_t = 0.4)]
        eps: f64,
        /// Use the static multipath profile instead of Rayleigh fading.
        #[arg(long)]
        no_fading: bool,
    },
    /// Run a full sweep from a JSON config and write a CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Query the method-selection policy against a performance table.
    Select {
        /// CSV table; the bundled reference table is used when omitted.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        snr: f64,
        #[arg(long, default_value_t = 0.23)]
        target: f64,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Complexity)]
        objective: ObjectiveArg,
        /// Also print the next configuration worth measuring.
        #[arg(long)]
        recommend: bool,
    },
    /// Run the position-mismatch detector for a scenario.
    Detect {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "OutdoorMatch")]
        scenario: Scenario,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenScene {
            seed,
            scenario,
            height,
            width,
            fidelity,
            out,
        } => {
            let wc = WorldConfig::new(seed, mix(&[seed, 1]), height, width, scenario)?;
            let (target, synth, label) = scene::make_scenario_with(&wc, scene::DEFAULT_MISMATCH_CELLS, fidelity)?;
            std::fs::create_dir_all(&out)?;
            harness::save_png(&target, &out.join("target.png"))?;
            harness::save_png(&synth, &out.join("synthesized.png"))?;
            let meta = serde_json::json!({
                "seed": seed,
                "scenario": label,
                "height": height,
                "width": width,
                "fidelity": fidelity,
                "pose": scene::derive_pose(&wc),
            });
            std::fs::write(out.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::TrainCodec {
            variant,
            bits,
            eps,
            seed,
            samples,
            epochs,
            ber,
            lr,
            fidelity,
            out,
        } => {
            let variant: Variant = variant.into();
            let eps_trained = match variant {
                Variant::Pasc => Some(eps),
                Variant::Jscc => None,
            };
            let cfg = CodecConfig::desk(variant, bits, eps_trained);
            let data = harness::build_training_set(variant, cfg.height, cfg.width, eps, fidelity, samples, seed)?;
            let params = TrainParams {
                ber,
                epochs,
                lr,
                ..TrainParams::default()
            };
            let outcome = codec::train(&data, &cfg, &params, seed, |epoch, loss| {
                eprintln!("epoch {epoch:3}  loss {loss:.6}");
            })?;
            codec::save_weights(&outcome.weights, &cfg, &out)?;
            println!(
                "trained {} -> {} (final loss {:.6})",
                cfg.label,
                out.display(),
                outcome.loss_history.last().unwrap()
            );
            Ok(())
        }
        Command::Run {
            pipeline,
            weights,
            quality,
            snr,
            seed,
            scenario,
            eps,
            no_fading,
        } => {
            let cfg = ExperimentConfig {
                master_seed: seed,
                height: 64,
                width: 32,
                snrs_db: vec![snr],
                trials: 1,
                scenario,
                fidelity: scene::DEFAULT_FIDELITY,
                eps,
                pipelines: vec![PipelineSpec::Baseline { quality }],
                rayleigh: !no_fading,
                estimated_csi: true,
            };
            let (p, p_syn) = harness::trial_scene(&cfg, 0)?;
            let link = Link::new(!no_fading, true);
            let row = match pipeline.as_str() {
                "baseline" => harness::run_baseline(&p, quality, &link, snr, seed)?,
                "pasc" | "jscc" => {
                    let path = weights.ok_or_else(|| {
                        pasc::Error::Argument(format!("--weights is required for the {pipeline} pipeline"))
                    })?;
                    let (w, ccfg) = codec::load_weights(&path)?;
                    if pipeline == "pasc" {
                        harness::run_pasc(&p, &p_syn, &w, &ccfg, eps, &link, snr, seed)?
                    } else {
                        harness::run_jscc(&p, &w, &ccfg, &link, snr, seed)?
                    }
                }
                other => return Err(pasc::Error::Argument(format!("unknown pipeline `{other}`"))),
            };
            println!("{}", serde_json::to_string_pretty(&row)?);
            Ok(())
        }
        Command::Sweep { config, out, workers } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = harness::sweep(&cfg, workers)?;
            harness::write_csv(&rows, &out)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Select {
            table,
            snr,
            target,
            objective,
            recommend,
        } => {
            let records = match table {
                Some(path) => adapt::load_table(&path)?,
                None => adapt::reference_table(),
            };
            let obj = match objective {
                ObjectiveArg::Complexity => PolicyObjective::ComplexityFirst,
                ObjectiveArg::Bandwidth => PolicyObjective::BandwidthFirst,
            };
            let d = adapt::select(&records, snr, target, obj)?;
            println!(
                "{} @ {} bits (metric {:.4}, target {}{})",
                d.record.method,
                d.record.bits,
                d.record.metric,
                target,
                if d.satisfied { " met" } else { " NOT met" }
            );
            if recommend {
                match adapt::recommend_new(&records, snr, target) {
                    Ok(r) => println!("next: {} @ {} bits", r.method, r.bits),
                    Err(pasc::Error::NoRecommendation) => println!("next: nothing left to try"),
                    Err(e) => return Err(e),
                }
            }
            Ok(())
        }
        Command::Detect {
            seed,
            scenario,
            height,
            width,
        } => {
            let route = harness::detect_for_world(seed, scenario, height, width)?;
            match route {
                adapt::Route::UsePasc => println!("position ok: transmit masked difference"),
                adapt::Route::UseFallback => println!("position mismatch: fall back to full image"),
            }
            Ok(())
        }
    }
}
