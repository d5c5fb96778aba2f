//! Command-line entry point wiring all subcommands.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clickdet::commands::{self, EvaluateMode};
use clickdet::config::PipelineConfig;
use clickdet::pipeline;
use clickdet_core::detections::PostprocessConfig;
use clickdet_core::fod::FodConfig;

#[derive(Parser)]
#[command(
    name = "clickdet",
    version,
    about = "Detect, refine, classify and evaluate echolocation click events in underwater audio"
)]
struct Cli {
    /// Optional TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOverrides {
    /// Sample-window length in samples.
    #[arg(long)]
    window_length: Option<usize>,
    /// Master RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a preset scene to audio plus ground-truth labels.
    Synth {
        /// Preset name: high_snr_burst, low_snr_burst, click_echo_pairs,
        /// interference_only or mixed_scene.
        #[arg(long)]
        preset: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_audio: PathBuf,
        #[arg(long)]
        out_labels: PathBuf,
    },
    /// Run the standalone gradient-impulse detector.
    DetectFod {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ma_window: Option<usize>,
        #[arg(long)]
        max_gap: Option<usize>,
        #[arg(long)]
        pad: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export one composite waveform/CWT/spectrogram image per window.
    Transform {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Window audio, write training label files and split lists.
    Dataset {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Train/val/test fractions.
        #[arg(long, default_value = "0.70,0.15,0.15")]
        split: String,
        /// Also export the per-window composite images.
        #[arg(long)]
        images: bool,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Ingest, merge and slice external detector boxes.
    Postprocess {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Confidence floor in [0, 1].
        #[arg(long)]
        conf: Option<f64>,
        #[arg(long)]
        max_gap: Option<usize>,
        #[arg(long)]
        pad: Option<usize>,
        /// Sliced boxes need at least this many gated peaks.
        #[arg(long)]
        min_peaks: Option<usize>,
        /// Sliced boxes need a strongest gated peak of at least this value.
        #[arg(long)]
        min_peak_magnitude: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Extract per-event classifier features (and optionally classes).
    Features {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Truth labels used to derive a class per box.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Output CSV for the derived classes (requires --truth).
        #[arg(long)]
        out_classes: Option<PathBuf>,
    },
    /// Train the random forest from feature/class CSV files.
    TrainForest {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 10)]
        trees: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Context window size: 3, 5 or 9 events.
        #[arg(long)]
        context: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label boxes click/echo/other with a trained forest.
    Classify {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write LF/HF/US band labels for classified clicks.
        #[arg(long)]
        bands: Option<PathBuf>,
    },
    /// Score predictions against truth labels.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value = "overlap")]
        mode: String,
        #[arg(long)]
        partial: Option<f64>,
        #[arg(long)]
        full: Option<f64>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Threshold sweep over a detections file.
    Sweep {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Grid: `15..75:5` or `15,30,75` (confidence percent).
        #[arg(long)]
        conf: String,
        /// Optional model so click/echo rates are classified.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Full run: detect/postprocess, classify, evaluate.
    Pipeline {
        #[arg(long)]
        audio: PathBuf,
        /// External detections file; without it the gradient detector runs.
        #[arg(long)]
        detections: Option<PathBuf>,
        /// Truth labels enabling the evaluation stage.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Forest model enabling the classify stage.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: CommonOverrides,
    },
}

fn load_config(cli_config: &Option<PathBuf>) -> anyhow::Result<PipelineConfig> {
    match cli_config {
        Some(path) => PipelineConfig::load(path),
        None => Ok(PipelineConfig::default()),
    }
}

fn apply_common(config: &mut PipelineConfig, common: &CommonOverrides) {
    if let Some(w) = common.window_length {
        config.window_length = w;
    }
    if let Some(s) = common.seed {
        config.seed = s;
    }
}

fn parse_fractions(spec: &str) -> anyhow::Result<(f64, f64, f64)> {
    let parts: Vec<f64> = spec
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()?;
    if parts.len() != 3 {
        anyhow::bail!("expected three comma-separated fractions, got {spec:?}");
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let mut config = load_config(&cli.config)?;
    match cli.command {
        Command::Synth {
            preset,
            seed,
            out_audio,
            out_labels,
        } => {
            commands::run_synth(&preset, seed, &out_audio, &out_labels)?;
        }
        Command::DetectFod {
            input,
            ma_window,
            max_gap,
            pad,
            out,
        } => {
            let fod = FodConfig {
                ma_window: ma_window.unwrap_or(config.fod.ma_window),
                max_gap: max_gap.unwrap_or(config.fod.max_gap),
                pad: pad.unwrap_or(config.fod.pad),
            };
            let boxes = commands::run_detect_fod(&input, &fod, &out)?;
            println!("{} events -> {}", boxes.len(), out.display());
        }
        Command::Transform {
            input,
            out_dir,
            common,
        } => {
            apply_common(&mut config, &common);
            let n = commands::run_transform(&input, config.window_length, &out_dir)?;
            println!("{n} windows -> {}", out_dir.display());
        }
        Command::Dataset {
            audio,
            labels,
            out_dir,
            split,
            images,
            common,
        } => {
            apply_common(&mut config, &common);
            let fractions = parse_fractions(&split)?;
            let (train, val, test) = commands::run_dataset(
                &audio,
                &labels,
                &out_dir,
                config.window_length,
                fractions,
                config.seed,
                images,
            )?;
            println!("split {train}/{val}/{test} -> {}", out_dir.display());
        }
        Command::Postprocess {
            audio,
            detections,
            conf,
            max_gap,
            pad,
            min_peaks,
            min_peak_magnitude,
            out,
            common,
        } => {
            apply_common(&mut config, &common);
            let pp = PostprocessConfig {
                confidence_floor: conf.unwrap_or(config.detection.confidence_floor),
                max_gap: max_gap.unwrap_or(config.fod.max_gap),
                pad: pad.unwrap_or(config.fod.pad),
                min_peaks: min_peaks.unwrap_or(config.detection.min_fod_peaks),
                min_peak_magnitude: min_peak_magnitude
                    .unwrap_or(config.detection.min_fod_magnitude),
            };
            let boxes =
                commands::run_postprocess(&audio, &detections, config.window_length, &pp, &out)?;
            println!("{} events -> {}", boxes.len(), out.display());
        }
        Command::Features {
            audio,
            boxes,
            out,
            truth,
            out_classes,
        } => {
            let n = commands::run_features(
                &audio,
                &boxes,
                &out,
                truth.as_deref(),
                out_classes.as_deref(),
            )?;
            println!("{n} feature rows -> {}", out.display());
        }
        Command::TrainForest {
            features,
            labels,
            trees,
            seed,
            context,
            out,
        } => {
            let model = commands::run_train_forest(
                &features,
                &labels,
                trees,
                seed.unwrap_or(config.seed),
                context.unwrap_or(config.classifier.context_size),
                &out,
            )?;
            println!(
                "{} trees over {} features -> {}",
                model.n_trees,
                model.feature_count,
                out.display()
            );
        }
        Command::Classify {
            audio,
            boxes,
            model,
            out,
            bands,
        } => {
            let labeled =
                commands::run_classify(&audio, &boxes, &model, &out, bands.as_deref())?;
            println!("{} events -> {}", labeled.len(), out.display());
        }
        Command::Evaluate {
            pred,
            truth,
            mode,
            partial,
            full,
            out,
        } => {
            let mode: EvaluateMode = mode.parse()?;
            commands::run_evaluate(
                &pred,
                &truth,
                mode,
                partial.unwrap_or(config.eval.partial_frac),
                full.unwrap_or(config.eval.full_frac),
                out.as_deref(),
            )?;
        }
        Command::Sweep {
            audio,
            detections,
            truth,
            conf,
            model,
            out_dir,
            common,
        } => {
            apply_common(&mut config, &common);
            if model.is_some() {
                config.classifier.model_path = model;
            }
            let grid = commands::parse_grid(&conf)?;
            let rows =
                pipeline::run_sweep(&config, &audio, &detections, &truth, &grid, &out_dir)?;
            println!("{} sweep rows -> {}", rows.len(), out_dir.display());
        }
        Command::Pipeline {
            audio,
            detections,
            truth,
            model,
            out_dir,
            common,
        } => {
            apply_common(&mut config, &common);
            if model.is_some() {
                config.classifier.model_path = model;
            }
            match pipeline::run_pipeline(
                &config,
                &audio,
                detections.as_deref(),
                truth.as_deref(),
                &out_dir,
            ) {
                Ok(artifacts) => {
                    println!("events -> {}", artifacts.events.display());
                    if let Some(c) = &artifacts.classified {
                        println!("classified -> {}", c.display());
                    }
                    if let Some(r) = &artifacts.reports {
                        println!("reports -> {}", r.display());
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(e.stage.exit_code());
                }
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
