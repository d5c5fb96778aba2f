//! Full pipeline orchestration and the confidence-threshold sweep.
//!
//! The pipeline wires detect/postprocess, classify and evaluate into one
//! run, with every inter-stage hand-off written to disk in the documented
//! formats. Each stage failure maps to its own exit code so batch drivers
//! can tell where a file fell over.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Result};

use clickdet_core::annotations::{self, Annotation};
use clickdet_core::audio;
use clickdet_core::detections::{self, PostprocessConfig};
use clickdet_core::evaluation;
use clickdet_core::fod::{self, FodConfig};

use crate::commands::{self, labels_from_boxes};
use crate::config::PipelineConfig;

/// Pipeline stages, each with a distinct process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Input,
    Detect,
    Postprocess,
    Classify,
    Evaluate,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Input => 3,
            Stage::Detect => 4,
            Stage::Postprocess => 5,
            Stage::Classify => 6,
            Stage::Evaluate => 7,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Input => "input",
            Stage::Detect => "detect",
            Stage::Postprocess => "postprocess",
            Stage::Classify => "classify",
            Stage::Evaluate => "evaluate",
        }
    }
}

/// A failure attributed to one pipeline stage.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage failed: {:#}", self.stage.name(), self.source)
    }
}

impl std::error::Error for StageError {}

fn stage<T>(stage: Stage, result: Result<T>) -> std::result::Result<T, StageError> {
    result.map_err(|source| StageError { stage, source })
}

/// Artifact paths produced by a pipeline run.
pub struct PipelineArtifacts {
    pub events: PathBuf,
    pub classified: Option<PathBuf>,
    pub reports: Option<PathBuf>,
    pub effective_config: PathBuf,
    pub log: PathBuf,
}

/// Run detect/postprocess, classify and evaluate over one audio file.
///
/// With a detections file the first stage is the external-box
/// post-processor; without one the standalone gradient detector supplies
/// the boxes. Classification needs `model_path` (from the config or flag);
/// evaluation runs when a truth label track is given.
pub fn run_pipeline(
    config: &PipelineConfig,
    audio_path: &Path,
    detections_path: Option<&Path>,
    truth_path: Option<&Path>,
    out_dir: &Path,
) -> std::result::Result<PipelineArtifacts, StageError> {
    stage(Stage::Config, config.validate())?;
    stage(
        Stage::Config,
        fs::create_dir_all(out_dir).map_err(Into::into),
    )?;
    let effective_config = out_dir.join("effective_config.toml");
    stage(
        Stage::Config,
        fs::write(&effective_config, config.to_toml()).map_err(Into::into),
    )?;

    let mut timings: Vec<(&str, f64)> = Vec::new();
    let t0 = Instant::now();
    let audio_buffer = stage(
        Stage::Input,
        audio::read_wav(audio_path).map_err(Into::into),
    )?;
    timings.push(("input", t0.elapsed().as_secs_f64()));

    // detect / postprocess
    let t0 = Instant::now();
    let events_path = out_dir.join("events.txt");
    let boxes = match detections_path {
        Some(det_path) => {
            let run = || -> Result<Vec<clickdet_core::EventBox>> {
                let windows = detections::read_detection_windows(
                    det_path,
                    config.window_length,
                    config.detection.confidence_floor,
                )?;
                let pp = PostprocessConfig {
                    confidence_floor: config.detection.confidence_floor,
                    max_gap: config.fod.max_gap,
                    pad: config.fod.pad,
                    min_peaks: config.detection.min_fod_peaks,
                    min_peak_magnitude: config.detection.min_fod_magnitude,
                };
                Ok(detections::postprocess(&windows, &audio_buffer, &pp)?)
            };
            stage(Stage::Postprocess, run())?
        }
        None => {
            let fod_config = FodConfig {
                ma_window: config.fod.ma_window,
                max_gap: config.fod.max_gap,
                pad: config.fod.pad,
            };
            stage(
                Stage::Detect,
                fod::detect(&audio_buffer, &fod_config).map_err(Into::into),
            )?
        }
    };
    stage(
        Stage::Postprocess,
        annotations::write_audacity_labels(
            &labels_from_boxes(&boxes, audio_buffer.sample_rate),
            &events_path,
        )
        .map_err(Into::into),
    )?;
    timings.push(("detect", t0.elapsed().as_secs_f64()));

    // classify
    let t0 = Instant::now();
    let classified_path = match &config.classifier.model_path {
        Some(model_path) => {
            let out = out_dir.join("classified.txt");
            stage(
                Stage::Classify,
                commands::run_classify(audio_path, &events_path, model_path, &out, None)
                    .map(|_| ()),
            )?;
            timings.push(("classify", t0.elapsed().as_secs_f64()));
            Some(out)
        }
        None => None,
    };

    // evaluate
    let t0 = Instant::now();
    let reports_path = match truth_path {
        Some(truth_path) => {
            let out = out_dir.join("reports.txt");
            let pred_path = classified_path.as_deref().unwrap_or(&events_path);
            let run = || -> Result<()> {
                let text = evaluate_to_text(
                    pred_path,
                    truth_path,
                    config,
                    audio_buffer.duration_secs(),
                    classified_path.is_some(),
                )?;
                fs::write(&out, text)?;
                Ok(())
            };
            stage(Stage::Evaluate, run())?;
            timings.push(("evaluate", t0.elapsed().as_secs_f64()));
            Some(out)
        }
        None => None,
    };

    // wall-time log lives outside the deterministic artifacts
    let log_path = out_dir.join("pipeline_log.txt");
    let mut log_text = String::new();
    for (name, seconds) in &timings {
        let _ = writeln!(log_text, "{name}: {seconds:.3}s");
    }
    let audio_seconds = audio_buffer.duration_secs();
    let total: f64 = timings.iter().map(|(_, s)| s).sum();
    let _ = writeln!(
        log_text,
        "total: {total:.3}s for {audio_seconds:.3}s of audio (real-time factor {:.2})",
        total / audio_seconds.max(1e-9)
    );
    stage(
        Stage::Config,
        fs::write(&log_path, log_text).map_err(Into::into),
    )?;

    Ok(PipelineArtifacts {
        events: events_path,
        classified: classified_path,
        reports: reports_path,
        effective_config,
        log: log_path,
    })
}

fn evaluate_to_text(
    pred_path: &Path,
    truth_path: &Path,
    config: &PipelineConfig,
    total_duration: f64,
    classified: bool,
) -> Result<String> {
    let mut pred = annotations::read_audacity_labels(pred_path)?;
    let mut truth = annotations::read_audacity_labels(truth_path)?;
    pred.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
    truth.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());

    let mut text = String::new();
    text.push_str("== point protocol ==\n");
    text.push_str(&evaluation::render_table(&evaluation::match_point(
        &pred, &truth,
    )));
    text.push_str("\n== overlap protocol ==\n");
    text.push_str(&evaluation::render_table(&evaluation::match_overlap(
        &pred,
        &truth,
        config.eval.partial_frac,
        config.eval.full_frac,
    )?));

    text.push_str("\n== rate correlation ==\n");
    let rate = |filter: Option<&str>| -> Result<f64> {
        Ok(evaluation::rate_correlation(
            &pred,
            &truth,
            filter,
            config.eval.bin_seconds,
            total_duration,
        )?
        .correlation)
    };
    text.push_str(&format!("event rate: {:.2}\n", rate(None)?));
    if classified {
        text.push_str(&format!("click rate: {:.2}\n", rate(Some("click"))?));
        text.push_str(&format!("echo rate:  {:.2}\n", rate(Some("echo"))?));
    }
    Ok(text)
}

/// One sweep row: the confidence percent, the overlap report and the rate
/// correlations (click/echo only when a model classified the boxes).
pub struct SweepRow {
    pub confidence: u32,
    pub detections: usize,
    pub report: evaluation::MatchReport,
    pub event_rate: f64,
    pub click_rate: Option<f64>,
    pub echo_rate: Option<f64>,
}

/// Re-run ingest/postprocess at every grid confidence and score against
/// the truth labels, mirroring the threshold-sweep experiment layout.
pub fn run_sweep(
    config: &PipelineConfig,
    audio_path: &Path,
    detections_path: &Path,
    truth_path: &Path,
    grid: &[u32],
    out_dir: &Path,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let audio_buffer = audio::read_wav(audio_path)?;
    let mut truth = annotations::read_audacity_labels(truth_path)?;
    truth.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
    let model = match &config.classifier.model_path {
        Some(path) => Some(clickdet_core::forest::load_model(path)?),
        None => None,
    };

    let mut rows = Vec::with_capacity(grid.len());
    for &confidence in grid {
        let floor = confidence as f64 / 100.0;
        let windows = detections::read_detection_windows(
            detections_path,
            config.window_length,
            floor,
        )?;
        let pp = PostprocessConfig {
            confidence_floor: floor,
            max_gap: config.fod.max_gap,
            pad: config.fod.pad,
            min_peaks: config.detection.min_fod_peaks,
            min_peak_magnitude: config.detection.min_fod_magnitude,
        };
        let boxes = detections::postprocess(&windows, &audio_buffer, &pp)?;
        let mut pred: Vec<Annotation> = labels_from_boxes(&boxes, audio_buffer.sample_rate);
        if let Some(model) = &model {
            let layout =
                clickdet_core::classifier::ContextLayout::for_size(model.context_size)?;
            let features =
                clickdet_core::classifier::extract_feature_sequence(&boxes, &audio_buffer)?;
            let context = clickdet_core::classifier::assemble_context(&features, layout);
            for (p, window) in pred.iter_mut().zip(&context) {
                let (class, _) = clickdet_core::forest::predict(model, window)?;
                p.label = class.as_str().to_string();
            }
        }
        let report = evaluation::match_overlap(
            &pred,
            &truth,
            config.eval.partial_frac,
            config.eval.full_frac,
        )?;
        let rate = |filter: Option<&str>| -> Result<f64> {
            Ok(evaluation::rate_correlation(
                &pred,
                &truth,
                filter,
                config.eval.bin_seconds,
                audio_buffer.duration_secs(),
            )?
            .correlation)
        };
        rows.push(SweepRow {
            confidence,
            detections: boxes.len(),
            report,
            event_rate: rate(None)?,
            click_rate: if model.is_some() {
                Some(rate(Some("click"))?)
            } else {
                None
            },
            echo_rate: if model.is_some() {
                Some(rate(Some("echo"))?)
            } else {
                None
            },
        });
    }

    // detections must be monotone non-increasing in the threshold
    for pair in rows.windows(2) {
        if pair[0].confidence < pair[1].confidence && pair[0].detections < pair[1].detections {
            return Err(anyhow!(
                "detection count increased from threshold {} to {} ({} -> {})",
                pair[0].confidence,
                pair[1].confidence,
                pair[0].detections,
                pair[1].detections
            ));
        }
    }

    let mut summary = String::from(
        "Confidence  Detection  TP Partial  TP Full  FP  Partial%  Full%  Missed%\n",
    );
    for row in &rows {
        let r = &row.report;
        let _ = writeln!(
            summary,
            "{:<11} {:<10} {:<11} {:<8} {:<3} {:<9.2} {:<6.2} {:<7.2}",
            row.confidence,
            r.detections,
            r.tp_partial,
            r.tp_full,
            r.fp,
            r.recall_partial,
            r.recall_full,
            r.missed_pct,
        );
        fs::write(
            out_dir.join(format!("overlap_conf{:02}.txt", row.confidence)),
            evaluation::render_table(r),
        )?;
    }
    fs::write(out_dir.join("sweep_overlap.txt"), summary)?;

    let rate_rows: Vec<(u32, f64, f64, f64)> = rows
        .iter()
        .map(|r| {
            (
                r.confidence,
                r.event_rate,
                r.click_rate.unwrap_or(f64::NAN),
                r.echo_rate.unwrap_or(f64::NAN),
            )
        })
        .collect();
    fs::write(
        out_dir.join("sweep_rates.txt"),
        evaluation::render_rate_table(&rate_rows),
    )?;
    Ok(rows)
}
