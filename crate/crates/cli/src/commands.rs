//! Implementations behind the CLI subcommands.
//!
//! Everything here works through files so any stage can be swapped for an
//! external tool that produces the same format: wave audio in, Audacity
//! label tracks and plain-text tables out, CSV for classifier features.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use clickdet_core::annotations::{self, Annotation};
use clickdet_core::audio;
use clickdet_core::classifier::{self, ContextFeatureVector, ContextLayout};
use clickdet_core::detections::{self, PostprocessConfig};
use clickdet_core::evaluation::{self, MatchReport};
use clickdet_core::events::{EventBox, EventLabel, Provenance};
use clickdet_core::fod::{self, FodConfig};
use clickdet_core::forest::{self, EventClass, ForestModel, TrainConfig};
use clickdet_core::synth;

/// Convert label-track annotations to event boxes. Label files carry no
/// detector confidence, so boxes default to 1.0.
pub fn boxes_from_labels(labels: &[Annotation], sample_rate: u32) -> Result<Vec<EventBox>> {
    let fs = sample_rate as f64;
    let mut boxes = Vec::with_capacity(labels.len());
    for a in labels {
        let start = (a.start * fs).round() as usize;
        let end = ((a.end * fs).round() as usize).max(start + 1);
        let label = match a.label.as_str() {
            "click" => EventLabel::Click,
            "echo" => EventLabel::Echo,
            "other" => EventLabel::Other,
            _ => EventLabel::Event,
        };
        boxes.push(EventBox::new(start, end, 1.0, label, Provenance::Annotation)?);
    }
    boxes.sort_by_key(|b| (b.start_sample, b.end_sample));
    Ok(boxes)
}

pub fn labels_from_boxes(boxes: &[EventBox], sample_rate: u32) -> Vec<Annotation> {
    boxes
        .iter()
        .map(|b| {
            Annotation::new(
                b.start_secs(sample_rate),
                b.end_secs(sample_rate),
                b.label.as_str(),
            )
        })
        .collect()
}

/// `synth`: render a preset scene to a wave file plus ground-truth labels.
pub fn run_synth(
    preset: &str,
    seed: Option<u64>,
    out_audio: &Path,
    out_labels: &Path,
) -> Result<()> {
    let mut spec = synth::preset_scene(preset)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let (audio_buffer, truth) = synth::synth_scene(&spec)?;
    audio::write_wav(out_audio, &audio_buffer)?;
    annotations::write_audacity_labels(&truth, out_labels)?;
    log::info!(
        "synthesized {preset}: {} samples, {} events",
        audio_buffer.len(),
        truth.len()
    );
    Ok(())
}

/// `detect-fod`: run the standalone detector and write event labels.
pub fn run_detect_fod(input: &Path, config: &FodConfig, out: &Path) -> Result<Vec<EventBox>> {
    let audio_buffer = audio::read_wav(input)?;
    let boxes = fod::detect(&audio_buffer, config)?;
    annotations::write_audacity_labels(
        &labels_from_boxes(&boxes, audio_buffer.sample_rate),
        out,
    )?;
    Ok(boxes)
}

/// `transform`: export one composite image per analysis window.
pub fn run_transform(input: &Path, window_length: usize, out_dir: &Path) -> Result<usize> {
    let audio_buffer = audio::read_wav(input)?;
    fs::create_dir_all(out_dir)?;
    let windows = annotations::window_audio(&audio_buffer, window_length)?;
    for w in &windows {
        let path = out_dir.join(format!("window_{:06}.png", w.index));
        annotations::export_scwtspec(&w.audio, &path)?;
    }
    Ok(windows.len())
}

/// `dataset`: window the audio, write per-window training label files and
/// seeded split lists, optionally exporting the composite images.
pub fn run_dataset(
    audio_path: &Path,
    labels_path: &Path,
    out_dir: &Path,
    window_length: usize,
    fractions: (f64, f64, f64),
    seed: u64,
    export_images: bool,
) -> Result<(usize, usize, usize)> {
    let audio_buffer = audio::read_wav(audio_path)?;
    let truth = annotations::read_audacity_labels(labels_path)?;
    let entries = annotations::annotations_to_dataset(
        &truth,
        audio_buffer.sample_rate,
        window_length,
        audio_buffer.len(),
    )?;

    let labels_dir = out_dir.join("labels");
    fs::create_dir_all(&labels_dir)?;
    for entry in &entries {
        annotations::write_label_file(entry, &labels_dir)?;
    }
    if export_images {
        let images_dir = out_dir.join("images");
        fs::create_dir_all(&images_dir)?;
        for w in annotations::window_audio(&audio_buffer, window_length)? {
            let path = images_dir.join(format!("{:06}.png", w.index));
            annotations::export_scwtspec(&w.audio, &path)?;
        }
    }

    let indices: Vec<usize> = entries.iter().map(|e| e.window_index).collect();
    let (train, val, test) = annotations::split_dataset(&indices, fractions, seed)?;
    for (name, split) in [("train", &train), ("val", &val), ("test", &test)] {
        let lines: String = split.iter().map(|i| format!("{i:06}\n")).collect();
        fs::write(out_dir.join(format!("{name}.txt")), lines)?;
    }
    Ok((train.len(), val.len(), test.len()))
}

/// `postprocess`: ingest external detections, merge, slice, write labels.
pub fn run_postprocess(
    audio_path: &Path,
    detections_path: &Path,
    window_length: usize,
    config: &PostprocessConfig,
    out: &Path,
) -> Result<Vec<EventBox>> {
    let audio_buffer = audio::read_wav(audio_path)?;
    let windows = detections::read_detection_windows(
        detections_path,
        window_length,
        config.confidence_floor,
    )?;
    let boxes = detections::postprocess(&windows, &audio_buffer, config)?;
    annotations::write_audacity_labels(
        &labels_from_boxes(&boxes, audio_buffer.sample_rate),
        out,
    )?;
    Ok(boxes)
}

const FEATURE_CSV_HEADER: &str = "start,end,confidence,length,number_fod,minimum_energy,\
maximum_energy,mean_energy,max_fod,fod_direction,strongest_frequency,interarrival";

pub fn write_features_csv(features: &[ContextFeatureVector], path: &Path) -> Result<()> {
    let mut out = String::from(FEATURE_CSV_HEADER);
    out.push('\n');
    for f in features {
        let row: Vec<String> = f.to_array().iter().map(f64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_features_csv(path: &Path) -> Result<Vec<ContextFeatureVector>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == FEATURE_CSV_HEADER => {}
        _ => bail!("{}: missing or wrong feature header", path.display()),
    }
    let mut features = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}:{}: bad feature row", path.display(), idx + 1))?;
        if fields.len() != classifier::FEATURES_PER_EVENT {
            bail!(
                "{}:{}: expected {} columns, got {}",
                path.display(),
                idx + 1,
                classifier::FEATURES_PER_EVENT,
                fields.len()
            );
        }
        features.push(ContextFeatureVector {
            start: fields[0],
            end: fields[1],
            confidence: fields[2],
            length: fields[3],
            number_fod: fields[4],
            minimum_energy: fields[5],
            maximum_energy: fields[6],
            mean_energy: fields[7],
            max_fod: fields[8],
            fod_direction: fields[9],
            strongest_frequency: fields[10],
            interarrival: fields[11],
        });
    }
    Ok(features)
}

pub fn write_class_csv(classes: &[EventClass], path: &Path) -> Result<()> {
    let mut out = String::from("label\n");
    for c in classes {
        out.push_str(c.as_str());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_class_csv(path: &Path) -> Result<Vec<EventClass>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "label")) => {}
        _ => bail!("{}: expected 'label' header", path.display()),
    }
    let mut classes = Vec::new();
    for (idx, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match EventClass::parse(trimmed) {
            Some(c) => classes.push(c),
            None => bail!(
                "{}:{}: unknown class {trimmed:?} (expected click/echo/other)",
                path.display(),
                idx + 1
            ),
        }
    }
    Ok(classes)
}

/// Assign a class to each box by midpoint containment in the truth labels;
/// unmatched boxes become `other`.
pub fn classes_from_truth(boxes: &[EventBox], truth: &[Annotation], sample_rate: u32) -> Vec<EventClass> {
    let fs = sample_rate as f64;
    boxes
        .iter()
        .map(|b| {
            let mid = (b.start_sample + b.end_sample) as f64 / 2.0 / fs;
            truth
                .iter()
                .find(|a| mid >= a.start && mid <= a.end)
                .and_then(|a| EventClass::parse(&a.label))
                .unwrap_or(EventClass::Other)
        })
        .collect()
}

/// `features`: extract the per-event feature rows for a box file, and
/// optionally derive training classes from a truth label track.
pub fn run_features(
    audio_path: &Path,
    boxes_path: &Path,
    out_csv: &Path,
    truth_path: Option<&Path>,
    out_classes: Option<&Path>,
) -> Result<usize> {
    if truth_path.is_some() != out_classes.is_some() {
        bail!("--truth and --out-classes must be given together");
    }
    let audio_buffer = audio::read_wav(audio_path)?;
    let boxes = boxes_from_labels(
        &annotations::read_audacity_labels(boxes_path)?,
        audio_buffer.sample_rate,
    )?;
    let features = classifier::extract_feature_sequence(&boxes, &audio_buffer)?;
    write_features_csv(&features, out_csv)?;
    if let (Some(truth_path), Some(out_classes)) = (truth_path, out_classes) {
        let truth = annotations::read_audacity_labels(truth_path)?;
        let classes = classes_from_truth(&boxes, &truth, audio_buffer.sample_rate);
        write_class_csv(&classes, out_classes)?;
    }
    Ok(features.len())
}

/// `train-forest`: fit the forest on feature/class CSV rows.
pub fn run_train_forest(
    features_csv: &Path,
    classes_csv: &Path,
    n_trees: usize,
    seed: u64,
    context_size: usize,
    out: &Path,
) -> Result<ForestModel> {
    let features = read_features_csv(features_csv)?;
    let classes = read_class_csv(classes_csv)?;
    if features.len() != classes.len() {
        bail!(
            "{} feature rows but {} class rows",
            features.len(),
            classes.len()
        );
    }
    let layout = ContextLayout::for_size(context_size)?;
    let windows = classifier::assemble_context(&features, layout);
    let dataset: Vec<_> = windows.into_iter().zip(classes).collect();
    let model = forest::train_forest(
        &dataset,
        &TrainConfig {
            n_trees,
            seed,
            layout,
        },
    )?;
    forest::save_model(&model, out)?;
    Ok(model)
}

/// `classify`: label each box click/echo/other with a trained forest.
/// Optionally writes LF/HF/US band labels for the classified clicks.
pub fn run_classify(
    audio_path: &Path,
    boxes_path: &Path,
    model_path: &Path,
    out: &Path,
    bands_out: Option<&Path>,
) -> Result<Vec<Annotation>> {
    let audio_buffer = audio::read_wav(audio_path)?;
    let model = forest::load_model(model_path)?;
    let layout = ContextLayout::for_size(model.context_size)?;
    let boxes = boxes_from_labels(
        &annotations::read_audacity_labels(boxes_path)?,
        audio_buffer.sample_rate,
    )?;
    let features = classifier::extract_feature_sequence(&boxes, &audio_buffer)?;
    let windows = classifier::assemble_context(&features, layout);

    let mut labeled = Vec::with_capacity(boxes.len());
    let mut bands = Vec::new();
    for ((b, window), feature) in boxes.iter().zip(&windows).zip(&features) {
        let (class, _score) = forest::predict(&model, window)?;
        let fs = audio_buffer.sample_rate;
        labeled.push(Annotation::new(
            b.start_secs(fs),
            b.end_secs(fs),
            class.as_str(),
        ));
        if class == EventClass::Click {
            let band = forest::classify_frequency_band(feature.strongest_frequency);
            bands.push(Annotation::new(
                b.start_secs(fs),
                b.end_secs(fs),
                band.as_str(),
            ));
        }
    }
    annotations::write_audacity_labels(&labeled, out)?;
    if let Some(bands_out) = bands_out {
        annotations::write_audacity_labels(&bands, bands_out)?;
    }
    Ok(labeled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluateMode {
    Point,
    Overlap,
}

impl std::str::FromStr for EvaluateMode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(EvaluateMode::Point),
            "overlap" => Ok(EvaluateMode::Overlap),
            other => bail!("unknown mode {other:?} (expected point or overlap)"),
        }
    }
}

/// `evaluate`: score a prediction label track against a truth track and
/// render the report table.
pub fn run_evaluate(
    pred_path: &Path,
    truth_path: &Path,
    mode: EvaluateMode,
    partial_frac: f64,
    full_frac: f64,
    out: Option<&Path>,
) -> Result<MatchReport> {
    let mut pred = annotations::read_audacity_labels(pred_path)?;
    let mut truth = annotations::read_audacity_labels(truth_path)?;
    pred.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
    truth.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
    let report = match mode {
        EvaluateMode::Point => evaluation::match_point(&pred, &truth),
        EvaluateMode::Overlap => {
            evaluation::match_overlap(&pred, &truth, partial_frac, full_frac)?
        }
    };
    let table = evaluation::render_table(&report);
    match out {
        Some(path) => fs::write(path, &table)?,
        None => print!("{table}"),
    }
    Ok(report)
}

/// Parse a sweep grid: either `start..end:step` (inclusive) or a comma
/// list, in integer confidence percent.
pub fn parse_grid(spec: &str) -> Result<Vec<u32>> {
    let grid: Vec<u32> = if let Some((range, step)) = spec.split_once(':') {
        let (start, end) = range
            .split_once("..")
            .with_context(|| format!("bad grid {spec:?} (expected start..end:step)"))?;
        let (start, end, step): (u32, u32, u32) =
            (start.trim().parse()?, end.trim().parse()?, step.trim().parse()?);
        if step == 0 || end < start {
            bail!("bad grid {spec:?}");
        }
        (start..=end).step_by(step as usize).collect()
    } else {
        spec.split(',')
            .map(|v| v.trim().parse::<u32>().map_err(Into::into))
            .collect::<Result<_>>()?
    };
    if grid.is_empty() {
        bail!("empty sweep grid");
    }
    if grid.iter().any(|&c| c == 0 || c > 100) {
        bail!("grid values must be confidence percents in 1..=100");
    }
    Ok(grid)
}
