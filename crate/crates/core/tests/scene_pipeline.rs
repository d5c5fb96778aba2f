//! Cross-module integration: synthetic scenes driven through detection,
//! post-processing and feature extraction.

use std::fmt::Write as _;

use clickdet_core::annotations::Annotation;
use clickdet_core::classifier;
use clickdet_core::detections::{self, PostprocessConfig};
use clickdet_core::evaluation;
use clickdet_core::events::{EventBox, EventLabel, Provenance};
use clickdet_core::fod::{self, FodConfig};
use clickdet_core::synth::{self, EventSpec, SceneSpec};

fn boxes_to_labels(boxes: &[EventBox], sample_rate: u32) -> Vec<Annotation> {
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

/// Boxes as the post-processor would emit them: annotation extents padded
/// by 96 samples, capped at the midpoint to each neighbor (a box hugging
/// the impulse exactly would raise its own gate threshold).
fn padded_boxes(truth: &[Annotation], sample_rate: u32, total_len: usize) -> Vec<EventBox> {
    let fs = sample_rate as f64;
    let pad = 96usize;
    let ends: Vec<(usize, usize)> = truth
        .iter()
        .map(|a| {
            (
                (a.start * fs).round() as usize,
                (a.end * fs).round() as usize,
            )
        })
        .collect();
    ends.iter()
        .enumerate()
        .map(|(i, &(start, end))| {
            let lo_limit = if i == 0 { 0 } else { (ends[i - 1].1 + start) / 2 };
            let hi_limit = if i + 1 == ends.len() {
                total_len
            } else {
                (end + ends[i + 1].0) / 2
            };
            EventBox::new(
                start.saturating_sub(pad).max(lo_limit),
                (end + pad).min(hi_limit),
                1.0,
                EventLabel::Event,
                Provenance::Annotation,
            )
            .unwrap()
        })
        .collect()
}

fn pair_burst(n_pairs: usize, spacing: f64) -> SceneSpec {
    let mut events = Vec::new();
    for k in 0..n_pairs {
        let click = EventSpec::click(0.05 + k as f64 * spacing, 0.9, 21_000.0);
        events.push(click);
        events.push(EventSpec::echo_of(&click, 0.0015, 0.5, 800.0));
    }
    SceneSpec {
        duration: 0.05 + n_pairs as f64 * spacing + 0.05,
        sample_rate: 192_000,
        events,
        noise_sigma: 0.002,
        seed: 1234,
    }
}

#[test]
fn detector_finds_every_pair_event() {
    let (audio, truth) = synth::synth_scene(&synth::preset_scene("click_echo_pairs").unwrap()).unwrap();
    let boxes = fod::detect(&audio, &FodConfig::default()).unwrap();
    let report = evaluation::match_point(&boxes_to_labels(&boxes, audio.sample_rate), &truth);
    assert_eq!(report.found_partial, truth.len());
    assert_eq!(report.fp, 0);
}

/// Ten click/echo pairs observed through merged external boxes come back
/// out as twenty sliced events.
#[test]
fn postprocess_recovers_twenty_events_from_pair_boxes() {
    let spec = pair_burst(10, 0.008);
    let (audio, truth) = synth::synth_scene(&spec).unwrap();
    assert_eq!(truth.len(), 20);

    // simulate the external detector: one box per pair spanning click and
    // echo, written per window in the normalized text format
    let window_length = 960usize;
    let fs = spec.sample_rate as f64;
    let mut file = String::new();
    for k in 0..10 {
        let onset = 0.05 + k as f64 * 0.008;
        let start = ((onset - 0.0005) * fs) as usize;
        let end = ((onset + 0.0015 + 0.0004 + 0.0005) * fs) as usize;
        let mut w = start / window_length;
        while w * window_length < end {
            let lo = start.max(w * window_length) as f64;
            let hi = (end.min((w + 1) * window_length)) as f64;
            if hi > lo {
                let x = ((lo + hi) / 2.0 - (w * window_length) as f64) / window_length as f64;
                let width = (hi - lo) / window_length as f64;
                let _ = writeln!(file, "{w} 0 {x:.6} 0.5 {width:.6} 1.0 0.8");
            }
            w += 1;
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let det_path = dir.path().join("detections.txt");
    std::fs::write(&det_path, file).unwrap();

    let windows = detections::read_detection_windows(&det_path, window_length, 0.3).unwrap();
    let boxes = detections::postprocess(&windows, &audio, &PostprocessConfig::default()).unwrap();
    assert_eq!(boxes.len(), 20, "one box per click and per echo");
    let report = evaluation::match_point(&boxes_to_labels(&boxes, audio.sample_rate), &truth);
    assert_eq!(report.found_partial, 20);
    assert_eq!(report.fp, 0);
    assert!(boxes.iter().all(|b| b.provenance == Provenance::Sliced));
    assert!(boxes.iter().all(|b| b.confidence == 0.8));
}

/// The phase cue survives the whole chain: ground-truth boxes over a
/// synthetic scene give opposite gradient directions for clicks and their
/// echoes.
#[test]
fn click_and_echo_directions_are_opposite() {
    let spec = pair_burst(5, 0.01);
    let (audio, truth) = synth::synth_scene(&spec).unwrap();
    let boxes = padded_boxes(&truth, audio.sample_rate, audio.len());
    let features = classifier::extract_feature_sequence(&boxes, &audio).unwrap();
    let bin_hz = 192_000.0 / 512.0;
    for (f, a) in features.iter().zip(&truth) {
        let expect = if a.label == "click" { 1.0 } else { -1.0 };
        assert_eq!(f.fod_direction, expect, "{} at {:.4}", a.label, a.start);
        assert!(f.number_fod > 0.0);
        if a.label == "click" {
            // at this SNR the peak frequency lands within one DFT bin
            assert!((f.strongest_frequency - 21_000.0).abs() <= bin_hz);
        }
    }
    // echoes are attenuated copies
    for pair in features.chunks(2) {
        assert!(pair[0].maximum_energy > pair[1].maximum_energy);
    }
}

/// Context windows assembled from a real scene keep the current event in
/// the last slot with its start re-based to zero.
#[test]
fn context_assembly_over_scene_features() {
    let spec = pair_burst(6, 0.009);
    let (audio, truth) = synth::synth_scene(&spec).unwrap();
    let boxes = padded_boxes(&truth, audio.sample_rate, audio.len());
    let features = classifier::extract_feature_sequence(&boxes, &audio).unwrap();
    let windows = classifier::assemble_context(&features, classifier::ContextLayout::default());
    assert_eq!(windows.len(), 12);
    for (i, w) in windows.iter().enumerate() {
        assert_eq!(w.vectors[w.current_slot].start, 0.0);
        let missing = 4usize.saturating_sub(i);
        let sentinel_count = w.presence.iter().filter(|&&p| !p).count();
        assert_eq!(sentinel_count, missing);
        assert_eq!(w.to_features().len(), 65);
    }
}
