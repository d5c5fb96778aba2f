//! Ingest and refinement of external detector bounding boxes.
//!
//! The neural detector stays behind a file boundary: one record per line,
//! `window_index class_id x y w h confidence`, with x/y/w/h normalized to
//! the window. Ingested boxes are merged along the time axis, merged boxes
//! are sliced back apart using gradient peak groups, and boxes whose span
//! contains no gated peak are dropped as false positives.

use std::fs;
use std::path::Path;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::events::{EventBox, EventLabel, Provenance};
use crate::fod;

/// Boxes belonging to one fixed analysis window, in absolute samples.
#[derive(Debug, Clone)]
pub struct DetectionWindow {
    pub window_index: usize,
    pub window_start_sample: usize,
    pub boxes: Vec<EventBox>,
}

/// Post-processing knobs: the ingest confidence floor, the grouping
/// parameters used when slicing merged boxes, and the gated-peak filter
/// that removes false positives (a sliced group survives only with at
/// least `min_peaks` peaks and a strongest peak of `min_peak_magnitude`).
#[derive(Debug, Clone, Copy)]
pub struct PostprocessConfig {
    pub confidence_floor: f64,
    pub max_gap: usize,
    pub pad: usize,
    pub min_peaks: usize,
    pub min_peak_magnitude: f64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            confidence_floor: 0.30,
            max_gap: 192,
            pad: 96,
            min_peaks: 1,
            min_peak_magnitude: 0.0,
        }
    }
}

fn class_label(class_id: u32) -> EventLabel {
    match class_id {
        1 => EventLabel::Click,
        2 => EventLabel::Echo,
        3 => EventLabel::Other,
        _ => EventLabel::Event,
    }
}

/// Parse a detections file into per-window boxes, dropping records below
/// `confidence_floor`. Normalized coordinates become absolute samples:
/// `start = window_start + (x - w/2) * window_length`.
pub fn read_detection_windows(
    path: &Path,
    window_length: usize,
    confidence_floor: f64,
) -> Result<Vec<DetectionWindow>> {
    if !(0.0..=1.0).contains(&confidence_floor) {
        return Err(Error::Config(format!(
            "confidence_floor {confidence_floor} outside [0, 1]"
        )));
    }
    if window_length == 0 {
        return Err(Error::Config("window_length must be positive".into()));
    }
    let text = fs::read_to_string(path)?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut windows: Vec<DetectionWindow> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(parse_err(
                line_no,
                format!("expected 7 fields, got {}", fields.len()),
            ));
        }
        let window_index: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad window index {:?}", fields[0])))?;
        let class_id: u32 = fields[1]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad class id {:?}", fields[1])))?;
        let mut nums = [0.0f64; 5];
        for (slot, field) in nums.iter_mut().zip(&fields[2..7]) {
            *slot = field
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad number {field:?}")))?;
        }
        let [x, y, w, h, confidence] = nums;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(parse_err(line_no, format!("confidence {confidence} outside [0, 1]")));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(parse_err(line_no, format!("non-positive box extent {w}x{h}")));
        }
        // tolerate the rounding of boundary boxes written with finite
        // decimals, then clamp back into the window
        const EDGE_EPS: f64 = 1e-6;
        for (name, v) in [("x - w/2", x - w / 2.0), ("x + w/2", x + w / 2.0), ("y", y)] {
            if !(-EDGE_EPS..=1.0 + EDGE_EPS).contains(&v) {
                return Err(parse_err(line_no, format!("{name} = {v} outside [0, 1]")));
            }
        }
        if confidence < confidence_floor {
            continue;
        }
        let window_start = window_index * window_length;
        let lo = (x - w / 2.0).clamp(0.0, 1.0);
        let hi = (x + w / 2.0).clamp(0.0, 1.0);
        let start_f = window_start as f64 + lo * window_length as f64;
        let end_f = window_start as f64 + hi * window_length as f64;
        let start = start_f.round() as usize;
        let end = (end_f.round() as usize).max(start + 1);
        let event = EventBox::new(start, end, confidence, class_label(class_id), Provenance::External)?;
        match windows.last_mut() {
            Some(last) if last.window_index == window_index => last.boxes.push(event),
            _ => windows.push(DetectionWindow {
                window_index,
                window_start_sample: window_start,
                boxes: vec![event],
            }),
        }
    }
    windows.sort_by_key(|w| w.window_index);
    Ok(windows)
}

/// Flat ingest: every surviving box across all windows, sorted by start.
pub fn ingest_detections(
    path: &Path,
    window_length: usize,
    confidence_floor: f64,
) -> Result<Vec<EventBox>> {
    let mut boxes: Vec<EventBox> = read_detection_windows(path, window_length, confidence_floor)?
        .into_iter()
        .flat_map(|w| w.boxes)
        .collect();
    boxes.sort_by_key(|b| (b.start_sample, b.end_sample));
    Ok(boxes)
}

/// Union all overlapping or touching intervals. Merged confidence is the
/// maximum of the members; a label survives only if every member agrees.
pub fn merge_boxes(boxes: &[EventBox]) -> Vec<EventBox> {
    let mut sorted = boxes.to_vec();
    sorted.sort_by_key(|b| (b.start_sample, b.end_sample));
    let mut merged: Vec<EventBox> = Vec::new();
    for b in sorted {
        match merged.last_mut() {
            Some(last) if b.start_sample <= last.end_sample => {
                last.end_sample = last.end_sample.max(b.end_sample);
                last.confidence = last.confidence.max(b.confidence);
                if last.label != b.label {
                    last.label = EventLabel::Event;
                }
            }
            _ => merged.push(b),
        }
    }
    merged
}

/// Slice one merged box via gradient peaks restricted to its span. The
/// moving-average window equals the box length. Groups are padded inside
/// the box; a box with zero gated peaks dissolves, and the configured
/// peak-count and peak-magnitude floors drop weak groups the same way.
pub fn slice_merged_box(
    parent: &EventBox,
    audio: &AudioBuffer,
    config: &PostprocessConfig,
) -> Result<Vec<EventBox>> {
    if parent.end_sample > audio.len() {
        return Err(Error::InvalidInput(format!(
            "box [{}, {}) outside audio of {} samples",
            parent.start_sample,
            parent.end_sample,
            audio.len()
        )));
    }
    if parent.len_samples() < 2 {
        return Ok(Vec::new()); // too short to carry a gradient peak
    }
    let span = audio.slice(parent.start_sample, parent.end_sample)?;
    let peaks = fod::extract_peaks(&span, span.len())?;
    if peaks.is_empty() {
        return Ok(Vec::new());
    }
    let groups = fod::group_peaks(&peaks, config.max_gap)?;
    let padded = fod::pad_events(&groups, config.pad, span.len())?;
    padded
        .iter()
        .filter(|e| {
            e.peaks.len() >= config.min_peaks
                && e.strongest_peak.magnitude >= config.min_peak_magnitude
        })
        .map(|e| {
            EventBox::new(
                parent.start_sample + e.start_sample,
                parent.start_sample + e.end_sample,
                parent.confidence,
                parent.label,
                Provenance::Sliced,
            )
        })
        .collect()
}

/// Full post-processor: flatten the window boxes, merge overlaps, slice
/// each merged box, and return the sorted, non-overlapping result.
pub fn postprocess(
    windows: &[DetectionWindow],
    audio: &AudioBuffer,
    config: &PostprocessConfig,
) -> Result<Vec<EventBox>> {
    if windows.windows(2).any(|w| w[0].window_index > w[1].window_index) {
        return Err(Error::InvalidInput("windows must be sorted by index".into()));
    }
    let flat: Vec<EventBox> = windows.iter().flat_map(|w| w.boxes.clone()).collect();
    let merged = merge_boxes(&flat);
    let mut out = Vec::new();
    for parent in &merged {
        out.extend(slice_merged_box(parent, audio, config)?);
    }
    out.sort_by_key(|b| (b.start_sample, b.end_sample));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use std::io::Write;

    fn event(start: usize, end: usize, confidence: f64) -> EventBox {
        EventBox::new(start, end, confidence, EventLabel::Event, Provenance::External).unwrap()
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f.flush().unwrap();
        f
    }

    #[test]
    fn ingest_converts_normalized_coordinates() {
        let f = write_lines(&["0 0 0.5 0.5 0.1 1.0 0.9"]);
        let boxes = ingest_detections(f.path(), 960, 0.0).unwrap();
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].start_sample, 432);
        assert_eq!(boxes[0].end_sample, 528);
        assert_eq!(boxes[0].provenance, Provenance::External);
    }

    #[test]
    fn ingest_applies_confidence_floor() {
        let f = write_lines(&[
            "0 0 0.5 0.5 0.1 1.0 0.10",
            "1 0 0.5 0.5 0.1 1.0 0.45",
        ]);
        let boxes = ingest_detections(f.path(), 960, 0.30).unwrap();
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].confidence, 0.45);
    }

    #[test]
    fn ingest_empty_file() {
        let f = write_lines(&[]);
        assert!(ingest_detections(f.path(), 960, 0.3).unwrap().is_empty());
    }

    #[test]
    fn ingest_reports_line_numbers() {
        let f = write_lines(&["0 0 0.5 0.5 0.1 1.0 0.9", "0 0 oops 0.5 0.1 1.0 0.9"]);
        match ingest_detections(f.path(), 960, 0.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_out_of_range_box() {
        let f = write_lines(&["0 0 0.95 0.5 0.2 1.0 0.9"]); // x + w/2 > 1
        assert!(matches!(
            ingest_detections(f.path(), 960, 0.0),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn merge_unions_overlapping() {
        let merged = merge_boxes(&[event(0, 10, 0.4), event(5, 15, 0.8)]);
        assert_eq!(merged.len(), 1);
        assert_eq!((merged[0].start_sample, merged[0].end_sample), (0, 15));
        assert_eq!(merged[0].confidence, 0.8);
    }

    #[test]
    fn merge_keeps_disjoint() {
        let boxes = [event(0, 10, 0.5), event(20, 30, 0.5)];
        assert_eq!(merge_boxes(&boxes), boxes.to_vec());
    }

    #[test]
    fn merge_joins_touching() {
        let merged = merge_boxes(&[event(0, 10, 0.5), event(10, 20, 0.5)]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].end_sample, 20);
    }

    /// Union-find oracle for interval merging.
    fn merge_oracle(boxes: &[EventBox]) -> Vec<(usize, usize, f64)> {
        let n = boxes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let root = find(parent, parent[i]);
                parent[i] = root;
            }
            parent[i]
        }
        for i in 0..n {
            for j in 0..i {
                let touch = boxes[i].start_sample <= boxes[j].end_sample
                    && boxes[j].start_sample <= boxes[i].end_sample;
                if touch {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, (usize, usize, f64)> =
            std::collections::BTreeMap::new();
        for i in 0..n {
            let root = find(&mut parent, i);
            let entry = groups.entry(root).or_insert((usize::MAX, 0, 0.0));
            entry.0 = entry.0.min(boxes[i].start_sample);
            entry.1 = entry.1.max(boxes[i].end_sample);
            entry.2 = entry.2.max(boxes[i].confidence);
        }
        let mut out: Vec<(usize, usize, f64)> = groups.into_values().collect();
        out.sort_by_key(|g| g.0);
        out
    }

    #[test]
    fn merge_matches_union_find_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        for _ in 0..100 {
            let n = rng.random_range(0..30);
            let boxes: Vec<EventBox> = (0..n)
                .map(|_| {
                    let start = rng.random_range(0..2000);
                    let len = rng.random_range(1..150);
                    event(start, start + len, rng.random_range(0.0..1.0))
                })
                .collect();
            let merged = merge_boxes(&boxes);
            let oracle = merge_oracle(&boxes);
            assert_eq!(merged.len(), oracle.len());
            for (m, o) in merged.iter().zip(&oracle) {
                assert_eq!((m.start_sample, m.end_sample), (o.0, o.1));
                assert_eq!(m.confidence, o.2);
            }
            // idempotence and non-overlap
            assert_eq!(merge_boxes(&merged), merged);
            for w in merged.windows(2) {
                assert!(w[0].end_sample < w[1].start_sample);
            }
            // union of intervals preserves covered duration
            let mut covered = vec![false; 2200];
            for b in &boxes {
                for c in covered.iter_mut().take(b.end_sample).skip(b.start_sample) {
                    *c = true;
                }
            }
            let expect: usize = covered.iter().filter(|&&c| c).count();
            let got: usize = merged.iter().map(EventBox::len_samples).sum();
            assert_eq!(got, expect);
        }
    }

    /// Build a click+echo pair scene: click at 4000, phase-inverted echo
    /// 1.5 ms later at half amplitude.
    fn pair_scene() -> AudioBuffer {
        let fs = 192_000u32;
        let mut samples = vec![0.0; 10_000];
        let click_onset = 4000usize;
        let echo_onset = click_onset + 288; // 1.5 ms
        for i in 0..77 {
            let t = i as f64 / fs as f64;
            let body = (-9000.0 * t).exp() * (2.0 * std::f64::consts::PI * 21_000.0 * t).sin();
            samples[click_onset + i] += 0.9 * body;
            samples[echo_onset + i] -= 0.45 * body;
        }
        AudioBuffer::new(samples, fs).unwrap()
    }

    #[test]
    fn slicing_separates_click_and_echo() {
        let audio = pair_scene();
        let parent = event(3800, 4600, 0.7);
        let sliced = slice_merged_box(&parent, &audio, &PostprocessConfig::default()).unwrap();
        assert_eq!(sliced.len(), 2);
        assert!(sliced[0].start_sample <= 4000 && 4000 < sliced[0].end_sample);
        assert!(sliced[1].start_sample <= 4288 && 4288 < sliced[1].end_sample);
        for b in &sliced {
            assert_eq!(b.provenance, Provenance::Sliced);
            assert_eq!(b.confidence, 0.7);
            assert!(b.start_sample >= parent.start_sample);
            assert!(b.end_sample <= parent.end_sample);
        }
    }

    #[test]
    fn slicing_drops_silent_box() {
        let audio = AudioBuffer::new(vec![0.0; 5000], 192_000).unwrap();
        let sliced =
            slice_merged_box(&event(1000, 2000, 0.9), &audio, &PostprocessConfig::default())
                .unwrap();
        assert!(sliced.is_empty());
    }

    #[test]
    fn slicing_rejects_box_outside_audio() {
        let audio = AudioBuffer::new(vec![0.0; 100], 192_000).unwrap();
        assert!(
            slice_merged_box(&event(50, 200, 0.9), &audio, &PostprocessConfig::default()).is_err()
        );
    }

    #[test]
    fn postprocess_collapses_split_event_to_one_box() {
        // one true click covered by three overlapping raw boxes
        let fs = 192_000u32;
        let mut samples = vec![0.0; 3000];
        for i in 0..77 {
            let t = i as f64 / fs as f64;
            samples[960 + i] =
                0.9 * (-9000.0 * t).exp() * (2.0 * std::f64::consts::PI * 21_000.0 * t).sin();
        }
        let audio = AudioBuffer::new(samples, fs).unwrap();
        let windows = vec![
            DetectionWindow {
                window_index: 0,
                window_start_sample: 0,
                boxes: vec![event(850, 1000, 0.5), event(900, 1030, 0.6)],
            },
            DetectionWindow {
                window_index: 1,
                window_start_sample: 960,
                boxes: vec![event(960, 1100, 0.4)],
            },
        ];
        let out = postprocess(&windows, &audio, &PostprocessConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].start_sample <= 960 && 960 < out[0].end_sample);
        assert_eq!(out[0].confidence, 0.6);
    }

    #[test]
    fn postprocess_empty_input() {
        let audio = AudioBuffer::new(vec![0.0; 100], 192_000).unwrap();
        let out = postprocess(&[], &audio, &PostprocessConfig::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn postprocess_output_never_leaves_parent_boxes() {
        let audio = pair_scene();
        let windows = vec![DetectionWindow {
            window_index: 0,
            window_start_sample: 0,
            boxes: vec![event(3800, 4200, 0.5), event(4100, 4600, 0.8)],
        }];
        let out = postprocess(&windows, &audio, &PostprocessConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        for w in out.windows(2) {
            assert!(w[0].end_sample <= w[1].start_sample);
        }
        for b in &out {
            assert!(b.start_sample >= 3800 && b.end_sample <= 4600);
        }
    }

    #[test]
    fn peak_filters_drop_weak_groups() {
        let audio = pair_scene();
        let parent = event(3800, 4600, 0.7);
        let base = PostprocessConfig::default();
        assert_eq!(slice_merged_box(&parent, &audio, &base).unwrap().len(), 2);
        // the echo group has the weaker strongest peak; a magnitude floor
        // between the two keeps only the click
        let sliced = slice_merged_box(&parent, &audio, &base).unwrap();
        assert_eq!(sliced.len(), 2);
        let strict = PostprocessConfig {
            min_peak_magnitude: 0.4,
            ..base
        };
        let filtered = slice_merged_box(&parent, &audio, &strict).unwrap();
        assert_eq!(filtered.len(), 1);
        assert!(filtered[0].start_sample <= 4000 && 4000 < filtered[0].end_sample);
        // an absurd peak-count floor removes everything
        let impossible = PostprocessConfig {
            min_peaks: 10_000,
            ..base
        };
        assert!(slice_merged_box(&parent, &audio, &impossible)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn raising_floor_never_adds_boxes() {
        let f = write_lines(&[
            "0 0 0.3 0.5 0.1 1.0 0.20",
            "0 0 0.6 0.5 0.1 1.0 0.50",
            "1 0 0.4 0.5 0.1 1.0 0.80",
        ]);
        let mut previous = usize::MAX;
        for floor in [0.0, 0.25, 0.45, 0.7, 0.95] {
            let count = ingest_detections(f.path(), 960, floor).unwrap().len();
            assert!(count <= previous);
            previous = count;
        }
    }
}
