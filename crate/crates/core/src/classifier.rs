//! Per-event feature vectors and context windows for click/echo/other
//! differentiation.
//!
//! Each event yields twelve features (times, confidence, gated-peak
//! statistics, energy extremes, peak frequency, interarrival gap). Events
//! are then stacked with their neighbors into fixed-size context windows:
//! the default layout takes the four previous events plus the current one,
//! with alternative three- and nine-event layouts for ablation runs.

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::events::EventBox;
use crate::fod;
use crate::signal;

/// Number of per-event features.
pub const FEATURES_PER_EVENT: usize = 12;

/// DFT length used for the strongest-frequency feature.
pub const PEAK_FREQ_DFT_LEN: usize = 512;

/// Sentinel written into `interarrival` when there is no following event.
pub const NO_NEXT_EVENT: f64 = -1.0;

/// The per-event input vector of the forest classifier.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContextFeatureVector {
    /// Event start in seconds (re-based per context window).
    pub start: f64,
    /// Event end in seconds (re-based per context window).
    pub end: f64,
    /// Detector confidence in `[0, 1]`.
    pub confidence: f64,
    /// Duration in seconds.
    pub length: f64,
    /// Gated gradient peaks inside the box.
    pub number_fod: f64,
    /// Smallest raw amplitude in the box.
    pub minimum_energy: f64,
    /// Largest raw amplitude in the box.
    pub maximum_energy: f64,
    /// Mean absolute amplitude in the box.
    pub mean_energy: f64,
    /// Magnitude of the strongest gated peak (0 when none).
    pub max_fod: f64,
    /// Sign of the strongest gated peak: +1 or -1 (+1 when none).
    pub fod_direction: f64,
    /// Frequency of the largest DFT magnitude bin, in Hz.
    pub strongest_frequency: f64,
    /// Gap to the next box in seconds, or [`NO_NEXT_EVENT`].
    pub interarrival: f64,
}

impl ContextFeatureVector {
    pub fn to_array(self) -> [f64; FEATURES_PER_EVENT] {
        [
            self.start,
            self.end,
            self.confidence,
            self.length,
            self.number_fod,
            self.minimum_energy,
            self.maximum_energy,
            self.mean_energy,
            self.max_fod,
            self.fod_direction,
            self.strongest_frequency,
            self.interarrival,
        ]
    }
}

/// How many neighbors a context window reaches into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextLayout {
    pub past: usize,
    pub future: usize,
}

impl ContextLayout {
    /// Layout for a supported context size: 3 is one past plus one future,
    /// 5 is four past, 9 is four past plus four future.
    pub fn for_size(context_size: usize) -> Result<Self> {
        match context_size {
            3 => Ok(ContextLayout { past: 1, future: 1 }),
            5 => Ok(ContextLayout { past: 4, future: 0 }),
            9 => Ok(ContextLayout { past: 4, future: 4 }),
            other => Err(Error::Config(format!(
                "unsupported context size {other} (expected 3, 5 or 9)"
            ))),
        }
    }

    pub fn slots(&self) -> usize {
        self.past + 1 + self.future
    }

    /// Forest input width: stacked features plus one presence flag per slot.
    pub fn feature_count(&self) -> usize {
        self.slots() * FEATURES_PER_EVENT + self.slots()
    }
}

impl Default for ContextLayout {
    fn default() -> Self {
        ContextLayout { past: 4, future: 0 }
    }
}

/// A stack of neighboring event vectors around one current event. Missing
/// neighbors are zero vectors with their presence flag cleared; the current
/// slot is always real.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindow {
    pub vectors: Vec<ContextFeatureVector>,
    pub presence: Vec<bool>,
    /// Index of the current event's slot (equals the layout's `past`).
    pub current_slot: usize,
}

impl ContextWindow {
    /// Flatten into the forest input: all slot features, then the presence
    /// flags.
    pub fn to_features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.vectors.len() * FEATURES_PER_EVENT + self.presence.len());
        for v in &self.vectors {
            out.extend_from_slice(&v.to_array());
        }
        out.extend(self.presence.iter().map(|&p| if p { 1.0 } else { 0.0 }));
        out
    }
}

/// Extract the twelve per-event features for one box. Gated peaks are
/// computed with the moving-average window set to the box length, matching
/// the slicing stage.
pub fn extract_features(
    event: &EventBox,
    next_event: Option<&EventBox>,
    audio: &AudioBuffer,
) -> Result<ContextFeatureVector> {
    if event.end_sample > audio.len() {
        return Err(Error::InvalidInput(format!(
            "box [{}, {}) outside audio of {} samples",
            event.start_sample,
            event.end_sample,
            audio.len()
        )));
    }
    let fs = audio.sample_rate;
    let span = &audio.samples[event.start_sample..event.end_sample];

    let (number_fod, max_fod, fod_direction) = if span.len() >= 2 {
        let sub = audio.slice(event.start_sample, event.end_sample)?;
        let peaks = fod::extract_peaks(&sub, sub.len())?;
        match peaks
            .iter()
            .max_by(|a, b| {
                a.magnitude
                    .partial_cmp(&b.magnitude)
                    .unwrap()
                    .then(b.sample_index.cmp(&a.sample_index))
            }) {
            Some(strongest) => (
                peaks.len() as f64,
                strongest.magnitude,
                strongest.gradient_value.signum(),
            ),
            None => (0.0, 0.0, 1.0),
        }
    } else {
        (0.0, 0.0, 1.0)
    };

    let minimum_energy = span.iter().cloned().fold(f64::INFINITY, f64::min);
    let maximum_energy = span.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean_energy = span.iter().map(|s| s.abs()).sum::<f64>() / span.len() as f64;

    let magnitudes = signal::dft_magnitudes(span, PEAK_FREQ_DFT_LEN);
    let peak_bin = magnitudes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
        .map(|(bin, _)| bin)
        .unwrap_or(0);
    let strongest_frequency = peak_bin as f64 * fs as f64 / PEAK_FREQ_DFT_LEN as f64;

    let interarrival = match next_event {
        Some(next) => next.start_secs(fs) - event.end_secs(fs),
        None => NO_NEXT_EVENT,
    };

    Ok(ContextFeatureVector {
        start: event.start_secs(fs),
        end: event.end_secs(fs),
        confidence: event.confidence,
        length: event.len_samples() as f64 / fs as f64,
        number_fod,
        minimum_energy,
        maximum_energy,
        mean_energy,
        max_fod,
        fod_direction,
        strongest_frequency,
        interarrival,
    })
}

/// Feature vectors for a whole time-sorted box sequence; each event's
/// interarrival refers to its successor.
pub fn extract_feature_sequence(
    boxes: &[EventBox],
    audio: &AudioBuffer,
) -> Result<Vec<ContextFeatureVector>> {
    boxes
        .iter()
        .enumerate()
        .map(|(i, b)| extract_features(b, boxes.get(i + 1), audio))
        .collect()
}

/// Stack time-sorted event vectors into one context window per event.
/// Start/end times are re-based so the current event starts at zero;
/// absolute file position never reaches the classifier.
pub fn assemble_context(
    events: &[ContextFeatureVector],
    layout: ContextLayout,
) -> Vec<ContextWindow> {
    let slots = layout.slots();
    let mut windows = Vec::with_capacity(events.len());
    for (i, current) in events.iter().enumerate() {
        let base = current.start;
        let mut vectors = Vec::with_capacity(slots);
        let mut presence = Vec::with_capacity(slots);
        for slot in 0..slots {
            let offset = slot as isize - layout.past as isize;
            let j = i as isize + offset;
            if j < 0 || j >= events.len() as isize {
                vectors.push(ContextFeatureVector::default());
                presence.push(false);
            } else {
                let mut v = events[j as usize];
                v.start -= base;
                v.end -= base;
                vectors.push(v);
                presence.push(true);
            }
        }
        windows.push(ContextWindow {
            vectors,
            presence,
            current_slot: layout.past,
        });
    }
    windows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{EventLabel, Provenance};

    fn event(start: usize, end: usize) -> EventBox {
        EventBox::new(start, end, 0.8, EventLabel::Event, Provenance::External).unwrap()
    }

    fn tone_scene(phase_sign: f64) -> AudioBuffer {
        let fs = 192_000u32;
        let mut samples = vec![0.0; 4000];
        for i in 0..96 {
            let t = i as f64 / fs as f64;
            samples[1000 + i] = phase_sign
                * 0.9
                * (-8000.0 * t).exp()
                * (2.0 * std::f64::consts::PI * 24_000.0 * t).sin();
        }
        AudioBuffer::new(samples, fs).unwrap()
    }

    #[test]
    fn silence_box_features_are_defaults() {
        let audio = AudioBuffer::new(vec![0.0; 2000], 192_000).unwrap();
        let v = extract_features(&event(500, 800), None, &audio).unwrap();
        assert_eq!(v.number_fod, 0.0);
        assert_eq!(v.max_fod, 0.0);
        assert_eq!(v.fod_direction, 1.0);
        assert_eq!(v.minimum_energy, 0.0);
        assert_eq!(v.maximum_energy, 0.0);
        assert_eq!(v.mean_energy, 0.0);
        assert_eq!(v.interarrival, NO_NEXT_EVENT);
    }

    #[test]
    fn fod_direction_follows_leading_phase() {
        let click = extract_features(&event(950, 1200), None, &tone_scene(1.0)).unwrap();
        assert_eq!(click.fod_direction, 1.0);
        assert!(click.number_fod > 0.0);
        let echo = extract_features(&event(950, 1200), None, &tone_scene(-1.0)).unwrap();
        assert_eq!(echo.fod_direction, -1.0);
    }

    #[test]
    fn strongest_frequency_finds_tone() {
        let v = extract_features(&event(1000, 1200), None, &tone_scene(1.0)).unwrap();
        let bin_hz = 192_000.0 / PEAK_FREQ_DFT_LEN as f64;
        assert!(
            (v.strongest_frequency - 24_000.0).abs() <= bin_hz,
            "{}",
            v.strongest_frequency
        );
    }

    #[test]
    fn interarrival_is_gap_to_next_start() {
        let fs = 192_000;
        let audio = AudioBuffer::new(vec![0.0; 2000], fs).unwrap();
        // [0 ms, 1 ms) then [2.5 ms, 3.5 ms): gap is 1.5 ms
        let a = event(0, 192);
        let b = event(480, 672);
        let v = extract_features(&a, Some(&b), &audio).unwrap();
        assert!((v.interarrival - 0.0015).abs() < 1e-12);
    }

    #[test]
    fn energies_use_raw_extremes() {
        let mut samples = vec![0.0; 100];
        samples[10] = 0.5;
        samples[11] = -0.25;
        let audio = AudioBuffer::new(samples, 192_000).unwrap();
        let v = extract_features(&event(0, 100), None, &audio).unwrap();
        assert_eq!(v.maximum_energy, 0.5);
        assert_eq!(v.minimum_energy, -0.25);
        assert!((v.mean_energy - 0.0075).abs() < 1e-12);
    }

    #[test]
    fn context_layouts() {
        assert_eq!(ContextLayout::for_size(3).unwrap(), ContextLayout { past: 1, future: 1 });
        assert_eq!(ContextLayout::for_size(5).unwrap(), ContextLayout { past: 4, future: 0 });
        assert_eq!(ContextLayout::for_size(9).unwrap(), ContextLayout { past: 4, future: 4 });
        assert!(ContextLayout::for_size(7).is_err());
        assert_eq!(ContextLayout::for_size(5).unwrap().feature_count(), 65);
    }

    #[test]
    fn single_event_window_has_four_sentinels() {
        let events = vec![ContextFeatureVector {
            start: 1.0,
            end: 1.001,
            ..Default::default()
        }];
        let windows = assemble_context(&events, ContextLayout::default());
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].presence, vec![false, false, false, false, true]);
        assert_eq!(windows[0].current_slot, 4);
        // current start re-based to zero
        assert_eq!(windows[0].vectors[4].start, 0.0);
        assert!((windows[0].vectors[4].end - 0.001).abs() < 1e-12);
    }

    #[test]
    fn seven_events_index_into_windows() {
        let events: Vec<ContextFeatureVector> = (0..7)
            .map(|i| ContextFeatureVector {
                start: i as f64,
                end: i as f64 + 0.5,
                confidence: i as f64 / 10.0,
                ..Default::default()
            })
            .collect();
        let windows = assemble_context(&events, ContextLayout::default());
        assert_eq!(windows.len(), 7);
        // window 6 holds events 2..=6
        let w = &windows[6];
        assert!(w.presence.iter().all(|&p| p));
        for (slot, expect) in (2..=6).enumerate() {
            assert_eq!(w.vectors[slot].confidence, expect as f64 / 10.0);
            // starts re-based against event 6
            assert_eq!(w.vectors[slot].start, expect as f64 - 6.0);
        }
    }

    #[test]
    fn every_window_has_current_start_zero() {
        let events: Vec<ContextFeatureVector> = (0..12)
            .map(|i| ContextFeatureVector {
                start: 0.3 * i as f64 + 0.01,
                end: 0.3 * i as f64 + 0.02,
                ..Default::default()
            })
            .collect();
        for layout in [
            ContextLayout::for_size(3).unwrap(),
            ContextLayout::for_size(5).unwrap(),
            ContextLayout::for_size(9).unwrap(),
        ] {
            for w in assemble_context(&events, layout) {
                assert_eq!(w.vectors[w.current_slot].start, 0.0);
                assert!(w.presence[w.current_slot]);
                assert_eq!(w.to_features().len(), layout.feature_count());
            }
        }
    }
}
