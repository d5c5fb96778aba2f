//! Standalone first-order Dirac-like impulse detector.
//!
//! Pipeline: gradient conversion, moving-average noise gate, grouping of the
//! surviving peaks by sample distance, and padding of the resulting event
//! intervals. All intervals are half-open `[start, end)` in sample units; a
//! peak's index refers to the gradient sample, i.e. the first sample of the
//! differenced pair.
//!
//! The gate threshold is quadratic in the local mean, so uniformly scaling
//! a signal can change the detected peak set; only the identity scale is
//! guaranteed to reproduce itself.

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::events::{EventBox, EventLabel, Provenance};
use crate::signal;

/// A gradient sample that survived the noise gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedPeak {
    pub sample_index: usize,
    /// Signed gradient value; the sign carries the impulse phase.
    pub gradient_value: f64,
    /// `|gradient_value|`, always > 0.
    pub magnitude: f64,
}

/// A group of gated peaks with its (possibly padded) interval.
#[derive(Debug, Clone, PartialEq)]
pub struct FodEvent {
    pub start_sample: usize,
    pub end_sample: usize,
    pub peaks: Vec<GatedPeak>,
    /// Peak of maximal magnitude; ties resolve to the earliest index.
    pub strongest_peak: GatedPeak,
}

/// Tunables for the standalone detector. The moving-average window follows
/// the 1000-sample default; grouping distance and padding are exposed as
/// config since they are deployment-dependent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FodConfig {
    pub ma_window: usize,
    pub max_gap: usize,
    pub pad: usize,
}

impl Default for FodConfig {
    fn default() -> Self {
        // max_gap: 1 ms at 192 kHz; pad: 0.5 ms per side
        FodConfig {
            ma_window: 1000,
            max_gap: 192,
            pad: 96,
        }
    }
}

/// Run gradient + gate over a buffer and collect every surviving sample as
/// a peak, ordered by index.
pub fn extract_peaks(audio: &AudioBuffer, ma_window: usize) -> Result<Vec<GatedPeak>> {
    if ma_window == 0 {
        return Err(Error::InvalidInput("ma_window must be >= 1".into()));
    }
    let gradient = signal::first_order_gradient(audio)?;
    let local_means = signal::moving_average(&gradient.values, ma_window)?;
    let mut peaks = Vec::new();
    for (i, (&g, &m)) in gradient.values.iter().zip(&local_means).enumerate() {
        let gated = signal::noise_gate(g, m);
        if gated != 0.0 {
            peaks.push(GatedPeak {
                sample_index: i,
                gradient_value: gated,
                magnitude: gated.abs(),
            });
        }
    }
    Ok(peaks)
}

/// Group consecutive peaks whose index distance is at most `max_gap`.
/// Event intervals span from the first peak to one past the last peak.
pub fn group_peaks(peaks: &[GatedPeak], max_gap: usize) -> Result<Vec<FodEvent>> {
    if max_gap == 0 {
        return Err(Error::InvalidInput("max_gap must be >= 1".into()));
    }
    if peaks.windows(2).any(|w| w[1].sample_index <= w[0].sample_index) {
        return Err(Error::InvalidInput(
            "peaks must be strictly sorted by index".into(),
        ));
    }
    let mut events = Vec::new();
    let mut group: Vec<GatedPeak> = Vec::new();
    for peak in peaks {
        if let Some(last) = group.last() {
            if peak.sample_index - last.sample_index > max_gap {
                events.push(finish_group(std::mem::take(&mut group)));
            }
        }
        group.push(peak.clone());
    }
    if !group.is_empty() {
        events.push(finish_group(group));
    }
    Ok(events)
}

fn finish_group(peaks: Vec<GatedPeak>) -> FodEvent {
    let strongest = peaks
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.magnitude
                .partial_cmp(&b.magnitude)
                .unwrap()
                .then(ib.cmp(ia)) // earliest index wins ties
        })
        .map(|(_, p)| p.clone())
        .expect("group is nonempty");
    FodEvent {
        start_sample: peaks.first().unwrap().sample_index,
        end_sample: peaks.last().unwrap().sample_index + 1,
        peaks,
        strongest_peak: strongest,
    }
}

/// Extend every event by up to `pad` samples on both sides. Padding stops
/// at the midpoint between adjacent events and is clamped to
/// `[0, signal_length)`.
pub fn pad_events(
    events: &[FodEvent],
    pad: usize,
    signal_length: usize,
) -> Result<Vec<FodEvent>> {
    for w in events.windows(2) {
        if w[0].end_sample > w[1].start_sample {
            return Err(Error::InvalidInput(
                "events must be sorted and non-overlapping".into(),
            ));
        }
    }
    let mut out = Vec::with_capacity(events.len());
    for (i, event) in events.iter().enumerate() {
        let lo_limit = if i == 0 {
            0
        } else {
            (events[i - 1].end_sample + event.start_sample) / 2
        };
        let hi_limit = if i + 1 == events.len() {
            signal_length
        } else {
            (event.end_sample + events[i + 1].start_sample) / 2
        };
        let mut padded = event.clone();
        padded.start_sample = event.start_sample.saturating_sub(pad).max(lo_limit);
        padded.end_sample = (event.end_sample + pad).min(hi_limit).min(signal_length);
        out.push(padded);
    }
    Ok(out)
}

/// The standalone detector: extract, group and pad, then wrap each group
/// into an event box. Confidence is the strongest gated magnitude
/// normalized by the largest absolute gradient in the buffer.
pub fn detect(audio: &AudioBuffer, config: &FodConfig) -> Result<Vec<EventBox>> {
    let peaks = extract_peaks(audio, config.ma_window)?;
    if peaks.is_empty() {
        return Ok(Vec::new());
    }
    let gradient = signal::first_order_gradient(audio)?;
    let max_gradient = gradient
        .values
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let events = pad_events(&group_peaks(&peaks, config.max_gap)?, config.pad, audio.len())?;
    events
        .iter()
        .map(|e| {
            let confidence = (e.strongest_peak.magnitude / max_gradient).clamp(0.0, 1.0);
            EventBox::new(
                e.start_sample,
                e.end_sample,
                confidence,
                EventLabel::Event,
                Provenance::Fod,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, Normal};

    fn buffer(samples: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(samples, 192_000).unwrap()
    }

    fn peak(index: usize, value: f64) -> GatedPeak {
        GatedPeak {
            sample_index: index,
            gradient_value: value,
            magnitude: value.abs(),
        }
    }

    #[test]
    fn silence_yields_no_peaks() {
        let peaks = extract_peaks(&buffer(vec![0.0; 4000]), 1000).unwrap();
        assert!(peaks.is_empty());
    }

    #[test]
    fn single_step_yields_one_peak() {
        let mut samples = vec![0.0; 3000];
        for s in samples.iter_mut().skip(1500) {
            *s = 1.0;
        }
        let peaks = extract_peaks(&buffer(samples), 1000).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].sample_index, 1499);
        assert_eq!(peaks[0].gradient_value, 1.0);
    }

    #[test]
    fn peaks_match_gate_oracle_on_noisy_impulses() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let noise = Normal::new(0.0, 0.001).unwrap();
        let n = 20_000;
        let mut samples: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
        for k in 0..10 {
            samples[2000 + 1500 * k] += 0.8;
        }
        let audio = buffer(samples.clone());
        let ma_window = 1000;
        let peaks = extract_peaks(&audio, ma_window).unwrap();

        // oracle: chain the per-sample definitions directly
        let gradient: Vec<f64> = samples.windows(2).map(|w| w[1] - w[0]).collect();
        let mut expected = Vec::new();
        for i in 0..gradient.len() {
            let lo = i.saturating_sub((ma_window - 1) / 2);
            let hi = (i + ma_window / 2).min(gradient.len() - 1);
            let mean: f64 =
                gradient[lo..=hi].iter().map(|v| v.abs()).sum::<f64>() / (hi - lo + 1) as f64;
            let tau = 8.0 * mean * mean + 2.4 * mean + 0.024;
            if gradient[i].abs() >= tau {
                expected.push((i, gradient[i]));
            }
        }
        assert!(!expected.is_empty());
        assert_eq!(peaks.len(), expected.len());
        for (p, (i, g)) in peaks.iter().zip(&expected) {
            assert_eq!(p.sample_index, *i);
            assert_eq!(p.gradient_value, *g);
        }
    }

    #[test]
    fn grouping_splits_on_gap() {
        let peaks = vec![peak(100, 0.5), peak(150, -0.7), peak(900, 0.3)];
        let events = group_peaks(&peaks, 192).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].start_sample, 100);
        assert_eq!(events[0].end_sample, 151);
        assert_eq!(events[0].strongest_peak.sample_index, 150);
        assert_eq!(events[1].start_sample, 900);
        assert_eq!(events[1].end_sample, 901);
    }

    #[test]
    fn grouping_empty_input() {
        assert!(group_peaks(&[], 192).unwrap().is_empty());
    }

    #[test]
    fn grouping_rejects_unsorted_peaks() {
        let peaks = vec![peak(10, 0.5), peak(5, 0.5)];
        assert!(group_peaks(&peaks, 10).is_err());
    }

    #[test]
    fn grouping_matches_single_linkage_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        for _ in 0..50 {
            let n = rng.random_range(0..40);
            let mut indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..5000)).collect();
            indices.sort_unstable();
            indices.dedup();
            let peaks: Vec<GatedPeak> = indices.iter().map(|&i| peak(i, 0.1)).collect();
            let max_gap = rng.random_range(1..400);
            let events = group_peaks(&peaks, max_gap).unwrap();

            // oracle: cut wherever the gap exceeds max_gap
            let mut expected: Vec<Vec<usize>> = Vec::new();
            for &i in &indices {
                match expected.last_mut() {
                    Some(g) if i - *g.last().unwrap() <= max_gap => g.push(i),
                    _ => expected.push(vec![i]),
                }
            }
            assert_eq!(events.len(), expected.len());
            for (e, g) in events.iter().zip(&expected) {
                let got: Vec<usize> = e.peaks.iter().map(|p| p.sample_index).collect();
                assert_eq!(&got, g);
            }
        }
    }

    #[test]
    fn doubling_gap_never_increases_event_count() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let mut indices: Vec<usize> = (0..60).map(|_| rng.random_range(0..10_000)).collect();
        indices.sort_unstable();
        indices.dedup();
        let peaks: Vec<GatedPeak> = indices.iter().map(|&i| peak(i, 0.2)).collect();
        for gap in [1usize, 3, 10, 50, 200] {
            let narrow = group_peaks(&peaks, gap).unwrap().len();
            let wide = group_peaks(&peaks, gap * 2).unwrap().len();
            assert!(wide <= narrow);
        }
    }

    #[test]
    fn strongest_peak_tie_breaks_to_earliest() {
        let peaks = vec![peak(10, -0.5), peak(12, 0.5), peak(14, 0.3)];
        let events = group_peaks(&peaks, 10).unwrap();
        assert_eq!(events[0].strongest_peak.sample_index, 10);
    }

    #[test]
    fn padding_single_event() {
        let events = group_peaks(&[peak(1000, 0.5), peak(1009, 0.5)], 50).unwrap();
        let padded = pad_events(&events, 96, 100_000).unwrap();
        assert_eq!(padded[0].start_sample, 904);
        assert_eq!(padded[0].end_sample, 1106);
    }

    #[test]
    fn padding_meets_at_midpoint() {
        let events = vec![
            group_peaks(&[peak(1000, 0.4), peak(1009, 0.4)], 50).unwrap().remove(0),
            group_peaks(&[peak(1050, 0.4), peak(1059, 0.4)], 50).unwrap().remove(0),
        ];
        let padded = pad_events(&events, 96, 100_000).unwrap();
        assert_eq!(padded[0].end_sample, 1030);
        assert_eq!(padded[1].start_sample, 1030);
        assert!(padded[0].end_sample <= padded[1].start_sample);
    }

    #[test]
    fn padding_clamps_at_signal_bounds() {
        let events = group_peaks(&[peak(10, 0.4), peak(19, 0.4)], 50).unwrap();
        let padded = pad_events(&events, 96, 500).unwrap();
        assert_eq!(padded[0].start_sample, 0);
        assert_eq!(padded[0].end_sample, 116);
    }

    #[test]
    fn detect_on_silence_is_empty() {
        let boxes = detect(&buffer(vec![0.0; 5000]), &FodConfig::default()).unwrap();
        assert!(boxes.is_empty());
    }

    /// Contract scenario: a high-SNR burst of 20 isolated clicks at 2 ms
    /// spacing is found as exactly 20 events with the default config.
    #[test]
    fn detect_finds_twenty_clicks_in_burst() {
        let fs = 192_000u32;
        let mut samples = vec![0.0; fs as usize / 10]; // 100 ms
        let spacing = (0.002 * fs as f64) as usize;
        let f = 20_000.0;
        for k in 0..20 {
            let onset = 2000 + k * spacing;
            for i in 0..96 {
                let t = i as f64 / fs as f64;
                samples[onset + i] +=
                    0.9 * (-8000.0 * t).exp() * (2.0 * std::f64::consts::PI * f * t).sin();
            }
        }
        let audio = AudioBuffer::new(samples, fs).unwrap();
        let boxes = detect(&audio, &FodConfig::default()).unwrap();
        assert_eq!(boxes.len(), 20);
        for (k, b) in boxes.iter().enumerate() {
            let onset = 2000 + k * spacing;
            assert!(b.start_sample <= onset && onset < b.end_sample, "event {k}");
            assert!(b.confidence > 0.0 && b.confidence <= 1.0);
        }
    }

    #[test]
    fn detect_output_is_sorted_non_overlapping_in_bounds() {
        let mut rng = ChaCha12Rng::seed_from_u64(34);
        let noise = Normal::new(0.0, 0.002).unwrap();
        let n = 30_000;
        let mut samples: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
        for k in 0..8 {
            samples[1000 + k * 3000] += 0.7;
        }
        let audio = buffer(samples);
        let boxes = detect(&audio, &FodConfig::default()).unwrap();
        assert!(!boxes.is_empty());
        for w in boxes.windows(2) {
            assert!(w[0].end_sample <= w[1].start_sample);
        }
        assert!(boxes.iter().all(|b| b.end_sample <= n));
    }

    #[test]
    fn detect_unchanged_by_appended_silence() {
        let mut samples = vec![0.0; 20_000];
        for k in 0..5 {
            samples[3000 + k * 2000] = 0.8;
        }
        let base = detect(&buffer(samples.clone()), &FodConfig::default()).unwrap();
        samples.extend(std::iter::repeat(0.0).take(19_200));
        let extended = detect(&buffer(samples), &FodConfig::default()).unwrap();
        assert_eq!(base.len(), extended.len());
        for (a, b) in base.iter().zip(&extended) {
            assert_eq!(a.start_sample, b.start_sample);
            assert_eq!(a.end_sample, b.end_sample);
        }
    }
}
