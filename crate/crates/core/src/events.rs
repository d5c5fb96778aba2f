//! Event boxes: the time-interval currency every stage trades in.

use crate::error::{Error, Result};

/// Class assigned to an event box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventLabel {
    /// Detected but not yet differentiated.
    Event,
    Click,
    Echo,
    Other,
}

impl EventLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventLabel::Event => "event",
            EventLabel::Click => "click",
            EventLabel::Echo => "echo",
            EventLabel::Other => "other",
        }
    }
}

/// Where a box came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Ingested from an external detector file.
    External,
    /// Produced by the standalone gradient-impulse detector.
    Fod,
    /// Carved out of a merged box by peak grouping.
    Sliced,
    /// Converted from a hand annotation.
    Annotation,
}

/// A half-open interval `[start_sample, end_sample)` on the recording
/// timeline with a confidence and class label.
#[derive(Debug, Clone, PartialEq)]
pub struct EventBox {
    pub start_sample: usize,
    pub end_sample: usize,
    pub confidence: f64,
    pub label: EventLabel,
    pub provenance: Provenance,
}

impl EventBox {
    pub fn new(
        start_sample: usize,
        end_sample: usize,
        confidence: f64,
        label: EventLabel,
        provenance: Provenance,
    ) -> Result<Self> {
        if start_sample >= end_sample {
            return Err(Error::InvalidInput(format!(
                "event box [{start_sample}, {end_sample}) is empty"
            )));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidInput(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            start_sample,
            end_sample,
            confidence,
            label,
            provenance,
        })
    }

    pub fn len_samples(&self) -> usize {
        self.end_sample - self.start_sample
    }

    pub fn start_secs(&self, sample_rate: u32) -> f64 {
        self.start_sample as f64 / sample_rate as f64
    }

    pub fn end_secs(&self, sample_rate: u32) -> f64 {
        self.end_sample as f64 / sample_rate as f64
    }

    /// Overlap in samples with another box (0 when disjoint).
    pub fn overlap(&self, other: &EventBox) -> usize {
        let lo = self.start_sample.max(other.start_sample);
        let hi = self.end_sample.min(other.end_sample);
        hi.saturating_sub(lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_interval() {
        assert!(EventBox::new(5, 5, 0.5, EventLabel::Event, Provenance::External).is_err());
        assert!(EventBox::new(6, 5, 0.5, EventLabel::Event, Provenance::External).is_err());
    }

    #[test]
    fn rejects_out_of_range_confidence() {
        assert!(EventBox::new(0, 1, 1.5, EventLabel::Event, Provenance::External).is_err());
    }

    #[test]
    fn overlap_of_touching_boxes_is_zero() {
        let a = EventBox::new(0, 10, 1.0, EventLabel::Event, Provenance::External).unwrap();
        let b = EventBox::new(10, 20, 1.0, EventLabel::Event, Provenance::External).unwrap();
        assert_eq!(a.overlap(&b), 0);
        let c = EventBox::new(5, 15, 1.0, EventLabel::Event, Provenance::External).unwrap();
        assert_eq!(a.overlap(&c), 5);
    }
}
