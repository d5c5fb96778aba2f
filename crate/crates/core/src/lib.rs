//! Batch toolchain for echolocation click analysis in high-sample-rate
//! underwater audio.
//!
//! The crate is organized around a file-boundary pipeline:
//!
//! - [`signal`] — gradient, noise gate, STFT, Mexican-Hat CWT, rasterizers
//! - [`fod`] — standalone gradient-impulse event detector
//! - [`detections`] — ingest/merge/slice of external detector boxes
//! - [`classifier`] + [`forest`] — context features and the random forest
//!   separating clicks, echoes and other impulses
//! - [`annotations`] — label tracks, windowing, image export, splits
//! - [`evaluation`] — point/overlap matching and rate correlation
//! - [`synth`] — deterministic synthetic scenes with ground truth
//!
//! Every operation is a pure function of its inputs (seeds included), so
//! identical inputs reproduce identical outputs byte for byte.

pub mod annotations;
pub mod audio;
pub mod classifier;
pub mod detections;
pub mod error;
pub mod evaluation;
pub mod events;
pub mod fod;
pub mod forest;
pub mod signal;
pub mod synth;

pub use audio::AudioBuffer;
pub use error::{Error, Result};
pub use events::{EventBox, EventLabel, Provenance};
