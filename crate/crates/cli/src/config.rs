//! Declarative run configuration.
//!
//! A single TOML file drives every subcommand; command-line flags override
//! individual fields. Unknown keys are rejected so typos never silently
//! fall back to defaults, and each pipeline run snapshots the effective
//! config next to its outputs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub sample_rate: u32,
    pub window_length: usize,
    pub seed: u64,
    pub fod: FodSection,
    pub detection: DetectionSection,
    pub classifier: ClassifierSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FodSection {
    pub ma_window: usize,
    pub max_gap: usize,
    pub pad: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSection {
    pub confidence_floor: f64,
    /// Sliced boxes keep only groups with at least this many gated peaks.
    pub min_fod_peaks: usize,
    /// Sliced boxes keep only groups whose strongest peak reaches this.
    pub min_fod_magnitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    pub model_path: Option<PathBuf>,
    pub context_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub partial_frac: f64,
    pub full_frac: f64,
    pub bin_seconds: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sample_rate: 192_000,
            window_length: 960,
            seed: 42,
            fod: FodSection::default(),
            detection: DetectionSection::default(),
            classifier: ClassifierSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for FodSection {
    fn default() -> Self {
        FodSection {
            ma_window: 1000,
            max_gap: 192,
            pad: 96,
        }
    }
}

impl Default for DetectionSection {
    fn default() -> Self {
        DetectionSection {
            confidence_floor: 0.30,
            min_fod_peaks: 1,
            min_fod_magnitude: 0.0,
        }
    }
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection {
            model_path: None,
            context_size: 5,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            partial_frac: 0.20,
            full_frac: 0.90,
            bin_seconds: 1.0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: PipelineConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.sample_rate == 0 {
            bail!("sample_rate must be positive");
        }
        if self.window_length < 2 {
            bail!("window_length must be >= 2");
        }
        if self.fod.ma_window == 0 || self.fod.max_gap == 0 {
            bail!("fod.ma_window and fod.max_gap must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.detection.confidence_floor) {
            bail!(
                "detection.confidence_floor {} outside [0, 1]",
                self.detection.confidence_floor
            );
        }
        if self.detection.min_fod_peaks == 0 {
            bail!("detection.min_fod_peaks must be >= 1");
        }
        if self.detection.min_fod_magnitude < 0.0 {
            bail!("detection.min_fod_magnitude must be nonnegative");
        }
        if ![3, 5, 9].contains(&self.classifier.context_size) {
            bail!(
                "classifier.context_size {} must be 3, 5 or 9",
                self.classifier.context_size
            );
        }
        let e = &self.eval;
        if !(e.partial_frac > 0.0 && e.partial_frac <= e.full_frac && e.full_frac <= 1.0) {
            bail!(
                "eval thresholds ({}, {}) must satisfy 0 < partial <= full <= 1",
                e.partial_frac,
                e.full_frac
            );
        }
        if e.bin_seconds <= 0.0 {
            bail!("eval.bin_seconds must be positive");
        }
        Ok(())
    }

    /// Serialize the resolved configuration for the run snapshot.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
