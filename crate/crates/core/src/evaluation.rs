//! Scoring of detections against hand annotations.
//!
//! Three protocols: point containment (a detection is a true positive when
//! its midpoint falls inside an annotation), two-grade interval overlap
//! (partial at 20%, full at 90% of the reference duration, each side
//! counted independently), and per-bin event-rate correlation. Degenerate
//! divisions (no detections, zero-variance bins) are reported as flagged
//! zeros so batch runs never abort.

use crate::annotations::Annotation;
use crate::error::{Error, Result};

/// Which counting protocol produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchProtocol {
    Point,
    Overlap,
}

/// Detection/annotation agreement counts with derived percentages.
/// Under the point protocol the partial and full columns coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    pub protocol: MatchProtocol,
    pub detections: usize,
    pub tp_partial: usize,
    pub tp_full: usize,
    pub fp: usize,
    pub all_annotations: usize,
    pub found_partial: usize,
    pub found_full: usize,
    pub missed: usize,
    pub precision_partial: f64,
    pub precision_full: f64,
    pub recall_partial: f64,
    pub recall_full: f64,
    pub missed_pct: f64,
    /// True when a percentage had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn percent(numerator: usize, denominator: usize, degenerate: &mut bool) -> f64 {
    if denominator == 0 {
        *degenerate = true;
        0.0
    } else {
        numerator as f64 / denominator as f64 * 100.0
    }
}

fn build_report(
    protocol: MatchProtocol,
    detections: usize,
    tp_partial: usize,
    tp_full: usize,
    all_annotations: usize,
    found_partial: usize,
    found_full: usize,
) -> MatchReport {
    let fp = detections - tp_partial;
    let missed = all_annotations - found_partial;
    let mut degenerate = false;
    MatchReport {
        protocol,
        detections,
        tp_partial,
        tp_full,
        fp,
        all_annotations,
        found_partial,
        found_full,
        missed,
        precision_partial: percent(tp_partial, detections, &mut degenerate),
        precision_full: percent(tp_full, detections, &mut degenerate),
        recall_partial: percent(found_partial, all_annotations, &mut degenerate),
        recall_full: percent(found_full, all_annotations, &mut degenerate),
        missed_pct: percent(missed, all_annotations, &mut degenerate),
        degenerate,
    }
}

/// Point protocol: a detection is a true positive when its midpoint lies
/// inside any annotation; an annotation is found when at least one true
/// positive midpoint lies inside it.
pub fn match_point(detections: &[Annotation], annotations: &[Annotation]) -> MatchReport {
    let mut tp = 0usize;
    let mut found = vec![false; annotations.len()];
    for d in detections {
        let mid = d.midpoint();
        let mut hit = false;
        for (i, a) in annotations.iter().enumerate() {
            if a.start > mid {
                break; // annotations are time-sorted
            }
            if mid >= a.start && mid <= a.end {
                hit = true;
                found[i] = true;
            }
        }
        if hit {
            tp += 1;
        }
    }
    let n_found = found.iter().filter(|&&f| f).count();
    build_report(
        MatchProtocol::Point,
        detections.len(),
        tp,
        tp,
        annotations.len(),
        n_found,
        n_found,
    )
}

fn interval_overlap(a: &Annotation, b: &Annotation) -> f64 {
    (a.end.min(b.end) - a.start.max(b.start)).max(0.0)
}

/// Two-grade overlap protocol. Detection-side fractions divide by the
/// detection duration, annotation-side fractions by the annotation
/// duration; the two sides are counted independently (no one-to-one
/// assignment). A detection below the partial grade against every
/// annotation is a false positive.
pub fn match_overlap(
    detections: &[Annotation],
    annotations: &[Annotation],
    partial_frac: f64,
    full_frac: f64,
) -> Result<MatchReport> {
    if !(0.0..=1.0).contains(&partial_frac)
        || !(0.0..=1.0).contains(&full_frac)
        || partial_frac <= 0.0
        || full_frac <= 0.0
        || partial_frac > full_frac
    {
        return Err(Error::Config(format!(
            "overlap thresholds ({partial_frac}, {full_frac}) must satisfy 0 < partial <= full <= 1"
        )));
    }
    let best_fraction = |subject: &Annotation, others: &[Annotation]| -> f64 {
        let duration = subject.duration();
        if duration <= 0.0 {
            return 0.0;
        }
        let mut best = 0.0f64;
        for o in others {
            if o.start > subject.end {
                break; // others are time-sorted
            }
            best = best.max(interval_overlap(subject, o) / duration);
        }
        best
    };
    let mut tp_partial = 0;
    let mut tp_full = 0;
    for d in detections {
        let frac = best_fraction(d, annotations);
        if frac >= partial_frac {
            tp_partial += 1;
        }
        if frac >= full_frac {
            tp_full += 1;
        }
    }
    let mut found_partial = 0;
    let mut found_full = 0;
    for a in annotations {
        let frac = best_fraction(a, detections);
        if frac >= partial_frac {
            found_partial += 1;
        }
        if frac >= full_frac {
            found_full += 1;
        }
    }
    Ok(build_report(
        MatchProtocol::Overlap,
        detections.len(),
        tp_partial,
        tp_full,
        annotations.len(),
        found_partial,
        found_full,
    ))
}

/// Per-bin counts and their correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub bin_seconds: f64,
    pub detected_counts: Vec<usize>,
    pub annotated_counts: Vec<usize>,
    /// Pearson correlation expressed as a percentage in `[-100, 100]`.
    pub correlation: f64,
    /// True when a count vector had zero variance.
    pub undefined: bool,
}

fn bin_counts(
    annotations: &[Annotation],
    class_filter: Option<&str>,
    bin_seconds: f64,
    n_bins: usize,
) -> Vec<usize> {
    let mut counts = vec![0usize; n_bins];
    for a in annotations {
        if let Some(class) = class_filter {
            if a.label != class {
                continue;
            }
        }
        let bin = (a.midpoint() / bin_seconds).floor() as isize;
        if bin >= 0 && (bin as usize) < n_bins {
            counts[bin as usize] += 1;
        }
    }
    counts
}

fn pearson(x: &[usize], y: &[usize]) -> Option<f64> {
    let n = x.len() as f64;
    if x.is_empty() {
        return None;
    }
    let mx = x.iter().sum::<usize>() as f64 / n;
    let my = y.iter().sum::<usize>() as f64 / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a as f64 - mx;
        let dy = b as f64 - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Event-rate correlation: both sets are filtered by class (when given),
/// counted into `bin_seconds`-wide bins by midpoint, and the two count
/// vectors are Pearson-correlated.
pub fn rate_correlation(
    detections: &[Annotation],
    annotations: &[Annotation],
    class_filter: Option<&str>,
    bin_seconds: f64,
    total_duration: f64,
) -> Result<RateReport> {
    if total_duration <= 0.0 {
        return Err(Error::Config("total_duration must be positive".into()));
    }
    if bin_seconds <= 0.0 {
        return Err(Error::Config("bin_seconds must be positive".into()));
    }
    let n_bins = (total_duration / bin_seconds).ceil().max(1.0) as usize;
    let detected_counts = bin_counts(detections, class_filter, bin_seconds, n_bins);
    let annotated_counts = bin_counts(annotations, class_filter, bin_seconds, n_bins);
    let (correlation, undefined) = match pearson(&detected_counts, &annotated_counts) {
        Some(r) => (r * 100.0, false),
        None => (0.0, true),
    };
    Ok(RateReport {
        bin_seconds,
        detected_counts,
        annotated_counts,
        correlation,
        undefined,
    })
}

/// Render a match report as a fixed-width two-column table mirroring the
/// reference result tables.
pub fn render_table(report: &MatchReport) -> String {
    let mut rows: Vec<(String, String)> = Vec::new();
    let count = |v: usize| v.to_string();
    let pct = |v: f64| format!("{v:.2}");
    match report.protocol {
        MatchProtocol::Point => {
            rows.push(("Detection".into(), count(report.detections)));
            rows.push(("TP".into(), count(report.tp_partial)));
            rows.push(("FP".into(), count(report.fp)));
            rows.push(("Precision".into(), pct(report.precision_partial)));
            rows.push(("All".into(), count(report.all_annotations)));
            rows.push(("Found".into(), count(report.found_partial)));
            rows.push(("Missed".into(), count(report.missed)));
            rows.push(("Recall".into(), pct(report.recall_partial)));
        }
        MatchProtocol::Overlap => {
            rows.push(("Detection".into(), count(report.detections)));
            rows.push(("TP Partial".into(), count(report.tp_partial)));
            rows.push(("TP Full".into(), count(report.tp_full)));
            rows.push(("TP Partial%".into(), pct(report.precision_partial)));
            rows.push(("TP Full%".into(), pct(report.precision_full)));
            rows.push(("FP".into(), count(report.fp)));
            rows.push(("FP%".into(), pct(100.0 - report.precision_partial)));
            rows.push(("All".into(), count(report.all_annotations)));
            rows.push(("Partial".into(), count(report.found_partial)));
            rows.push(("Full".into(), count(report.found_full)));
            rows.push(("Partial%".into(), pct(report.recall_partial)));
            rows.push(("Full%".into(), pct(report.recall_full)));
            rows.push(("Missed".into(), count(report.missed)));
            rows.push(("Missed%".into(), pct(report.missed_pct)));
        }
    }
    let mut out = String::new();
    out.push_str(match report.protocol {
        MatchProtocol::Point => "Metric        Value\n",
        MatchProtocol::Overlap => "Metric        Value\n",
    });
    for (name, value) in rows {
        out.push_str(&format!("{name:<13} {value:>9}\n"));
    }
    if report.degenerate {
        out.push_str("(degenerate: a zero denominator was reported as 0)\n");
    }
    out
}

/// Render a rate-correlation sweep table: one row per confidence value
/// with event, click and echo correlations.
pub fn render_rate_table(rows: &[(u32, f64, f64, f64)]) -> String {
    let mut out = String::from(
        "Confidence  Event Correlation  Click Correlation  Echo Correlation\n",
    );
    for (conf, event, click, echo) in rows {
        out.push_str(&format!(
            "{conf:<11} {event:>17.2} {click:>18.2} {echo:>17.2}\n"
        ));
    }
    out
}
