//! Detection accuracy, detection delay and friction-error statistics.

mod plots;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detector::SlipEvent;
use crate::error::{Error, Result};
use crate::estimator::surface_key;

pub use plots::{emit_plots, PlotInputs, ResidualTrace, SurfaceComparison};

/// Default half-width of the onset matching window [s].
pub const DEFAULT_MATCH_WINDOW: f64 = 1.0;

/// One labeled event paired with one detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMatch {
    pub labeled: SlipEvent,
    pub detected: SlipEvent,
    /// `detected.onset_t - labeled.onset_t` [s].
    pub delay: f64,
}

/// Outcome of matching detections against labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventMatchReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub matches: Vec<EventMatch>,
    /// Labeled events nobody matched.
    pub missed: Vec<SlipEvent>,
    /// Detections that matched no label.
    pub false_alarms: Vec<SlipEvent>,
}

impl EventMatchReport {
    /// Adds another report's counts and pairs to this one.
    pub fn absorb(&mut self, other: EventMatchReport) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.matches.extend(other.matches);
        self.missed.extend(other.missed);
        self.false_alarms.extend(other.false_alarms);
    }
}

/// Greedy one-to-one matching by increasing `|onset difference|`, limited
/// to pairs within `window` seconds. Ties break on label order, then
/// detection order.
pub fn match_events(labeled: &[SlipEvent], detected: &[SlipEvent], window: f64) -> EventMatchReport {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, l) in labeled.iter().enumerate() {
        for (j, d) in detected.iter().enumerate() {
            let gap = (d.onset_t - l.onset_t).abs();
            if gap <= window {
                candidates.push((gap, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut label_used = vec![false; labeled.len()];
    let mut det_used = vec![false; detected.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !label_used[i] && !det_used[j] {
            label_used[i] = true;
            det_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();

    let matches: Vec<EventMatch> = pairs
        .into_iter()
        .map(|(i, j)| EventMatch {
            labeled: labeled[i].clone(),
            detected: detected[j].clone(),
            delay: detected[j].onset_t - labeled[i].onset_t,
        })
        .collect();
    let missed: Vec<SlipEvent> = labeled
        .iter()
        .zip(&label_used)
        .filter(|(_, &u)| !u)
        .map(|(e, _)| e.clone())
        .collect();
    let false_alarms: Vec<SlipEvent> = detected
        .iter()
        .zip(&det_used)
        .filter(|(_, &u)| !u)
        .map(|(e, _)| e.clone())
        .collect();
    EventMatchReport {
        tp: matches.len(),
        fp: false_alarms.len(),
        fn_: missed.len(),
        matches,
        missed,
        false_alarms,
    }
}

/// Precision, recall and F1; `None` where the denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn precision_recall_f1(report: &EventMatchReport) -> Prf {
    prf_from_counts(report.tp, report.fp, report.fn_)
}

pub fn prf_from_counts(tp: usize, fp: usize, fn_: usize) -> Prf {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(_), Some(_)) if tp == 0 => Some(0.0),
        (Some(p), Some(r)) => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Prf { precision, recall, f1 }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl SummaryStats {
    /// Two-pass mean / population std; `None` for an empty slice.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

/// Delay statistics grouped by the surface of the labeled event.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DelayReport {
    pub per_surface: BTreeMap<String, SummaryStats>,
    /// Surfaces that had labeled events but no matches.
    pub omitted: Vec<String>,
}

pub fn delay_stats(report: &EventMatchReport) -> DelayReport {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for m in &report.matches {
        groups
            .entry(surface_key(m.labeled.surface.as_deref()).to_owned())
            .or_default()
            .push(m.delay.abs());
    }
    let mut omitted: Vec<String> = report
        .missed
        .iter()
        .map(|e| surface_key(e.surface.as_deref()).to_owned())
        .filter(|s| !groups.contains_key(s))
        .collect();
    omitted.sort();
    omitted.dedup();
    DelayReport {
        per_surface: groups
            .into_iter()
            .filter_map(|(k, v)| SummaryStats::from_values(&v).map(|s| (k, s)))
            .collect(),
        omitted,
    }
}

/// Absolute error of per-stream estimates against per-surface ground truth.
pub fn mae_stats(
    estimates: &BTreeMap<String, Vec<f64>>,
    ground_truth: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, SummaryStats>> {
    let mut out = BTreeMap::new();
    for (surface, values) in estimates {
        let truth = ground_truth
            .get(surface)
            .ok_or_else(|| Error::MissingGroundTruth(surface.clone()))?;
        let errors: Vec<f64> = values.iter().map(|v| (v - truth).abs()).collect();
        if let Some(s) = SummaryStats::from_values(&errors) {
            out.insert(surface.clone(), s);
        }
    }
    Ok(out)
}
