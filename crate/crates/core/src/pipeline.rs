//! Detection, event extraction, matching and estimation over one stream.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detector::{
    extract_events, label_events, Detection, Detector, DetectorOptions, SlipEvent, Thresholds, DEFAULT_REFRACTORY,
};
use crate::error::Result;
use crate::estimator::{estimate_detections, FrictionEstimate};
use crate::metrics::{match_events, EventMatchReport, DEFAULT_MATCH_WINDOW};
use crate::types::{TelemetryRecord, VehicleGeometry, DEFAULT_GRAVITY};

/// Parameters shared by every stage that runs after calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub g: f64,
    pub refractory: f64,
    pub match_window: f64,
    #[serde(default)]
    pub detector: DetectorOptions,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            g: DEFAULT_GRAVITY,
            refractory: DEFAULT_REFRACTORY,
            match_window: DEFAULT_MATCH_WINDOW,
            detector: DetectorOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamRun {
    pub detections: Vec<Detection>,
    pub events: Vec<SlipEvent>,
    pub estimates: BTreeMap<String, FrictionEstimate>,
    /// Present when every record carries a slip label.
    pub labeled: Option<Vec<SlipEvent>>,
    pub report: Option<EventMatchReport>,
}

pub fn run_stream(
    records: &[TelemetryRecord],
    th: &Thresholds,
    geom: &VehicleGeometry,
    params: &PipelineParams,
) -> Result<StreamRun> {
    let detections = Detector::with_options(*th, *geom, params.detector).run(records)?;
    let events = extract_events(&detections, params.refractory)?;
    let estimates = estimate_detections(records, &detections, params.g)?;
    let fully_labeled = !records.is_empty() && records.iter().all(|r| r.slip_label.is_some());
    let (labeled, report) = if fully_labeled {
        let labeled = label_events(records, params.refractory)?;
        let report = match_events(&labeled, &events, params.match_window);
        (Some(labeled), Some(report))
    } else {
        (None, None)
    };
    Ok(StreamRun {
        detections,
        events,
        estimates,
        labeled,
        report,
    })
}
