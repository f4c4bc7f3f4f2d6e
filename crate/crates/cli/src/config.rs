//! Run configuration: defaults, overlaid by a TOML file, overlaid by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slipfric::detector::{DetectorOptions, Thresholds, DEFAULT_REFRACTORY};
use slipfric::metrics::DEFAULT_MATCH_WINDOW;
use slipfric::pipeline::PipelineParams;
use slipfric::telemetry::{LoadMode, DEFAULT_ALIGN_RATE};
use slipfric::{VehicleGeometry, DEFAULT_GRAVITY};

use crate::failure::{CliResult, Failure};

pub const CONFIG_ENV: &str = "SLIPFRIC_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub g: f64,
    pub refractory: f64,
    pub match_window: f64,
    pub k: usize,
    pub seed: u64,
    /// Target clock for `align` and sample rate for `simulate` [Hz].
    pub rate: f64,
    /// Resample inputs onto the `rate` clock before processing.
    pub align: bool,
    pub mode: LoadMode,
    pub consecutive: usize,
    pub smoothing_window: usize,
    pub ground_truth: Option<PathBuf>,
    pub geometry: VehicleGeometry,
    pub thresholds: Option<Thresholds>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            g: DEFAULT_GRAVITY,
            refractory: DEFAULT_REFRACTORY,
            match_window: DEFAULT_MATCH_WINDOW,
            k: 5,
            seed: 0,
            rate: DEFAULT_ALIGN_RATE,
            align: false,
            mode: LoadMode::Strict,
            consecutive: 1,
            smoothing_window: 0,
            ground_truth: None,
            geometry: VehicleGeometry::default(),
            thresholds: None,
        }
    }
}

impl RunConfig {
    /// Reads `path`, or returns the defaults when there is none.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |what: String| Err(Failure::usage(format!("invalid configuration: {what}")));
        if !(self.g.is_finite() && self.g > 0.0) {
            return bad(format!("g must be > 0, got {}", self.g));
        }
        if !(self.refractory.is_finite() && self.refractory >= 0.0) {
            return bad(format!("refractory must be >= 0, got {}", self.refractory));
        }
        if !(self.match_window.is_finite() && self.match_window >= 0.0) {
            return bad(format!("match_window must be >= 0, got {}", self.match_window));
        }
        if self.k < 2 {
            return bad(format!("k must be >= 2, got {}", self.k));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return bad(format!("rate must be > 0, got {}", self.rate));
        }
        if self.consecutive == 0 {
            return bad("consecutive must be >= 1".into());
        }
        if let Some(p) = &self.ground_truth {
            if !p.exists() {
                return Err(Failure::data(format!("{}: ground-truth file not found", p.display())));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> PipelineParams {
        PipelineParams {
            g: self.g,
            refractory: self.refractory,
            match_window: self.match_window,
            detector: DetectorOptions {
                consecutive: self.consecutive,
                smoothing_window: self.smoothing_window,
            },
        }
    }

    /// The configuration as a TOML table, for echoing into reports.
    pub fn to_toml(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes")
    }
}

/// Replaces `slot` when the flag was given.
pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}
