//! Residual-threshold slip detection.
//!
//! Each record is compared against the motion its control action implies:
//! the commanded speed against the measured longitudinal velocity, and the
//! single-track yaw rate against the measured yaw rate. A channel trips when
//! its residual reaches the threshold (inclusive). Records where neither
//! channel trips are the no-slip samples the friction estimator consumes.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::expected_yaw_rate;
use crate::types::{check_ordered, ControlAction, Observation, TelemetryRecord, VehicleGeometry};

/// Default gap after an event's last flagged sample before a new event may open [s].
pub const DEFAULT_REFRACTORY: f64 = 0.5;

/// Detection thresholds: linear [m/s] and angular [rad/s].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    linear: f64,
    angular: f64,
}

impl Thresholds {
    pub fn new(linear: f64, angular: f64) -> Result<Self> {
        for (name, v) in [("linear", linear), ("angular", angular)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!(
                    "{name} threshold must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(Self { linear, angular })
    }

    pub fn linear(&self) -> f64 {
        self.linear
    }

    pub fn angular(&self) -> f64 {
        self.angular
    }
}

#[derive(Deserialize)]
struct ThresholdsRepr {
    linear: f64,
    angular: f64,
}

impl<'de> Deserialize<'de> for Thresholds {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let t = ThresholdsRepr::deserialize(d)?;
        Thresholds::new(t.linear, t.angular).map_err(serde::de::Error::custom)
    }
}

/// Per-record slip indicators; `no_slip` is always the conjunction of the
/// two negated channel flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SlipFlags {
    linear: bool,
    angular: bool,
    no_slip: bool,
}

impl SlipFlags {
    pub fn new(linear: bool, angular: bool) -> Self {
        Self {
            linear,
            angular,
            no_slip: !linear && !angular,
        }
    }

    pub fn linear(&self) -> bool {
        self.linear
    }

    pub fn angular(&self) -> bool {
        self.angular
    }

    pub fn no_slip(&self) -> bool {
        self.no_slip
    }

    pub fn any(&self) -> bool {
        !self.no_slip
    }

    pub fn from_residuals(r: &Residuals, th: &Thresholds) -> Self {
        Self::new(r.linear >= th.linear, r.angular >= th.angular)
    }
}

/// Absolute mismatch between commanded and measured motion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// [m/s]
    pub linear: f64,
    /// [rad/s]
    pub angular: f64,
}

impl Residuals {
    pub fn of(rec: &TelemetryRecord, geom: &VehicleGeometry) -> Result<Self> {
        Ok(Self {
            linear: linear_residual(&rec.u, &rec.y),
            angular: angular_residual(&rec.u, &rec.y, geom)?,
        })
    }
}

/// `|v - v_x|`.
pub fn linear_residual(u: &ControlAction, y: &Observation) -> f64 {
    (u.v - y.v_x).abs()
}

/// `|v tan(delta) / l_w - yaw_rate|`.
pub fn angular_residual(u: &ControlAction, y: &Observation, geom: &VehicleGeometry) -> Result<f64> {
    Ok((expected_yaw_rate(u, geom)? - y.yaw_rate).abs())
}

/// Memoryless per-record detection.
pub fn detect_step(rec: &TelemetryRecord, th: &Thresholds, geom: &VehicleGeometry) -> Result<SlipFlags> {
    Ok(SlipFlags::from_residuals(&Residuals::of(rec, geom)?, th))
}

/// A detector output sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub t: f64,
    pub residuals: Residuals,
    pub flags: SlipFlags,
    pub surface: Option<String>,
}

/// Tuning knobs beyond the thresholds. The defaults reproduce plain
/// per-sample detection on raw residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorOptions {
    /// A channel reports slip only after this many consecutive trips.
    pub consecutive: usize,
    /// Moving-average length applied to residuals; 0 or 1 disables it.
    pub smoothing_window: usize,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        Self {
            consecutive: 1,
            smoothing_window: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct MovingAverage {
    window: usize,
    values: VecDeque<f64>,
}

impl MovingAverage {
    fn push(&mut self, v: f64) -> f64 {
        if self.window <= 1 {
            return v;
        }
        if self.values.len() == self.window {
            self.values.pop_front();
        }
        self.values.push_back(v);
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Streaming detector over one telemetry stream.
#[derive(Debug, Clone)]
pub struct Detector {
    thresholds: Thresholds,
    geom: VehicleGeometry,
    options: DetectorOptions,
    linear_avg: MovingAverage,
    angular_avg: MovingAverage,
    linear_run: usize,
    angular_run: usize,
    last_t: Option<f64>,
    index: usize,
}

impl Detector {
    pub fn new(thresholds: Thresholds, geom: VehicleGeometry) -> Self {
        Self::with_options(thresholds, geom, DetectorOptions::default())
    }

    pub fn with_options(thresholds: Thresholds, geom: VehicleGeometry, options: DetectorOptions) -> Self {
        Self {
            thresholds,
            geom,
            options,
            linear_avg: MovingAverage {
                window: options.smoothing_window,
                ..Default::default()
            },
            angular_avg: MovingAverage {
                window: options.smoothing_window,
                ..Default::default()
            },
            linear_run: 0,
            angular_run: 0,
            last_t: None,
            index: 0,
        }
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn step(&mut self, rec: &TelemetryRecord) -> Result<Detection> {
        if let Some(previous) = self.last_t {
            if rec.t.partial_cmp(&previous) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::Ordering {
                    index: self.index,
                    previous,
                    t: rec.t,
                });
            }
        }
        let raw = Residuals::of(rec, &self.geom)?;
        let residuals = Residuals {
            linear: self.linear_avg.push(raw.linear),
            angular: self.angular_avg.push(raw.angular),
        };
        let tripped = SlipFlags::from_residuals(&residuals, &self.thresholds);
        self.linear_run = if tripped.linear { self.linear_run + 1 } else { 0 };
        self.angular_run = if tripped.angular { self.angular_run + 1 } else { 0 };
        let need = self.options.consecutive.max(1);
        let flags = SlipFlags::new(self.linear_run >= need, self.angular_run >= need);

        self.last_t = Some(rec.t);
        self.index += 1;
        Ok(Detection {
            t: rec.t,
            residuals,
            flags,
            surface: rec.surface.clone(),
        })
    }

    pub fn run(&mut self, records: &[TelemetryRecord]) -> Result<Vec<Detection>> {
        records.iter().map(|r| self.step(r)).collect()
    }
}

/// Runs a fresh default detector over a whole stream.
pub fn detect_stream(
    records: &[TelemetryRecord],
    thresholds: &Thresholds,
    geom: &VehicleGeometry,
) -> Result<Vec<Detection>> {
    Detector::new(*thresholds, *geom).run(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlipKind {
    Linear,
    Angular,
    Both,
}

impl SlipKind {
    fn of(flags: &SlipFlags) -> Option<Self> {
        match (flags.linear, flags.angular) {
            (true, true) => Some(SlipKind::Both),
            (true, false) => Some(SlipKind::Linear),
            (false, true) => Some(SlipKind::Angular),
            (false, false) => None,
        }
    }

    fn union(self, other: SlipKind) -> SlipKind {
        if self == other {
            self
        } else {
            SlipKind::Both
        }
    }
}

/// A contiguous slip interval, detected or labeled.
///
/// Labeled events carry no kind and no peak residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlipEvent {
    pub onset_t: f64,
    pub end_t: f64,
    pub kind: Option<SlipKind>,
    pub peak_linear: Option<f64>,
    pub peak_angular: Option<f64>,
    pub surface: Option<String>,
}

fn max_opt(a: Option<f64>, b: f64) -> Option<f64> {
    Some(a.map_or(b, |a| a.max(b)))
}

fn check_refractory(refractory: f64) -> Result<()> {
    if !(refractory >= 0.0 && refractory.is_finite()) {
        return Err(Error::domain(format!(
            "refractory must be finite and >= 0, got {refractory}"
        )));
    }
    Ok(())
}

/// Groups flagged samples into events. A flagged sample within `refractory`
/// seconds of the open event's last flagged sample extends it; otherwise it
/// opens a new event.
pub fn extract_events(detections: &[Detection], refractory: f64) -> Result<Vec<SlipEvent>> {
    check_refractory(refractory)?;
    check_ordered(detections.iter().map(|d| &d.t))?;
    let mut events: Vec<SlipEvent> = Vec::new();
    for d in detections {
        let Some(kind) = SlipKind::of(&d.flags) else {
            continue;
        };
        let peak_lin = d.flags.linear.then_some(d.residuals.linear);
        let peak_ang = d.flags.angular.then_some(d.residuals.angular);
        match events.last_mut() {
            Some(ev) if d.t - ev.end_t <= refractory => {
                ev.end_t = d.t;
                ev.kind = ev.kind.map(|k| k.union(kind));
                if let Some(p) = peak_lin {
                    ev.peak_linear = max_opt(ev.peak_linear, p);
                }
                if let Some(p) = peak_ang {
                    ev.peak_angular = max_opt(ev.peak_angular, p);
                }
            }
            _ => events.push(SlipEvent {
                onset_t: d.t,
                end_t: d.t,
                kind: Some(kind),
                peak_linear: peak_lin,
                peak_angular: peak_ang,
                surface: d.surface.clone(),
            }),
        }
    }
    Ok(events)
}

/// Groups ground-truth slip labels into events with the same merging rule
/// as [`extract_events`]. Records without a label count as not slipping.
pub fn label_events(records: &[TelemetryRecord], refractory: f64) -> Result<Vec<SlipEvent>> {
    check_refractory(refractory)?;
    check_ordered(records.iter().map(|r| &r.t))?;
    let mut events: Vec<SlipEvent> = Vec::new();
    for r in records.iter().filter(|r| r.slip_label == Some(true)) {
        match events.last_mut() {
            Some(ev) if r.t - ev.end_t <= refractory => ev.end_t = r.t,
            _ => events.push(SlipEvent {
                onset_t: r.t,
                end_t: r.t,
                kind: None,
                peak_linear: None,
                peak_angular: None,
                surface: r.surface.clone(),
            }),
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> VehicleGeometry {
        VehicleGeometry::new(0.165, 0.165, 0.05, 3.5).unwrap()
    }

    fn rec(t: f64, v: f64, delta: f64, v_x: f64, yaw_rate: f64) -> TelemetryRecord {
        TelemetryRecord::new(
            t,
            ControlAction::new(v, delta),
            Observation {
                v_x,
                yaw_rate,
                ..Default::default()
            },
        )
    }

    fn det(t: f64, linear: bool, angular: bool) -> Detection {
        Detection {
            t,
            residuals: Residuals {
                linear: if linear { 1.0 } else { 0.0 },
                angular: if angular { 2.0 } else { 0.0 },
            },
            flags: SlipFlags::new(linear, angular),
            surface: None,
        }
    }

    #[test]
    fn thresholds_validated() {
        assert!(Thresholds::new(0.0, 1.0).is_err());
        assert!(Thresholds::new(1.0, f64::NAN).is_err());
        assert!(serde_json::from_str::<Thresholds>(r#"{"linear":-1,"angular":1}"#).is_err());
    }

    #[test]
    fn linear_residual_examples() {
        let y = |v_x| Observation {
            v_x,
            ..Default::default()
        };
        assert_eq!(linear_residual(&ControlAction::new(1.0, 0.0), &y(1.0)), 0.0);
        assert_eq!(linear_residual(&ControlAction::new(2.0, 0.0), &y(1.5)), 0.5);
        let r = linear_residual(&ControlAction::new(0.8, 0.0), &y(1.1));
        assert!((r - 0.3).abs() < 1e-15);
    }

    #[test]
    fn angular_residual_examples() {
        let g = geom();
        let y = |yaw_rate| Observation {
            yaw_rate,
            ..Default::default()
        };
        assert_eq!(
            angular_residual(&ControlAction::new(0.0, 0.0), &y(0.0), &g).unwrap(),
            0.0
        );
        let r = angular_residual(&ControlAction::new(1.0, 0.3), &y(0.93738), &g).unwrap();
        assert!(r < 1e-5, "{r}");
        assert_eq!(
            angular_residual(&ControlAction::new(1.0, 0.0), &y(0.4), &g).unwrap(),
            0.4
        );
        assert!(angular_residual(&ControlAction::new(1.0, 2.0), &y(0.0), &g).is_err());
    }

    #[test]
    fn flags_from_residuals() {
        let th = Thresholds::new(0.2, 0.3).unwrap();
        let f = |linear, angular| SlipFlags::from_residuals(&Residuals { linear, angular }, &th);
        assert_eq!(f(0.1, 0.05), SlipFlags::new(false, false));
        assert!(f(0.1, 0.05).no_slip());
        assert_eq!(f(0.25, 0.05), SlipFlags::new(true, false));
        assert!(!f(0.25, 0.05).no_slip());
        // boundary is inclusive
        assert_eq!(f(0.2, 0.3), SlipFlags::new(true, true));
    }

    #[test]
    fn detect_step_uses_both_channels() {
        let th = Thresholds::new(0.2, 0.3).unwrap();
        let flags = detect_step(&rec(0.0, 2.0, 0.0, 1.5, 0.0), &th, &geom()).unwrap();
        assert!(flags.linear() && !flags.angular());
        let flags = detect_step(&rec(0.0, 1.0, 0.0, 1.0, 0.5), &th, &geom()).unwrap();
        assert!(!flags.linear() && flags.angular());
    }

    #[test]
    fn consecutive_requirement_debounces() {
        let th = Thresholds::new(0.2, 0.3).unwrap();
        let opts = DetectorOptions {
            consecutive: 2,
            smoothing_window: 0,
        };
        let mut d = Detector::with_options(th, geom(), opts);
        let out = d
            .run(&[
                rec(0.0, 1.0, 0.0, 0.5, 0.0),
                rec(0.1, 1.0, 0.0, 1.0, 0.0),
                rec(0.2, 1.0, 0.0, 0.5, 0.0),
                rec(0.3, 1.0, 0.0, 0.5, 0.0),
            ])
            .unwrap();
        let lin: Vec<bool> = out.iter().map(|d| d.flags.linear()).collect();
        assert_eq!(lin, vec![false, false, false, true]);
    }

    #[test]
    fn smoothing_averages_residuals() {
        let th = Thresholds::new(0.3, 0.3).unwrap();
        let opts = DetectorOptions {
            consecutive: 1,
            smoothing_window: 2,
        };
        let mut d = Detector::with_options(th, geom(), opts);
        let out = d
            .run(&[rec(0.0, 1.0, 0.0, 1.0, 0.0), rec(0.1, 1.0, 0.0, 0.5, 0.0)])
            .unwrap();
        assert_eq!(out[1].residuals.linear, 0.25);
        assert!(out[1].flags.no_slip());
    }

    #[test]
    fn detector_rejects_unordered() {
        let th = Thresholds::new(0.2, 0.3).unwrap();
        let r = detect_stream(
            &[rec(0.1, 1.0, 0.0, 1.0, 0.0), rec(0.1, 1.0, 0.0, 1.0, 0.0)],
            &th,
            &geom(),
        );
        assert!(matches!(r, Err(Error::Ordering { index: 1, .. })));
    }

    #[test]
    fn single_merged_run() {
        let d = [
            det(0.0, false, false),
            det(0.1, true, false),
            det(0.2, false, true),
            det(0.3, false, false),
        ];
        let ev = extract_events(&d, 0.5).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].onset_t, ev[0].end_t), (0.1, 0.2));
        assert_eq!(ev[0].kind, Some(SlipKind::Both));
        assert_eq!(ev[0].peak_linear, Some(1.0));
        assert_eq!(ev[0].peak_angular, Some(2.0));
    }

    #[test]
    fn separated_runs() {
        let mut d = vec![det(0.0, true, false)];
        d.extend((1..20).map(|i| det(i as f64 * 0.1, false, false)));
        d.push(det(2.0, true, false));
        let ev = extract_events(&d, 0.5).unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[1].onset_t, 2.0);
    }

    #[test]
    fn no_flags_no_events() {
        let d: Vec<_> = (0..10).map(|i| det(i as f64, false, false)).collect();
        assert!(extract_events(&d, 0.5).unwrap().is_empty());
        assert!(extract_events(&[det(1.0, true, false), det(0.5, true, false)], 0.5).is_err());
        assert!(extract_events(&d, -1.0).is_err());
    }

    #[test]
    fn labels_group_like_detections() {
        let recs: Vec<_> = [false, true, true, false, false]
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                rec(i as f64 * 0.1, 1.0, 0.0, 1.0, 0.0)
                    .with_label(s)
                    .with_surface("tile")
            })
            .collect();
        let ev = label_events(&recs, 0.5).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].onset_t, ev[0].end_t), (0.1, 0.2));
        assert_eq!(ev[0].surface.as_deref(), Some("tile"));
        assert_eq!(ev[0].kind, None);
    }
}
