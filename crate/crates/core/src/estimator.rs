//! Friction coefficient estimation.
//!
//! The estimate is the largest acceleration-based traction coefficient seen
//! on any sample the detector classified as no-slip, tracked separately per
//! surface tag.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::detector::{detect_stream, Detection, SlipFlags, Thresholds};
use crate::error::{Error, Result};
use crate::model::accel_traction;
use crate::types::{check_ordered, TelemetryRecord, VehicleGeometry};

/// Surface key for records without a surface tag.
pub const DEFAULT_SURFACE: &str = "default";

pub(crate) fn surface_key(surface: Option<&str>) -> &str {
    surface.unwrap_or(DEFAULT_SURFACE)
}

/// The sample that currently holds the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub mu_hat: f64,
    pub t: f64,
    /// Longitudinal acceleration of the argmax sample [m/s²].
    pub a_x: f64,
    /// Lateral acceleration of the argmax sample [m/s²].
    pub a_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateStatus {
    Valid,
    /// Every sample slipped; there is nothing to take a maximum over.
    NoValidEstimate,
}

/// Running-maximum friction estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionEstimate {
    pub surface: Option<String>,
    /// No-slip samples consumed so far.
    pub n_samples: usize,
    peak: Option<Peak>,
}

impl FrictionEstimate {
    pub fn new(surface: Option<String>) -> Self {
        Self {
            surface,
            n_samples: 0,
            peak: None,
        }
    }

    pub fn mu_hat(&self) -> Option<f64> {
        self.peak.map(|p| p.mu_hat)
    }

    pub fn peak(&self) -> Option<&Peak> {
        self.peak.as_ref()
    }

    pub fn status(&self) -> EstimateStatus {
        match self.peak {
            Some(_) => EstimateStatus::Valid,
            None => EstimateStatus::NoValidEstimate,
        }
    }

    /// Folds one record in. Slip samples leave the estimate untouched; on a
    /// tie the earlier argmax is kept.
    pub fn update(&mut self, rec: &TelemetryRecord, flags: &SlipFlags, g: f64) {
        if !flags.no_slip() {
            return;
        }
        self.n_samples += 1;
        let rho = accel_traction(rec.y.a_x, rec.y.a_y, g);
        if self.peak.is_none_or(|p| rho > p.mu_hat) {
            self.peak = Some(Peak {
                mu_hat: rho,
                t: rec.t,
                a_x: rec.y.a_x,
                a_y: rec.y.a_y,
            });
        }
    }

    /// Pools another estimate into this one (maximum of both).
    pub fn merge(&mut self, other: &FrictionEstimate) {
        self.n_samples += other.n_samples;
        if let Some(o) = other.peak {
            if self.peak.is_none_or(|p| o.mu_hat > p.mu_hat) {
                self.peak = Some(o);
            }
        }
    }
}

/// Optional post-processing that the plain running maximum does not use.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Replace the maximum by this nearest-rank quantile of the no-slip
    /// traction values (e.g. 0.999), to suppress isolated spikes.
    pub quantile_cap: Option<f64>,
}

/// Per-surface estimates from a stream and its detector output.
pub fn estimate_detections(
    records: &[TelemetryRecord],
    detections: &[Detection],
    g: f64,
) -> Result<BTreeMap<String, FrictionEstimate>> {
    if records.len() != detections.len() {
        return Err(Error::domain(format!(
            "{} records but {} detections",
            records.len(),
            detections.len()
        )));
    }
    let mut out: BTreeMap<String, FrictionEstimate> = BTreeMap::new();
    for (rec, det) in records.iter().zip(detections) {
        out.entry(surface_key(rec.surface.as_deref()).to_owned())
            .or_insert_with(|| FrictionEstimate::new(rec.surface.clone()))
            .update(rec, &det.flags, g);
    }
    Ok(out)
}

/// Detects slip with `th` and folds every surface's records into an estimate.
pub fn estimate_stream(
    records: &[TelemetryRecord],
    th: &Thresholds,
    geom: &VehicleGeometry,
    g: f64,
) -> Result<BTreeMap<String, FrictionEstimate>> {
    estimate_stream_with(records, th, geom, g, &EstimatorOptions::default())
}

pub fn estimate_stream_with(
    records: &[TelemetryRecord],
    th: &Thresholds,
    geom: &VehicleGeometry,
    g: f64,
    options: &EstimatorOptions,
) -> Result<BTreeMap<String, FrictionEstimate>> {
    check_gravity(g)?;
    check_ordered(records.iter().map(|r| &r.t))?;
    let detections = detect_stream(records, th, geom)?;
    match options.quantile_cap {
        None => estimate_detections(records, &detections, g),
        Some(q) => quantile_estimates(records, &detections, g, q),
    }
}

fn check_gravity(g: f64) -> Result<()> {
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::domain(format!("g must be finite and > 0, got {g}")));
    }
    Ok(())
}

fn quantile_estimates(
    records: &[TelemetryRecord],
    detections: &[Detection],
    g: f64,
    q: f64,
) -> Result<BTreeMap<String, FrictionEstimate>> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::domain(format!("quantile cap must be in (0, 1], got {q}")));
    }
    let mut groups: BTreeMap<String, (Option<String>, Vec<&TelemetryRecord>)> = BTreeMap::new();
    for (rec, det) in records.iter().zip(detections) {
        let entry = groups
            .entry(surface_key(rec.surface.as_deref()).to_owned())
            .or_insert_with(|| (rec.surface.clone(), Vec::new()));
        if det.flags.no_slip() {
            entry.1.push(rec);
        }
    }
    Ok(groups
        .into_iter()
        .map(|(key, (surface, mut recs))| {
            let mut est = FrictionEstimate::new(surface);
            est.n_samples = recs.len();
            if !recs.is_empty() {
                let rho = |r: &TelemetryRecord| accel_traction(r.y.a_x, r.y.a_y, g);
                // stable sort keeps first occurrence first among equal values
                recs.sort_by(|a, b| rho(a).total_cmp(&rho(b)));
                let rank = ((q * recs.len() as f64).ceil() as usize).clamp(1, recs.len());
                let r = recs[rank - 1];
                let first = recs.iter().find(|x| rho(x) == rho(r)).expect("present");
                est.peak = Some(Peak {
                    mu_hat: rho(first),
                    t: first.t,
                    a_x: first.y.a_x,
                    a_y: first.y.a_y,
                });
            }
            (key, est)
        })
        .collect())
}

/// Merges per-stream estimate maps into one pooled maximum per surface.
pub fn pooled_max<'a>(
    per_stream: impl IntoIterator<Item = &'a BTreeMap<String, FrictionEstimate>>,
) -> BTreeMap<String, FrictionEstimate> {
    let mut out: BTreeMap<String, FrictionEstimate> = BTreeMap::new();
    for map in per_stream {
        for (key, est) in map {
            out.entry(key.clone())
                .or_insert_with(|| FrictionEstimate::new(est.surface.clone()))
                .merge(est);
        }
    }
    out
}

/// One acceleration sample in units of g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirclePoint {
    pub t: f64,
    pub ax_g: f64,
    pub ay_g: f64,
    pub no_slip: bool,
}

/// All samples of one surface together with its estimate; the circle
/// radius is the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionCircle {
    pub surface: String,
    pub points: Vec<CirclePoint>,
    pub estimate: FrictionEstimate,
    pub g: f64,
}

impl FrictionCircle {
    /// Circle radius; zero when no valid estimate exists.
    pub fn radius(&self) -> f64 {
        self.estimate.mu_hat().unwrap_or(0.0)
    }

    /// Writes the tab-separated export: one line per point and a summary
    /// line carrying the estimate.
    pub fn write_export<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# surface\t{}", self.surface)?;
        writeln!(w, "# columns\tt\tax_g\tay_g\tno_slip")?;
        for p in &self.points {
            writeln!(w, "{}\t{}\t{}\t{}", p.t, p.ax_g, p.ay_g, u8::from(p.no_slip))?;
        }
        match self.estimate.peak() {
            Some(p) => writeln!(
                w,
                "# summary\tmu_hat={}\targmax_t={}\targmax_ax={}\targmax_ay={}\tn_samples={}\tg={}",
                p.mu_hat, p.t, p.a_x, p.a_y, self.estimate.n_samples, self.g
            ),
            None => writeln!(
                w,
                "# summary\tmu_hat=none\tstatus=no_valid_estimate\tn_samples={}\tg={}",
                self.estimate.n_samples, self.g
            ),
        }
    }

    /// Reads back what [`FrictionCircle::write_export`] produced.
    pub fn read_export<R: BufRead>(r: R) -> Result<Self> {
        let perr = |line: usize, field: &str, message: String| Error::Parse {
            line,
            field: field.to_owned(),
            message,
        };
        let num = |line: usize, field: &str, s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| perr(line, field, e.to_string()))
        };

        let mut surface = None;
        let mut points = Vec::new();
        let mut summary: Option<BTreeMap<String, String>> = None;
        for (i, line) in r.lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| perr(n, "line", e.to_string()))?;
            let mut cols = line.split('\t');
            match cols.next() {
                Some("# surface") => surface = cols.next().map(str::to_owned),
                Some("# columns") | Some("") => {}
                Some("# summary") => {
                    let kv = cols
                        .filter_map(|c| c.split_once('='))
                        .map(|(k, v)| (k.to_owned(), v.to_owned()))
                        .collect();
                    summary = Some(kv);
                }
                Some(t) => {
                    let rest: Vec<&str> = cols.collect();
                    if rest.len() != 3 {
                        return Err(perr(n, "row", format!("expected 4 columns, got {}", rest.len() + 1)));
                    }
                    let no_slip = match rest[2] {
                        "1" => true,
                        "0" => false,
                        other => return Err(perr(n, "no_slip", format!("expected 0 or 1, got `{other}`"))),
                    };
                    points.push(CirclePoint {
                        t: num(n, "t", t)?,
                        ax_g: num(n, "ax_g", rest[0])?,
                        ay_g: num(n, "ay_g", rest[1])?,
                        no_slip,
                    });
                }
                None => {}
            }
        }
        let surface = surface.ok_or_else(|| perr(0, "surface", "missing surface line".into()))?;
        let summary = summary.ok_or_else(|| perr(0, "summary", "missing summary line".into()))?;
        let get = |k: &str| summary.get(k).ok_or_else(|| perr(0, k, "missing from summary".into()));
        let g = num(0, "g", get("g")?)?;
        let n_samples = get("n_samples")?
            .parse::<usize>()
            .map_err(|e| perr(0, "n_samples", e.to_string()))?;
        let peak = match get("mu_hat")?.as_str() {
            "none" => None,
            mu => Some(Peak {
                mu_hat: num(0, "mu_hat", mu)?,
                t: num(0, "argmax_t", get("argmax_t")?)?,
                a_x: num(0, "argmax_ax", get("argmax_ax")?)?,
                a_y: num(0, "argmax_ay", get("argmax_ay")?)?,
            }),
        };
        let tag = (surface != DEFAULT_SURFACE).then(|| surface.clone());
        Ok(Self {
            surface,
            points,
            estimate: FrictionEstimate {
                surface: tag,
                n_samples,
                peak,
            },
            g,
        })
    }
}

/// Friction-circle data per surface: every record as a point in units of g,
/// with the surface's estimate as radius.
pub fn friction_circle_points(
    records: &[TelemetryRecord],
    th: &Thresholds,
    geom: &VehicleGeometry,
    g: f64,
) -> Result<BTreeMap<String, FrictionCircle>> {
    check_gravity(g)?;
    check_ordered(records.iter().map(|r| &r.t))?;
    let detections = detect_stream(records, th, geom)?;
    circles_from_detections(records, &detections, g)
}

pub fn circles_from_detections(
    records: &[TelemetryRecord],
    detections: &[Detection],
    g: f64,
) -> Result<BTreeMap<String, FrictionCircle>> {
    let estimates = estimate_detections(records, detections, g)?;
    let mut out: BTreeMap<String, FrictionCircle> = estimates
        .into_iter()
        .map(|(key, estimate)| {
            let circle = FrictionCircle {
                surface: key.clone(),
                points: Vec::new(),
                estimate,
                g,
            };
            (key, circle)
        })
        .collect();
    for (rec, det) in records.iter().zip(detections) {
        let circle = out
            .get_mut(surface_key(rec.surface.as_deref()))
            .expect("every surface has an estimate");
        circle.points.push(CirclePoint {
            t: rec.t,
            ax_g: rec.y.a_x / g,
            ay_g: rec.y.a_y / g,
            no_slip: det.flags.no_slip(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ControlAction, Observation};

    fn rec(t: f64, a_x: f64, a_y: f64) -> TelemetryRecord {
        TelemetryRecord::new(
            t,
            ControlAction::new(1.0, 0.0),
            Observation {
                a_x,
                a_y,
                v_x: 1.0,
                ..Default::default()
            },
        )
    }

    fn at(mu: f64, t: f64) -> FrictionEstimate {
        let mut e = FrictionEstimate::new(None);
        e.update(&rec(t, 0.0, mu * 9.81), &SlipFlags::new(false, false), 9.81);
        e
    }

    #[test]
    fn max_update() {
        let mut e = at(0.5, 0.0);
        e.update(&rec(1.0, 0.0, 0.7 * 9.81), &SlipFlags::new(false, false), 9.81);
        assert!((e.mu_hat().unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(e.peak().unwrap().t, 1.0);
        assert_eq!(e.n_samples, 2);
    }

    #[test]
    fn slip_samples_excluded() {
        let mut e = at(0.5, 0.0);
        let before = e.clone();
        e.update(&rec(1.0, 0.0, 0.9 * 9.81), &SlipFlags::new(true, false), 9.81);
        assert_eq!(e, before);
    }

    #[test]
    fn tie_keeps_first() {
        let mut e = at(0.5, 0.0);
        e.update(&rec(1.0, 0.5 * 9.81, 0.0), &SlipFlags::new(false, false), 9.81);
        assert_eq!(e.peak().unwrap().t, 0.0);
        assert_eq!(e.n_samples, 2);
    }

    #[test]
    fn empty_and_all_slip_have_no_estimate() {
        let th = Thresholds::new(0.1, 0.1).unwrap();
        let g = VehicleGeometry::default();
        assert!(estimate_stream(&[], &th, &g, 9.81).unwrap().is_empty());
        let mut slipping = rec(0.0, 0.0, 5.0);
        slipping.y.v_x = 3.0;
        let est = estimate_stream(&[slipping], &th, &g, 9.81).unwrap();
        assert_eq!(est[DEFAULT_SURFACE].status(), EstimateStatus::NoValidEstimate);
        assert_eq!(est[DEFAULT_SURFACE].mu_hat(), None);
    }

    #[test]
    fn surfaces_kept_apart() {
        let th = Thresholds::new(0.1, 0.1).unwrap();
        let g = VehicleGeometry::default();
        let recs = vec![
            rec(0.0, 0.0, 2.0).with_surface("tile"),
            rec(0.1, 0.0, 7.0).with_surface("cardboard"),
            rec(0.2, 0.0, 3.0).with_surface("tile"),
        ];
        let est = estimate_stream(&recs, &th, &g, 9.81).unwrap();
        assert_eq!(est.len(), 2);
        assert_eq!(est["tile"].mu_hat(), Some(3.0 / 9.81));
        assert_eq!(est["cardboard"].mu_hat(), Some(7.0 / 9.81));
        assert_eq!(est["tile"].surface.as_deref(), Some("tile"));
    }

    #[test]
    fn quantile_cap_drops_spike() {
        let th = Thresholds::new(0.1, 0.1).unwrap();
        let g = VehicleGeometry::default();
        let mut recs: Vec<_> = (0..99).map(|i| rec(i as f64, 0.0, 1.0)).collect();
        recs.push(rec(99.0, 0.0, 50.0));
        let opts = EstimatorOptions {
            quantile_cap: Some(0.99),
        };
        let est = estimate_stream_with(&recs, &th, &g, 9.81, &opts).unwrap();
        assert_eq!(est[DEFAULT_SURFACE].mu_hat(), Some(1.0 / 9.81));
        assert_eq!(est[DEFAULT_SURFACE].peak().unwrap().t, 0.0);
        let bad = EstimatorOptions {
            quantile_cap: Some(0.0),
        };
        assert!(estimate_stream_with(&recs, &th, &g, 9.81, &bad).is_err());
    }

    #[test]
    fn pooled_takes_max() {
        let a = BTreeMap::from([("tile".to_string(), at(0.6, 0.0))]);
        let b = BTreeMap::from([("tile".to_string(), at(0.8, 0.0)), ("cb".to_string(), at(1.0, 0.0))]);
        let p = pooled_max([&a, &b]);
        assert!((p["tile"].mu_hat().unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(p["tile"].n_samples, 2);
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn circle_single_point() {
        let th = Thresholds::new(0.1, 0.1).unwrap();
        let g = VehicleGeometry::default();
        let c = friction_circle_points(&[rec(0.0, 0.0, 9.81)], &th, &g, 9.81).unwrap();
        let c = &c[DEFAULT_SURFACE];
        assert_eq!(
            c.points,
            vec![CirclePoint {
                t: 0.0,
                ax_g: 0.0,
                ay_g: 1.0,
                no_slip: true
            }]
        );
        assert_eq!(c.radius(), 1.0);
    }

    #[test]
    fn circle_all_slip_has_zero_radius() {
        let th = Thresholds::new(0.1, 0.1).unwrap();
        let g = VehicleGeometry::default();
        let mut r = rec(0.0, 0.0, 9.81);
        r.y.v_x = 5.0;
        let c = friction_circle_points(&[r], &th, &g, 9.81).unwrap();
        let c = &c[DEFAULT_SURFACE];
        assert!(!c.points[0].no_slip);
        assert_eq!(c.radius(), 0.0);
        assert_eq!(c.estimate.status(), EstimateStatus::NoValidEstimate);
    }

    #[test]
    fn export_round_trip() {
        let th = Thresholds::new(0.1, 0.1).unwrap();
        let g = VehicleGeometry::default();
        let mut slipping = rec(0.2, 0.3, 0.1);
        slipping.y.v_x = 2.0;
        let recs = vec![rec(0.0, 0.1, 2.2), rec(0.1, -1.3, 4.0), slipping];
        for c in friction_circle_points(&recs, &th, &g, 9.81).unwrap().values() {
            let mut buf = Vec::new();
            c.write_export(&mut buf).unwrap();
            let back = FrictionCircle::read_export(&buf[..]).unwrap();
            assert_eq!(&back, c);
        }
        let mut none = FrictionCircle {
            surface: "tile".into(),
            points: vec![],
            estimate: FrictionEstimate::new(Some("tile".into())),
            g: 9.81,
        };
        none.estimate.n_samples = 0;
        let mut buf = Vec::new();
        none.write_export(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("no_valid_estimate"));
        assert_eq!(FrictionCircle::read_export(&buf[..]).unwrap(), none);
    }
}
