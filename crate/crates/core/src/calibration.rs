//! Threshold calibration, k-fold cross-validation and pull-test ground truth.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{Residuals, Thresholds};
use crate::error::{Error, Result};
use crate::estimator::{pooled_max, FrictionEstimate};
use crate::metrics::{delay_stats, precision_recall_f1, DelayReport, EventMatchReport, Prf};
use crate::par;
use crate::pipeline::{run_stream, PipelineParams};
use crate::types::{TelemetryRecord, VehicleGeometry, DEFAULT_GRAVITY};

/// Smallest threshold calibration will report. A residual channel that is
/// identically zero in training (noiseless data) would otherwise produce a
/// zero threshold, which the inclusive comparison turns into "always slip".
pub const MIN_THRESHOLD: f64 = 1e-9;

/// `mean + 2 * std` with population standard deviation, two-pass.
pub fn mean_plus_two_sigma(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Calibration(format!(
            "need at least 2 residual samples, got {}",
            values.len()
        )));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Calibration(format!("non-finite residual {bad}")));
    }
    let n = values.len() as f64;
    let rough = values.iter().sum::<f64>() / n;
    // corrected two-pass mean: exact for constant input
    let mean = rough + values.iter().map(|v| v - rough).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(mean + 2.0 * var.sqrt())
}

/// Pooled residuals of every record of every stream (labels ignored).
pub fn pooled_residuals<S>(streams: &[S], geom: &VehicleGeometry) -> Result<(Vec<f64>, Vec<f64>)>
where
    S: AsRef<[TelemetryRecord]> + Sync,
{
    let per_stream = par::try_map(streams, |s| {
        s.as_ref()
            .iter()
            .map(|r| Residuals::of(r, geom))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut linear = Vec::new();
    let mut angular = Vec::new();
    for r in per_stream.into_iter().flatten() {
        linear.push(r.linear);
        angular.push(r.angular);
    }
    Ok((linear, angular))
}

/// Thresholds two standard deviations above the mean residuals of the
/// training streams.
pub fn compute_thresholds<S>(training: &[S], geom: &VehicleGeometry) -> Result<Thresholds>
where
    S: AsRef<[TelemetryRecord]> + Sync,
{
    if training.is_empty() {
        return Err(Error::Calibration("no training streams".into()));
    }
    let (linear, angular) = pooled_residuals(training, geom)?;
    Thresholds::new(
        mean_plus_two_sigma(&linear)?.max(MIN_THRESHOLD),
        mean_plus_two_sigma(&angular)?.max(MIN_THRESHOLD),
    )
}

/// Assignment of stream ids to folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    /// Ids held out in `fold`, sorted.
    pub fn test_ids(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Ids used for training when `fold` is held out, sorted.
    pub fn train_ids(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f != fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles the ids with a seeded ChaCha8 generator and deals them
/// round-robin into `k` folds.
pub fn kfold_split<S: AsRef<str>>(ids: &[S], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Fold(format!("k must be >= 2, got {k}")));
    }
    if ids.len() < k {
        return Err(Error::Fold(format!(
            "k = {k} exceeds the {} available streams",
            ids.len()
        )));
    }
    let unique: BTreeSet<&str> = ids.iter().map(AsRef::as_ref).collect();
    if unique.len() != ids.len() {
        return Err(Error::Fold("stream ids are not unique".into()));
    }
    let mut order: Vec<&str> = ids.iter().map(AsRef::as_ref).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    Ok(FoldAssignment {
        k,
        seed,
        assignment: order
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id.to_owned(), i % k))
            .collect(),
    })
}

/// A telemetry stream with a stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedStream {
    pub id: String,
    pub records: Vec<TelemetryRecord>,
}

impl AsRef<[TelemetryRecord]> for NamedStream {
    fn as_ref(&self) -> &[TelemetryRecord] {
        &self.records
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub params: PipelineParams,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            params: PipelineParams::default(),
        }
    }
}

/// Held-out results of one test stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamOutcome {
    pub id: String,
    pub report: EventMatchReport,
    pub estimates: BTreeMap<String, FrictionEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub thresholds: Thresholds,
    pub train_samples: usize,
    pub report: EventMatchReport,
    pub prf: Prf,
    pub streams: Vec<StreamOutcome>,
}

/// Summary over all held-out streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledSummary {
    pub report: EventMatchReport,
    pub prf: Prf,
    pub delays: DelayReport,
    /// Per-stream estimate values grouped by surface.
    pub estimates: BTreeMap<String, Vec<f64>>,
    /// Maximum over all held-out streams per surface.
    pub pooled_max: BTreeMap<String, FrictionEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub assignment: FoldAssignment,
    pub folds: Vec<FoldOutcome>,
    pub pooled: PooledSummary,
}

/// K-fold cross-validation: thresholds from the training folds, detection
/// and estimation on the held-out fold. Folds run in parallel.
pub fn cross_validate(streams: &[NamedStream], geom: &VehicleGeometry, options: &CvOptions) -> Result<CrossValidation> {
    for s in streams {
        if s.records.is_empty() || s.records.iter().any(|r| r.slip_label.is_none()) {
            return Err(Error::MissingLabels(s.id.clone()));
        }
    }
    let ids: Vec<&str> = streams.iter().map(|s| s.id.as_str()).collect();
    let assignment = kfold_split(&ids, options.k, options.seed)?;
    let by_id: BTreeMap<&str, &NamedStream> = streams.iter().map(|s| (s.id.as_str(), s)).collect();

    let folds = par::try_map_range(options.k, |fold| {
        run_fold(fold, &assignment, &by_id, geom, &options.params)
    })?;

    let mut report = EventMatchReport::default();
    let mut estimates: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut all_maps = Vec::new();
    for f in &folds {
        report.absorb(f.report.clone());
        for s in &f.streams {
            for (surface, est) in &s.estimates {
                if let Some(mu) = est.mu_hat() {
                    estimates.entry(surface.clone()).or_default().push(mu);
                }
            }
            all_maps.push(&s.estimates);
        }
    }
    let pooled = PooledSummary {
        prf: precision_recall_f1(&report),
        delays: delay_stats(&report),
        pooled_max: pooled_max(all_maps),
        estimates,
        report,
    };
    Ok(CrossValidation {
        assignment,
        folds,
        pooled,
    })
}

fn run_fold(
    fold: usize,
    assignment: &FoldAssignment,
    by_id: &BTreeMap<&str, &NamedStream>,
    geom: &VehicleGeometry,
    params: &PipelineParams,
) -> Result<FoldOutcome> {
    let train_ids = assignment.train_ids(fold);
    let test_ids = assignment.test_ids(fold);
    let train: Vec<&[TelemetryRecord]> = train_ids.iter().map(|id| by_id[id].records.as_slice()).collect();
    let thresholds = compute_thresholds(&train, geom)?;

    let mut report = EventMatchReport::default();
    let mut outcomes = Vec::with_capacity(test_ids.len());
    for id in &test_ids {
        let run = run_stream(&by_id[id].records, &thresholds, geom, params)?;
        let stream_report = run.report.expect("labels checked up front");
        report.absorb(stream_report.clone());
        outcomes.push(StreamOutcome {
            id: (*id).to_owned(),
            report: stream_report,
            estimates: run.estimates,
        });
    }
    Ok(FoldOutcome {
        fold,
        train_ids: train_ids.iter().map(|s| (*s).to_owned()).collect(),
        test_ids: test_ids.iter().map(|s| (*s).to_owned()).collect(),
        thresholds,
        train_samples: train.iter().map(|s| s.len()).sum(),
        prf: precision_recall_f1(&report),
        report,
        streams: outcomes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PullDirection {
    Lateral,
    Longitudinal,
    Diagonal,
}

/// One static pull: the largest gauge force before the vehicle slid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PullTrial {
    pub direction: PullDirection,
    /// [N]
    pub f_pull: f64,
    /// [N]
    pub f_normal: f64,
}

impl PullTrial {
    /// Trial with the normal force taken as `mass * g`.
    pub fn with_mass(direction: PullDirection, f_pull: f64, mass: f64, g: Option<f64>) -> Self {
        Self {
            direction,
            f_pull,
            f_normal: mass * g.unwrap_or(DEFAULT_GRAVITY),
        }
    }

    pub fn mu(&self) -> Result<f64> {
        for (name, v) in [("f_pull", self.f_pull), ("f_normal", self.f_normal)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(self.f_pull / self.f_normal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullTestSummary {
    pub per_direction: BTreeMap<PullDirection, f64>,
    /// Mean over all trials.
    pub overall: f64,
    pub n: usize,
}

/// Ground-truth friction from pull trials: mean ratio per direction and overall.
pub fn pull_test_mu(trials: &[PullTrial]) -> Result<PullTestSummary> {
    if trials.is_empty() {
        return Err(Error::domain("no pull trials"));
    }
    let mut groups: BTreeMap<PullDirection, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::with_capacity(trials.len());
    for t in trials {
        let mu = t.mu()?;
        groups.entry(t.direction).or_default().push(mu);
        all.push(mu);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(PullTestSummary {
        per_direction: groups.iter().map(|(d, v)| (*d, mean(v))).collect(),
        overall: mean(&all),
        n: all.len(),
    })
}
