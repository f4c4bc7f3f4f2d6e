//! Subcommand implementations. Every output file is written atomically and
//! depends only on inputs, configuration and seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slipfric::calibration::{
    compute_thresholds, cross_validate, pooled_residuals, pull_test_mu, CrossValidation, CvOptions, NamedStream,
    PullDirection, PullTrial,
};
use slipfric::detector::{Detection, Detector, Thresholds};
use slipfric::estimator::{circles_from_detections, EstimateStatus, FrictionCircle, FrictionEstimate};
use slipfric::fsutil::write_atomic;
use slipfric::metrics::{emit_plots, mae_stats, PlotInputs, ResidualTrace, SummaryStats, SurfaceComparison};
use slipfric::pipeline::run_stream;
use slipfric::sim::{simulate_run, NoiseSpec, Scenario, ScenarioParams, SimConfig};
use slipfric::telemetry::{align_channels, load_stream, to_bytes, Channels, LoadMode, LogHeader};
use slipfric::{par, TelemetryRecord};

use crate::config::{set, RunConfig};
use crate::failure::{CliResult, Failure};
use crate::{Cli, Command, Common, ModeArg, NoiseArg, ThresholdArgs};

pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Calibrate { inputs, output, common } => {
            apply_common(&mut cfg, &common);
            cfg.validate()?;
            calibrate(&cfg, &inputs, output.as_deref())
        }
        Command::Detect {
            input,
            out_dir,
            thresholds,
            common,
        } => {
            apply_common(&mut cfg, &common);
            apply_thresholds(&mut cfg, &thresholds)?;
            cfg.validate()?;
            detect(&cfg, &input, &out_dir)
        }
        Command::Estimate {
            inputs,
            out_dir,
            thresholds,
            common,
        } => {
            apply_common(&mut cfg, &common);
            apply_thresholds(&mut cfg, &thresholds)?;
            cfg.validate()?;
            estimate(&cfg, &inputs, &out_dir)
        }
        Command::Simulate {
            scenario,
            sim_config,
            mu,
            second_mu,
            seed,
            rate,
            duration,
            noise,
            g,
            output,
        } => {
            set(&mut cfg.seed, seed);
            set(&mut cfg.rate, rate);
            set(&mut cfg.g, g);
            cfg.validate()?;
            let flags = SimFlags {
                mu,
                second_mu,
                duration,
                noise,
            };
            simulate(&cfg, scenario.as_deref(), sim_config.as_deref(), &flags, &output)
        }
        Command::Evaluate {
            inputs,
            ground_truth,
            out_dir,
            k,
            seed,
            window,
            refractory,
            no_plots,
            common,
        } => {
            apply_common(&mut cfg, &common);
            set(&mut cfg.k, k);
            set(&mut cfg.seed, seed);
            set(&mut cfg.match_window, window);
            set(&mut cfg.refractory, refractory);
            if ground_truth.is_some() {
                cfg.ground_truth = ground_truth;
            }
            cfg.validate()?;
            evaluate(&cfg, &inputs, &out_dir, !no_plots)
        }
    }
}

fn apply_common(cfg: &mut RunConfig, c: &Common) {
    set(&mut cfg.g, c.g);
    set(&mut cfg.rate, c.rate);
    set(
        &mut cfg.mode,
        c.mode.map(|m| match m {
            ModeArg::Strict => LoadMode::Strict,
            ModeArg::Lenient => LoadMode::Lenient,
        }),
    );
    cfg.align |= c.align;
}

#[derive(Deserialize)]
struct ThresholdsDoc {
    thresholds: Thresholds,
}

fn apply_thresholds(cfg: &mut RunConfig, t: &ThresholdArgs) -> CliResult<()> {
    set(&mut cfg.consecutive, t.consecutive);
    set(&mut cfg.smoothing_window, t.smoothing_window);
    set(&mut cfg.refractory, t.refractory);
    if let Some(path) = &t.thresholds {
        let text = read_text(path)?;
        let doc: ThresholdsDoc =
            toml::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        cfg.thresholds = Some(doc.thresholds);
    }
    if let (Some(l), Some(a)) = (t.linear, t.angular) {
        cfg.thresholds = Some(Thresholds::new(l, a).map_err(|e| Failure::usage(e.to_string()))?);
    }
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    write_atomic(path, bytes).map_err(Failure::from)
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = toml::to_string(value).map_err(|e| Failure::domain(format!("report serialization: {e}")))?;
    write_file(path, text.as_bytes())
}

fn make_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

struct Input {
    path: PathBuf,
    records: Vec<TelemetryRecord>,
}

/// Loads every input (concurrently), aligning when configured. Warnings go
/// to standard error in input order.
fn load_inputs(cfg: &RunConfig, paths: &[PathBuf]) -> CliResult<Vec<Input>> {
    let loaded = par::map(paths, |p| -> CliResult<_> {
        let s = load_stream(p, cfg.mode).map_err(|e| Failure::from(e).in_file(p))?;
        let mut dropped = 0;
        let records = if cfg.align && !s.records.is_empty() {
            let a = align_channels(&Channels::from_records(&s.records), cfg.rate)
                .map_err(|e| Failure::from(e).in_file(p))?;
            dropped = a.stats.dropped;
            a.records
        } else {
            s.records
        };
        Ok((records, s.warnings, dropped))
    });
    let mut out = Vec::with_capacity(paths.len());
    for (path, result) in paths.iter().zip(loaded) {
        let (records, warnings, dropped) = result?;
        if warnings > 0 {
            warn(format!(
                "{}: {warnings} out-of-order records resolved leniently",
                path.display()
            ));
        }
        if dropped > 0 {
            warn(format!(
                "{}: {dropped} clock slots dropped during alignment",
                path.display()
            ));
        }
        out.push(Input {
            path: path.clone(),
            records,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum ThresholdSource {
    Supplied,
    CalibratedOnInputs,
}

fn resolve_thresholds(cfg: &RunConfig, inputs: &[Input]) -> CliResult<(Thresholds, ThresholdSource)> {
    if let Some(th) = cfg.thresholds {
        return Ok((th, ThresholdSource::Supplied));
    }
    warn("no thresholds supplied; calibrating on the inputs themselves");
    let streams: Vec<&[TelemetryRecord]> = inputs.iter().map(|i| i.records.as_slice()).collect();
    Ok((
        compute_thresholds(&streams, &cfg.geometry)?,
        ThresholdSource::CalibratedOnInputs,
    ))
}

#[derive(Serialize)]
struct InputInfo {
    path: String,
    records: usize,
}

fn input_info(inputs: &[Input]) -> Vec<InputInfo> {
    inputs
        .iter()
        .map(|i| InputInfo {
            path: i.path.display().to_string(),
            records: i.records.len(),
        })
        .collect()
}

#[derive(Serialize)]
struct ResidualSummary {
    linear: SummaryStats,
    angular: SummaryStats,
}

#[derive(Serialize)]
struct CalibrationReport {
    thresholds: Thresholds,
    residuals: ResidualSummary,
    inputs: Vec<InputInfo>,
    config: toml::Table,
}

fn calibrate(cfg: &RunConfig, paths: &[PathBuf], output: Option<&Path>) -> CliResult<()> {
    let inputs = load_inputs(cfg, paths)?;
    let streams: Vec<&[TelemetryRecord]> = inputs.iter().map(|i| i.records.as_slice()).collect();
    let thresholds = compute_thresholds(&streams, &cfg.geometry)?;
    let (linear, angular) = pooled_residuals(&streams, &cfg.geometry)?;
    let stats = |v: &[f64]| SummaryStats::from_values(v).expect("calibration needs samples");
    let report = CalibrationReport {
        thresholds,
        residuals: ResidualSummary {
            linear: stats(&linear),
            angular: stats(&angular),
        },
        inputs: input_info(&inputs),
        config: cfg.to_toml(),
    };
    match output {
        Some(path) => write_toml(path, &report),
        None => {
            print!(
                "{}",
                toml::to_string(&report).map_err(|e| Failure::domain(e.to_string()))?
            );
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct AnnotatedLine<'a> {
    t: f64,
    linear: f64,
    angular: f64,
    d_lin: bool,
    d_ang: bool,
    no_slip: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    surface: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slip: Option<bool>,
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("plain data serializes");
        out.push(b'\n');
    }
    out
}

#[derive(Serialize)]
struct LabelComparison {
    labeled_events: usize,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
}

#[derive(Serialize)]
struct DetectReport {
    input: String,
    records: usize,
    flagged: usize,
    events: usize,
    thresholds: Thresholds,
    threshold_source: ThresholdSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<LabelComparison>,
    config: toml::Table,
}

fn detect(cfg: &RunConfig, path: &Path, out_dir: &Path) -> CliResult<()> {
    let inputs = load_inputs(cfg, &[path.to_path_buf()])?;
    let (th, source) = resolve_thresholds(cfg, &inputs)?;
    let records = &inputs[0].records;
    let params = cfg.params();
    let run = run_stream(records, &th, &cfg.geometry, &params)?;

    make_dir(out_dir)?;
    write_file(&out_dir.join("events.jsonl"), &jsonl(&run.events))?;
    let annotated = records.iter().zip(&run.detections).map(|(r, d)| AnnotatedLine {
        t: d.t,
        linear: d.residuals.linear,
        angular: d.residuals.angular,
        d_lin: d.flags.linear(),
        d_ang: d.flags.angular(),
        no_slip: d.flags.no_slip(),
        surface: r.surface.as_deref(),
        slip: r.slip_label,
    });
    write_file(&out_dir.join("annotated.jsonl"), &jsonl(annotated))?;
    let report = DetectReport {
        input: path.display().to_string(),
        records: records.len(),
        flagged: run.detections.iter().filter(|d| d.flags.any()).count(),
        events: run.events.len(),
        thresholds: th,
        threshold_source: source,
        labels: run
            .labeled
            .as_ref()
            .zip(run.report.as_ref())
            .map(|(l, r)| LabelComparison {
                labeled_events: l.len(),
                tp: r.tp,
                fp: r.fp,
                fn_: r.fn_,
            }),
        config: cfg.to_toml(),
    };
    write_toml(&out_dir.join("detect.toml"), &report)?;
    println!("events={}", run.events.len());
    Ok(())
}

/// Flat, TOML-friendly view of an estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct EstimateEntry {
    status: EstimateStatus,
    n_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    argmax_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    argmax_ax: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    argmax_ay: Option<f64>,
}

impl From<&FrictionEstimate> for EstimateEntry {
    fn from(e: &FrictionEstimate) -> Self {
        let p = e.peak();
        Self {
            status: e.status(),
            n_samples: e.n_samples,
            mu_hat: e.mu_hat(),
            argmax_t: p.map(|p| p.t),
            argmax_ax: p.map(|p| p.a_x),
            argmax_ay: p.map(|p| p.a_y),
        }
    }
}

fn entries(map: &BTreeMap<String, FrictionEstimate>) -> BTreeMap<String, EstimateEntry> {
    map.iter().map(|(k, v)| (k.clone(), v.into())).collect()
}

/// Adds one stream's circles into the pooled set, merging estimates.
fn merge_circles(into: &mut BTreeMap<String, FrictionCircle>, add: BTreeMap<String, FrictionCircle>) {
    for (surface, c) in add {
        match into.get_mut(&surface) {
            Some(acc) => {
                acc.points.extend(c.points);
                acc.estimate.merge(&c.estimate);
            }
            None => {
                into.insert(surface, c);
            }
        }
    }
}

fn stream_detections(cfg: &RunConfig, records: &[TelemetryRecord], th: &Thresholds) -> CliResult<Vec<Detection>> {
    Ok(Detector::with_options(*th, cfg.geometry, cfg.params().detector).run(records)?)
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Serialize)]
struct StreamEstimates {
    path: String,
    surfaces: BTreeMap<String, EstimateEntry>,
}

#[derive(Serialize)]
struct EstimateReport {
    thresholds: Thresholds,
    threshold_source: ThresholdSource,
    surfaces: BTreeMap<String, EstimateEntry>,
    streams: Vec<StreamEstimates>,
    config: toml::Table,
}

fn estimate(cfg: &RunConfig, paths: &[PathBuf], out_dir: &Path) -> CliResult<()> {
    let inputs = load_inputs(cfg, paths)?;
    let (th, source) = resolve_thresholds(cfg, &inputs)?;
    let per_stream = par::map(&inputs, |i| -> CliResult<BTreeMap<String, FrictionCircle>> {
        let det = stream_detections(cfg, &i.records, &th)?;
        Ok(circles_from_detections(&i.records, &det, cfg.g)?)
    });
    let mut pooled: BTreeMap<String, FrictionCircle> = BTreeMap::new();
    let mut streams = Vec::with_capacity(inputs.len());
    for (input, circles) in inputs.iter().zip(per_stream) {
        let circles = circles.map_err(|f| f.in_file(&input.path))?;
        streams.push(StreamEstimates {
            path: input.path.display().to_string(),
            surfaces: circles.iter().map(|(k, c)| (k.clone(), (&c.estimate).into())).collect(),
        });
        merge_circles(&mut pooled, circles);
    }

    make_dir(out_dir)?;
    for (surface, c) in &pooled {
        if c.estimate.status() == EstimateStatus::NoValidEstimate {
            warn(format!("surface `{surface}`: no valid estimate (every sample slipped)"));
        }
        let mut buf = Vec::new();
        c.write_export(&mut buf).map_err(|e| Failure::data(e.to_string()))?;
        write_file(&out_dir.join(format!("circle_{}.tsv", file_stem(surface))), &buf)?;
    }
    let inputs_for_plots = PlotInputs {
        circles: pooled.values().cloned().collect(),
        traces: Vec::new(),
        comparison: Vec::new(),
    };
    emit_plots(&inputs_for_plots, &out_dir.join("plots"))?;
    let report = EstimateReport {
        thresholds: th,
        threshold_source: source,
        surfaces: pooled.iter().map(|(k, c)| (k.clone(), (&c.estimate).into())).collect(),
        streams,
        config: cfg.to_toml(),
    };
    write_toml(&out_dir.join("estimate.toml"), &report)?;
    for (surface, c) in &pooled {
        match c.estimate.mu_hat() {
            Some(mu) => println!("{surface}.mu_hat={mu}"),
            None => println!("{surface}.mu_hat=none"),
        }
    }
    Ok(())
}

struct SimFlags {
    mu: Option<f64>,
    second_mu: Option<f64>,
    duration: Option<f64>,
    noise: Option<NoiseArg>,
}

fn noise_spec(n: NoiseArg) -> NoiseSpec {
    match n {
        NoiseArg::Default => NoiseSpec::default(),
        NoiseArg::None => NoiseSpec::none(),
    }
}

fn simulate(
    cfg: &RunConfig,
    scenario: Option<&str>,
    sim_config: Option<&Path>,
    flags: &SimFlags,
    output: &Path,
) -> CliResult<()> {
    let (name, sim) = match (scenario, sim_config) {
        (_, Some(path)) => {
            let text = read_text(path)?;
            let mut sim: SimConfig =
                toml::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            set(&mut sim.mu_true, flags.mu);
            set(&mut sim.duration, flags.duration);
            set(&mut sim.noise, flags.noise.map(noise_spec));
            set(&mut sim.seed, Some(cfg.seed));
            ("custom".to_owned(), sim)
        }
        (Some(name), None) => {
            let Some(s) = Scenario::from_name(name) else {
                return Err(Failure::usage(format!(
                    "unknown scenario `{name}`; available: {}",
                    Scenario::names().join(", ")
                )));
            };
            let defaults = ScenarioParams::default();
            let p = ScenarioParams {
                mu: flags.mu.unwrap_or(defaults.mu),
                second_mu: flags.second_mu.unwrap_or(defaults.second_mu),
                rate: cfg.rate,
                duration: flags.duration.unwrap_or(defaults.duration),
                noise: flags.noise.map_or(defaults.noise, noise_spec),
                seed: cfg.seed,
                g: cfg.g,
                geom: cfg.geometry,
                ..defaults
            };
            (name.to_owned(), s.config(&p))
        }
        (None, None) => {
            return Err(Failure::usage(format!(
                "give --scenario (one of: {}) or --sim-config",
                Scenario::names().join(", ")
            )))
        }
    };
    let records = simulate_run(&sim)?;
    let mut metadata = BTreeMap::new();
    metadata.insert("scenario".to_owned(), name);
    metadata.insert("seed".to_owned(), sim.seed.to_string());
    metadata.insert("mu_true".to_owned(), sim.mu_true.to_string());
    for p in &sim.surface_changes {
        metadata.insert(format!("mu_true.{}", p.tag), p.mu.to_string());
    }
    metadata.insert("sigma_accel".to_owned(), sim.noise.sigma_accel.to_string());
    metadata.insert("sigma_vel".to_owned(), sim.noise.sigma_vel.to_string());
    metadata.insert("sigma_yaw_rate".to_owned(), sim.noise.sigma_yaw_rate.to_string());
    let header = LogHeader {
        rate_hint: Some(1.0 / sim.dt),
        geometry: Some(sim.geom),
        metadata,
        ..Default::default()
    };
    write_file(output, &to_bytes(Some(&header), &records)?)?;
    println!("records={}", records.len());
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PullEntry {
    surface: String,
    direction: PullDirection,
    f_pull: f64,
    f_normal: Option<f64>,
    mass: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct GroundTruthFile {
    mu: BTreeMap<String, f64>,
    pull: Vec<PullEntry>,
}

/// Per-surface ground truth plus the individual values behind it.
#[derive(Debug)]
struct GroundTruth {
    mu: BTreeMap<String, f64>,
    samples: BTreeMap<String, Vec<f64>>,
}

fn load_ground_truth(path: &Path, g: f64) -> CliResult<GroundTruth> {
    let text = read_text(path)?;
    let file: GroundTruthFile = toml::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let mut mu = BTreeMap::new();
    let mut samples = BTreeMap::new();
    for (surface, &v) in &file.mu {
        if !(v.is_finite() && v > 0.0) {
            return Err(Failure::domain(format!(
                "{}: mu for `{surface}` must be > 0",
                path.display()
            )));
        }
        mu.insert(surface.clone(), v);
        samples.insert(surface.clone(), vec![v]);
    }
    let mut trials: BTreeMap<String, Vec<PullTrial>> = BTreeMap::new();
    for p in &file.pull {
        let f_normal = match (p.f_normal, p.mass) {
            (Some(f), None) => f,
            (None, Some(m)) => m * g,
            _ => {
                return Err(Failure::data(format!(
                    "{}: pull trial needs exactly one of f_normal or mass",
                    path.display()
                )))
            }
        };
        trials.entry(p.surface.clone()).or_default().push(PullTrial {
            direction: p.direction,
            f_pull: p.f_pull,
            f_normal,
        });
    }
    for (surface, t) in trials {
        if mu.contains_key(&surface) {
            return Err(Failure::data(format!(
                "{}: surface `{surface}` has both a value and pull trials",
                path.display()
            )));
        }
        let summary = pull_test_mu(&t).map_err(|e| Failure::from(e).in_file(path))?;
        samples.insert(surface.clone(), t.iter().map(|x| x.f_pull / x.f_normal).collect());
        mu.insert(surface, summary.overall);
    }
    Ok(GroundTruth { mu, samples })
}

#[derive(Serialize)]
struct EvalSummary {
    streams: usize,
    k: usize,
    seed: u64,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f1: Option<f64>,
}

#[derive(Serialize)]
struct FoldReport {
    fold: usize,
    thresholds: Thresholds,
    train_samples: usize,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f1: Option<f64>,
    train_ids: Vec<String>,
    test_ids: Vec<String>,
}

#[derive(Serialize)]
struct StreamReport {
    id: String,
    fold: usize,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    delays: Vec<f64>,
    estimates: BTreeMap<String, EstimateEntry>,
}

#[derive(Serialize)]
struct SurfaceReport {
    values: Vec<f64>,
    pooled: EstimateEntry,
    #[serde(skip_serializing_if = "Option::is_none")]
    ground_truth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mae: Option<SummaryStats>,
}

#[derive(Serialize)]
struct EvaluationReport {
    summary: EvalSummary,
    assignment: BTreeMap<String, usize>,
    delays_omitted: Vec<String>,
    delays: BTreeMap<String, SummaryStats>,
    surfaces: BTreeMap<String, SurfaceReport>,
    folds: Vec<FoldReport>,
    streams: Vec<StreamReport>,
    config: toml::Table,
}

fn evaluate(cfg: &RunConfig, paths: &[PathBuf], out_dir: &Path, plots: bool) -> CliResult<()> {
    let inputs = load_inputs(cfg, paths)?;
    let streams: Vec<NamedStream> = inputs
        .into_iter()
        .map(|i| NamedStream {
            id: i.path.display().to_string(),
            records: i.records,
        })
        .collect();
    let options = CvOptions {
        k: cfg.k,
        seed: cfg.seed,
        params: cfg.params(),
    };
    let cv = cross_validate(&streams, &cfg.geometry, &options)?;
    let gt = match &cfg.ground_truth {
        Some(p) => Some(load_ground_truth(p, cfg.g)?),
        None => {
            warn("no ground truth given; friction error statistics omitted");
            None
        }
    };
    let mae = match &gt {
        Some(gt) => Some(mae_stats(&cv.pooled.estimates, &gt.mu)?),
        None => None,
    };

    make_dir(out_dir)?;
    let report = evaluation_report(cfg, &cv, gt.as_ref(), mae.as_ref());
    write_toml(&out_dir.join("evaluate.toml"), &report)?;
    if plots {
        emit_plots(
            &evaluation_plots(cfg, &streams, &cv, gt.as_ref())?,
            &out_dir.join("plots"),
        )?;
    }
    let fmt = |x: Option<f64>| x.map_or("undefined".to_owned(), |v| format!("{v:.3}"));
    println!(
        "tp={} fp={} fn={} precision={} recall={} f1={}",
        cv.pooled.report.tp,
        cv.pooled.report.fp,
        cv.pooled.report.fn_,
        fmt(cv.pooled.prf.precision),
        fmt(cv.pooled.prf.recall),
        fmt(cv.pooled.prf.f1)
    );
    Ok(())
}

fn evaluation_report(
    cfg: &RunConfig,
    cv: &CrossValidation,
    gt: Option<&GroundTruth>,
    mae: Option<&BTreeMap<String, SummaryStats>>,
) -> EvaluationReport {
    let pooled = &cv.pooled;
    let folds = cv
        .folds
        .iter()
        .map(|f| FoldReport {
            fold: f.fold,
            thresholds: f.thresholds,
            train_samples: f.train_samples,
            tp: f.report.tp,
            fp: f.report.fp,
            fn_: f.report.fn_,
            precision: f.prf.precision,
            recall: f.prf.recall,
            f1: f.prf.f1,
            train_ids: f.train_ids.clone(),
            test_ids: f.test_ids.clone(),
        })
        .collect();
    let mut streams: Vec<StreamReport> = cv
        .folds
        .iter()
        .flat_map(|f| {
            f.streams.iter().map(move |s| StreamReport {
                id: s.id.clone(),
                fold: f.fold,
                tp: s.report.tp,
                fp: s.report.fp,
                fn_: s.report.fn_,
                delays: s.report.matches.iter().map(|m| m.delay).collect(),
                estimates: entries(&s.estimates),
            })
        })
        .collect();
    streams.sort_by(|a, b| a.id.cmp(&b.id));
    let surfaces = pooled
        .pooled_max
        .iter()
        .map(|(surface, est)| {
            let report = SurfaceReport {
                values: pooled.estimates.get(surface).cloned().unwrap_or_default(),
                pooled: est.into(),
                ground_truth: gt.and_then(|g| g.mu.get(surface).copied()),
                mae: mae.and_then(|m| m.get(surface).copied()),
            };
            (surface.clone(), report)
        })
        .collect();
    EvaluationReport {
        summary: EvalSummary {
            streams: cv.assignment.assignment.len(),
            k: cv.assignment.k,
            seed: cv.assignment.seed,
            tp: pooled.report.tp,
            fp: pooled.report.fp,
            fn_: pooled.report.fn_,
            precision: pooled.prf.precision,
            recall: pooled.prf.recall,
            f1: pooled.prf.f1,
        },
        assignment: cv.assignment.assignment.clone(),
        delays_omitted: pooled.delays.omitted.clone(),
        delays: pooled.delays.per_surface.clone(),
        surfaces,
        folds,
        streams,
        config: cfg.to_toml(),
    }
}

fn trace_name(id: &str) -> String {
    Path::new(id)
        .file_stem()
        .map_or_else(|| id.to_owned(), |s| s.to_string_lossy().into_owned())
}

/// Circles and residual traces of every held-out stream under its fold's
/// thresholds, plus the ground-truth comparison.
fn evaluation_plots(
    cfg: &RunConfig,
    streams: &[NamedStream],
    cv: &CrossValidation,
    gt: Option<&GroundTruth>,
) -> CliResult<PlotInputs> {
    let by_id: BTreeMap<&str, &NamedStream> = streams.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut circles: BTreeMap<String, FrictionCircle> = BTreeMap::new();
    let mut traces = Vec::new();
    for fold in &cv.folds {
        let th = fold.thresholds;
        for id in &fold.test_ids {
            let records = &by_id[id.as_str()].records;
            let det = stream_detections(cfg, records, &th)?;
            merge_circles(&mut circles, circles_from_detections(records, &det, cfg.g)?);
            traces.push(ResidualTrace {
                name: trace_name(id),
                t: det.iter().map(|d| d.t).collect(),
                linear: det.iter().map(|d| d.residuals.linear).collect(),
                angular: det.iter().map(|d| d.residuals.angular).collect(),
                linear_threshold: th.linear(),
                angular_threshold: th.angular(),
            });
        }
    }
    traces.sort_by(|a, b| a.name.cmp(&b.name));
    let comparison = cv
        .pooled
        .estimates
        .iter()
        .map(|(surface, values)| SurfaceComparison {
            surface: surface.clone(),
            ground_truth: gt.and_then(|g| g.samples.get(surface).cloned()).unwrap_or_default(),
            estimates: values.clone(),
        })
        .collect();
    Ok(PlotInputs {
        circles: circles.into_values().collect(),
        traces,
        comparison,
    })
}
