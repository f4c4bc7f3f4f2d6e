//! Acceptance suite. Runs without the libtest harness so that the one-line
//! verdict per criterion is always printed:
//!
//! ```text
//! cargo test -p slipfric-cli --test acceptance
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use slipfric::calibration::{
    compute_thresholds, cross_validate, mean_plus_two_sigma, pull_test_mu, CvOptions, NamedStream, PullDirection,
    PullTrial,
};
use slipfric::detector::{detect_stream, Thresholds};
use slipfric::estimator::{estimate_stream, FrictionEstimate, DEFAULT_SURFACE};
use slipfric::metrics::prf_from_counts;
use slipfric::model::{
    expected_yaw_rate, geometric_slip_angle, is_pure_rolling, kinematic_yaw_rate, slip_angle, slip_ratio,
    traction_coefficient,
};
use slipfric::pipeline::{run_stream, PipelineParams};
use slipfric::sim::{simulate_run, NoiseSpec, Scenario, ScenarioParams};
use slipfric::telemetry::{load_stream, read_jsonl, to_bytes, LoadMode, LogHeader};
use slipfric::types::{ControlAction, Observation, PlanarForce, TelemetryRecord, TireState};
use slipfric::{par, VehicleGeometry};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

const G: f64 = 9.81;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($msg)+)),
        }
    };
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("metric arithmetic", c1_metric_arithmetic),
        ("simulator friction accuracy", c2_friction_accuracy),
        ("simulator detection quality", c3_detection_quality),
        ("detection delay bound", c4_delay_bound),
        ("threshold calibration", c5_calibration),
        ("estimator oracle equivalence", c6_estimator_oracle),
        ("core formula properties", c7_formulas),
        ("pull-test calculator", c8_pull_test),
        ("round trip and determinism", c9_round_trip),
        ("end-to-end protocol shape", c10_protocol),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let verdict = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".to_owned()));
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.2}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn round3(x: Option<f64>) -> Option<f64> {
    x.map(|v| (v * 1000.0).round() / 1000.0)
}

fn ulps(a: f64, b: f64) -> u64 {
    a.to_bits().abs_diff(b.to_bits())
}

fn c1_metric_arithmetic() -> Verdict {
    let prf = prf_from_counts(20, 2, 0);
    let got = (round3(prf.precision), round3(prf.recall), round3(prf.f1));
    ensure!(got == (Some(0.909), Some(1.0), Some(0.952)), "got {got:?}");
    Ok(format!("tp=20 fp=2 fn=0 -> {got:?}"))
}

/// Thresholds calibrated on the stream itself, as for an unlabeled log.
fn self_calibrated(records: &[TelemetryRecord]) -> Thresholds {
    compute_thresholds(&[records], &VehicleGeometry::default()).expect("enough samples")
}

fn drift_turn_mu_hat(mu: f64, noise: NoiseSpec, seed: u64) -> f64 {
    let recs = simulate_run(&Scenario::DriftTurn.config(&ScenarioParams {
        mu,
        noise,
        seed,
        ..Default::default()
    }))
    .unwrap();
    let run = run_stream(
        &recs,
        &self_calibrated(&recs),
        &VehicleGeometry::default(),
        &PipelineParams::default(),
    )
    .unwrap();
    run.estimates["sim"].mu_hat().expect("no-slip samples exist")
}

fn c2_friction_accuracy() -> Verdict {
    let started = Instant::now();
    let mut detail = Vec::new();
    for mu in [0.4, 0.7, 1.0] {
        let clean = drift_turn_mu_hat(mu, NoiseSpec::none(), 0);
        ensure!(clean >= mu - 0.02 && clean <= mu, "noiseless mu={mu}: mu_hat={clean}");
        let seeds: Vec<u64> = (0..100).collect();
        let noisy = par::map(&seeds, |&s| drift_turn_mu_hat(mu, NoiseSpec::default(), s));
        let inside = noisy.iter().filter(|&&m| m >= mu - 0.05 && m <= mu + 0.03).count();
        ensure!(inside >= 95, "noisy mu={mu}: only {inside}/100 within bounds");
        detail.push(format!("mu={mu}: clean {clean:.4}, noisy {inside}/100"));
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(detail.join("; "))
}

/// Ten drift-turn and ten hard-launch runs with default noise.
fn labeled_corpus() -> Vec<(String, Scenario, u64)> {
    (0..20u64)
        .map(|i| {
            let s = if i < 10 {
                Scenario::DriftTurn
            } else {
                Scenario::HardLaunch
            };
            (format!("{}-{:02}", s.name(), i), s, 1000 + i)
        })
        .collect()
}

fn c3_detection_quality() -> Verdict {
    let started = Instant::now();
    let corpus = labeled_corpus();
    let streams = par::map(&corpus, |(id, s, seed)| NamedStream {
        id: id.clone(),
        records: simulate_run(&s.config(&ScenarioParams {
            seed: *seed,
            ..Default::default()
        }))
        .unwrap(),
    });
    let options = CvOptions {
        k: 5,
        seed: 0,
        params: PipelineParams {
            match_window: 1.0,
            ..Default::default()
        },
    };
    let cv = cross_validate(&streams, &VehicleGeometry::default(), &options).map_err(|e| e.to_string())?;
    let r = &cv.pooled.report;
    let (p, rec) = (
        cv.pooled.prf.precision.unwrap_or(0.0),
        cv.pooled.prf.recall.unwrap_or(0.0),
    );
    ensure!(
        rec >= 0.95 && p >= 0.90,
        "tp={} fp={} fn={} precision={p} recall={rec}",
        r.tp,
        r.fp,
        r.fn_
    );
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "tp={} fp={} fn={} precision={p:.3} recall={rec:.3}",
        r.tp, r.fp, r.fn_
    ))
}

fn c4_delay_bound() -> Verdict {
    let mut runs = Vec::new();
    for mu in [0.4, 0.7, 1.0] {
        for s in [Scenario::DriftTurn, Scenario::HardLaunch] {
            let p = ScenarioParams {
                mu,
                noise: NoiseSpec::none(),
                ..Default::default()
            };
            runs.push((format!("{} mu={mu}", s.name()), simulate_run(&s.config(&p)).unwrap()));
        }
    }
    let mut delays = Vec::new();
    for (name, recs) in &runs {
        let run = run_stream(
            recs,
            &self_calibrated(recs),
            &VehicleGeometry::default(),
            &PipelineParams::default(),
        )
        .unwrap();
        let report = run.report.expect("simulated logs are labeled");
        ensure!(report.fn_ == 0, "{name}: {} labeled events missed", report.fn_);
        delays.extend(report.matches.iter().map(|m| m.delay.abs()));
    }
    ensure!(!delays.is_empty(), "no matched events");
    let mean = delays.iter().sum::<f64>() / delays.len() as f64;
    ensure!(mean <= 0.05, "mean |delay| {mean} s over {} events", delays.len());
    Ok(format!("mean |delay| {mean:.4} s over {} events", delays.len()))
}

fn c5_calibration() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (m, s) in [(0.0, 1.0), (0.3, 0.05), (5.0, 2.0)] {
        let normal = Normal::new(m, s).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
        let th = mean_plus_two_sigma(&xs).unwrap();
        ensure!((th - (m + 2.0 * s)).abs() <= 0.02 * s, "N({m}, {s}): threshold {th}");
    }
    // exact fixtures: symmetric pairs have an exact spread, dyadic values
    // keep every sum exact under power-of-two scaling
    for _ in 0..2_000 {
        let (m, d) = (
            rng.random_range(0..256) as f64 / 8.0,
            rng.random_range(0..64) as f64 / 8.0,
        );
        let c = rng.random_range(1..64) as f64 / 4.0;
        let values: Vec<f64> = (0..rng.random_range(1..50)).flat_map(|_| [m - d, m + d]).collect();
        let base = mean_plus_two_sigma(&values).unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
        ensure!(base == m + 2.0 * d, "pairs {m}+-{d}: {base}");
        ensure!(
            mean_plus_two_sigma(&shifted).unwrap() == base + c,
            "translation by {c} of {m}+-{d}"
        );

        let dyadic: Vec<f64> = (0..16).map(|_| rng.random_range(0..64) as f64 / 8.0).collect();
        let k = 2f64.powi(rng.random_range(-6..6));
        let scaled: Vec<f64> = dyadic.iter().map(|v| v * k).collect();
        ensure!(
            mean_plus_two_sigma(&scaled).unwrap() == mean_plus_two_sigma(&dyadic).unwrap() * k,
            "scaling by {k} of {dyadic:?}"
        );
    }
    Ok("3 Gaussian fits within 0.02 s; 2000 exact translation and scale fixtures".to_owned())
}

fn random_stream(rng: &mut ChaCha8Rng) -> Vec<TelemetryRecord> {
    let geom = VehicleGeometry::default();
    let surfaces = [None, Some("tile"), Some("cardboard")];
    (0..rng.random_range(0..=200))
        .map(|k| {
            let v = rng.random_range(0.0..5.0);
            let delta: f64 = rng.random_range(-0.5..0.5);
            let yaw = v * delta.tan() / geom.wheelbase();
            let mut r = TelemetryRecord::new(
                k as f64 * 0.025,
                ControlAction::new(v, delta),
                Observation {
                    a_x: rng.random_range(-15.0..15.0),
                    a_y: rng.random_range(-15.0..15.0),
                    v_x: v + rng.random_range(-0.6..0.6),
                    v_y: 0.0,
                    yaw_rate: yaw + rng.random_range(-0.6..0.6),
                },
            );
            r.surface = surfaces[rng.random_range(0..3)].map(str::to_owned);
            r
        })
        .collect()
}

/// Independent oracle: inclusive threshold test, then a plain max.
fn brute_force(records: &[TelemetryRecord], th: &Thresholds) -> BTreeMap<String, Option<u64>> {
    let l_w = VehicleGeometry::default().wheelbase();
    let mut out: BTreeMap<String, Option<f64>> = BTreeMap::new();
    for r in records {
        let slot = out
            .entry(r.surface.clone().unwrap_or_else(|| DEFAULT_SURFACE.to_owned()))
            .or_insert(None);
        let lin = (r.u.v - r.y.v_x).abs() >= th.linear();
        let ang = (r.u.v * r.u.delta.tan() / l_w - r.y.yaw_rate).abs() >= th.angular();
        if !lin && !ang {
            let rho = r.y.a_x.hypot(r.y.a_y) / G;
            *slot = Some(slot.map_or(rho, |m| m.max(rho)));
        }
    }
    out.into_iter().map(|(k, v)| (k, v.map(f64::to_bits))).collect()
}

fn bits(est: &BTreeMap<String, FrictionEstimate>) -> BTreeMap<String, Option<u64>> {
    est.iter()
        .map(|(k, e)| (k.clone(), e.mu_hat().map(f64::to_bits)))
        .collect()
}

fn c6_estimator_oracle() -> Verdict {
    let geom = VehicleGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..1_000 {
        let records = random_stream(&mut rng);
        let th = Thresholds::new(rng.random_range(0.05..0.6), rng.random_range(0.05..0.6)).unwrap();
        let full = estimate_stream(&records, &th, &geom, G).unwrap();
        ensure!(
            bits(&full) == brute_force(&records, &th),
            "case {case}: differs from brute force"
        );

        let cut = rng.random_range(0..=records.len());
        for (surface, e) in estimate_stream(&records[..cut], &th, &geom, G).unwrap() {
            if let Some(mu) = e.mu_hat() {
                ensure!(
                    full[&surface].mu_hat().unwrap() >= mu,
                    "case {case}: prefix {cut} exceeds full"
                );
            }
        }

        let det = detect_stream(&records, &th, &geom).unwrap();
        let kept: Vec<TelemetryRecord> = records
            .iter()
            .zip(&det)
            .filter(|(_, d)| d.flags.no_slip())
            .map(|(r, _)| r.clone())
            .collect();
        let only = bits(&estimate_stream(&kept, &th, &geom, G).unwrap());
        for (surface, mu) in bits(&full) {
            ensure!(
                only.get(&surface).copied().flatten() == mu,
                "case {case}: slip record changed {surface}"
            );
        }
    }
    Ok("1000 random streams match the oracle; prefix and slip-exclusion hold".to_owned())
}

fn c7_formulas() -> Verdict {
    const N: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let force = |f_x, f_y, f_z| PlanarForce { f_x, f_y, f_z };
    for _ in 0..N {
        let delta = rng.random_range(-1.57..1.57);
        let geom = VehicleGeometry::new(rng.random_range(0.01..3.0), rng.random_range(0.01..3.0), 0.05, 1.0).unwrap();
        let (a, b) = (
            geometric_slip_angle(-delta, &geom).unwrap(),
            geometric_slip_angle(delta, &geom).unwrap(),
        );
        ensure!(a == -b, "beta not odd at delta={delta}");
    }
    for _ in 0..N {
        let (f_x, f_y, f_z) = (
            rng.random_range(-1e3..1e3),
            rng.random_range(-1e3..1e3),
            rng.random_range(1.0..1e3),
        );
        let (s, c) = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI).sin_cos();
        let rotated = force(c.mul_add(f_x, -s * f_y), s.mul_add(f_x, c * f_y), f_z);
        let (a, b) = (
            traction_coefficient(&force(f_x, f_y, f_z)).unwrap(),
            traction_coefficient(&rotated).unwrap(),
        );
        ensure!(ulps(a, b) <= 4, "rotation: {a} vs {b}");
    }
    for _ in 0..N {
        let (a_x, a_y, m, g): (f64, f64, f64, f64) = (
            rng.random_range(-30.0..30.0),
            rng.random_range(-30.0..30.0),
            rng.random_range(0.1..2e3),
            rng.random_range(1.0..20.0),
        );
        let by_accel = a_x.hypot(a_y) / g;
        let by_force = traction_coefficient(&force(m * a_x, m * a_y, m * g)).unwrap();
        ensure!(ulps(by_accel, by_force) <= 4, "mass {m}: {by_accel} vs {by_force}");
    }
    for _ in 0..N {
        let r_e = rng.random_range(0.01..0.5);
        let omega = rng.random_range(0.1..500.0);
        let v_wx = if rng.random() {
            r_e * omega
        } else {
            rng.random_range(0.01..100.0)
        };
        let v_wy = if rng.random() {
            0.0
        } else {
            rng.random_range(-10.0..10.0)
        };
        let w = TireState { v_wx, v_wy, omega };
        let zero = slip_ratio(&w, r_e).unwrap() == 0.0 && slip_angle(&w).unwrap() == 0.0;
        ensure!(
            is_pure_rolling(&w, r_e, 0.0).unwrap() == zero,
            "pure rolling mismatch at {w:?}"
        );
    }
    for _ in 0..N {
        let l = rng.random_range(0.05..3.0);
        let geom = VehicleGeometry::new(l, l, 0.05, 3.5).unwrap();
        let u = ControlAction::new(rng.random_range(0.01..30.0), rng.random_range(-0.1..=0.1));
        let (approx, exact) = (
            expected_yaw_rate(&u, &geom).unwrap(),
            kinematic_yaw_rate(&u, &geom).unwrap(),
        );
        ensure!(
            (exact - approx).abs() <= 0.005 * approx.abs(),
            "small angle at {u:?}: {exact} vs {approx}"
        );
    }
    Ok(format!("5 properties x {N} cases"))
}

/// Seven trials per direction spread symmetrically around the target mean.
fn pull_trials(means: [f64; 3]) -> Vec<PullTrial> {
    let dirs = [
        PullDirection::Lateral,
        PullDirection::Longitudinal,
        PullDirection::Diagonal,
    ];
    let f_normal = 3.5 * G;
    dirs.iter()
        .zip(means)
        .flat_map(|(&direction, m)| {
            (-3..=3).map(move |j| PullTrial {
                direction,
                f_pull: (m + 0.01 * j as f64) * f_normal,
                f_normal,
            })
        })
        .collect()
}

fn c8_pull_test() -> Verdict {
    let mut detail = Vec::new();
    for means in [[0.66, 0.70, 0.72], [1.02, 1.03, 1.04]] {
        let trials = pull_trials(means);
        ensure!(trials.len() == 21, "built {} trials", trials.len());
        let summary = pull_test_mu(&trials).map_err(|e| e.to_string())?;
        let dirs = [
            PullDirection::Lateral,
            PullDirection::Longitudinal,
            PullDirection::Diagonal,
        ];
        for (d, m) in dirs.iter().zip(means) {
            let got = summary.per_direction[d];
            ensure!((got - m).abs() <= 1e-12, "{d:?}: {got} vs {m}");
        }
        let overall = means.iter().sum::<f64>() / 3.0;
        ensure!(
            (summary.overall - overall).abs() <= 1e-12,
            "overall {} vs {overall}",
            summary.overall
        );
        detail.push(format!("overall {:.4}", summary.overall));
    }
    Ok(detail.join(", "))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slipfric"))
}

fn run_ok(cmd: &mut Command) -> Result<Vec<u8>, String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{cmd:?} exited {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

/// Every file under `dir` with its contents, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn simulate_corpus(dir: &Path) -> Result<Vec<PathBuf>, String> {
    let mut paths = Vec::new();
    for (id, s, seed) in labeled_corpus() {
        let p = dir.join(format!("{id}.jsonl"));
        run_ok(
            bin()
                .args(["simulate", "--scenario", s.name(), "--seed", &seed.to_string(), "-o"])
                .arg(&p),
        )?;
        paths.push(p);
    }
    Ok(paths)
}

fn c9_round_trip() -> Verdict {
    // library round trip, including extreme but finite values
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut streams: Vec<Vec<TelemetryRecord>> = Scenario::ALL
        .iter()
        .map(|s| {
            simulate_run(&s.config(&ScenarioParams {
                seed: 9,
                ..Default::default()
            }))
            .unwrap()
        })
        .collect();
    let extremes = [f64::MAX, -f64::MAX, f64::MIN_POSITIVE, 5e-324, -0.0, 1e300, 0.1];
    streams.push(
        (0..200)
            .map(|k| {
                let mut pick = || extremes[rng.random_range(0..extremes.len())];
                TelemetryRecord {
                    t: k as f64 * 0.1,
                    u: ControlAction::new(pick(), 0.25),
                    y: Observation {
                        a_x: pick(),
                        a_y: pick(),
                        v_x: pick(),
                        v_y: pick(),
                        yaw_rate: pick(),
                    },
                    surface: Some("tile \"é\"".to_owned()),
                    slip_label: Some(k % 3 == 0),
                }
            })
            .collect(),
    );
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (i, recs) in streams.iter().enumerate() {
        let header = LogHeader {
            rate_hint: Some(40.0),
            ..Default::default()
        };
        let bytes = to_bytes(Some(&header), recs).map_err(|e| e.to_string())?;
        let back = read_jsonl(bytes.as_slice(), LoadMode::Strict).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("s{i}.jsonl"));
        fs::write(&path, &bytes).unwrap();
        let from_file = load_stream(&path, LoadMode::Strict).map_err(|e| e.to_string())?;
        for loaded in [&back.records, &from_file.records] {
            ensure!(loaded.len() == recs.len(), "stream {i}: length changed");
            for (a, b) in recs.iter().zip(loaded.iter()) {
                let same = a.t.to_bits() == b.t.to_bits()
                    && a.u.v.to_bits() == b.u.v.to_bits()
                    && a.u.delta.to_bits() == b.u.delta.to_bits()
                    && a.y.a_x.to_bits() == b.y.a_x.to_bits()
                    && a.y.a_y.to_bits() == b.y.a_y.to_bits()
                    && a.y.v_x.to_bits() == b.y.v_x.to_bits()
                    && a.y.v_y.to_bits() == b.y.v_y.to_bits()
                    && a.y.yaw_rate.to_bits() == b.y.yaw_rate.to_bits()
                    && a.surface == b.surface
                    && a.slip_label == b.slip_label;
                ensure!(same, "stream {i}: record at t={} changed", a.t);
            }
        }
    }

    // every subcommand twice with the same inputs and seed
    let inputs = dir.path().join("inputs");
    fs::create_dir(&inputs).unwrap();
    let corpus = simulate_corpus(&inputs)?;
    let gt = inputs.join("gt.toml");
    fs::write(&gt, "[mu]\nsim = 0.7\n").unwrap();
    let mut stdouts: Vec<Vec<Vec<u8>>> = Vec::new();
    for round in ["a", "b"] {
        let out = dir.path().join(round);
        fs::create_dir(&out).unwrap();
        let mut stdout = Vec::new();
        for s in Scenario::ALL {
            let p = out.join(format!("sim-{}.jsonl", s.name()));
            stdout.push(run_ok(
                bin()
                    .args(["simulate", "--scenario", s.name(), "--seed", "42", "-o"])
                    .arg(p),
            )?);
        }
        stdout.push(run_ok(
            bin()
                .arg("calibrate")
                .args(&corpus[..4])
                .arg("-o")
                .arg(out.join("cal.toml")),
        )?);
        stdout.push(run_ok(bin().arg("calibrate").args(&corpus[..4]))?);
        stdout.push(run_ok(
            bin()
                .arg("detect")
                .arg(&corpus[0])
                .arg("-o")
                .arg(out.join("detect"))
                .arg("--thresholds")
                .arg(out.join("cal.toml")),
        )?);
        stdout.push(run_ok(
            bin()
                .arg("estimate")
                .args(&corpus[..3])
                .arg("-o")
                .arg(out.join("estimate")),
        )?);
        stdout.push(run_ok(
            bin()
                .arg("evaluate")
                .args(&corpus)
                .arg("--ground-truth")
                .arg(&gt)
                .args(["--seed", "11", "-o"])
                .arg(out.join("evaluate")),
        )?);
        stdouts.push(stdout);
    }
    let (a, b) = (snapshot(&dir.path().join("a")), snapshot(&dir.path().join("b")));
    ensure!(a.keys().eq(b.keys()), "different output file sets");
    for (path, bytes) in &a {
        ensure!(&b[path] == bytes, "{} differs between runs", path.display());
    }
    ensure!(stdouts[0] == stdouts[1], "standard output differs between runs");
    Ok(format!(
        "{} streams bit-exact; {} output files byte-identical across runs",
        streams.len(),
        a.len()
    ))
}

#[derive(serde::Deserialize)]
struct Fold {
    thresholds: Thresholds,
    train_ids: Vec<String>,
    test_ids: Vec<String>,
}

#[derive(serde::Deserialize)]
struct Report {
    folds: Vec<Fold>,
}

#[derive(serde::Deserialize)]
struct Calibration {
    thresholds: Thresholds,
}

fn c10_protocol() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = simulate_corpus(dir.path())?;
    let ids: BTreeSet<String> = corpus.iter().map(|p| p.display().to_string()).collect();
    let out = dir.path().join("eval");
    run_ok(
        bin()
            .arg("evaluate")
            .args(&corpus)
            .args(["-k", "5", "--no-plots", "-o"])
            .arg(&out),
    )?;
    let text = fs::read_to_string(out.join("evaluate.toml")).map_err(|e| e.to_string())?;
    let report: Report = toml::from_str(&text).map_err(|e| e.to_string())?;
    ensure!(report.folds.len() == 5, "{} folds", report.folds.len());

    let mut tested: BTreeMap<&str, usize> = BTreeMap::new();
    for (f, fold) in report.folds.iter().enumerate() {
        let train: BTreeSet<&str> = fold.train_ids.iter().map(String::as_str).collect();
        ensure!(train.len() == 16, "fold {f}: {} training streams", train.len());
        for id in &fold.test_ids {
            ensure!(!train.contains(id.as_str()), "fold {f}: {id} in both train and test");
            *tested.entry(id).or_default() += 1;
        }
        ensure!(
            train
                .iter()
                .chain(fold.test_ids.iter().map(|s| s.as_str()).collect::<Vec<_>>().iter())
                .count()
                == 20,
            "fold {f}: train and test do not cover the corpus"
        );
        // thresholds must equal a standalone calibration on the training ids
        let cal = run_ok(bin().arg("calibrate").args(&fold.train_ids))?;
        let cal: Calibration = toml::from_str(&String::from_utf8_lossy(&cal)).map_err(|e| e.to_string())?;
        ensure!(
            cal.thresholds == fold.thresholds,
            "fold {f}: thresholds not from its training streams"
        );
    }
    ensure!(
        tested.len() == 20 && tested.values().all(|&n| n == 1),
        "test coverage {tested:?}"
    );
    ensure!(tested.keys().all(|id| ids.contains(*id)), "unknown stream id in report");
    Ok("20 streams each tested once; every fold calibrated on its 16 training streams only".to_owned())
}
