//! Friction-limited single-track simulator producing labeled telemetry with
//! a known friction coefficient.
//!
//! Each step demands a longitudinal acceleration from a proportional speed
//! controller and a lateral acceleration from the kinematic yaw rate. While
//! the demand lies inside the friction circle of radius `mu * g` the vehicle
//! follows the kinematic model exactly. Outside it the demand is scaled
//! radially onto the circle, the yaw rate drops by the same factor as the
//! lateral acceleration, the unrealized lateral acceleration feeds a lateral
//! velocity that relaxes with a first-order time constant, and the sample
//! is labeled as slipping.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{accel_traction, expected_yaw_rate};
use crate::par;
use crate::types::{ControlAction, Observation, TelemetryRecord, VehicleGeometry, DEFAULT_GRAVITY};

/// Standard deviations of the additive measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// [m/s²], applied to both accelerations.
    pub sigma_accel: f64,
    /// [m/s], applied to both velocities.
    pub sigma_vel: f64,
    /// [rad/s]
    pub sigma_yaw_rate: f64,
}

impl NoiseSpec {
    pub const fn none() -> Self {
        Self {
            sigma_accel: 0.0,
            sigma_vel: 0.0,
            sigma_yaw_rate: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_accel == 0.0 && self.sigma_vel == 0.0 && self.sigma_yaw_rate == 0.0
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_accel: 0.05,
            sigma_vel: 0.02,
            sigma_yaw_rate: 0.01,
        }
    }
}

/// Command held from `start` until the next segment begins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub command: ControlAction,
}

/// Change of road surface from `start` onwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePatch {
    pub start: f64,
    pub mu: f64,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub geom: VehicleGeometry,
    /// Friction coefficient of the initial surface.
    pub mu_true: f64,
    /// Tag of the initial surface.
    pub surface: String,
    pub surface_changes: Vec<SurfacePatch>,
    /// Sample period [s].
    pub dt: f64,
    /// [s]
    pub duration: f64,
    /// Proportional speed-controller gain [1/s].
    pub speed_gain: f64,
    /// Lateral-velocity relaxation time constant [s].
    pub relaxation_time: f64,
    pub noise: NoiseSpec,
    pub maneuver: Vec<Segment>,
    /// Initial longitudinal speed; defaults to the first commanded speed.
    pub initial_speed: Option<f64>,
    pub seed: u64,
    pub g: f64,
}

impl SimConfig {
    /// Defaults: 40 Hz, 30 s, gain 2.0 /s, relaxation 0.3 s, default noise.
    pub fn new(mu_true: f64, maneuver: Vec<Segment>) -> Self {
        Self {
            geom: VehicleGeometry::default(),
            mu_true,
            surface: "sim".into(),
            surface_changes: Vec::new(),
            dt: 1.0 / 40.0,
            duration: 30.0,
            speed_gain: 2.0,
            relaxation_time: 0.3,
            noise: NoiseSpec::default(),
            maneuver,
            initial_speed: None,
            seed: 0,
            g: DEFAULT_GRAVITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("mu_true", self.mu_true)?;
        positive("speed_gain", self.speed_gain)?;
        positive("relaxation_time", self.relaxation_time)?;
        positive("g", self.g)?;
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return Err(Error::Config(format!("duration must be >= dt, got {}", self.duration)));
        }
        for (name, s) in [
            ("sigma_accel", self.noise.sigma_accel),
            ("sigma_vel", self.noise.sigma_vel),
            ("sigma_yaw_rate", self.noise.sigma_yaw_rate),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {s}")));
            }
        }
        if self.maneuver.is_empty() {
            return Err(Error::Config("maneuver has no segments".into()));
        }
        if self.maneuver.windows(2).any(|w| w[1].start <= w[0].start) {
            return Err(Error::Config("maneuver segments must start in increasing order".into()));
        }
        for s in &self.maneuver {
            if !(s.start.is_finite() && s.command.v.is_finite() && s.command.delta.is_finite()) {
                return Err(Error::Config("maneuver contains non-finite values".into()));
            }
            if s.command.delta.abs() >= std::f64::consts::FRAC_PI_2 {
                return Err(Error::Config(format!(
                    "steering {} outside (-pi/2, pi/2)",
                    s.command.delta
                )));
            }
        }
        if self.surface_changes.windows(2).any(|w| w[1].start <= w[0].start) {
            return Err(Error::Config("surface changes must start in increasing order".into()));
        }
        for p in &self.surface_changes {
            positive("surface mu", p.mu)?;
        }
        if let Some(v) = self.initial_speed {
            if !v.is_finite() {
                return Err(Error::Config("initial speed is not finite".into()));
            }
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize + 1
    }

    fn command_at(&self, t: f64) -> ControlAction {
        self.maneuver
            .iter()
            .rev()
            .find(|s| s.start <= t)
            .unwrap_or(&self.maneuver[0])
            .command
    }

    fn surface_at(&self, t: f64) -> (f64, &str) {
        self.surface_changes
            .iter()
            .rev()
            .find(|p| p.start <= t)
            .map_or((self.mu_true, self.surface.as_str()), |p| (p.mu, p.tag.as_str()))
    }
}

/// Acceleration actually transmitted at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Realized {
    pub a_x: f64,
    pub a_y: f64,
    pub yaw_rate: f64,
    pub slipping: bool,
}

/// Clips the demanded acceleration to the friction circle of radius `mu * g`.
///
/// A saturated result never has a traction coefficient above `mu`, so the
/// estimator's target is an exact upper bound.
pub fn friction_limit(a_x_dem: f64, a_y_dem: f64, kinematic_yaw_rate: f64, mu: f64, g: f64) -> Realized {
    let limit = mu * g;
    let demand = a_x_dem.hypot(a_y_dem);
    if demand <= limit {
        return Realized {
            a_x: a_x_dem,
            a_y: a_y_dem,
            yaw_rate: kinematic_yaw_rate,
            slipping: false,
        };
    }
    let scale = limit / demand;
    let (mut a_x, mut a_y) = (a_x_dem * scale, a_y_dem * scale);
    while accel_traction(a_x, a_y, g) > mu {
        a_x *= 1.0 - f64::EPSILON;
        a_y *= 1.0 - f64::EPSILON;
    }
    let yaw_rate = if a_y_dem != 0.0 {
        kinematic_yaw_rate * (a_y / a_y_dem)
    } else {
        kinematic_yaw_rate
    };
    Realized {
        a_x,
        a_y,
        yaw_rate,
        slipping: true,
    }
}

/// Noise for step `step`: a ChaCha8 generator seeded with `seed` and
/// switched to stream `step`, sampled with the ziggurat standard normal of
/// `rand_distr`. Depends on nothing but `(seed, step)`.
fn step_noise(seed: u64, step: usize) -> [f64; 5] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    std::array::from_fn(|_| rng.sample(StandardNormal))
}

/// Runs the simulator. Records carry slip labels and surface tags.
pub fn simulate_run(cfg: &SimConfig) -> Result<Vec<TelemetryRecord>> {
    cfg.validate()?;
    let geom = &cfg.geom;
    let mut v_x = cfg.initial_speed.unwrap_or(cfg.maneuver[0].command.v);
    let mut v_y = 0.0_f64;
    let n = cfg.steps();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * cfg.dt;
        let u = cfg.command_at(t);
        let (mu, tag) = cfg.surface_at(t);

        let a_x_dem = cfg.speed_gain * (u.v - v_x);
        let yaw_kin = expected_yaw_rate(&ControlAction::new(v_x, u.delta), geom)?;
        let a_y_dem = v_x * yaw_kin;
        let real = friction_limit(a_x_dem, a_y_dem, yaw_kin, mu, cfg.g);

        let truth = Observation {
            a_x: real.a_x,
            a_y: real.a_y,
            v_x,
            v_y,
            yaw_rate: real.yaw_rate,
        };
        let y = if cfg.noise.is_zero() {
            truth
        } else {
            let z = step_noise(cfg.seed, k);
            let s = &cfg.noise;
            Observation {
                a_x: truth.a_x + s.sigma_accel * z[0],
                a_y: truth.a_y + s.sigma_accel * z[1],
                v_x: truth.v_x + s.sigma_vel * z[2],
                v_y: truth.v_y + s.sigma_vel * z[3],
                yaw_rate: truth.yaw_rate + s.sigma_yaw_rate * z[4],
            }
        };
        out.push(TelemetryRecord {
            t,
            u,
            y,
            surface: Some(tag.to_owned()),
            slip_label: Some(real.slipping),
        });

        v_y += ((a_y_dem - real.a_y) - v_y / cfg.relaxation_time) * cfg.dt;
        v_x += real.a_x * cfg.dt;
    }
    Ok(out)
}

/// Runs independent simulations in parallel, preserving order.
pub fn simulate_batch(configs: &[SimConfig]) -> Result<Vec<Vec<TelemetryRecord>>> {
    par::try_map(configs, simulate_run)
}

/// Named maneuvers used for end-to-end checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Straight driving with a gentle sub-limit corner; never slips.
    Cruise,
    /// Two corners, each ramped up to just inside the limit and then pushed
    /// well beyond it.
    DriftTurn,
    /// A speed step far beyond what the friction limit can deliver.
    HardLaunch,
    /// A drift turn on each of two surfaces with different friction.
    TwoSurface,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Cruise,
        Scenario::DriftTurn,
        Scenario::HardLaunch,
        Scenario::TwoSurface,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Cruise => "cruise",
            Scenario::DriftTurn => "drift-turn",
            Scenario::HardLaunch => "hard-launch",
            Scenario::TwoSurface => "two-surface",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(Scenario::name).collect()
    }

    pub fn config(&self, p: &ScenarioParams) -> SimConfig {
        let g = p.g;
        let geom = p.geom;
        let steer = |v: f64, a_lat: f64| (a_lat * geom.wheelbase() / (v * v)).atan();
        let mut maneuver = Vec::new();
        let mut changes = Vec::new();
        let mut surface = "sim".to_string();
        match self {
            Scenario::Cruise => {
                let v = CORNER_SPEED;
                maneuver.push(Segment {
                    start: 0.0,
                    command: ControlAction::new(v, 0.0),
                });
                maneuver.push(Segment {
                    start: 10.0,
                    command: ControlAction::new(v, steer(v, 0.3 * p.mu * g)),
                });
                maneuver.push(Segment {
                    start: 20.0,
                    command: ControlAction::new(v, 0.0),
                });
            }
            Scenario::DriftTurn => {
                maneuver.push(Segment {
                    start: 0.0,
                    command: ControlAction::new(CORNER_SPEED, 0.0),
                });
                drift_corner(&mut maneuver, 5.0, 2.0, p.mu * g, 1.0, &steer);
                drift_corner(&mut maneuver, 18.0, 2.0, p.mu * g, -1.0, &steer);
            }
            Scenario::HardLaunch => {
                maneuver.push(Segment {
                    start: 0.0,
                    command: ControlAction::new(LAUNCH_FROM, 0.0),
                });
                maneuver.push(Segment {
                    start: 5.0,
                    command: ControlAction::new(LAUNCH_TO, 0.0),
                });
            }
            Scenario::TwoSurface => {
                surface = p.first_surface.clone();
                maneuver.push(Segment {
                    start: 0.0,
                    command: ControlAction::new(CORNER_SPEED, 0.0),
                });
                drift_corner(&mut maneuver, 3.0, 1.0, p.mu * g, 1.0, &steer);
                changes.push(SurfacePatch {
                    start: 15.0,
                    mu: p.second_mu,
                    tag: p.second_surface.clone(),
                });
                drift_corner(&mut maneuver, 18.0, 1.0, p.second_mu * g, -1.0, &steer);
            }
        }
        SimConfig {
            geom,
            mu_true: p.mu,
            surface,
            surface_changes: changes,
            dt: 1.0 / p.rate,
            duration: p.duration,
            noise: p.noise,
            maneuver,
            seed: p.seed,
            g,
            ..SimConfig::new(p.mu, Vec::new())
        }
    }
}

const CORNER_SPEED: f64 = 3.0;
const LAUNCH_FROM: f64 = 1.0;
const LAUNCH_TO: f64 = 7.0;
/// Fraction of the limit held just before a corner is pushed past it.
const SUBLIMIT_FRACTION: f64 = 0.99;
/// Lateral demand, as a multiple of the limit, while drifting.
const DRIFT_DEMAND: f64 = 1.6;

/// Appends a corner starting at `start`: a 2 s staircase of lateral demand
/// up to just inside the limit, a 3 s hold, a drift of `drift` seconds, then
/// straight.
fn drift_corner(
    maneuver: &mut Vec<Segment>,
    start: f64,
    drift: f64,
    limit: f64,
    side: f64,
    steer: &dyn Fn(f64, f64) -> f64,
) {
    let v = CORNER_SPEED;
    const STAIRS: usize = 10;
    for i in 1..=STAIRS {
        let a = limit * SUBLIMIT_FRACTION * i as f64 / STAIRS as f64;
        maneuver.push(Segment {
            start: start + 0.2 * (i - 1) as f64,
            command: ControlAction::new(v, side * steer(v, a)),
        });
    }
    maneuver.push(Segment {
        start: start + 5.0,
        command: ControlAction::new(v, side * steer(v, limit * DRIFT_DEMAND)),
    });
    maneuver.push(Segment {
        start: start + 5.0 + drift,
        command: ControlAction::new(v, 0.0),
    });
}

/// Knobs for [`Scenario::config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Friction of the (first) surface.
    pub mu: f64,
    /// Friction after the switch in the two-surface scenario.
    pub second_mu: f64,
    pub first_surface: String,
    pub second_surface: String,
    /// Sample rate [Hz].
    pub rate: f64,
    pub duration: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub g: f64,
    pub geom: VehicleGeometry,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            mu: 0.7,
            second_mu: 1.0,
            first_surface: "tile".into(),
            second_surface: "cardboard".into(),
            rate: 40.0,
            duration: 30.0,
            noise: NoiseSpec::default(),
            seed: 0,
            g: DEFAULT_GRAVITY,
            geom: VehicleGeometry::default(),
        }
    }
}

/// Every named scenario with default parameters.
pub fn standard_scenarios() -> BTreeMap<&'static str, SimConfig> {
    let p = ScenarioParams::default();
    Scenario::ALL.iter().map(|s| (s.name(), s.config(&p))).collect()
}
