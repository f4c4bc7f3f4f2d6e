//! Domain types shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity used when no override is configured [m/s²].
pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Fixed geometry of the single-track model.
///
/// The wheelbase is stored alongside the axle distances and always equals
/// `l_f + l_r`; construction is the only way to obtain a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VehicleGeometry {
    l_f: f64,
    l_r: f64,
    l_w: f64,
    r_e: f64,
    mass: f64,
}

impl VehicleGeometry {
    pub fn new(l_f: f64, l_r: f64, r_e: f64, mass: f64) -> Result<Self> {
        for (name, value) in [("l_f", l_f), ("l_r", l_r), ("r_e", r_e), ("mass", mass)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::domain(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        Ok(Self {
            l_f,
            l_r,
            l_w: l_f + l_r,
            r_e,
            mass,
        })
    }

    /// CoM to front axle [m].
    pub fn l_f(&self) -> f64 {
        self.l_f
    }

    /// CoM to rear axle [m].
    pub fn l_r(&self) -> f64 {
        self.l_r
    }

    /// Wheelbase [m].
    pub fn wheelbase(&self) -> f64 {
        self.l_w
    }

    /// Effective tire radius [m].
    pub fn r_e(&self) -> f64 {
        self.r_e
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
}

impl Default for VehicleGeometry {
    /// A 1:10-scale racing car: 0.33 m wheelbase, CoM centred.
    fn default() -> Self {
        Self::new(0.165, 0.165, 0.05, 3.5).expect("default geometry is valid")
    }
}

#[derive(Deserialize)]
struct GeometryRepr {
    l_f: f64,
    l_r: f64,
    r_e: f64,
    mass: f64,
}

impl<'de> Deserialize<'de> for VehicleGeometry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let g = GeometryRepr::deserialize(d)?;
        VehicleGeometry::new(g.l_f, g.l_r, g.r_e, g.mass).map_err(serde::de::Error::custom)
    }
}

/// Commanded motion: longitudinal speed [m/s] and steering angle [rad].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlAction {
    pub v: f64,
    pub delta: f64,
}

impl ControlAction {
    pub fn new(v: f64, delta: f64) -> Self {
        Self { v, delta }
    }
}

/// Measured (fused) vehicle state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    /// Longitudinal acceleration [m/s²].
    pub a_x: f64,
    /// Lateral acceleration [m/s²].
    pub a_y: f64,
    /// Longitudinal velocity [m/s].
    pub v_x: f64,
    /// Lateral velocity [m/s].
    pub v_y: f64,
    /// Yaw rate [rad/s].
    pub yaw_rate: f64,
}

impl Observation {
    pub fn is_finite(&self) -> bool {
        [self.a_x, self.a_y, self.v_x, self.v_y, self.yaw_rate]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// One time-stamped telemetry sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub t: f64,
    pub u: ControlAction,
    pub y: Observation,
    pub surface: Option<String>,
    pub slip_label: Option<bool>,
}

impl TelemetryRecord {
    pub fn new(t: f64, u: ControlAction, y: Observation) -> Self {
        Self {
            t,
            u,
            y,
            surface: None,
            slip_label: None,
        }
    }

    pub fn with_surface(mut self, surface: impl Into<String>) -> Self {
        self.surface = Some(surface.into());
        self
    }

    pub fn with_label(mut self, slip: bool) -> Self {
        self.slip_label = Some(slip);
        self
    }
}

/// Checks that timestamps are finite and strictly increasing.
pub fn check_ordered<'a>(times: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    let mut previous = f64::NEG_INFINITY;
    for (index, &t) in times.into_iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::domain(format!("timestamp at index {index} is not finite")));
        }
        if t <= previous {
            return Err(Error::Ordering { index, previous, t });
        }
        previous = t;
    }
    Ok(())
}

/// Kinematic state of a tire centre.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TireState {
    /// Longitudinal velocity of the tire centre [m/s].
    pub v_wx: f64,
    /// Lateral velocity of the tire centre [m/s].
    pub v_wy: f64,
    /// Wheel angular velocity [rad/s].
    pub omega: f64,
}

/// Planar force with its normal component [N].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanarForce {
    pub f_x: f64,
    pub f_y: f64,
    pub f_z: f64,
}

/// Planar pose (x, y, heading).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self { x, y, psi }
    }
}
