//! Single-track kinematics, tire slip quantities, and traction.
//!
//! Everything here is a pure function of its arguments.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::types::{ControlAction, Observation, PlanarForce, Pose, TireState, VehicleGeometry};

fn finite(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::domain(format!("{name} is not finite")))
    }
}

fn steering(delta: f64) -> Result<f64> {
    finite("delta", delta)?;
    if delta.abs() >= FRAC_PI_2 {
        return Err(Error::domain(format!("|delta| must be < pi/2, got {delta}")));
    }
    Ok(delta)
}

/// Geometric slip angle of the CoM velocity, `atan(l_r / l_w * tan(delta))`.
pub fn geometric_slip_angle(delta: f64, geom: &VehicleGeometry) -> Result<f64> {
    let delta = steering(delta)?;
    Ok((geom.l_r() / (geom.l_f() + geom.l_r()) * delta.tan()).atan())
}

/// Yaw rate implied by the commanded inputs, `v * tan(delta) / l_w`.
///
/// This is the small-angle form used by the detector. The exact kinematic
/// yaw rate `v / l_r * sin(beta)` agrees with it only to first order in
/// `delta`; see [`kinematic_yaw_rate`].
pub fn expected_yaw_rate(u: &ControlAction, geom: &VehicleGeometry) -> Result<f64> {
    let v = finite("v", u.v)?;
    let delta = steering(u.delta)?;
    Ok(v * delta.tan() / geom.wheelbase())
}

/// Exact yaw rate of the single-track model, `v / l_r * sin(beta)`.
pub fn kinematic_yaw_rate(u: &ControlAction, geom: &VehicleGeometry) -> Result<f64> {
    let v = finite("v", u.v)?;
    let beta = geometric_slip_angle(u.delta, geom)?;
    Ok(v / geom.l_r() * beta.sin())
}

/// One explicit-Euler step of the kinematic bicycle model.
pub fn kinematic_step(pose: Pose, u: &ControlAction, geom: &VehicleGeometry, dt: f64) -> Result<Pose> {
    finite("dt", dt)?;
    if dt <= 0.0 {
        return Err(Error::domain(format!("dt must be > 0, got {dt}")));
    }
    for (name, value) in [("x", pose.x), ("y", pose.y), ("psi", pose.psi), ("v", u.v)] {
        finite(name, value)?;
    }
    let beta = geometric_slip_angle(u.delta, geom)?;
    let course = pose.psi + beta;
    Ok(Pose {
        x: pose.x + u.v * course.cos() * dt,
        y: pose.y + u.v * course.sin() * dt,
        psi: pose.psi + u.v / geom.l_r() * beta.sin() * dt,
    })
}

/// Longitudinal slip ratio `(r_e*omega - v_wx) / max(r_e*omega, v_wx)`.
pub fn slip_ratio(w: &TireState, r_e: f64) -> Result<f64> {
    finite("v_wx", w.v_wx)?;
    finite("omega", w.omega)?;
    finite("r_e", r_e)?;
    let circumferential = r_e * w.omega;
    let denom = circumferential.max(w.v_wx);
    if denom <= 0.0 || circumferential < 0.0 || w.v_wx < 0.0 {
        return Err(Error::UndefinedSlip(format!(
            "slip ratio needs non-negative speeds, not both zero (r_e*omega={circumferential}, v_wx={})",
            w.v_wx
        )));
    }
    Ok((circumferential - w.v_wx) / denom)
}

/// Tire slip angle `atan(v_wy / v_wx)`.
pub fn slip_angle(w: &TireState) -> Result<f64> {
    finite("v_wx", w.v_wx)?;
    finite("v_wy", w.v_wy)?;
    if w.v_wx <= 0.0 {
        return Err(Error::UndefinedSlip(format!(
            "slip angle needs v_wx > 0, got {}",
            w.v_wx
        )));
    }
    Ok((w.v_wy / w.v_wx).atan())
}

/// Pure rolling up to `tol` on both slip ratio and slip angle.
pub fn is_pure_rolling(w: &TireState, r_e: f64, tol: f64) -> Result<bool> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::domain(format!("tolerance must be >= 0, got {tol}")));
    }
    let kappa = slip_ratio(w, r_e)?;
    let alpha = slip_angle(w)?;
    Ok(kappa.abs() <= tol && alpha.abs() <= tol)
}

/// Normalized traction `|(F_x, F_y)| / F_z`.
pub fn traction_coefficient(f: &PlanarForce) -> Result<f64> {
    finite("f_x", f.f_x)?;
    finite("f_y", f.f_y)?;
    finite("f_z", f.f_z)?;
    if f.f_z <= 0.0 {
        return Err(Error::domain(format!("normal force must be > 0, got {}", f.f_z)));
    }
    Ok(f.f_x.hypot(f.f_y) / f.f_z)
}

/// Traction coefficient from planar accelerations, with `F = m a` and
/// `F_z = m g`; the mass cancels.
pub fn accel_traction(a_x: f64, a_y: f64, g: f64) -> f64 {
    a_x.hypot(a_y) / g
}

/// [`accel_traction`] applied to a measurement.
pub fn traction_from_accel(y: &Observation, g: f64) -> Result<f64> {
    finite("a_x", y.a_x)?;
    finite("a_y", y.a_y)?;
    finite("g", g)?;
    if g <= 0.0 {
        return Err(Error::domain(format!("g must be > 0, got {g}")));
    }
    Ok(accel_traction(y.a_x, y.a_y, g))
}
