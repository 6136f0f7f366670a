//! Fixed-timestep point-mass model of one tabletop robot.
//!
//! The robot integrates the superposition of the hand force (only while
//! grasped) and the haptic force against viscous damping, with a speed cap
//! and hard walls at the sheet edges.

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::zone_map::ZoneMap;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotPose {
    pub p: Vec2,
    pub theta_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: RobotPose,
    /// Velocity in mm/s.
    pub v: Vec2,
    pub omega_rad_s: f64,
    pub grasped: bool,
}

impl RobotState {
    /// At rest at `p`, heading 0, held by the user.
    pub fn at(p: Vec2) -> Self {
        Self {
            pose: RobotPose { p, theta_rad: 0.0 },
            v: Vec2::ZERO,
            omega_rad_s: 0.0,
            grasped: true,
        }
    }

    pub fn position(&self) -> Vec2 {
        self.pose.p
    }

    pub fn kinetic_energy(&self, params: &DynamicsParams) -> f64 {
        0.5 * params.mass_eq * self.v.norm_sq()
    }

    pub fn is_finite(&self) -> bool {
        self.pose.p.is_finite() && self.pose.theta_rad.is_finite() && self.v.is_finite() && self.omega_rad_s.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    /// Equivalent mass, force-units·s²/mm.
    pub mass_eq: f64,
    /// Viscous damping, force-units·s/mm.
    pub damping: f64,
    /// Speed cap, mm/s.
    pub v_max: f64,
    /// Tick length, seconds.
    pub dt_s: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            mass_eq: 0.01,
            damping: 0.08,
            v_max: 185.0,
            dt_s: 0.01,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("mass_eq", self.mass_eq),
            ("damping", self.damping),
            ("v_max", self.v_max),
            ("dt_s", self.dt_s),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(format!("dynamics parameter {name} must be finite and > 0, got {value}"));
            }
        }
        // Past this ratio the damping term overshoots and the free robot
        // gains energy every tick.
        let ratio = self.dt_s * self.damping / self.mass_eq;
        if ratio > 2.0 {
            return Err(format!("dt_s * damping / mass_eq must be <= 2 for a stable step, got {ratio}"));
        }
        Ok(())
    }

    /// Tick length in whole milliseconds.
    pub fn dt_ms(&self) -> u64 {
        (self.dt_s * 1000.0).round() as u64
    }
}

fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let t = (theta + PI).rem_euclid(TAU) - PI;
    if t == -PI {
        PI
    } else {
        t
    }
}

/// Advances one tick with semi-implicit Euler.
///
/// A released robot ignores `f_user` but still responds to `f_haptic`.
pub fn step(state: &RobotState, f_user: Vec2, f_haptic: Vec2, params: &DynamicsParams, map: &ZoneMap) -> RobotState {
    let dt = params.dt_s;
    let f_user = if state.grasped { f_user } else { Vec2::ZERO };
    let net = f_user + f_haptic - state.v * params.damping;
    let mut v = (state.v + net * (dt / params.mass_eq)).clamp_norm(params.v_max);
    let mut p = state.pose.p + v * dt;

    if p.x_mm < 0.0 {
        p.x_mm = 0.0;
        v.x_mm = v.x_mm.max(0.0);
    } else if p.x_mm > map.width_mm() {
        p.x_mm = map.width_mm();
        v.x_mm = v.x_mm.min(0.0);
    }
    if p.y_mm < 0.0 {
        p.y_mm = 0.0;
        v.y_mm = v.y_mm.max(0.0);
    } else if p.y_mm > map.height_mm() {
        p.y_mm = map.height_mm();
        v.y_mm = v.y_mm.min(0.0);
    }

    let theta_rad = if state.omega_rad_s == 0.0 {
        state.pose.theta_rad
    } else {
        wrap_angle(state.pose.theta_rad + state.omega_rad_s * dt)
    };

    RobotState {
        pose: RobotPose { p, theta_rad },
        v,
        omega_rad_s: state.omega_rad_s,
        grasped: state.grasped,
    }
}
