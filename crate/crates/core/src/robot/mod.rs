//! Planar two-link workcell plant.
//!
//! The arm is kinematic (velocity-resolved): the admittance output is mapped
//! through inverse kinematics and the joints follow it under a velocity
//! limit. Gravity compensation torques are still computed every tick as a
//! telemetry channel and to size the load an operator would otherwise carry.

mod kinematics;
mod trajectory;
mod world;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kinematics::{
    end_effector_force_for_torque, forward_kinematics, gravity_compensation, inverse_kinematics,
    jacobian, wrap_angle, Elbow, Vec2,
};
pub use trajectory::{plan_min_jerk, DesiredTrajectory};
pub use world::{
    sense_contact, simulate_tick, GripAction, TickInputs, TickOutcome, WorldEvent, WorldObject,
    WorldState,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobotError {
    #[error("target ({}, {}) outside the reachable annulus", target[0], target[1])]
    Unreachable { target: Vec2 },
    #[error("trajectory duration must be positive, got {0}")]
    Duration(f64),
    #[error("invalid robot configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Admittance(#[from] crate::admittance::AdmittanceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    /// m
    pub link_lengths: Vec2,
    /// kg
    pub link_masses: Vec2,
    /// m/s², acting along −y
    pub gravity: f64,
    /// kg carried at the end effector in addition to any grasped object
    pub payload_mass: f64,
    /// rad/s per joint
    pub joint_velocity_limit: f64,
    /// m
    pub probe_radius: f64,
    /// N/m
    pub contact_stiffness: f64,
    pub elbow: Elbow,
    /// When disabled, the operator carries the static load while guiding.
    pub gravity_compensation: bool,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            link_lengths: [0.5, 0.5],
            link_masses: [2.0, 2.0],
            gravity: 9.81,
            payload_mass: 0.0,
            joint_velocity_limit: 2.0,
            probe_radius: 0.02,
            contact_stiffness: 2000.0,
            elbow: Elbow::Down,
            gravity_compensation: true,
        }
    }
}

impl RobotConfig {
    pub fn validate(&self) -> Result<(), RobotError> {
        let bad = |m: &str| Err(RobotError::Config(m.to_owned()));
        if !self.link_lengths.iter().all(|l| *l > 0.0 && l.is_finite()) {
            return bad("link lengths must be positive");
        }
        if !self.link_masses.iter().all(|m| *m > 0.0 && m.is_finite()) {
            return bad("link masses must be positive");
        }
        if !(self.payload_mass >= 0.0 && self.payload_mass.is_finite()) {
            return bad("payload mass must be non-negative");
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return bad("gravity must be non-negative");
        }
        if !(self.joint_velocity_limit > 0.0 && self.joint_velocity_limit.is_finite()) {
            return bad("joint velocity limit must be positive");
        }
        if !(self.probe_radius >= 0.0 && self.probe_radius.is_finite()) {
            return bad("probe radius must be non-negative");
        }
        if !(self.contact_stiffness >= 0.0 && self.contact_stiffness.is_finite()) {
            return bad("contact stiffness must be non-negative");
        }
        Ok(())
    }

    pub fn reach(&self) -> (f64, f64) {
        let [l1, l2] = self.link_lengths;
        ((l1 - l2).abs(), l1 + l2)
    }

    pub fn is_reachable(&self, p: Vec2) -> bool {
        let (lo, hi) = self.reach();
        let r = p[0].hypot(p[1]);
        r.is_finite() && r >= lo && r <= hi
    }
}
