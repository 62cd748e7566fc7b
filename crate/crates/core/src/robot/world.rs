use serde::{Deserialize, Serialize};

use super::kinematics::{forward_kinematics, inverse_kinematics, wrap_angle, Vec2};
use super::trajectory::DesiredTrajectory;
use super::{RobotConfig, RobotError};
use crate::admittance::{step_toward, AdmittanceParams, ComplianceState, Integrator};
use crate::arbitration::ControlInput;

/// Joint steps below this are treated as no motion (encoder resolution).
const JOINT_DEADBAND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldObject {
    pub id: String,
    /// m
    pub position: Vec2,
    /// m
    pub radius: f64,
    /// kg
    pub mass: f64,
    #[serde(default)]
    pub grasped: bool,
    /// Set on release; contact stays off until the probe has cleared the object.
    #[serde(default)]
    pub contact_suppressed: bool,
}

impl WorldObject {
    pub fn new(id: &str, position: Vec2, radius: f64, mass: f64) -> Self {
        Self {
            id: id.to_owned(),
            position,
            radius,
            mass,
            grasped: false,
            contact_suppressed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    /// rad
    pub q: Vec2,
    /// rad/s
    pub q_dot: Vec2,
    /// m, always `forward_kinematics(q)`
    pub end_effector: Vec2,
    pub objects: Vec<WorldObject>,
    /// s
    pub time: f64,
}

impl WorldState {
    pub fn new(config: &RobotConfig, q: Vec2, objects: Vec<WorldObject>) -> Self {
        Self {
            q,
            q_dot: [0.0; 2],
            end_effector: forward_kinematics(config, q),
            objects,
            time: 0.0,
        }
    }

    pub fn grasped(&self) -> Option<&WorldObject> {
        self.objects.iter().find(|o| o.grasped)
    }

    /// Configured payload plus the grasped object.
    pub fn payload_mass(&self, config: &RobotConfig) -> f64 {
        config.payload_mass + self.grasped().map_or(0.0, |o| o.mass)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum GripAction {
    Grasp { object: Option<String> },
    Release,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum WorldEvent {
    Unreachable { target: Vec2 },
    Grasped { object: String },
    GraspFailed { reason: String },
    Released { object: String },
    ReleaseIgnored,
}

/// Penalty force on a probe of `probe_radius` at `probe` from every
/// non-grasped object it overlaps: `k·penetration` along the separation normal.
pub fn sense_contact(objects: &[WorldObject], probe: Vec2, probe_radius: f64, stiffness: f64) -> Vec2 {
    let mut force = [0.0; 2];
    for obj in objects.iter().filter(|o| !o.grasped && !o.contact_suppressed) {
        let delta = [probe[0] - obj.position[0], probe[1] - obj.position[1]];
        let dist = delta[0].hypot(delta[1]);
        let penetration = obj.radius + probe_radius - dist;
        if penetration <= 0.0 {
            continue;
        }
        // coincident centres push along +x
        let normal = if dist > 0.0 {
            [delta[0] / dist, delta[1] / dist]
        } else {
            [1.0, 0.0]
        };
        force[0] += stiffness * penetration * normal[0];
        force[1] += stiffness * penetration * normal[1];
    }
    force
}

pub struct TickInputs<'a> {
    /// Arbitrated wrench command.
    pub command: &'a ControlInput,
    pub params: &'a AdmittanceParams,
    pub integrator: Integrator,
    pub trajectory: &'a DesiredTrajectory,
    pub action: Option<GripAction>,
    /// Multiplier on the joint velocity limit.
    pub speed_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub world: WorldState,
    pub compliance: ComplianceState,
    pub contact_force: Vec2,
    pub events: Vec<WorldEvent>,
}

/// One deterministic plant update: desired motion, contact sensing,
/// admittance step, inverse kinematics, velocity-limited joint motion,
/// grasp/release, time advance.
pub fn simulate_tick(
    config: &RobotConfig,
    world: &WorldState,
    compliance: &ComplianceState,
    inputs: TickInputs<'_>,
    dt: f64,
) -> Result<TickOutcome, RobotError> {
    let time = world.time + dt;
    let (x_d, v_d) = inputs.trajectory.evaluate(time);
    let contact = sense_contact(
        &world.objects,
        world.end_effector,
        config.probe_radius,
        config.contact_stiffness,
    );
    let cmd = inputs.command.values();
    if cmd.len() != 2 {
        return Err(RobotError::Config(format!(
            "command dimension {} on a planar arm",
            cmd.len()
        )));
    }
    let mut sensed = compliance.clone();
    sensed.f_ext = vec![contact[0] + cmd[0], contact[1] + cmd[1]];
    let compliance = step_toward(
        inputs.params,
        inputs.integrator,
        &sensed,
        x_d.to_vec(),
        v_d.to_vec(),
        dt,
    )?;

    let mut events = Vec::new();
    let mut next = world.clone();
    next.time = time;
    let target = [compliance.x_c[0], compliance.x_c[1]];
    match inverse_kinematics(config, target, config.elbow) {
        Ok(q_target) => {
            let max_step = config.joint_velocity_limit * inputs.speed_scale * dt;
            for i in 0..2 {
                let mut delta = wrap_angle(q_target[i] - world.q[i]);
                if delta.abs() <= JOINT_DEADBAND {
                    delta = 0.0;
                }
                let delta = delta.clamp(-max_step, max_step);
                next.q[i] = world.q[i] + delta;
                next.q_dot[i] = delta / dt;
            }
        }
        Err(_) => {
            next.q_dot = [0.0; 2];
            events.push(WorldEvent::Unreachable { target });
        }
    }
    next.end_effector = forward_kinematics(config, next.q);

    match inputs.action {
        Some(GripAction::Grasp { object }) => events.push(grasp(config, &mut next, object.as_deref())),
        Some(GripAction::Release) => events.push(release(&mut next)),
        None => {}
    }

    let ee = next.end_effector;
    for obj in &mut next.objects {
        if obj.grasped {
            obj.position = ee;
        } else if obj.contact_suppressed {
            let dist = (ee[0] - obj.position[0]).hypot(ee[1] - obj.position[1]);
            if dist > obj.radius + config.probe_radius {
                obj.contact_suppressed = false;
            }
        }
    }

    Ok(TickOutcome {
        world: next,
        compliance,
        contact_force: contact,
        events,
    })
}

fn grasp(config: &RobotConfig, world: &mut WorldState, wanted: Option<&str>) -> WorldEvent {
    if let Some(held) = world.grasped() {
        return WorldEvent::GraspFailed {
            reason: format!("already holding `{}`", held.id),
        };
    }
    let ee = world.end_effector;
    let candidate = world
        .objects
        .iter_mut()
        .filter(|o| wanted.is_none_or(|w| w == o.id))
        .map(|o| {
            let dist = (ee[0] - o.position[0]).hypot(ee[1] - o.position[1]);
            (dist, o)
        })
        .filter(|(dist, o)| *dist <= o.radius + config.probe_radius)
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
    match candidate {
        Some((_, obj)) => {
            obj.grasped = true;
            obj.contact_suppressed = false;
            obj.position = ee;
            WorldEvent::Grasped {
                object: obj.id.clone(),
            }
        }
        None => WorldEvent::GraspFailed {
            reason: match wanted {
                Some(id) => format!("`{id}` not within reach of the gripper"),
                None => "no object within reach of the gripper".to_owned(),
            },
        },
    }
}

fn release(world: &mut WorldState) -> WorldEvent {
    match world.objects.iter_mut().find(|o| o.grasped) {
        Some(obj) => {
            obj.grasped = false;
            obj.contact_suppressed = true;
            WorldEvent::Released {
                object: obj.id.clone(),
            }
        }
        None => WorldEvent::ReleaseIgnored,
    }
}
