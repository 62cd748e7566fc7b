use serde::{Deserialize, Serialize};

use super::{RobotConfig, RobotError};

pub type Vec2 = [f64; 2];

/// `Down` keeps the elbow angle non-negative, `Up` non-positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Elbow {
    Up,
    #[default]
    Down,
}

/// Slack on the reachable annulus for targets produced by forward kinematics.
const REACH_TOLERANCE: f64 = 1e-12;

pub fn forward_kinematics(config: &RobotConfig, q: Vec2) -> Vec2 {
    let [l1, l2] = config.link_lengths;
    let q12 = q[0] + q[1];
    [
        l1 * q[0].cos() + l2 * q12.cos(),
        l1 * q[0].sin() + l2 * q12.sin(),
    ]
}

pub fn inverse_kinematics(config: &RobotConfig, target: Vec2, elbow: Elbow) -> Result<Vec2, RobotError> {
    let [l1, l2] = config.link_lengths;
    if !(target[0].is_finite() && target[1].is_finite()) {
        return Err(RobotError::Unreachable { target });
    }
    let r = target[0].hypot(target[1]);
    if r > l1 + l2 + REACH_TOLERANCE || r < (l1 - l2).abs() - REACH_TOLERANCE {
        return Err(RobotError::Unreachable { target });
    }
    let c2 = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let s2_abs = (1.0 - c2 * c2).max(0.0).sqrt();
    let s2 = match elbow {
        Elbow::Down => s2_abs,
        Elbow::Up => -s2_abs,
    };
    let q2 = s2.atan2(c2);
    let q1 = target[1].atan2(target[0]) - (l2 * s2).atan2(l1 + l2 * c2);
    Ok([wrap_angle(q1), q2])
}

/// Maps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// End-effector Jacobian `∂x/∂q`, row-major.
pub fn jacobian(config: &RobotConfig, q: Vec2) -> [[f64; 2]; 2] {
    let [l1, l2] = config.link_lengths;
    let (s1, c1) = q[0].sin_cos();
    let (s12, c12) = (q[0] + q[1]).sin_cos();
    [
        [-l1 * s1 - l2 * s12, -l2 * s12],
        [l1 * c1 + l2 * c12, l2 * c12],
    ]
}

/// Joint torques holding the links (point masses at their midpoints) and the
/// payload (point mass at the end effector) against gravity, which acts
/// along −y.
pub fn gravity_compensation(config: &RobotConfig, q: Vec2, payload_mass: f64) -> Vec2 {
    let [l1, l2] = config.link_lengths;
    let [m1, m2] = config.link_masses;
    let g = config.gravity;
    let c1 = q[0].cos();
    let c12 = (q[0] + q[1]).cos();
    // horizontal lever arms about joint 2
    let link2_arm = 0.5 * l2 * c12;
    let payload_arm = l2 * c12;
    let tau2 = g * (m2 * link2_arm + payload_mass * payload_arm);
    let tau1 = g * (m1 * 0.5 * l1 * c1 + m2 * l1 * c1 + payload_mass * l1 * c1) + tau2;
    [tau1, tau2]
}

/// End-effector force whose joint-space image equals `torque` (`Jᵀ F = τ`),
/// damped near the stretched-arm singularity.
pub fn end_effector_force_for_torque(config: &RobotConfig, q: Vec2, torque: Vec2) -> Vec2 {
    let j = jacobian(config, q);
    // Jᵀ = [[j00, j10], [j01, j11]]
    let det = j[0][0] * j[1][1] - j[1][0] * j[0][1];
    let scale = config.link_lengths[0] * config.link_lengths[1];
    if det.abs() > 1e-6 * scale {
        return [
            (j[1][1] * torque[0] - j[1][0] * torque[1]) / det,
            (-j[0][1] * torque[0] + j[0][0] * torque[1]) / det,
        ];
    }
    // F = J (JᵀJ + μ²I)⁻¹ τ
    let mu2 = 1e-6 * scale * scale;
    let a = j[0][0] * j[0][0] + j[1][0] * j[1][0] + mu2;
    let b = j[0][0] * j[0][1] + j[1][0] * j[1][1];
    let d = j[0][1] * j[0][1] + j[1][1] * j[1][1] + mu2;
    let inv_det = 1.0 / (a * d - b * b);
    let y = [
        inv_det * (d * torque[0] - b * torque[1]),
        inv_det * (-b * torque[0] + a * torque[1]),
    ];
    [
        j[0][0] * y[0] + j[0][1] * y[1],
        j[1][0] * y[0] + j[1][1] * y[1],
    ]
}
