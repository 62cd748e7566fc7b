use serde::{Deserialize, Serialize};

use super::kinematics::Vec2;
use super::RobotError;

/// Quintic minimum-jerk segment; evaluation clamps outside `[0, duration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesiredTrajectory {
    pub start: Vec2,
    pub goal: Vec2,
    pub duration: f64,
    pub origin_time: f64,
}

pub fn plan_min_jerk(start: Vec2, goal: Vec2, duration: f64) -> Result<DesiredTrajectory, RobotError> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(RobotError::Duration(duration));
    }
    Ok(DesiredTrajectory {
        start,
        goal,
        duration,
        origin_time: 0.0,
    })
}

impl DesiredTrajectory {
    /// Stationary trajectory at `point`.
    pub fn hold(point: Vec2, origin_time: f64) -> Self {
        Self {
            start: point,
            goal: point,
            duration: 1.0,
            origin_time,
        }
    }

    pub fn starting_at(mut self, origin_time: f64) -> Self {
        self.origin_time = origin_time;
        self
    }

    /// Desired position and velocity at absolute time `t`.
    pub fn evaluate(&self, t: f64) -> (Vec2, Vec2) {
        let tau = ((t - self.origin_time) / self.duration).clamp(0.0, 1.0);
        let (t2, t3) = (tau * tau, tau * tau * tau);
        let s = t3 * (10.0 - 15.0 * tau + 6.0 * t2);
        let ds = 30.0 * t2 * (1.0 - 2.0 * tau + t2) / self.duration;
        let mut x = [0.0; 2];
        let mut v = [0.0; 2];
        for i in 0..2 {
            let delta = self.goal[i] - self.start[i];
            x[i] = self.start[i] + delta * s;
            v[i] = delta * ds;
        }
        (x, v)
    }

    pub fn end_time(&self) -> f64 {
        self.origin_time + self.duration
    }
}
