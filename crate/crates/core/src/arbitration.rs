//! Control-authority arbitration between the operator and the autonomous
//! controller.
//!
//! The blended command is `h = λ·u_h + (1 − λ)·u_a`, where `u_h` is the human
//! intervention and `u_a` the autonomous input. `λ = 0` leaves the robot fully
//! autonomous and `λ = 1` hands full control to the operator. Under shared
//! control the operator sets `λ`; under shared autonomy it is tuned from the
//! sensed guidance force and the inferred operator intent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::{Intent, IntentEstimate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArbitrationError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("lambda {0} outside [0, 1]")]
    LambdaRange(f64),
    #[error("lambda is operator-set only under shared control")]
    WrongSource,
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
    #[error("invalid auto-tune policy: {0}")]
    Policy(&'static str),
}

/// Cartesian wrench command (N, N·m) of fixed per-session dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlInput(Vec<f64>);

impl ControlInput {
    pub fn new(values: Vec<f64>) -> Result<Self, ArbitrationError> {
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(ArbitrationError::NonFinite(bad));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Validates against the session control dimension.
    pub fn with_dim(values: Vec<f64>, dim: usize) -> Result<Self, ArbitrationError> {
        if values.len() != dim {
            return Err(ArbitrationError::Dimension {
                expected: dim,
                actual: values.len(),
            });
        }
        Self::new(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Autonomy,
    Blended,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthoritySource {
    /// The operator sets λ explicitly.
    SharedControl,
    /// λ is tuned from sensed force and inferred intent.
    SharedAutonomy,
}

/// Band edges used to classify λ into an operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeThresholds {
    pub autonomy_below: f64,
    pub manual_above: f64,
}

impl Default for ModeThresholds {
    fn default() -> Self {
        Self {
            autonomy_below: 0.05,
            manual_above: 0.95,
        }
    }
}

impl ModeThresholds {
    pub fn classify(&self, lambda: f64) -> Mode {
        if lambda < self.autonomy_below {
            Mode::Autonomy
        } else if lambda > self.manual_above {
            Mode::Manual
        } else {
            Mode::Blended
        }
    }
}

/// Classifies λ with the default thresholds (0.05 / 0.95).
pub fn classify_mode(lambda: f64) -> Mode {
    ModeThresholds::default().classify(lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationState {
    pub lambda: f64,
    pub mode: Mode,
    pub source: AuthoritySource,
    pub filtered_lambda: f64,
    #[serde(skip)]
    thresholds: ModeThresholds,
}

impl ArbitrationState {
    pub fn new(source: AuthoritySource, lambda: f64, thresholds: ModeThresholds) -> Self {
        let lambda = clamp_unit(lambda);
        Self {
            lambda,
            mode: thresholds.classify(lambda),
            source,
            filtered_lambda: lambda,
            thresholds,
        }
    }

    pub fn thresholds(&self) -> ModeThresholds {
        self.thresholds
    }

    /// Switches between shared control and shared autonomy. The filter state
    /// restarts from the current λ so the handover is continuous.
    pub fn with_source(mut self, source: AuthoritySource) -> Self {
        self.source = source;
        self.filtered_lambda = self.lambda;
        self
    }

    fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = clamp_unit(lambda);
        self.mode = self.thresholds.classify(self.lambda);
        self
    }
}

impl Default for ArbitrationState {
    fn default() -> Self {
        Self::new(AuthoritySource::SharedControl, 0.0, ModeThresholds::default())
    }
}

fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoTunePolicy {
    /// Guidance force (N) at which the raw authority crosses 0.5.
    pub force_threshold: f64,
    /// Logistic slope (1/N).
    pub gain: f64,
    /// First-order filter time constant (s).
    pub time_constant: f64,
    /// Lower bound on the raw authority while guidance is requested.
    pub guidance_floor: f64,
}

impl Default for AutoTunePolicy {
    fn default() -> Self {
        Self {
            force_threshold: 5.0,
            gain: 0.5,
            time_constant: 0.3,
            guidance_floor: 0.8,
        }
    }
}

impl AutoTunePolicy {
    pub fn validate(&self) -> Result<(), ArbitrationError> {
        if !(self.time_constant > 0.0 && self.time_constant.is_finite()) {
            return Err(ArbitrationError::Policy("time_constant must be > 0"));
        }
        if !(self.gain >= 0.0 && self.gain.is_finite()) {
            return Err(ArbitrationError::Policy("gain must be >= 0"));
        }
        if !self.force_threshold.is_finite() {
            return Err(ArbitrationError::Policy("force_threshold must be finite"));
        }
        if !(0.0..=1.0).contains(&self.guidance_floor) {
            return Err(ArbitrationError::Policy("guidance_floor must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Unfiltered authority for a guidance force magnitude and intent.
    pub fn raw_authority(&self, human_force_magnitude: f64, intent: &IntentEstimate) -> f64 {
        let raw = logistic(self.gain * (human_force_magnitude - self.force_threshold));
        if intent.intent == Intent::GuidanceRequested {
            raw.max(self.guidance_floor)
        } else {
            raw
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Blends the human and autonomous commands with authority `lambda`.
pub fn blend(
    lambda: f64,
    u_h: &ControlInput,
    u_a: &ControlInput,
) -> Result<ControlInput, ArbitrationError> {
    if !lambda.is_finite() {
        return Err(ArbitrationError::NonFinite(lambda));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(ArbitrationError::LambdaRange(lambda));
    }
    if u_h.dim() != u_a.dim() {
        return Err(ArbitrationError::Dimension {
            expected: u_h.dim(),
            actual: u_a.dim(),
        });
    }
    let values = u_h
        .0
        .iter()
        .zip(&u_a.0)
        .map(|(h, a)| lambda * h + (1.0 - lambda) * a)
        .collect();
    Ok(ControlInput(values))
}

/// Operator-requested authority, clamped into `[0, 1]`.
pub fn set_lambda(
    state: ArbitrationState,
    requested: f64,
) -> Result<ArbitrationState, ArbitrationError> {
    if state.source != AuthoritySource::SharedControl {
        return Err(ArbitrationError::WrongSource);
    }
    if !requested.is_finite() {
        return Err(ArbitrationError::NonFinite(requested));
    }
    let mut next = state.with_lambda(requested);
    next.filtered_lambda = next.lambda;
    Ok(next)
}

/// Advances the shared-autonomy filter by `dt` toward the raw authority.
pub fn auto_tune_lambda(
    policy: &AutoTunePolicy,
    human_force_magnitude: f64,
    intent: &IntentEstimate,
    dt: f64,
    state: ArbitrationState,
) -> Result<ArbitrationState, ArbitrationError> {
    if state.source != AuthoritySource::SharedAutonomy {
        return Err(ArbitrationError::WrongSource);
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ArbitrationError::TimeStep(dt));
    }
    if !human_force_magnitude.is_finite() {
        return Err(ArbitrationError::NonFinite(human_force_magnitude));
    }
    policy.validate()?;
    let raw = policy.raw_authority(human_force_magnitude, intent);
    // Exact zero-order-hold discretisation of the first-order lag.
    let alpha = 1.0 - (-dt / policy.time_constant).exp();
    let filtered = clamp_unit(state.filtered_lambda + alpha * (raw - state.filtered_lambda));
    let mut next = state.with_lambda(filtered);
    next.filtered_lambda = next.lambda;
    Ok(next)
}
