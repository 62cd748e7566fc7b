use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid latency model: {0}")]
pub struct LatencyError(String);

/// Modeled link delay: uniform jitter of half-width `jitter_ms` around
/// `base_ms`, independent loss with probability `loss`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub base_ms: f64,
    pub jitter_ms: f64,
    pub loss: f64,
    pub seed: u64,
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), LatencyError> {
        if !(self.base_ms >= 0.0 && self.base_ms.is_finite()) {
            return Err(LatencyError("base delay must be non-negative".into()));
        }
        if !(self.jitter_ms >= 0.0 && self.jitter_ms.is_finite()) {
            return Err(LatencyError("jitter must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.loss) {
            return Err(LatencyError("loss probability must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn sampler(&self) -> Result<LatencySampler, LatencyError> {
        self.validate()?;
        Ok(LatencySampler {
            model: *self,
            rng: ChaCha8Rng::seed_from_u64(self.seed),
        })
    }
}

#[derive(Debug, Clone)]
pub struct LatencySampler {
    model: LatencyModel,
    rng: ChaCha8Rng,
}

impl LatencySampler {
    pub fn model(&self) -> &LatencyModel {
        &self.model
    }

    /// Delay in ms for the next message, or `None` if it is lost.
    pub fn sample(&mut self) -> Option<f64> {
        let m = self.model;
        if m.loss > 0.0 && self.rng.gen::<f64>() < m.loss {
            return None;
        }
        let jitter = if m.jitter_ms > 0.0 {
            self.rng.gen_range(-m.jitter_ms..=m.jitter_ms)
        } else {
            0.0
        };
        Some((m.base_ms + jitter).max(0.0))
    }
}

/// Whole ticks needed to cover `delay_ms` at `sim_hz`.
pub fn delay_ticks(delay_ms: f64, sim_hz: u32) -> u64 {
    let ticks = delay_ms * f64::from(sim_hz) / 1000.0;
    // absorb representation error so that exact multiples do not round up
    (ticks - 1e-9).ceil().max(0.0) as u64
}
