//! Cartesian admittance layer.
//!
//! Each axis obeys `M·ë + D·ė + K·e = f_ext` with `e = x_c − x_d`: the
//! compliant position `x_c` is the desired position `x_d` deformed by the
//! sensed force. With no force the deviation decays and `x_c` converges back
//! onto `x_d`, so free-space motion is left untouched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Spectral radius must stay below `1 - DEFAULT_MARGIN`.
pub const DEFAULT_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdmittanceError {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("unstable configuration: spectral radius {spectral_radius} at dt {dt}")]
    Unstable { spectral_radius: f64, dt: f64 },
    #[error("time step must be positive and finite, got {0}")]
    TimeStep(f64),
    #[error("non-finite compliance state")]
    NonFinite,
    #[error("invalid bounds: {0}")]
    Bounds(String),
}

/// Diagonal mass (kg), damping (N·s/m) and stiffness (N/m), one entry per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmittanceParams {
    pub mass: Vec<f64>,
    pub damping: Vec<f64>,
    pub stiffness: Vec<f64>,
}

impl Default for AdmittanceParams {
    fn default() -> Self {
        Self::uniform(2, 1.0, 20.0, 100.0)
    }
}

impl AdmittanceParams {
    pub fn uniform(dim: usize, mass: f64, damping: f64, stiffness: f64) -> Self {
        Self {
            mass: vec![mass; dim],
            damping: vec![damping; dim],
            stiffness: vec![stiffness; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    fn check_dims(&self) -> Result<(), AdmittanceError> {
        let dim = self.dim();
        for (what, v) in [("damping", &self.damping), ("stiffness", &self.stiffness)] {
            if v.len() != dim {
                return Err(AdmittanceError::Dimension {
                    what,
                    expected: dim,
                    actual: v.len(),
                });
            }
        }
        Ok(())
    }

    /// Strict positivity and finiteness of every entry.
    pub fn is_positive(&self) -> bool {
        self.check_dims().is_ok()
            && self
                .mass
                .iter()
                .chain(&self.damping)
                .chain(&self.stiffness)
                .all(|v| v.is_finite() && *v > 0.0)
    }

    fn axis(&self, i: usize) -> (f64, f64, f64) {
        (self.mass[i], self.damping[i], self.stiffness[i])
    }
}

/// Per-axis box for [`AdmittanceParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBounds {
    pub min: AdmittanceParams,
    pub max: AdmittanceParams,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            min: AdmittanceParams::uniform(2, 0.5, 5.0, 10.0),
            max: AdmittanceParams::uniform(2, 5.0, 100.0, 1000.0),
        }
    }
}

/// Grid points per parameter (log-spaced) probed between the box corners.
const BOUNDS_GRID: usize = 7;

impl ParamBounds {
    /// Checks that the box is well formed and that its corners, plus a
    /// log-spaced interior grid, are stable at `dt`.
    pub fn validate(&self, dt: f64, integrator: Integrator) -> Result<(), AdmittanceError> {
        let dim = self.min.dim();
        self.min.check_dims()?;
        self.max.check_dims()?;
        if self.max.dim() != dim {
            return Err(AdmittanceError::Bounds(format!(
                "min has {dim} axes, max has {}",
                self.max.dim()
            )));
        }
        if !self.min.is_positive() || !self.max.is_positive() {
            return Err(AdmittanceError::Bounds(
                "bounds must be strictly positive and finite".into(),
            ));
        }
        for axis in 0..dim {
            let (m0, d0, k0) = self.min.axis(axis);
            let (m1, d1, k1) = self.max.axis(axis);
            if m0 > m1 || d0 > d1 || k0 > k1 {
                return Err(AdmittanceError::Bounds(format!("axis {axis}: min exceeds max")));
            }
            for m in log_grid(m0, m1) {
                for d in log_grid(d0, d1) {
                    for k in log_grid(k0, k1) {
                        let rho = axis_spectral_radius(integrator, m, d, k, dt);
                        if !(rho < 1.0 - DEFAULT_MARGIN) {
                            return Err(AdmittanceError::Bounds(format!(
                                "axis {axis}: M={m}, D={d}, K={k} unstable at dt={dt} (radius {rho})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn log_grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let n = if lo == hi { 1 } else { BOUNDS_GRID };
    (0..n).map(move |i| {
        if i == 0 {
            lo
        } else if i == n - 1 {
            hi
        } else {
            let t = i as f64 / (n - 1) as f64;
            (lo.ln() + t * (hi.ln() - lo.ln())).exp()
        }
    })
}

/// Compliant vs desired motion pair and the sensed force, all per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceState {
    pub x_c: Vec<f64>,
    pub v_c: Vec<f64>,
    pub x_d: Vec<f64>,
    pub v_d: Vec<f64>,
    pub f_ext: Vec<f64>,
}

impl ComplianceState {
    /// At rest on the desired position with no force.
    pub fn at_rest(x_d: Vec<f64>) -> Self {
        let dim = x_d.len();
        Self {
            x_c: x_d.clone(),
            v_c: vec![0.0; dim],
            x_d,
            v_d: vec![0.0; dim],
            f_ext: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.x_c.len()
    }

    pub fn deviation(&self) -> Vec<f64> {
        self.x_c.iter().zip(&self.x_d).map(|(c, d)| c - d).collect()
    }

    pub fn deviation_norm(&self) -> f64 {
        self.deviation().iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    fn check(&self, dim: usize) -> Result<(), AdmittanceError> {
        for (what, v) in [
            ("x_c", &self.x_c),
            ("v_c", &self.v_c),
            ("x_d", &self.x_d),
            ("v_d", &self.v_d),
            ("f_ext", &self.f_ext),
        ] {
            if v.len() != dim {
                return Err(AdmittanceError::Dimension {
                    what,
                    expected: dim,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(AdmittanceError::NonFinite);
            }
        }
        Ok(())
    }
}

/// One-step discretisation of the deviation dynamics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Classical fourth-order Runge–Kutta with the force held over the step.
    #[default]
    Rk4,
    /// Velocity first, then position.
    SemiImplicitEuler,
}

impl Integrator {
    /// Advances one axis `(e, ė)` by `dt` under constant force `f`.
    fn advance(self, m: f64, d: f64, k: f64, f: f64, e: f64, de: f64, dt: f64) -> (f64, f64) {
        let accel = |e: f64, de: f64| (f - d * de - k * e) / m;
        match self {
            Integrator::SemiImplicitEuler => {
                let de1 = de + dt * accel(e, de);
                (e + dt * de1, de1)
            }
            Integrator::Rk4 => {
                let (k1e, k1v) = (de, accel(e, de));
                let (e2, v2) = (e + 0.5 * dt * k1e, de + 0.5 * dt * k1v);
                let (k2e, k2v) = (v2, accel(e2, v2));
                let (e3, v3) = (e + 0.5 * dt * k2e, de + 0.5 * dt * k2v);
                let (k3e, k3v) = (v3, accel(e3, v3));
                let (e4, v4) = (e + dt * k3e, de + dt * k3v);
                let (k4e, k4v) = (v4, accel(e4, v4));
                (
                    e + dt / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e),
                    de + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
                )
            }
        }
    }

    /// Homogeneous transition matrix of one step on `(e, ė)`.
    pub fn transition_matrix(self, m: f64, d: f64, k: f64, dt: f64) -> [[f64; 2]; 2] {
        let (kk, dd) = (k / m, d / m);
        match self {
            Integrator::SemiImplicitEuler => [
                [1.0 - dt * dt * kk, dt * (1.0 - dt * dd)],
                [-dt * kk, 1.0 - dt * dd],
            ],
            Integrator::Rk4 => {
                // I + hA + (hA)^2/2 + (hA)^3/6 + (hA)^4/24
                let a = [[0.0, dt], [-dt * kk, -dt * dd]];
                let mut term = [[1.0, 0.0], [0.0, 1.0]];
                let mut sum = term;
                for n in 1..=4 {
                    term = mat_mul(&term, &a);
                    let scale = 1.0 / (n as f64);
                    for row in term.iter_mut() {
                        for v in row.iter_mut() {
                            *v *= scale;
                        }
                    }
                    for i in 0..2 {
                        for j in 0..2 {
                            sum[i][j] += term[i][j];
                        }
                    }
                }
                sum
            }
        }
    }
}

fn mat_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Largest eigenvalue modulus of a real 2×2 matrix.
pub fn spectral_radius_2x2(m: &[[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        ((tr + s).abs()).max((tr - s).abs()) / 2.0
    } else {
        det.sqrt()
    }
}

fn axis_spectral_radius(integrator: Integrator, m: f64, d: f64, k: f64, dt: f64) -> f64 {
    if !(m > 0.0 && d > 0.0 && k > 0.0) || !(m.is_finite() && d.is_finite() && k.is_finite()) {
        return f64::INFINITY;
    }
    let r = spectral_radius_2x2(&integrator.transition_matrix(m, d, k, dt));
    if r.is_nan() {
        f64::INFINITY
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub spectral_radius: f64,
    pub stable: bool,
    pub per_axis_radii: Vec<f64>,
}

/// Stability of the default integrator at `dt`.
pub fn stability_check(params: &AdmittanceParams, dt: f64) -> StabilityReport {
    stability_check_with(params, Integrator::default(), dt, DEFAULT_MARGIN)
}

pub fn stability_check_with(
    params: &AdmittanceParams,
    integrator: Integrator,
    dt: f64,
    margin: f64,
) -> StabilityReport {
    if params.check_dims().is_err() || !(dt > 0.0 && dt.is_finite()) {
        return StabilityReport {
            spectral_radius: f64::INFINITY,
            stable: false,
            per_axis_radii: vec![],
        };
    }
    let per_axis_radii: Vec<f64> = (0..params.dim())
        .map(|i| {
            let (m, d, k) = params.axis(i);
            axis_spectral_radius(integrator, m, d, k, dt)
        })
        .collect();
    let spectral_radius = per_axis_radii.iter().copied().fold(0.0, f64::max);
    StabilityReport {
        spectral_radius,
        stable: params.is_positive() && spectral_radius < 1.0 - margin,
        per_axis_radii,
    }
}

/// Advances the compliance state by `dt`, assuming the desired motion keeps
/// its current velocity over the step.
pub fn step(
    params: &AdmittanceParams,
    state: &ComplianceState,
    dt: f64,
) -> Result<ComplianceState, AdmittanceError> {
    let x_d_next = state
        .x_d
        .iter()
        .zip(&state.v_d)
        .map(|(x, v)| x + v * dt)
        .collect();
    step_toward(
        params,
        Integrator::default(),
        state,
        x_d_next,
        state.v_d.clone(),
        dt,
    )
}

/// Advances the deviation by `dt` and re-attaches it to the desired motion
/// at the end of the step (`x_d_next`, `v_d_next`).
pub fn step_toward(
    params: &AdmittanceParams,
    integrator: Integrator,
    state: &ComplianceState,
    x_d_next: Vec<f64>,
    v_d_next: Vec<f64>,
    dt: f64,
) -> Result<ComplianceState, AdmittanceError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(AdmittanceError::TimeStep(dt));
    }
    params.check_dims()?;
    let dim = params.dim();
    state.check(dim)?;
    for (what, v) in [("x_d_next", &x_d_next), ("v_d_next", &v_d_next)] {
        if v.len() != dim {
            return Err(AdmittanceError::Dimension {
                what,
                expected: dim,
                actual: v.len(),
            });
        }
    }
    let report = stability_check_with(params, integrator, dt, DEFAULT_MARGIN);
    if !report.stable {
        return Err(AdmittanceError::Unstable {
            spectral_radius: report.spectral_radius,
            dt,
        });
    }

    let mut next = ComplianceState {
        x_c: Vec::with_capacity(dim),
        v_c: Vec::with_capacity(dim),
        x_d: x_d_next,
        v_d: v_d_next,
        f_ext: state.f_ext.clone(),
    };
    for i in 0..dim {
        let (m, d, k) = params.axis(i);
        let e = state.x_c[i] - state.x_d[i];
        let de = state.v_c[i] - state.v_d[i];
        let (e1, de1) = integrator.advance(m, d, k, state.f_ext[i], e, de, dt);
        next.x_c.push(next.x_d[i] + e1);
        next.v_c.push(next.v_d[i] + de1);
    }
    if next.x_c.iter().chain(&next.v_c).any(|v| !v.is_finite()) {
        return Err(AdmittanceError::NonFinite);
    }
    Ok(next)
}

/// Clamps every parameter into `bounds`; the result is stable whenever the
/// bounds validate at `dt`.
pub fn clamp_to_stable(
    params: &AdmittanceParams,
    bounds: &ParamBounds,
    dt: f64,
) -> Result<AdmittanceParams, AdmittanceError> {
    clamp_to_stable_with(params, bounds, Integrator::default(), dt)
}

pub fn clamp_to_stable_with(
    params: &AdmittanceParams,
    bounds: &ParamBounds,
    integrator: Integrator,
    dt: f64,
) -> Result<AdmittanceParams, AdmittanceError> {
    params.check_dims()?;
    if params.dim() != bounds.min.dim() || params.dim() != bounds.max.dim() {
        return Err(AdmittanceError::Dimension {
            what: "bounds",
            expected: params.dim(),
            actual: bounds.min.dim(),
        });
    }
    let clamp = |v: &[f64], lo: &[f64], hi: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(lo.iter().zip(hi))
            // NaN requests fall back to the lower bound
            .map(|(x, (l, h))| if x.is_nan() { *l } else { x.clamp(*l, *h) })
            .collect()
    };
    let out = AdmittanceParams {
        mass: clamp(&params.mass, &bounds.min.mass, &bounds.max.mass),
        damping: clamp(&params.damping, &bounds.min.damping, &bounds.max.damping),
        stiffness: clamp(&params.stiffness, &bounds.min.stiffness, &bounds.max.stiffness),
    };
    let report = stability_check_with(&out, integrator, dt, DEFAULT_MARGIN);
    if !report.stable {
        return Err(AdmittanceError::Unstable {
            spectral_radius: report.spectral_radius,
            dt,
        });
    }
    Ok(out)
}

/// Static deviation `f / K` per axis.
pub fn static_offset(params: &AdmittanceParams, f: &[f64]) -> Vec<f64> {
    f.iter().zip(&params.stiffness).map(|(f, k)| f / k).collect()
}
