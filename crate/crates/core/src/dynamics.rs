//! Semiflows realized by fixed-step RK4 integration of a vector field, and
//! purely discrete maps.
//!
//! Every trajectory is confined to the domain rectangle: a state that leaves
//! it after a step is clamped componentwise and the result is flagged as
//! exiting.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::grid::Rect;

/// Default integrator step, `1/256` time units.
pub const DEFAULT_STEP: f64 = 1.0 / 256.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("system needs at least one equation")]
    Empty,
    #[error("expression {index} has arity {found}, expected {expected}")]
    ArityMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("domain dimension {found} does not match system dimension {expected}")]
    DomainMismatch { expected: usize, found: usize },
    #[error("step {0} must be positive with 1/h an integer")]
    InvalidStep(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("right-hand side failed at step {step}: {source}")]
    Eval { step: usize, source: EvalError },
    #[error("flow time {0} must be finite and non-negative")]
    InvalidTime(f64),
    #[error("continuous-time flow requested from a discrete map")]
    DiscreteMode,
    #[error("point has dimension {found}, system has dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone)]
enum Law {
    VectorField { rhs: Vec<Expr>, steps_per_unit: u32 },
    Map { update: Vec<Expr> },
}

/// A semiflow `phi^t` on a compact rectangle, or a discrete map on it.
#[derive(Debug, Clone)]
pub struct SemiflowSystem {
    law: Law,
    domain: Rect,
}

/// Result of flowing a point.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    pub point: Vec<f64>,
    /// Time actually integrated, `steps * h`.
    pub time: f64,
    pub steps: usize,
    /// The requested time was not a multiple of `h`.
    pub snapped: bool,
    /// The trajectory was clamped to the domain at least once.
    pub exiting: bool,
}

/// Image of a point under a time-`T` map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapImage {
    pub point: Vec<f64>,
    pub exiting: bool,
}

/// Orbit samples at the quadrature midpoints `(j + 1/2) / n` for
/// `j = 0 .. span * n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureOrbit {
    dim: usize,
    per_unit: usize,
    points: Vec<f64>,
    pub exiting: bool,
}

impl QuadratureOrbit {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Samples per unit time.
    pub fn per_unit(&self) -> usize {
        self.per_unit
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }
}

fn check_arity(exprs: &[Expr], domain: &Rect) -> Result<(), SystemError> {
    if exprs.is_empty() {
        return Err(SystemError::Empty);
    }
    let n = exprs.len();
    for (index, e) in exprs.iter().enumerate() {
        if e.arity() != n {
            return Err(SystemError::ArityMismatch {
                index,
                expected: n,
                found: e.arity(),
            });
        }
    }
    if domain.dim() != n {
        return Err(SystemError::DomainMismatch {
            expected: n,
            found: domain.dim(),
        });
    }
    Ok(())
}

/// Returns `1/h` when it is a positive integer (to 1e-9 relative).
pub fn steps_per_unit(h: f64) -> Option<u32> {
    if !(h > 0.0 && h.is_finite()) {
        return None;
    }
    let inv = 1.0 / h;
    let n = libm::round(inv);
    if n < 1.0 || n > u32::MAX as f64 || libm::fabs(inv - n) > 1e-9 * n {
        return None;
    }
    Some(n as u32)
}

struct Scratch {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }
}

impl SemiflowSystem {
    /// A semiflow `x' = rhs(x, t)` integrated with step `h`.
    pub fn continuous(rhs: Vec<Expr>, domain: Rect, h: f64) -> Result<Self, SystemError> {
        check_arity(&rhs, &domain)?;
        let steps_per_unit = steps_per_unit(h).ok_or(SystemError::InvalidStep(h))?;
        Ok(SemiflowSystem {
            law: Law::VectorField {
                rhs,
                steps_per_unit,
            },
            domain,
        })
    }

    /// A discrete map `x -> update(x)`; its time-one map is one application.
    pub fn discrete(update: Vec<Expr>, domain: Rect) -> Result<Self, SystemError> {
        check_arity(&update, &domain)?;
        Ok(SemiflowSystem {
            law: Law::Map { update },
            domain,
        })
    }

    pub fn mode(&self) -> Mode {
        match self.law {
            Law::VectorField { .. } => Mode::Continuous,
            Law::Map { .. } => Mode::Discrete,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Rect {
        &self.domain
    }

    /// Integrator step `h`, or `None` for discrete maps.
    pub fn step(&self) -> Option<f64> {
        match self.law {
            Law::VectorField { steps_per_unit, .. } => Some(1.0 / steps_per_unit as f64),
            Law::Map { .. } => None,
        }
    }

    /// Integrator steps per unit time, or `None` for discrete maps.
    pub fn steps_per_unit(&self) -> Option<u32> {
        match self.law {
            Law::VectorField { steps_per_unit, .. } => Some(steps_per_unit),
            Law::Map { .. } => None,
        }
    }

    fn vector_field(&self) -> Result<(&[Expr], u32), FlowError> {
        match &self.law {
            Law::VectorField {
                rhs,
                steps_per_unit,
            } => Ok((rhs, *steps_per_unit)),
            Law::Map { .. } => Err(FlowError::DiscreteMode),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<(), FlowError> {
        if x.len() != self.dim() {
            return Err(FlowError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    fn eval_into(rhs: &[Expr], x: &[f64], t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        for (o, e) in out.iter_mut().zip(rhs) {
            *o = e.eval(x, t)?;
        }
        Ok(())
    }

    /// One classical RK4 step of length `dt` from time `t`, followed by
    /// clamping. Returns whether the state was clamped.
    fn rk4_step(
        &self,
        rhs: &[Expr],
        x: &mut [f64],
        t: f64,
        dt: f64,
        s: &mut Scratch,
    ) -> Result<bool, EvalError> {
        let Scratch { k, tmp } = s;
        let [k1, k2, k3, k4] = k;
        let half = 0.5 * dt;
        Self::eval_into(rhs, x, t, k1)?;
        for i in 0..x.len() {
            tmp[i] = x[i] + half * k1[i];
        }
        Self::eval_into(rhs, tmp, t + half, k2)?;
        for i in 0..x.len() {
            tmp[i] = x[i] + half * k2[i];
        }
        Self::eval_into(rhs, tmp, t + half, k3)?;
        for i in 0..x.len() {
            tmp[i] = x[i] + dt * k3[i];
        }
        Self::eval_into(rhs, tmp, t + dt, k4)?;
        let sixth = dt / 6.0;
        for i in 0..x.len() {
            x[i] += sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(self.domain.clamp(x))
    }

    /// `phi^t(x)`: `round(t/h)` RK4 steps of size `h`.
    pub fn flow(&self, x: &[f64], t: f64) -> Result<FlowOutcome, FlowError> {
        let (_, spu) = self.vector_field()?;
        self.check_point(x)?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(FlowError::InvalidTime(t));
        }
        let exact = t * spu as f64;
        let steps = libm::round(exact) as usize;
        let snapped = libm::fabs(exact - steps as f64) > 1e-9 * exact.max(1.0);
        let mut point = x.to_vec();
        let exiting = self.flow_steps_in_place(&mut point, steps)?;
        Ok(FlowOutcome {
            point,
            time: steps as f64 / spu as f64,
            steps,
            snapped,
            exiting,
        })
    }

    /// Advances `x` by `steps` integrator steps; returns the exiting flag.
    pub fn flow_steps_in_place(&self, x: &mut [f64], steps: usize) -> Result<bool, FlowError> {
        let (rhs, spu) = self.vector_field()?;
        self.check_point(x)?;
        let h = 1.0 / spu as f64;
        let mut scratch = Scratch::new(x.len());
        let mut exiting = false;
        for step in 0..steps {
            let t = step as f64 / spu as f64;
            exiting |= self
                .rk4_step(rhs, x, t, h, &mut scratch)
                .map_err(|source| FlowError::Eval { step, source })?;
        }
        Ok(exiting)
    }

    /// `phi^1(x)`: the flow for one time unit, or one application of the map.
    pub fn time_one_map(&self, x: &[f64]) -> Result<MapImage, FlowError> {
        self.time_map(x, 1.0)
    }

    /// Time-`t` map. For discrete maps `t` is rounded to a whole number of
    /// iterates.
    pub fn time_map(&self, x: &[f64], t: f64) -> Result<MapImage, FlowError> {
        match &self.law {
            Law::VectorField { .. } => {
                let out = self.flow(x, t)?;
                Ok(MapImage {
                    point: out.point,
                    exiting: out.exiting,
                })
            }
            Law::Map { update } => {
                self.check_point(x)?;
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(FlowError::InvalidTime(t));
                }
                let mut point = x.to_vec();
                let mut next = vec![0.0; x.len()];
                let mut exiting = false;
                for step in 0..libm::round(t) as usize {
                    Self::eval_into(update, &point, step as f64, &mut next)
                        .map_err(|source| FlowError::Eval { step, source })?;
                    core::mem::swap(&mut point, &mut next);
                    exiting |= self.domain.clamp(&mut point);
                }
                Ok(MapImage { point, exiting })
            }
        }
    }

    /// Orbit of `x` sampled at the midpoints `(j + 1/2)/n`, `j < span * n`.
    ///
    /// The trajectory is advanced on the `h` grid; each sample takes one
    /// partial RK4 step from the grid point preceding it. The partial step
    /// length depends only on `j mod n`, so orbits started from grid-aligned
    /// points of this orbit reproduce its samples bit for bit.
    pub fn quadrature_orbit(
        &self,
        x: &[f64],
        n: usize,
        span: usize,
    ) -> Result<QuadratureOrbit, FlowError> {
        let (rhs, spu) = self.vector_field()?;
        self.check_point(x)?;
        let dim = x.len();
        let spu = spu as u64;
        let two_n = 2 * n as u64;
        let h = 1.0 / spu as f64;
        let mut scratch = Scratch::new(dim);
        let mut grid_state = x.to_vec();
        let mut grid_index = 0u64;
        let mut exiting = false;
        let total = span * n;
        let mut points = Vec::with_capacity(total * dim);
        let mut sample = vec![0.0; dim];
        for j in 0..total as u64 {
            let q = (2 * j + 1) * spu;
            let g = q / two_n;
            let rem = q % two_n;
            while grid_index < g {
                let t = grid_index as f64 / spu as f64;
                exiting |= self
                    .rk4_step(rhs, &mut grid_state, t, h, &mut scratch)
                    .map_err(|source| FlowError::Eval {
                        step: grid_index as usize,
                        source,
                    })?;
                grid_index += 1;
            }
            sample.copy_from_slice(&grid_state);
            if rem > 0 {
                let dt = rem as f64 / (two_n * spu) as f64;
                exiting |= self
                    .rk4_step(
                        rhs,
                        &mut sample,
                        grid_index as f64 / spu as f64,
                        dt,
                        &mut scratch,
                    )
                    .map_err(|source| FlowError::Eval {
                        step: grid_index as usize,
                        source,
                    })?;
            }
            points.extend_from_slice(&sample);
        }
        Ok(QuadratureOrbit {
            dim,
            per_unit: n,
            points,
            exiting,
        })
    }
}
