//! Lifting a Lyapunov function of the time-one map to the semiflow:
//! `L(x) = ∫_0^1 ell(phi^t(x)) dt`, by the midpoint rule on `N` samples.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::dynamics::{FlowError, Mode, QuadratureOrbit, SemiflowSystem};
use crate::lyapunov::Ell;

/// Default number of quadrature samples per unit time.
pub const DEFAULT_QUAD_N: usize = 256;
/// Smallest accepted quadrature size.
pub const MIN_QUAD_N: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LiftError {
    #[error("lift undefined for maps")]
    DiscreteMode,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("quadrature size {0} below the minimum of {MIN_QUAD_N}")]
    TooFewSamples(usize),
    #[error("shift {shift} must lie in (0, 1] on both the integrator and quadrature grids")]
    ShiftNotAligned { shift: f64 },
    #[error("probe radius must be positive, got {0}")]
    InvalidRadius(f64),
}

/// Anything that can be integrated along an orbit.
pub trait ScalarField {
    fn value(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> ScalarField for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

impl ScalarField for Ell<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiftConfig {
    /// Midpoint samples on `[0, 1]`.
    pub quad_n: usize,
}

impl Default for LiftConfig {
    fn default() -> Self {
        LiftConfig {
            quad_n: DEFAULT_QUAD_N,
        }
    }
}

impl LiftConfig {
    pub fn validate(&self) -> Result<(), LiftError> {
        if self.quad_n < MIN_QUAD_N {
            return Err(LiftError::TooFewSamples(self.quad_n));
        }
        Ok(())
    }

    /// Midpoint-rule tolerance `4 (max - min) / N` for an integrand with
    /// the given range.
    pub fn tolerance(&self, range: f64) -> f64 {
        4.0 * range / self.quad_n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftValue {
    pub value: f64,
    /// Smallest integrand sample along the orbit.
    pub min_sample: f64,
    /// Largest integrand sample along the orbit.
    pub max_sample: f64,
    pub exiting: bool,
}

fn require_continuous(sys: &SemiflowSystem, cfg: &LiftConfig) -> Result<(), LiftError> {
    if sys.mode() == Mode::Discrete {
        return Err(LiftError::DiscreteMode);
    }
    cfg.validate()
}

/// Midpoint average of `field` over samples `from..from + n` of `orbit`.
pub fn average_over<F: ScalarField + ?Sized>(
    field: &F,
    orbit: &QuadratureOrbit,
    from: usize,
) -> LiftValue {
    let n = orbit.per_unit();
    let mut sum = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for j in from..from + n {
        let v = field.value(orbit.point(j));
        sum += v;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    LiftValue {
        value: sum / n as f64,
        min_sample: lo,
        max_sample: hi,
        exiting: orbit.exiting,
    }
}

/// `L(x)` for a continuous-time system.
pub fn lift<F: ScalarField + ?Sized>(
    field: &F,
    sys: &SemiflowSystem,
    x: &[f64],
    cfg: &LiftConfig,
) -> Result<LiftValue, LiftError> {
    require_continuous(sys, cfg)?;
    let orbit = sys.quadrature_orbit(x, cfg.quad_n, 1)?;
    Ok(average_over(field, &orbit, 0))
}

/// The three quadrature terms of the shift identity
/// `L(phi^s x) = ∫_s^1 ell(phi^t x) dt + ∫_0^s ell(phi^1(phi^t x)) dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftDecomposition {
    pub lhs: f64,
    /// `∫_s^1 ell(phi^t x) dt`
    pub tail: f64,
    /// `∫_0^s ell(phi^1(phi^t x)) dt`
    pub wrapped: f64,
}

impl ShiftDecomposition {
    pub fn discrepancy(&self) -> f64 {
        libm::fabs(self.lhs - (self.tail + self.wrapped))
    }
}

/// Number of quadrature samples in `[0, s]`, when `s` is aligned with both
/// the quadrature grid and the integrator grid.
fn aligned_samples(sys: &SemiflowSystem, s: f64, n: usize) -> Option<usize> {
    if !(s > 0.0 && s <= 1.0) {
        return None;
    }
    let spu = sys.steps_per_unit()? as f64;
    let k = libm::round(s * n as f64);
    let steps = libm::round(s * spu);
    let close = |a: f64, b: f64| libm::fabs(a - b) <= 1e-9 * b.max(1.0);
    (close(s * n as f64, k) && close(s * spu, steps) && k >= 1.0).then_some(k as usize)
}

/// Computes the shift identity's terms. The left side is the lift of
/// `phi^s(x)`. The tail reuses the samples of the orbit of `x`; the wrapped
/// term integrates the time-one map afresh from each sample `phi^t(x)`,
/// `t < s`, on the same sample grid.
pub fn shift_decomposition<F: ScalarField + ?Sized>(
    field: &F,
    sys: &SemiflowSystem,
    x: &[f64],
    s: f64,
    cfg: &LiftConfig,
) -> Result<ShiftDecomposition, LiftError> {
    require_continuous(sys, cfg)?;
    let n = cfg.quad_n;
    let k = aligned_samples(sys, s, n).ok_or(LiftError::ShiftNotAligned { shift: s })?;
    let shifted = sys.flow(x, s)?.point;
    let lhs = lift(field, sys, &shifted, cfg)?.value;

    let orbit = sys.quadrature_orbit(x, n, 1)?;
    let tail: f64 = (k..n).map(|j| field.value(orbit.point(j))).sum::<f64>() / n as f64;
    let mut wrapped = 0.0;
    for j in 0..k {
        let img = sys.time_one_map(orbit.point(j))?;
        wrapped += field.value(&img.point);
    }
    wrapped /= n as f64;
    Ok(ShiftDecomposition { lhs, tail, wrapped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityProbe {
    /// `max |L(y) - L(x)|` over the sampled `y`.
    pub modulus: f64,
    /// The sample realizing the maximum (`x` itself when all differences vanish).
    pub argmax: Vec<f64>,
    pub center_value: f64,
}

/// Samples `m` points uniformly from the Euclidean `r`-ball around `x`
/// (clamped to the domain) and reports the largest change in `L`.
pub fn continuity_probe<F: ScalarField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    sys: &SemiflowSystem,
    x: &[f64],
    r: f64,
    m: usize,
    cfg: &LiftConfig,
    rng: &mut R,
) -> Result<ContinuityProbe, LiftError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(LiftError::InvalidRadius(r));
    }
    let base = lift(field, sys, x, cfg)?.value;
    let mut best = ContinuityProbe {
        modulus: 0.0,
        argmax: x.to_vec(),
        center_value: base,
    };
    let dim = x.len();
    let mut offset = alloc::vec![0.0; dim];
    for _ in 0..m {
        loop {
            for o in offset.iter_mut() {
                *o = rng.gen_range(-1.0..=1.0);
            }
            if offset.iter().map(|o| o * o).sum::<f64>() <= 1.0 {
                break;
            }
        }
        let mut y: Vec<f64> = x.iter().zip(&offset).map(|(a, o)| a + r * o).collect();
        sys.domain().clamp(&mut y);
        let d = libm::fabs(lift(field, sys, &y, cfg)?.value - base);
        if d > best.modulus {
            best.modulus = d;
            best.argmax = y;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DEFAULT_STEP;
    use crate::expr::parse_expression;
    use crate::grid::Rect;
    use rand::SeedableRng;

    fn ode(rhs: &[&str], bounds: &[(f64, f64)]) -> SemiflowSystem {
        let n = rhs.len();
        let rhs = rhs
            .iter()
            .map(|s| parse_expression(s, n).unwrap())
            .collect();
        SemiflowSystem::continuous(rhs, Rect::new(bounds).unwrap(), DEFAULT_STEP).unwrap()
    }

    #[test]
    fn squared_integrand_matches_closed_form() {
        let sys = ode(&["-x1"], &[(-2.0, 2.0)]);
        let square = |x: &[f64]| x[0] * x[0];
        let v = lift(&square, &sys, &[1.0], &LiftConfig::default()).unwrap();
        let exact = (1.0 - libm::exp(-2.0)) / 2.0;
        assert!((v.value - exact).abs() < 1e-3);
        assert!((v.value - 0.4323324).abs() < 1e-3);
        assert!(v.min_sample <= v.value && v.value <= v.max_sample);
    }

    #[test]
    fn constant_integrand_and_fixed_point() {
        let sys = ode(&["-x1"], &[(-2.0, 2.0)]);
        let c = |_: &[f64]| 0.375;
        for x in [-1.9, 0.0, 0.7] {
            assert_eq!(
                lift(&c, &sys, &[x], &LiftConfig::default()).unwrap().value,
                0.375
            );
        }
        let f = |x: &[f64]| 0.5 + x[0];
        assert_eq!(
            lift(&f, &sys, &[0.0], &LiftConfig::default())
                .unwrap()
                .value,
            0.5
        );
    }

    #[test]
    fn discrete_systems_rejected() {
        let u = alloc::vec![parse_expression("x1/2", 1).unwrap()];
        let sys = SemiflowSystem::discrete(u, Rect::new(&[(-1.0, 1.0)]).unwrap()).unwrap();
        let c = |_: &[f64]| 0.0;
        assert_eq!(
            lift(&c, &sys, &[0.5], &LiftConfig::default()),
            Err(LiftError::DiscreteMode)
        );
        let sys = ode(&["-x1"], &[(-2.0, 2.0)]);
        assert_eq!(
            lift(&c, &sys, &[0.5], &LiftConfig { quad_n: 8 }),
            Err(LiftError::TooFewSamples(8))
        );
    }

    #[test]
    fn shift_identity_at_full_period_and_fixed_point() {
        let sys = ode(&["x1 - x1^3"], &[(-2.0, 2.0)]);
        let f = |x: &[f64]| libm::tanh(x[0]) * 0.5 + 0.5;
        let cfg = LiftConfig::default();
        let d = shift_decomposition(&f, &sys, &[0.4], 1.0, &cfg).unwrap();
        assert_eq!(d.tail, 0.0);
        assert!(d.discrepancy() < 1e-12, "{d:?}");
        let d = shift_decomposition(&f, &sys, &[1.0], 0.5, &cfg).unwrap();
        assert!((d.lhs - f(&[1.0])).abs() < 1e-14);
        assert!(d.discrepancy() < 1e-14);
        let d = shift_decomposition(&f, &sys, &[0.3], 0.25, &cfg).unwrap();
        assert!(d.discrepancy() < 1e-9, "{d:?}");
    }

    #[test]
    fn shift_must_be_aligned() {
        let sys = ode(&["-x1"], &[(-2.0, 2.0)]);
        let f = |_: &[f64]| 0.0;
        for s in [0.0, 1.5, 0.001] {
            assert!(matches!(
                shift_decomposition(&f, &sys, &[0.3], s, &LiftConfig::default()),
                Err(LiftError::ShiftNotAligned { .. })
            ));
        }
    }

    #[test]
    fn continuity_probe_constant_field() {
        let sys = ode(&["-x2", "x1"], &[(-2.0, 2.0), (-2.0, 2.0)]);
        let c = |_: &[f64]| 0.25;
        let mut rng = rand::rngs::SmallRng::seed_from_u64(7);
        let p = continuity_probe(
            &c,
            &sys,
            &[0.5, 0.5],
            0.3,
            20,
            &LiftConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(p.modulus, 0.0);
        assert!(continuity_probe(
            &c,
            &sys,
            &[0.5, 0.5],
            0.0,
            1,
            &LiftConfig::default(),
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn continuity_probe_smooth_field_shrinks_with_radius() {
        let sys = ode(&["-x1"], &[(-2.0, 2.0)]);
        let f = |x: &[f64]| x[0] * x[0];
        let cfg = LiftConfig::default();
        let mut rng = rand::rngs::SmallRng::seed_from_u64(1);
        let wide = continuity_probe(&f, &sys, &[1.0], 0.1, 50, &cfg, &mut rng).unwrap();
        let narrow = continuity_probe(&f, &sys, &[1.0], 0.001, 50, &cfg, &mut rng).unwrap();
        assert!(narrow.modulus < wide.modulus / 10.0);
        assert!(narrow.modulus <= 0.001 * 2.0);
    }
}
