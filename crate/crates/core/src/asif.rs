//! Runtime filters: the look-ahead active set invariance filter and a plain
//! CBF-QP baseline.
//!
//! Both filters reduce to one affine constraint `c·u >= b*` on the input,
//! because the barrier-rate condition is affine in the disturbance and only
//! its worst vertex matters. The QP `min ||u - u_d||²` is then a halfspace
//! projection with a closed-form solution.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::barrier::{BarrierFunction, LookaheadBarrier};
use crate::dynamics::{ControlAffineSystem, Vector};
use crate::error::{check_dim, Error, Result};
use crate::intervals::IntervalVector;

/// Below this norm the constraint gradient is treated as zero.
pub const DEGENERATE_GRADIENT_TOL: f64 = 1e-10;

/// A class-K rate function, extended to all of ℝ.
#[derive(Clone)]
pub struct ClassK(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for ClassK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ClassK(..)")
    }
}

impl ClassK {
    pub fn new(map: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(map))
    }

    /// `gain·ψ³`.
    pub fn cubic(gain: f64) -> Self {
        Self::new(move |v| gain * v * v * v)
    }

    pub fn linear(gain: f64) -> Self {
        Self::new(move |v| gain * v)
    }

    pub fn eval(&self, v: f64) -> f64 {
        (self.0)(v)
    }

    /// `α(0) = 0` and strictly increasing on `grid` (assumed sorted).
    pub fn check_on(&self, grid: &[f64]) -> bool {
        self.eval(0.0) == 0.0 && grid.windows(2).all(|w| self.eval(w[0]) < self.eval(w[1]))
    }
}

/// Backup controller, its barrier, rate function and horizon.
#[derive(Clone)]
pub struct BackupPolicy {
    feedback: Arc<dyn Fn(&Vector) -> Vector + Send + Sync>,
    pub barrier: BarrierFunction,
    pub alpha: ClassK,
    /// `T_b` in seconds.
    pub horizon: f64,
    /// Finite box enclosing `{h >= 0}`.
    pub bounding_box: IntervalVector,
}

impl fmt::Debug for BackupPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackupPolicy")
            .field("horizon", &self.horizon)
            .field("bounding_box", &self.bounding_box)
            .finish_non_exhaustive()
    }
}

impl BackupPolicy {
    pub fn new(
        feedback: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        barrier: BarrierFunction,
        alpha: ClassK,
        horizon: f64,
        bounding_box: IntervalVector,
    ) -> Result<Self> {
        if !bounding_box.is_finite() {
            return Err(Error::InvalidParameter(
                "backup set bounding box must be finite".into(),
            ));
        }
        if !(horizon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "backup horizon must be >= 0, got {horizon}"
            )));
        }
        Ok(Self {
            feedback: Arc::new(feedback),
            barrier,
            alpha,
            horizon,
            bounding_box,
        })
    }

    pub fn control(&self, x: &Vector) -> Vector {
        (self.feedback)(x)
    }

    pub fn feedback(&self) -> impl Fn(&Vector) -> Vector + Send + Sync + 'static {
        let f = Arc::clone(&self.feedback);
        move |x| f(x)
    }

    pub fn in_backup_set(&self, x: &Vector) -> bool {
        self.barrier.value(x) >= 0.0
    }
}

/// The single effective constraint `c·u >= b*`, with the per-vertex bounds
/// it was reduced from.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub c: Vector,
    pub b_star: f64,
    /// `(w, b_w)` for every vertex `w` of the disturbance box.
    pub vertices: Vec<(Vector, f64)>,
}

impl Constraint {
    /// `max_w b_w` over the explicit vertex list.
    pub fn enumerated_bound(&self) -> f64 {
        self.vertices
            .iter()
            .map(|(_, b)| *b)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Builds `a·(f(x) + g1(x)u + g2(x)w) >= -α(value)` for all vertices `w`,
/// with `a` the barrier gradient, and reduces it to `c·u >= b*`.
pub fn assemble_constraint(
    x: &Vector,
    value: f64,
    grad: &Vector,
    system: &ControlAffineSystem,
    alpha: &ClassK,
) -> Result<Constraint> {
    check_dim(system.state_dim(), x.len())?;
    check_dim(system.state_dim(), grad.len())?;
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("barrier gradient"));
    }
    let c = system.input_matrix(x).tr_mul(grad);
    let a_g2 = system.disturbance_matrix(x).tr_mul(grad);
    let base = -alpha.eval(value) - grad.dot(&system.drift(x));
    let w = system.disturbance_set();
    // b_w = base - (a g2)·w is affine in w; the worst vertex minimizes (a g2)·w per coordinate
    let b_star = base
        - (0..a_g2.len())
            .map(|k| (a_g2[k] * w.lower()[k]).min(a_g2[k] * w.upper()[k]))
            .sum::<f64>();
    let vertices = w
        .corners()?
        .into_iter()
        .map(|v| {
            let b = base - a_g2.dot(&v);
            (v, b)
        })
        .collect();
    Ok(Constraint {
        c,
        b_star,
        vertices,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    /// `u_d` already satisfies the constraint.
    Inactive(Vector),
    /// Projected onto the constraint boundary.
    Projected(Vector),
    Infeasible,
}

/// Exact minimizer of `||u - u_d||²` subject to `c·u >= b*`.
pub fn solve_projection(u_d: &Vector, c: &Vector, b_star: f64) -> Result<Projection> {
    check_dim(u_d.len(), c.len())?;
    let at_desired = c.dot(u_d);
    if at_desired >= b_star {
        return Ok(Projection::Inactive(u_d.clone()));
    }
    let norm_sq = c.norm_squared();
    if norm_sq.sqrt() <= DEGENERATE_GRADIENT_TOL {
        return Ok(Projection::Infeasible);
    }
    Ok(Projection::Projected(
        u_d + c * ((b_star - at_desired) / norm_sq),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterStatus {
    PassedDesired,
    Projected,
    BackupFallback,
    /// No filter was applied.
    Raw,
}

impl FilterStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PassedDesired => "passed-desired",
            Self::Projected => "projected",
            Self::BackupFallback => "backup-fallback",
            Self::Raw => "raw",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        [
            Self::PassedDesired,
            Self::Projected,
            Self::BackupFallback,
            Self::Raw,
        ]
        .into_iter()
        .find(|s| s.as_str() == token)
    }
}

impl fmt::Display for FilterStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct FilterDecision {
    pub u: Vector,
    pub status: FilterStatus,
    /// `Ψ(x)` for the look-ahead filter, `h(x)` for the CBF baseline.
    pub psi: f64,
    pub constraint: Option<(Vector, f64)>,
    /// `c·u_d - b*`; NaN when no constraint was formed.
    pub slack: f64,
    /// The maximizing time of `Ψ` was not unique on the grid.
    pub tie: bool,
    /// No valid embedding at the current state.
    pub no_embedding: bool,
}

impl FilterDecision {
    fn fallback(u: Vector, psi: f64) -> Self {
        Self {
            u,
            status: FilterStatus::BackupFallback,
            psi,
            constraint: None,
            slack: f64::NAN,
            tie: false,
            no_embedding: false,
        }
    }
}

fn project(
    u_d: &Vector,
    constraint: Constraint,
    value: f64,
    backup: impl FnOnce() -> Vector,
) -> Result<FilterDecision> {
    let slack = constraint.c.dot(u_d) - constraint.b_star;
    let (u, status) = match solve_projection(u_d, &constraint.c, constraint.b_star)? {
        Projection::Inactive(u) => (u, FilterStatus::PassedDesired),
        Projection::Projected(u) => (u, FilterStatus::Projected),
        Projection::Infeasible => (backup(), FilterStatus::BackupFallback),
    };
    Ok(FilterDecision {
        u,
        status,
        psi: value,
        constraint: Some((constraint.c, constraint.b_star)),
        slack,
        tie: false,
        no_embedding: false,
    })
}

/// The look-ahead filter. Holds no state between steps.
#[derive(Debug, Clone)]
pub struct AsifFilter {
    pub system: ControlAffineSystem,
    pub policy: BackupPolicy,
    pub lookahead: LookaheadBarrier,
}

impl AsifFilter {
    pub fn new(
        system: ControlAffineSystem,
        policy: BackupPolicy,
        lookahead: LookaheadBarrier,
    ) -> Result<Self> {
        check_dim(system.state_dim(), lookahead.state_dim())?;
        Ok(Self {
            system,
            policy,
            lookahead,
        })
    }

    /// Filters `u_d` at state `x`.
    ///
    /// Falls back to the backup input when `Ψ(x) < 0`, when no valid
    /// embedding exists at `x`, or when the projection is infeasible.
    pub fn step(&self, x: &Vector, u_d: &Vector) -> Result<FilterDecision> {
        check_dim(self.system.input_dim(), u_d.len())?;
        let eval = match self.lookahead.value(x) {
            Ok(e) => e,
            Err(Error::OutsideStatespace) => {
                let mut d = FilterDecision::fallback(self.policy.control(x), f64::NEG_INFINITY);
                d.no_embedding = true;
                return Ok(d);
            }
            Err(e) => return Err(e),
        };
        if !eval.psi.is_finite() {
            let mut d = FilterDecision::fallback(self.policy.control(x), eval.psi);
            d.no_embedding = true;
            return Ok(d);
        }
        if eval.psi < 0.0 {
            let mut d = FilterDecision::fallback(self.policy.control(x), eval.psi);
            d.tie = eval.tie;
            return Ok(d);
        }
        let grad = self
            .lookahead
            .gradient(x, &eval, self.lookahead.gradient_path)?;
        let constraint = assemble_constraint(x, eval.psi, &grad, &self.system, &self.policy.alpha)?;
        let mut decision = project(u_d, constraint, eval.psi, || self.policy.control(x))?;
        decision.tie = eval.tie;
        Ok(decision)
    }
}

/// CBF-QP on the backup barrier itself, with no look-ahead. Renders
/// `{h >= 0}` invariant.
pub fn vanilla_cbf_step(
    x: &Vector,
    u_d: &Vector,
    policy: &BackupPolicy,
    system: &ControlAffineSystem,
) -> Result<FilterDecision> {
    check_dim(system.input_dim(), u_d.len())?;
    let value = policy.barrier.value(x);
    let grad = policy.barrier.gradient(x);
    let constraint = assemble_constraint(x, value, &grad, system, &policy.alpha)?;
    project(u_d, constraint, value, || policy.control(x))
}
