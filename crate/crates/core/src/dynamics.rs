//! Control-affine systems, decomposition functions, the embedding system and
//! fixed-step integration.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::intervals::{EmbeddingState, IntervalVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

type VectorMap = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type MatrixMap = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
type FieldMap = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
type DecompositionMap = Arc<dyn Fn(&Vector, &Vector, &Vector, &Vector) -> Vector + Send + Sync>;

/// `ẋ = f(x) + g1(x) u + g2(x) w` with `w ∈ W`.
#[derive(Clone)]
pub struct ControlAffineSystem {
    n: usize,
    m: usize,
    nw: usize,
    f: VectorMap,
    g1: MatrixMap,
    g2: MatrixMap,
    statespace: IntervalVector,
    disturbance: IntervalVector,
}

impl fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("nw", &self.nw)
            .field("statespace", &self.statespace)
            .field("disturbance", &self.disturbance)
            .finish_non_exhaustive()
    }
}

impl ControlAffineSystem {
    /// Builds the system and evaluates `f`, `g1`, `g2` on a handful of
    /// statespace points to catch shape and finiteness errors early.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        nw: usize,
        f: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        g1: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
        g2: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
        statespace: IntervalVector,
        disturbance: IntervalVector,
    ) -> Result<Self> {
        check_dim(n, statespace.dim())?;
        check_dim(nw, disturbance.dim())?;
        if !disturbance.is_finite() {
            return Err(Error::InvalidParameter(
                "disturbance set must be bounded".into(),
            ));
        }
        let sys = Self {
            n,
            m,
            nw,
            f: Arc::new(f),
            g1: Arc::new(g1),
            g2: Arc::new(g2),
            statespace,
            disturbance,
        };
        for x in registration_points(&sys.statespace) {
            let fx = (sys.f)(&x);
            check_dim(n, fx.len())?;
            let g1x = (sys.g1)(&x);
            let g2x = (sys.g2)(&x);
            if g1x.shape() != (n, m) {
                return Err(Error::DimensionMismatch {
                    expected: n * m,
                    found: g1x.len(),
                });
            }
            if g2x.shape() != (n, nw) {
                return Err(Error::DimensionMismatch {
                    expected: n * nw,
                    found: g2x.len(),
                });
            }
            if fx
                .iter()
                .chain(g1x.iter())
                .chain(g2x.iter())
                .any(|v| !v.is_finite())
            {
                return Err(Error::NonFinite("system maps at a registration point"));
            }
        }
        Ok(sys)
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn disturbance_dim(&self) -> usize {
        self.nw
    }

    pub fn statespace(&self) -> &IntervalVector {
        &self.statespace
    }

    pub fn disturbance_set(&self) -> &IntervalVector {
        &self.disturbance
    }

    pub fn drift(&self, x: &Vector) -> Vector {
        (self.f)(x)
    }

    pub fn input_matrix(&self, x: &Vector) -> Matrix {
        (self.g1)(x)
    }

    pub fn disturbance_matrix(&self, x: &Vector) -> Matrix {
        (self.g2)(x)
    }

    /// `f(x) + g1(x) u + g2(x) w`. Membership `w ∈ W` is the caller's concern.
    pub fn eval(&self, x: &Vector, u: &Vector, w: &Vector) -> Result<Vector> {
        check_dim(self.n, x.len())?;
        check_dim(self.m, u.len())?;
        check_dim(self.nw, w.len())?;
        Ok(self.drift(x) + self.input_matrix(x) * u + self.disturbance_matrix(x) * w)
    }

    /// `F(x, w) = f(x) + g1(x) u_b(x) + g2(x) w`.
    pub fn close_loop(
        &self,
        feedback: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> ClosedLoopField {
        let sys = self.clone();
        ClosedLoopField::new(self.n, self.nw, move |x: &Vector, w: &Vector| {
            let u = feedback(x);
            sys.drift(x) + sys.input_matrix(x) * u + sys.disturbance_matrix(x) * w
        })
    }
}

fn registration_points(space: &IntervalVector) -> Vec<Vector> {
    const FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
    let n = space.dim();
    FRACTIONS
        .iter()
        .enumerate()
        .map(|(k, _)| {
            Vector::from_fn(n, |i, _| {
                let t = FRACTIONS[(k + i) % FRACTIONS.len()];
                let (lo, hi) = (space.lower()[i], space.upper()[i]);
                match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => lo + t * (hi - lo),
                    (true, false) => lo + t,
                    (false, true) => hi - t,
                    (false, false) => 2.0 * t - 1.0,
                }
            })
        })
        .collect()
}

/// A disturbed autonomous field `F(x, w)`.
#[derive(Clone)]
pub struct ClosedLoopField {
    n: usize,
    nw: usize,
    map: FieldMap,
}

impl fmt::Debug for ClosedLoopField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClosedLoopField {{ n: {}, nw: {} }}", self.n, self.nw)
    }
}

impl ClosedLoopField {
    pub fn new(
        n: usize,
        nw: usize,
        map: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            nw,
            map: Arc::new(map),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn disturbance_dim(&self) -> usize {
        self.nw
    }

    pub fn eval(&self, x: &Vector, w: &Vector) -> Vector {
        (self.map)(x, w)
    }

    /// `-F`, the field of the time-reversed system.
    pub fn reversed(&self) -> ClosedLoopField {
        let map = Arc::clone(&self.map);
        ClosedLoopField {
            n: self.n,
            nw: self.nw,
            map: Arc::new(move |x, w| -map(x, w)),
        }
    }
}

/// `d(x, w, x̂, ŵ)`: increasing in the off-diagonal entries of `x` and in `w`,
/// decreasing in `x̂` and `ŵ`, and equal to `F(x, w)` on the diagonal.
#[derive(Clone)]
pub struct DecompositionFunction {
    n: usize,
    nw: usize,
    map: DecompositionMap,
}

impl fmt::Debug for DecompositionFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "DecompositionFunction {{ n: {}, nw: {} }}",
            self.n, self.nw
        )
    }
}

impl DecompositionFunction {
    pub fn new(
        n: usize,
        nw: usize,
        map: impl Fn(&Vector, &Vector, &Vector, &Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            nw,
            map: Arc::new(map),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn disturbance_dim(&self) -> usize {
        self.nw
    }

    pub fn eval(&self, x: &Vector, w: &Vector, x_hat: &Vector, w_hat: &Vector) -> Vector {
        (self.map)(x, w, x_hat, w_hat)
    }
}

/// Right-hand side of the embedding system at `a = (under, over)`, returned
/// stacked as `[d(under, w̲, over, w̄); d(over, w̄, under, w̲)]`.
pub fn embedding_field(
    d: &DecompositionFunction,
    w: &IntervalVector,
    a: &EmbeddingState,
) -> Result<Vector> {
    check_dim(d.state_dim(), a.dim())?;
    check_dim(d.disturbance_dim(), w.dim())?;
    if !w.is_finite() {
        return Err(Error::InvalidParameter(
            "disturbance set must be bounded".into(),
        ));
    }
    let lower = d.eval(&a.under, w.lower(), &a.over, w.upper());
    let upper = d.eval(&a.over, w.upper(), &a.under, w.lower());
    check_dim(a.dim(), lower.len())?;
    check_dim(a.dim(), upper.len())?;
    Ok(EmbeddingState {
        under: lower,
        over: upper,
    }
    .stacked())
}

/// The embedding field as a map on stacked ℝ²ⁿ vectors.
pub fn embedding_rhs<'a>(
    d: &'a DecompositionFunction,
    w: &'a IntervalVector,
) -> impl Fn(&Vector) -> Vector + 'a {
    let n = d.state_dim();
    move |a: &Vector| {
        let under = a.rows(0, n).into_owned();
        let over = a.rows(n, n).into_owned();
        let lo = d.eval(&under, w.lower(), &over, w.upper());
        let hi = d.eval(&over, w.upper(), &under, w.lower());
        let mut out = Vector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&lo);
        out.rows_mut(n, n).copy_from(&hi);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

/// Samples of a fixed-step solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub step: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&Vector> {
        self.states.last()
    }
}

/// Grid `0, dt, 2dt, …, horizon`; the last step is shortened to land on the
/// horizon exactly.
pub fn time_grid(horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "horizon must be finite and >= 0, got {horizon}"
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "step must be finite and > 0, got {dt}"
        )));
    }
    let full = (horizon / dt + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=full).map(|k| k as f64 * dt).collect();
    let remainder = horizon - full as f64 * dt;
    if remainder > 1e-12 * horizon.max(1.0) {
        times.push(horizon);
    } else if let Some(t) = times.last_mut() {
        *t = horizon;
    }
    Ok(times)
}

pub(crate) fn step_with<F>(field: &F, method: Integrator, t: f64, x: &Vector, h: f64) -> Vector
where
    F: Fn(f64, &Vector) -> Vector + ?Sized,
{
    match method {
        Integrator::Euler => x + field(t, x) * h,
        Integrator::Rk4 => {
            let k1 = field(t, x);
            let k2 = field(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
            let k3 = field(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
            let k4 = field(t + h, &(x + &k3 * h));
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
        }
    }
}

/// Fixed-step integration of `ẋ = field(t, x)` over `[0, horizon]`.
///
/// A non-finite state aborts with [`Error::Blowup`], which carries the
/// finite prefix.
pub fn integrate<F>(
    field: F,
    x0: &Vector,
    horizon: f64,
    dt: f64,
    method: Integrator,
) -> Result<Trajectory>
where
    F: Fn(f64, &Vector) -> Vector,
{
    let grid = time_grid(horizon, dt)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.clone()],
        step: dt,
    };
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    for k in 1..grid.len() {
        let (t, h) = (grid[k - 1], grid[k] - grid[k - 1]);
        let next = step_with(&field, method, t, &traj.states[k - 1], h);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup {
                time: grid[k],
                prefix: Box::new(traj),
            });
        }
        traj.times.push(grid[k]);
        traj.states.push(next);
    }
    Ok(traj)
}

/// Which monotonicity condition a sampled derivative violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// `d(x, w, x, w) ≠ F(x, w)`.
    Diagonal,
    /// `∂d_i/∂x_j < 0` for `i ≠ j`.
    OffDiagonalState,
    /// `∂d_i/∂x̂_j > 0`.
    HatState,
    /// `∂d_i/∂w_k < 0`.
    Disturbance,
    /// `∂d_i/∂ŵ_k > 0`.
    HatDisturbance,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionViolation {
    pub kind: ViolationKind,
    pub sample: usize,
    pub row: usize,
    pub column: usize,
    pub magnitude: f64,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub w_hat: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct DecompositionTolerances {
    /// Relative tolerance on `|d(x,w,x,w) - F(x,w)|`, scaled by `1 + |F|`.
    pub diagonal: f64,
    /// Sign slack on finite-difference partials.
    pub sign: f64,
    /// Finite-difference step is `fd_scale * (1 + |coordinate|)`.
    pub fd_scale: f64,
}

impl Default for DecompositionTolerances {
    fn default() -> Self {
        Self {
            diagonal: 1e-9,
            sign: 1e-6,
            fd_scale: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub samples: usize,
    pub max_diagonal_error: f64,
    pub violations: Vec<DecompositionViolation>,
}

impl DecompositionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Seeded sampling check of the decomposition-function conditions over
/// `region × W × region × W`, with central finite differences.
pub fn check_decomposition(
    d: &DecompositionFunction,
    field: &ClosedLoopField,
    region: &IntervalVector,
    w_set: &IntervalVector,
    samples: usize,
    seed: u64,
    tol: DecompositionTolerances,
) -> Result<DecompositionReport> {
    check_dim(d.state_dim(), region.dim())?;
    check_dim(d.disturbance_dim(), w_set.dim())?;
    check_dim(field.state_dim(), d.state_dim())?;
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    let n = d.state_dim();
    let nw = d.disturbance_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DecompositionReport {
        samples,
        max_diagonal_error: 0.0,
        violations: Vec::new(),
    };

    for s in 0..samples {
        let args = [
            region.sample(&mut rng)?,
            w_set.sample(&mut rng)?,
            region.sample(&mut rng)?,
            w_set.sample(&mut rng)?,
        ];
        let violation = |kind, row, column, magnitude| DecompositionViolation {
            kind,
            sample: s,
            row,
            column,
            magnitude,
            x: args[0].iter().copied().collect(),
            w: args[1].iter().copied().collect(),
            x_hat: args[2].iter().copied().collect(),
            w_hat: args[3].iter().copied().collect(),
        };

        let on_diag = d.eval(&args[0], &args[1], &args[0], &args[1]);
        let truth = field.eval(&args[0], &args[1]);
        check_dim(n, on_diag.len())?;
        for i in 0..n {
            let err = (on_diag[i] - truth[i]).abs();
            report.max_diagonal_error = report.max_diagonal_error.max(err);
            if !(err <= tol.diagonal * (1.0 + truth[i].abs())) {
                report
                    .violations
                    .push(violation(ViolationKind::Diagonal, i, i, err));
            }
        }

        // (argument slot, kind, required sign): +1 means partial must be >= 0
        let slots: [(usize, ViolationKind, f64); 4] = [
            (0, ViolationKind::OffDiagonalState, 1.0),
            (1, ViolationKind::Disturbance, 1.0),
            (2, ViolationKind::HatState, -1.0),
            (3, ViolationKind::HatDisturbance, -1.0),
        ];
        for (slot, kind, sign) in slots {
            let width = if slot % 2 == 0 { n } else { nw };
            for j in 0..width {
                let eps = tol.fd_scale * (1.0 + args[slot][j].abs());
                let mut plus = args.clone();
                let mut minus = args.clone();
                plus[slot][j] += eps;
                minus[slot][j] -= eps;
                let dp = d.eval(&plus[0], &plus[1], &plus[2], &plus[3]);
                let dm = d.eval(&minus[0], &minus[1], &minus[2], &minus[3]);
                for i in 0..n {
                    if slot == 0 && i == j {
                        continue;
                    }
                    let partial = (dp[i] - dm[i]) / (2.0 * eps);
                    if sign * partial < -tol.sign {
                        report.violations.push(violation(kind, i, j, partial.abs()));
                    }
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn scalar_decay() -> ControlAffineSystem {
        ControlAffineSystem::new(
            1,
            1,
            1,
            |x: &Vector| -x,
            |_: &Vector| Matrix::from_element(1, 1, 1.0),
            |_: &Vector| Matrix::from_element(1, 1, 1.0),
            IntervalVector::unbounded(1),
            IntervalVector::uniform(1, -0.5, 0.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn eval_is_affine_in_disturbance() {
        let sys = scalar_decay();
        let x = dvector![0.3];
        let u = dvector![0.1];
        let e = |w: f64| sys.eval(&x, &u, &dvector![w]).unwrap()[0];
        assert!((e(0.2) + e(-0.4) - e(0.0) - e(-0.2)).abs() < 1e-15);
    }

    #[test]
    fn eval_rejects_wrong_shapes() {
        let sys = scalar_decay();
        assert!(matches!(
            sys.eval(&dvector![0.0, 1.0], &dvector![0.0], &dvector![0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn registration_catches_bad_input_matrix() {
        let bad = ControlAffineSystem::new(
            2,
            1,
            1,
            |x: &Vector| x.clone(),
            |_: &Vector| Matrix::zeros(1, 1),
            |_: &Vector| Matrix::zeros(2, 1),
            IntervalVector::unbounded(2),
            IntervalVector::uniform(1, 0.0, 0.0).unwrap(),
        );
        assert!(bad.is_err());
        let unbounded_w = ControlAffineSystem::new(
            1,
            1,
            1,
            |x: &Vector| x.clone(),
            |_: &Vector| Matrix::zeros(1, 1),
            |_: &Vector| Matrix::zeros(1, 1),
            IntervalVector::unbounded(1),
            IntervalVector::unbounded(1),
        );
        assert!(unbounded_w.is_err());
    }

    #[test]
    fn zero_feedback_closed_loop() {
        let sys = scalar_decay();
        let field = sys.close_loop(|_| dvector![0.0]);
        assert_eq!(field.eval(&dvector![2.0], &dvector![0.25])[0], -2.0 + 0.25);
    }

    #[test]
    fn zero_field_is_constant() {
        let x0 = dvector![1.0, -2.0];
        let traj = integrate(|_, x: &Vector| x * 0.0, &x0, 1.0, 0.1, Integrator::Rk4).unwrap();
        assert_eq!(traj.len(), 11);
        assert!(traj.states.iter().all(|x| x == &x0));
        assert_eq!(*traj.times.last().unwrap(), 1.0);
    }

    #[test]
    fn rk4_matches_exponential() {
        let traj = integrate(
            |_, x: &Vector| -x,
            &dvector![1.0],
            1.0,
            0.01,
            Integrator::Rk4,
        )
        .unwrap();
        assert!((traj.last().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn grid_lands_on_horizon() {
        let g = time_grid(0.25, 0.1).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(*g.last().unwrap(), 0.25);
        assert!((g[3] - g[2] - 0.05).abs() < 1e-12);
        assert_eq!(time_grid(0.0, 0.1).unwrap(), vec![0.0]);
        assert_eq!(time_grid(4.0, 0.01).unwrap().len(), 401);
        assert!(time_grid(-1.0, 0.1).is_err());
        assert!(time_grid(1.0, 0.0).is_err());
    }

    #[test]
    fn blowup_returns_finite_prefix() {
        let err = integrate(
            |_, x: &Vector| x.map(|v| v * v * 1e3),
            &dvector![10.0],
            1.0,
            0.1,
            Integrator::Euler,
        )
        .unwrap_err();
        match err {
            Error::Blowup { prefix, .. } => {
                assert!(!prefix.is_empty());
                assert!(prefix.states.iter().all(|x| x[0].is_finite()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rk4_convergence_order() {
        // ẋ = -x + sin(t) on [0, 1]; reference at dt/8
        let f = |t: f64, x: &Vector| x.map(|v| -v + t.sin());
        let x0 = dvector![0.5];
        let end = |dt| {
            integrate(f, &x0, 1.0, dt, Integrator::Rk4)
                .unwrap()
                .last()
                .unwrap()[0]
        };
        let reference = end(0.1 / 8.0);
        let e1 = (end(0.1) - reference).abs();
        let e2 = (end(0.05) - reference).abs();
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn embedding_on_diagonal_with_degenerate_w() {
        let sys = scalar_decay();
        let field = sys.close_loop(|_| dvector![0.0]);
        let d = DecompositionFunction::new(1, 1, |x, w, _, _| -x + w);
        let w = IntervalVector::uniform(1, 0.2, 0.2).unwrap();
        let x = dvector![0.7];
        let e = embedding_field(&d, &w, &EmbeddingState::diagonal(&x)).unwrap();
        let truth = field.eval(&x, &dvector![0.2])[0];
        assert_eq!(e[0], truth);
        assert_eq!(e[1], truth);
    }

    #[test]
    fn embedding_swaps_roles() {
        let d =
            DecompositionFunction::new(2, 1, |x: &Vector, w: &Vector, xh: &Vector, _: &Vector| {
                dvector![-x[0] - xh[1] + w[0], x[0] - x[1]]
            });
        let w = IntervalVector::uniform(1, -0.1, 0.3).unwrap();
        let a = EmbeddingState::new(dvector![0.0, 1.0], dvector![2.0, 3.0]).unwrap();
        let e = embedding_field(&d, &w, &a).unwrap();
        let lower = d.eval(&a.under, w.lower(), &a.over, w.upper());
        let upper = d.eval(&a.over, w.upper(), &a.under, w.lower());
        assert_eq!(e.rows(0, 2).into_owned(), lower);
        assert_eq!(e.rows(2, 2).into_owned(), upper);
        let rhs = embedding_rhs(&d, &w);
        assert_eq!(rhs(&a.stacked()), e);
    }

    #[test]
    fn field_itself_fails_for_competitive_system() {
        // ẋ1 = -x2: negative off-diagonal Jacobian, so F is not a decomposition
        let field = ClosedLoopField::new(2, 1, |x, w| dvector![-x[1] + w[0], -x[1]]);
        let f2 = field.clone();
        let d = DecompositionFunction::new(2, 1, move |x, w, _, _| f2.eval(x, w));
        let region = IntervalVector::uniform(2, -1.0, 1.0).unwrap();
        let w = IntervalVector::uniform(1, -0.1, 0.1).unwrap();
        let report =
            check_decomposition(&d, &field, &region, &w, 50, 3, Default::default()).unwrap();
        assert!(report.count(ViolationKind::OffDiagonalState) > 0);
        assert_eq!(report.count(ViolationKind::Diagonal), 0);
    }

    #[test]
    fn proper_split_passes() {
        let field = ClosedLoopField::new(2, 1, |x, w| dvector![-x[1] + w[0], -x[1]]);
        let d = DecompositionFunction::new(2, 1, |x, w, xh, _| dvector![-xh[1] + w[0], -x[1]]);
        let region = IntervalVector::uniform(2, -1.0, 1.0).unwrap();
        let w = IntervalVector::uniform(1, -0.1, 0.1).unwrap();
        let report =
            check_decomposition(&d, &field, &region, &w, 200, 3, Default::default()).unwrap();
        assert!(report.passed(), "{:?}", report.violations.first());
    }
}
