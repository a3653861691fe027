//! Reachable-set over-approximation through the embedding system, sampled
//! under-approximations, and the backup-horizon check.
//!
//! Integrating the embedding system from `(x̲, x̄)` yields a box trace
//! containing every trajectory of the disturbed system started in
//! `[x̲, x̄]`, provided the embedding state stays ordered and inside
//! `X × X` for the whole horizon. Once that hypothesis fails the remaining
//! steps of the tube are flagged invalid.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{
    embedding_rhs, integrate, step_with, time_grid, ClosedLoopField, DecompositionFunction,
    Integrator, Trajectory, Vector,
};
use crate::error::{check_dim, Error, Result};
use crate::harness::disturbance::{DisturbanceSignal, DEFAULT_SEGMENT};
use crate::intervals::{EmbeddingState, IntervalVector};

/// Slack used when checking sampled states against tube boxes.
pub const CONTAINMENT_TOLERANCE: f64 = 1e-6;

/// Decomposition function bundled with the sets it is evaluated over.
#[derive(Debug, Clone)]
pub struct EmbeddingSystem {
    pub decomposition: DecompositionFunction,
    pub disturbance: IntervalVector,
    pub statespace: IntervalVector,
}

impl EmbeddingSystem {
    pub fn new(
        decomposition: DecompositionFunction,
        disturbance: IntervalVector,
        statespace: IntervalVector,
    ) -> Result<Self> {
        check_dim(decomposition.state_dim(), statespace.dim())?;
        check_dim(decomposition.disturbance_dim(), disturbance.dim())?;
        if !disturbance.is_finite() {
            return Err(Error::InvalidParameter(
                "disturbance set must be bounded".into(),
            ));
        }
        Ok(Self {
            decomposition,
            disturbance,
            statespace,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.decomposition.state_dim()
    }

    fn admissible(&self, a: &EmbeddingState) -> bool {
        a.is_ordered()
            && self.statespace.contains(&a.under).unwrap_or(false)
            && self.statespace.contains(&a.over).unwrap_or(false)
    }
}

/// Box trace `⟦Φᵉ(t; (x̲, x̄))⟧` on a fixed grid.
#[derive(Debug, Clone)]
pub struct ReachTube {
    pub times: Vec<f64>,
    pub states: Vec<EmbeddingState>,
    pub valid: Vec<bool>,
}

impl ReachTube {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The box at step `k`, or `None` when the step is invalid.
    pub fn rect(&self, k: usize) -> Option<IntervalVector> {
        if *self.valid.get(k)? {
            self.states[k].rect().ok()
        } else {
            None
        }
    }

    pub fn terminal(&self) -> Option<IntervalVector> {
        self.rect(self.len().checked_sub(1)?)
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|v| *v)
    }

    /// Largest grid time whose box is valid.
    pub fn valid_horizon(&self) -> Option<f64> {
        self.valid.iter().rposition(|v| *v).map(|k| self.times[k])
    }
}

/// Over-approximates the reachable tube from `x0_box` over `[0, horizon]`
/// with RK4 steps of size `dt`.
pub fn forward_overapprox(
    system: &EmbeddingSystem,
    x0_box: &IntervalVector,
    horizon: f64,
    dt: f64,
) -> Result<ReachTube> {
    check_dim(system.state_dim(), x0_box.dim())?;
    if !x0_box.is_finite() {
        return Err(Error::InvalidParameter(
            "initial box must be bounded".into(),
        ));
    }
    let grid = time_grid(horizon, dt)?;
    let rhs = embedding_rhs(&system.decomposition, &system.disturbance);
    let field = |_: f64, a: &Vector| rhs(a);

    let first = EmbeddingState::from_box(x0_box);
    let mut ok = system.admissible(&first);
    let mut tube = ReachTube {
        times: grid.clone(),
        states: Vec::with_capacity(grid.len()),
        valid: Vec::with_capacity(grid.len()),
    };
    let mut current = first.stacked();
    tube.states.push(first);
    tube.valid.push(ok);

    for k in 1..grid.len() {
        if current.iter().all(|v| v.is_finite()) {
            current = step_with(
                &field,
                Integrator::Rk4,
                grid[k - 1],
                &current,
                grid[k] - grid[k - 1],
            );
        }
        let state = EmbeddingState::from_stacked(&current)?;
        let finite = current.iter().all(|v| v.is_finite());
        ok = ok && finite && system.admissible(&state);
        tube.states.push(state);
        tube.valid.push(ok);
    }
    Ok(tube)
}

/// Embedding state `Φᵉ(horizon; (x, x))`, or `None` if the tube lost
/// validity before the horizon.
pub fn embedding_endpoint(
    system: &EmbeddingSystem,
    x: &Vector,
    horizon: f64,
    dt: f64,
) -> Result<Option<EmbeddingState>> {
    let tube = forward_overapprox(system, &IntervalVector::point(x), horizon, dt)?;
    let last = tube.len() - 1;
    Ok(tube.valid[last].then(|| tube.states[last].clone()))
}

/// Terminal states of sampled disturbed rollouts.
#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub endpoints: Vec<Vector>,
    /// Indices of samples whose integration blew up.
    pub failed: Vec<usize>,
}

/// Sampled rollouts of `F` from `x0`; sample `i` uses disturbance stream `i`
/// of `seed`.
pub fn monte_carlo_trajectories(
    field: &ClosedLoopField,
    x0: &Vector,
    w: &IntervalVector,
    horizon: f64,
    dt: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Result<Trajectory>>> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
    }
    check_dim(field.state_dim(), x0.len())?;
    (0..n_samples as u64)
        .map(|i| {
            let signal = DisturbanceSignal::from_stream(seed, i, w, horizon, DEFAULT_SEGMENT)?;
            Ok(integrate(
                |t, x: &Vector| field.eval(x, &signal.eval(t)),
                x0,
                horizon,
                dt,
                Integrator::Rk4,
            ))
        })
        .collect()
}

pub fn monte_carlo_endpoints(
    field: &ClosedLoopField,
    x0: &Vector,
    w: &IntervalVector,
    horizon: f64,
    dt: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MonteCarloResult> {
    let runs = monte_carlo_trajectories(field, x0, w, horizon, dt, n_samples, seed)?;
    let mut out = MonteCarloResult {
        endpoints: Vec::new(),
        failed: Vec::new(),
    };
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(traj) => out
                .endpoints
                .push(traj.states.last().cloned().unwrap_or_else(|| x0.clone())),
            Err(_) => out.failed.push(i),
        }
    }
    Ok(out)
}

/// Outcome of the one-directional basin test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum BasinVerdict {
    /// Earliest grid time `T` with `γ^ideal(T; x) >= 0`.
    Demonstrated { time: f64 },
    /// No grid time certified membership. This is not evidence of
    /// non-membership.
    NotDemonstrated,
}

pub fn basin_member(gamma_ideal_trace: &[(f64, f64)]) -> Result<BasinVerdict> {
    if gamma_ideal_trace.is_empty() {
        return Err(Error::Empty("gamma trace"));
    }
    Ok(gamma_ideal_trace
        .iter()
        .find(|(_, g)| *g >= 0.0)
        .map_or(BasinVerdict::NotDemonstrated, |(t, _)| {
            BasinVerdict::Demonstrated { time: *t }
        }))
}

/// An unsafe region of the statespace.
#[derive(Clone)]
pub enum UnsafeSet {
    /// `{x : |x_i| >= limit for some i in coordinates}`.
    CoordinateThreshold { coordinates: Vec<usize>, limit: f64 },
    /// Arbitrary membership test. Box checks against it are sampled.
    Predicate(Arc<dyn Fn(&Vector) -> bool + Send + Sync>),
}

impl fmt::Debug for UnsafeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CoordinateThreshold { coordinates, limit } => f
                .debug_struct("CoordinateThreshold")
                .field("coordinates", coordinates)
                .field("limit", limit)
                .finish(),
            Self::Predicate(_) => f.write_str("Predicate(..)"),
        }
    }
}

/// Result of testing a box against an [`UnsafeSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxCheck {
    pub disjoint: bool,
    /// Distance to the threshold; only defined for threshold sets.
    pub margin: Option<f64>,
    /// False when the answer comes from sampling corners and center.
    pub exact: bool,
}

impl UnsafeSet {
    pub fn contains(&self, x: &Vector) -> bool {
        match self {
            Self::CoordinateThreshold { coordinates, limit } => {
                coordinates.iter().any(|&i| x[i].abs() >= *limit)
            }
            Self::Predicate(p) => p(x),
        }
    }

    /// Smallest `limit - |x_i|`; negative inside the set.
    pub fn margin(&self, x: &Vector) -> Option<f64> {
        match self {
            Self::CoordinateThreshold { coordinates, limit } => coordinates
                .iter()
                .map(|&i| limit - x[i].abs())
                .reduce(f64::min),
            Self::Predicate(_) => None,
        }
    }

    pub fn check_box(&self, iv: &IntervalVector) -> Result<BoxCheck> {
        match self {
            Self::CoordinateThreshold { coordinates, limit } => {
                let margin = coordinates
                    .iter()
                    .map(|&i| limit - iv.lower()[i].abs().max(iv.upper()[i].abs()))
                    .fold(f64::INFINITY, f64::min);
                Ok(BoxCheck {
                    disjoint: margin > 0.0,
                    margin: Some(margin),
                    exact: true,
                })
            }
            Self::Predicate(p) => {
                let hit = p(&iv.center()) || iv.corners()?.iter().any(|c| p(c));
                Ok(BoxCheck {
                    disjoint: !hit,
                    margin: None,
                    exact: false,
                })
            }
        }
    }
}

/// Which computation produced a backward-reach verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackwardReachVerdict {
    /// Over-approximated backward tube is disjoint from the unsafe set.
    ProvedByReachability,
    /// The tube check is unavailable or failed, and sampling found no
    /// counterexample. Not a proof.
    NotRefutedBySampling,
    /// The tube check failed and no sampled counterexample exists either.
    /// Reported only when the tube was computed.
    ReachabilityInconclusive,
    /// Sampling found a state of the unsafe set that reaches the backup set.
    Refuted,
}

#[derive(Debug, Clone, Serialize)]
pub struct FalsificationResult {
    pub samples: usize,
    pub counterexamples: usize,
    pub first_counterexample: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BackwardReachReport {
    pub backup_horizon: f64,
    /// None when no reversed decomposition function was supplied.
    pub tube_valid: Option<bool>,
    pub tube_disjoint: Option<bool>,
    pub tube_exact: Option<bool>,
    pub min_margin: Option<f64>,
    pub falsification: FalsificationResult,
    pub verdict: BackwardReachVerdict,
}

impl BackwardReachReport {
    pub fn passed(&self) -> bool {
        matches!(
            self.verdict,
            BackwardReachVerdict::ProvedByReachability | BackwardReachVerdict::NotRefutedBySampling
        )
    }
}

/// Inputs describing the backup set for [`check_backward_reach`].
pub struct BackupSet<'a> {
    pub bounding_box: &'a IntervalVector,
    pub contains: &'a (dyn Fn(&Vector) -> bool + Sync),
}

#[derive(Debug, Clone, Copy)]
pub struct BackwardReachSettings {
    pub backup_horizon: f64,
    pub dt: f64,
    pub falsification_samples: usize,
    pub seed: u64,
}

/// Checks that no state of the unsafe set reaches the backup set within the
/// backup horizon.
///
/// With `reverse` supplied (a decomposition function of `-F`), the reversed
/// embedding system is integrated from the bounding box of the backup set and
/// every tube box is tested against the unsafe set. Independently, backup-set
/// states are sampled and integrated backwards under random disturbances; any
/// backward trajectory entering the unsafe set is a counterexample.
pub fn check_backward_reach(
    field: &ClosedLoopField,
    reverse: Option<&EmbeddingSystem>,
    backup_set: &BackupSet<'_>,
    unsafe_set: &UnsafeSet,
    w: &IntervalVector,
    settings: BackwardReachSettings,
) -> Result<BackwardReachReport> {
    let mut tube_valid = None;
    let mut tube_disjoint = None;
    let mut tube_exact = None;
    let mut min_margin = None;

    if let Some(sys) = reverse {
        let tube = forward_overapprox(
            sys,
            backup_set.bounding_box,
            settings.backup_horizon,
            settings.dt,
        )?;
        let valid = tube.all_valid();
        let mut disjoint = valid;
        let mut exact = true;
        let mut margin = f64::INFINITY;
        for k in 0..tube.len() {
            let Some(rect) = tube.rect(k) else { continue };
            let check = unsafe_set.check_box(&rect)?;
            disjoint &= check.disjoint;
            exact &= check.exact;
            if let Some(m) = check.margin {
                margin = margin.min(m);
            }
        }
        tube_valid = Some(valid);
        tube_disjoint = Some(disjoint);
        tube_exact = Some(exact);
        min_margin = margin.is_finite().then_some(margin);
    }

    let falsification = falsify_backward(field, backup_set, unsafe_set, w, settings)?;

    let verdict = if falsification.counterexamples > 0 {
        BackwardReachVerdict::Refuted
    } else if tube_disjoint == Some(true) && tube_exact == Some(true) {
        BackwardReachVerdict::ProvedByReachability
    } else if tube_disjoint.is_some() && tube_exact == Some(true) {
        BackwardReachVerdict::ReachabilityInconclusive
    } else {
        BackwardReachVerdict::NotRefutedBySampling
    };

    Ok(BackwardReachReport {
        backup_horizon: settings.backup_horizon,
        tube_valid,
        tube_disjoint,
        tube_exact,
        min_margin,
        falsification,
        verdict,
    })
}

fn falsify_backward(
    field: &ClosedLoopField,
    backup_set: &BackupSet<'_>,
    unsafe_set: &UnsafeSet,
    w: &IntervalVector,
    settings: BackwardReachSettings,
) -> Result<FalsificationResult> {
    const MAX_REJECTIONS: usize = 10_000;
    let reversed = field.reversed();
    let mut result = FalsificationResult {
        samples: settings.falsification_samples,
        counterexamples: 0,
        first_counterexample: None,
    };

    for i in 0..settings.falsification_samples as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(i);
        let mut start = None;
        for _ in 0..MAX_REJECTIONS {
            let y = backup_set.bounding_box.sample(&mut rng)?;
            if (backup_set.contains)(&y) {
                start = Some(y);
                break;
            }
        }
        let Some(y) = start else {
            return Err(Error::InvalidParameter(
                "backup set is empty within its bounding box".into(),
            ));
        };
        // disturbance streams are offset so they do not reuse the state stream
        let signal = DisturbanceSignal::from_stream(
            settings.seed,
            i + (1 << 32),
            w,
            settings.backup_horizon,
            DEFAULT_SEGMENT,
        )?;
        let traj = match integrate(
            |t, x: &Vector| reversed.eval(x, &signal.eval(t)),
            &y,
            settings.backup_horizon,
            settings.dt,
            Integrator::Rk4,
        ) {
            Ok(t) => t,
            Err(Error::Blowup { prefix, .. }) => *prefix,
            Err(e) => return Err(e),
        };
        if let Some(hit) = traj.states.iter().find(|x| unsafe_set.contains(x)) {
            result.counterexamples += 1;
            result
                .first_counterexample
                .get_or_insert_with(|| hit.iter().copied().collect());
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    // ẋ1 = -x1 + x2 + w, ẋ2 = -x2; cooperative, so d = F with w split.
    fn coop() -> (EmbeddingSystem, ClosedLoopField) {
        let d = DecompositionFunction::new(2, 1, |x, w, _, _| dvector![-x[0] + x[1] + w[0], -x[1]]);
        let f = ClosedLoopField::new(2, 1, |x, w| dvector![-x[0] + x[1] + w[0], -x[1]]);
        let sys = EmbeddingSystem::new(
            d,
            IntervalVector::uniform(1, -0.1, 0.1).unwrap(),
            IntervalVector::unbounded(2),
        )
        .unwrap();
        (sys, f)
    }

    #[test]
    fn zero_horizon_is_initial_box() {
        let (sys, _) = coop();
        let b = IntervalVector::from_slices(&[0.0, 1.0], &[0.5, 1.5]).unwrap();
        let tube = forward_overapprox(&sys, &b, 0.0, 0.01).unwrap();
        assert_eq!(tube.len(), 1);
        assert_eq!(tube.rect(0).unwrap(), b);
    }

    #[test]
    fn degenerate_start_and_disturbance_collapse() {
        let (mut sys, f) = coop();
        sys.disturbance = IntervalVector::uniform(1, 0.05, 0.05).unwrap();
        let x0 = dvector![0.3, -0.7];
        let tube = forward_overapprox(&sys, &IntervalVector::point(&x0), 1.0, 0.01).unwrap();
        let traj = integrate(
            |_, x: &Vector| f.eval(x, &dvector![0.05]),
            &x0,
            1.0,
            0.01,
            Integrator::Rk4,
        )
        .unwrap();
        for k in 0..tube.len() {
            let r = tube.rect(k).unwrap();
            assert!(r.widths().amax() < 1e-9);
            assert!((r.lower() - &traj.states[k]).amax() < 1e-9);
        }
    }

    #[test]
    fn samples_stay_in_tube() {
        let (sys, f) = coop();
        let x0 = dvector![0.2, 0.4];
        let tube = forward_overapprox(&sys, &IntervalVector::point(&x0), 1.0, 0.01).unwrap();
        let runs = monte_carlo_trajectories(&f, &x0, &sys.disturbance, 1.0, 0.01, 50, 7).unwrap();
        for run in runs {
            let traj = run.unwrap();
            for k in 0..tube.len() {
                let r = tube.rect(k).unwrap().inflate(CONTAINMENT_TOLERANCE);
                assert!(r.contains(&traj.states[k]).unwrap());
            }
        }
    }

    #[test]
    fn leaving_statespace_invalidates_tail() {
        let (mut sys, _) = coop();
        sys.statespace = IntervalVector::uniform(2, -0.01, 1.0).unwrap();
        // the lower edge of x1 is pushed down by w̲ = -0.1
        let tube = forward_overapprox(&sys, &IntervalVector::point(&dvector![0.0, 0.0]), 1.0, 0.01)
            .unwrap();
        let first_bad = tube.valid.iter().position(|v| !v).expect("should leave X");
        assert!(tube.valid[first_bad..].iter().all(|v| !v));
        assert!(tube.rect(first_bad).is_none());
        assert_eq!(tube.valid_horizon(), Some(tube.times[first_bad - 1]));
    }

    #[test]
    fn blowup_marks_invalid_without_error() {
        let d = DecompositionFunction::new(1, 1, |x, _, _, _| x.map(|v| v * v * 100.0));
        let sys = EmbeddingSystem::new(
            d,
            IntervalVector::uniform(1, 0.0, 0.0).unwrap(),
            IntervalVector::unbounded(1),
        )
        .unwrap();
        let tube =
            forward_overapprox(&sys, &IntervalVector::point(&dvector![5.0]), 1.0, 0.05).unwrap();
        assert!(!tube.all_valid());
        assert_eq!(tube.len(), 21);
        assert!(tube.valid[0]);
    }

    #[test]
    fn degenerate_disturbance_gives_identical_endpoints() {
        let (_, f) = coop();
        let w = IntervalVector::uniform(1, 0.02, 0.02).unwrap();
        let mc = monte_carlo_endpoints(&f, &dvector![1.0, 1.0], &w, 1.0, 0.01, 5, 3).unwrap();
        assert_eq!(mc.endpoints.len(), 5);
        assert!(mc.endpoints.iter().all(|e| e == &mc.endpoints[0]));
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let (sys, f) = coop();
        let a = monte_carlo_endpoints(&f, &dvector![1.0, 1.0], &sys.disturbance, 1.0, 0.01, 8, 3)
            .unwrap();
        let b = monte_carlo_endpoints(&f, &dvector![1.0, 1.0], &sys.disturbance, 1.0, 0.01, 8, 3)
            .unwrap();
        assert_eq!(a.endpoints, b.endpoints);
    }

    #[test]
    fn basin_verdicts() {
        assert_eq!(
            basin_member(&[(0.0, 0.1), (0.1, 0.2)]).unwrap(),
            BasinVerdict::Demonstrated { time: 0.0 }
        );
        assert_eq!(
            basin_member(&[(0.0, -0.1), (0.1, 0.0)]).unwrap(),
            BasinVerdict::Demonstrated { time: 0.1 }
        );
        assert_eq!(
            basin_member(&[(0.0, -1.0), (0.1, -0.5)]).unwrap(),
            BasinVerdict::NotDemonstrated
        );
        assert!(basin_member(&[]).is_err());
    }

    #[test]
    fn threshold_box_check() {
        let xu = UnsafeSet::CoordinateThreshold {
            coordinates: vec![1],
            limit: 8.0,
        };
        let inside = IntervalVector::from_slices(&[-100.0, -7.5], &[100.0, 7.0]).unwrap();
        let c = xu.check_box(&inside).unwrap();
        assert!(c.disjoint && c.exact);
        assert_eq!(c.margin, Some(0.5));
        let touching = IntervalVector::from_slices(&[0.0, 7.0], &[0.0, 8.0]).unwrap();
        assert!(!xu.check_box(&touching).unwrap().disjoint);
        assert!(xu.contains(&dvector![0.0, -8.0]));
    }
}
