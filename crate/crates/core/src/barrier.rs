//! Soft-min look-ahead barrier.
//!
//! For a state `x`, the embedding system is integrated from the degenerate
//! box `[x, x]` over the backup horizon. At every grid time the concave
//! barrier `h` is evaluated on the 2ⁿ corners of the reach box and combined
//! with a log-sum-exp soft minimum; `Ψ(x)` is the largest of these values.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::Vector;
use crate::error::{check_dim, Error, Result};
use crate::intervals::{EmbeddingState, IntervalVector};
use crate::reachability::{embedding_endpoint, forward_overapprox, EmbeddingSystem, ReachTube};

/// Soft minimum `-(1/p) log Σ exp(-p vᵢ)`, evaluated shifted by the minimum.
pub fn lse(values: &[f64], p: f64) -> Result<f64> {
    let min = checked_min(values, p)?;
    let sum: f64 = values.iter().map(|v| (-p * (v - min)).exp()).sum();
    Ok(min - sum.ln() / p)
}

/// `ln(min(values) - lse(values, p))`, computed without forming the
/// difference. It is finite whenever `values` has two or more entries, which
/// certifies `lse < min` even when the gap is below the resolution of `min`.
/// Returns `-∞` for a single value.
pub fn lse_gap_ln(values: &[f64], p: f64) -> Result<f64> {
    let min = checked_min(values, p)?;
    let imin = values.iter().position(|v| *v == min).unwrap_or(0);
    // exponents of every entry except one copy of the minimum
    let rest: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != imin)
        .map(|(_, v)| -p * (v - min))
        .collect();
    if rest.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    let top = rest.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // ln Σ exp(rest), finite
    let ln_s = top + rest.iter().map(|e| (e - top).exp()).sum::<f64>().ln();
    // gap = ln(1 + s) / p
    let ln_ln1p = if ln_s < -30.0 {
        // ln(1 + s) = s (1 - s/2 + …)
        ln_s + (-0.5 * ln_s.exp()).ln_1p()
    } else {
        ln_s.exp().ln_1p().ln()
    };
    Ok(ln_ln1p - p.ln())
}

/// Normalized weights `exp(-p vᵢ) / Σ exp(-p vⱼ)`; the gradient of
/// [`lse`] with respect to `values`.
pub fn softmin_weights(values: &[f64], p: f64) -> Result<Vec<f64>> {
    let min = checked_min(values, p)?;
    let raw: Vec<f64> = values.iter().map(|v| (-p * (v - min)).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

fn checked_min(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("lse values"));
    }
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lse sharpness must be > 0, got {p}"
        )));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::NonFinite("lse values"));
    }
    Ok(min)
}

type ScalarMap = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
type GradientMap = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// A concave barrier `h` with its gradient. The backup set is `{h >= 0}`.
#[derive(Clone)]
pub struct BarrierFunction {
    h: ScalarMap,
    grad: GradientMap,
    concavity_domain: IntervalVector,
}

impl fmt::Debug for BarrierFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BarrierFunction")
            .field("concavity_domain", &self.concavity_domain)
            .finish_non_exhaustive()
    }
}

/// Worst deviations found by [`BarrierFunction::audit`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BarrierAudit {
    pub max_gradient_rel_error: f64,
    pub worst_midpoint_gap: f64,
}

impl BarrierFunction {
    pub fn new(
        h: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        concavity_domain: IntervalVector,
    ) -> Self {
        Self {
            h: Arc::new(h),
            grad: Arc::new(grad),
            concavity_domain,
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (self.h)(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        (self.grad)(x)
    }

    pub fn concavity_domain(&self) -> &IntervalVector {
        &self.concavity_domain
    }

    /// Samples the concavity domain, comparing the gradient with central
    /// differences and testing midpoint concavity
    /// `h((x+y)/2) - (h(x)+h(y))/2`, whose minimum is reported.
    pub fn audit(&self, samples: usize, seed: u64) -> Result<BarrierAudit> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut audit = BarrierAudit {
            max_gradient_rel_error: 0.0,
            worst_midpoint_gap: f64::INFINITY,
        };
        for _ in 0..samples {
            let x = self.concavity_domain.sample(&mut rng)?;
            let y = self.concavity_domain.sample(&mut rng)?;
            let g = self.gradient(&x);
            let fd = Vector::from_fn(x.len(), |i, _| {
                let eps = 1e-6 * (1.0 + x[i].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += eps;
                xm[i] -= eps;
                (self.value(&xp) - self.value(&xm)) / (2.0 * eps)
            });
            let rel = (&g - &fd).norm() / g.norm().max(1.0);
            audit.max_gradient_rel_error = audit.max_gradient_rel_error.max(rel);
            let mid = (&x + &y) * 0.5;
            let gap = self.value(&mid) - 0.5 * (self.value(&x) + self.value(&y));
            audit.worst_midpoint_gap = audit.worst_midpoint_gap.min(gap);
        }
        Ok(audit)
    }
}

fn corner_values(a: &EmbeddingState, barrier: &BarrierFunction) -> Result<(Vec<Vector>, Vec<f64>)> {
    let corners = a.rect()?.corners()?;
    let values = corners.iter().map(|z| barrier.value(z)).collect();
    Ok((corners, values))
}

/// Exact minimum of `h` over the corners of tube box `k`; `-∞` when the step
/// is invalid.
pub fn gamma_ideal(tube: &ReachTube, barrier: &BarrierFunction, k: usize) -> Result<f64> {
    if !tube.valid.get(k).copied().unwrap_or(false) {
        return Ok(f64::NEG_INFINITY);
    }
    let (_, values) = corner_values(&tube.states[k], barrier)?;
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}

/// Soft minimum of `h` over the full 2ⁿ corner list of tube box `k`; `-∞`
/// when the step is invalid.
pub fn gamma(tube: &ReachTube, barrier: &BarrierFunction, p: f64, k: usize) -> Result<f64> {
    if !tube.valid.get(k).copied().unwrap_or(false) {
        return Ok(f64::NEG_INFINITY);
    }
    gamma_at(&tube.states[k], barrier, p)
}

fn gamma_at(a: &EmbeddingState, barrier: &BarrierFunction, p: f64) -> Result<f64> {
    let (_, values) = corner_values(a, barrier)?;
    lse(&values, p)
}

/// Which route [`LookaheadBarrier::gradient`] takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GradientPath {
    /// Central differences of `γ(τ*; ·)`.
    #[default]
    Direct,
    /// Central differences of the embedding flow, chained through the
    /// soft-min weights and `∇h` at the corners.
    ChainRule,
}

/// `Ψ(x)` together with the data used to compute it.
#[derive(Debug, Clone)]
pub struct PsiEvaluation {
    pub psi: f64,
    pub tau_star: f64,
    pub tau_index: usize,
    pub grad: Vector,
    pub gamma_trace: Vec<(f64, f64)>,
    pub valid_horizon: f64,
    /// Another grid time attains `psi` within the tie tolerance.
    pub tie: bool,
}

/// The look-ahead barrier `Ψ` for a backup policy.
#[derive(Debug, Clone)]
pub struct LookaheadBarrier {
    pub embedding: EmbeddingSystem,
    pub barrier: BarrierFunction,
    /// Backup horizon `T_b` in seconds.
    pub horizon: f64,
    /// LSE sharpness `p`.
    pub sharpness: f64,
    /// Grid step for the embedding simulation.
    pub dt_embed: f64,
    pub gradient_path: GradientPath,
    /// Relative perturbation for flow sensitivities: `fd_scale·(1 + |x_i|)`.
    pub fd_scale: f64,
    pub tie_tolerance: f64,
}

impl LookaheadBarrier {
    pub fn new(
        embedding: EmbeddingSystem,
        barrier: BarrierFunction,
        horizon: f64,
        sharpness: f64,
        dt_embed: f64,
    ) -> Self {
        Self {
            embedding,
            barrier,
            horizon,
            sharpness,
            dt_embed,
            gradient_path: GradientPath::Direct,
            fd_scale: 1e-5,
            tie_tolerance: 1e-12,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.embedding.state_dim()
    }

    /// Reach tube from `[x, x]` over the backup horizon.
    pub fn tube(&self, x: &Vector) -> Result<ReachTube> {
        forward_overapprox(
            &self.embedding,
            &IntervalVector::point(x),
            self.horizon,
            self.dt_embed,
        )
    }

    /// `Ψ(x)` without the gradient (`grad` is left empty).
    pub fn value(&self, x: &Vector) -> Result<PsiEvaluation> {
        check_dim(self.state_dim(), x.len())?;
        let tube = self.tube(x)?;
        if !tube.valid[0] {
            return Err(Error::OutsideStatespace);
        }
        let trace = (0..tube.len())
            .map(|k| {
                Ok((
                    tube.times[k],
                    gamma(&tube, &self.barrier, self.sharpness, k)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mut tau_index, mut psi) = (0, f64::NEG_INFINITY);
        for (k, (_, g)) in trace.iter().enumerate() {
            // strict comparison keeps the earliest maximizer
            if *g > psi {
                psi = *g;
                tau_index = k;
            }
        }
        let tie = trace
            .iter()
            .enumerate()
            .any(|(k, (_, g))| k != tau_index && *g >= psi - self.tie_tolerance);
        Ok(PsiEvaluation {
            psi,
            tau_star: trace[tau_index].0,
            tau_index,
            grad: Vector::zeros(0),
            gamma_trace: trace,
            valid_horizon: tube.valid_horizon().unwrap_or(0.0),
            tie,
        })
    }

    /// `Ψ(x)` and `∂Ψ/∂x` along the configured [`GradientPath`].
    pub fn evaluate(&self, x: &Vector) -> Result<PsiEvaluation> {
        let mut eval = self.value(x)?;
        eval.grad = self.gradient(x, &eval, self.gradient_path)?;
        Ok(eval)
    }

    /// Grid supremum of the exact corner minimum, with its trace.
    pub fn psi_ideal(&self, x: &Vector) -> Result<(f64, Vec<(f64, f64)>)> {
        let tube = self.tube(x)?;
        let trace = (0..tube.len())
            .map(|k| Ok((tube.times[k], gamma_ideal(&tube, &self.barrier, k)?)))
            .collect::<Result<Vec<_>>>()?;
        let sup = trace
            .iter()
            .map(|(_, g)| *g)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((sup, trace))
    }

    pub fn gradient(&self, x: &Vector, eval: &PsiEvaluation, path: GradientPath) -> Result<Vector> {
        let (direct, chain) = self.gradients(x, eval)?;
        Ok(match path {
            GradientPath::Direct => direct,
            GradientPath::ChainRule => chain,
        })
    }

    /// Both gradient routes from one set of 2n perturbed simulations to `τ*`.
    pub fn gradients(&self, x: &Vector, eval: &PsiEvaluation) -> Result<(Vector, Vector)> {
        let n = self.state_dim();
        check_dim(n, x.len())?;
        if !eval.tau_star.is_finite() || !eval.psi.is_finite() {
            return Err(Error::NonFinite("maximizing time"));
        }
        let p = self.sharpness;
        let nominal = self.endpoint(x, eval.tau_star)?;

        let mut direct = Vector::zeros(n);
        let mut d_under = crate::dynamics::Matrix::zeros(n, n);
        let mut d_over = crate::dynamics::Matrix::zeros(n, n);
        for i in 0..n {
            let eps = self.fd_scale * (1.0 + x[i].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += eps;
            xm[i] -= eps;
            let ap = self.endpoint(&xp, eval.tau_star)?;
            let am = self.endpoint(&xm, eval.tau_star)?;
            direct[i] =
                (gamma_at(&ap, &self.barrier, p)? - gamma_at(&am, &self.barrier, p)?) / (2.0 * eps);
            d_under.set_column(i, &((&ap.under - &am.under) / (2.0 * eps)));
            d_over.set_column(i, &((&ap.over - &am.over) / (2.0 * eps)));
        }

        let (corners, values) = corner_values(&nominal, &self.barrier)?;
        let weights = softmin_weights(&values, p)?;
        let mut chain = Vector::zeros(n);
        for (c, (z, weight)) in corners.iter().zip(&weights).enumerate() {
            if *weight == 0.0 {
                continue;
            }
            let gh = self.barrier.gradient(z);
            for j in 0..n {
                let row = if c >> j & 1 == 1 {
                    d_over.row(j)
                } else {
                    d_under.row(j)
                };
                chain += row.transpose() * (weight * gh[j]);
            }
        }
        Ok((direct, chain))
    }

    fn endpoint(&self, x: &Vector, tau: f64) -> Result<EmbeddingState> {
        embedding_endpoint(&self.embedding, x, tau, self.dt_embed)?.ok_or(Error::NonFinite(
            "embedding trajectory lost validity before the maximizing time",
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DecompositionFunction;
    use nalgebra::dvector;
    use proptest::prelude::*;

    #[test]
    fn lse_singleton_is_identity() {
        for p in [0.1, 1.0, 1000.0] {
            assert_eq!(lse(&[3.25], p).unwrap(), 3.25);
            assert_eq!(lse_gap_ln(&[3.25], p).unwrap(), f64::NEG_INFINITY);
        }
    }

    #[test]
    fn lse_of_two_zeros() {
        assert!((lse(&[0.0, 0.0], 1.0).unwrap() + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn lse_sharp_pair() {
        let v = lse(&[1.0, 2.0], 1000.0).unwrap();
        assert!(v >= 1.0 - std::f64::consts::LN_2 / 1000.0);
        assert!(v <= 1.0);
        assert!((v - 1.0).abs() < 1e-6);
        // the true gap is e^{-1000}/1000, far below one ulp of 1.0
        let gap_ln = lse_gap_ln(&[1.0, 2.0], 1000.0).unwrap();
        assert!(gap_ln.is_finite());
        assert!((gap_ln - (-1000.0 - 1000f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn lse_errors() {
        assert!(matches!(lse(&[], 1.0), Err(Error::Empty(_))));
        assert!(matches!(lse(&[1.0], 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(lse(&[1.0], -2.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn weights_sum_to_one() {
        let w = softmin_weights(&[0.1, 0.2, 0.1, 5.0], 10.0).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[0], w[2]);
    }

    proptest! {
        #[test]
        fn lse_sandwich(values in prop::collection::vec(-50.0f64..50.0, 1..40), p in 0.01f64..2000.0) {
            let v = lse(&values, p).unwrap();
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let bound = min - (values.len() as f64).ln() / p;
            prop_assert!(v >= bound - 1e-12 * (1.0 + min.abs()));
            prop_assert!(v <= min);
            if values.len() > 1 {
                prop_assert!(lse_gap_ln(&values, p).unwrap().is_finite());
            }
        }

        #[test]
        fn gap_matches_direct_difference(values in prop::collection::vec(-1.0f64..1.0, 2..10), p in 0.1f64..5.0) {
            let direct = values.iter().copied().fold(f64::INFINITY, f64::min) - lse(&values, p).unwrap();
            let via_ln = lse_gap_ln(&values, p).unwrap().exp();
            prop_assert!((direct - via_ln).abs() <= 1e-12 * (1.0 + direct));
        }
    }

    fn linear_barrier() -> BarrierFunction {
        BarrierFunction::new(
            |z: &Vector| z[0] + z[1],
            |_: &Vector| dvector![1.0, 1.0],
            IntervalVector::unbounded(2),
        )
    }

    #[test]
    fn gamma_ideal_of_linear_barrier_is_vertex_min() {
        let d = DecompositionFunction::new(2, 1, |x: &Vector, _, _, _| x * 0.0);
        let sys = EmbeddingSystem::new(
            d,
            IntervalVector::uniform(1, 0.0, 0.0).unwrap(),
            IntervalVector::unbounded(2),
        )
        .unwrap();
        let tube = forward_overapprox(
            &sys,
            &IntervalVector::uniform(2, 0.0, 1.0).unwrap(),
            0.0,
            0.1,
        )
        .unwrap();
        assert_eq!(gamma_ideal(&tube, &linear_barrier(), 0).unwrap(), 0.0);
        let g = gamma(&tube, &linear_barrier(), 2.0, 0).unwrap();
        assert!(g < 0.0 && g >= -2.0 * std::f64::consts::LN_2 / 2.0);
    }

    #[test]
    fn invalid_step_gives_sentinel() {
        let d = DecompositionFunction::new(2, 1, |x: &Vector, _, _, _| x * 0.0);
        let sys = EmbeddingSystem::new(
            d,
            IntervalVector::uniform(1, 0.0, 0.0).unwrap(),
            IntervalVector::uniform(2, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let tube = forward_overapprox(&sys, &IntervalVector::point(&dvector![3.0, 0.0]), 0.0, 0.1)
            .unwrap();
        assert_eq!(
            gamma(&tube, &linear_barrier(), 10.0, 0).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(
            gamma_ideal(&tube, &linear_barrier(), 0).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn static_flow_gradient_is_grad_h() {
        // ẋ = 0 and no disturbance: the flow is the identity
        let d = DecompositionFunction::new(2, 1, |x: &Vector, _, _, _| x * 0.0);
        let sys = EmbeddingSystem::new(
            d,
            IntervalVector::uniform(1, 0.0, 0.0).unwrap(),
            IntervalVector::unbounded(2),
        )
        .unwrap();
        let la = LookaheadBarrier::new(sys, linear_barrier(), 1.0, 1000.0, 0.1);
        let x = dvector![0.3, -0.1];
        let eval = la.evaluate(&x).unwrap();
        let expected = 0.2 - 2.0 * std::f64::consts::LN_2 / 1000.0;
        assert!((eval.psi - expected).abs() < 1e-12);
        // constant trace: every grid time ties, the earliest is kept
        assert_eq!(eval.tau_index, 0);
        assert!(eval.tie);
        let (direct, chain) = la.gradients(&x, &eval).unwrap();
        assert!((direct - dvector![1.0, 1.0]).amax() < 1e-9);
        assert!((chain - dvector![1.0, 1.0]).amax() < 1e-9);
    }

    #[test]
    fn point_outside_statespace_errors() {
        let d = DecompositionFunction::new(1, 1, |x: &Vector, _, _, _| x * 0.0);
        let sys = EmbeddingSystem::new(
            d,
            IntervalVector::uniform(1, 0.0, 0.0).unwrap(),
            IntervalVector::uniform(1, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let b = BarrierFunction::new(
            |z: &Vector| 1.0 - z[0] * z[0],
            |z: &Vector| z * -2.0,
            IntervalVector::unbounded(1),
        );
        let la = LookaheadBarrier::new(sys, b, 1.0, 10.0, 0.1);
        assert!(la.value(&dvector![2.0]).is_err());
        assert!(la.value(&dvector![0.5]).is_ok());
    }

    #[test]
    fn audit_flags_convex_function() {
        let concave = BarrierFunction::new(
            |z: &Vector| 1.0 - z.norm_squared(),
            |z: &Vector| z * -2.0,
            IntervalVector::uniform(2, -2.0, 2.0).unwrap(),
        );
        let a = concave.audit(200, 1).unwrap();
        assert!(a.max_gradient_rel_error < 1e-5);
        assert!(a.worst_midpoint_gap >= -1e-9);
        let convex = BarrierFunction::new(
            |z: &Vector| z.norm_squared(),
            |z: &Vector| z * 2.0,
            IntervalVector::uniform(2, -2.0, 2.0).unwrap(),
        );
        assert!(convex.audit(200, 1).unwrap().worst_midpoint_gap < 0.0);
    }
}
