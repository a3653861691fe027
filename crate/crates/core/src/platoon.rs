//! Vehicle platoon on an incidence graph.
//!
//! State is `(x, z)`: `N` vehicle velocities followed by `K` edge
//! displacements. Velocities follow `ẋ = βx - A u + w`, displacements
//! `ż = Aᵀx`. The backup controller is a saturating spring
//! `u_b(z) = κ·tanh(σz)` per edge, and the backup set is the Lyapunov sublevel
//! set `{V(x, z) <= δ}` of the linearized closed loop.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asif::{AsifFilter, BackupPolicy, ClassK};
use crate::barrier::{BarrierFunction, LookaheadBarrier};
use crate::dynamics::{
    ClosedLoopField, ControlAffineSystem, DecompositionFunction, Matrix, Vector,
};
use crate::error::{Error, Result};
use crate::intervals::IntervalVector;
use crate::reachability::{EmbeddingSystem, UnsafeSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Platoon parameters. Field names follow the configuration file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatoonConfig {
    /// Vehicle count.
    #[serde(rename = "N")]
    pub vehicles: usize,
    /// Incidence matrix, one row per vehicle.
    #[serde(rename = "A")]
    pub incidence: Vec<Vec<f64>>,
    /// Friction coefficient, `<= 0`.
    pub beta: f64,
    /// Spring saturation force.
    pub kappa: f64,
    /// Spring saturation rate.
    pub sigma: f64,
    /// Lyapunov level of the backup set.
    pub delta: f64,
    #[serde(rename = "W")]
    pub disturbance: DisturbanceBox,
    /// LSE sharpness.
    pub p: f64,
    /// Backup horizon in seconds.
    #[serde(rename = "T_b")]
    pub backup_horizon: f64,
    /// `|z_i| >= z_limit` is unsafe.
    pub z_limit: f64,
    /// Gain of the cubic rate function `α(ψ) = gain·ψ³`.
    #[serde(default = "default_alpha_gain")]
    pub alpha_gain: f64,
}

fn default_alpha_gain() -> f64 {
    1000.0
}

impl Default for PlatoonConfig {
    /// Three carts on a chain with two springs.
    fn default() -> Self {
        Self {
            vehicles: 3,
            incidence: vec![vec![-1.0, 0.0], vec![1.0, -1.0], vec![0.0, 1.0]],
            beta: -1.0,
            kappa: 2.0,
            sigma: 0.5,
            delta: 9.0 / 4.0,
            disturbance: DisturbanceBox {
                lower: vec![-0.1; 3],
                upper: vec![0.1; 3],
            },
            p: 1000.0,
            backup_horizon: 1.0,
            z_limit: 8.0,
            alpha_gain: default_alpha_gain(),
        }
    }
}

impl PlatoonConfig {
    pub fn edges(&self) -> usize {
        self.incidence.first().map_or(0, Vec::len)
    }

    pub fn state_dim(&self) -> usize {
        self.vehicles + self.edges()
    }

    pub fn incidence_matrix(&self) -> Result<Matrix> {
        let n = self.vehicles;
        if self.incidence.len() != n {
            return Err(Error::InvalidIncidence(format!(
                "expected {n} rows, found {}",
                self.incidence.len()
            )));
        }
        let k = self.edges();
        if k == 0 {
            return Err(Error::InvalidIncidence("no edges".into()));
        }
        if self.incidence.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidIncidence("ragged rows".into()));
        }
        let a = Matrix::from_fn(n, k, |i, j| self.incidence[i][j]);
        for j in 0..k {
            let col = a.column(j);
            let heads = col.iter().filter(|v| **v == 1.0).count();
            let tails = col.iter().filter(|v| **v == -1.0).count();
            let zeros = col.iter().filter(|v| **v == 0.0).count();
            if heads != 1 || tails != 1 || zeros != n - 2 {
                return Err(Error::InvalidIncidence(format!(
                    "column {j} must hold one +1, one -1 and zeros"
                )));
            }
        }
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        self.incidence_matrix()?;
        let positive = [
            ("delta", self.delta),
            ("kappa", self.kappa),
            ("sigma", self.sigma),
            ("p", self.p),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if !(self.beta <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be <= 0, got {}",
                self.beta
            )));
        }
        if !(self.backup_horizon >= 0.0) || !(self.z_limit > 0.0) || !(self.alpha_gain > 0.0) {
            return Err(Error::InvalidParameter(
                "T_b, z_limit and alpha_gain must be positive".into(),
            ));
        }
        self.disturbance_set()?;
        Ok(())
    }

    pub fn disturbance_set(&self) -> Result<IntervalVector> {
        if self.disturbance.lower.len() != self.vehicles
            || self.disturbance.upper.len() != self.vehicles
        {
            return Err(Error::DimensionMismatch {
                expected: self.vehicles,
                found: self.disturbance.lower.len(),
            });
        }
        let w = IntervalVector::from_slices(&self.disturbance.lower, &self.disturbance.upper)?;
        if !w.is_finite() {
            return Err(Error::InvalidParameter("W must be bounded".into()));
        }
        Ok(w)
    }
}

/// Entrywise split `A = A⁺ + A⁻` into nonnegative and negative parts.
pub fn incidence_parts(a: &Matrix) -> (Matrix, Matrix) {
    (
        a.map(|v| if v >= 0.0 { v } else { 0.0 }),
        a.map(|v| if v < 0.0 { v } else { 0.0 }),
    )
}

/// Lyapunov matrix of the linearized backup closed loop,
/// `[κσI + AAᵀ, -βA; -βAᵀ, (κ²σ² + β²)I + κσAᵀA]`.
pub fn lyapunov_matrix(cfg: &PlatoonConfig) -> Result<Matrix> {
    let a = cfg.incidence_matrix()?;
    let (n, k) = a.shape();
    let ks = cfg.kappa * cfg.sigma;
    let mut p = Matrix::zeros(n + k, n + k);
    p.view_mut((0, 0), (n, n))
        .copy_from(&(Matrix::identity(n, n) * ks + &a * a.transpose()));
    p.view_mut((0, n), (n, k)).copy_from(&(&a * -cfg.beta));
    p.view_mut((n, 0), (k, n))
        .copy_from(&(a.transpose() * -cfg.beta));
    p.view_mut((n, n), (k, k)).copy_from(
        &(Matrix::identity(k, k) * (ks * ks + cfg.beta * cfg.beta) + a.transpose() * &a * ks),
    );
    Ok(p)
}

/// Jacobian of the backup closed loop at the origin,
/// `[βI, -κσA; Aᵀ, 0]`.
pub fn linearization(cfg: &PlatoonConfig) -> Result<Matrix> {
    let a = cfg.incidence_matrix()?;
    let (n, k) = a.shape();
    let mut j = Matrix::zeros(n + k, n + k);
    j.view_mut((0, 0), (n, n))
        .copy_from(&(Matrix::identity(n, n) * cfg.beta));
    j.view_mut((0, n), (n, k))
        .copy_from(&(&a * -(cfg.kappa * cfg.sigma)));
    j.view_mut((n, 0), (k, n)).copy_from(&a.transpose());
    Ok(j)
}

/// How the finite box around `{V <= δ}` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundingBoxMethod {
    /// `±√(δ·(P⁻¹)ᵢᵢ)`, the exact axis extents of the ellipsoid.
    #[default]
    Exact,
    /// `±√(δ/λ_min(P))` on every axis.
    Eigenvalue,
}

/// Everything built from a [`PlatoonConfig`].
#[derive(Debug, Clone)]
pub struct PlatoonModel {
    pub config: PlatoonConfig,
    pub incidence: Matrix,
    pub system: ControlAffineSystem,
    pub policy: BackupPolicy,
    pub closed_loop: ClosedLoopField,
    pub decomposition: DecompositionFunction,
    /// Decomposition function of the time-reversed backup closed loop.
    pub reverse_decomposition: DecompositionFunction,
    pub lyapunov: Matrix,
    pub unsafe_set: UnsafeSet,
}

fn tanh_springs(z: nalgebra::DVectorView<'_, f64>, kappa: f64, sigma: f64) -> Vector {
    z.map(|v| kappa * (sigma * v).tanh())
}

pub fn build_platoon(cfg: &PlatoonConfig) -> Result<PlatoonModel> {
    cfg.validate()?;
    let a = cfg.incidence_matrix()?;
    let (n, k) = a.shape();
    let dim = n + k;
    let (a_plus, a_minus) = incidence_parts(&a);
    let w_set = cfg.disturbance_set()?;
    let (beta, kappa, sigma) = (cfg.beta, cfg.kappa, cfg.sigma);

    let a_drift = a.clone();
    let f = move |s: &Vector| {
        let mut out = Vector::zeros(dim);
        out.rows_mut(0, n).copy_from(&(s.rows(0, n) * beta));
        out.rows_mut(n, k)
            .copy_from(&a_drift.tr_mul(&s.rows(0, n).into_owned()));
        out
    };
    let mut g1m = Matrix::zeros(dim, k);
    g1m.view_mut((0, 0), (n, k)).copy_from(&-&a);
    let mut g2m = Matrix::zeros(dim, n);
    g2m.view_mut((0, 0), (n, n))
        .copy_from(&Matrix::identity(n, n));
    let system = ControlAffineSystem::new(
        dim,
        k,
        n,
        f,
        move |_: &Vector| g1m.clone(),
        move |_: &Vector| g2m.clone(),
        IntervalVector::unbounded(dim),
        w_set.clone(),
    )?;

    let feedback = move |s: &Vector| tanh_springs(s.rows(n, k), kappa, sigma);

    let p_mat = lyapunov_matrix(cfg)?;
    let delta = cfg.delta;
    let p_h = p_mat.clone();
    let p_g = p_mat.clone();
    let barrier = BarrierFunction::new(
        move |s: &Vector| delta - s.dot(&(&p_h * s)),
        move |s: &Vector| (&p_g * s) * -2.0,
        IntervalVector::uniform(dim, -10.0, 10.0)?,
    );
    let bounding_box = lyapunov_bounding_box(&p_mat, delta, BoundingBoxMethod::Exact)?;
    let policy = BackupPolicy::new(
        feedback,
        barrier,
        ClassK::cubic(cfg.alpha_gain),
        cfg.backup_horizon,
        bounding_box,
    )?;
    let closed_loop = system.close_loop(policy.feedback());

    let (ap, am) = (a_plus.clone(), a_minus.clone());
    let decomposition = DecompositionFunction::new(dim, n, move |s, w, s_hat, _w_hat| {
        let (x, z) = (s.rows(0, n), s.rows(n, k));
        let (x_hat, z_hat) = (s_hat.rows(0, n), s_hat.rows(n, k));
        let mut out = Vector::zeros(dim);
        let vel = x * beta + w
            - &am * tanh_springs(z, kappa, sigma)
            - &ap * tanh_springs(z_hat, kappa, sigma);
        let disp = ap.tr_mul(&x.into_owned()) + am.tr_mul(&x_hat.into_owned());
        out.rows_mut(0, n).copy_from(&vel);
        out.rows_mut(n, k).copy_from(&disp);
        out
    });

    let (ap, am) = (a_plus, a_minus);
    let reverse_decomposition = DecompositionFunction::new(dim, n, move |s, _w, s_hat, w_hat| {
        let (x, z) = (s.rows(0, n), s.rows(n, k));
        let (x_hat, z_hat) = (s_hat.rows(0, n), s_hat.rows(n, k));
        let mut out = Vector::zeros(dim);
        let vel = x * -beta - w_hat
            + &ap * tanh_springs(z, kappa, sigma)
            + &am * tanh_springs(z_hat, kappa, sigma);
        let disp = -(am.tr_mul(&x.into_owned()) + ap.tr_mul(&x_hat.into_owned()));
        out.rows_mut(0, n).copy_from(&vel);
        out.rows_mut(n, k).copy_from(&disp);
        out
    });

    Ok(PlatoonModel {
        config: cfg.clone(),
        incidence: a,
        system,
        policy,
        closed_loop,
        decomposition,
        reverse_decomposition,
        lyapunov: p_mat,
        unsafe_set: UnsafeSet::CoordinateThreshold {
            coordinates: (n..dim).collect(),
            limit: cfg.z_limit,
        },
    })
}

/// Axis-aligned box enclosing `{s : sᵀPs <= δ}`.
pub fn lyapunov_bounding_box(
    p: &Matrix,
    delta: f64,
    method: BoundingBoxMethod,
) -> Result<IntervalVector> {
    let dim = p.nrows();
    let extents = match method {
        BoundingBoxMethod::Exact => {
            let inv = p.clone().try_inverse().ok_or(Error::InvalidParameter(
                "Lyapunov matrix is singular".into(),
            ))?;
            Vector::from_fn(dim, |i, _| (delta * inv[(i, i)]).sqrt())
        }
        BoundingBoxMethod::Eigenvalue => {
            let lambda = min_eigenvalue(p);
            if !(lambda > 0.0) {
                return Err(Error::InvalidParameter(
                    "Lyapunov matrix is not positive definite".into(),
                ));
            }
            Vector::from_element(dim, (delta / lambda).sqrt())
        }
    };
    if extents.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "Lyapunov matrix is not positive definite".into(),
        ));
    }
    IntervalVector::new(-&extents, extents)
}

pub fn min_eigenvalue(p: &Matrix) -> f64 {
    SymmetricEigen::new(p.clone()).eigenvalues.min()
}

impl PlatoonModel {
    pub fn vehicles(&self) -> usize {
        self.incidence.nrows()
    }

    pub fn edges(&self) -> usize {
        self.incidence.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.vehicles() + self.edges()
    }

    /// `V(s) = sᵀPs`.
    pub fn lyapunov_value(&self, s: &Vector) -> f64 {
        s.dot(&(&self.lyapunov * s))
    }

    pub fn barrier_value(&self, s: &Vector) -> f64 {
        self.policy.barrier.value(s)
    }

    /// Stacks velocities and displacements into a state vector.
    pub fn state(&self, velocities: &[f64], displacements: &[f64]) -> Result<Vector> {
        if velocities.len() != self.vehicles() || displacements.len() != self.edges() {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim(),
                found: velocities.len() + displacements.len(),
            });
        }
        Ok(Vector::from_iterator(
            self.state_dim(),
            velocities.iter().chain(displacements).copied(),
        ))
    }

    pub fn disturbance_set(&self) -> &IntervalVector {
        self.system.disturbance_set()
    }

    pub fn lyapunov_is_positive_definite(&self) -> bool {
        min_eigenvalue(&self.lyapunov) > 0.0
    }

    pub fn bounding_box(&self, method: BoundingBoxMethod) -> Result<IntervalVector> {
        lyapunov_bounding_box(&self.lyapunov, self.config.delta, method)
    }

    pub fn embedding(&self) -> EmbeddingSystem {
        EmbeddingSystem {
            decomposition: self.decomposition.clone(),
            disturbance: self.disturbance_set().clone(),
            statespace: self.system.statespace().clone(),
        }
    }

    pub fn reverse_embedding(&self) -> EmbeddingSystem {
        EmbeddingSystem {
            decomposition: self.reverse_decomposition.clone(),
            disturbance: self.disturbance_set().clone(),
            statespace: self.system.statespace().clone(),
        }
    }

    pub fn lookahead(&self, dt_embed: f64) -> LookaheadBarrier {
        LookaheadBarrier::new(
            self.embedding(),
            self.policy.barrier.clone(),
            self.config.backup_horizon,
            self.config.p,
            dt_embed,
        )
    }

    pub fn asif_filter(&self, dt_embed: f64) -> Result<AsifFilter> {
        AsifFilter::new(
            self.system.clone(),
            self.policy.clone(),
            self.lookahead(dt_embed),
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceViolation {
    pub state: Vec<f64>,
    pub disturbance: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub samples: usize,
    /// Smallest `∇h·F(x, w) + α(h(x))` over samples and disturbance vertices.
    pub worst_margin: f64,
    /// Same, with `w = 0` only.
    pub worst_zero_disturbance_margin: f64,
    pub violations: Vec<InvarianceViolation>,
}

impl InvarianceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples the backup set and checks the barrier-rate condition
/// `∇h(x)·F(x, w) >= -α(h(x))` at every disturbance vertex.
///
/// A third of the samples are uniform in `{h >= 0}` by rejection from the
/// bounding box, a third lie in the outer shell `V ∈ [0.9δ, δ]` and a third
/// on the boundary `V = δ` itself, where the condition is tightest.
pub fn verify_backup_invariance(
    model: &PlatoonModel,
    n_samples: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    let policy = &model.policy;
    let field = &model.closed_loop;
    let vertices = model.disturbance_set().corners()?;
    let zero_w = Vector::zeros(model.vehicles());
    let delta = model.config.delta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = InvarianceReport {
        samples: n_samples,
        worst_margin: f64::INFINITY,
        worst_zero_disturbance_margin: f64::INFINITY,
        violations: Vec::new(),
    };
    let bbox = &policy.bounding_box;

    for s in 0..n_samples {
        let x = if s % 3 == 0 {
            loop {
                let y = bbox.sample(&mut rng)?;
                if policy.in_backup_set(&y) {
                    break y;
                }
            }
        } else {
            let dir = Vector::from_fn(model.state_dim(), |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let v = model.lyapunov_value(&dir);
            if v <= 0.0 {
                continue;
            }
            let level = if s % 3 == 1 {
                delta * (0.9 + 0.1 * rng.random::<f64>())
            } else {
                delta
            };
            dir * (level / v).sqrt()
        };
        let h = policy.barrier.value(&x);
        let grad = policy.barrier.gradient(&x);
        let rate = policy.alpha.eval(h);
        let margin_at = |w: &Vector| grad.dot(&field.eval(&x, w)) + rate;
        report.worst_zero_disturbance_margin =
            report.worst_zero_disturbance_margin.min(margin_at(&zero_w));
        for w in &vertices {
            let m = margin_at(w);
            report.worst_margin = report.worst_margin.min(m);
            if m < 0.0 {
                report.violations.push(InvarianceViolation {
                    state: x.iter().copied().collect(),
                    disturbance: w.iter().copied().collect(),
                    margin: m,
                });
            }
        }
    }
    Ok(report)
}
