//! Offline certification of a platoon configuration.

use serde::Serialize;

use crate::dynamics::{check_decomposition, DecompositionReport, DecompositionTolerances};
use crate::error::Result;
use crate::intervals::IntervalVector;
use crate::platoon::{verify_backup_invariance, InvarianceReport, PlatoonModel};
use crate::reachability::{
    check_backward_reach, BackupSet, BackwardReachReport, BackwardReachSettings,
};

#[derive(Debug, Clone, Copy)]
pub struct VerifySettings {
    pub decomposition_samples: usize,
    /// Half-width of the sampled region for the decomposition check.
    pub decomposition_radius: f64,
    pub invariance_samples: usize,
    pub falsification_samples: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            decomposition_samples: 10_000,
            decomposition_radius: 6.0,
            invariance_samples: 10_000,
            falsification_samples: 10_000,
            dt: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionSummary {
    pub samples: usize,
    pub max_diagonal_error: f64,
    pub violations: usize,
    pub passed: bool,
}

impl From<&DecompositionReport> for DecompositionSummary {
    fn from(r: &DecompositionReport) -> Self {
        Self {
            samples: r.samples,
            max_diagonal_error: r.max_diagonal_error,
            violations: r.violations.len(),
            passed: r.passed(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceSummary {
    pub samples: usize,
    pub worst_margin: f64,
    pub worst_zero_disturbance_margin: f64,
    pub violations: usize,
    pub lyapunov_positive_definite: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationSummary {
    pub decomposition: DecompositionSummary,
    pub reverse_decomposition: DecompositionSummary,
    pub invariance: InvarianceSummary,
    pub backward_reach: BackwardReachReport,
    pub passed: bool,
}

pub fn verify_platoon(
    model: &PlatoonModel,
    settings: VerifySettings,
) -> Result<VerificationSummary> {
    let n = model.state_dim();
    let region = IntervalVector::uniform(
        n,
        -settings.decomposition_radius,
        settings.decomposition_radius,
    )?;
    let w = model.disturbance_set();
    let tol = DecompositionTolerances::default();
    let forward = check_decomposition(
        &model.decomposition,
        &model.closed_loop,
        &region,
        w,
        settings.decomposition_samples,
        settings.seed,
        tol,
    )?;
    let reverse = check_decomposition(
        &model.reverse_decomposition,
        &model.closed_loop.reversed(),
        &region,
        w,
        settings.decomposition_samples,
        settings.seed,
        tol,
    )?;

    let inv: InvarianceReport =
        verify_backup_invariance(model, settings.invariance_samples, settings.seed)?;
    let pd = model.lyapunov_is_positive_definite();
    let invariance = InvarianceSummary {
        samples: inv.samples,
        worst_margin: inv.worst_margin,
        worst_zero_disturbance_margin: inv.worst_zero_disturbance_margin,
        violations: inv.violations.len(),
        lyapunov_positive_definite: pd,
        passed: inv.passed() && pd,
    };

    let policy = &model.policy;
    let contains = |x: &crate::dynamics::Vector| policy.in_backup_set(x);
    let backward_reach = check_backward_reach(
        &model.closed_loop,
        Some(&model.reverse_embedding()),
        &BackupSet {
            bounding_box: &policy.bounding_box,
            contains: &contains,
        },
        &model.unsafe_set,
        w,
        BackwardReachSettings {
            backup_horizon: policy.horizon,
            dt: settings.dt,
            falsification_samples: settings.falsification_samples,
            seed: settings.seed,
        },
    )?;

    let decomposition = DecompositionSummary::from(&forward);
    let reverse_decomposition = DecompositionSummary::from(&reverse);
    let passed = decomposition.passed
        && reverse_decomposition.passed
        && invariance.passed
        && backward_reach.passed();
    Ok(VerificationSummary {
        decomposition,
        reverse_decomposition,
        invariance,
        backward_reach,
        passed,
    })
}
