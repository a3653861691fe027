//! Building the filter for a system of your own: a double integrator with a
//! saturated PD backup controller and a disturbance on the acceleration.

use mm_asif::asif::{AsifFilter, BackupPolicy, ClassK};
use mm_asif::barrier::{BarrierFunction, LookaheadBarrier};
use mm_asif::dynamics::{
    check_decomposition, ControlAffineSystem, DecompositionFunction, DecompositionTolerances,
    Matrix, Vector,
};
use mm_asif::intervals::IntervalVector;
use mm_asif::reachability::{
    check_backward_reach, BackupSet, BackwardReachSettings, EmbeddingSystem, UnsafeSet,
};

fn main() -> mm_asif::Result<()> {
    // ṗ = v, v̇ = u + w; |p| >= 2 is unsafe
    let w = IntervalVector::uniform(1, -0.05, 0.05)?;
    let system = ControlAffineSystem::new(
        2,
        1,
        1,
        |x: &Vector| Vector::from_vec(vec![x[1], 0.0]),
        |_: &Vector| Matrix::from_column_slice(2, 1, &[0.0, 1.0]),
        |_: &Vector| Matrix::from_column_slice(2, 1, &[0.0, 1.0]),
        IntervalVector::uniform(2, -10.0, 10.0)?,
        w.clone(),
    )?;

    let backup = |x: &Vector| Vector::from_vec(vec![-(2.0 * x[0] + 3.0 * x[1]).tanh()]);
    let barrier = BarrierFunction::new(
        |x: &Vector| 0.25 - (x[0] * x[0] + 0.5 * x[0] * x[1] + 0.5 * x[1] * x[1]),
        |x: &Vector| Vector::from_vec(vec![-(2.0 * x[0] + 0.5 * x[1]), -(0.5 * x[0] + x[1])]),
        IntervalVector::uniform(2, -10.0, 10.0)?,
    );
    let policy = BackupPolicy::new(
        backup,
        barrier.clone(),
        ClassK::linear(5.0),
        0.75,
        IntervalVector::uniform(2, -1.0, 1.0)?,
    )?;

    // off-diagonal terms: ṗ increases with v; v̇ = -tanh(2p + 3v) + w decreases
    // with p, so p is taken from the hat argument
    let decomposition = DecompositionFunction::new(2, 1, |x, w, x_hat, _| {
        Vector::from_vec(vec![x[1], -(2.0 * x_hat[0] + 3.0 * x[1]).tanh() + w[0]])
    });
    let closed_loop = system.close_loop(policy.feedback());
    let report = check_decomposition(
        &decomposition,
        &closed_loop,
        &IntervalVector::uniform(2, -2.0, 2.0)?,
        &w,
        5000,
        1,
        DecompositionTolerances::default(),
    )?;
    println!("decomposition violations: {}", report.violations.len());

    let unsafe_set = UnsafeSet::CoordinateThreshold {
        coordinates: vec![0],
        limit: 2.0,
    };
    let in_backup = |x: &Vector| policy.in_backup_set(x);
    let backward = check_backward_reach(
        &closed_loop,
        None,
        &BackupSet {
            bounding_box: &policy.bounding_box,
            contains: &in_backup,
        },
        &unsafe_set,
        &w,
        BackwardReachSettings {
            backup_horizon: policy.horizon,
            dt: 0.01,
            falsification_samples: 500,
            seed: 2,
        },
    )?;
    println!("backward reach verdict: {:?}", backward.verdict);

    let embedding = EmbeddingSystem::new(decomposition, w.clone(), system.statespace().clone())?;
    let lookahead = LookaheadBarrier::new(embedding, barrier, policy.horizon, 200.0, 0.01);
    let filter = AsifFilter::new(system.clone(), policy, lookahead)?;

    let desired = Vector::from_vec(vec![1.0]);
    let mut x = Vector::from_vec(vec![0.0, 0.0]);
    let dt = 0.01;
    let mut max_p: f64 = 0.0;
    for k in 0..500 {
        let t = k as f64 * dt;
        let d = filter.step(&x, &desired)?;
        if k % 50 == 0 {
            println!(
                "t={t:4.2} p={:+.3} v={:+.3} u={:+.3} {}",
                x[0], x[1], d.u[0], d.status
            );
        }
        x += system.eval(&x, &d.u, &Vector::from_vec(vec![0.05 * (3.0 * t).sin()]))? * dt;
        max_p = max_p.max(x[0].abs());
    }
    println!("max |p| = {max_p:.4}, unsafe at 2");
    Ok(())
}
