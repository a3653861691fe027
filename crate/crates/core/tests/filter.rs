//! Look-ahead filter and CBF baseline on the platoon.

use mm_asif::asif::{
    assemble_constraint, solve_projection, vanilla_cbf_step, FilterStatus, Projection,
};
use mm_asif::barrier::GradientPath;
use mm_asif::dynamics::Vector;
use mm_asif::harness::{run_simulation, ControllerMode, SimulationConfig};
use mm_asif::platoon::{build_platoon, PlatoonConfig, PlatoonModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model() -> PlatoonModel {
    build_platoon(&PlatoonConfig::default()).unwrap()
}

#[test]
fn reduced_bound_equals_vertex_maximum() {
    let m = model();
    let la = m.lookahead(0.01);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    while checked < 100 {
        let x = Vector::from_fn(5, |_, _| rng.random_range(-1.2..1.2));
        let eval = la.value(&x).unwrap();
        if !eval.psi.is_finite() {
            continue;
        }
        let grad = la.gradient(&x, &eval, GradientPath::Direct).unwrap();
        let k = assemble_constraint(&x, eval.psi, &grad, &m.system, &m.policy.alpha).unwrap();
        assert_eq!(k.vertices.len(), 8);
        let max = k
            .vertices
            .iter()
            .map(|(_, b)| *b)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((k.b_star - max).abs() <= 1e-9 * (1.0 + max.abs()));
        checked += 1;
    }
}

#[test]
fn projected_inputs_satisfy_every_vertex() {
    let m = model();
    let filter = m.asif_filter(0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut projected = 0;
    for _ in 0..200 {
        let x = Vector::from_fn(5, |_, _| rng.random_range(-1.2..1.2));
        let u_d = Vector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
        let d = filter.step(&x, &u_d).unwrap();
        match d.status {
            FilterStatus::Projected => {
                projected += 1;
                let (c, b) = d.constraint.clone().unwrap();
                assert!((c.dot(&d.u) - b).abs() <= 1e-9 * (1.0 + b.abs()));
                let eval = filter.lookahead.value(&x).unwrap();
                let grad = filter
                    .lookahead
                    .gradient(&x, &eval, GradientPath::Direct)
                    .unwrap();
                for w in m.disturbance_set().corners().unwrap() {
                    let lhs = grad.dot(&m.system.eval(&x, &d.u, &w).unwrap());
                    assert!(lhs >= -m.policy.alpha.eval(d.psi) - 1e-9);
                }
            }
            FilterStatus::PassedDesired => {
                assert_eq!(d.u, u_d);
                assert!(d.slack >= 0.0);
            }
            FilterStatus::BackupFallback => assert_eq!(d.u, m.policy.control(&x)),
            FilterStatus::Raw => panic!("filter never reports raw"),
        }
    }
    assert!(projected > 0);
}

#[test]
fn slack_input_passes_unchanged() {
    let m = model();
    let filter = m.asif_filter(0.01).unwrap();
    let x = Vector::from_vec(vec![0.1, 0.0, -0.1, 0.1, 0.0]);
    let u_d = Vector::from_vec(vec![0.01, -0.02]);
    let d = filter.step(&x, &u_d).unwrap();
    assert_eq!(d.status, FilterStatus::PassedDesired);
    assert!(d.slack > 1e-9);
    assert_eq!(d.u, u_d);
}

#[test]
fn input_pushed_against_the_constraint_is_projected() {
    let m = model();
    let filter = m.asif_filter(0.01).unwrap();
    let x = Vector::from_vec(vec![-0.25, 0.0, 0.5, 0.25, 0.5]);
    let probe = filter.step(&x, &Vector::zeros(2)).unwrap();
    let (c, b) = probe.constraint.unwrap();
    // scale u_d along -c until it violates c·u >= b
    let u_d = &c * ((b - 10.0) / c.norm_squared());
    let d = filter.step(&x, &u_d).unwrap();
    assert_eq!(d.status, FilterStatus::Projected);
    assert!((c.dot(&d.u) - b).abs() <= 1e-9);
    match solve_projection(&u_d, &c, b).unwrap() {
        Projection::Projected(u) => assert_eq!(u, d.u),
        other => panic!("{other:?}"),
    }
}

#[test]
fn negative_psi_falls_back() {
    let m = model();
    let filter = m.asif_filter(0.01).unwrap();
    let x = Vector::from_vec(vec![3.0, -3.0, 3.0, 6.0, -6.0]);
    let d = filter.step(&x, &Vector::zeros(2)).unwrap();
    assert!(d.psi < 0.0);
    assert_eq!(d.status, FilterStatus::BackupFallback);
    assert_eq!(d.u, m.policy.control(&x));
}

#[test]
fn backup_input_is_admissible_for_vanilla_filter_on_boundary() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let dir = Vector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let x = &dir * (2.25 / m.lyapunov_value(&dir)).sqrt();
        let u_b = m.policy.control(&x);
        let d = vanilla_cbf_step(&x, &u_b, &m.policy, &m.system).unwrap();
        assert_eq!(d.status, FilterStatus::PassedDesired);
    }
}

#[test]
fn vanilla_filter_stays_inside_while_lookahead_leaves() {
    let base = SimulationConfig {
        seed: 4,
        ..SimulationConfig::default()
    };
    let vanilla = run_simulation(&SimulationConfig {
        controller_mode: ControllerMode::VanillaCbf,
        ..base.clone()
    })
    .unwrap();
    let asif = run_simulation(&SimulationConfig {
        controller_mode: ControllerMode::Asif,
        ..base
    })
    .unwrap();
    assert!(vanilla.min_h() > -1e-3);
    assert!(asif.min_h() < 0.0);
    assert_ne!(
        vanilla.rows.last().unwrap().state,
        asif.rows.last().unwrap().state
    );
    assert!(!vanilla.unsafe_entered && !asif.unsafe_entered);
}

#[test]
fn reference_run_mixes_statuses() {
    let rec = run_simulation(&SimulationConfig::default()).unwrap();
    assert!(rec.count_status(FilterStatus::PassedDesired) > 0);
    assert!(rec.count_status(FilterStatus::Projected) > 0);
    assert!(rec.min_h() < 0.0);
    assert!(!rec.unsafe_entered);
}

#[test]
fn safe_from_sampled_backup_set_states() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..6u64 {
        let x0 = loop {
            let y = m.policy.bounding_box.sample(&mut rng).unwrap();
            if m.policy.in_backup_set(&y) {
                break y;
            }
        };
        let cfg = SimulationConfig {
            seed,
            horizon: 2.0,
            x0: x0.iter().copied().collect(),
            ..SimulationConfig::default()
        };
        let rec = mm_asif::harness::simulate::run_with_model(&cfg, &m).unwrap();
        assert!(!rec.unsafe_entered && !rec.blowup);
        assert!(rec.max_abs_displacement() < 8.0);
    }
}
