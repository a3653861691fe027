//! Forward over-approximation of the backup closed loop, checked against
//! sampled trajectories.

use mm_asif::harness::tube_to_csv;
use mm_asif::intervals::IntervalVector;
use mm_asif::platoon::{build_platoon, PlatoonConfig};
use mm_asif::reachability::{forward_overapprox, monte_carlo_endpoints, CONTAINMENT_TOLERANCE};

fn main() -> mm_asif::Result<()> {
    let model = build_platoon(&PlatoonConfig::default())?;
    let x0 = model.state(&[-0.25, 0.0, 0.5], &[0.25, 0.5])?;
    let horizon = 1.0;

    let tube = forward_overapprox(
        &model.embedding(),
        &IntervalVector::point(&x0),
        horizon,
        0.01,
    )?;
    let terminal = tube.terminal().expect("tube stays valid");
    println!("terminal box widths {:.4?}", terminal.widths().as_slice());

    let mc = monte_carlo_endpoints(
        &model.closed_loop,
        &x0,
        model.disturbance_set(),
        horizon,
        0.01,
        1000,
        42,
    )?;
    let inside = terminal.inflate(CONTAINMENT_TOLERANCE);
    let contained = mc
        .endpoints
        .iter()
        .filter(|e| inside.contains(e).unwrap_or(false))
        .count();
    println!(
        "{contained}/{} sampled endpoints inside",
        mc.endpoints.len()
    );

    let csv = tube_to_csv(&tube);
    for line in csv.lines().step_by(25) {
        println!("{line}");
    }
    Ok(())
}
