//! All four controller modes on the same disturbance realization.

use mm_asif::harness::{run_simulation, ControllerMode, SimulationConfig};

fn main() -> mm_asif::Result<()> {
    println!(
        "{:<14} {:>9} {:>9} {:>7}",
        "mode", "min h", "max |z|", "unsafe"
    );
    for mode in ControllerMode::ALL {
        let cfg = SimulationConfig {
            controller_mode: mode,
            seed: 3,
            ..SimulationConfig::default()
        };
        let rec = run_simulation(&cfg)?;
        println!(
            "{:<14} {:>9.4} {:>9.4} {:>7}",
            mode.as_str(),
            rec.min_h(),
            rec.max_abs_displacement(),
            rec.unsafe_entered
        );
    }
    Ok(())
}
