//! Simulation driver, configuration files and artifact export.

pub mod config;
pub mod disturbance;
pub mod export;
pub mod plot;
pub mod simulate;
pub mod verify;

pub use config::{ControllerMode, DesiredInput, SimulationConfig};
pub use disturbance::DisturbanceSignal;
pub use export::{export_csv, parse_csv, read_csv, record_to_csv, tube_to_csv};
pub use plot::{export_plot, record_to_svg};
pub use simulate::{run_simulation, TrajectoryRecord, TrajectoryRow};
pub use verify::{verify_platoon, VerificationSummary, VerifySettings};
