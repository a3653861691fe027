//! Four-second platoon run under the look-ahead filter, written as CSV and SVG.
//!
//! cargo run --release --example reference_run -- [out_dir]

use std::path::PathBuf;

use mm_asif::asif::FilterStatus;
use mm_asif::harness::{export_csv, export_plot, run_simulation, SimulationConfig};

fn main() -> mm_asif::Result<()> {
    let out_dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&out_dir)?;

    let cfg = SimulationConfig::default();
    let record = run_simulation(&cfg)?;
    export_csv(&record, out_dir.join("reference.csv"))?;
    export_plot(&record, out_dir.join("reference.svg"))?;

    println!("rows            {}", record.len());
    println!("min h(x)        {:.4}", record.min_h());
    println!(
        "max |z|         {:.4} (limit {})",
        record.max_abs_displacement(),
        record.z_limit
    );
    println!("psi at t=0      {:.4}", record.rows[0].psi);
    for status in [
        FilterStatus::PassedDesired,
        FilterStatus::Projected,
        FilterStatus::BackupFallback,
    ] {
        println!("{:<15} {}", status.as_str(), record.count_status(status));
    }
    println!("unsafe          {}", record.unsafe_entered);
    println!("wrote {}", out_dir.join("reference.{csv,svg}").display());
    Ok(())
}
