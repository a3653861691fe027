//! Offline certificates for the default platoon: decomposition function,
//! backup-set invariance and the backward reach condition.

use mm_asif::harness::{verify_platoon, VerifySettings};
use mm_asif::platoon::{build_platoon, BoundingBoxMethod, PlatoonConfig};

fn main() -> mm_asif::Result<()> {
    let model = build_platoon(&PlatoonConfig::default())?;
    let exact = model.bounding_box(BoundingBoxMethod::Exact)?;
    let loose = model.bounding_box(BoundingBoxMethod::Eigenvalue)?;
    println!("backup box (exact)      {:.4?}", exact.upper().as_slice());
    println!("backup box (eigenvalue) {:.4?}", loose.upper().as_slice());

    let summary = verify_platoon(&model, VerifySettings::default())?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("serializable")
    );
    println!("all checks passed: {}", summary.passed);
    Ok(())
}
