//! Runs the one-factor ablation matrix on a short prefix of the small loop
//! and prints the table as CSV.
//!
//! cargo run --release --example ablation_table -- [frames]

use radarsplat::backend::{SessionConfig, WindowSpec};
use radarsplat::pipeline::{ablation_csv, ablation_matrix, run_ablation};
use radarsplat::sim::{SceneKind, SimScenario};

fn main() -> radarsplat::Result<()> {
    let frames = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let scenario = SimScenario::preset(SceneKind::SmallLoop, 7)?.truncated(frames);
    let base = SessionConfig::new(scenario.radar.clone());
    let rows = run_ablation(&scenario, &base, &ablation_matrix(WindowSpec::Radius(10.0)))?;
    print!("{}", ablation_csv(&rows));
    Ok(())
}
