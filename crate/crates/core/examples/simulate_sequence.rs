//! Synthesizes a seeded scenario into a measurement directory.
//!
//! cargo run --release --example simulate_sequence -- [out_dir] [frames]

use radarsplat::io::MeasurementDir;
use radarsplat::sim::{SceneKind, SimScenario};

fn main() -> radarsplat::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "sim_out".into());
    let frames = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    let scenario = SimScenario::preset(SceneKind::SmallLoop, 7)?.truncated(frames);
    let dir = MeasurementDir::new(&out);
    dir.write_scenario(&scenario, true)?;

    let first = scenario.synthesize_frame(0)?;
    println!("scenario {} with {} ground-truth Gaussians", scenario.kind.name(), scenario.gt_scene.len());
    println!("RA {:?}, RD {:?}, {} Doppler points in frame 0", first.ra.shape(), first.rd.shape(), first.points.len());
    println!("wrote {} frames to {out}", scenario.len());
    Ok(())
}
