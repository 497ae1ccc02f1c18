//! Runs the full pipeline and the frontend-only baseline on a simulated loop
//! and prints trajectory error for both.
//!
//! cargo run --release --example slam_loop -- [small-loop|large-loop|room] [frames]

use std::time::Instant;

use radarsplat::backend::{Mode, SessionConfig};
use radarsplat::eval::ape;
use radarsplat::pipeline::run_scenario;
use radarsplat::sim::{SceneKind, SimScenario};

fn main() -> radarsplat::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let kind = SceneKind::parse(&args.next().unwrap_or_else(|| "small-loop".into()))?;
    let mut scenario = SimScenario::preset(kind, 7)?;
    if let Some(n) = args.next().and_then(|s| s.parse().ok()) {
        scenario = scenario.truncated(n);
    }
    let gt = scenario.gt_trajectory();
    println!("{}: {} frames", kind.name(), scenario.len());
    for mode in [Mode::NoBackend, Mode::Full] {
        let mut cfg = SessionConfig::new(scenario.radar.clone());
        cfg.mode = mode;
        let start = Instant::now();
        let out = run_scenario(&scenario, &cfg)?;
        let r = ape(&out.trajectory, &gt)?;
        println!(
            "{:<18} keyframes {:>4}  trans {:.4} m  rot {:.3} deg  ({:.1} s)",
            mode.name(),
            out.keyframes.len(),
            r.trans_rmse,
            r.rot_rmse,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
