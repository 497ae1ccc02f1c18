//! Estimates the body velocity of every frame of a simulated sequence from
//! its Doppler points and compares it to ground truth.
//!
//! cargo run --release --example doppler_ego_velocity -- [frames]

use radarsplat::frontend::ego_velocity_lsq;
use radarsplat::sim::{SceneKind, SimScenario};

fn main() -> radarsplat::Result<()> {
    let frames = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let scenario = SimScenario::preset(SceneKind::SmallLoop, 7)?.truncated(frames);
    let (mut sq, mut n, mut degenerate) = (0.0, 0usize, 0usize);
    for k in 0..scenario.len() {
        let frame = scenario.synthesize_frame(k)?;
        let truth = scenario.samples[k].velocity;
        match ego_velocity_lsq(&frame.points) {
            Ok((v, rms)) => {
                let err = (v.vx - truth.vx).hypot(v.vy - truth.vy);
                sq += err * err;
                n += 1;
                if k % 20 == 0 {
                    println!(
                        "frame {k:4}: {:2} points, v = ({:+.3}, {:+.3}) truth ({:+.3}, {:+.3}), residual {rms:.4}",
                        frame.points.len(),
                        v.vx,
                        v.vy,
                        truth.vx,
                        truth.vy
                    );
                }
            }
            Err(_) => degenerate += 1,
        }
    }
    println!("velocity RMSE {:.4} m/s over {n} frames, {degenerate} degenerate", (sq / n.max(1) as f64).sqrt());
    Ok(())
}
