//! Scores dead reckoning from the frontend alone against ground truth and
//! writes both trajectories as TUM files.
//!
//! cargo run --release --example evaluate_ape -- [out_dir] [frames]

use radarsplat::eval::ape;
use radarsplat::frontend::Frontend;
use radarsplat::io;
use radarsplat::model::{Pose2, StampedPose};
use radarsplat::sim::{SceneKind, SimScenario};

fn main() -> radarsplat::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "ape_out".into());
    let frames = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let scenario = SimScenario::preset(SceneKind::SmallLoop, 7)?.truncated(frames);
    let gt = scenario.gt_trajectory();

    let mut frontend = Frontend::new(Pose2::identity());
    let mut est = vec![StampedPose::new(gt[0].t, Pose2::identity())];
    for k in 1..scenario.len() {
        let f = scenario.synthesize_frame(k)?;
        let pose = frontend.step(&f.points, &f.gyro, f.timestamp - gt[k - 1].t)?;
        est.push(StampedPose::new(f.timestamp, pose));
    }
    let r = ape(&est, &gt)?;
    io::write_tum(&est, format!("{out}/frontend.tum"))?;
    io::write_tum(&gt, format!("{out}/groundtruth.tum"))?;
    let worst = r.per_pose.iter().map(|e| e.trans).fold(0.0, f64::max);
    println!("{} poses: APE trans {:.4} m (max {worst:.4} m), rot {:.3} deg", r.per_pose.len(), r.trans_rmse, r.rot_rmse);
    println!("alignment {:?}", r.alignment);
    Ok(())
}
