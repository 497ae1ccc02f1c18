//! Two-keyframe bundle adjustment: keyframe 0 anchors the gauge, keyframe 1
//! starts off its true pose and the map starts slightly wrong.
//!
//! cargo run --release --example bundle_adjust_toy

use radarsplat::backend::{bundle_adjust, Keyframe, KeyframeStore, OptimizerConfig, StageContext};
use radarsplat::loss::{LossWeights, Target};
use radarsplat::model::{wrap_angle, Pose2, RadarConfigBuilder, Vel2};
use radarsplat::render::{ego_velocity_from_poses, Renderer};
use radarsplat::scene::{Bounds, Gaussian2D, GaussianScene, ScenePolicy};

fn main() -> radarsplat::Result<()> {
    let cfg = RadarConfigBuilder { noise_floor: 1e-6, ..Default::default() }.build()?;
    let renderer = Renderer::new(&cfg);
    let truth = GaussianScene::with_gaussians(
        (0..12)
            .map(|i| {
                let a = -0.9 + 0.15 * i as f64;
                let r = 2.0 + 0.3 * (i % 4) as f64;
                Gaussian2D::new([r * a.cos(), r * a.sin()], 0.3 * i as f64, [0.2, 0.1], 1.0 + 0.1 * i as f64)
            })
            .collect(),
        Bounds::centered(20.0),
    );
    let dt = 0.5;
    let poses = [Pose2::identity(), Pose2::new(0.4, 0.05, 0.08)];
    let mut store = KeyframeStore::default();
    for (k, p) in poses.iter().enumerate() {
        let v = if k == 0 { Vel2::zero() } else { ego_velocity_from_poses(p, &poses[k - 1], dt)? };
        let (ra, rd) = renderer.render_frame(&truth, p, &v)?;
        let init = if k == 0 { *p } else { Pose2::new(p.x + 0.05, p.y - 0.04, p.yaw + 0.02) };
        store.push(Keyframe {
            id: 0,
            frame_index: k,
            timestamp: k as f64 * dt,
            pose: init,
            velocity: Vel2::zero(),
            ra: Target::new(ra),
            rd: Target::new(rd),
        })?;
    }
    let mut map = truth.clone();
    for g in &mut map.gaussians {
        g.mean[0] += 0.02;
        g.power *= 0.9;
    }

    let weights = LossWeights { lambda_scale: 0.0, ..Default::default() };
    let opt = OptimizerConfig { iters_ba: 400, ..Default::default() };
    let policy = ScenePolicy::for_noise_floor(cfg.noise_floor());
    let ctx = StageContext { renderer: &renderer, weights: &weights, opt: &opt, policy: &policy, use_rd: true };
    let (out, _, report) = bundle_adjust(&ctx, &store, &[0, 1], &map)?;

    println!("loss {:.5} -> {:.5}", report.initial(), report.best());
    for (k, (est, gt)) in out.iter().zip(&poses).enumerate() {
        println!(
            "keyframe {k}: {:.4} m, {:.3} deg from truth",
            est.distance(gt),
            wrap_angle(est.yaw - gt.yaw).to_degrees().abs()
        );
    }
    Ok(())
}
