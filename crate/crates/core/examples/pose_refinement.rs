//! Recovers a perturbed keyframe pose against a known map with the pose
//! refinement stage.
//!
//! cargo run --release --example pose_refinement

use radarsplat::backend::{refine_pose, Keyframe, KeyframeStore, OptimizerConfig, StageContext};
use radarsplat::loss::{LossWeights, Target};
use radarsplat::model::{wrap_angle, Pose2, Vel2};
use radarsplat::render::Renderer;
use radarsplat::scene::ScenePolicy;
use radarsplat::sim::{NoiseParams, SceneKind, SimScenario};

fn keyframe(s: &SimScenario, k: usize, pose: Pose2) -> radarsplat::Result<Keyframe> {
    let f = s.synthesize_frame(k)?;
    Ok(Keyframe {
        id: 0,
        frame_index: k,
        timestamp: f.timestamp,
        pose,
        velocity: Vel2::zero(),
        ra: Target::new(f.ra),
        rd: Target::new(f.rd),
    })
}

fn main() -> radarsplat::Result<()> {
    let s = SimScenario::build(SceneKind::SmallLoop, Default::default(), NoiseParams::none(), 1.0, 10.0, 7)?;
    let truth = s.samples[5].pose;
    let start = Pose2::new(truth.x + 0.2, truth.y - 0.2, truth.yaw + 5f64.to_radians());

    let mut store = KeyframeStore::default();
    store.push(keyframe(&s, 0, s.samples[0].pose)?)?;
    store.push(keyframe(&s, 5, start)?)?;

    let renderer = Renderer::new(&s.radar);
    let weights = LossWeights::default();
    let opt = OptimizerConfig { iters_pose: 300, ..Default::default() };
    let policy = ScenePolicy::for_noise_floor(s.radar.noise_floor());
    let ctx = StageContext { renderer: &renderer, weights: &weights, opt: &opt, policy: &policy, use_rd: true };
    let (pose, report) = refine_pose(&ctx, &store, 1, &s.gt_scene)?;

    let err = |p: &Pose2| (p.distance(&truth), wrap_angle(p.yaw - truth.yaw).to_degrees().abs());
    let (t0, r0) = err(&start);
    let (t1, r1) = err(&pose);
    println!("loss {:.5} -> {:.5} (best at iteration {})", report.initial(), report.best(), report.best_iter);
    println!("error before: {t0:.4} m, {r0:.3} deg");
    println!("error after:  {t1:.4} m, {r1:.3} deg");
    Ok(())
}
