//! Compares analytic loss gradients with central finite differences for the
//! pose and Gaussian parameters of a small two-keyframe problem.
//!
//! cargo run --release --example gradient_check

use radarsplat::loss::{LossWeights, Target};
use radarsplat::model::{Pose2, RadarConfigBuilder, Vel2};
use radarsplat::render::{ego_velocity_from_poses, render_with_grads, LossSpec, ParamGroups, Renderer, View};
use radarsplat::scene::{Bounds, Gaussian2D, GaussianScene};

fn main() -> radarsplat::Result<()> {
    let cfg = RadarConfigBuilder { n_range: 24, n_azimuth: 16, n_doppler: 12, range_res: 0.2, doppler_res: 0.15, bin_window: 12, ..Default::default() }
        .build()?;
    let r = Renderer::new(&cfg);
    let truth = GaussianScene::with_gaussians(
        vec![Gaussian2D::new([2.5, 0.3], 0.4, [0.3, 0.15], 1.0), Gaussian2D::new([3.2, -0.8], -0.2, [0.2, 0.25], 1.5)],
        Bounds::centered(10.0),
    );
    let dt = 0.1;
    let true_poses = [Pose2::identity(), Pose2::new(0.1, 0.02, 0.04)];
    let v = ego_velocity_from_poses(&true_poses[1], &true_poses[0], dt)?;
    let (ra0, _) = r.render_frame(&truth, &true_poses[0], &Vel2::zero())?;
    let (ra1, rd1) = r.render_frame(&truth, &true_poses[1], &v)?;
    let (t0, t1, t1rd) = (Target::new(ra0), Target::new(ra1), Target::new(rd1));
    let views = [View { pose: 0, prev: None, ra: &t0, rd: None }, View { pose: 1, prev: Some((0, dt)), ra: &t1, rd: Some(&t1rd) }];

    let poses = [Pose2::new(0.01, -0.01, 0.005), Pose2::new(0.12, 0.0, 0.06)];
    let mut scene = truth.clone();
    scene.gaussians[0].mean[0] += 0.04;
    scene.gaussians[1].scales[1] *= 1.2;
    let spec = LossSpec { weights: LossWeights::default(), use_rd: true, scale_reg: true, groups: ParamGroups::ALL };
    let (loss, g) = render_with_grads(&r, &scene, &poses, &views, &spec)?;
    println!("loss {loss:.6}");

    let eval = |p: &[Pose2], s: &GaussianScene| render_with_grads(&r, s, p, &views, &spec).map(|x| x.0);
    let h = 1e-6;
    for k in 0..poses.len() {
        for (i, name) in ["x", "y", "yaw"].iter().enumerate() {
            let bump = |d: f64| {
                let mut p = poses;
                let mut a = [p[k].x, p[k].y, p[k].yaw];
                a[i] += d;
                p[k] = Pose2::new(a[0], a[1], a[2]);
                eval(&p, &scene)
            };
            let fd = (bump(h)? - bump(-h)?) / (2.0 * h);
            println!("pose {k} {name:<4} analytic {:+.6e}  fd {fd:+.6e}", g.d_pose[k][i]);
        }
    }
    let names = ["mean_x", "mean_y", "orient", "scale_0", "scale_1", "power"];
    for j in 0..scene.len() {
        let an = g.d_gaussians[j].as_array();
        for (i, name) in names.iter().enumerate() {
            let bump = |d: f64| {
                let mut s = scene.clone();
                let gj = &mut s.gaussians[j];
                match i {
                    0 => gj.mean[0] += d,
                    1 => gj.mean[1] += d,
                    2 => gj.orient += d,
                    3 => gj.scales[0] += d,
                    4 => gj.scales[1] += d,
                    _ => gj.power += d,
                }
                eval(&poses, &s)
            };
            let fd = (bump(h)? - bump(-h)?) / (2.0 * h);
            println!("gauss {j} {name:<8} analytic {:+.6e}  fd {fd:+.6e}", an[i]);
        }
    }
    Ok(())
}
