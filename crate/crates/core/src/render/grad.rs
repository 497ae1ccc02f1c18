use crate::error::{Error, Result};
use crate::loss::{image_loss_with_grad, scale_reg, scale_reg_grad, LossWeights, Stage, Target};
use crate::model::{rotate, Pose2, Vel2};
use crate::scene::GaussianScene;

use super::{ego_velocity_from_poses, mid_heading, rd, Renderer, DOPPLER_SIGN};

/// Partial derivatives of a scalar with respect to one Gaussian.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GaussianGrad {
    pub mean: [f64; 2],
    pub orient: f64,
    pub scales: [f64; 2],
    pub power: f64,
}

impl GaussianGrad {
    pub fn as_array(&self) -> [f64; 6] {
        [self.mean[0], self.mean[1], self.orient, self.scales[0], self.scales[1], self.power]
    }
}

/// Loss gradients for the requested parameter groups.
///
/// `d_pose` holds `(d/dx, d/dy, d/dyaw)` per pose passed in and is empty when
/// pose gradients were not requested; likewise `d_gaussians`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientBundle {
    pub d_pose: Vec<[f64; 3]>,
    pub d_gaussians: Vec<GaussianGrad>,
}

impl GradientBundle {
    pub fn norm(&self) -> f64 {
        let p: f64 = self.d_pose.iter().flatten().map(|v| v * v).sum();
        let g: f64 = self.d_gaussians.iter().flat_map(|g| g.as_array()).map(|v| v * v).sum();
        (p + g).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamGroups {
    pub poses: bool,
    pub gaussians: bool,
}

impl ParamGroups {
    pub const POSES: ParamGroups = ParamGroups { poses: true, gaussians: false };
    pub const GAUSSIANS: ParamGroups = ParamGroups { poses: false, gaussians: true };
    pub const ALL: ParamGroups = ParamGroups { poses: true, gaussians: true };
}

/// Which terms enter the objective and which gradients are wanted.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub weights: LossWeights,
    pub use_rd: bool,
    pub scale_reg: bool,
    pub groups: ParamGroups,
}

impl LossSpec {
    /// The objective of an optimizer stage with its natural parameter groups.
    pub fn for_stage(stage: Stage, weights: &LossWeights, use_rd: bool) -> Self {
        let groups = match stage {
            Stage::Pose => ParamGroups::POSES,
            Stage::Map => ParamGroups::GAUSSIANS,
            Stage::Ba => ParamGroups::ALL,
        };
        Self { weights: weights.clone(), use_rd: use_rd && stage.uses_rd(), scale_reg: stage.uses_scale_reg(), groups }
    }
}

/// One keyframe term of the objective.
///
/// `pose` indexes the pose slice. `prev` names the predecessor pose and the
/// time step; the keyframe's velocity is derived from the pair and its RD term
/// is included only when both `prev` and `rd` are present.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub pose: usize,
    pub prev: Option<(usize, f64)>,
    pub ra: &'a Target,
    pub rd: Option<&'a Target>,
}

fn check_finite(v: f64, what: impl FnOnce() -> String) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite gradient for {}", what())))
    }
}

/// Evaluates the objective over `views` and its analytic gradient.
///
/// The RA term flows back through splatting and polar projection. The RD term
/// additionally flows through the soft-binning kernel into the Doppler map,
/// the keyframe velocity and from there into both poses of the pair.
pub fn render_with_grads(
    renderer: &Renderer,
    scene: &GaussianScene,
    poses: &[Pose2],
    views: &[View<'_>],
    spec: &LossSpec,
) -> Result<(f64, GradientBundle)> {
    if views.is_empty() {
        return Err(Error::Domain("objective over an empty window".into()));
    }
    let cfg = renderer.config();
    let grid = renderer.grid();
    let w = &spec.weights;
    let mut d_pose = vec![[0.0; 3]; poses.len()];
    let mut d_gauss = vec![GaussianGrad::default(); scene.len()];
    let mut total = 0.0;

    for view in views {
        let pose = poses
            .get(view.pose)
            .ok_or_else(|| Error::Domain(format!("view references pose {} of {}", view.pose, poses.len())))?;
        let splats = grid.splats(scene, pose, cfg);
        let ra = grid.render_splats(&splats, cfg);
        let (l_ra, mut d_ra) = image_loss_with_grad(&ra, view.ra, w)?;
        total += l_ra;

        if let (true, Some((prev_idx, dt)), Some(rd_target)) = (spec.use_rd, view.prev, view.rd) {
            let prev = poses
                .get(prev_idx)
                .ok_or_else(|| Error::Domain(format!("view references pose {prev_idx} of {}", poses.len())))?;
            let v = ego_velocity_from_poses(pose, prev, dt)?;
            let dop = renderer.render_doppler_map(&v);
            let rd_img = rd::render_rd(grid, &ra, &dop, cfg)?;
            let (l_rd, d_rd) = image_loss_with_grad(&rd_img, rd_target, w)?;
            total += w.rd_weight * l_rd;
            let (d_ra_rd, d_dop) = rd::backward_rd(grid, &ra, &dop, &d_rd.scaled(w.rd_weight), cfg);
            for (acc, g) in d_ra.as_mut_slice().iter_mut().zip(d_ra_rd.as_slice()) {
                *acc += g;
            }
            if spec.groups.poses {
                let mut dv = [0.0; 2];
                for r in 0..cfg.n_range() {
                    for (a, g) in d_dop.row(r).iter().enumerate() {
                        dv[0] += DOPPLER_SIGN * g * grid.cos_az[a];
                        dv[1] += DOPPLER_SIGN * g * grid.sin_az[a];
                    }
                }
                accumulate_velocity_grad(&mut d_pose, view.pose, prev_idx, mid_heading(pose, prev), &v, dv, dt);
            }
        }

        let dp = grid.backward_splats(&splats, scene, pose, &d_ra, cfg, &mut d_gauss);
        for i in 0..3 {
            d_pose[view.pose][i] += dp[i];
        }
    }

    if spec.scale_reg {
        total += w.lambda_scale * scale_reg(scene, w.s_reg);
        for (g, d) in d_gauss.iter_mut().zip(scale_reg_grad(scene, w.s_reg)) {
            g.scales[0] += w.lambda_scale * d[0];
            g.scales[1] += w.lambda_scale * d[1];
        }
    }

    if !total.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {total}")));
    }
    let mut out = GradientBundle::default();
    if spec.groups.poses {
        const NAMES: [&str; 3] = ["x", "y", "yaw"];
        for (k, d) in d_pose.iter().enumerate() {
            for (i, v) in d.iter().enumerate() {
                check_finite(*v, || format!("pose {k} {}", NAMES[i]))?;
            }
        }
        out.d_pose = d_pose;
    }
    if spec.groups.gaussians {
        const NAMES: [&str; 6] = ["mean_x", "mean_y", "orient", "scale_1", "scale_2", "power"];
        for (k, g) in d_gauss.iter().enumerate() {
            for (i, v) in g.as_array().iter().enumerate() {
                check_finite(*v, || format!("gaussian {k} {}", NAMES[i]))?;
            }
        }
        out.d_gaussians = d_gauss;
    }
    Ok((total, out))
}

/// Chain `dL/dv` through `v = Rot(-psi) (t_k - t_prev) / dt`, where the mid
/// heading `psi` moves by half of each yaw change.
fn accumulate_velocity_grad(d_pose: &mut [[f64; 3]], k: usize, prev: usize, psi: f64, v: &Vel2, dv: [f64; 2], dt: f64) {
    let dt_world = rotate(psi, dv);
    for i in 0..2 {
        d_pose[k][i] += dt_world[i] / dt;
        d_pose[prev][i] -= dt_world[i] / dt;
    }
    let d_psi = dv[0] * v.vy - dv[1] * v.vx;
    d_pose[k][2] += 0.5 * d_psi;
    d_pose[prev][2] += 0.5 * d_psi;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RadarConfig, RadarConfigBuilder};
    use crate::scene::{Bounds, Gaussian2D};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(bin_window: usize) -> RadarConfig {
        RadarConfigBuilder {
            n_range: 24,
            n_azimuth: 16,
            n_doppler: 12,
            range_res: 0.2,
            doppler_res: 0.15,
            bin_window,
            ..Default::default()
        }
        .build()
        .unwrap()
    }

    fn scene(rng: &mut ChaCha8Rng, n: usize) -> GaussianScene {
        let gs = (0..n)
            .map(|_| {
                Gaussian2D::new(
                    [rng.gen_range(1.5..4.0), rng.gen_range(-1.5..1.5)],
                    rng.gen_range(-3.0..3.0),
                    [rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4)],
                    rng.gen_range(0.5..2.0),
                )
            })
            .collect();
        GaussianScene::with_gaussians(gs, Bounds::centered(20.0))
    }

    fn loss_only(r: &Renderer, s: &GaussianScene, p: &[Pose2], v: &[View<'_>], spec: &LossSpec) -> f64 {
        render_with_grads(r, s, p, v, spec).unwrap().0
    }

    #[test]
    fn self_rendered_frame_has_zero_gradient() {
        let cfg = cfg(12);
        let r = Renderer::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = scene(&mut rng, 3);
        let poses = [Pose2::identity(), Pose2::new(0.1, 0.02, 0.03)];
        let v = ego_velocity_from_poses(&poses[1], &poses[0], 0.1).unwrap();
        let (ra, rd) = r.render_frame(&s, &poses[1], &v).unwrap();
        let (ra, rd) = (Target::new(ra), Target::new(rd));
        let views = [View { pose: 1, prev: Some((0, 0.1)), ra: &ra, rd: Some(&rd) }];
        let spec = LossSpec::for_stage(Stage::Ba, &LossWeights::default(), true);
        let (l, g) = render_with_grads(&r, &s, &poses, &views, &spec).unwrap();
        assert!(l.abs() < 1e-12);
        assert!(g.norm() < 1e-8, "norm {}", g.norm());
    }

    #[test]
    fn windowed_rd_gradient_matches_finite_differences() {
        // b smaller than the Doppler axis: the window is piecewise constant in
        // the velocity, so away from switching points the gradient is exact.
        let cfg = cfg(5);
        let r = Renderer::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = scene(&mut rng, 3);
        let truth = [Pose2::identity(), Pose2::new(0.1, 0.03, 0.05)];
        let v = ego_velocity_from_poses(&truth[1], &truth[0], 0.1).unwrap();
        let (ra, rd) = r.render_frame(&s, &truth[1], &v).unwrap();
        let (ra, rd) = (Target::new(ra), Target::new(rd));
        let views = [View { pose: 1, prev: Some((0, 0.1)), ra: &ra, rd: Some(&rd) }];
        let mut spec = LossSpec::for_stage(Stage::Pose, &LossWeights::default(), true);
        spec.weights.lambda_ssim = 0.0;
        let poses = [Pose2::identity(), Pose2::new(0.107, 0.021, 0.041)];
        let (_, g) = render_with_grads(&r, &s, &poses, &views, &spec).unwrap();
        let h = 1e-7;
        for i in 0..3 {
            let bump = |d: f64| {
                let mut p = poses;
                let mut a = [p[1].x, p[1].y, p[1].yaw];
                a[i] += d;
                p[1] = Pose2::new(a[0], a[1], a[2]);
                loss_only(&r, &s, &p, &views, &spec)
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            let an = g.d_pose[1][i];
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()) + 1e-7, "param {i}: fd {fd} vs {an}");
        }
    }

    #[test]
    fn unrequested_groups_are_empty() {
        let cfg = cfg(12);
        let r = Renderer::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = scene(&mut rng, 2);
        let ra = Target::new(r.render_ra(&s, &Pose2::identity()));
        let views = [View { pose: 0, prev: None, ra: &ra, rd: None }];
        let spec = LossSpec::for_stage(Stage::Map, &LossWeights::default(), true);
        let (_, g) = render_with_grads(&r, &s, &[Pose2::new(0.1, 0.0, 0.0)], &views, &spec).unwrap();
        assert!(g.d_pose.is_empty());
        assert_eq!(g.d_gaussians.len(), 2);
    }

    #[test]
    fn gradient_wrt_power_is_independent_of_power() {
        let cfg = cfg(12);
        let r = Renderer::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = scene(&mut rng, 3);
        let pose = Pose2::new(0.05, 0.0, 0.0);
        let ra_s = r.render_ra(&s, &pose);
        let mut doubled = s.clone();
        for g in &mut doubled.gaussians {
            g.power *= 2.0;
        }
        let ra_d = r.render_ra(&doubled, &pose);
        let s0 = r.render_ra(&GaussianScene::with_gaussians(vec![s.gaussians[0]], s.bounds), &pose);
        let d0 = r.render_ra(&GaussianScene::with_gaussians(vec![doubled.gaussians[0]], s.bounds), &pose);
        // dRA/dsigma_0 = RA_0 / sigma_0, identical before and after doubling
        let a = s0.scaled(1.0 / s.gaussians[0].power);
        let b = d0.scaled(1.0 / doubled.gaussians[0].power);
        assert!(a.max_abs_diff(&b) < 1e-15 * a.max().max(1.0));
        assert!(ra_d.max_abs_diff(&ra_s.scaled(2.0)) < 1e-12 * ra_s.max());
    }

    #[test]
    fn empty_window_is_rejected() {
        let cfg = cfg(12);
        let r = Renderer::new(&cfg);
        let s = GaussianScene::new(Bounds::centered(5.0));
        let spec = LossSpec::for_stage(Stage::Pose, &LossWeights::default(), true);
        assert!(render_with_grads(&r, &s, &[Pose2::identity()], &[], &spec).is_err());
    }
}
