use crate::error::{Error, Result};
use crate::loss::{LossWeights, Stage};
use crate::model::{wrap_angle, Pose2};
use crate::render::{render_with_grads, LossSpec, Renderer};
use crate::scene::{densify, prune, GaussianScene, ScenePolicy};

use super::adam::{Adam, OptimizerConfig};
use super::keyframe::KeyframeStore;

/// Loss trace of one stage call. `losses[i]` is the objective before step
/// `i`; the last entry is the objective after the final step.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub losses: Vec<f64>,
    pub best_iter: usize,
}

impl StageReport {
    pub fn initial(&self) -> f64 {
        self.losses[0]
    }

    pub fn best(&self) -> f64 {
        self.losses[self.best_iter]
    }
}

/// Shared inputs of the optimizer stages.
#[derive(Debug, Clone, Copy)]
pub struct StageContext<'a> {
    pub renderer: &'a Renderer,
    pub weights: &'a LossWeights,
    pub opt: &'a OptimizerConfig,
    pub policy: &'a ScenePolicy,
    /// Include the RD term in the pose and BA objectives.
    pub use_rd: bool,
}

struct Params {
    free_poses: Vec<usize>,
    gaussians: bool,
}

impl Params {
    fn pack(&self, poses: &[Pose2], scene: &GaussianScene) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.free_poses.len() * 3 + scene.len() * 6);
        for &i in &self.free_poses {
            x.extend([poses[i].x, poses[i].y, poses[i].yaw]);
        }
        if self.gaussians {
            for g in &scene.gaussians {
                x.extend([g.mean[0], g.mean[1], g.orient, g.scales[0], g.scales[1], g.power]);
            }
        }
        x
    }

    fn rates(&self, scene: &GaussianScene, o: &OptimizerConfig) -> Vec<f64> {
        let mut lr = Vec::new();
        for _ in &self.free_poses {
            lr.extend([o.lr_pose_xy, o.lr_pose_xy, o.lr_pose_yaw]);
        }
        if self.gaussians {
            for _ in &scene.gaussians {
                lr.extend([o.lr_mean, o.lr_mean, o.lr_orient, o.lr_scale, o.lr_scale, o.lr_power]);
            }
        }
        lr
    }

    /// Writes `x` back, projecting onto the feasible set.
    fn unpack(&self, x: &mut [f64], poses: &mut [Pose2], scene: &mut GaussianScene, policy: &ScenePolicy) {
        let mut it = 0;
        for &i in &self.free_poses {
            poses[i] = Pose2::new(x[it], x[it + 1], x[it + 2]);
            x[it + 2] = poses[i].yaw;
            it += 3;
        }
        if self.gaussians {
            for g in &mut scene.gaussians {
                let c = &mut x[it..it + 6];
                c[2] = wrap_angle(c[2]);
                c[3] = policy.clamp_scale(c[3]);
                c[4] = policy.clamp_scale(c[4]);
                c[5] = c[5].max(0.0);
                g.mean = [c[0], c[1]];
                g.orient = c[2];
                g.scales = [c[3], c[4]];
                g.power = c[5];
                it += 6;
            }
        }
    }

    fn gradient(&self, d_pose: &[[f64; 3]], d_gauss: &[crate::render::GaussianGrad]) -> Vec<f64> {
        let mut g = Vec::new();
        for &i in &self.free_poses {
            g.extend(d_pose[i]);
        }
        if self.gaussians {
            for d in d_gauss {
                g.extend(d.as_array());
            }
        }
        g
    }
}

/// Runs Adam on the chosen parameters and returns the best iterate.
fn optimize(
    ctx: &StageContext<'_>,
    store: &KeyframeStore,
    views: &[usize],
    params: Params,
    spec: LossSpec,
    stage: Stage,
    iters: usize,
    scene: &GaussianScene,
) -> Result<(Vec<Pose2>, GaussianScene, StageReport)> {
    if views.is_empty() {
        return Err(Error::Domain(format!("{} stage over an empty window", stage.name())));
    }
    let views: Vec<_> = views.iter().map(|&i| store.view(i)).collect();
    let mut poses = store.poses();
    let mut cur = scene.clone();
    let mut best = (poses.clone(), cur.clone());
    let mut x = params.pack(&poses, &cur);
    let lr = params.rates(&cur, ctx.opt);
    let mut adam = Adam::new(x.len(), ctx.opt);
    let mut losses = Vec::with_capacity(iters + 1);
    let mut best_iter = 0;
    for it in 0..=iters {
        let (loss, grads) = render_with_grads(ctx.renderer, &cur, &poses, &views, &spec)
            .map_err(|e| Error::Numerical(format!("{} stage, iteration {it}: {e}", stage.name())))?;
        losses.push(loss);
        if loss < losses[best_iter] || it == 0 {
            best_iter = it;
            best = (poses.clone(), cur.clone());
        }
        if it == iters || x.is_empty() {
            break;
        }
        let g = params.gradient(&grads.d_pose, &grads.d_gaussians);
        adam.step(&mut x, &g, &lr);
        params.unpack(&mut x, &mut poses, &mut cur, ctx.policy);
    }
    Ok((best.0, best.1, StageReport { stage, losses, best_iter }))
}

/// Pose refinement of keyframe `newest` against the current map; every other
/// pose and the scene stay fixed. The keyframe velocity is re-derived from the
/// evolving pose at every iteration.
pub fn refine_pose(
    ctx: &StageContext<'_>,
    store: &KeyframeStore,
    newest: usize,
    scene: &GaussianScene,
) -> Result<(Pose2, StageReport)> {
    if newest == 0 || newest >= store.len() {
        return Err(Error::Domain(format!("pose refinement needs a keyframe with a predecessor, got {newest}")));
    }
    let params = Params { free_poses: vec![newest], gaussians: false };
    let spec = LossSpec::for_stage(Stage::Pose, ctx.weights, ctx.use_rd);
    let (poses, _, report) = optimize(ctx, store, &[newest], params, spec, Stage::Pose, ctx.opt.iters_pose, scene)?;
    Ok((poses[newest], report))
}

/// Mapping over `window` with poses frozen and the RA term only, followed by
/// density control: when `densify_at` names a keyframe, residual peaks of
/// that keyframe spawn new Gaussians; pruning always runs.
pub fn update_map(
    ctx: &StageContext<'_>,
    store: &KeyframeStore,
    window: &[usize],
    scene: &GaussianScene,
    densify_at: Option<usize>,
) -> Result<(GaussianScene, StageReport)> {
    let params = Params { free_poses: vec![], gaussians: true };
    let spec = LossSpec::for_stage(Stage::Map, ctx.weights, false);
    let (_, mut out, report) = optimize(ctx, store, window, params, spec, Stage::Map, ctx.opt.iters_map, scene)?;
    if let Some(k) = densify_at {
        let kf = &store.keyframes[k];
        let rendered = ctx.renderer.render_ra(&out, &kf.pose);
        out = densify(&out, kf.ra.image(), &rendered, &kf.pose, ctx.renderer.config(), ctx.policy)?;
    }
    Ok((prune(&out, ctx.policy.tau_prune), report))
}

/// Joint optimization of the window poses and the scene. Keyframe 0 anchors
/// the gauge and is never moved.
pub fn bundle_adjust(
    ctx: &StageContext<'_>,
    store: &KeyframeStore,
    window: &[usize],
    scene: &GaussianScene,
) -> Result<(Vec<Pose2>, GaussianScene, StageReport)> {
    let free_poses = window.iter().copied().filter(|&i| i != 0).collect();
    let params = Params { free_poses, gaussians: true };
    let spec = LossSpec::for_stage(Stage::Ba, ctx.weights, ctx.use_rd);
    optimize(ctx, store, window, params, spec, Stage::Ba, ctx.opt.iters_ba, scene)
}
