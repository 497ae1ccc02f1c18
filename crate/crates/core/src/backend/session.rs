use crate::error::{Error, Result};
use crate::frame::RadarFrame;
use crate::frontend::Frontend;
use crate::kv::{KvConfig, KvWriter};
use crate::loss::{LossWeights, Stage, Target};
use crate::model::{Pose2, RadarConfig, StampedPose, Trajectory, Vel2};
use crate::render::Renderer;
use crate::scene::{init_from_frame, Bounds, GaussianScene, ScenePolicy};

use super::adam::OptimizerConfig;
use super::keyframe::{select_window, should_create_keyframe, Keyframe, KeyframeStore, WindowSpec};
use super::stages::{bundle_adjust, refine_pose, update_map, StageContext, StageReport};

/// Which parts of the pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Frontend initialization, pose refinement, mapping and BA.
    Full,
    /// Frontend dead reckoning only.
    NoBackend,
    /// Pose refinement and mapping without bundle adjustment.
    NoBa,
    /// Backend without frontend priors: a keyframe every
    /// `fixed_keyframe_interval` frames, initialized at the previous keyframe.
    NoFrontendInit,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Full, Mode::NoBackend, Mode::NoBa, Mode::NoFrontendInit];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoBackend => "no-backend",
            Mode::NoBa => "no-ba",
            Mode::NoFrontendInit => "no-frontend-init",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}` (full, no-backend, no-ba, no-frontend-init)")))
    }
}

/// Everything a run needs besides the measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub radar: RadarConfig,
    pub weights: LossWeights,
    pub opt: OptimizerConfig,
    pub policy: ScenePolicy,
    pub mode: Mode,
    pub use_rd: bool,
    pub ba_window: WindowSpec,
    pub map_window: usize,
    pub kf_trans: f64,
    pub kf_rot: f64,
    pub fixed_keyframe_interval: usize,
    /// Half side of the square map region centered at the first pose.
    pub map_half_extent: f64,
}

impl SessionConfig {
    pub fn new(radar: RadarConfig) -> Self {
        let policy = ScenePolicy::for_noise_floor(radar.noise_floor());
        Self {
            radar,
            weights: LossWeights::default(),
            opt: OptimizerConfig::default(),
            policy,
            mode: Mode::Full,
            use_rd: true,
            ba_window: WindowSpec::Radius(10.0),
            map_window: 10,
            kf_trans: 0.5,
            kf_rot: 10f64.to_radians(),
            fixed_keyframe_interval: 5,
            map_half_extent: 60.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.opt.validate()?;
        self.ba_window.validate()?;
        if self.map_window == 0 || self.fixed_keyframe_interval == 0 {
            return Err(Error::Config("map window and keyframe interval must be at least 1".into()));
        }
        if !(self.kf_trans > 0.0) || !(self.kf_rot > 0.0) || !(self.map_half_extent > 0.0) {
            return Err(Error::Config("keyframe thresholds and map extent must be positive".into()));
        }
        Ok(())
    }

    /// Reads `radar.*`, `loss.*`, `opt.*`, `scene.*` and `backend.*` keys on
    /// top of the defaults.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        Self::from_kv_with_radar(kv, RadarConfig::from_kv(kv)?)
    }

    /// As [`SessionConfig::from_kv`] but with the radar fixed by the caller,
    /// e.g. the configuration a sequence was recorded with.
    pub fn from_kv_with_radar(kv: &KvConfig, radar: RadarConfig) -> Result<Self> {
        let mut c = Self::new(radar);
        let w = &mut c.weights;
        kv.set("loss.lambda_ssim", &mut w.lambda_ssim)?;
        kv.set("loss.lambda_scale", &mut w.lambda_scale)?;
        kv.set("loss.ssim_window", &mut w.ssim_window)?;
        kv.set("loss.rd_weight", &mut w.rd_weight)?;
        kv.set("loss.s_reg", &mut w.s_reg)?;
        c.opt = OptimizerConfig::from_kv(kv)?;
        let p = &mut c.policy;
        kv.set("scene.s_min", &mut p.s_min)?;
        kv.set("scene.s_max", &mut p.s_max)?;
        kv.set("scene.n_max", &mut p.n_max)?;
        kv.set("scene.tau_init", &mut p.tau_init)?;
        kv.set("scene.tau_densify", &mut p.tau_densify)?;
        kv.set("scene.tau_prune", &mut p.tau_prune)?;
        kv.set("scene.densify_every", &mut p.densify_every)?;
        if let Some(m) = kv.raw("backend.mode") {
            c.mode = Mode::parse(m)?;
        }
        kv.set("backend.use_rd", &mut c.use_rd)?;
        if let Some(w) = kv.raw("backend.ba_window") {
            c.ba_window = WindowSpec::parse(w)?;
        }
        kv.set("backend.map_window", &mut c.map_window)?;
        kv.set("backend.kf_trans", &mut c.kf_trans)?;
        if let Some(deg) = kv.get::<f64>("backend.kf_rot_deg")? {
            c.kf_rot = deg.to_radians();
        }
        kv.set("backend.fixed_keyframe_interval", &mut c.fixed_keyframe_interval)?;
        kv.set("backend.map_half_extent", &mut c.map_half_extent)?;
        c.validate()?;
        Ok(c)
    }

    pub fn write_kv(&self, w: &mut KvWriter) {
        self.radar.write_kv(w);
        let l = &self.weights;
        w.put("loss.lambda_ssim", l.lambda_ssim)
            .put("loss.lambda_scale", l.lambda_scale)
            .put("loss.ssim_window", l.ssim_window)
            .put("loss.rd_weight", l.rd_weight)
            .put("loss.s_reg", l.s_reg);
        self.opt.write_kv(w);
        let p = &self.policy;
        w.put("scene.s_min", p.s_min)
            .put("scene.s_max", p.s_max)
            .put("scene.n_max", p.n_max)
            .put("scene.tau_init", p.tau_init)
            .put("scene.tau_densify", p.tau_densify)
            .put("scene.tau_prune", p.tau_prune)
            .put("scene.densify_every", p.densify_every)
            .put("backend.mode", self.mode.name())
            .put("backend.use_rd", self.use_rd)
            .put("backend.ba_window", self.ba_window.label())
            .put("backend.map_window", self.map_window)
            .put("backend.kf_trans", self.kf_trans)
            .put("backend.kf_rot_deg", self.kf_rot.to_degrees())
            .put("backend.fixed_keyframe_interval", self.fixed_keyframe_interval)
            .put("backend.map_half_extent", self.map_half_extent);
    }
}

/// One line of the per-stage loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub frame: usize,
    pub stage: Stage,
    pub iteration: usize,
    pub loss: f64,
}

/// Position of a frame in the output trajectory: keyframes are optimized,
/// other frames ride along rigidly with the keyframe before them.
#[derive(Debug, Clone, Copy)]
enum FramePose {
    Absolute(Pose2),
    Relative { anchor: usize, offset: Pose2 },
}

/// Streaming odometry session over one sequence.
#[derive(Debug)]
pub struct Session {
    cfg: SessionConfig,
    renderer: Renderer,
    frontend: Frontend,
    scene: GaussianScene,
    store: KeyframeStore,
    frames: Vec<(f64, FramePose)>,
    log: Vec<LossRecord>,
    frames_since_kf: usize,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            renderer: Renderer::new(&cfg.radar),
            frontend: Frontend::new(Pose2::identity()),
            scene: GaussianScene::new(Bounds::centered(cfg.map_half_extent)),
            store: KeyframeStore::default(),
            frames: Vec::new(),
            log: Vec::new(),
            frames_since_kf: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn scene(&self) -> &GaussianScene {
        &self.scene
    }

    pub fn keyframes(&self) -> &KeyframeStore {
        &self.store
    }

    pub fn loss_log(&self) -> &[LossRecord] {
        &self.log
    }

    /// Estimated pose of every processed frame.
    pub fn trajectory(&self) -> Trajectory {
        self.frames
            .iter()
            .map(|(t, p)| {
                let pose = match *p {
                    FramePose::Absolute(p) => p,
                    FramePose::Relative { anchor, offset } => self.store.keyframes[anchor].pose.compose(&offset),
                };
                StampedPose::new(*t, pose)
            })
            .collect()
    }

    pub fn keyframe_trajectory(&self) -> Trajectory {
        self.store.keyframes.iter().map(|k| StampedPose::new(k.timestamp, k.pose)).collect()
    }

    /// Consumes one frame; returns whether it became a keyframe.
    pub fn process_frame(&mut self, frame: &RadarFrame) -> Result<bool> {
        let r = &self.cfg.radar;
        if frame.ra.shape() != (r.n_range(), r.n_azimuth()) || frame.rd.shape() != (r.n_range(), r.n_doppler()) {
            return Err(Error::Shape(format!(
                "frame {}: RA {:?} / RD {:?} do not match the radar configuration",
                frame.index,
                frame.ra.shape(),
                frame.rd.shape()
            )));
        }
        let backend = self.cfg.mode != Mode::NoBackend;
        let Some(&(last_t, _)) = self.frames.last() else {
            // first frame: gauge origin
            if !backend {
                self.frames.push((frame.timestamp, FramePose::Absolute(Pose2::identity())));
                return Ok(false);
            }
            self.scene = init_from_frame(
                &frame.ra,
                &Pose2::identity(),
                &self.cfg.radar,
                &self.cfg.policy,
                Bounds::centered(self.cfg.map_half_extent),
            );
            self.add_keyframe(frame, Pose2::identity())?;
            return Ok(true);
        };
        let dt = frame.timestamp - last_t;
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("frame {} timestamp does not increase", frame.index)));
        }
        let predicted = self.frontend.step(&frame.points, &frame.gyro, dt)?;
        if !backend {
            self.frames.push((frame.timestamp, FramePose::Absolute(predicted)));
            return Ok(false);
        }
        self.frames_since_kf += 1;
        let last = self.store.last().expect("backend sessions start with a keyframe");
        let (is_kf, init) = match self.cfg.mode {
            Mode::NoFrontendInit => (self.frames_since_kf >= self.cfg.fixed_keyframe_interval, last.pose),
            _ => (should_create_keyframe(&last.pose, &predicted, self.cfg.kf_trans, self.cfg.kf_rot), predicted),
        };
        if !is_kf {
            let anchor = self.store.len() - 1;
            let offset = last.pose.inverse().compose(&predicted);
            self.frames.push((frame.timestamp, FramePose::Relative { anchor, offset }));
            return Ok(false);
        }
        self.add_keyframe(frame, init)?;
        Ok(true)
    }

    fn add_keyframe(&mut self, frame: &RadarFrame, init: Pose2) -> Result<()> {
        let kf = Keyframe {
            id: 0,
            frame_index: frame.index,
            timestamp: frame.timestamp,
            pose: init,
            velocity: Vel2::zero(),
            ra: Target::new(frame.ra.clone()),
            rd: Target::new(frame.rd.clone()),
        };
        let k = self.store.push(kf)?;
        self.frames.push((frame.timestamp, FramePose::Relative { anchor: k, offset: Pose2::identity() }));
        self.frames_since_kf = 0;

        let ctx = StageContext {
            renderer: &self.renderer,
            weights: &self.cfg.weights,
            opt: &self.cfg.opt,
            policy: &self.cfg.policy,
            use_rd: self.cfg.use_rd,
        };
        let mut reports: Vec<StageReport> = Vec::new();
        if k > 0 {
            let (pose, rep) = refine_pose(&ctx, &self.store, k, &self.scene)?;
            let mut poses = self.store.poses();
            poses[k] = pose;
            self.store.set_poses(&poses)?;
            reports.push(rep);
        }
        let map_window = select_window(&self.store.keyframes, k, &WindowSpec::Sliding(self.cfg.map_window));
        let every = self.cfg.policy.densify_every.max(1);
        let densify_at = (k % every == 0).then_some(k);
        let (scene, rep) = update_map(&ctx, &self.store, &map_window, &self.scene, densify_at)?;
        self.scene = scene;
        reports.push(rep);
        if self.cfg.mode != Mode::NoBa {
            let window = select_window(&self.store.keyframes, k, &self.cfg.ba_window);
            let (poses, scene, rep) = bundle_adjust(&ctx, &self.store, &window, &self.scene)?;
            self.store.set_poses(&poses)?;
            self.scene = scene;
            reports.push(rep);
        }
        for rep in reports {
            for (i, l) in rep.losses.iter().enumerate() {
                self.log.push(LossRecord { frame: frame.index, stage: rep.stage, iteration: i, loss: *l });
            }
        }
        log::debug!(
            "keyframe {k} (frame {}): {} gaussians, pose {:?}",
            frame.index,
            self.scene.len(),
            self.store.keyframes[k].pose
        );
        self.frontend.pose = self.store.keyframes[k].pose;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(Mode::parse(m.name()).unwrap(), m);
        }
        assert!(Mode::parse("nope").is_err());
    }

    #[test]
    fn config_kv_round_trip() {
        let mut c = SessionConfig::new(RadarConfig::default());
        c.mode = Mode::NoBa;
        c.ba_window = WindowSpec::Sliding(5);
        c.opt.iters_ba = 3;
        c.weights.rd_weight = 0.5;
        let mut w = KvWriter::new();
        c.write_kv(&mut w);
        let kv = KvConfig::parse_str(&w.finish(), "cfg").unwrap();
        let back = SessionConfig::from_kv(&kv).unwrap();
        kv.finish().unwrap();
        assert_eq!(back.mode, c.mode);
        assert_eq!(back.ba_window, c.ba_window);
        assert_eq!(back.opt, c.opt);
        assert_eq!(back.weights, c.weights);
        assert_eq!(back.policy, c.policy);
        assert!((back.kf_rot - c.kf_rot).abs() < 1e-15);
    }
}
