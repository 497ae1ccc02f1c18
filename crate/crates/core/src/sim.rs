//! Synthetic sequences: corridor and room scenes, constant-speed
//! trajectories and noisy RA/RD/Doppler/gyro measurements generated with the
//! renderer's own forward model.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};

use crate::error::{Error, Result};
use crate::frame::RadarFrame;
use crate::frontend::{cfar_peaks, CfarParams, DopplerPoint, GyroSample};
use crate::image::Image;
use crate::kv::{KvConfig, KvWriter};
use crate::model::{wrap_angle, Pose2, RadarConfig, StampedPose, Trajectory, Vel2};
use crate::render::{Renderer, DOPPLER_SIGN};
use crate::scene::{Bounds, Gaussian2D, GaussianScene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneKind {
    Room,
    SmallLoop,
    LargeLoop,
}

impl SceneKind {
    pub const ALL: [SceneKind; 3] = [SceneKind::Room, SceneKind::SmallLoop, SceneKind::LargeLoop];

    pub fn name(&self) -> &'static str {
        match self {
            SceneKind::Room => "room",
            SceneKind::SmallLoop => "small-loop",
            SceneKind::LargeLoop => "large-loop",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        SceneKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}` (room, small-loop, large-loop)")))
    }

    /// Centerline size of the loop (or room interior size).
    fn extent(&self) -> (f64, f64) {
        match self {
            SceneKind::Room => (12.0, 10.0),
            SceneKind::SmallLoop => (28.5, 19.0),
            SceneKind::LargeLoop => (44.5, 28.0),
        }
    }
}

/// Corridor width of the loop scenes (m).
pub const CORRIDOR_WIDTH: f64 = 3.0;
/// Corner radius of the loop trajectories (m).
pub const CORNER_RADIUS: f64 = 3.0;
/// Spacing of wall Gaussians (m).
pub const WALL_SPACING: f64 = 0.25;

fn wall_segment(out: &mut Vec<Gaussian2D>, a: [f64; 2], b: [f64; 2], rng: &mut ChaCha8Rng) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    let n = (len / WALL_SPACING).round().max(1.0) as usize;
    let orient = dy.atan2(dx);
    for i in 0..n {
        let f = (i as f64 + 0.5) / n as f64;
        out.push(Gaussian2D::new([a[0] + f * dx, a[1] + f * dy], orient, [0.15, 0.05], rng.gen_range(0.5..2.0)));
    }
}

fn rectangle(out: &mut Vec<Gaussian2D>, hw: f64, hh: f64, rng: &mut ChaCha8Rng) {
    let c = [[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]];
    for i in 0..4 {
        wall_segment(out, c[i], c[(i + 1) % 4], rng);
    }
}

/// Point-like reflectors a short distance off the walls of a `hw x hh`
/// rectangle, on the side facing its center or facing away from it.
fn wall_clutter(out: &mut Vec<Gaussian2D>, hw: f64, hh: f64, toward_center: bool, every: f64, rng: &mut ChaCha8Rng) {
    let perim = 4.0 * (hw + hh);
    let n = (perim / every).round() as usize;
    for _ in 0..n {
        let s = rng.gen_range(0.0..perim);
        let inset = rng.gen_range(0.2..0.5);
        let (p, normal) = if s < 2.0 * hw {
            ([-hw + s, -hh], [0.0, 1.0])
        } else if s < 2.0 * hw + 2.0 * hh {
            ([hw, -hh + (s - 2.0 * hw)], [-1.0, 0.0])
        } else if s < 4.0 * hw + 2.0 * hh {
            ([hw - (s - 2.0 * hw - 2.0 * hh), hh], [0.0, -1.0])
        } else {
            ([-hw, hh - (s - 4.0 * hw - 2.0 * hh)], [1.0, 0.0])
        };
        let k = if toward_center { inset } else { -inset };
        out.push(Gaussian2D::new(
            [p[0] + k * normal[0], p[1] + k * normal[1]],
            rng.gen_range(-PI..PI),
            [rng.gen_range(0.05..0.12), rng.gen_range(0.05..0.12)],
            rng.gen_range(2.0..5.0),
        ));
    }
}

/// Ground-truth scene of the given kind, centered at the origin.
///
/// Loops are a rectangular corridor of width [`CORRIDOR_WIDTH`] around the
/// centerline rectangle; the room is a single rectangle. Walls carry a
/// Gaussian every [`WALL_SPACING`] with power ratio drawn from [0.5, 2];
/// clutter reflectors sit close to the walls inside the free space.
pub fn make_loop_scene(kind: SceneKind, seed: u64) -> GaussianScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = kind.extent();
    let mut g = Vec::new();
    let margin = 1.0;
    let bounds = match kind {
        SceneKind::Room => {
            rectangle(&mut g, w / 2.0, h / 2.0, &mut rng);
            wall_clutter(&mut g, w / 2.0, h / 2.0, true, 2.0, &mut rng);
            Bounds::centered(w.max(h) / 2.0 + margin)
        }
        _ => {
            let d = CORRIDOR_WIDTH / 2.0;
            let (ow, oh) = (w / 2.0 + d, h / 2.0 + d);
            let (iw, ih) = (w / 2.0 - d, h / 2.0 - d);
            rectangle(&mut g, ow, oh, &mut rng);
            rectangle(&mut g, iw, ih, &mut rng);
            wall_clutter(&mut g, ow, oh, true, 3.0, &mut rng);
            wall_clutter(&mut g, iw, ih, false, 3.0, &mut rng);
            Bounds::new([-ow - margin, -oh - margin], [ow + margin, oh + margin])
        }
    };
    GaussianScene::with_gaussians(g, bounds)
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Line { from: [f64; 2], heading: f64, len: f64 },
    Arc { center: [f64; 2], radius: f64, start: f64, sweep: f64 },
}

impl Piece {
    fn len(&self) -> f64 {
        match *self {
            Piece::Line { len, .. } => len,
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Pose and yaw rate (at unit speed) `s` meters into the piece.
    fn at(&self, s: f64) -> (Pose2, f64) {
        match *self {
            Piece::Line { from, heading, .. } => {
                (Pose2::new(from[0] + s * heading.cos(), from[1] + s * heading.sin(), heading), 0.0)
            }
            Piece::Arc { center, radius, start, sweep } => {
                let dir = sweep.signum();
                let a = start + dir * s / radius;
                let p = [center[0] + radius * a.cos(), center[1] + radius * a.sin()];
                (Pose2::new(p[0], p[1], a + dir * PI / 2.0), dir / radius)
            }
        }
    }

    fn end(&self) -> Pose2 {
        self.at(self.len()).0
    }
}

/// Chains pieces; each starts where the previous one ends.
struct PathBuilder {
    pieces: Vec<Piece>,
    pose: Pose2,
}

impl PathBuilder {
    fn new(start: Pose2) -> Self {
        Self { pieces: Vec::new(), pose: start }
    }

    fn line(&mut self, len: f64) -> &mut Self {
        let p = Piece::Line { from: self.pose.translation(), heading: self.pose.yaw, len };
        self.pose = p.end();
        self.pieces.push(p);
        self
    }

    /// Turn by `sweep` radians (positive = left) on a circle of `radius`.
    fn turn(&mut self, radius: f64, sweep: f64) -> &mut Self {
        let left = [-self.pose.yaw.sin(), self.pose.yaw.cos()];
        let side = sweep.signum();
        let center = [self.pose.x + side * radius * left[0], self.pose.y + side * radius * left[1]];
        let start = (self.pose.y - center[1]).atan2(self.pose.x - center[0]);
        let p = Piece::Arc { center, radius, start, sweep };
        self.pose = p.end();
        self.pieces.push(p);
        self
    }
}

/// One ground-truth trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajSample {
    pub t: f64,
    pub pose: Pose2,
    /// Instantaneous body-frame velocity.
    pub velocity: Vel2,
    pub yaw_rate: f64,
}

/// Constant-speed trajectory sampled at `frame_rate`.
///
/// Loops follow the corridor centerline counter-clockwise with rounded
/// corners, starting mid-way along the bottom side, and stop within one
/// frame step of the start. The room is a back-and-forth scan of four lanes.
pub fn make_trajectory(kind: SceneKind, speed: f64, frame_rate: f64) -> Result<Vec<TrajSample>> {
    if !(speed > 0.0) || !(frame_rate > 0.0) {
        return Err(Error::Config("speed and frame rate must be positive".into()));
    }
    let (w, h) = kind.extent();
    let pieces = match kind {
        SceneKind::Room => {
            let (lane, r) = (8.0, 0.75);
            let mut b = PathBuilder::new(Pose2::new(-lane / 2.0, -3.0 * r, 0.0));
            b.line(lane).turn(r, PI).line(lane).turn(r, -PI).line(lane).turn(r, PI).line(lane);
            b.pieces
        }
        _ => {
            let r = CORNER_RADIUS;
            let (sw, sh) = (w - 2.0 * r, h - 2.0 * r);
            let mut b = PathBuilder::new(Pose2::new(0.0, -h / 2.0, 0.0));
            b.line(sw / 2.0);
            for side in [sh, sw, sh] {
                b.turn(r, PI / 2.0).line(side);
            }
            b.turn(r, PI / 2.0).line(sw / 2.0);
            b.pieces
        }
    };
    let total: f64 = pieces.iter().map(Piece::len).sum();
    let step = speed / frame_rate;
    let n = match kind {
        // stop short of the start so the closure gap is below one step
        SceneKind::Room => (total / step).floor() as usize + 1,
        _ => ((total - 1e-9) / step).floor() as usize + 1,
    };
    let mut out = Vec::with_capacity(n);
    let (mut piece, mut offset) = (0, 0.0);
    for k in 0..n {
        let s = k as f64 * step;
        while piece + 1 < pieces.len() && s - offset > pieces[piece].len() {
            offset += pieces[piece].len();
            piece += 1;
        }
        let local = (s - offset).min(pieces[piece].len());
        let (pose, rate) = pieces[piece].at(local);
        out.push(TrajSample { t: k as f64 / frame_rate, pose, velocity: Vel2::new(speed, 0.0), yaw_rate: rate * speed });
    }
    Ok(out)
}

/// Measurement noise levels. Zero everywhere reproduces the renderer output
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseParams {
    /// Scale of the unit-mean exponential multiplicative RA noise.
    pub speckle: f64,
    /// Std of the additive RA floor noise (clipped at zero).
    pub floor_std: f64,
    pub doppler_std: f64,
    pub gyro_std: f64,
    pub gyro_bias: f64,
    /// Std of a per-frame velocity error shared by all Doppler points.
    pub vel_std: f64,
    /// Std of the per-frame displacement of every ground-truth mean.
    pub scene_jitter: f64,
}

impl NoiseParams {
    pub fn none() -> Self {
        Self { speckle: 0.0, floor_std: 0.0, doppler_std: 0.0, gyro_std: 0.0, gyro_bias: 0.0, vel_std: 0.0, scene_jitter: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.speckle,
            self.floor_std,
            self.doppler_std,
            self.gyro_std,
            self.gyro_bias,
            self.vel_std,
            self.scene_jitter,
        ];
        if all.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("noise parameters must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            speckle: 0.2,
            floor_std: 2e-4,
            doppler_std: 0.05,
            gyro_std: 0.01,
            gyro_bias: 0.005,
            vel_std: 0.03,
            scene_jitter: 0.02,
        }
    }
}

/// A ground-truth world plus everything needed to synthesize its frames.
#[derive(Debug, Clone)]
pub struct SimScenario {
    pub kind: SceneKind,
    pub radar: RadarConfig,
    pub gt_scene: GaussianScene,
    pub samples: Vec<TrajSample>,
    pub frame_rate: f64,
    pub speed: f64,
    pub noise: NoiseParams,
    pub seed: u64,
    pub cfar: CfarParams,
    pub max_points: usize,
}

impl SimScenario {
    /// The default scenario of `kind`: 1 m/s at 10 Hz with default noise.
    pub fn preset(kind: SceneKind, seed: u64) -> Result<Self> {
        Self::build(kind, RadarConfig::default(), NoiseParams::default(), 1.0, 10.0, seed)
    }

    pub fn build(
        kind: SceneKind,
        radar: RadarConfig,
        noise: NoiseParams,
        speed: f64,
        frame_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        noise.validate()?;
        Ok(Self {
            kind,
            radar,
            gt_scene: make_loop_scene(kind, seed),
            samples: make_trajectory(kind, speed, frame_rate)?,
            frame_rate,
            speed,
            noise,
            seed,
            cfar: CfarParams::default(),
            max_points: 32,
        })
    }

    /// Keeps only the first `n` frames.
    pub fn truncated(mut self, n: usize) -> Self {
        self.samples.truncate(n);
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn gt_trajectory(&self) -> Trajectory {
        self.samples.iter().map(|s| StampedPose::new(s.t, s.pose)).collect()
    }

    fn frame_rng(&self, k: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k as u64 + 1);
        rng
    }

    /// Measurements of frame `k`. Pure in `(self, k)`.
    pub fn synthesize_frame(&self, k: usize) -> Result<RadarFrame> {
        let sample = self
            .samples
            .get(k)
            .ok_or_else(|| Error::Domain(format!("frame {k} out of range (0..{})", self.samples.len())))?;
        let n = &self.noise;
        let mut rng = self.frame_rng(k);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");

        let mut scene = self.gt_scene.clone();
        if n.scene_jitter > 0.0 {
            for g in &mut scene.gaussians {
                g.mean[0] += n.scene_jitter * unit.sample(&mut rng);
                g.mean[1] += n.scene_jitter * unit.sample(&mut rng);
            }
        }
        let renderer = Renderer::new(&self.radar);
        let clean = renderer.render_ra(&scene, &sample.pose);
        let ra = if n.speckle > 0.0 || n.floor_std > 0.0 {
            Image::from_fn(clean.rows(), clean.cols(), |r, a| {
                let e: f64 = Exp1.sample(&mut rng);
                let floor = (n.floor_std * unit.sample(&mut rng)).max(0.0);
                clean.get(r, a) * (1.0 + n.speckle * (e - 1.0)) + floor
            })
        } else {
            clean.clone()
        };
        let rd = renderer.render_rd(&ra, &renderer.render_doppler_map(&sample.velocity))?;

        let v_err = [n.vel_std * unit.sample(&mut rng), n.vel_std * unit.sample(&mut rng)];
        let v = [sample.velocity.vx + v_err[0], sample.velocity.vy + v_err[1]];
        let points = cfar_peaks(&clean, &self.cfar, self.max_points)?
            .into_iter()
            .map(|(r, a)| {
                let p = DopplerPoint::at_bin(r, a, &self.radar, 0.0);
                let d = p.direction().expect("bin centers are off the origin");
                let doppler = DOPPLER_SIGN * (d[0] * v[0] + d[1] * v[1]) + n.doppler_std * unit.sample(&mut rng);
                DopplerPoint { doppler, ..p }
            })
            .collect();

        let true_rate = if k == 0 {
            sample.yaw_rate
        } else {
            wrap_angle(sample.pose.yaw - self.samples[k - 1].pose.yaw) * self.frame_rate
        };
        let omega = true_rate + n.gyro_bias + n.gyro_std * unit.sample(&mut rng);
        Ok(RadarFrame {
            index: k,
            timestamp: sample.t,
            ra,
            rd,
            points,
            gyro: GyroSample { omega, timestamp: sample.t },
        })
    }

    /// Reads `sim.*`, `noise.*` and `radar.*` keys.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let radar = RadarConfig::from_kv(kv)?;
        let kind = SceneKind::parse(kv.raw("sim.scenario").unwrap_or("small-loop"))?;
        let seed = kv.get_or("sim.seed", 0u64)?;
        let speed = kv.get_or("sim.speed", 1.0)?;
        let frame_rate = kv.get_or("sim.frame_rate", 10.0)?;
        let mut noise = NoiseParams::default();
        kv.set("noise.speckle", &mut noise.speckle)?;
        kv.set("noise.floor_std", &mut noise.floor_std)?;
        kv.set("noise.doppler_std", &mut noise.doppler_std)?;
        kv.set("noise.gyro_std", &mut noise.gyro_std)?;
        kv.set("noise.gyro_bias", &mut noise.gyro_bias)?;
        kv.set("noise.vel_std", &mut noise.vel_std)?;
        kv.set("noise.scene_jitter", &mut noise.scene_jitter)?;
        let mut s = Self::build(kind, radar, noise, speed, frame_rate, seed)?;
        kv.set("sim.max_points", &mut s.max_points)?;
        kv.set("sim.cfar_guard", &mut s.cfar.guard)?;
        kv.set("sim.cfar_train", &mut s.cfar.train)?;
        kv.set("sim.cfar_alpha", &mut s.cfar.alpha)?;
        if let Some(n) = kv.get::<usize>("sim.frames")? {
            s = s.truncated(n);
        }
        Ok(s)
    }

    pub fn write_kv(&self, w: &mut KvWriter) {
        w.put("sim.scenario", self.kind.name())
            .put("sim.seed", self.seed)
            .put("sim.speed", self.speed)
            .put("sim.frame_rate", self.frame_rate)
            .put("sim.frames", self.samples.len())
            .put("sim.max_points", self.max_points)
            .put("sim.cfar_guard", self.cfar.guard)
            .put("sim.cfar_train", self.cfar.train)
            .put("sim.cfar_alpha", self.cfar.alpha);
        let n = &self.noise;
        w.put("noise.speckle", n.speckle)
            .put("noise.floor_std", n.floor_std)
            .put("noise.doppler_std", n.doppler_std)
            .put("noise.gyro_std", n.gyro_std)
            .put("noise.gyro_bias", n.gyro_bias)
            .put("noise.vel_std", n.vel_std)
            .put("noise.scene_jitter", n.scene_jitter);
        self.radar.write_kv(w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::ego_velocity_lsq;

    #[test]
    fn scenes_are_deterministic_and_bounded() {
        for kind in SceneKind::ALL {
            let a = make_loop_scene(kind, 7);
            assert_eq!(a, make_loop_scene(kind, 7));
            assert_ne!(a, make_loop_scene(kind, 8));
            assert!(a.gaussians.iter().all(|g| a.bounds.contains(g.mean) && g.is_valid()));
        }
    }

    #[test]
    fn loop_scene_is_an_annulus() {
        let s = make_loop_scene(SceneKind::SmallLoop, 1);
        let (w, h) = SceneKind::SmallLoop.extent();
        let d = CORRIDOR_WIDTH / 2.0 + 0.01;
        // nothing in the hollow center or beyond the outer wall
        for g in &s.gaussians {
            let inside = g.mean[0].abs() < w / 2.0 - d && g.mean[1].abs() < h / 2.0 - d;
            let outside = g.mean[0].abs() > w / 2.0 + d || g.mean[1].abs() > h / 2.0 + d;
            assert!(!inside && !outside, "{:?}", g.mean);
        }
        let room = make_loop_scene(SceneKind::Room, 1);
        let (rw, rh) = SceneKind::Room.extent();
        assert!(room.gaussians.iter().all(|g| g.mean[0].abs() <= rw / 2.0 + 1e-9 && g.mean[1].abs() <= rh / 2.0 + 1e-9));
    }

    #[test]
    fn trajectories_have_constant_speed_and_close() {
        for kind in [SceneKind::SmallLoop, SceneKind::LargeLoop] {
            let tr = make_trajectory(kind, 1.0, 10.0).unwrap();
            let step = 0.1;
            let gap = tr.last().unwrap().pose.distance(&tr[0].pose);
            assert!(gap < step, "{} gap {gap}", kind.name());
            let len = (tr.len() - 1) as f64 * step;
            assert!(len > 80.0);
        }
        let room = make_trajectory(SceneKind::Room, 1.0, 10.0).unwrap();
        assert!(room.last().unwrap().pose.distance(&room[0].pose) > 1.0);
    }

    #[test]
    fn zero_noise_is_the_forward_model() {
        let mut s = SimScenario::preset(SceneKind::SmallLoop, 3).unwrap().truncated(5);
        s.noise = NoiseParams::none();
        let r = Renderer::new(&s.radar);
        let f = s.synthesize_frame(4).unwrap();
        assert_eq!(f.ra, r.render_ra(&s.gt_scene, &s.samples[4].pose));
        let (v, _) = ego_velocity_lsq(&f.points).unwrap();
        assert!((v.vx - 1.0).abs() < 1e-9 && v.vy.abs() < 1e-9);
        assert!(s.synthesize_frame(5).is_err());
    }

    #[test]
    fn frames_are_reproducible() {
        let s = SimScenario::preset(SceneKind::Room, 5).unwrap();
        assert_eq!(s.synthesize_frame(10).unwrap(), s.synthesize_frame(10).unwrap());
        assert_ne!(s.synthesize_frame(10).unwrap().ra, s.synthesize_frame(11).unwrap().ra);
    }

    #[test]
    fn kv_round_trip() {
        let s = SimScenario::preset(SceneKind::LargeLoop, 9).unwrap().truncated(12);
        let mut w = KvWriter::new();
        s.write_kv(&mut w);
        let kv = KvConfig::parse_str(&w.finish(), "sim").unwrap();
        let back = SimScenario::from_kv(&kv).unwrap();
        kv.finish().unwrap();
        assert_eq!(back.samples, s.samples);
        assert_eq!(back.gt_scene, s.gt_scene);
        assert_eq!(back.noise, s.noise);
    }
}
