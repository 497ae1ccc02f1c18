//! Differentiable radar forward model.
//!
//! * RA rendering: every Gaussian is projected to the sensor's polar frame and
//!   splatted additively, weighted by the radar equation.
//! * Doppler map: per-azimuth radial velocity of a static scene seen from a
//!   sensor moving with body velocity `v`.
//! * RD rendering: each RA bin's power, weighted by the antenna gain, is
//!   soft-binned into the Doppler axis with a Gaussian kernel limited to the
//!   `b` nearest Doppler bins.
//!
//! Gradients of image losses flow back through all three stages into poses,
//! the velocities derived from consecutive poses, and Gaussian parameters;
//! see [`render_with_grads`].

mod grad;
mod project;
mod ra;
mod rd;

pub use grad::{render_with_grads, GaussianGrad, GradientBundle, LossSpec, ParamGroups, View};
pub use project::{project_to_polar, PolarProjection, COV_REG, MIN_RANGE};
pub use ra::FOOTPRINT_M2;
pub use rd::doppler_window;

use crate::error::{Error, Result};
use crate::image::{DopplerMap, Image, RaImage, RdImage};
use crate::model::{rotate, wrap_angle, Pose2, RadarConfig, Vel2};
use crate::scene::{Gaussian2D, GaussianScene};

/// Sign applied to line-of-sight velocity projections. Positive Doppler means
/// the sensor closes on the target along that direction.
pub const DOPPLER_SIGN: f64 = 1.0;

/// Bin-center tables shared by the forward and backward passes.
#[derive(Debug, Clone)]
pub(crate) struct RenderGrid {
    pub range: Vec<f64>,
    pub azimuth: Vec<f64>,
    pub cos_az: Vec<f64>,
    pub sin_az: Vec<f64>,
    pub doppler: Vec<f64>,
}

impl RenderGrid {
    pub fn new(cfg: &RadarConfig) -> Self {
        let g = cfg.grid();
        Self {
            cos_az: g.azimuth_centers.iter().map(|a| a.cos()).collect(),
            sin_az: g.azimuth_centers.iter().map(|a| a.sin()).collect(),
            range: g.range_centers,
            azimuth: g.azimuth_centers,
            doppler: g.doppler_centers,
        }
    }
}

/// Renderer bound to one sensor configuration.
#[derive(Debug, Clone)]
pub struct Renderer {
    cfg: RadarConfig,
    grid: RenderGrid,
}

impl Renderer {
    pub fn new(cfg: &RadarConfig) -> Self {
        Self { cfg: cfg.clone(), grid: RenderGrid::new(cfg) }
    }

    pub fn config(&self) -> &RadarConfig {
        &self.cfg
    }

    pub(crate) fn grid(&self) -> &RenderGrid {
        &self.grid
    }

    pub fn render_ra(&self, scene: &GaussianScene, pose: &Pose2) -> RaImage {
        let splats = self.grid.splats(scene, pose, &self.cfg);
        self.grid.render_splats(&splats, &self.cfg)
    }

    pub fn render_doppler_map(&self, v: &Vel2) -> DopplerMap {
        let row: Vec<f64> = (0..self.cfg.n_azimuth())
            .map(|a| DOPPLER_SIGN * (v.vx * self.grid.cos_az[a] + v.vy * self.grid.sin_az[a]))
            .collect();
        Image::from_fn(self.cfg.n_range(), self.cfg.n_azimuth(), |_, a| row[a])
    }

    pub fn render_rd(&self, ra: &RaImage, dop: &DopplerMap) -> Result<RdImage> {
        rd::render_rd(&self.grid, ra, dop, &self.cfg)
    }

    /// RA and RD images for a keyframe with body velocity `v`.
    pub fn render_frame(&self, scene: &GaussianScene, pose: &Pose2, v: &Vel2) -> Result<(RaImage, RdImage)> {
        let ra = self.render_ra(scene, pose);
        let rd = self.render_rd(&ra, &self.render_doppler_map(v))?;
        Ok((ra, rd))
    }
}

pub fn render_ra(scene: &GaussianScene, pose: &Pose2, cfg: &RadarConfig) -> RaImage {
    Renderer::new(cfg).render_ra(scene, pose)
}

pub fn render_doppler_map(v: &Vel2, cfg: &RadarConfig) -> DopplerMap {
    Renderer::new(cfg).render_doppler_map(v)
}

pub fn render_rd(ra: &RaImage, dop: &DopplerMap, cfg: &RadarConfig) -> Result<RdImage> {
    Renderer::new(cfg).render_rd(ra, dop)
}

/// Body-frame velocity of keyframe `k` from its pose and its predecessor's:
/// `Rot(-psi) (t_k - t_{k-1}) / dt` with `psi` the heading halfway between the
/// two yaws. On a constant turn-rate arc the chord runs along that mid
/// heading, so the result stays aligned with the instantaneous velocity that
/// the measured Doppler reflects; with equal yaws it reduces to `Rot(-yaw_k)`.
pub fn ego_velocity_from_poses(current: &Pose2, previous: &Pose2, dt: f64) -> Result<Vel2> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let d = rotate(-mid_heading(current, previous), [(current.x - previous.x) / dt, (current.y - previous.y) / dt]);
    Ok(Vel2::new(d[0], d[1]))
}

pub(crate) fn mid_heading(current: &Pose2, previous: &Pose2) -> f64 {
    previous.yaw + wrap_angle(current.yaw - previous.yaw) / 2.0
}

/// Doppler velocity of a single static Gaussian: the sign convention applied
/// to the projection of `v` onto the sensor-frame line of sight.
pub fn gaussian_doppler(g: &Gaussian2D, pose: &Pose2, v: &Vel2) -> Option<f64> {
    let p = pose.world_to_sensor(g.mean);
    let r = p[0].hypot(p[1]);
    if !(r >= MIN_RANGE) {
        return None;
    }
    Some(DOPPLER_SIGN * (p[0] * v.vx + p[1] * v.vy) / r)
}
