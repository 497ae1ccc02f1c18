//! Planar Gaussian scene: representation, initialization from a measured
//! range-azimuth frame, density control and the text file format.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::RaImage;
use crate::model::{cross_section_for_power, Pose2, RadarConfig};

/// One planar Gaussian: world-frame mean, orientation of the first scale axis,
/// per-axis standard deviations and radar power return ratio (RCS-like).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2D {
    pub mean: [f64; 2],
    pub orient: f64,
    pub scales: [f64; 2],
    pub power: f64,
}

impl Gaussian2D {
    pub fn new(mean: [f64; 2], orient: f64, scales: [f64; 2], power: f64) -> Self {
        Self { mean, orient, scales, power }
    }

    pub fn is_valid(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite())
            && self.orient.is_finite()
            && self.scales.iter().all(|s| *s > 0.0 && s.is_finite())
            && self.power >= 0.0
            && self.power.is_finite()
    }

    /// World-frame covariance `R diag(S^2) R^T` as `[xx, xy, yy]`.
    pub fn covariance(&self) -> [f64; 3] {
        covariance(self)
    }
}

pub fn covariance(g: &Gaussian2D) -> [f64; 3] {
    let (s, c) = g.orient.sin_cos();
    let (a, b) = (g.scales[0] * g.scales[0], g.scales[1] * g.scales[1]);
    [c * c * a + s * s * b, c * s * (a - b), s * s * a + c * c * b]
}

/// Axis-aligned world rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn centered(half_extent: f64) -> Self {
        Self { min: [-half_extent; 2], max: [half_extent; 2] }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// Thresholds and limits for scene initialization and density control.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePolicy {
    pub s_min: f64,
    pub s_max: f64,
    pub n_max: usize,
    pub tau_init: f64,
    pub tau_densify: f64,
    pub tau_prune: f64,
    /// Densify after mapping on every n-th keyframe.
    pub densify_every: usize,
}

impl ScenePolicy {
    /// Defaults scaled to the sensor's noise floor.
    pub fn for_noise_floor(noise_floor: f64) -> Self {
        Self {
            s_min: 0.05,
            s_max: 2.0,
            n_max: 5000,
            tau_init: 5.0 * noise_floor,
            tau_densify: 3.0 * noise_floor,
            tau_prune: 1e-4,
            densify_every: 5,
        }
    }

    pub fn clamp_scale(&self, s: f64) -> f64 {
        s.clamp(self.s_min, self.s_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene {
    pub gaussians: Vec<Gaussian2D>,
    pub bounds: Bounds,
}

impl GaussianScene {
    pub fn new(bounds: Bounds) -> Self {
        Self { gaussians: Vec::new(), bounds }
    }

    pub fn with_gaussians(gaussians: Vec<Gaussian2D>, bounds: Bounds) -> Self {
        Self { gaussians, bounds }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Checks every Gaussian is well-formed and inside the bounds.
    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.gaussians.iter().enumerate() {
            if !g.is_valid() {
                return Err(Error::Domain(format!("gaussian {i} is malformed: {g:?}")));
            }
            if !self.bounds.contains(g.mean) {
                return Err(Error::Domain(format!("gaussian {i} mean {:?} outside bounds", g.mean)));
            }
        }
        Ok(())
    }

    /// Applies a rigid transform to every mean and orientation.
    pub fn transformed(&self, t: &Pose2) -> GaussianScene {
        let gaussians = self
            .gaussians
            .iter()
            .map(|g| Gaussian2D { mean: t.sensor_to_world(g.mean), orient: g.orient + t.yaw, ..*g })
            .collect();
        GaussianScene { gaussians, bounds: self.bounds }
    }
}

/// Bins that are local maxima over their 8-neighborhood and exceed `tau`,
/// as `(range, azimuth, value)`. Equal-valued neighbors are resolved in favor
/// of the lowest `(range, azimuth)` index so plateaus yield a single peak.
pub fn local_maxima(img: &RaImage, tau: f64) -> Vec<(usize, usize, f64)> {
    let (rows, cols) = img.shape();
    let mut out = Vec::new();
    for r in 0..rows {
        for a in 0..cols {
            let v = img.get(r, a);
            if !(v > tau) {
                continue;
            }
            let mut is_max = true;
            'nb: for dr in -1i64..=1 {
                for da in -1i64..=1 {
                    if dr == 0 && da == 0 {
                        continue;
                    }
                    let (nr, na) = (r as i64 + dr, a as i64 + da);
                    if nr < 0 || na < 0 || nr >= rows as i64 || na >= cols as i64 {
                        continue;
                    }
                    let nv = img.get(nr as usize, na as usize);
                    let earlier = (nr, na) < (r as i64, a as i64);
                    if nv > v || (nv == v && earlier) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                out.push((r, a, v));
            }
        }
    }
    out
}

fn spawn_at_bin(r: usize, a: usize, power: f64, pose: &Pose2, cfg: &RadarConfig, policy: &ScenePolicy) -> Gaussian2D {
    let range = (r as f64 + 0.5) * cfg.range_res();
    let theta = -cfg.azimuth_fov() / 2.0 + a as f64 * cfg.azimuth_step();
    let p = [range * theta.cos(), range * theta.sin()];
    Gaussian2D {
        mean: pose.sensor_to_world(p),
        orient: pose.yaw + theta,
        scales: [policy.clamp_scale(cfg.range_res()), policy.clamp_scale(range * cfg.azimuth_step())],
        power: cross_section_for_power(power, range, cfg),
    }
}

/// Seeds a scene with one Gaussian per local maximum of `ra` above
/// `policy.tau_init`, back-projected through `pose`.
pub fn init_from_frame(
    ra: &RaImage,
    pose: &Pose2,
    cfg: &RadarConfig,
    policy: &ScenePolicy,
    bounds: Bounds,
) -> GaussianScene {
    let gaussians = local_maxima(ra, policy.tau_init)
        .into_iter()
        .map(|(r, a, v)| spawn_at_bin(r, a, v, pose, cfg, policy))
        .filter(|g| bounds.contains(g.mean))
        .take(policy.n_max)
        .collect();
    GaussianScene { gaussians, bounds }
}

/// Spawns Gaussians at residual peaks `measured - rendered > tau_densify`,
/// strongest first, until the budget `n_max` is reached.
pub fn densify(
    scene: &GaussianScene,
    measured: &RaImage,
    rendered: &RaImage,
    pose: &Pose2,
    cfg: &RadarConfig,
    policy: &ScenePolicy,
) -> Result<GaussianScene> {
    measured.check_same(rendered)?;
    let residual = RaImage::from_fn(measured.rows(), measured.cols(), |r, a| measured.get(r, a) - rendered.get(r, a));
    let mut peaks = local_maxima(&residual, policy.tau_densify);
    peaks.sort_by(|x, y| y.2.total_cmp(&x.2));
    let room = policy.n_max.saturating_sub(scene.len());
    let mut out = scene.clone();
    out.gaussians.extend(
        peaks
            .into_iter()
            .map(|(r, a, v)| spawn_at_bin(r, a, v, pose, cfg, policy))
            .filter(|g| scene.bounds.contains(g.mean))
            .take(room),
    );
    Ok(out)
}

/// Drops Gaussians whose power ratio falls below `tau_prune` or whose mean has
/// left the scene bounds.
pub fn prune(scene: &GaussianScene, tau_prune: f64) -> GaussianScene {
    let gaussians = scene
        .gaussians
        .iter()
        .filter(|g| g.power >= tau_prune && scene.bounds.contains(g.mean))
        .copied()
        .collect();
    GaussianScene { gaussians, bounds: scene.bounds }
}

/// Text format: a header `count,min_x,min_y,max_x,max_y` followed by one
/// `mean_x,mean_y,orient,s1,s2,power_ratio` line per Gaussian.
pub fn scene_to_string(scene: &GaussianScene) -> String {
    let b = &scene.bounds;
    let mut s = format!("{},{},{},{},{}\n", scene.len(), b.min[0], b.min[1], b.max[0], b.max[1]);
    for g in &scene.gaussians {
        let _ = writeln!(s, "{},{},{},{},{},{}", g.mean[0], g.mean[1], g.orient, g.scales[0], g.scales[1], g.power);
    }
    s
}

pub fn scene_from_str(text: &str, path: &Path) -> Result<GaussianScene> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let fields = parse_fields(header, 5, path, hline + 1)?;
    let count = fields[0];
    if count < 0.0 || count.fract() != 0.0 {
        return Err(Error::parse(path, hline + 1, format!("bad gaussian count {count}")));
    }
    let bounds = Bounds::new([fields[1], fields[2]], [fields[3], fields[4]]);
    let mut gaussians = Vec::with_capacity(count as usize);
    for (i, line) in lines {
        let f = parse_fields(line, 6, path, i + 1)?;
        let g = Gaussian2D::new([f[0], f[1]], f[2], [f[3], f[4]], f[5]);
        if !g.is_valid() {
            return Err(Error::parse(path, i + 1, "scales must be positive and power nonnegative"));
        }
        if !bounds.contains(g.mean) {
            return Err(Error::parse(path, i + 1, "mean outside scene bounds"));
        }
        gaussians.push(g);
    }
    if gaussians.len() != count as usize {
        return Err(Error::parse(
            path,
            hline + 1,
            format!("header declares {count} gaussians, found {}", gaussians.len()),
        ));
    }
    Ok(GaussianScene { gaussians, bounds })
}

fn parse_fields(line: &str, n: usize, path: &Path, line_no: usize) -> Result<Vec<f64>> {
    let f: Vec<&str> = line.split(',').map(str::trim).collect();
    if f.len() != n {
        return Err(Error::parse(path, line_no, format!("expected {n} fields, found {}", f.len())));
    }
    f.iter()
        .map(|s| s.parse::<f64>().map_err(|e| Error::parse(path, line_no, format!("`{s}`: {e}"))))
        .collect()
}

pub fn save_scene(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scene_to_string(scene)).map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<GaussianScene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    scene_from_str(&text, path)
}
