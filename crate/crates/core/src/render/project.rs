use crate::model::Pose2;
use crate::scene::Gaussian2D;

/// Gaussians closer than this to the sensor are skipped.
pub const MIN_RANGE: f64 = 1e-6;
/// Diagonal loading added to the polar covariance before inversion.
pub const COV_REG: f64 = 1e-8;

/// A Gaussian mapped into the sensor's polar (range, azimuth) frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarProjection {
    pub range: f64,
    pub azimuth: f64,
    /// Polar covariance `[rr, r-phi, phi-phi]` (without regularization).
    pub cov: [f64; 3],
    /// Sensor-frame mean.
    pub(crate) p: [f64; 2],
    /// Angle between the Gaussian's first axis and the line of sight.
    pub(crate) beta: f64,
    /// Line-of-sight covariance entries before the 1/R azimuth scaling.
    pub(crate) abc: [f64; 3],
}

impl PolarProjection {
    /// Regularized polar covariance `M` and its inverse, both `[m11, m12, m22]`.
    pub(crate) fn regularized(&self) -> ([f64; 3], [f64; 3]) {
        let m = [self.cov[0] + COV_REG, self.cov[1], self.cov[2] + COV_REG];
        let det = m[0] * m[2] - m[1] * m[1];
        (m, [m[2] / det, -m[1] / det, m[0] / det])
    }
}

/// Projects `g` into the polar frame of a sensor at `pose`.
///
/// With `p` the sensor-frame mean, `J = [[cos phi, sin phi], [-sin phi / R,
/// cos phi / R]]` linearizes the Cartesian-to-polar map and the polar
/// covariance is `J Rot(-yaw) Sigma Rot(-yaw)^T J^T`. Returns `None` when the
/// Gaussian sits on the sensor.
pub fn project_to_polar(g: &Gaussian2D, pose: &Pose2) -> Option<PolarProjection> {
    let p = pose.world_to_sensor(g.mean);
    let range = p[0].hypot(p[1]);
    if !(range >= MIN_RANGE) {
        return None;
    }
    let azimuth = p[1].atan2(p[0]);
    let beta = g.orient - pose.yaw - azimuth;
    let (sb, cb) = beta.sin_cos();
    let (s1, s2) = (g.scales[0] * g.scales[0], g.scales[1] * g.scales[1]);
    let a = cb * cb * s1 + sb * sb * s2;
    let b = cb * sb * (s1 - s2);
    let c = sb * sb * s1 + cb * cb * s2;
    Some(PolarProjection {
        range,
        azimuth,
        cov: [a, b / range, c / (range * range)],
        p,
        beta,
        abc: [a, b, c],
    })
}
