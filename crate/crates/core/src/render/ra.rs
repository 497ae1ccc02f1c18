use crate::image::{Image, RaImage};
use crate::model::{wrap_angle, Pose2, RadarConfig};
use crate::scene::{Gaussian2D, GaussianScene};

use super::project::{project_to_polar, PolarProjection};
use super::{GaussianGrad, RenderGrid};

/// Mahalanobis-squared cutoff of a splat footprint (3 sigma).
pub const FOOTPRINT_M2: f64 = 9.0;

/// A projected Gaussian with its footprint on the polar grid.
#[derive(Debug, Clone)]
pub(crate) struct Splat {
    pub index: usize,
    pub proj: PolarProjection,
    pub peak: f64,
    pub inv: [f64; 3],
    pub r_lo: usize,
    pub r_hi: usize,
    /// Azimuth bins inside the footprint with their wrapped offsets.
    pub az: Vec<(usize, f64)>,
}

impl RenderGrid {
    pub(crate) fn splat(&self, index: usize, g: &Gaussian2D, pose: &Pose2, cfg: &RadarConfig) -> Option<Splat> {
        let p = pose.world_to_sensor(g.mean);
        let rough = p[0].hypot(p[1]);
        let reach = 3.0 * g.scales[0].max(g.scales[1]) + 1e-4;
        if rough - reach > cfg.max_range() {
            return None;
        }
        let proj = project_to_polar(g, pose)?;
        let (m, inv) = proj.regularized();
        let (hr, ha) = (3.0 * m[0].sqrt(), 3.0 * m[2].sqrt());
        let dr = cfg.range_res();
        let lo = ((proj.range - hr) / dr - 0.5).ceil().max(0.0);
        let hi = ((proj.range + hr) / dr - 0.5).floor().min((cfg.n_range() - 1) as f64);
        if !(hi >= lo) {
            return None;
        }
        let az: Vec<(usize, f64)> = self
            .azimuth
            .iter()
            .enumerate()
            .filter_map(|(a, th)| {
                let d = wrap_angle(th - proj.azimuth);
                (d.abs() <= ha).then_some((a, d))
            })
            .collect();
        if az.is_empty() {
            return None;
        }
        let peak = cfg.power_const() * g.power / proj.range.powi(4);
        Some(Splat { index, proj, peak, inv, r_lo: lo as usize, r_hi: hi as usize, az })
    }

    pub(crate) fn splats(&self, scene: &GaussianScene, pose: &Pose2, cfg: &RadarConfig) -> Vec<Splat> {
        scene.gaussians.iter().enumerate().filter_map(|(i, g)| self.splat(i, g, pose, cfg)).collect()
    }

    /// Unit-peak footprint values `exp(-m/2)` visited by a splat.
    #[inline]
    pub(crate) fn for_each_bin(&self, s: &Splat, mut f: impl FnMut(usize, usize, f64, f64, f64)) {
        for r in s.r_lo..=s.r_hi {
            let dr = self.range[r] - s.proj.range;
            for &(a, dth) in &s.az {
                let m2 = s.inv[0] * dr * dr + 2.0 * s.inv[1] * dr * dth + s.inv[2] * dth * dth;
                if m2 <= FOOTPRINT_M2 {
                    f(r, a, dr, dth, (-0.5 * m2).exp());
                }
            }
        }
    }

    pub(crate) fn render_splats(&self, splats: &[Splat], cfg: &RadarConfig) -> RaImage {
        let mut img = Image::zeros(cfg.n_range(), cfg.n_azimuth());
        for s in splats {
            self.for_each_bin(s, |r, a, _, _, e| img.add_at(r, a, s.peak * e));
        }
        img
    }

    /// Backpropagates `d_img` (dL/dRA) into the Gaussians and the pose.
    ///
    /// Adds to `d_gauss[s.index]` and returns dL/d(x, y, yaw).
    pub(crate) fn backward_splats(
        &self,
        splats: &[Splat],
        scene: &GaussianScene,
        pose: &Pose2,
        d_img: &RaImage,
        cfg: &RadarConfig,
        d_gauss: &mut [GaussianGrad],
    ) -> [f64; 3] {
        let mut d_pose = [0.0; 3];
        let (sy, cy) = pose.yaw.sin_cos();
        for s in splats {
            let g = &scene.gaussians[s.index];
            let (mut g_peak, mut g_r, mut g_phi) = (0.0, 0.0, 0.0);
            let mut g_a = [0.0f64; 3];
            let inv = s.inv;
            self.for_each_bin(s, |r, a, dr, dth, e| {
                let up = d_img.get(r, a);
                if up == 0.0 {
                    return;
                }
                g_peak += up * e;
                let gm = -0.5 * up * s.peak * e;
                // m = inv11 dr^2 + 2 inv12 dr dth + inv22 dth^2, dr = R_n - R, dth = th_a - phi
                g_r += gm * -2.0 * (inv[0] * dr + inv[1] * dth);
                g_phi += gm * -2.0 * (inv[1] * dr + inv[2] * dth);
                g_a[0] += gm * dr * dr;
                g_a[1] += gm * dr * dth;
                g_a[2] += gm * dth * dth;
            });
            if g_peak == 0.0 && g_a == [0.0; 3] {
                continue;
            }
            let range = s.proj.range;
            // dL/dM = -A G_A A for symmetric A = M^-1
            let ga = [[g_a[0], g_a[1]], [g_a[1], g_a[2]]];
            let am = [[inv[0], inv[1]], [inv[1], inv[2]]];
            let mut tmp = [[0.0; 2]; 2];
            for i in 0..2 {
                for k in 0..2 {
                    tmp[i][k] = am[i][0] * ga[0][k] + am[i][1] * ga[1][k];
                }
            }
            let mut gm = [[0.0; 2]; 2];
            for i in 0..2 {
                for k in 0..2 {
                    gm[i][k] = -(tmp[i][0] * am[0][k] + tmp[i][1] * am[1][k]);
                }
            }
            let [_, b_, c_] = s.proj.abc;
            let d_a = gm[0][0];
            let d_b = 2.0 * gm[0][1] / range;
            let d_c = gm[1][1] / (range * range);
            g_r += -2.0 * gm[0][1] * b_ / (range * range) - 2.0 * gm[1][1] * c_ / (range * range * range);

            // peak = C sigma / R^4
            let d_power = g_peak * cfg.power_const() / range.powi(4);
            g_r += g_peak * -4.0 * s.peak / range;

            let (sb, cb) = s.proj.beta.sin_cos();
            let (s1, s2) = (g.scales[0], g.scales[1]);
            let diff = s1 * s1 - s2 * s2;
            let d_beta = d_a * (-2.0 * b_) + d_b * (2.0 * s.proj.beta).cos() * diff + d_c * (2.0 * b_);
            let d_s1 = d_a * 2.0 * cb * cb * s1 + d_b * 2.0 * cb * sb * s1 + d_c * 2.0 * sb * sb * s1;
            let d_s2 = d_a * 2.0 * sb * sb * s2 - d_b * 2.0 * cb * sb * s2 + d_c * 2.0 * cb * cb * s2;

            // beta = orient - yaw - phi
            let g_phi_total = g_phi - d_beta;
            let [px, py] = s.proj.p;
            let r2 = range * range;
            let dp = [g_r * px / range - g_phi_total * py / r2, g_r * py / range + g_phi_total * px / r2];
            // p = Rot(-yaw) (mu - t)
            let d_mu = [cy * dp[0] - sy * dp[1], sy * dp[0] + cy * dp[1]];

            let out = &mut d_gauss[s.index];
            out.mean[0] += d_mu[0];
            out.mean[1] += d_mu[1];
            out.orient += d_beta;
            out.scales[0] += d_s1;
            out.scales[1] += d_s2;
            out.power += d_power;

            d_pose[0] -= d_mu[0];
            d_pose[1] -= d_mu[1];
            d_pose[2] += dp[0] * py - dp[1] * px - d_beta;
        }
        d_pose
    }
}
