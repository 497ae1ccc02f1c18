//! Odometry frontend: CFAR point extraction, Doppler ego-velocity least
//! squares and gyro-aided dead reckoning.

use crate::error::{Error, Result};
use crate::image::RaImage;
use crate::model::{rotate, Pose2, RadarConfig, Vel2};
use crate::render::DOPPLER_SIGN;

/// A detected static reflector in the sensor frame with its measured radial
/// velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerPoint {
    pub pos: [f64; 2],
    pub doppler: f64,
}

impl DopplerPoint {
    pub fn new(pos: [f64; 2], doppler: f64) -> Self {
        Self { pos, doppler }
    }

    /// Point at the center of RA bin `(r, a)`.
    pub fn at_bin(r: usize, a: usize, cfg: &RadarConfig, doppler: f64) -> Self {
        let range = (r as f64 + 0.5) * cfg.range_res();
        let th = -cfg.azimuth_fov() / 2.0 + a as f64 * cfg.azimuth_step();
        Self { pos: [range * th.cos(), range * th.sin()], doppler }
    }

    pub fn direction(&self) -> Option<[f64; 2]> {
        let n = self.pos[0].hypot(self.pos[1]);
        (n > 0.0 && n.is_finite()).then(|| [self.pos[0] / n, self.pos[1] / n])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyroSample {
    pub omega: f64,
    pub timestamp: f64,
}

/// Cell-averaging CFAR parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfarParams {
    pub guard: usize,
    pub train: usize,
    pub alpha: f64,
}

impl Default for CfarParams {
    fn default() -> Self {
        Self { guard: 2, train: 6, alpha: 8.0 }
    }
}

/// 2D cell-averaging CFAR.
///
/// A cell is detected when its value exceeds `alpha` times the mean of the
/// training ring: the square of half-width `guard + train` around the cell
/// minus the square of half-width `guard`. Near the border only the cells
/// inside the image are averaged.
pub fn cfar_detect(ra: &RaImage, guard: usize, train: usize, alpha: f64) -> Result<Vec<(usize, usize)>> {
    if train == 0 {
        return Err(Error::Domain("CFAR needs at least one training cell".into()));
    }
    if !(alpha > 1.0) {
        return Err(Error::Domain(format!("CFAR scale must exceed 1, got {alpha}")));
    }
    let (rows, cols) = ra.shape();
    let outer = guard + train;
    let span = 2 * outer + 1;
    if span > rows || span > cols {
        return Err(Error::Shape(format!("CFAR window {span}x{span} exceeds image {rows}x{cols}")));
    }
    // summed-area table with a zero border
    let mut sat = vec![0.0; (rows + 1) * (cols + 1)];
    for r in 0..rows {
        let mut acc = 0.0;
        for c in 0..cols {
            acc += ra.get(r, c);
            sat[(r + 1) * (cols + 1) + c + 1] = sat[r * (cols + 1) + c + 1] + acc;
        }
    }
    let boxed = |r: usize, c: usize, h: usize| -> (f64, usize) {
        let (r0, r1) = (r.saturating_sub(h), (r + h + 1).min(rows));
        let (c0, c1) = (c.saturating_sub(h), (c + h + 1).min(cols));
        let at = |i: usize, j: usize| sat[i * (cols + 1) + j];
        (at(r1, c1) - at(r0, c1) - at(r1, c0) + at(r0, c0), (r1 - r0) * (c1 - c0))
    };
    let mut hits = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let (so, no) = boxed(r, c, outer);
            let (sg, ng) = boxed(r, c, guard);
            let n = no - ng;
            if n == 0 {
                continue;
            }
            let mean = ((so - sg) / n as f64).max(0.0);
            if ra.get(r, c) > alpha * mean {
                hits.push((r, c));
            }
        }
    }
    Ok(hits)
}

/// Groups detections into 8-connected clusters, each sorted by bin index.
pub fn cluster_detections(hits: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
    use std::collections::BTreeSet;
    let mut left: BTreeSet<(usize, usize)> = hits.iter().copied().collect();
    let mut clusters = Vec::new();
    while let Some(&seed) = left.iter().next() {
        left.remove(&seed);
        let mut stack = vec![seed];
        let mut cluster = Vec::new();
        while let Some((r, c)) = stack.pop() {
            cluster.push((r, c));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 {
                        continue;
                    }
                    let n = (nr as usize, nc as usize);
                    if left.remove(&n) {
                        stack.push(n);
                    }
                }
            }
        }
        cluster.sort_unstable();
        clusters.push(cluster);
    }
    clusters
}

/// Strongest cell of each CFAR cluster, strongest clusters first, at most
/// `max_points`.
pub fn cfar_peaks(ra: &RaImage, params: &CfarParams, max_points: usize) -> Result<Vec<(usize, usize)>> {
    let hits = cfar_detect(ra, params.guard, params.train, params.alpha)?;
    let mut peaks: Vec<(usize, usize)> = cluster_detections(&hits)
        .into_iter()
        .map(|c| {
            c.into_iter()
                .fold(None, |best: Option<(usize, usize)>, p| match best {
                    Some(b) if ra.get(b.0, b.1) >= ra.get(p.0, p.1) => Some(b),
                    _ => Some(p),
                })
                .expect("clusters are nonempty")
        })
        .collect();
    peaks.sort_by(|a, b| ra.get(b.0, b.1).total_cmp(&ra.get(a.0, a.1)).then(a.cmp(b)));
    peaks.truncate(max_points);
    Ok(peaks)
}

/// Condition number of `H^T H` above which the velocity is unobservable.
pub const MAX_CONDITION: f64 = 1e8;

/// Least-squares body velocity from Doppler returns of static points.
///
/// Each point contributes `doppler_i = s * r_i^T v` with `r_i` its unit
/// direction. Returns the estimate and the residual RMS.
pub fn ego_velocity_lsq(points: &[DopplerPoint]) -> Result<(Vel2, f64)> {
    if points.len() < 2 {
        return Err(Error::Degenerate(format!("{} Doppler points, need at least 2", points.len())));
    }
    let mut rows = Vec::with_capacity(points.len());
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, p) in points.iter().enumerate() {
        let d = p.direction().ok_or_else(|| Error::Domain(format!("Doppler point {i} at the sensor origin")))?;
        let h = [DOPPLER_SIGN * d[0], DOPPLER_SIGN * d[1]];
        a11 += h[0] * h[0];
        a12 += h[0] * h[1];
        a22 += h[1] * h[1];
        b1 += h[0] * p.doppler;
        b2 += h[1] * p.doppler;
        rows.push(h);
    }
    let tr = a11 + a22;
    let det = a11 * a22 - a12 * a12;
    let disc = ((a11 - a22).powi(2) + 4.0 * a12 * a12).sqrt();
    let (l_max, l_min) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
    if !(l_min > 0.0) || l_max / l_min > MAX_CONDITION {
        return Err(Error::Degenerate("Doppler directions are (nearly) collinear".into()));
    }
    let v = Vel2::new((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det);
    let ss: f64 = rows
        .iter()
        .zip(points)
        .map(|(h, p)| (p.doppler - h[0] * v.vx - h[1] * v.vy).powi(2))
        .sum();
    Ok((v, (ss / points.len() as f64).sqrt()))
}

/// One explicit Euler step: the position advances along the previous heading,
/// then the heading integrates the gyro rate.
pub fn dead_reckon(prev: &Pose2, v: &Vel2, gyro: &GyroSample, dt: f64) -> Result<Pose2> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let d = rotate(prev.yaw, [v.vx * dt, v.vy * dt]);
    Ok(Pose2::new(prev.x + d[0], prev.y + d[1], prev.yaw + gyro.omega * dt))
}

/// Doppler/gyro odometry state: the latest pose and velocity estimate.
#[derive(Debug, Clone)]
pub struct Frontend {
    pub pose: Pose2,
    pub velocity: Vel2,
}

impl Frontend {
    pub fn new(pose: Pose2) -> Self {
        Self { pose, velocity: Vel2::zero() }
    }

    /// Advances by one frame. Falls back to the previous velocity when the
    /// Doppler geometry is degenerate.
    pub fn step(&mut self, points: &[DopplerPoint], gyro: &GyroSample, dt: f64) -> Result<Pose2> {
        match ego_velocity_lsq(points) {
            Ok((v, _)) => self.velocity = v,
            Err(Error::Degenerate(msg)) => log::warn!("keeping previous velocity: {msg}"),
            Err(e) => return Err(e),
        }
        self.pose = dead_reckon(&self.pose, &self.velocity, gyro, dt)?;
        Ok(self.pose)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn gyro(omega: f64) -> GyroSample {
        GyroSample { omega, timestamp: 0.0 }
    }

    #[test]
    fn cfar_examples() {
        let flat = Image::filled(20, 20, 3.0);
        assert!(cfar_detect(&flat, 2, 6, 2.0).unwrap().is_empty());
        let mut spike = Image::zeros(20, 20);
        spike.set(7, 11, 5.0);
        assert_eq!(cfar_detect(&spike, 2, 6, 8.0).unwrap(), vec![(7, 11)]);
        assert!(cfar_detect(&Image::zeros(10, 40), 2, 6, 8.0).is_err());
        assert!(cfar_detect(&spike, 2, 0, 8.0).is_err());
    }

    #[test]
    fn cfar_border_uses_valid_cells() {
        let mut img = Image::filled(17, 17, 1.0);
        img.set(0, 0, 20.0);
        img.set(16, 8, 5.0);
        let hits = cfar_detect(&img, 1, 2, 8.0).unwrap();
        assert_eq!(hits, vec![(0, 0)]);
    }

    #[test]
    fn clusters_are_eight_connected() {
        let hits = [(0, 0), (1, 1), (5, 5), (5, 6), (9, 0)];
        let c = cluster_detections(&hits);
        assert_eq!(c, vec![vec![(0, 0), (1, 1)], vec![(5, 5), (5, 6)], vec![(9, 0)]]);
    }

    #[test]
    fn lsq_examples() {
        let p = [DopplerPoint::new([3.0, 0.0], DOPPLER_SIGN), DopplerPoint::new([0.0, 2.0], 0.0)];
        let (v, rms) = ego_velocity_lsq(&p).unwrap();
        assert!((v.vx - 1.0).abs() < 1e-15 && v.vy.abs() < 1e-15 && rms < 1e-15);

        let z = [DopplerPoint::new([1.0, 1.0], 0.0), DopplerPoint::new([1.0, -2.0], 0.0)];
        assert_eq!(ego_velocity_lsq(&z).unwrap().0, Vel2::zero());

        let line = [DopplerPoint::new([1.0, 0.0], 1.0), DopplerPoint::new([4.0, 0.0], 1.0)];
        assert!(matches!(ego_velocity_lsq(&line), Err(Error::Degenerate(_))));
        assert!(matches!(ego_velocity_lsq(&line[..1]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn dead_reckon_examples() {
        let p = Pose2::new(1.0, 2.0, 0.3);
        assert_eq!(dead_reckon(&p, &Vel2::zero(), &gyro(0.0), 0.1).unwrap(), p);
        let q = dead_reckon(&Pose2::identity(), &Vel2::new(1.0, 0.0), &gyro(0.0), 1.0).unwrap();
        assert_eq!(q, Pose2::new(1.0, 0.0, 0.0));
        let q = dead_reckon(&Pose2::new(0.0, 0.0, PI / 2.0), &Vel2::new(1.0, 0.0), &gyro(0.0), 1.0).unwrap();
        assert!(q.x.abs() < 1e-15 && (q.y - 1.0).abs() < 1e-15);
        assert!(dead_reckon(&p, &Vel2::zero(), &gyro(0.0), 0.0).is_err());
    }

    proptest! {
        #[test]
        fn lsq_recovers_planted_velocity(
            vx in -3.0..3.0f64,
            vy in -3.0..3.0f64,
            angles in prop::collection::vec(-1.2..1.2f64, 3..20),
            ranges in prop::collection::vec(0.5..20.0f64, 20),
        ) {
            let mut pts: Vec<DopplerPoint> = angles
                .iter()
                .zip(&ranges)
                .map(|(a, r)| {
                    DopplerPoint::new([r * a.cos(), r * a.sin()], DOPPLER_SIGN * (a.cos() * vx + a.sin() * vy))
                })
                .collect();
            pts.push(DopplerPoint::new([0.0, 1.0], DOPPLER_SIGN * vy));
            pts.push(DopplerPoint::new([1.0, 0.0], DOPPLER_SIGN * vx));
            let (v, _) = ego_velocity_lsq(&pts).unwrap();
            prop_assert!((v.vx - vx).abs() <= 1e-9 && (v.vy - vy).abs() <= 1e-9);
        }

        #[test]
        fn cfar_is_scale_invariant(seed in 0u64..1000, k in 0.01..100.0f64) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // dyadic values keep the scaled comparison exact
            let img = Image::from_fn(24, 24, |_, _| {
                if rng.gen_bool(0.05) { 64.0 } else { rng.gen_range(0..8) as f64 }
            });
            let k = 2f64.powi(k.log2().round() as i32);
            prop_assert_eq!(cfar_detect(&img, 1, 3, 4.0).unwrap(), cfar_detect(&img.scaled(k), 1, 3, 4.0).unwrap());
        }
    }
}
