//! Absolute pose error after closed-form planar rigid alignment.

use crate::error::{Error, Result};
use crate::model::{rotate, wrap_angle, Pose2, StampedPose};

/// Per-pose errors of one matched pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    pub t: f64,
    pub trans: f64,
    pub rot_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApeResult {
    /// Root-mean-square translation error (m).
    pub trans_rmse: f64,
    /// Root-mean-square yaw error (degrees).
    pub rot_rmse: f64,
    pub per_pose: Vec<PoseError>,
    pub alignment: Pose2,
    /// Estimated poses without a ground-truth partner.
    pub unmatched: usize,
}

/// Median spacing of a timestamp sequence, or `None` for fewer than 2 poses.
fn frame_period(traj: &[StampedPose]) -> Option<f64> {
    let mut d: Vec<f64> = traj.windows(2).map(|w| w[1].t - w[0].t).filter(|d| *d > 0.0).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    Some(d[d.len() / 2])
}

/// Pairs each estimated pose with the ground-truth pose nearest in time,
/// keeping pairs closer than half the ground-truth frame period. Returns the
/// index pairs and the number of dropped estimates.
pub fn associate(est: &[StampedPose], gt: &[StampedPose]) -> (Vec<(usize, usize)>, usize) {
    let max_gap = frame_period(gt).map_or(f64::INFINITY, |p| p / 2.0);
    let mut pairs = Vec::new();
    for (i, e) in est.iter().enumerate() {
        let j = gt.partition_point(|g| g.t < e.t);
        let best = [j.checked_sub(1), (j < gt.len()).then_some(j)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| (gt[a].t - e.t).abs().total_cmp(&(gt[b].t - e.t).abs()));
        if let Some(b) = best {
            if (gt[b].t - e.t).abs() <= max_gap {
                pairs.push((i, b));
            }
        }
    }
    let dropped = est.len() - pairs.len();
    (pairs, dropped)
}

fn align_pairs(est: &[StampedPose], gt: &[StampedPose], pairs: &[(usize, usize)]) -> Result<Pose2> {
    if pairs.len() < 2 {
        return Err(Error::Degenerate(format!("alignment needs at least 2 matched poses, got {}", pairs.len())));
    }
    let n = pairs.len() as f64;
    let (mut ce, mut cg) = ([0.0; 2], [0.0; 2]);
    for &(i, j) in pairs {
        ce[0] += est[i].pose.x / n;
        ce[1] += est[i].pose.y / n;
        cg[0] += gt[j].pose.x / n;
        cg[1] += gt[j].pose.y / n;
    }
    let (mut dot, mut cross) = (0.0, 0.0);
    for &(i, j) in pairs {
        let a = [est[i].pose.x - ce[0], est[i].pose.y - ce[1]];
        let b = [gt[j].pose.x - cg[0], gt[j].pose.y - cg[1]];
        dot += a[0] * b[0] + a[1] * b[1];
        cross += a[0] * b[1] - a[1] * b[0];
    }
    // all positions coincide: rotation is unobservable, fall back to headings
    let theta = if dot.hypot(cross) > 1e-12 {
        cross.atan2(dot)
    } else {
        let (s, c) = pairs
            .iter()
            .map(|&(i, j)| wrap_angle(gt[j].pose.yaw - est[i].pose.yaw).sin_cos())
            .fold((0.0, 0.0), |acc, (s, c)| (acc.0 + s, acc.1 + c));
        s.atan2(c)
    };
    let r = rotate(theta, ce);
    Ok(Pose2::new(cg[0] - r[0], cg[1] - r[1], theta))
}

/// Rigid transform `T` minimizing `sum |T p_est - p_gt|^2` over time-matched
/// pairs (rotation and translation, no scale).
pub fn align_se2(est: &[StampedPose], gt: &[StampedPose]) -> Result<Pose2> {
    let (pairs, _) = associate(est, gt);
    align_pairs(est, gt, &pairs)
}

pub fn ape(est: &[StampedPose], gt: &[StampedPose]) -> Result<ApeResult> {
    let (pairs, unmatched) = associate(est, gt);
    if unmatched > 0 {
        log::warn!("{unmatched} estimated poses have no ground-truth partner");
    }
    let t = align_pairs(est, gt, &pairs)?;
    let per_pose: Vec<PoseError> = pairs
        .iter()
        .map(|&(i, j)| {
            let e = t.compose(&est[i].pose);
            let g = &gt[j].pose;
            PoseError {
                t: est[i].t,
                trans: e.distance(g),
                rot_deg: wrap_angle(est[i].pose.yaw + t.yaw - g.yaw).abs().to_degrees(),
            }
        })
        .collect();
    let n = per_pose.len() as f64;
    let trans_rmse = (per_pose.iter().map(|e| e.trans * e.trans).sum::<f64>() / n).sqrt();
    let rot_rmse = (per_pose.iter().map(|e| e.rot_deg * e.rot_deg).sum::<f64>() / n).sqrt();
    Ok(ApeResult { trans_rmse, rot_rmse, per_pose, alignment: t, unmatched })
}

/// One row of a metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: String,
    pub mode: String,
    pub trans_rmse_m: f64,
    pub rot_rmse_deg: f64,
}

pub const METRICS_HEADER: &str = "scenario,mode,trans_rmse_m,rot_rmse_deg";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.scenario, r.mode, r.trans_rmse_m, r.rot_rmse_deg));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(poses: &[(f64, f64, f64)]) -> Vec<StampedPose> {
        poses.iter().enumerate().map(|(i, p)| StampedPose::new(i as f64 * 0.1, Pose2::new(p.0, p.1, p.2))).collect()
    }

    fn moved(tr: &[StampedPose], t: &Pose2) -> Vec<StampedPose> {
        tr.iter().map(|s| StampedPose::new(s.t, t.compose(&s.pose))).collect()
    }

    fn wiggle() -> Vec<StampedPose> {
        traj(&[(0.0, 0.0, 0.0), (1.0, 0.2, 0.1), (2.0, 0.1, 0.3), (2.5, 1.0, 0.9), (2.4, 2.0, 1.6)])
    }

    #[test]
    fn identical_trajectories() {
        let gt = wiggle();
        let t = align_se2(&gt, &gt).unwrap();
        assert!(t.x.abs() < 1e-12 && t.y.abs() < 1e-12 && t.yaw.abs() < 1e-12);
        let r = ape(&gt, &gt).unwrap();
        assert!(r.trans_rmse < 1e-12 && r.rot_rmse < 1e-9);
    }

    #[test]
    fn recovers_a_known_transform() {
        let gt = wiggle();
        let t = Pose2::new(3.0, -1.0, 0.7);
        let est = moved(&gt, &t.inverse());
        let a = align_se2(&est, &gt).unwrap();
        assert!((a.x - t.x).abs() < 1e-9 && (a.y - t.y).abs() < 1e-9 && (a.yaw - t.yaw).abs() < 1e-9);
        let shifted = moved(&gt, &Pose2::new(1.0, 0.0, 0.0));
        let r = ape(&shifted, &gt).unwrap();
        assert!(r.trans_rmse < 1e-12 && r.rot_rmse < 1e-9);
    }

    #[test]
    fn single_pose_is_rejected() {
        let gt = traj(&[(0.0, 0.0, 0.0)]);
        assert!(align_se2(&gt, &gt).is_err());
    }

    #[test]
    fn hand_computed_three_poses() {
        // gt on the x axis, estimate offset in y by +1, -1, +1 with yaw errors
        let gt = traj(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (2.0, 0.0, 0.0)]);
        let est = traj(&[(0.0, 1.0, 0.1), (1.0, -1.0, -0.1), (2.0, 1.0, 0.0)]);
        // centroids (1, 1/3) and (1, 0); centered est y = 2/3, -4/3, 2/3 against
        // x = -1, 0, 1: dot = 2, cross = -(-1*2/3 + 1*2/3) = 0, so theta = 0 and
        // the alignment is a shift by -1/3 in y.
        let r = ape(&est, &gt).unwrap();
        assert!(r.alignment.yaw.abs() < 1e-12 && (r.alignment.y + 1.0 / 3.0).abs() < 1e-12);
        let e = [2.0 / 3.0, 4.0 / 3.0, 2.0 / 3.0];
        let want = ((e[0] * e[0] + e[1] * e[1] + e[2] * e[2]) / 3.0f64).sqrt();
        assert!((r.trans_rmse - want).abs() < 1e-12);
        let rot = ((0.1f64.to_degrees().powi(2) * 2.0) / 3.0).sqrt();
        assert!((r.rot_rmse - rot).abs() < 1e-9);
        let rms: f64 = (r.per_pose.iter().map(|p| p.trans * p.trans).sum::<f64>() / 3.0).sqrt();
        assert!((rms - r.trans_rmse).abs() < 1e-12);
    }

    #[test]
    fn association_drops_far_timestamps() {
        let gt = wiggle();
        let mut est = gt.clone();
        est.insert(0, StampedPose::new(gt[0].t - 1.0, Pose2::identity()));
        est.push(StampedPose::new(10.0, Pose2::identity()));
        let (pairs, dropped) = associate(&est, &gt);
        assert_eq!(dropped, 2);
        assert_eq!(pairs.len(), 5);
        assert!(pairs.iter().all(|&(i, j)| i == j + 1));
    }

    #[test]
    fn metrics_table_layout() {
        let rows = [MetricsRow { scenario: "room".into(), mode: "full".into(), trans_rmse_m: 0.5, rot_rmse_deg: 1.0 }];
        assert_eq!(metrics_csv(&rows), "scenario,mode,trans_rmse_m,rot_rmse_deg\nroom,full,0.5,1\n");
    }

    proptest! {
        #[test]
        fn ape_is_invariant_to_rigid_motion(x in -20.0..20.0f64, y in -20.0..20.0f64, yaw in -3.1..3.1f64, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let gt: Vec<_> = (0..30).map(|i| StampedPose::new(i as f64 * 0.1,
                Pose2::new(i as f64 * 0.3, (i as f64 * 0.2).sin(), i as f64 * 0.05))).collect();
            let est: Vec<_> = gt.iter().map(|s| StampedPose::new(s.t, Pose2::new(
                s.pose.x + rng.gen_range(-0.2..0.2), s.pose.y + rng.gen_range(-0.2..0.2), s.pose.yaw + rng.gen_range(-0.05..0.05)))).collect();
            let a = ape(&est, &gt).unwrap();
            let b = ape(&moved(&est, &Pose2::new(x, y, yaw)), &gt).unwrap();
            prop_assert!((a.trans_rmse - b.trans_rmse).abs() < 1e-9);
            prop_assert!((a.rot_rmse - b.rot_rmse).abs() < 1e-9);
        }

        #[test]
        fn rmse_is_permutation_invariant(seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let gt = wiggle();
            let est = moved(&gt, &Pose2::new(0.1, 0.2, 0.05));
            let mut errs: Vec<f64> = ape(&est, &gt).unwrap().per_pose.iter().map(|p| p.trans).collect();
            let base = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
            errs.shuffle(&mut rng);
            let again = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
            prop_assert!((base - again).abs() < 1e-12);
        }
    }
}
