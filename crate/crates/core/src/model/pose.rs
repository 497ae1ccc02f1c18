use std::f64::consts::PI;

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid maps -pi to +pi already; keep the half-open interval explicit
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Rotates `v` by angle `a`.
#[inline]
pub fn rotate(a: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = a.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Planar rigid transform: the sensor pose expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw: wrap_angle(yaw) }
    }

    pub const fn identity() -> Self {
        Self { x: 0.0, y: 0.0, yaw: 0.0 }
    }

    pub fn translation(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let t = rotate(self.yaw, other.translation());
        Pose2::new(self.x + t[0], self.y + t[1], self.yaw + other.yaw)
    }

    pub fn inverse(&self) -> Pose2 {
        let t = rotate(-self.yaw, [-self.x, -self.y]);
        Pose2::new(t[0], t[1], -self.yaw)
    }

    /// Maps a world point into this sensor's frame.
    pub fn world_to_sensor(&self, p: [f64; 2]) -> [f64; 2] {
        rotate(-self.yaw, [p[0] - self.x, p[1] - self.y])
    }

    pub fn sensor_to_world(&self, p: [f64; 2]) -> [f64; 2] {
        let r = rotate(self.yaw, p);
        [r[0] + self.x, r[1] + self.y]
    }

    pub fn distance(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }
}

/// Planar velocity in the sensor (body) frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vel2 {
    pub vx: f64,
    pub vy: f64,
}

impl Vel2 {
    pub fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn norm(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.vx, self.vy]
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite()
    }
}

/// A pose with its timestamp in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub t: f64,
    pub pose: Pose2,
}

impl StampedPose {
    pub fn new(t: f64, pose: Pose2) -> Self {
        Self { t, pose }
    }
}

pub type Trajectory = Vec<StampedPose>;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Pose2, b: &Pose2, tol: f64) -> bool {
        (a.x - b.x).abs() < tol && (a.y - b.y).abs() < tol && wrap_angle(a.yaw - b.yaw).abs() < tol
    }

    #[test]
    fn wrap_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
        assert!((wrap_angle(-0.5 - 2.0 * PI) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn world_to_sensor_examples() {
        let p = Pose2::identity().world_to_sensor([1.0, 0.0]);
        assert_eq!(p, [1.0, 0.0]);

        let p = Pose2::new(1.0, 0.0, 0.0).world_to_sensor([1.0, 0.0]);
        assert_eq!(p, [0.0, 0.0]);

        // Rot(-pi/2) * (0, 1) = (1, 0)
        let p = Pose2::new(0.0, 0.0, PI / 2.0).world_to_sensor([0.0, 1.0]);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15);
    }

    fn pose() -> impl Strategy<Value = Pose2> {
        (-50.0..50.0f64, -50.0..50.0f64, -PI..PI).prop_map(|(x, y, t)| Pose2::new(x, y, t))
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(p in pose()) {
            prop_assert!(close(&p.compose(&p.inverse()), &Pose2::identity(), 1e-12));
            prop_assert!(close(&p.inverse().compose(&p), &Pose2::identity(), 1e-12));
        }

        #[test]
        fn compose_is_associative(a in pose(), b in pose(), c in pose()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!(close(&l, &r, 1e-12));
        }

        #[test]
        fn sensor_world_round_trip(p in pose(), x in -100.0..100.0f64, y in -100.0..100.0f64) {
            let q = p.world_to_sensor(p.sensor_to_world([x, y]));
            prop_assert!((q[0] - x).abs() < 1e-12 && (q[1] - y).abs() < 1e-12);
        }

        #[test]
        fn wrapped_yaw_in_range(t in -100.0..100.0f64) {
            let w = wrap_angle(t);
            prop_assert!(w > -PI && w <= PI);
        }
    }
}
