use crate::error::{Error, Result};
use crate::loss::Target;
use crate::model::{wrap_angle, Pose2, Vel2};
use crate::render::{ego_velocity_from_poses, View};

/// A frame retained and optimized by the backend.
#[derive(Debug, Clone)]
pub struct Keyframe {
    pub id: usize,
    pub frame_index: usize,
    pub timestamp: f64,
    pub pose: Pose2,
    /// Body velocity derived from this pose and the predecessor's; zero for
    /// the first keyframe.
    pub velocity: Vel2,
    pub ra: Target,
    pub rd: Target,
}

/// Keyframe subset used by bundle adjustment (or any windowed stage).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowSpec {
    /// All keyframes within `r` meters of the newest.
    Radius(f64),
    /// The newest `n` keyframes; `usize::MAX` keeps everything.
    Sliding(usize),
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WindowSpec::Radius(r) if !(r > 0.0) => Err(Error::Config(format!("window radius must be positive, got {r}"))),
            WindowSpec::Sliding(0) => Err(Error::Config("sliding window needs at least one keyframe".into())),
            _ => Ok(()),
        }
    }

    /// Short label such as `radius-10` or `sliding-inf`.
    pub fn label(&self) -> String {
        match *self {
            WindowSpec::Radius(r) => format!("radius-{r}"),
            WindowSpec::Sliding(usize::MAX) => "sliding-inf".into(),
            WindowSpec::Sliding(n) => format!("sliding-{n}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("window must be `radius-<m>` or `sliding-<n|inf>`, got `{s}`"));
        let (kind, val) = s.split_once('-').ok_or_else(bad)?;
        let w = match kind {
            "radius" => WindowSpec::Radius(val.parse().map_err(|_| bad())?),
            "sliding" if val == "inf" => WindowSpec::Sliding(usize::MAX),
            "sliding" => WindowSpec::Sliding(val.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        w.validate()?;
        Ok(w)
    }
}

/// True when `current` has moved at least `tau_t` meters or turned at least
/// `tau_r` radians away from the last keyframe.
pub fn should_create_keyframe(last_kf: &Pose2, current: &Pose2, tau_t: f64, tau_r: f64) -> bool {
    last_kf.distance(current) >= tau_t || wrap_angle(current.yaw - last_kf.yaw).abs() >= tau_r
}

/// Indices (ascending) of the keyframes selected around `newest`.
pub fn select_window(store: &[Keyframe], newest: usize, spec: &WindowSpec) -> Vec<usize> {
    match *spec {
        WindowSpec::Radius(r) => {
            let c = store[newest].pose;
            (0..store.len()).filter(|&i| i == newest || store[i].pose.distance(&c) <= r).collect()
        }
        WindowSpec::Sliding(n) => {
            let end = newest + 1;
            (end.saturating_sub(n)..end).collect()
        }
    }
}

/// Ordered keyframes of one session.
#[derive(Debug, Clone, Default)]
pub struct KeyframeStore {
    pub keyframes: Vec<Keyframe>,
}

impl KeyframeStore {
    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn last(&self) -> Option<&Keyframe> {
        self.keyframes.last()
    }

    pub fn poses(&self) -> Vec<Pose2> {
        self.keyframes.iter().map(|k| k.pose).collect()
    }

    pub fn push(&mut self, mut kf: Keyframe) -> Result<usize> {
        if let Some(prev) = self.keyframes.last() {
            if !(kf.timestamp > prev.timestamp) {
                return Err(Error::Domain(format!(
                    "keyframe timestamps must increase ({} after {})",
                    kf.timestamp, prev.timestamp
                )));
            }
        }
        kf.id = self.keyframes.len();
        self.keyframes.push(kf);
        self.refresh_velocity(self.keyframes.len() - 1)?;
        Ok(self.keyframes.len() - 1)
    }

    fn refresh_velocity(&mut self, i: usize) -> Result<()> {
        self.keyframes[i].velocity = if i == 0 {
            Vel2::zero()
        } else {
            let (a, b) = (&self.keyframes[i], &self.keyframes[i - 1]);
            ego_velocity_from_poses(&a.pose, &b.pose, a.timestamp - b.timestamp)?
        };
        Ok(())
    }

    /// Writes new poses for all keyframes and re-derives every velocity.
    pub fn set_poses(&mut self, poses: &[Pose2]) -> Result<()> {
        if poses.len() != self.keyframes.len() {
            return Err(Error::Shape(format!("{} poses for {} keyframes", poses.len(), self.keyframes.len())));
        }
        for (k, p) in self.keyframes.iter_mut().zip(poses) {
            k.pose = *p;
        }
        for i in 0..self.keyframes.len() {
            self.refresh_velocity(i)?;
        }
        Ok(())
    }

    /// Loss term of keyframe `i`, indexing poses in store order.
    pub fn view(&self, i: usize) -> View<'_> {
        let k = &self.keyframes[i];
        let prev = (i > 0).then(|| (i - 1, k.timestamp - self.keyframes[i - 1].timestamp));
        View { pose: i, prev, ra: &k.ra, rd: Some(&k.rd) }
    }
}
