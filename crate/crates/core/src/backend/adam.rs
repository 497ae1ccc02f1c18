use crate::error::{Error, Result};
use crate::kv::{KvConfig, KvWriter};

/// Step sizes, iteration budgets and Adam moments for the three stages.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub lr_pose_xy: f64,
    pub lr_pose_yaw: f64,
    pub lr_mean: f64,
    pub lr_orient: f64,
    pub lr_scale: f64,
    pub lr_power: f64,
    pub iters_pose: usize,
    pub iters_map: usize,
    pub iters_ba: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr_pose_xy: 1e-2,
            lr_pose_yaw: 5e-3,
            lr_mean: 1e-2,
            lr_orient: 1e-3,
            lr_scale: 5e-3,
            lr_power: 5e-2,
            iters_pose: 50,
            iters_map: 100,
            iters_ba: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let lrs = [self.lr_pose_xy, self.lr_pose_yaw, self.lr_mean, self.lr_orient, self.lr_scale, self.lr_power];
        if lrs.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut o = Self::default();
        kv.set("opt.lr_pose_xy", &mut o.lr_pose_xy)?;
        kv.set("opt.lr_pose_yaw", &mut o.lr_pose_yaw)?;
        kv.set("opt.lr_mean", &mut o.lr_mean)?;
        kv.set("opt.lr_orient", &mut o.lr_orient)?;
        kv.set("opt.lr_scale", &mut o.lr_scale)?;
        kv.set("opt.lr_power", &mut o.lr_power)?;
        kv.set("opt.iters_pose", &mut o.iters_pose)?;
        kv.set("opt.iters_map", &mut o.iters_map)?;
        kv.set("opt.iters_ba", &mut o.iters_ba)?;
        kv.set("opt.adam_beta1", &mut o.adam_beta1)?;
        kv.set("opt.adam_beta2", &mut o.adam_beta2)?;
        kv.set("opt.adam_eps", &mut o.adam_eps)?;
        o.validate()?;
        Ok(o)
    }

    pub fn write_kv(&self, w: &mut KvWriter) {
        w.put("opt.lr_pose_xy", self.lr_pose_xy)
            .put("opt.lr_pose_yaw", self.lr_pose_yaw)
            .put("opt.lr_mean", self.lr_mean)
            .put("opt.lr_orient", self.lr_orient)
            .put("opt.lr_scale", self.lr_scale)
            .put("opt.lr_power", self.lr_power)
            .put("opt.iters_pose", self.iters_pose)
            .put("opt.iters_map", self.iters_map)
            .put("opt.iters_ba", self.iters_ba)
            .put("opt.adam_beta1", self.adam_beta1)
            .put("opt.adam_beta2", self.adam_beta2)
            .put("opt.adam_eps", self.adam_eps);
    }
}

/// Adam over a flat parameter vector with a per-entry step size.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, cfg: &OptimizerConfig) -> Self {
        Self { beta1: cfg.adam_beta1, beta2: cfg.adam_beta2, eps: cfg.adam_eps, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, x: &mut [f64], grad: &[f64], lr: &[f64]) {
        assert_eq!(x.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            x[i] -= lr[i] * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_has_unit_magnitude() {
        let cfg = OptimizerConfig::default();
        let mut a = Adam::new(2, &cfg);
        let mut x = [1.0, -1.0];
        a.step(&mut x, &[3.0, -0.01], &[0.1, 0.1]);
        assert!((x[0] - 0.9).abs() < 1e-6 && (x[1] + 0.9).abs() < 1e-5);
    }

    #[test]
    fn zero_gradient_does_not_move() {
        let mut a = Adam::new(1, &OptimizerConfig::default());
        let mut x = [2.0];
        for _ in 0..10 {
            a.step(&mut x, &[0.0], &[1.0]);
        }
        assert_eq!(x, [2.0]);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut a = Adam::new(2, &OptimizerConfig::default());
        let mut x = [3.0, -2.0];
        for _ in 0..2000 {
            let g = [2.0 * (x[0] - 1.0), 8.0 * (x[1] + 0.5)];
            a.step(&mut x, &g, &[0.05, 0.05]);
        }
        assert!((x[0] - 1.0).abs() < 1e-2 && (x[1] + 0.5).abs() < 1e-2);
    }

    #[test]
    fn kv_round_trip() {
        let o = OptimizerConfig { iters_ba: 7, lr_mean: 0.3, ..Default::default() };
        let mut w = KvWriter::new();
        o.write_kv(&mut w);
        let kv = KvConfig::parse_str(&w.finish(), "opt").unwrap();
        assert_eq!(OptimizerConfig::from_kv(&kv).unwrap(), o);
        kv.finish().unwrap();
        let bad = KvConfig::parse_str("opt.adam_beta1 = 1.5", "bad").unwrap();
        assert!(OptimizerConfig::from_kv(&bad).is_err());
    }
}
