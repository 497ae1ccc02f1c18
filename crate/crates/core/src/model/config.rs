use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kv::{KvConfig, KvWriter};

/// Azimuthal antenna gain profile.
#[derive(Debug, Clone, PartialEq)]
pub enum GainProfile {
    /// `cos^2(pi * theta / fov)` sampled at the azimuth bin centers.
    RaisedCosine,
    /// Explicit per-bin table, normalized to a maximum of one on construction.
    Table(Vec<f64>),
}

/// Sensor geometry, bin layout and radar-equation constants.
///
/// Constructed through [`RadarConfigBuilder`] (or [`RadarConfig::from_kv`]),
/// which enforces the invariants; fields are read-only afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarConfig {
    n_range: usize,
    n_azimuth: usize,
    n_doppler: usize,
    range_res: f64,
    azimuth_fov: f64,
    doppler_res: f64,
    gain_table: Vec<f64>,
    profile: GainProfile,
    power_const: f64,
    noise_floor: f64,
    bin_window: usize,
    kernel_sigma_factor: f64,
}

#[derive(Debug, Clone)]
pub struct RadarConfigBuilder {
    pub n_range: usize,
    pub n_azimuth: usize,
    pub n_doppler: usize,
    pub range_res: f64,
    pub azimuth_fov: f64,
    pub doppler_res: f64,
    pub gain: GainProfile,
    pub power_const: f64,
    pub noise_floor: f64,
    pub bin_window: usize,
    pub kernel_sigma_factor: f64,
}

impl Default for RadarConfigBuilder {
    /// Desk-scale indoor sensor: 7.2 m range, 120 degree field of view,
    /// +/-1.24 m/s Doppler span.
    fn default() -> Self {
        Self {
            n_range: 48,
            n_azimuth: 32,
            n_doppler: 32,
            range_res: 0.15,
            azimuth_fov: 120f64.to_radians(),
            doppler_res: 0.08,
            gain: GainProfile::RaisedCosine,
            power_const: 1.0,
            noise_floor: 2e-4,
            bin_window: 10,
            kernel_sigma_factor: 3.0,
        }
    }
}

impl RadarConfigBuilder {
    pub fn build(self) -> Result<RadarConfig> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_range < 2 || self.n_azimuth < 2 || self.n_doppler < 2 {
            return bad(format!(
                "bin counts must be >= 2 (range {}, azimuth {}, doppler {})",
                self.n_range, self.n_azimuth, self.n_doppler
            ));
        }
        for (name, v) in [("range_res", self.range_res), ("doppler_res", self.doppler_res)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.azimuth_fov > 0.0 && self.azimuth_fov <= PI) {
            return bad(format!("azimuth_fov must be in (0, pi], got {}", self.azimuth_fov));
        }
        if !(self.power_const > 0.0 && self.power_const.is_finite()) {
            return bad(format!("power_const must be positive, got {}", self.power_const));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return bad(format!("noise_floor must be nonnegative, got {}", self.noise_floor));
        }
        if self.bin_window == 0 {
            return bad("bin_window must be >= 1".into());
        }
        if !(self.kernel_sigma_factor > 0.0 && self.kernel_sigma_factor.is_finite()) {
            return bad(format!("kernel_sigma_factor must be positive, got {}", self.kernel_sigma_factor));
        }

        let gain_table = match &self.gain {
            GainProfile::RaisedCosine => {
                let half = self.azimuth_fov / 2.0;
                (0..self.n_azimuth)
                    .map(|a| {
                        let theta = azimuth_center(a, self.n_azimuth, self.azimuth_fov);
                        (PI * theta / (2.0 * half)).cos().powi(2)
                    })
                    .collect::<Vec<_>>()
            }
            GainProfile::Table(t) => {
                if t.len() != self.n_azimuth {
                    return bad(format!("gain table has {} entries, expected {}", t.len(), self.n_azimuth));
                }
                if t.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
                    return bad("gain table entries must be finite and nonnegative".into());
                }
                let max = t.iter().cloned().fold(0.0, f64::max);
                if max <= 0.0 {
                    return bad("gain table must have a positive entry".into());
                }
                t.iter().map(|g| g / max).collect()
            }
        };
        // A raised cosine sampled on an even grid misses its peak; renormalize.
        let max = gain_table.iter().cloned().fold(0.0, f64::max);
        let gain_table = gain_table.into_iter().map(|g| g / max).collect();

        Ok(RadarConfig {
            n_range: self.n_range,
            n_azimuth: self.n_azimuth,
            n_doppler: self.n_doppler,
            range_res: self.range_res,
            azimuth_fov: self.azimuth_fov,
            doppler_res: self.doppler_res,
            gain_table,
            profile: self.gain,
            power_const: self.power_const,
            noise_floor: self.noise_floor,
            bin_window: self.bin_window,
            kernel_sigma_factor: self.kernel_sigma_factor,
        })
    }
}

fn azimuth_center(a: usize, n: usize, fov: f64) -> f64 {
    -fov / 2.0 + fov * a as f64 / (n - 1) as f64
}

impl Default for RadarConfig {
    fn default() -> Self {
        RadarConfigBuilder::default().build().expect("default radar config is valid")
    }
}

impl RadarConfig {
    pub fn builder() -> RadarConfigBuilder {
        RadarConfigBuilder::default()
    }

    /// Back to a builder, for deriving variants of an existing config.
    pub fn to_builder(&self) -> RadarConfigBuilder {
        RadarConfigBuilder {
            n_range: self.n_range,
            n_azimuth: self.n_azimuth,
            n_doppler: self.n_doppler,
            range_res: self.range_res,
            azimuth_fov: self.azimuth_fov,
            doppler_res: self.doppler_res,
            gain: self.profile.clone(),
            power_const: self.power_const,
            noise_floor: self.noise_floor,
            bin_window: self.bin_window,
            kernel_sigma_factor: self.kernel_sigma_factor,
        }
    }

    pub fn n_range(&self) -> usize {
        self.n_range
    }
    pub fn n_azimuth(&self) -> usize {
        self.n_azimuth
    }
    pub fn n_doppler(&self) -> usize {
        self.n_doppler
    }
    pub fn range_res(&self) -> f64 {
        self.range_res
    }
    pub fn azimuth_fov(&self) -> f64 {
        self.azimuth_fov
    }
    pub fn doppler_res(&self) -> f64 {
        self.doppler_res
    }
    pub fn gain_table(&self) -> &[f64] {
        &self.gain_table
    }
    pub fn power_const(&self) -> f64 {
        self.power_const
    }
    pub fn noise_floor(&self) -> f64 {
        self.noise_floor
    }
    pub fn bin_window(&self) -> usize {
        self.bin_window
    }
    pub fn kernel_sigma_factor(&self) -> f64 {
        self.kernel_sigma_factor
    }

    /// Soft-binning kernel bandwidth: `kernel_sigma_factor * doppler_res`.
    pub fn kernel_sigma(&self) -> f64 {
        self.kernel_sigma_factor * self.doppler_res
    }

    /// Spacing between azimuth bin centers.
    pub fn azimuth_step(&self) -> f64 {
        self.azimuth_fov / (self.n_azimuth - 1) as f64
    }

    /// Far edge of the last range bin.
    pub fn max_range(&self) -> f64 {
        self.n_range as f64 * self.range_res
    }

    pub fn grid(&self) -> PolarGrid {
        grid_from_config(self)
    }

    /// Reads `radar.*` keys on top of the defaults.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut b = RadarConfigBuilder::default();
        kv.set("radar.n_range", &mut b.n_range)?;
        kv.set("radar.n_azimuth", &mut b.n_azimuth)?;
        kv.set("radar.n_doppler", &mut b.n_doppler)?;
        kv.set("radar.range_res", &mut b.range_res)?;
        if let Some(deg) = kv.get::<f64>("radar.azimuth_fov_deg")? {
            b.azimuth_fov = deg.to_radians();
        }
        kv.set("radar.azimuth_fov", &mut b.azimuth_fov)?;
        kv.set("radar.doppler_res", &mut b.doppler_res)?;
        kv.set("radar.power_const", &mut b.power_const)?;
        kv.set("radar.noise_floor", &mut b.noise_floor)?;
        kv.set("radar.bin_window", &mut b.bin_window)?;
        kv.set("radar.kernel_sigma_factor", &mut b.kernel_sigma_factor)?;
        if let Some(raw) = kv.raw("radar.gain_table") {
            let line = kv.line_of("radar.gain_table").unwrap_or(0);
            b.gain = if raw == "raised-cosine" {
                GainProfile::RaisedCosine
            } else {
                let vals: std::result::Result<Vec<f64>, _> =
                    raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
                GainProfile::Table(vals.map_err(|e| {
                    Error::parse(kv.source(), line, format!("bad gain table: {e}"))
                })?)
            };
        }
        b.build()
    }

    pub fn write_kv(&self, w: &mut KvWriter) {
        w.put("radar.n_range", self.n_range)
            .put("radar.n_azimuth", self.n_azimuth)
            .put("radar.n_doppler", self.n_doppler)
            .put("radar.range_res", self.range_res)
            .put("radar.azimuth_fov", self.azimuth_fov)
            .put("radar.doppler_res", self.doppler_res)
            .put("radar.power_const", self.power_const)
            .put("radar.noise_floor", self.noise_floor)
            .put("radar.bin_window", self.bin_window)
            .put("radar.kernel_sigma_factor", self.kernel_sigma_factor);
        match &self.profile {
            GainProfile::RaisedCosine => w.put("radar.gain_table", "raised-cosine"),
            GainProfile::Table(_) => {
                let s: Vec<String> = self.gain_table.iter().map(|g| g.to_string()).collect();
                w.put("radar.gain_table", s.join(","))
            }
        };
    }
}

/// Bin-center coordinates of the polar measurement grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarGrid {
    pub range_centers: Vec<f64>,
    pub azimuth_centers: Vec<f64>,
    pub doppler_centers: Vec<f64>,
}

pub fn grid_from_config(cfg: &RadarConfig) -> PolarGrid {
    let range_centers = (0..cfg.n_range).map(|n| (n as f64 + 0.5) * cfg.range_res).collect();
    let azimuth_centers =
        (0..cfg.n_azimuth).map(|a| azimuth_center(a, cfg.n_azimuth, cfg.azimuth_fov)).collect();
    let mid = (cfg.n_doppler - 1) as f64 / 2.0;
    let doppler_centers = (0..cfg.n_doppler).map(|d| (d as f64 - mid) * cfg.doppler_res).collect();
    PolarGrid { range_centers, azimuth_centers, doppler_centers }
}

/// Radar equation with all constant factors folded into `power_const`:
/// `P = C * sigma / R^4`.
pub fn received_power(sigma: f64, range: f64, cfg: &RadarConfig) -> Result<f64> {
    if !(range > 0.0) {
        return Err(Error::Domain(format!("range must be positive, got {range}")));
    }
    Ok(cfg.power_const * sigma / range.powi(4))
}

/// Inverts the radar equation for the cross-section producing `power`.
pub fn cross_section_for_power(power: f64, range: f64, cfg: &RadarConfig) -> f64 {
    power * range.powi(4) / cfg.power_const
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg_with(f: impl FnOnce(&mut RadarConfigBuilder)) -> RadarConfig {
        let mut b = RadarConfig::builder();
        f(&mut b);
        b.build().unwrap()
    }

    #[test]
    fn grid_examples() {
        let cfg = cfg_with(|b| {
            b.n_range = 4;
            b.range_res = 1.0;
            b.n_doppler = 5;
            b.doppler_res = 0.5;
            b.n_azimuth = 3;
            b.azimuth_fov = PI / 2.0;
        });
        let g = cfg.grid();
        assert_eq!(g.range_centers, vec![0.5, 1.5, 2.5, 3.5]);
        assert_eq!(g.doppler_centers, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let expect = [-PI / 4.0, 0.0, PI / 4.0];
        for (a, e) in g.azimuth_centers.iter().zip(expect) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_invariants_default() {
        let cfg = RadarConfig::default();
        let g = cfg.grid();
        for v in [&g.range_centers, &g.azimuth_centers, &g.doppler_centers] {
            assert!(v.windows(2).all(|w| w[1] > w[0]));
        }
        let n = g.doppler_centers.len();
        for d in 0..n {
            assert!((g.doppler_centers[d] + g.doppler_centers[n - 1 - d]).abs() < 1e-12);
        }
        assert_eq!(g.range_centers.len(), cfg.n_range());
        assert_eq!(g.azimuth_centers.len(), cfg.n_azimuth());
        assert_eq!(g.doppler_centers.len(), cfg.n_doppler());
    }

    #[test]
    fn gain_table_normalized() {
        let cfg = RadarConfig::default();
        let max = cfg.gain_table().iter().cloned().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-15);
        assert!(cfg.gain_table().iter().all(|g| *g >= 0.0));
        let odd = cfg_with(|b| b.n_azimuth = 5);
        assert_eq!(odd.gain_table()[2], 1.0);
        assert!(odd.gain_table()[0] < 1e-15);

        let t = cfg_with(|b| {
            b.n_azimuth = 3;
            b.gain = GainProfile::Table(vec![1.0, 4.0, 2.0]);
        });
        assert_eq!(t.gain_table(), &[0.25, 1.0, 0.5]);
    }

    #[test]
    fn rejects_invalid() {
        assert!(cfg_with_res(|b| b.n_range = 1).is_err());
        assert!(cfg_with_res(|b| b.range_res = 0.0).is_err());
        assert!(cfg_with_res(|b| b.azimuth_fov = 4.0).is_err());
        assert!(cfg_with_res(|b| b.gain = GainProfile::Table(vec![1.0; 3])).is_err());
        assert!(cfg_with_res(|b| {
            b.n_azimuth = 2;
            b.gain = GainProfile::Table(vec![1.0, -1.0]);
        })
        .is_err());
    }

    fn cfg_with_res(f: impl FnOnce(&mut RadarConfigBuilder)) -> Result<RadarConfig> {
        let mut b = RadarConfig::builder();
        f(&mut b);
        b.build()
    }

    #[test]
    fn received_power_examples() {
        let cfg = RadarConfig::default();
        assert_eq!(received_power(1.0, 1.0, &cfg).unwrap(), 1.0);
        assert_eq!(received_power(1.0, 2.0, &cfg).unwrap(), 1.0 / 16.0);
        assert_eq!(received_power(0.0, 5.0, &cfg).unwrap(), 0.0);
        assert!(matches!(received_power(1.0, 0.0, &cfg), Err(Error::Domain(_))));
        assert!(received_power(1.0, -1.0, &cfg).is_err());
    }

    #[test]
    fn kv_round_trip() {
        let cfg = cfg_with(|b| {
            b.n_azimuth = 4;
            b.gain = GainProfile::Table(vec![0.5, 1.0, 1.0, 0.5]);
        });
        let mut w = KvWriter::new();
        cfg.write_kv(&mut w);
        let kv = KvConfig::parse_str(&w.finish(), "r.cfg").unwrap();
        let back = RadarConfig::from_kv(&kv).unwrap();
        kv.finish().unwrap();
        assert_eq!(back, cfg);

        let kv = KvConfig::parse_str("radar.gain_table = raised-cosine\nradar.azimuth_fov_deg = 90\n", "r").unwrap();
        let c = RadarConfig::from_kv(&kv).unwrap();
        assert!((c.azimuth_fov() - PI / 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn power_monotone_and_quartic(sigma in 0.01..10.0f64, r in 0.1..50.0f64, k in 0.1..10.0f64) {
            let cfg = RadarConfig::default();
            let p = received_power(sigma, r, &cfg).unwrap();
            prop_assert!(received_power(sigma * 1.5, r, &cfg).unwrap() > p);
            prop_assert!(received_power(sigma, r * 1.5, &cfg).unwrap() < p);
            let scaled = received_power(sigma, k * r, &cfg).unwrap();
            prop_assert!((scaled - p / k.powi(4)).abs() <= 1e-12 * p / k.powi(4));
        }
    }
}
