use crate::error::{Error, Result};
use crate::image::{DopplerMap, Image, RaImage, RdImage};
use crate::model::RadarConfig;

use super::RenderGrid;

/// First index of the `b` Doppler bins nearest to velocity `dop`.
///
/// The bins form a contiguous run `[lo, lo + b)` clamped to the grid; every
/// excluded bin lies at least `b/2` bin widths from `dop`.
pub fn doppler_window(dop: f64, cfg: &RadarConfig) -> (usize, usize) {
    let n = cfg.n_doppler();
    let b = cfg.bin_window().min(n);
    let v0 = -((n - 1) as f64) / 2.0 * cfg.doppler_res();
    let u = (dop - v0) / cfg.doppler_res();
    let lo = (u - (b - 1) as f64 / 2.0 + 0.5).floor();
    let lo = if lo.is_finite() { lo.clamp(0.0, (n - b) as f64) as usize } else { 0 };
    (lo, lo + b)
}

/// Per-column kernel rows, reused while the Doppler value of a column repeats.
struct KernelCache {
    dop: Vec<f64>,
    lo: Vec<usize>,
    hi: Vec<usize>,
    k: Vec<Vec<f64>>,
}

impl KernelCache {
    fn new(cols: usize, b: usize) -> Self {
        Self { dop: vec![f64::NAN; cols], lo: vec![0; cols], hi: vec![0; cols], k: vec![vec![0.0; b]; cols] }
    }

    fn get(&mut self, a: usize, dop: f64, grid: &RenderGrid, cfg: &RadarConfig) -> (usize, &[f64]) {
        if self.dop[a] != dop {
            let (lo, hi) = doppler_window(dop, cfg);
            let inv2s2 = 1.0 / (2.0 * cfg.kernel_sigma().powi(2));
            let row = &mut self.k[a];
            for (j, d) in (lo..hi).enumerate() {
                let u = dop - grid.doppler[d];
                row[j] = (-u * u * inv2s2).exp();
            }
            self.dop[a] = dop;
            self.lo[a] = lo;
            self.hi[a] = hi;
        }
        (self.lo[a], &self.k[a][..self.hi[a] - self.lo[a]])
    }
}

fn check_shapes(ra: &RaImage, dop: &DopplerMap, cfg: &RadarConfig) -> Result<()> {
    let want = (cfg.n_range(), cfg.n_azimuth());
    if ra.shape() != want || dop.shape() != want {
        return Err(Error::Shape(format!(
            "RA {:?} / Doppler {:?}, expected {want:?}",
            ra.shape(),
            dop.shape()
        )));
    }
    Ok(())
}

/// `RD[r, d] = sum_a gain(a) RA[r, a] exp(-(dop[r, a] - v_d)^2 / (2 sigma_k^2))`
/// over the `b` Doppler bins nearest each `dop[r, a]`.
pub(crate) fn render_rd(grid: &RenderGrid, ra: &RaImage, dop: &DopplerMap, cfg: &RadarConfig) -> Result<RdImage> {
    check_shapes(ra, dop, cfg)?;
    let gain = cfg.gain_table();
    let mut out = Image::zeros(cfg.n_range(), cfg.n_doppler());
    let mut cache = KernelCache::new(cfg.n_azimuth(), cfg.bin_window().min(cfg.n_doppler()));
    for r in 0..cfg.n_range() {
        for a in 0..cfg.n_azimuth() {
            let w = gain[a] * ra.get(r, a);
            if w == 0.0 {
                continue;
            }
            let (lo, k) = cache.get(a, dop.get(r, a), grid, cfg);
            for (j, kv) in k.iter().enumerate() {
                out.add_at(r, lo + j, w * kv);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`render_rd`]: returns dL/dRA and dL/d(doppler map).
pub(crate) fn backward_rd(
    grid: &RenderGrid,
    ra: &RaImage,
    dop: &DopplerMap,
    d_rd: &RdImage,
    cfg: &RadarConfig,
) -> (RaImage, DopplerMap) {
    let gain = cfg.gain_table();
    let inv_s2 = 1.0 / cfg.kernel_sigma().powi(2);
    let mut d_ra = Image::zeros(cfg.n_range(), cfg.n_azimuth());
    let mut d_dop = Image::zeros(cfg.n_range(), cfg.n_azimuth());
    let mut cache = KernelCache::new(cfg.n_azimuth(), cfg.bin_window().min(cfg.n_doppler()));
    for r in 0..cfg.n_range() {
        let up = d_rd.row(r);
        for a in 0..cfg.n_azimuth() {
            if gain[a] == 0.0 {
                continue;
            }
            let dv = dop.get(r, a);
            let (lo, k) = cache.get(a, dv, grid, cfg);
            let (mut s_k, mut s_dk) = (0.0, 0.0);
            for (j, kv) in k.iter().enumerate() {
                let g = up[lo + j];
                s_k += g * kv;
                s_dk += g * kv * -(dv - grid.doppler[lo + j]) * inv_s2;
            }
            d_ra.set(r, a, gain[a] * s_k);
            d_dop.set(r, a, gain[a] * ra.get(r, a) * s_dk);
        }
    }
    (d_ra, d_dop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RadarConfigBuilder, Vel2};
    use crate::render::Renderer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// All-pairs soft binning with no window truncation.
    fn brute_force_rd(ra: &Image, dop: &Image, cfg: &RadarConfig) -> Image {
        let g = cfg.grid();
        let s = cfg.kernel_sigma();
        Image::from_fn(cfg.n_range(), cfg.n_doppler(), |r, d| {
            (0..cfg.n_azimuth())
                .map(|a| {
                    let u = dop.get(r, a) - g.doppler_centers[d];
                    cfg.gain_table()[a] * ra.get(r, a) * (-u * u / (2.0 * s * s)).exp()
                })
                .sum()
        })
    }

    #[test]
    fn window_selects_nearest_bins() {
        let cfg = RadarConfigBuilder { n_doppler: 9, doppler_res: 1.0, bin_window: 3, ..Default::default() }
            .build()
            .unwrap();
        // centers -4..4
        assert_eq!(doppler_window(0.0, &cfg), (3, 6));
        assert_eq!(doppler_window(0.4, &cfg), (3, 6));
        assert_eq!(doppler_window(0.6, &cfg), (4, 7));
        assert_eq!(doppler_window(-10.0, &cfg), (0, 3));
        assert_eq!(doppler_window(10.0, &cfg), (6, 9));
        let even = RadarConfigBuilder { n_doppler: 9, doppler_res: 1.0, bin_window: 2, ..Default::default() }
            .build()
            .unwrap();
        assert_eq!(doppler_window(0.3, &even), (4, 6));
        assert_eq!(doppler_window(-0.3, &even), (3, 5));
    }

    #[test]
    fn zero_ra_gives_zero_rd() {
        let cfg = RadarConfig::default();
        let r = Renderer::new(&cfg);
        let ra = Image::zeros(cfg.n_range(), cfg.n_azimuth());
        let rd = r.render_rd(&ra, &r.render_doppler_map(&Vel2::new(1.0, 0.3))).unwrap();
        assert!(rd.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_bin_at_doppler_center() {
        let cfg = RadarConfigBuilder { n_azimuth: 9, n_doppler: 11, doppler_res: 0.25, ..Default::default() }
            .build()
            .unwrap();
        let grid = cfg.grid();
        let (r0, a0, d0) = (5, 3, 8);
        let mut ra = Image::zeros(cfg.n_range(), cfg.n_azimuth());
        ra.set(r0, a0, 2.5);
        let dop = Image::filled(cfg.n_range(), cfg.n_azimuth(), grid.doppler_centers[d0]);
        let rd = render_rd(&RenderGrid::new(&cfg), &ra, &dop, &cfg).unwrap();
        assert!((rd.get(r0, d0) - cfg.gain_table()[a0] * 2.5).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force_with_covering_window() {
        let cfg = RadarConfigBuilder {
            n_range: 8,
            n_azimuth: 6,
            n_doppler: 7,
            doppler_res: 0.3,
            bin_window: 7,
            ..Default::default()
        }
        .build()
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ra = Image::from_fn(8, 6, |_, _| rng.gen_range(0.0..2.0));
        let dop = Image::from_fn(8, 6, |_, _| rng.gen_range(-1.2..1.2));
        let rd = render_rd(&RenderGrid::new(&cfg), &ra, &dop, &cfg).unwrap();
        assert!(rd.max_abs_diff(&brute_force_rd(&ra, &dop, &cfg)) < 1e-6);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let cfg = RadarConfigBuilder {
            n_range: 5,
            n_azimuth: 6,
            n_doppler: 9,
            doppler_res: 0.3,
            bin_window: 9,
            ..Default::default()
        }
        .build()
        .unwrap();
        let grid = RenderGrid::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ra = Image::from_fn(5, 6, |_, _| rng.gen_range(0.0..2.0));
        let dop = Image::from_fn(5, 6, |_, _| rng.gen_range(-1.0..1.0));
        let up = Image::from_fn(5, 9, |_, _| rng.gen_range(-1.0..1.0));
        let f = |ra: &Image, dop: &Image| -> f64 {
            let rd = render_rd(&grid, ra, dop, &cfg).unwrap();
            rd.as_slice().iter().zip(up.as_slice()).map(|(a, b)| a * b).sum()
        };
        let (d_ra, d_dop) = backward_rd(&grid, &ra, &dop, &up, &cfg);
        let h = 1e-6;
        for i in 0..30 {
            let mut p = ra.clone();
            p.as_mut_slice()[i] += h;
            let mut m = ra.clone();
            m.as_mut_slice()[i] -= h;
            assert!(((f(&p, &dop) - f(&m, &dop)) / (2.0 * h) - d_ra.as_slice()[i]).abs() < 1e-7);
            let mut p = dop.clone();
            p.as_mut_slice()[i] += h;
            let mut m = dop.clone();
            m.as_mut_slice()[i] -= h;
            assert!(((f(&ra, &p) - f(&ra, &m)) / (2.0 * h) - d_dop.as_slice()[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_wrong_shape() {
        let cfg = RadarConfig::default();
        let bad = Image::zeros(3, 3);
        assert!(render_rd(&RenderGrid::new(&cfg), &bad, &bad, &cfg).is_err());
    }
}
