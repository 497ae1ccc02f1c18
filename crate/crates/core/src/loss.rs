//! Image reconstruction losses (L1 + SSIM), the Gaussian size regularizer and
//! the per-stage loss compositions, each with its gradient with respect to the
//! rendered image or scene.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scene::GaussianScene;

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub lambda_ssim: f64,
    pub lambda_scale: f64,
    pub ssim_window: usize,
    pub rd_weight: f64,
    /// Largest scale left untouched by the size regularizer (meters).
    pub s_reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_ssim: 0.2, lambda_scale: 0.1, ssim_window: 11, rd_weight: 1.0, s_reg: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_ssim) {
            return Err(Error::Config(format!("lambda_ssim must be in [0, 1], got {}", self.lambda_ssim)));
        }
        if !(self.lambda_scale >= 0.0) || !(self.rd_weight >= 0.0) || !(self.s_reg > 0.0) {
            return Err(Error::Config("loss weights must be nonnegative and s_reg positive".into()));
        }
        if self.ssim_window % 2 == 0 || self.ssim_window == 0 {
            return Err(Error::Config(format!("ssim_window must be odd, got {}", self.ssim_window)));
        }
        Ok(())
    }
}

/// A measured image together with its loss normalizer.
///
/// Radar power spans several orders of magnitude, so both rendered and
/// measured images are divided by the 99.9th percentile of the measurement
/// before comparison.
#[derive(Debug, Clone)]
pub struct Target {
    image: Image,
    scale: f64,
    prepared: OnceLock<Prepared>,
}

/// Normalized target and its SSIM moments, computed on first use.
#[derive(Debug, Clone)]
struct Prepared {
    window: usize,
    y: Image,
    yc: Image,
    my: Image,
    syy: Image,
}

impl Prepared {
    fn new(image: &Image, scale: f64, window: usize) -> Self {
        let y = image.scaled(1.0 / scale);
        let yc = y.map(|v| v.clamp(0.0, 1.0));
        let (my, syy) = if yc.rows() >= window && yc.cols() >= window {
            let k = ssim_kernel(window);
            (filter_valid(&yc, &k), filter_valid(&mul(&yc, &yc), &k))
        } else {
            (Image::zeros(0, 0), Image::zeros(0, 0))
        };
        Self { window, y, yc, my, syy }
    }
}

impl PartialEq for Target {
    fn eq(&self, other: &Self) -> bool {
        self.image == other.image && self.scale == other.scale
    }
}

impl Target {
    pub fn new(image: Image) -> Self {
        let mut scale = image.percentile(0.999);
        if !(scale > 0.0) {
            scale = image.max();
        }
        if !(scale > 0.0 && scale.is_finite()) {
            scale = 1.0;
        }
        Self::with_scale(image, scale)
    }

    pub fn with_scale(image: Image, scale: f64) -> Self {
        Self { image, scale, prepared: OnceLock::new() }
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn prepared(&self, window: usize) -> std::borrow::Cow<'_, Prepared> {
        let p = self.prepared.get_or_init(|| Prepared::new(&self.image, self.scale, window));
        if p.window == window {
            std::borrow::Cow::Borrowed(p)
        } else {
            std::borrow::Cow::Owned(Prepared::new(&self.image, self.scale, window))
        }
    }
}

/// Mean absolute difference.
pub fn l1(a: &Image, b: &Image) -> Result<f64> {
    a.check_same(b)?;
    let n = a.as_slice().len().max(1) as f64;
    Ok(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}

/// L1 and its gradient with respect to `a`.
pub fn l1_with_grad(a: &Image, b: &Image) -> Result<(f64, Image)> {
    let v = l1(a, b)?;
    let n = a.as_slice().len().max(1) as f64;
    let g = Image::from_vec(
        a.rows(),
        a.cols(),
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| sign(x - y) / n).collect(),
    )?;
    Ok((v, g))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Normalized 1-D Gaussian taps with standard deviation `window / 6`.
pub fn ssim_kernel(window: usize) -> Vec<f64> {
    let sigma = window as f64 / 6.0;
    let mid = (window / 2) as f64;
    let k: Vec<f64> = (0..window).map(|i| (-(i as f64 - mid).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering: output has `(rows-w+1) x (cols-w+1)`.
fn filter_valid(img: &Image, k: &[f64]) -> Image {
    let w = k.len();
    let (rows, cols) = img.shape();
    let (orows, ocols) = (rows + 1 - w, cols + 1 - w);
    let mut tmp = Image::zeros(orows, cols);
    for r in 0..orows {
        for (i, kv) in k.iter().enumerate() {
            let src = img.row(r + i);
            let dst = &mut tmp.as_mut_slice()[r * cols..(r + 1) * cols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    let mut out = Image::zeros(orows, ocols);
    for (src, dst) in tmp.as_slice().chunks_exact(cols).zip(out.as_mut_slice().chunks_exact_mut(ocols)) {
        for (c, d) in dst.iter_mut().enumerate() {
            *d = k.iter().zip(&src[c..c + w]).map(|(kv, s)| kv * s).sum();
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a valid-size map back to full size.
fn filter_valid_adjoint(g: &Image, k: &[f64], rows: usize, cols: usize) -> Image {
    let w = k.len();
    let (orows, ocols) = g.shape();
    debug_assert_eq!((orows + w - 1, ocols + w - 1), (rows, cols));
    let mut tmp = Image::zeros(orows, cols);
    for (src, dst) in g.as_slice().chunks_exact(ocols).zip(tmp.as_mut_slice().chunks_exact_mut(cols)) {
        for (c, &v) in src.iter().enumerate() {
            if v != 0.0 {
                for (d, kv) in dst[c..c + w].iter_mut().zip(k) {
                    *d += kv * v;
                }
            }
        }
    }
    let mut out = Image::zeros(rows, cols);
    for r in 0..orows {
        for (i, kv) in k.iter().enumerate() {
            let src = tmp.row(r);
            let dst = &mut out.as_mut_slice()[(r + i) * cols..(r + i + 1) * cols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

fn mul(a: &Image, b: &Image) -> Image {
    Image::from_vec(a.rows(), a.cols(), a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).collect())
        .expect("same shape")
}

fn check_ssim_shapes(a: &Image, b: &Image, window: usize) -> Result<()> {
    a.check_same(b)?;
    if a.rows() < window || a.cols() < window {
        return Err(Error::Shape(format!("image {:?} smaller than ssim window {window}", a.shape())));
    }
    Ok(())
}

/// Mean structural similarity over all fully contained Gaussian windows.
pub fn ssim(a: &Image, b: &Image, window: usize) -> Result<f64> {
    Ok(ssim_impl(a, b, window, false)?.0)
}

/// SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad(a: &Image, b: &Image, window: usize) -> Result<(f64, Image)> {
    let (v, g) = ssim_impl(a, b, window, true)?;
    Ok((v, g.expect("gradient requested")))
}

fn ssim_impl(x: &Image, y: &Image, window: usize, want_grad: bool) -> Result<(f64, Option<Image>)> {
    check_ssim_shapes(x, y, window)?;
    let k = ssim_kernel(window);
    let my = filter_valid(y, &k);
    let syy = filter_valid(&mul(y, y), &k);
    Ok(ssim_with_moments(x, y, &my, &syy, &k, want_grad))
}

/// SSIM given the target-side moments `my` and `syy`.
fn ssim_with_moments(x: &Image, y: &Image, my: &Image, syy: &Image, k: &[f64], want_grad: bool) -> (f64, Option<Image>) {
    let mx = filter_valid(x, k);
    let sxx = filter_valid(&mul(x, x), k);
    let sxy = filter_valid(&mul(x, y), k);
    let n = mx.as_slice().len();
    let (orows, ocols) = mx.shape();

    let mut total = 0.0;
    let mut g_mu = Image::zeros(orows, ocols);
    let mut g_sxx = Image::zeros(orows, ocols);
    let mut g_sxy = Image::zeros(orows, ocols);
    for i in 0..n {
        let (ux, uy) = (mx.as_slice()[i], my.as_slice()[i]);
        let vx = sxx.as_slice()[i] - ux * ux;
        let vy = syy.as_slice()[i] - uy * uy;
        let cxy = sxy.as_slice()[i] - ux * uy;
        let n1 = 2.0 * ux * uy + SSIM_C1;
        let n2 = 2.0 * cxy + SSIM_C2;
        let d1 = ux * ux + uy * uy + SSIM_C1;
        let d2 = vx + vy + SSIM_C2;
        let s = n1 * n2 / (d1 * d2);
        total += s;
        if want_grad {
            // partials in (mu_x, var_x, cov_xy), then chained into the raw moments
            let ds_dmu = 2.0 * uy * n2 / (d1 * d2) - s * 2.0 * ux / d1;
            let ds_dvar = -s / d2;
            let ds_dcov = 2.0 * n1 / (d1 * d2);
            g_mu.as_mut_slice()[i] = (ds_dmu - 2.0 * ds_dvar * ux - ds_dcov * uy) / n as f64;
            g_sxx.as_mut_slice()[i] = ds_dvar / n as f64;
            g_sxy.as_mut_slice()[i] = ds_dcov / n as f64;
        }
    }
    let value = total / n as f64;
    if !want_grad {
        return (value, None);
    }
    let (rows, cols) = x.shape();
    let a = filter_valid_adjoint(&g_mu, k, rows, cols);
    let b = filter_valid_adjoint(&g_sxx, k, rows, cols);
    let c = filter_valid_adjoint(&g_sxy, k, rows, cols);
    let grad = Image::from_fn(rows, cols, |r, q| a.get(r, q) + 2.0 * x.get(r, q) * b.get(r, q) + y.get(r, q) * c.get(r, q));
    (value, Some(grad))
}

/// `(1 - lambda_ssim) * L1 + lambda_ssim * (1 - SSIM)` on images normalized by
/// the target's scale; SSIM inputs are additionally clamped to [0, 1].
pub fn image_loss(rendered: &Image, target: &Target, w: &LossWeights) -> Result<f64> {
    Ok(image_loss_impl(rendered, target, w, false)?.0)
}

pub fn image_loss_with_grad(rendered: &Image, target: &Target, w: &LossWeights) -> Result<(f64, Image)> {
    let (v, g) = image_loss_impl(rendered, target, w, true)?;
    Ok((v, g.expect("gradient requested")))
}

fn image_loss_impl(rendered: &Image, target: &Target, w: &LossWeights, want_grad: bool) -> Result<(f64, Option<Image>)> {
    rendered.check_same(&target.image)?;
    let inv = 1.0 / target.scale;
    let x = rendered.scaled(inv);
    let t = target.prepared(w.ssim_window);
    let y = &t.y;
    let (l1v, g1) = if want_grad { let (v, g) = l1_with_grad(&x, y)?; (v, Some(g)) } else { (l1(&x, y)?, None) };
    let mut value = (1.0 - w.lambda_ssim) * l1v;
    let mut grad = g1.map(|g| g.scaled((1.0 - w.lambda_ssim) * inv));
    if w.lambda_ssim > 0.0 {
        let xc = x.map(|v| v.clamp(0.0, 1.0));
        check_ssim_shapes(&xc, &t.yc, w.ssim_window)?;
        let k = ssim_kernel(w.ssim_window);
        let (s, gs) = ssim_with_moments(&xc, &t.yc, &t.my, &t.syy, &k, want_grad);
        value += w.lambda_ssim * (1.0 - s);
        if let (Some(g), Some(gs)) = (grad.as_mut(), gs) {
            for ((acc, gs), xv) in g.as_mut_slice().iter_mut().zip(gs.as_slice()).zip(x.as_slice()) {
                if *xv >= 0.0 && *xv < 1.0 {
                    *acc -= w.lambda_ssim * gs * inv;
                }
            }
        }
    }
    Ok((value, grad))
}

/// Mean over Gaussians of `max(0, max(S) - s_reg)^2`.
pub fn scale_reg(scene: &GaussianScene, s_reg: f64) -> f64 {
    if scene.is_empty() {
        return 0.0;
    }
    scene
        .gaussians
        .iter()
        .map(|g| (g.scales[0].max(g.scales[1]) - s_reg).max(0.0).powi(2))
        .sum::<f64>()
        / scene.len() as f64
}

/// Gradient of [`scale_reg`] with respect to each Gaussian's two scales.
pub fn scale_reg_grad(scene: &GaussianScene, s_reg: f64) -> Vec<[f64; 2]> {
    let n = scene.len().max(1) as f64;
    scene
        .gaussians
        .iter()
        .map(|g| {
            let (i, s) = if g.scales[0] >= g.scales[1] { (0, g.scales[0]) } else { (1, g.scales[1]) };
            let mut d = [0.0; 2];
            if s > s_reg {
                d[i] = 2.0 * (s - s_reg) / n;
            }
            d
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Pose,
    Map,
    Ba,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Pose => "pose",
            Stage::Map => "map",
            Stage::Ba => "ba",
        }
    }

    pub fn uses_rd(&self) -> bool {
        matches!(self, Stage::Pose | Stage::Ba)
    }

    pub fn uses_scale_reg(&self) -> bool {
        matches!(self, Stage::Map | Stage::Ba)
    }
}

/// Rendered images for one keyframe; `rd` is absent when no velocity exists.
pub struct Rendered<'a> {
    pub ra: &'a Image,
    pub rd: Option<&'a Image>,
}

pub struct Measured<'a> {
    pub ra: &'a Target,
    pub rd: Option<&'a Target>,
}

/// Stage objective over a keyframe window (forward only).
///
/// pose: RA + rd_weight * RD; map: RA + lambda_scale * scale_reg;
/// ba: RA + rd_weight * RD + lambda_scale * scale_reg.
pub fn stage_loss(
    stage: Stage,
    renders: &[Rendered<'_>],
    measurements: &[Measured<'_>],
    scene: &GaussianScene,
    w: &LossWeights,
) -> Result<f64> {
    if renders.is_empty() {
        return Err(Error::Domain("stage loss over an empty window".into()));
    }
    if renders.len() != measurements.len() {
        return Err(Error::Shape(format!("{} renders for {} measurements", renders.len(), measurements.len())));
    }
    let mut total = 0.0;
    for (r, m) in renders.iter().zip(measurements) {
        total += image_loss(r.ra, m.ra, w)?;
        if stage.uses_rd() {
            if let (Some(rd), Some(t)) = (r.rd, m.rd) {
                total += w.rd_weight * image_loss(rd, t, w)?;
            }
        }
    }
    if stage.uses_scale_reg() {
        total += w.lambda_scale * scale_reg(scene, w.s_reg);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Bounds, Gaussian2D};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Image {
        Image::from_fn(rows, cols, |_, _| rng.gen::<f64>())
    }

    /// Direct 2D windowed SSIM, no separability.
    fn ssim_oracle(a: &Image, b: &Image, w: usize) -> f64 {
        let k = ssim_kernel(w);
        let (rows, cols) = a.shape();
        let mut total = 0.0;
        let mut count = 0;
        for r in 0..=rows - w {
            for c in 0..=cols - w {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..w {
                    for j in 0..w {
                        let wt = k[i] * k[j];
                        let (x, y) = (a.get(r + i, c + j), b.get(r + i, c + j));
                        ma += wt * x;
                        mb += wt * y;
                        saa += wt * x * x;
                        sbb += wt * y * y;
                        sab += wt * x * y;
                    }
                }
                let (va, vb, cab) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += (2.0 * ma * mb + SSIM_C1) * (2.0 * cab + SSIM_C2)
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn l1_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(&mut rng, 7, 9);
        assert_eq!(l1(&a, &a).unwrap(), 0.0);
        let z = Image::zeros(7, 9);
        let c = Image::filled(7, 9, 0.37);
        assert!((l1(&z, &c).unwrap() - 0.37).abs() < 1e-15);
        let b = random_image(&mut rng, 7, 9);
        let mut oracle = 0.0;
        for r in 0..7 {
            for q in 0..9 {
                oracle += (a.get(r, q) - b.get(r, q)).abs();
            }
        }
        assert!((l1(&a, &b).unwrap() - oracle / 63.0).abs() < 1e-12);
        assert!(matches!(l1(&a, &Image::zeros(2, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn ssim_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_image(&mut rng, 16, 14);
        assert!((ssim(&a, &a, 11).unwrap() - 1.0).abs() < 1e-9);

        let z = Image::zeros(12, 12);
        let o = Image::filled(12, 12, 1.0);
        let expect = (SSIM_C1 * SSIM_C2) / ((1.0 + SSIM_C1) * SSIM_C2);
        assert!((ssim(&z, &o, 11).unwrap() - expect).abs() < 1e-12);

        let b = random_image(&mut rng, 16, 14);
        let ab = ssim(&a, &b, 11).unwrap();
        assert!((ab - ssim(&b, &a, 11).unwrap()).abs() < 1e-12);
        assert!((ab - ssim_oracle(&a, &b, 11)).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&ab));
        assert!(ssim(&Image::zeros(5, 20), &Image::zeros(5, 20), 11).is_err());
    }

    fn fd_check(f: impl Fn(&Image) -> f64, x: &Image, grad: &Image, tol: f64) {
        let h = 1e-6;
        for i in 0..x.as_slice().len() {
            let mut p = x.clone();
            p.as_mut_slice()[i] += h;
            let mut m = x.clone();
            m.as_mut_slice()[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            let an = grad.as_slice()[i];
            let err = (fd - an).abs();
            assert!(err <= tol * fd.abs().max(an.abs()) + 1e-9, "entry {i}: analytic {an} fd {fd}");
        }
    }

    #[test]
    fn ssim_and_l1_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_image(&mut rng, 13, 12);
        let b = random_image(&mut rng, 13, 12);
        let (_, g) = ssim_with_grad(&a, &b, 7).unwrap();
        fd_check(|x| ssim(x, &b, 7).unwrap(), &a, &g, 1e-5);
        let (_, g) = l1_with_grad(&a, &b).unwrap();
        fd_check(|x| l1(x, &b).unwrap(), &a, &g, 1e-5);
    }

    #[test]
    fn image_loss_examples_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = LossWeights { ssim_window: 7, ..Default::default() };
        let a = random_image(&mut rng, 12, 12).scaled(3.0);
        let t = Target::new(random_image(&mut rng, 12, 12).scaled(2.0));
        assert_eq!(image_loss(t.image(), &t, &w).unwrap(), 0.0);

        let w0 = LossWeights { lambda_ssim: 0.0, ..w.clone() };
        let pure = l1(&a.scaled(1.0 / t.scale()), &t.image().scaled(1.0 / t.scale())).unwrap();
        assert!((image_loss(&a, &t, &w0).unwrap() - pure).abs() < 1e-15);

        let clamp = |i: &Image| i.scaled(1.0 / t.scale()).map(|v| v.clamp(0.0, 1.0));
        let composed = 0.8 * pure + 0.2 * (1.0 - ssim_oracle(&clamp(&a), &clamp(t.image()), 7));
        assert!((image_loss(&a, &t, &w).unwrap() - composed).abs() < 1e-12);

        let (_, g) = image_loss_with_grad(&a, &t, &w).unwrap();
        fd_check(|x| image_loss(x, &t, &w).unwrap(), &a, &g, 1e-5);
    }

    #[test]
    fn target_normalizer() {
        let t = Target::new(Image::from_fn(10, 100, |r, c| (r * 100 + c) as f64));
        assert_eq!(t.scale(), 998.0);
        assert_eq!(Target::new(Image::zeros(3, 3)).scale(), 1.0);
    }

    fn scene_with_scales(scales: &[[f64; 2]]) -> GaussianScene {
        GaussianScene::with_gaussians(
            scales.iter().map(|s| Gaussian2D::new([0.0, 0.0], 0.3, *s, 1.0)).collect(),
            Bounds::centered(10.0),
        )
    }

    #[test]
    fn scale_reg_examples() {
        assert_eq!(scale_reg(&scene_with_scales(&[[0.5, 1.0], [0.2, 0.3]]), 1.0), 0.0);
        let s = scene_with_scales(&[[2.0, 0.5], [0.2, 0.3], [0.4, 0.4]]);
        assert!((scale_reg(&s, 1.0) - 1.0 / 3.0).abs() < 1e-15);

        let mut s = scene_with_scales(&[[1.7, 0.5], [0.9, 1.4], [0.2, 0.3]]);
        let g = scale_reg_grad(&s, 1.0);
        let h = 1e-6;
        for i in 0..3 {
            for k in 0..2 {
                let base = s.gaussians[i].scales[k];
                s.gaussians[i].scales[k] = base + h;
                let p = scale_reg(&s, 1.0);
                s.gaussians[i].scales[k] = base - h;
                let m = scale_reg(&s, 1.0);
                s.gaussians[i].scales[k] = base;
                assert!(((p - m) / (2.0 * h) - g[i][k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn stage_loss_compositions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = LossWeights { ssim_window: 7, ..Default::default() };
        let scene = scene_with_scales(&[[2.0, 0.5]]);
        let ra_t = Target::new(random_image(&mut rng, 10, 10));
        let rd_t = Target::new(random_image(&mut rng, 10, 8));
        let ra_hat = random_image(&mut rng, 10, 10);
        let rd_hat = random_image(&mut rng, 10, 8);
        let reg = w.lambda_scale * scale_reg(&scene, w.s_reg);

        // perfect renders leave only the regularizer
        let perfect = [Rendered { ra: ra_t.image(), rd: Some(rd_t.image()) }];
        let meas = [Measured { ra: &ra_t, rd: Some(&rd_t) }];
        assert_eq!(stage_loss(Stage::Pose, &perfect, &meas, &scene, &w).unwrap(), 0.0);
        assert!((stage_loss(Stage::Map, &perfect, &meas, &scene, &w).unwrap() - reg).abs() < 1e-15);
        assert!((stage_loss(Stage::Ba, &perfect, &meas, &scene, &w).unwrap() - reg).abs() < 1e-15);

        let imperfect = [Rendered { ra: &ra_hat, rd: Some(&rd_hat) }];
        let ra_only = image_loss(&ra_hat, &ra_t, &w).unwrap();
        let map = stage_loss(Stage::Map, &imperfect, &meas, &scene, &w).unwrap();
        assert!((map - (ra_only + reg)).abs() < 1e-12, "map stage must ignore RD");
        let pose = stage_loss(Stage::Pose, &imperfect, &meas, &scene, &w).unwrap();
        let ba = stage_loss(Stage::Ba, &imperfect, &meas, &scene, &w).unwrap();
        assert!((ba - (pose + reg)).abs() < 1e-12);

        assert!(stage_loss(Stage::Ba, &[], &[], &scene, &w).is_err());
    }

    proptest! {
        #[test]
        fn stage_loss_additive_over_windows(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = LossWeights { ssim_window: 5, ..Default::default() };
            let scene = scene_with_scales(&[[0.5, 0.5]]);
            let targets: Vec<Target> = (0..4).map(|_| Target::new(random_image(&mut rng, 6, 6))).collect();
            let renders: Vec<Image> = (0..4).map(|_| random_image(&mut rng, 6, 6)).collect();
            let r: Vec<Rendered> = renders.iter().map(|i| Rendered { ra: i, rd: None }).collect();
            let m: Vec<Measured> = targets.iter().map(|t| Measured { ra: t, rd: None }).collect();
            let all = stage_loss(Stage::Pose, &r, &m, &scene, &w).unwrap();
            let a = stage_loss(Stage::Pose, &r[..2], &m[..2], &scene, &w).unwrap();
            let b = stage_loss(Stage::Pose, &r[2..], &m[2..], &scene, &w).unwrap();
            prop_assert!((all - a - b).abs() < 1e-12);
        }

        #[test]
        fn image_loss_nonnegative_and_zero_only_at_equality(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = LossWeights { ssim_window: 5, ..Default::default() };
            let t = Target::new(random_image(&mut rng, 8, 8));
            let a = random_image(&mut rng, 8, 8);
            let v = image_loss(&a, &t, &w).unwrap();
            prop_assert!(v > 0.0);
            prop_assert!(image_loss(t.image(), &t, &w).unwrap() == 0.0);
        }
    }
}
