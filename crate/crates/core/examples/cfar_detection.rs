//! Runs cell-averaging CFAR on a noisy RA image of point-like targets and
//! groups the detections into clusters.
//!
//! cargo run --release --example cfar_detection

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radarsplat::frontend::{cfar_detect, cluster_detections, CfarParams};
use radarsplat::image::Image;
use radarsplat::model::{Pose2, RadarConfig};
use radarsplat::render::Renderer;
use radarsplat::scene::{Bounds, Gaussian2D, GaussianScene};

fn main() -> radarsplat::Result<()> {
    let cfg = RadarConfig::default();
    let targets = [[2.0, 0.5], [3.5, -1.0], [5.0, 1.5], [6.0, -0.3]];
    let scene = GaussianScene::with_gaussians(
        targets.iter().map(|&m| Gaussian2D::new(m, 0.0, [0.08, 0.08], 1.0e2)).collect(),
        Bounds::centered(10.0),
    );
    let clean = Renderer::new(&cfg).render_ra(&scene, &Pose2::identity());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noisy = Image::from_fn(clean.rows(), clean.cols(), |r, a| clean.get(r, a) + rng.gen_range(0.0..4e-3));

    let p = CfarParams::default();
    let hits = cfar_detect(&noisy, p.guard, p.train, p.alpha)?;
    let clusters = cluster_detections(&hits);
    println!("{} detections in {} clusters ({} targets planted)", hits.len(), clusters.len(), targets.len());
    let grid = cfg.grid();
    for c in &clusters {
        let (r, a) = *c.iter().max_by(|x, y| noisy.get(x.0, x.1).total_cmp(&noisy.get(y.0, y.1))).expect("non-empty cluster");
        let (range, az) = (grid.range_centers[r], grid.azimuth_centers[a]);
        println!("  {} bins, peak at {range:.2} m / {:+.1} deg", c.len(), az.to_degrees());
    }
    Ok(())
}
