//! Renders RA and RD images of a three-Gaussian scene and prints the RA
//! image as coarse ASCII art.
//!
//! cargo run --release --example render_scene -- [out_dir]

use radarsplat::io;
use radarsplat::model::{Pose2, RadarConfig, Vel2};
use radarsplat::render::Renderer;
use radarsplat::scene::{Bounds, Gaussian2D, GaussianScene};

fn main() -> radarsplat::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "render_out".into());
    let cfg = RadarConfig::default();
    let scene = GaussianScene::with_gaussians(
        vec![
            Gaussian2D::new([3.0, 0.0], 0.0, [0.2, 0.1], 1.0),
            Gaussian2D::new([4.5, 1.5], 0.7, [0.4, 0.1], 2.0),
            Gaussian2D::new([2.0, -1.2], 0.0, [0.15, 0.15], 0.5),
        ],
        Bounds::centered(10.0),
    );
    let renderer = Renderer::new(&cfg);
    let (ra, rd) = renderer.render_frame(&scene, &Pose2::identity(), &Vel2::new(1.0, 0.0))?;

    let shades = [' ', '.', ':', '*', '#'];
    let top = ra.max();
    for r in (0..ra.rows()).step_by(2) {
        let line: String = (0..ra.cols())
            .map(|a| {
                let v = (ra.get(r, a) / top).sqrt();
                shades[((v * 4.0).round() as usize).min(4)]
            })
            .collect();
        println!("{:5.2} m |{line}|", cfg.grid().range_centers[r]);
    }
    io::write_image_pgm(&ra, format!("{out}/ra.pgm"))?;
    io::write_image_pgm(&rd, format!("{out}/rd.pgm"))?;
    println!("RA peak {top:.3e}, RD peak {:.3e}; images in {out}", rd.max());
    Ok(())
}
