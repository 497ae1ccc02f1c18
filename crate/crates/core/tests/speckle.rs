use radarsplat::image::Image;
use radarsplat::model::RadarConfigBuilder;
use radarsplat::render::Renderer;
use radarsplat::sim::{NoiseParams, SceneKind, SimScenario, TrajSample};

#[test]
fn speckle_is_unit_mean() {
    let radar = RadarConfigBuilder { n_range: 24, n_azimuth: 24, n_doppler: 8, range_res: 0.3, ..Default::default() }.build().unwrap();
    let noise = NoiseParams { speckle: 0.5, ..NoiseParams::none() };
    let mut s = SimScenario::build(SceneKind::SmallLoop, radar, noise, 1.0, 10.0, 11).unwrap();
    let first = s.samples[0];
    let draws = 10_000;
    s.samples = (0..draws).map(|k| TrajSample { t: k as f64 * 0.1, ..first }).collect();
    let clean = Renderer::new(&s.radar).render_ra(&s.gt_scene, &first.pose);

    let mut sum = Image::zeros(clean.rows(), clean.cols());
    for k in 0..draws {
        let f = s.synthesize_frame(k).unwrap();
        assert!(f.ra.is_nonnegative_finite() && f.rd.is_nonnegative_finite());
        sum = sum.add(&f.ra).unwrap();
    }
    let top = clean.max();
    let mut checked = 0;
    for (m, c) in sum.as_slice().iter().zip(clean.as_slice()) {
        if *c > 1e-3 * top {
            let mean = m / draws as f64;
            assert!((mean / c - 1.0).abs() <= 0.02, "mean {mean} vs clean {c}");
            checked += 1;
        } else if *c == 0.0 {
            assert_eq!(*m, 0.0);
        }
    }
    assert!(checked > 20, "only {checked} lit bins");
}
