use tilemat::decode::{patched_decode, LinearMockDecoder, PatchedDecodeConfig};
use tilemat::inpaint::{border_mask, InpaintOracle};
use tilemat::multiscale::multiscale_sample;
use tilemat::oracles::{periodic_target, AttractorDenoiser, SmoothingDenoiser};
use tilemat::svbrdf::{load_maps, save_maps, MaterialMaps};
use tilemat::tiling::{seam_report, SeamAxis};
use tilemat::{rolled_patched_sample, Grid, NoiseSchedule, SamplerConfig, Shape, TilingConfig};

fn run(batch: usize, max_parallel: usize) -> Grid {
    let sched = NoiseSchedule::default();
    let target = periodic_target(Shape::new(32, 32, 14), 9, 3);
    let oracle = AttractorDenoiser::with_pyramid(target, 1, sched.clone()).unwrap();
    let tiling = TilingConfig {
        batch,
        ..TilingConfig::new(8, None)
    };
    let out = multiscale_sample(
        &oracle,
        Shape::new(32, 32, 14),
        Shape::new(16, 16, 14),
        &SamplerConfig::new(20, 4),
        &sched,
        &tiling,
        0.6,
    )
    .unwrap();
    let cfg = PatchedDecodeConfig {
        patch: 16,
        max_parallel,
        ..Default::default()
    };
    patched_decode(&LinearMockDecoder::new(2), &out.latent, &cfg).unwrap()
}

#[test]
fn pipeline_is_deterministic_and_parallelism_free() {
    let a = run(8, 8);
    assert_eq!(a.shape(), Shape::new(256, 256, 9));
    assert_eq!(a, run(8, 8));
    assert_eq!(a, run(1, 1));
    assert_eq!(a, run(3, 2));
}

#[test]
fn decoded_maps_survive_disk() {
    let maps = MaterialMaps::from_decoded(&run(8, 8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_maps(dir.path(), &maps, 0.25).unwrap();
    let (back, m2) = load_maps(dir.path()).unwrap();
    assert_eq!(manifest, m2);
    assert_eq!(m2.displacement_factor, 0.25);
    let err = tilemat::grid::rmse(maps.stack(), back.stack()).unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn border_inpainting_makes_a_crop_tileable() {
    let sched = NoiseSchedule::default();
    // A crop of a periodic field does not wrap cleanly. The fill radius is
    // wide enough for the ring to settle within 50 steps at 16-cell patches.
    let known = periodic_target(Shape::new(64, 64, 4), 5, 2).crop_wrapped(0, 0, 48, 48);
    let before = seam_report(&known, None, SeamAxis::Both);
    assert!(before.ratio > 2.0, "{before:?}");

    let mask = border_mask(48, 48, 1.0 / 8.0).unwrap();
    let oracle = InpaintOracle::new(known.clone(), mask.clone(), 4, sched.clone()).unwrap();
    let z = rolled_patched_sample(
        &oracle,
        known.shape(),
        &SamplerConfig::new(50, 1),
        &sched,
        &TilingConfig::new(16, None),
    )
    .unwrap();

    let after = seam_report(&z, None, SeamAxis::Both);
    assert!(after.ratio <= 2.0, "{after:?}");
    let mut worst: f64 = 0.0;
    for i in 0..48 {
        for j in 0..48 {
            if !mask.get(i, j) {
                for (a, b) in z.pixel(i, j).iter().zip(known.pixel(i, j)) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    assert!(worst < 1e-6, "unmasked cells drifted by {worst}");
}

#[test]
fn smoothing_samples_are_seamless_at_every_stage() {
    let sched = NoiseSchedule::default();
    let oracle = SmoothingDenoiser::with_defaults(sched.clone());
    let out = multiscale_sample(
        &oracle,
        Shape::new(64, 64, 4),
        Shape::new(32, 32, 4),
        &SamplerConfig::new(30, 11),
        &sched,
        &TilingConfig::new(16, None),
        0.6,
    )
    .unwrap();
    assert_eq!(out.stage_latents.len(), 2);
    for z in &out.stage_latents {
        assert!(z.data().iter().all(|v| v.is_finite()));
        let r = seam_report(z, None, SeamAxis::Both);
        assert!(r.ratio < 3.0, "{r:?}");
    }
}
