use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use log::info;
use serde::Serialize;
use tilemat::decode::{patched_decode_with_stats, LinearMockDecoder};
use tilemat::grid::{Grid, Shape, LATENT_CHANNELS, LATENT_SCALE};
use tilemat::inpaint::{border_mask, random_area_mask};
use tilemat::multiscale::multiscale_sample_with;
use tilemat::oracles::{periodic_target, AttractorDenoiser, GaussianScoreDenoiser, SmoothingDenoiser};
use tilemat::rng::{Purpose, SeedStreams, StreamId};
use tilemat::sampler::{Denoiser, NoiseSchedule};
use tilemat::svbrdf::io::{read_png, write_gray16, write_json, write_rgb16};
use tilemat::svbrdf::{
    clay_render, fit_displacement_factor, load_maps, normal_cosine_error, rmse, save_maps,
    ssim, Light, MapKind, MaterialMaps, DEFAULT_MAX_DISPLACEMENT, DEFAULT_VIEW,
};
use tilemat::tiling::{seam_report, SeamAxis};

use crate::config::{LatentFile, OracleConfig, RunConfig, RUN_CONFIG_FILE, SCHEMA_VERSION};
use crate::{
    ClayArgs, FitArgs, Invalid, LightArgs, MakeTargetArgs, MaskArgs, MaskKind, MetricsArgs, OracleKind, RenderArgs,
    SampleArgs, TilecheckArgs, EXIT_TILECHECK,
};

/// Raking light used when no light is given.
const DEFAULT_LIGHT_DIR: [f64; 3] = [0.5, -0.5, 1.0];

fn run_config_from_args(a: &SampleArgs) -> Result<RunConfig> {
    let oracle = match a.oracle {
        OracleKind::Attractor => OracleConfig::Attractor {
            target: a
                .target
                .clone()
                .ok_or_else(|| Invalid("--oracle attractor needs --target <latent.json>".into()))?,
        },
        OracleKind::Smoothing => OracleConfig::Smoothing {
            radius: a.smoothing_radius,
            strength: a.smoothing_strength,
        },
        OracleKind::Gaussian => OracleConfig::Gaussian { mu: a.mu, sigma: a.sigma },
    };
    Ok(RunConfig {
        schema_version: SCHEMA_VERSION,
        oracle,
        res: a.res,
        base_res: a.base_res.unwrap_or(a.res),
        seed: a.seed,
        steps: a.steps,
        eta: a.eta,
        patch: a.patch,
        max_roll: a.max_roll,
        restart_strength: a.restart_strength,
        decode_patch: a.decode_patch,
        overlap: a.overlap,
        sigma_frac: a.sigma_frac,
        max_parallel_patches: a.max_parallel_patches,
        decoder_seed: a.decoder_seed,
        displacement: a.displacement,
    })
}

fn build_oracle(cfg: &RunConfig, stages: usize, sched: &NoiseSchedule) -> Result<Box<dyn Denoiser>> {
    let side = cfg.latent_side();
    Ok(match &cfg.oracle {
        OracleConfig::Attractor { target } => {
            let t = LatentFile::load(target)?;
            if (t.height(), t.width()) != (side, side) {
                return Err(Invalid(format!(
                    "target latent is {}x{}, but --res {} needs {side}x{side}",
                    t.height(),
                    t.width(),
                    cfg.res
                ))
                .into());
            }
            Box::new(AttractorDenoiser::with_pyramid(t, stages - 1, sched.clone())?)
        }
        OracleConfig::Smoothing { radius, strength } => {
            Box::new(SmoothingDenoiser::new(*radius, *strength, sched.clone())?)
        }
        OracleConfig::Gaussian { mu, sigma } => {
            Box::new(GaussianScoreDenoiser::new(vec![*mu; LATENT_CHANNELS], *sigma, sched.clone())?)
        }
    })
}

pub fn sample(a: &SampleArgs) -> Result<u8> {
    let cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => run_config_from_args(a)?,
    };
    cfg.validate()?;
    let sched = NoiseSchedule::default();
    let stages = cfg.stage_resolutions()?;
    let denoiser = build_oracle(&cfg, stages.len(), &sched)?;

    let chain: Vec<String> = stages.iter().map(|r| r.to_string()).collect();
    info!("stage chain: {}", chain.join(" -> "));
    let side = cfg.latent_side();
    let base = cfg.base_res / LATENT_SCALE;
    let started = Instant::now();
    let mut stage_clock = Instant::now();
    let mut stage_idx = 0;
    let out = multiscale_sample_with(
        denoiser.as_ref(),
        Shape::new(side, side, LATENT_CHANNELS),
        Shape::new(base, base, LATENT_CHANNELS),
        &cfg.sampler(),
        &sched,
        &cfg.tiling(),
        cfg.restart_strength,
        |r| {
            info!(
                "stage {}/{}: {} px, latent {}, from t={}, {} steps x {} patches, up to {} in parallel, {:.2?}",
                stage_idx + 1,
                stages.len(),
                stages[stage_idx],
                r.shape,
                r.start_timestep,
                r.tiling.steps,
                r.tiling.patches_per_step,
                r.tiling.peak_parallel_patches,
                stage_clock.elapsed()
            );
            stage_idx += 1;
            stage_clock = Instant::now();
        },
    )?;

    let decode_clock = Instant::now();
    let decoder = LinearMockDecoder::new(cfg.decoder_seed);
    let (decoded, stats) = patched_decode_with_stats(&decoder, &out.latent, &cfg.decode())?;
    info!(
        "decoded {} patches against a 1/{} reference in {:.2?}",
        stats.patches,
        stats.reference_factor,
        decode_clock.elapsed()
    );
    let maps = MaterialMaps::from_decoded(&decoded)?;
    let displacement = match cfg.displacement {
        Some(d) => d,
        None => {
            let fit = fit_displacement_factor(&maps.map(MapKind::Height), &maps.normals(), DEFAULT_MAX_DISPLACEMENT)?;
            info!(
                "fitted displacement factor {:.6} (normal rmse {:.6}{})",
                fit.factor,
                fit.residual_rmse,
                if fit.degenerate { ", flat height" } else { "" }
            );
            fit.factor
        }
    };

    save_maps(&a.out, &maps, displacement)?;
    write_json(&a.out.join(RUN_CONFIG_FILE), &cfg)?;
    info!("wrote {} in {:.2?}", a.out.display(), started.elapsed());
    Ok(0)
}

#[derive(Serialize)]
struct TileReport<'a> {
    schema_version: u32,
    image: &'a str,
    seam_energy: f64,
    interior_energy: f64,
    ratio: f64,
    threshold: f64,
    pass: bool,
}

pub fn tilecheck(a: &TilecheckArgs) -> Result<u8> {
    if !(a.threshold >= 0.0) {
        return Err(Invalid(format!("--threshold must be non-negative, got {}", a.threshold)).into());
    }
    let img = read_png(&a.image, 3, false).with_context(|| format!("reading {}", a.image.display()))?;
    let r = seam_report(&img, None, SeamAxis::Both);
    let pass = r.ratio <= a.threshold;
    println!("wrap seam energy:        {:.6e}", r.seam_energy);
    println!("interior gradient energy: {:.6e}", r.interior_energy);
    println!("ratio:                   {:.4} (threshold {})", r.ratio, a.threshold);
    println!("{}", if pass { "PASS" } else { "FAIL" });
    if let Some(path) = &a.json {
        let image = a.image.to_string_lossy();
        write_json(
            path,
            &TileReport {
                schema_version: SCHEMA_VERSION,
                image: &image,
                seam_energy: r.seam_energy,
                interior_energy: r.interior_energy,
                ratio: r.ratio,
                threshold: a.threshold,
                pass,
            },
        )?;
    }
    Ok(if pass { 0 } else { EXIT_TILECHECK })
}

fn light_from(args: &LightArgs) -> Result<Light> {
    let intensity = match args.intensity.as_slice() {
        [v] => [*v; 3],
        [r, g, b] => [*r, *g, *b],
        other => return Err(Invalid(format!("--intensity takes 1 or 3 values, got {}", other.len())).into()),
    };
    if intensity.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Invalid("--intensity values must be non-negative".into()).into());
    }
    let vec3 = |flag: &str, v: &[f64]| -> Result<[f64; 3]> {
        match v {
            [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok([*x, *y, *z]),
            _ => Err(Invalid(format!("{flag} takes three finite values x,y,z")).into()),
        }
    };
    Ok(match (&args.light_dir, &args.light_pos) {
        (_, Some(p)) => Light::point(vec3("--light-pos", p)?, intensity),
        (Some(d), None) => Light::directional(vec3("--light-dir", d)?, intensity).map_err(|e| Invalid(e.to_string()))?,
        (None, None) => Light::directional(DEFAULT_LIGHT_DIR, intensity)?,
    })
}

fn check_displacement(d: Option<f64>) -> Result<()> {
    match d {
        Some(v) if !(v >= 0.0 && v.is_finite()) => {
            Err(Invalid(format!("--displacement must be non-negative, got {v}")).into())
        }
        _ => Ok(()),
    }
}

fn load_stack(dir: &Path) -> Result<(MaterialMaps, tilemat::svbrdf::Manifest)> {
    load_maps(dir).with_context(|| format!("loading map stack from {}", dir.display()))
}

pub fn render(a: &RenderArgs) -> Result<u8> {
    check_displacement(a.displacement)?;
    let light = light_from(&a.light)?;
    let (maps, manifest) = load_stack(&a.maps)?;
    let img = tilemat::svbrdf::render(&maps, &light, DEFAULT_VIEW, a.displacement.unwrap_or(manifest.displacement_factor))?;
    write_rgb16(&a.out, &img, a.srgb)?;
    info!("wrote {}", a.out.display());
    Ok(0)
}

pub fn clay(a: &ClayArgs) -> Result<u8> {
    check_displacement(a.displacement)?;
    let light = light_from(&a.light)?;
    let (maps, manifest) = load_stack(&a.maps)?;
    let d = a.displacement.unwrap_or(manifest.displacement_factor);
    let img = clay_render(&maps.map(MapKind::Height), d, &light)?;
    write_rgb16(&a.out, &img, a.srgb)?;
    info!("wrote {}", a.out.display());
    Ok(0)
}

#[derive(Serialize)]
struct FitReport {
    schema_version: u32,
    displacement_factor: f64,
    residual_rmse: f64,
    degenerate: bool,
}

pub fn fit_displacement(a: &FitArgs) -> Result<u8> {
    if !(a.d_max > 0.0 && a.d_max.is_finite()) {
        return Err(Invalid(format!("--d-max must be positive, got {}", a.d_max)).into());
    }
    let (maps, _) = load_stack(&a.maps)?;
    let fit = fit_displacement_factor(&maps.map(MapKind::Height), &maps.normals(), a.d_max)?;
    println!("displacement factor: {:.6}", fit.factor);
    println!("normal rmse:         {:.6}", fit.residual_rmse);
    if fit.degenerate {
        println!("height map is flat; factor is undetermined");
    }
    if let Some(path) = &a.json {
        write_json(
            path,
            &FitReport {
                schema_version: SCHEMA_VERSION,
                displacement_factor: fit.factor,
                residual_rmse: fit.residual_rmse,
                degenerate: fit.degenerate,
            },
        )?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct MetricRow {
    map: String,
    rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cosine_error: Option<f64>,
    ssim: Option<f64>,
}

#[derive(Serialize)]
struct MetricsReport {
    schema_version: u32,
    rows: Vec<MetricRow>,
}

fn ssim_if_large(a: &Grid, b: &Grid) -> Result<Option<f64>> {
    if a.height() < tilemat::svbrdf::metrics::SSIM_WINDOW || a.width() < tilemat::svbrdf::metrics::SSIM_WINDOW {
        return Ok(None);
    }
    Ok(Some(ssim(a, b)?))
}

pub fn metrics(a: &MetricsArgs) -> Result<u8> {
    let (pa, ma) = load_stack(&a.a)?;
    let (pb, mb) = load_stack(&a.b)?;
    if (pa.height(), pa.width()) != (pb.height(), pb.width()) {
        return Err(Invalid(format!(
            "map stacks differ in size: {}x{} vs {}x{}",
            pa.height(),
            pa.width(),
            pb.height(),
            pb.width()
        ))
        .into());
    }
    let mut rows = Vec::new();
    for kind in MapKind::ALL {
        if kind == MapKind::Normal {
            let (na, nb) = (pa.normals(), pb.normals());
            let (ea, eb) = (na.map(|v| (v + 1.0) / 2.0), nb.map(|v| (v + 1.0) / 2.0));
            rows.push(MetricRow {
                map: kind.name().into(),
                rmse: rmse(&na, &nb)?,
                cosine_error: Some(normal_cosine_error(&na, &nb)?),
                ssim: ssim_if_large(&ea, &eb)?,
            });
        } else {
            let (x, y) = (pa.map(kind), pb.map(kind));
            rows.push(MetricRow {
                map: kind.name().into(),
                rmse: rmse(&x, &y)?,
                cosine_error: None,
                ssim: ssim_if_large(&x, &y)?,
            });
        }
    }
    let light = Light::directional(DEFAULT_LIGHT_DIR, [1.0; 3])?;
    let ra = tilemat::svbrdf::render(&pa, &light, DEFAULT_VIEW, ma.displacement_factor)?;
    let rb = tilemat::svbrdf::render(&pb, &light, DEFAULT_VIEW, mb.displacement_factor)?;
    rows.push(MetricRow {
        map: "render".into(),
        rmse: rmse(&ra, &rb)?,
        cosine_error: None,
        ssim: ssim_if_large(&ra.map(|v| v.clamp(0.0, 1.0)), &rb.map(|v| v.clamp(0.0, 1.0)))?,
    });
    let report = MetricsReport {
        schema_version: SCHEMA_VERSION,
        rows,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(path) = &a.json {
        write_json(path, &report)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct MaskReport {
    schema_version: u32,
    height: usize,
    width: usize,
    masked_pixels: usize,
    masked_fraction: f64,
}

pub fn mask(a: &MaskArgs) -> Result<u8> {
    if a.height == 0 || a.width == 0 {
        return Err(Invalid("mask dimensions must be positive".into()).into());
    }
    let m = match a.kind {
        MaskKind::Border => border_mask(a.height, a.width, a.frac)?,
        MaskKind::Random => {
            let mut rng = SeedStreams::new(a.seed).rng(StreamId::new(Purpose::Mask));
            random_area_mask(a.height, a.width, &mut rng)
        }
    };
    println!(
        "masked pixels: {} of {} (fraction {})",
        m.masked_count(),
        a.height * a.width,
        m.masked_fraction()
    );
    if let Some(path) = &a.out {
        write_gray16(path, &m.to_grid())?;
    }
    if let Some(path) = &a.json {
        write_json(
            path,
            &MaskReport {
                schema_version: SCHEMA_VERSION,
                height: a.height,
                width: a.width,
                masked_pixels: m.masked_count(),
                masked_fraction: m.masked_fraction(),
            },
        )?;
    }
    Ok(0)
}

pub fn make_target(a: &MakeTargetArgs) -> Result<u8> {
    if a.res == 0 || !a.res.is_multiple_of(LATENT_SCALE) {
        return Err(Invalid(format!("--res must be a positive multiple of {LATENT_SCALE}, got {}", a.res)).into());
    }
    let side = a.res / LATENT_SCALE;
    let target = periodic_target(Shape::new(side, side, LATENT_CHANNELS), a.seed, a.max_freq);
    fs::write(&a.out, serde_json::to_vec(&LatentFile::from_grid(&target))?)
        .with_context(|| format!("writing {}", a.out.display()))?;
    info!("wrote {side}x{side}x{LATENT_CHANNELS} target to {}", a.out.display());
    Ok(0)
}
