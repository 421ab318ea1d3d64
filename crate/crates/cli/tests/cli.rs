use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tilemat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilemat"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn tilemat")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small map stack; smoothing oracle unless `extra` picks another.
fn small_stack(dir: &Path, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join("maps");
    let mut args = vec!["sample", "--res", "128", "--patch", "8", "--steps", "10", "--decode-patch", "64", "--out", p(&out)];
    args.extend_from_slice(extra);
    let r = tilemat(&args);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    out
}

#[test]
fn bad_resolution_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let r = tilemat(&["sample", "--res", "513", "--out", p(&out)]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("resolution must be divisible by patch stride"), "{}", stderr(&r));
    assert!(!out.exists(), "nothing may be written on a validation error");

    let r = tilemat(&["sample", "--res", "640", "--patch", "32", "--out", p(&out)]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("resolution must be divisible by patch stride"));
    let r = tilemat(&["sample", "--res", "512", "--base-res", "384", "--out", p(&out)]);
    assert_eq!(code(&r), 1);
    assert!(!out.exists());
}

#[test]
fn attractor_needs_a_matching_target() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.json");
    let out = dir.path().join("maps");
    assert_eq!(code(&tilemat(&["sample", "--oracle", "attractor", "--out", p(&out)])), 1);
    assert_eq!(code(&tilemat(&["make-target", "--res", "256", "--out", p(&t)])), 0);
    let r = tilemat(&["sample", "--oracle", "attractor", "--target", p(&t), "--res", "512", "--out", p(&out)]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("target latent is 32x32"), "{}", stderr(&r));
    assert!(!out.exists());
    let r = tilemat(&["sample", "--oracle", "attractor", "--target", p(&dir.path().join("missing.json")), "--out", p(&out)]);
    assert_eq!(code(&r), 2);
}

#[test]
fn border_mask_counts() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("mask.json");
    let png = dir.path().join("mask.png");
    let r = tilemat(&["mask", "border", "--height", "16", "--width", "16", "--json", p(&json), "--out", p(&png)]);
    assert_eq!(code(&r), 0);
    assert!(stdout(&r).contains("masked pixels: 60 of 256 (fraction 0.234375)"), "{}", stdout(&r));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    assert_eq!(v["masked_pixels"], 60);
    assert_eq!(v["masked_fraction"], 0.234375);
    assert!(png.exists());

    let r = tilemat(&["mask", "border", "--height", "16", "--width", "16", "--frac", "0.01"]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("empty border"));
}

#[test]
fn random_masks_follow_the_seed() {
    let run = |seed: &str| stdout(&tilemat(&["mask", "random", "--height", "64", "--width", "64", "--seed", seed]));
    assert_eq!(run("4"), run("4"));
    assert_ne!(run("4"), run("5"));
}

#[test]
fn metrics_of_a_stack_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let maps = small_stack(dir.path(), &[]);
    let json = dir.path().join("m.json");
    let r = tilemat(&["metrics", p(&maps), p(&maps), "--json", p(&json)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    for row in rows {
        assert_eq!(row["rmse"], 0.0, "{row}");
        assert_eq!(row["ssim"], 1.0, "{row}");
    }
    let normal = rows.iter().find(|r| r["map"] == "normal").unwrap();
    assert!(normal["cosine_error"].as_f64().unwrap() < 1e-12);
}

#[test]
fn tilecheck_passes_samples_and_fails_gradients() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("t.json");
    assert_eq!(code(&tilemat(&["make-target", "--res", "128", "--out", p(&target)])), 0);
    let maps = small_stack(dir.path(), &["--oracle", "attractor", "--target", p(&target)]);
    let json = dir.path().join("tile.json");
    let r = tilemat(&["tilecheck", p(&maps.join("basecolor.png")), "--json", p(&json)]);
    assert_eq!(code(&r), 0, "{}", stdout(&r));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["ratio"].as_f64().unwrap() <= 2.0);

    // A horizontal ramp jumps from white back to black across the wrap.
    let ramp = dir.path().join("ramp.png");
    let img = tilemat::Grid::from_fn(32, 32, 3, |_, j, _| j as f64 / 31.0);
    tilemat::svbrdf::io::write_rgb16(&ramp, &img, false).unwrap();
    let r = tilemat(&["tilecheck", p(&ramp)]);
    assert_eq!(code(&r), 3, "{}", stdout(&r));
    assert!(stdout(&r).contains("FAIL"));

    assert_eq!(code(&tilemat(&["tilecheck", p(&dir.path().join("none.png"))])), 2);
}

#[test]
fn fit_displacement_recovers_a_known_factor() {
    let dir = tempfile::tempdir().unwrap();
    let n = 64;
    let height = tilemat::Grid::from_fn(n, n, 1, |i, j, _| {
        let tau = std::f64::consts::TAU;
        0.5 + 0.2 * (tau * j as f64 / n as f64).sin() * (tau * 2.0 * i as f64 / n as f64).cos()
    });
    let normals = tilemat::svbrdf::height_to_normal(&height, 0.5).unwrap();
    let stack = tilemat::Grid::from_fn(n, n, 9, |i, j, k| match k {
        3 | 4 => normals.get(i, j, k - 3),
        5 => height.get(i, j, 0),
        _ => 0.5,
    });
    let maps = tilemat::svbrdf::MaterialMaps::from_stack(stack).unwrap();
    tilemat::svbrdf::save_maps(dir.path(), &maps, 1.0).unwrap();

    let json = dir.path().join("fit.json");
    let r = tilemat(&["fit-displacement", "--maps", p(dir.path()), "--json", p(&json)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    // 16-bit quantisation of both maps limits the recovery.
    let d = v["displacement_factor"].as_f64().unwrap();
    assert!((d - 0.5).abs() < 5e-3, "{d}");
    assert_eq!(v["degenerate"], false);
}

#[test]
fn render_and_clay_write_images() {
    let dir = tempfile::tempdir().unwrap();
    let maps = small_stack(dir.path(), &["--displacement", "0.2"]);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(maps.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["displacement_factor"], 0.2);
    assert_eq!(manifest["bit_depth"], 16);

    let out = dir.path().join("r.png");
    let r = tilemat(&["render", "--maps", p(&maps), "--light-dir", "0.3,-0.2,1", "--srgb", "--out", p(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let img = tilemat::svbrdf::io::read_png(&out, 3, true).unwrap();
    assert_eq!((img.height(), img.width()), (128, 128));

    let out = dir.path().join("c.png");
    let r = tilemat(&["clay", "--maps", p(&maps), "--light-pos", "0.5,0.5,2", "--intensity", "2", "--out", p(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let img = tilemat::svbrdf::io::read_png(&out, 3, false).unwrap();
    // Clay is grey: all three channels agree.
    assert!(img.data().chunks(3).all(|px| px[0] == px[1] && px[1] == px[2]));

    let r = tilemat(&["render", "--maps", p(&maps), "--light-dir", "0,0", "--out", p(&out)]);
    assert_eq!(code(&r), 1);
    let r = tilemat(&["render", "--maps", p(&maps), "--intensity", "1,2", "--out", p(&out)]);
    assert_eq!(code(&r), 1);
}

#[test]
fn saved_config_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_stack(dir.path(), &["--seed", "17", "--oracle", "gaussian", "--mu", "0.1"]);
    let b = dir.path().join("replay");
    let r = tilemat(&["sample", "--config", p(&a.join("run_config.json")), "--out", p(&b)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    for f in ["basecolor.png", "normal.png", "height.png", "roughness.png", "metalness.png", "opacity.png", "manifest.json", "run_config.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let cfg: serde_json::Value = serde_json::from_slice(&fs::read(a.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(cfg["seed"], 17);
    assert_eq!(cfg["oracle"]["kind"], "gaussian");
}
