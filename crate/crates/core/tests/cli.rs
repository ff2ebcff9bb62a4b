use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nested_brdf::cli::ParamsFile;
use nested_brdf::dataset::sample_params;
use nested_brdf::estimator::EvalReport;
use nested_brdf::io::{read_pfm, write_png};
use nested_brdf::render::{corner_projection, render_view, training_views, SceneConfig};
use sha2::{Digest, Sha256};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nested-brdf")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cli(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_params(path: &Path, seed: u64) {
    fs::write(path, serde_json::to_string_pretty(&ParamsFile::from_params(&sample_params(seed))).unwrap()).unwrap();
}

#[test]
fn render_single_view_writes_pfm_and_png() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("m.json");
    write_params(&params, 1);
    let out = dir.path().join("d");
    ok(&["render", "--params", p(&params), "--view", "cam30_light45", "--out", p(&out), "--size", "32"]);
    assert!(out.join("m_cam30_light45.pfm").is_file());
    assert!(out.join("m_cam30_light45.png").is_file());
    assert_eq!(read_pfm(&out.join("m_cam30_light45.pfm")).unwrap().width, 32);
}

#[test]
fn render_all_writes_fourteen_views() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("m.json");
    write_params(&params, 2);
    let out = dir.path().join("d");
    ok(&["render", "--params", p(&params), "--view", "all", "--out", p(&out), "--size", "24"]);
    let pfms = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pfm")).count();
    assert_eq!(pfms, 14);
}

#[test]
fn custom_camera_elevation_renders() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("m.json");
    write_params(&params, 3);
    ok(&["render", "--params", p(&params), "--view", "cam22.5_light45", "--out", p(dir.path()), "--size", "24"]);
    assert!(dir.path().join("m_cam22.5_light45.pfm").is_file());
}

#[test]
fn invalid_nd_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("bad.json");
    let mut f = ParamsFile::from_params(&sample_params(4));
    f.nd = 0.5;
    fs::write(&params, serde_json::to_string(&f).unwrap()).unwrap();
    let out = cli(&["render", "--params", p(&params), "--view", "all", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let diag: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(diag["field"], "nd");
    assert!(diag["message"].as_str().unwrap().contains("nd"));
    assert!(!dir.path().join("bad_cam30_light45.pfm").exists());
}

#[test]
fn missing_field_and_bad_version_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("m.json");
    let mut v = serde_json::to_value(ParamsFile::from_params(&sample_params(5))).unwrap();
    v.as_object_mut().unwrap().remove("rgb90_g");
    fs::write(&params, v.to_string()).unwrap();
    let out = cli(&["render", "--params", p(&params), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rgb90_g"));

    let mut f = ParamsFile::from_params(&sample_params(5));
    f.version = 7;
    fs::write(&params, serde_json::to_string(&f).unwrap()).unwrap();
    let out = cli(&["render", "--params", p(&params), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

#[test]
fn unknown_view_and_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("m.json");
    write_params(&params, 6);
    assert_eq!(cli(&["render", "--params", p(&params), "--view", "sideways", "--out", p(dir.path())]).status.code(), Some(2));
    assert_eq!(cli(&["render"]).status.code(), Some(2));
    assert_eq!(cli(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["render", "--params", p(&dir.path().join("absent.json")), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_lists_every_subcommand() {
    let out = ok(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["render", "gen-dataset", "preprocess", "train", "predict", "eval"] {
        assert!(text.contains(sub), "{sub} missing from --help");
    }
}

fn hash_tree(root: &Path) -> String {
    let mut files: Vec<_> = walk(root);
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
        h.update(fs::read(&f).unwrap());
    }
    format!("{:x}", h.finalize())
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    fs::read_dir(dir)
        .unwrap()
        .flat_map(|e| {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p)
            } else {
                vec![p]
            }
        })
        .collect()
}

#[test]
fn gen_dataset_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (d, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        ok(&["gen-dataset", "--out", p(d), "--count", "4", "--seed", seed, "--views", "training", "--size", "24"]);
    }
    assert_eq!(hash_tree(&a), hash_tree(&b));
    assert_ne!(hash_tree(&a), hash_tree(&c));
    assert_eq!(cli(&["gen-dataset", "--out", p(&a), "--count", "4"]).status.code(), Some(2), "seed is required");
}

#[test]
fn preprocess_synthetic_view_and_photo_corners() {
    let dir = tempfile::tempdir().unwrap();
    let scene = SceneConfig::default().with_image_size(32);
    let view = training_views()[0];
    let img = render_view(&sample_params(8), &view, &scene).unwrap();
    let pfm = dir.path().join("shot.pfm");
    nested_brdf::io::write_pfm(&pfm, &img).unwrap();
    let out = dir.path().join("pre");
    ok(&["preprocess", "--image", p(&pfm), "--view", &view.name(), "--out", p(&out), "--size", "32"]);
    let homog = read_pfm(&out.join("shot_homog.pfm")).unwrap();
    let expected = nested_brdf::dataset::homographied_view(&img, &view, &scene).unwrap();
    assert_eq!(homog, expected);
    assert!(out.join("shot_white.pfm").is_file());

    let png = dir.path().join("photo.png");
    write_png(&png, &img, scene.exposure).unwrap();
    let c = corner_projection(&view, &scene);
    let corners: Vec<String> = c.iter().map(|q| format!("{},{}", q[0], q[1])).collect();
    let mut args = vec!["preprocess", "--image", p(&png), "--out", p(&out), "--size", "32", "--corners"];
    args.extend(corners.iter().map(String::as_str));
    ok(&args);
    let photo = read_pfm(&out.join("photo_homog.pfm")).unwrap();
    // 8-bit quantization only.
    assert!(photo.mean_squared_error(&expected) < 1e-4);
}

#[test]
fn train_predict_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (data, weights) = (dir.path().join("data"), dir.path().join("w"));
    ok(&["gen-dataset", "--out", p(&data), "--count", "12", "--seed", "3", "--views", "all", "--size", "32"]);
    ok(&[
        "train", "--dataset", p(&data), "--out", p(&weights), "--epochs", "1", "--nested-epochs", "1", "--batch", "4", "--variants",
        "cnn0,nested_lab", "--seed", "1",
    ]);

    let report_path = dir.path().join("report.json");
    ok(&["eval", "--dataset", p(&data), "--weights", p(&weights), "--variants", "cnn0,nested_lab", "--out", p(&report_path)]);
    let report: EvalReport = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    let names: std::collections::BTreeSet<_> = report.records.iter().map(|r| r.variant.name()).collect();
    assert_eq!(names.into_iter().collect::<Vec<_>>(), vec!["cnn0", "nested_lab"]);
    assert_eq!(report.views.len(), 14);

    let bad = cli(&["eval", "--dataset", p(&data), "--weights", p(&weights), "--variants", "custom_weights", "--out", p(&report_path)]);
    assert_eq!(bad.status.code(), Some(2), "custom-weights CNN was not trained");

    // Synthetic pair: raw renders of the two input views, corners implied.
    let ds = nested_brdf::dataset::Dataset::open(&data).unwrap();
    let e = &ds.entries[0];
    let views = training_views().map(|v| data.join(&e.images[&v.name()]));
    let pred = dir.path().join("pred.json");
    ok(&["predict", "--weights", p(&weights), "--variant", "nested_lab", "--images", p(&views[0]), p(&views[1]), "--out", p(&pred)]);
    let text = fs::read_to_string(&pred).unwrap();
    let file: ParamsFile = serde_json::from_str(&text).unwrap();
    file.to_params().unwrap();
    assert_eq!(file.prediction.as_ref().unwrap()["input_kind"], "synthetic_render");

    // Photo pair with explicit corners.
    let scene = SceneConfig::default().with_image_size(32);
    let mut args: Vec<String> = ["predict", "--weights", p(&weights), "--variant", "cnn0", "--out", p(&pred), "--images"].map(String::from).to_vec();
    for i in 0..2 {
        let png = dir.path().join(format!("photo{i}.png"));
        write_png(&png, &read_pfm(&views[i]).unwrap(), scene.exposure).unwrap();
        args.push(p(&png).to_owned());
    }
    for (i, v) in training_views().iter().enumerate() {
        args.push(format!("--corners{i}"));
        args.extend(corner_projection(v, &scene).iter().map(|c| format!("{},{}", c[0], c[1])));
    }
    let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&arg_refs);
    let file: ParamsFile = serde_json::from_str(&fs::read_to_string(&pred).unwrap()).unwrap();
    file.to_params().unwrap();
    let meta = file.prediction.unwrap();
    assert_eq!(meta["input_kind"], "photograph");
    assert!(meta["note"].as_str().unwrap().contains("exposure"));

    // The predicted params file feeds straight back into render.
    ok(&["render", "--params", p(&pred), "--view", "cam45_light90", "--out", p(dir.path()), "--size", "24"]);
}
