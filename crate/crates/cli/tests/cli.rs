use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use textfuse_core::assessment::{text_guided_reference, Assessment};
use textfuse_core::io;
use textfuse_core::{GrayImage, Grid, HeatMap, InstanceMap, InterestMask};
use textfuse_service::{encode_b64, router, InlineHeatmap, ServiceConfig};

const W: usize = 32;
const H: usize = 24;
const HEAT: f64 = 0.75;

fn ir() -> GrayImage {
    GrayImage::new(W, H, (0..W * H).map(|i| ((i * 7) % 29 * 8) as f64 / 255.0).collect()).unwrap()
}

fn vis() -> GrayImage {
    GrayImage::new(W, H, (0..W * H).map(|i| ((i * 13 + 5) % 31 * 7) as f64 / 255.0).collect()).unwrap()
}

fn person(x: usize, y: usize) -> bool {
    (4..14).contains(&x) && (6..18).contains(&y)
}

fn instances() -> InstanceMap {
    let ids = (0..W * H).map(|i| if person(i % W, i / W) { 1 } else { 0 }).collect();
    InstanceMap::new(W, H, ids, BTreeMap::from([(1u16, "person".to_string())])).unwrap()
}

fn heat() -> HeatMap {
    let g = Grid::from_fn(W, H, |x, y| if person(x, y) && x < 12 { HEAT } else { 0.0 });
    HeatMap::new(g, Some("person".into()))
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        io::save_gray_png(ir().grid(), root.join("ir.png")).unwrap();
        io::save_gray_png(vis().grid(), root.join("vis.png")).unwrap();
        io::save_instance_map(&instances(), root.join("inst.png")).unwrap();
        fs::write(root.join("inst.json"), r#"{"classes": {"1": "person"}}"#).unwrap();
        fs::create_dir_all(root.join("heat/ir")).unwrap();
        io::save_heatmap_pfm(&heat(), root.join("heat/ir/person.pfm")).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn textfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textfuse"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn png_b64(path: &Path) -> String {
    encode_b64(&fs::read(path).unwrap())
}

async fn api_assess(body: Value) -> Assessment {
    let app = router(&ServiceConfig::default()).unwrap();
    let req = Request::post("/api/v1/assess")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let res = app.oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    serde_json::from_slice(&res.into_body().collect().await.unwrap().to_bytes()).unwrap()
}

fn read_report(path: &Path) -> Assessment {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn associate_writes_mask_and_summary() {
    let fx = Fixture::new();
    let out = textfuse(&[
        "associate", "--ir", &fx.arg("ir.png"), "--vis", &fx.arg("vis.png"),
        "--instances", &fx.arg("inst.png"), "--text", "two pedestrians", "--out-mask", &fx.arg("bf.png"),
    ]);
    ok(&out);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["nouns"], json!(["pedestrian"]));
    assert!((v["c_t"].as_f64().unwrap() - 0.9).abs() < 1e-12);
    assert_eq!(io::load_mask(fx.path("bf.png")).unwrap(), InterestMask::from_fn(W, H, person));

    // a high alpha rejects the instance the supplied heat map only partly covers
    let out = textfuse(&[
        "associate", "--ir", &fx.arg("ir.png"), "--vis", &fx.arg("vis.png"),
        "--instances", &fx.arg("inst.png"), "--heatmaps", &fx.arg("heat"), "--text", "person", "--alpha", "0.9",
    ]);
    ok(&out);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["b_f_pixels"], json!(0));
    assert_eq!(v["overlaps"][0]["kept"], json!(false));
}

#[test]
fn fuse_identical_sources_and_dumps() {
    let fx = Fixture::new();
    let out = textfuse(&[
        "fuse", "--ir", &fx.arg("ir.png"), "--vis", &fx.arg("ir.png"), "--instances", &fx.arg("inst.png"),
        "--text", "person", "--out", &fx.arg("fused.png"), "--dump-weights", &fx.arg("w"),
        "--dump-mask", &fx.arg("bf.png"),
    ]);
    ok(&out);
    assert_eq!(fs::read(fx.path("fused.png")).unwrap(), fs::read(fx.path("ir.png")).unwrap());
    for f in ["w/w_ir.pfm", "w/w_vis.pfm", "w/scalars.json", "bf.png"] {
        assert!(fx.path(f).is_file(), "{f}");
    }
    let scalars: Value = serde_json::from_str(&fs::read_to_string(fx.path("w/scalars.json")).unwrap()).unwrap();
    let sum = scalars["p_ir"].as_f64().unwrap() + scalars["p_vis"].as_f64().unwrap();
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn fuse_rejects_bad_flags() {
    let fx = Fixture::new();
    let base = ["fuse", "--ir", &fx.arg("ir.png"), "--vis", &fx.arg("vis.png"), "--out", &fx.arg("f.png")];
    for extra in [
        &["--feature-bank", "vgg"][..],
        &["--feature-bank", "file:/nonexistent/bank.json"],
        &["--alpha", "2"],
        &["--softmax-c", "0"],
        &["--weight-rule", "sideways"],
    ] {
        let args: Vec<&str> = base.iter().copied().chain(extra.iter().copied()).collect();
        assert!(!textfuse(&args).status.success(), "{extra:?}");
    }
    let out = textfuse(&["fuse", "--ir", &fx.arg("ir.png"), "--vis", &fx.arg("missing.png"), "--out", &fx.arg("f.png")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.png"));
}

#[tokio::test]
async fn assess_by_text_matches_api_bit_for_bit() {
    let fx = Fixture::new();
    let b_f = InterestMask::from_fn(W, H, person);
    io::save_gray_png(text_guided_reference(&ir(), &vis(), &b_f).unwrap().grid(), fx.path("fused.png")).unwrap();
    let out = textfuse(&[
        "assess", "--fused", &fx.arg("fused.png"), "--ir", &fx.arg("ir.png"), "--vis", &fx.arg("vis.png"),
        "--instances", &fx.arg("inst.png"), "--heatmaps", &fx.arg("heat"), "--text", "a person",
        "--out", &fx.arg("report.json"),
    ]);
    ok(&out);
    let cli = read_report(&fx.path("report.json"));
    let api = api_assess(json!({
        "ir": png_b64(&fx.path("ir.png")),
        "vis": png_b64(&fx.path("vis.png")),
        "fused": png_b64(&fx.path("fused.png")),
        "text": "a person",
        "instances": {"png": png_b64(&fx.path("inst.png")), "classes": {"1": "person"}},
        "heatmaps": {"ir": [InlineHeatmap::from_heatmap(&heat())]},
    }))
    .await;
    assert_eq!(cli, api);
    assert!(cli.c_t > 0.0 && cli.c_t < 1.0);
    assert_eq!(cli.results.len(), 6);
}

#[tokio::test]
async fn assess_by_mask_matches_api_bit_for_bit() {
    let fx = Fixture::new();
    io::save_mask_png(&InterestMask::from_fn(W, H, person), fx.path("bf.png")).unwrap();
    let out = textfuse(&[
        "assess", "--fused", &fx.arg("vis.png"), "--ir", &fx.arg("ir.png"), "--vis", &fx.arg("vis.png"),
        "--mask", &fx.arg("bf.png"), "--heatmaps", &fx.arg("heat"), "--metrics", "qabf,ssim,vif,en",
    ]);
    ok(&out);
    let cli: Assessment = serde_json::from_slice(&out.stdout).unwrap();
    let api = api_assess(json!({
        "ir": png_b64(&fx.path("ir.png")),
        "vis": png_b64(&fx.path("vis.png")),
        "fused": png_b64(&fx.path("vis.png")),
        "mask": png_b64(&fx.path("bf.png")),
        "heatmaps": {"ir": [InlineHeatmap::from_heatmap(&heat())]},
        "metrics": ["qabf", "ssim", "vif", "en"],
    }))
    .await;
    assert_eq!(cli, api);
    assert_eq!(cli.results.len(), 4);
}

#[test]
fn assess_rejects_mask_with_text() {
    let fx = Fixture::new();
    let out = textfuse(&[
        "assess", "--fused", &fx.arg("vis.png"), "--ir", &fx.arg("ir.png"), "--vis", &fx.arg("vis.png"),
        "--mask", &fx.arg("bf.png"), "--text", "person",
    ]);
    assert!(!out.status.success());
}

fn write_batch(fx: &Fixture, broken: bool) -> PathBuf {
    let mut records = vec![json!({
        "id": "p0",
        "ir": "ir.png",
        "vis": "vis.png",
        "instances": "inst.png",
        "descriptions": [{"annotator_class": "group", "sentences": ["A person walks.", "Trees behind."]}]
    })];
    if broken {
        records.push(json!({"id": "p1", "ir": "gone.png", "vis": "vis.png", "descriptions": []}));
    }
    fs::write(fx.path("index.json"), json!({"version": 1, "records": records}).to_string()).unwrap();
    let toml = "dataset_root = \".\"\nindex = \"index.json\"\noutput_dir = \"out\"\nmetrics = [\"ssim\", \"sd\"]\n";
    fs::write(fx.path("run.toml"), toml).unwrap();
    fx.path("run.toml")
}

#[test]
fn batch_succeeds_and_writes_reports() {
    let fx = Fixture::new();
    let cfg = write_batch(&fx, false);
    let out = textfuse(&["batch", "--config", cfg.to_str().unwrap(), "--desc-subset", "1"]);
    ok(&out);
    let report: Value = serde_json::from_str(&fs::read_to_string(fx.path("out/report.json")).unwrap()).unwrap();
    // two one-sentence variants times two metrics
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);
    assert!(fx.path("out/report.csv").is_file());
    assert!(fx.path("out/fused/p0_k1_0.png").is_file());
}

#[test]
fn batch_with_failures_exits_nonzero() {
    let fx = Fixture::new();
    let cfg = write_batch(&fx, true);
    let out = textfuse(&["batch", "--config", cfg.to_str().unwrap(), "--out", &fx.arg("elsewhere")]);
    assert!(!out.status.success());
    let report: Value = serde_json::from_str(&fs::read_to_string(fx.path("elsewhere/report.json")).unwrap()).unwrap();
    assert_eq!(report["failures"][0]["pair_id"], json!("p1"));
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn serve_fails_fast_on_bad_setup() {
    let fx = Fixture::new();
    let out = textfuse(&["serve", "--ui-dir", &fx.arg("no-ui"), "--bind", "127.0.0.1:0"]);
    assert!(!out.status.success());
    let out = textfuse(&["serve", "--dataset-root", &fx.arg("no-data"), "--bind", "127.0.0.1:0"]);
    assert!(!out.status.success());
    let out = textfuse(&["serve", "--workers", "0", "--bind", "127.0.0.1:0"]);
    assert!(!out.status.success());
}
