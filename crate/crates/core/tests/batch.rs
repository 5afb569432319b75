mod common;

use std::fs;
use std::path::Path;

use common::write_toy_dataset;
use textfuse_core::assessment::Metric;
use textfuse_core::dataset::{load_annotations, run_batch, AssessmentReport, BatchConfig};
use textfuse_core::Error;

fn config(root: &Path, out: &Path) -> BatchConfig {
    BatchConfig::new(root, "index.json", out)
}

#[test]
fn three_pair_run() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_toy_dataset(data.path(), 3, 24);
    let report = run_batch(&config(data.path(), out.path())).unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    assert_eq!(report.rows.len(), 3 * Metric::ALL.len());
    assert_eq!(report.aggregate.means.len(), Metric::ALL.len());
    for row in &report.rows {
        assert!(out.path().join(&row.fused).is_file(), "{}", row.fused);
        assert_eq!(row.q_plus.is_some(), row.metric.is_reference());
        assert!(row.c_t > 0.0, "person text should ground in {}", row.pair_id);
    }
    assert!(out.path().join("report.json").is_file());
    let csv = fs::read_to_string(out.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("pair_id,variant,metric,q_o,q_plus,c_t,w_o,fused,text\n"));
    assert_eq!(csv.lines().count(), 1 + report.rows.len());
}

#[test]
fn parallelism_does_not_change_report() {
    let data = tempfile::tempdir().unwrap();
    write_toy_dataset(data.path(), 4, 24);
    let (o1, o4) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = config(data.path(), o1.path());
    run_batch(&cfg).unwrap();
    cfg.output_dir = o4.path().to_path_buf();
    cfg.parallelism = 4;
    run_batch(&cfg).unwrap();
    for f in ["report.json", "report.csv", "fused/pair00.png", "fused/pair03.png"] {
        assert_eq!(fs::read(o1.path().join(f)).unwrap(), fs::read(o4.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn empty_dataset() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    fs::write(data.path().join("index.json"), r#"{"version": 1, "records": []}"#).unwrap();
    let report = run_batch(&config(data.path(), out.path())).unwrap();
    assert!(report.rows.is_empty() && report.failures.is_empty());
    assert!(report.aggregate.means.is_empty());
}

#[test]
fn corrupt_record_is_isolated() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_toy_dataset(data.path(), 3, 24);
    fs::write(data.path().join("vis/pair01.png"), b"not a png").unwrap();
    let report = run_batch(&config(data.path(), out.path())).unwrap();
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].pair_id, "pair01");
    assert_eq!(report.rows.len(), 2 * Metric::ALL.len());
    assert!(report.has_failures());
}

#[test]
fn reload_then_aggregate() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_toy_dataset(data.path(), 3, 24);
    let csv = data.path().join("others.csv");
    fs::write(&csv, "method,Qabf,SSIM,VIF,Qabf+,SSIM+,VIF+\nbaseline,0.3,0.4,0.3,0.3,0.4,0.3\n").unwrap();
    let mut cfg = config(data.path(), out.path());
    cfg.competitors = vec![csv];
    let report = run_batch(&cfg).unwrap();
    assert_eq!(report.aggregate.ranks.len(), 2);
    let reloaded = AssessmentReport::load(out.path().join("report.json")).unwrap();
    assert_eq!(reloaded, report);
    assert_eq!(reloaded.recompute_aggregate().unwrap(), report.aggregate);
}

#[test]
fn description_subsets() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_toy_dataset(data.path(), 1, 24);
    let mut cfg = config(data.path(), out.path());
    cfg.desc_subset = Some(2);
    cfg.metrics = vec![Metric::Ssim];
    let report = run_batch(&cfg).unwrap();
    let texts: Vec<&str> = report.rows.iter().map(|r| r.text.as_str()).collect();
    assert_eq!(
        texts,
        [
            "A person walks on the road. A car is parked.",
            "A person walks on the road. Trees line the street.",
            "A car is parked. Trees line the street.",
        ]
    );
    assert!(out.path().join("fused/pair00_k2_2.png").is_file());
    // every variant names a person or a car, both present as proxy-grounded instances
    for row in &report.rows {
        assert!((row.c_t - 0.9).abs() < 1e-9, "{}", row.c_t);
    }
}

#[test]
fn dumps_are_written() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_toy_dataset(data.path(), 1, 24);
    let mut cfg = config(data.path(), out.path());
    cfg.dump_masks = true;
    cfg.dump_weights = true;
    run_batch(&cfg).unwrap();
    assert!(out.path().join("masks/pair00.png").is_file());
    assert!(out.path().join("weights/pair00_w_ir.pfm").is_file());
    assert!(out.path().join("weights/pair00_w_vis.pfm").is_file());
}

#[test]
fn index_schema_errors() {
    let data = tempfile::tempdir().unwrap();
    let index = write_toy_dataset(data.path(), 2, 24);
    assert_eq!(load_annotations(&index).unwrap().len(), 2);

    let mut doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&index).unwrap()).unwrap();
    doc["records"][1]["descriptions"][0]["sentences"] = serde_json::json!(["a", "b", "c", "d"]);
    fs::write(&index, doc.to_string()).unwrap();
    match load_annotations(&index) {
        Err(Error::Schema { record, field, .. }) => {
            assert_eq!(record, "pair01");
            assert!(field.contains("sentences"));
        }
        other => panic!("expected schema error, got {other:?}"),
    }

    doc["records"][1]["descriptions"][0]["sentences"] = serde_json::json!(["a"]);
    doc["records"][0]["ir"] = serde_json::json!("ir/missing.png");
    fs::write(&index, doc.to_string()).unwrap();
    match load_annotations(&index) {
        Err(Error::PathResolution { record, path }) => {
            assert_eq!(record, "pair00");
            assert!(path.ends_with("ir/missing.png"));
        }
        other => panic!("expected path error, got {other:?}"),
    }

    doc["records"][0]["ir"] = serde_json::json!("ir/pair00.png");
    doc["records"][0]["descriptions"][0]["annotator_class"] = serde_json::json!("crowd");
    fs::write(&index, doc.to_string()).unwrap();
    assert!(matches!(load_annotations(&index), Err(Error::Schema { .. })));

    fs::write(&index, "{").unwrap();
    assert!(matches!(load_annotations(&index), Err(Error::MalformedIndex { .. })));
}

#[test]
fn toml_config_paths_are_relative_to_file() {
    let data = tempfile::tempdir().unwrap();
    write_toy_dataset(&data.path().join("ds"), 1, 24);
    let path = data.path().join("run.toml");
    fs::write(
        &path,
        "dataset_root = \"ds\"\nindex = \"index.json\"\noutput_dir = \"out\"\nparallelism = 2\nmetrics = [\"ssim\", \"en\"]\n\n[association]\nalpha = 0.4\n\n[fusion]\nweight_rule = \"outside-norm\"\n",
    )
    .unwrap();
    let cfg = BatchConfig::load(&path).unwrap();
    assert_eq!(cfg.association.alpha, 0.4);
    let report = run_batch(&cfg).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(data.path().join("out/report.json").is_file());
    fs::write(&path, "dataset_root = \"ds\"\nindex = \"i\"\noutput_dir = \"o\"\nparallelism = 0\n").unwrap();
    assert!(matches!(BatchConfig::load(&path), Err(Error::Config(_))));
}
