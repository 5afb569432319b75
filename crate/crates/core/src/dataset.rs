//! Annotation ingestion, batch runs, and assessment reports.
//!
//! # Annotation index
//!
//! A single JSON document; paths are relative to the index file's directory
//! unless absolute.
//!
//! ```json
//! {
//!   "version": 1,
//!   "records": [
//!     {
//!       "id": "0001",
//!       "ir": "ir/0001.png",
//!       "vis": "vis/0001.png",
//!       "descriptions": [
//!         { "annotator_class": "group", "sentences": ["A person walks.", "A car is parked."] }
//!       ],
//!       "heatmaps": "heatmaps/0001",
//!       "instances": "instances/0001.png"
//!     }
//!   ]
//! }
//! ```
//!
//! `annotator_class` is one of `group`, `specialist`, `nonspecialist`; each
//! description holds one to three sentences. `heatmaps` names a directory in
//! the layout read by [`crate::io::load_heatmap_dir`]; `instances` names an
//! instance PNG with its class sidecar. Ids may contain ASCII letters, digits,
//! `-`, `_` and `.`.
//!
//! # Output layout
//!
//! ```text
//! OUT/report.json
//! OUT/report.csv
//! OUT/fused/<id>.png           one per pair (or <id>_k<k>_<i>.png with a subset size)
//! OUT/masks/<id>.png           with dump_masks
//! OUT/weights/<id>_w_ir.pfm    with dump_weights, plus <id>_w_vis.pfm
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assessment::{mean_rank, Metric, MetricResult, ScoreTable};
use crate::association::{AssociationConfig, HeatmapSource};
use crate::error::{Error, Result};
use crate::fusion::WeightRule;
use crate::assessment::ConfidenceMode;
use crate::io::{self, Raster};
use crate::par;
use crate::pipeline::{self, PairInputs, PipelineConfig};
use crate::salience::{FilterBank, SalienceConfig};

pub const INDEX_VERSION: u32 = 1;
pub const REPORT_VERSION: u32 = 1;
pub const MAX_SENTENCES: usize = 3;

/// Column order of `report.csv`.
pub const CSV_COLUMNS: [&str; 9] = ["pair_id", "variant", "metric", "q_o", "q_plus", "c_t", "w_o", "fused", "text"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatorClass {
    Group,
    Specialist,
    Nonspecialist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Description {
    pub annotator_class: AnnotatorClass,
    pub sentences: Vec<String>,
}

/// A validated record with resolved paths.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationRecord {
    pub id: String,
    pub ir: PathBuf,
    pub vis: PathBuf,
    pub descriptions: Vec<Description>,
    pub heatmaps: Option<PathBuf>,
    pub instances: Option<PathBuf>,
}

impl AnnotationRecord {
    /// Sentences of the first description.
    pub fn sentences(&self) -> &[String] {
        self.descriptions.first().map(|d| d.sentences.as_slice()).unwrap_or_default()
    }

    pub fn full_description(&self) -> String {
        self.sentences().join(" ")
    }

    pub fn load_inputs(&self) -> Result<(PairInputs, Raster)> {
        let vis_raster = io::load_raster(&self.vis)?;
        let ir = io::load_raster(&self.ir)?.luminance();
        let vis = vis_raster.luminance();
        let mut inputs = PairInputs::new(ir, vis)?;
        if let Some(p) = &self.instances {
            inputs = inputs.with_instances(io::load_instance_map(p)?)?;
        }
        if let Some(dir) = &self.heatmaps {
            let set = io::load_heatmap_dir(dir)?;
            inputs = inputs.with_heatmaps(HeatmapSource::Supplied { ir: set.ir, vis: set.vis });
        }
        Ok((inputs, vis_raster))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIndex {
    version: u32,
    records: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    ir: PathBuf,
    vis: PathBuf,
    descriptions: Vec<Description>,
    #[serde(default)]
    heatmaps: Option<PathBuf>,
    #[serde(default)]
    instances: Option<PathBuf>,
}

fn schema(record: &str, field: &str, reason: impl Into<String>) -> Error {
    Error::Schema {
        record: record.to_string(),
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn parse_record(value: serde_json::Value, position: usize, base: &Path) -> Result<AnnotationRecord> {
    let label = value
        .get("id")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .unwrap_or_else(|| format!("#{position}"));
    let raw: RawRecord = serde_json::from_value(value).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("field"))
            .unwrap_or("record")
            .to_string();
        schema(&label, &field, msg)
    })?;
    if !valid_id(&raw.id) {
        return Err(schema(&label, "id", "ids may contain only ASCII letters, digits, '-', '_' and '.'"));
    }
    if raw.descriptions.is_empty() {
        return Err(schema(&raw.id, "descriptions", "at least one description is required"));
    }
    for (i, d) in raw.descriptions.iter().enumerate() {
        let n = d.sentences.len();
        if n == 0 || n > MAX_SENTENCES {
            return Err(schema(
                &raw.id,
                &format!("descriptions[{i}].sentences"),
                format!("expected 1 to {MAX_SENTENCES} sentences, found {n}"),
            ));
        }
    }
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    Ok(AnnotationRecord {
        ir: resolve(&raw.ir),
        vis: resolve(&raw.vis),
        heatmaps: raw.heatmaps.as_deref().map(resolve),
        instances: raw.instances.as_deref().map(resolve),
        id: raw.id,
        descriptions: raw.descriptions,
    })
}

fn check_paths(r: &AnnotationRecord) -> Result<()> {
    let files = [Some(&r.ir), Some(&r.vis), r.instances.as_ref()];
    for p in files.into_iter().flatten() {
        if !p.is_file() {
            return Err(Error::PathResolution {
                record: r.id.clone(),
                path: p.clone(),
            });
        }
    }
    if let Some(dir) = &r.heatmaps {
        if !dir.is_dir() {
            return Err(Error::PathResolution {
                record: r.id.clone(),
                path: dir.clone(),
            });
        }
    }
    Ok(())
}

/// Parse an index, keeping per-record failures separate. The outer error is
/// reserved for an unreadable or malformed document.
pub fn load_annotations_lenient(index: impl AsRef<Path>) -> Result<(Vec<AnnotationRecord>, Vec<RecordFailure>)> {
    let index = index.as_ref();
    let text = fs::read_to_string(index).map_err(|e| Error::io(index, e))?;
    let raw: RawIndex = serde_json::from_str(&text).map_err(|e| Error::MalformedIndex {
        path: index.to_path_buf(),
        reason: e.to_string(),
    })?;
    if raw.version != INDEX_VERSION {
        return Err(Error::MalformedIndex {
            path: index.to_path_buf(),
            reason: format!("unsupported version {}", raw.version),
        });
    }
    let base = index.parent().unwrap_or(Path::new("."));
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, value) in raw.records.into_iter().enumerate() {
        let parsed = parse_record(value, i, base).and_then(|r| {
            if !seen.insert(r.id.clone()) {
                return Err(schema(&r.id, "id", "duplicate id"));
            }
            check_paths(&r)?;
            Ok(r)
        });
        match parsed {
            Ok(r) => records.push(r),
            Err(e) => failures.push(RecordFailure {
                pair_id: failure_id(&e, i),
                error: e.to_string(),
            }),
        }
    }
    Ok((records, failures))
}

fn failure_id(e: &Error, position: usize) -> String {
    match e {
        Error::Schema { record, .. } | Error::PathResolution { record, .. } => record.clone(),
        _ => format!("#{position}"),
    }
}

/// Parse and validate an index; the first bad record is an error.
pub fn load_annotations(index: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let index = index.as_ref();
    let text = fs::read_to_string(index).map_err(|e| Error::io(index, e))?;
    let raw: RawIndex = serde_json::from_str(&text).map_err(|e| Error::MalformedIndex {
        path: index.to_path_buf(),
        reason: e.to_string(),
    })?;
    if raw.version != INDEX_VERSION {
        return Err(Error::MalformedIndex {
            path: index.to_path_buf(),
            reason: format!("unsupported version {}", raw.version),
        });
    }
    let base = index.parent().unwrap_or(Path::new("."));
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(raw.records.len());
    for (i, value) in raw.records.into_iter().enumerate() {
        let r = parse_record(value, i, base)?;
        if !seen.insert(r.id.clone()) {
            return Err(schema(&r.id, "id", "duplicate id"));
        }
        check_paths(&r)?;
        out.push(r);
    }
    Ok(out)
}

/// Every `k`-subset of `sentences` in original order, joined by spaces.
/// Subsets are listed in lexicographic order of their indices.
pub fn concat_descriptions(sentences: &[String], k: usize) -> Result<Vec<String>> {
    let n = sentences.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("subset size {k} outside 1..={n}")));
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| sentences[i].as_str()).collect::<Vec<_>>().join(" "));
        // advance to the next combination
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return Ok(out);
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn default_parallelism() -> usize {
    1
}

fn default_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

fn default_method() -> String {
    "textfuse".into()
}

/// Batch run settings, usually read from TOML.
///
/// ```toml
/// dataset_root = "data"
/// index = "index.json"          # relative to dataset_root
/// output_dir = "out"
/// parallelism = 4
/// metrics = ["qabf", "ssim", "vif", "sf", "sd", "en"]
/// desc_subset = 2               # optional
/// competitors = ["llvip.csv"]   # optional, relative to the config file
///
/// [association]
/// alpha = 0.5
/// bin_threshold = 0.35
///
/// [fusion]
/// weight_rule = "inside-norm"
/// softmax_c = 1.0
/// confidence = "literal"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub dataset_root: PathBuf,
    pub index: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub desc_subset: Option<usize>,
    #[serde(default)]
    pub association: AssociationConfig,
    #[serde(default)]
    pub fusion: FusionFlags,
    #[serde(default)]
    pub competitors: Vec<PathBuf>,
    /// Name of this run's row in the rank table.
    #[serde(default = "default_method")]
    pub method_name: String,
    #[serde(default)]
    pub dump_masks: bool,
    #[serde(default)]
    pub dump_weights: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionFlags {
    pub weight_rule: WeightRule,
    pub softmax_c: f64,
    pub confidence: ConfidenceMode,
    /// JSON filter bank; the built-in bank when absent.
    pub feature_bank: Option<PathBuf>,
}

impl Default for FusionFlags {
    fn default() -> Self {
        FusionFlags {
            weight_rule: WeightRule::default(),
            softmax_c: 1.0,
            confidence: ConfidenceMode::default(),
            feature_bank: None,
        }
    }
}

impl BatchConfig {
    pub fn new(dataset_root: impl Into<PathBuf>, index: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        BatchConfig {
            dataset_root: dataset_root.into(),
            index: index.into(),
            output_dir: output_dir.into(),
            parallelism: 1,
            metrics: default_metrics(),
            desc_subset: None,
            association: AssociationConfig::default(),
            fusion: FusionFlags::default(),
            competitors: Vec::new(),
            method_name: default_method(),
            dump_masks: false,
            dump_weights: false,
        }
    }

    /// Read a TOML config. Relative paths are taken from the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: BatchConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.dataset_root);
        rebase(&mut cfg.output_dir);
        cfg.competitors.iter_mut().for_each(rebase);
        if let Some(bank) = cfg.fusion.feature_bank.as_mut() {
            rebase(bank);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("no metrics selected".into()));
        }
        if self.desc_subset == Some(0) {
            return Err(Error::Config("desc_subset must be at least 1".into()));
        }
        if !(self.fusion.softmax_c.is_finite() && self.fusion.softmax_c > 0.0) {
            return Err(Error::Config("softmax_c must be positive".into()));
        }
        self.association.validate()
    }

    pub fn index_path(&self) -> PathBuf {
        if self.index.is_absolute() {
            self.index.clone()
        } else {
            self.dataset_root.join(&self.index)
        }
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let bank = match &self.fusion.feature_bank {
            Some(p) => FilterBank::load(p)?,
            None => FilterBank::default(),
        };
        Ok(PipelineConfig {
            association: self.association.clone(),
            salience: SalienceConfig {
                bank,
                softmax_c: self.fusion.softmax_c,
                ..SalienceConfig::default()
            },
            weight_rule: self.fusion.weight_rule,
            confidence: self.fusion.confidence,
        })
    }
}

/// One (pair, description variant, metric) result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub pair_id: String,
    pub variant: usize,
    pub text: String,
    /// Fused image path relative to the output directory.
    pub fused: String,
    pub metric: Metric,
    pub q_o: f64,
    pub q_plus: Option<f64>,
    pub c_t: f64,
    pub w_o: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub pair_id: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricMean {
    pub metric: Metric,
    pub q_o: f64,
    pub q_plus: Option<f64>,
}

/// A competitor's published scores keyed by column label (`SSIM`, `SSIM+`, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitorScores {
    pub method: String,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRank {
    pub method: String,
    pub mrank: f64,
    pub mrank_plus: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub means: Vec<MetricMean>,
    pub competitors: Vec<CompetitorScores>,
    /// Empty unless competitor scores were supplied.
    pub ranks: Vec<MethodRank>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub version: u32,
    pub method: String,
    pub metrics: Vec<Metric>,
    pub rows: Vec<ReportRow>,
    pub failures: Vec<RecordFailure>,
    pub aggregate: Aggregate,
}

impl AssessmentReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidData(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: AssessmentReport = serde_json::from_str(text).map_err(|e| Error::InvalidData(e.to_string()))?;
        if r.version != REPORT_VERSION {
            return Err(Error::InvalidData(format!("unsupported report version {}", r.version)));
        }
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Rows as CSV with the columns of [`CSV_COLUMNS`]. An absent plus score
    /// is an empty field.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::InvalidData(e.to_string());
        w.write_record(CSV_COLUMNS).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.pair_id.clone(),
                r.variant.to_string(),
                r.metric.label().to_string(),
                r.q_o.to_string(),
                r.q_plus.map(|v| v.to_string()).unwrap_or_default(),
                r.c_t.to_string(),
                r.w_o.to_string(),
                r.fused.clone(),
                r.text.clone(),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidData(e.to_string()))
    }

    /// Recompute the aggregate block from the rows and stored competitors.
    pub fn recompute_aggregate(&self) -> Result<Aggregate> {
        aggregate(&self.rows, &self.metrics, &self.method, self.aggregate.competitors.clone())
    }

    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Means over rows (in row order) and, with competitors, mean ranks over the
/// reference metrics: plain labels for `mrank`, plus labels for `mrank_plus`.
pub fn aggregate(
    rows: &[ReportRow],
    metrics: &[Metric],
    method: &str,
    competitors: Vec<CompetitorScores>,
) -> Result<Aggregate> {
    let mut means = Vec::with_capacity(metrics.len());
    for &m in metrics {
        let (mut so, mut sp, mut n, mut np) = (0.0, 0.0, 0usize, 0usize);
        for r in rows.iter().filter(|r| r.metric == m) {
            so += r.q_o;
            n += 1;
            if let Some(p) = r.q_plus {
                sp += p;
                np += 1;
            }
        }
        if n == 0 {
            continue;
        }
        means.push(MetricMean {
            metric: m,
            q_o: so / n as f64,
            q_plus: (np > 0).then(|| sp / np as f64),
        });
    }
    let ranks = if competitors.is_empty() || means.is_empty() {
        Vec::new()
    } else {
        rank_methods(&means, method, &competitors)?
    };
    Ok(Aggregate {
        means,
        competitors,
        ranks,
    })
}

fn rank_methods(means: &[MetricMean], method: &str, competitors: &[CompetitorScores]) -> Result<Vec<MethodRank>> {
    let mut plain: Vec<String> = Vec::new();
    let mut plus: Vec<String> = Vec::new();
    let mut own: BTreeMap<String, f64> = BTreeMap::new();
    for m in means.iter().filter(|m| m.metric.is_reference()) {
        plain.push(m.metric.label().to_string());
        own.insert(m.metric.label().to_string(), m.q_o);
        if let (Some(label), Some(v)) = (m.metric.plus_label(), m.q_plus) {
            plus.push(label.clone());
            own.insert(label, v);
        }
    }
    if plain.is_empty() {
        return Ok(Vec::new());
    }
    let mut labels = plain.clone();
    labels.extend(plus.iter().cloned());
    let row_of = |scores: &BTreeMap<String, f64>, who: &str| -> Result<Vec<f64>> {
        labels
            .iter()
            .map(|l| {
                scores
                    .get(l)
                    .copied()
                    .ok_or_else(|| Error::MissingMetric(format!("{who} has no {l} score")))
            })
            .collect()
    };
    let mut table = ScoreTable::new(Vec::new(), labels.clone(), Vec::new())?;
    table.push(method, row_of(&own, method)?)?;
    for c in competitors {
        table.push(c.method.clone(), row_of(&c.scores, &c.method)?)?;
    }
    let plain_refs: Vec<&str> = plain.iter().map(String::as_str).collect();
    let plus_refs: Vec<&str> = plus.iter().map(String::as_str).collect();
    let mrank = mean_rank(&table, &plain_refs)?;
    let mrank_plus = if plus_refs.is_empty() {
        None
    } else {
        Some(mean_rank(&table, &plus_refs)?)
    };
    Ok(table
        .methods()
        .iter()
        .enumerate()
        .map(|(i, m)| MethodRank {
            method: m.clone(),
            mrank: mrank[i],
            mrank_plus: mrank_plus.as_ref().map(|v| v[i]),
        })
        .collect())
}

/// Read a competitor CSV (`method,<label>,...`).
pub fn load_competitors(path: impl AsRef<Path>) -> Result<Vec<CompetitorScores>> {
    let table = ScoreTable::load_csv(path)?;
    Ok(table
        .methods()
        .iter()
        .enumerate()
        .map(|(i, m)| CompetitorScores {
            method: m.clone(),
            scores: table
                .metrics()
                .iter()
                .enumerate()
                .map(|(j, l)| (l.clone(), table.score(i, j)))
                .collect(),
        })
        .collect())
}

struct Variant {
    index: usize,
    text: String,
    file: String,
}

fn variants(record: &AnnotationRecord, subset: Option<usize>) -> Result<Vec<Variant>> {
    match subset {
        None => Ok(vec![Variant {
            index: 0,
            text: record.full_description(),
            file: format!("{}.png", record.id),
        }]),
        Some(k) => {
            let texts = concat_descriptions(record.sentences(), k).map_err(|e| schema(&record.id, "sentences", e.to_string()))?;
            Ok(texts
                .into_iter()
                .enumerate()
                .map(|(i, text)| Variant {
                    index: i,
                    text,
                    file: format!("{}_k{k}_{i}.png", record.id),
                })
                .collect())
        }
    }
}

fn run_record(record: &AnnotationRecord, cfg: &BatchConfig, pipeline: &PipelineConfig) -> Result<Vec<ReportRow>> {
    let (inputs, vis_raster) = record.load_inputs()?;
    let out = &cfg.output_dir;
    let mut rows = Vec::new();
    for v in variants(record, cfg.desc_subset)? {
        let (outcome, scores) = pipeline::fuse_and_assess(&inputs, &v.text, &cfg.metrics, pipeline)?;
        let rel = format!("fused/{}", v.file);
        match &vis_raster {
            Raster::Color(c) => io::save_color_png(&c.with_luminance(&outcome.fused)?, out.join(&rel))?,
            Raster::Gray(_) => io::save_gray_png(outcome.fused.grid(), out.join(&rel))?,
        }
        if cfg.dump_masks {
            io::save_mask_png(&outcome.association.b_f, out.join("masks").join(&v.file))?;
        }
        if cfg.dump_weights {
            let stem = v.file.trim_end_matches(".png");
            let w = &outcome.salience.weights;
            write_file(&out.join("weights").join(format!("{stem}_w_ir.pfm")), &io::encode_pfm(&w.w_ir))?;
            write_file(&out.join("weights").join(format!("{stem}_w_vis.pfm")), &io::encode_pfm(&w.w_vis))?;
        }
        rows.extend(scores.results.into_iter().map(|r: MetricResult| ReportRow {
            pair_id: record.id.clone(),
            variant: v.index,
            text: v.text.clone(),
            fused: rel.clone(),
            metric: r.metric,
            q_o: r.q_o,
            q_plus: r.q_plus,
            c_t: r.c_t,
            w_o: r.w_o,
        }));
    }
    Ok(rows)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Fuse and assess every record, write outputs, and return the report.
///
/// Record failures land in [`AssessmentReport::failures`] instead of
/// aborting. The report depends only on the config and the data, not on
/// `parallelism`.
pub fn run_batch(cfg: &BatchConfig) -> Result<AssessmentReport> {
    cfg.validate()?;
    let pipeline = cfg.pipeline()?;
    let mut competitors = Vec::new();
    for p in &cfg.competitors {
        competitors.extend(load_competitors(p)?);
    }
    let (mut records, mut failures) = load_annotations_lenient(cfg.index_path())?;
    records.sort_by(|a, b| a.id.cmp(&b.id));
    for dir in ["fused", "masks", "weights"] {
        if dir == "fused" || (dir == "masks" && cfg.dump_masks) || (dir == "weights" && cfg.dump_weights) {
            let d = cfg.output_dir.join(dir);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
    }
    let outcomes = par::with_threads(cfg.parallelism, || {
        par::map_slice(&records, |r| run_record(r, cfg, &pipeline))
    });
    let mut rows = Vec::new();
    for (record, outcome) in records.iter().zip(outcomes) {
        match outcome {
            Ok(r) => rows.extend(r),
            Err(e) => failures.push(RecordFailure {
                pair_id: record.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    failures.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    let aggregate = aggregate(&rows, &cfg.metrics, &cfg.method_name, competitors)?;
    let report = AssessmentReport {
        version: REPORT_VERSION,
        method: cfg.method_name.clone(),
        metrics: cfg.metrics.clone(),
        rows,
        failures,
        aggregate,
    };
    write_file(&cfg.output_dir.join("report.json"), report.to_json()?.as_bytes())?;
    write_file(&cfg.output_dir.join("report.csv"), report.to_csv()?.as_bytes())?;
    Ok(report)
}
