//! Request payloads, response bodies, and the blocking work behind each route.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use textfuse_core::assessment::{self, Assessment, ConfidenceMode, Metric};
use textfuse_core::association::{HeatmapSource, InstanceOverlap, TextQuery};
use textfuse_core::dataset::AnnotationRecord;
use textfuse_core::fusion::WeightRule;
use textfuse_core::io::{self, Raster};
use textfuse_core::pipeline::{self, PairInputs, PipelineConfig};
use textfuse_core::{GrayImage, Grid, HeatMap, InstanceMap};

use crate::error::ApiError;
use crate::AppState;

/// Longest accepted text query, in characters.
pub const MAX_TEXT_CHARS: usize = 2048;
/// Largest accepted inline image after base64 decoding.
pub const MAX_IMAGE_BYTES: usize = 8 * 1024 * 1024;

/// Body of every POST route. A pair is given either by `pair_id` or by both
/// inline images.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
    /// Base64 PNG or PNM.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vis: Option<String>,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub softmax_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_rule: Option<WeightRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<ConfidenceMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<Metric>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<InlineInstances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmaps: Option<InlineHeatmaps>,
    /// Fused image to assess.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fused: Option<String>,
    /// Explicit interest map for assessment; replaces text association.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

/// Label image (8/16-bit gray PNG) plus its id-to-class table.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineInstances {
    pub png: String,
    #[serde(default)]
    pub classes: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineHeatmaps {
    #[serde(default)]
    pub ir: Vec<InlineHeatmap>,
    #[serde(default)]
    pub vis: Vec<InlineHeatmap>,
}

/// Row-major heat map, possibly at patch resolution.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineHeatmap {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl InlineHeatmap {
    pub fn from_heatmap(m: &HeatMap) -> Self {
        InlineHeatmap {
            label: m.label().map(str::to_string),
            width: m.width(),
            height: m.height(),
            data: m.as_slice().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociateResponse {
    /// Base64 PNGs.
    pub b_f: String,
    pub b_hat: String,
    pub m_hat_ir: String,
    pub m_hat_vis: String,
    pub c_t: f64,
    pub nouns: Vec<String>,
    pub overlaps: Vec<InstanceOverlap>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub p_ir: f64,
    pub p_vis: f64,
    pub im_ir: f64,
    pub im_vis: f64,
    /// Mean pixel weights inside the interest region; absent when it is empty.
    pub mean_w_ir: Option<f64>,
    pub mean_w_vis: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuseResponse {
    /// Base64 PNG; color when the visible input is color.
    pub fused: String,
    pub b_f: String,
    pub weights: WeightSummary,
    pub c_t: f64,
    pub nouns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub id: String,
    pub description: String,
    pub has_instances: bool,
    pub has_heatmaps: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairsResponse {
    pub pairs: Vec<PairSummary>,
    pub failures: Vec<textfuse_core::dataset::RecordFailure>,
}

pub fn parse_payload(body: &[u8]) -> Result<Payload, ApiError> {
    let p: Payload = serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid payload: {e}")))?;
    if p.text.chars().count() > MAX_TEXT_CHARS {
        return Err(ApiError::BadRequest(format!("text longer than {MAX_TEXT_CHARS} characters")));
    }
    Ok(p)
}

pub fn encode_b64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

/// Decode base64, tolerating a `data:` URL prefix.
pub fn decode_b64(field: &str, value: &str) -> Result<Vec<u8>, ApiError> {
    let raw = match value.split_once(";base64,") {
        Some((prefix, rest)) if prefix.starts_with("data:") => rest,
        _ => value,
    };
    if raw.len() > MAX_IMAGE_BYTES / 3 * 4 + 8 {
        return Err(too_large(field));
    }
    let bytes = STANDARD
        .decode(raw.trim())
        .map_err(|e| ApiError::BadRequest(format!("`{field}` is not valid base64: {e}")))?;
    if bytes.len() > MAX_IMAGE_BYTES {
        return Err(too_large(field));
    }
    Ok(bytes)
}

fn too_large(field: &str) -> ApiError {
    ApiError::BadRequest(format!("`{field}` exceeds {MAX_IMAGE_BYTES} bytes"))
}

fn decode_image(field: &str, value: &str) -> Result<Raster, ApiError> {
    let bytes = decode_b64(field, value)?;
    io::decode_raster(&bytes, Path::new(field)).map_err(|e| ApiError::Unprocessable(e.to_string()))
}

fn png(result: textfuse_core::Result<Vec<u8>>) -> Result<String, ApiError> {
    result.map(|b| encode_b64(&b)).map_err(|e| ApiError::Internal(e.to_string()))
}

fn inline_heatmaps(maps: &[InlineHeatmap]) -> Result<Vec<HeatMap>, ApiError> {
    maps.iter()
        .map(|m| {
            let grid = Grid::new(m.width, m.height, m.data.clone())
                .map_err(|e| ApiError::BadRequest(format!("heat map: {e}")))?;
            Ok(HeatMap::new(grid, m.label.clone()))
        })
        .collect()
}

fn inline_instances(inst: &InlineInstances) -> Result<InstanceMap, ApiError> {
    let classes = inst
        .classes
        .iter()
        .map(|(k, v)| {
            k.parse::<u16>()
                .map(|id| (id, v.to_lowercase()))
                .map_err(|_| ApiError::BadRequest(format!("instance id {k:?} is not a 16-bit integer")))
        })
        .collect::<Result<BTreeMap<_, _>, _>>()?;
    let bytes = decode_b64("instances.png", &inst.png)?;
    io::decode_instance_map(&bytes, classes, Path::new("instances.png")).map_err(ApiError::from_input)
}

/// Resolved pair plus the visible raster for color reconstruction.
struct Pair {
    inputs: PairInputs,
    vis: Raster,
}

fn resolve_pair(state: &AppState, p: &Payload) -> Result<Pair, ApiError> {
    let mut pair = match (&p.pair_id, &p.ir, &p.vis) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(ApiError::BadRequest("give either `pair_id` or inline images, not both".into()))
        }
        (Some(id), None, None) => {
            let record: &AnnotationRecord = state
                .records
                .get(id)
                .ok_or_else(|| ApiError::NotFound(format!("unknown pair id {id:?}")))?;
            let (inputs, vis) = record.load_inputs().map_err(ApiError::from_server)?;
            Pair { inputs, vis }
        }
        (None, Some(ir), Some(vis)) => {
            let ir = decode_image("ir", ir)?.luminance();
            let vis = decode_image("vis", vis)?;
            let inputs = PairInputs::new(ir, vis.luminance()).map_err(ApiError::from_input)?;
            Pair { inputs, vis }
        }
        _ => return Err(ApiError::BadRequest("need `pair_id` or both `ir` and `vis`".into())),
    };
    if let Some(inst) = &p.instances {
        pair.inputs = pair.inputs.with_instances(inline_instances(inst)?).map_err(ApiError::from_input)?;
    }
    if let Some(h) = &p.heatmaps {
        pair.inputs = pair.inputs.with_heatmaps(HeatmapSource::Supplied {
            ir: inline_heatmaps(&h.ir)?,
            vis: inline_heatmaps(&h.vis)?,
        });
    }
    Ok(pair)
}

fn config(state: &AppState, p: &Payload) -> Result<PipelineConfig, ApiError> {
    let mut cfg = state.pipeline.clone();
    if let Some(a) = p.alpha {
        cfg.association.alpha = a;
    }
    if let Some(t) = p.bin_threshold {
        cfg.association.bin_threshold = t;
    }
    if let Some(c) = p.softmax_c {
        if !(c.is_finite() && c > 0.0) {
            return Err(ApiError::BadRequest("softmax_c must be positive".into()));
        }
        cfg.salience.softmax_c = c;
    }
    if let Some(r) = p.weight_rule {
        cfg.weight_rule = r;
    }
    if let Some(m) = p.confidence {
        cfg.confidence = m;
    }
    cfg.association.validate().map_err(ApiError::from_input)?;
    Ok(cfg)
}

fn reject_assess_fields(p: &Payload) -> Result<(), ApiError> {
    if p.fused.is_some() || p.mask.is_some() {
        return Err(ApiError::BadRequest("`fused` and `mask` are only accepted by /assess".into()));
    }
    Ok(())
}

fn nouns(text: &str, cfg: &PipelineConfig) -> Vec<String> {
    TextQuery::parse(text, &cfg.association.lexicon).nouns
}

pub(crate) fn associate(state: &AppState, p: Payload) -> Result<AssociateResponse, ApiError> {
    reject_assess_fields(&p)?;
    let cfg = config(state, &p)?;
    let pair = resolve_pair(state, &p)?;
    let a = pipeline::run_association(&pair.inputs, &p.text, &cfg).map_err(ApiError::from_input)?;
    let c_t = assessment::confidence(&a.b_f, &a.b_hat, &a.m_hat_ir, &a.m_hat_vis, cfg.confidence)
        .map_err(ApiError::from_input)?;
    Ok(AssociateResponse {
        b_f: png(io::encode_mask_png(&a.b_f))?,
        b_hat: png(io::encode_mask_png(&a.b_hat))?,
        m_hat_ir: png(io::encode_gray_png(a.m_hat_ir.grid()))?,
        m_hat_vis: png(io::encode_gray_png(a.m_hat_vis.grid()))?,
        c_t,
        nouns: nouns(&p.text, &cfg),
        overlaps: a.overlaps,
    })
}

fn region_mean(w: &Grid, mask: &textfuse_core::InterestMask) -> Option<f64> {
    let n = mask.count();
    if n == 0 {
        return None;
    }
    let s: f64 = w
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &m)| m)
        .map(|(v, _)| v)
        .sum();
    Some(s / n as f64)
}

pub(crate) fn fuse(state: &AppState, p: Payload) -> Result<FuseResponse, ApiError> {
    reject_assess_fields(&p)?;
    let cfg = config(state, &p)?;
    let pair = resolve_pair(state, &p)?;
    let out = pipeline::fuse_pair(&pair.inputs, &p.text, &cfg).map_err(ApiError::from_input)?;
    let a = &out.association;
    let c_t = assessment::confidence(&a.b_f, &a.b_hat, &a.m_hat_ir, &a.m_hat_vis, cfg.confidence)
        .map_err(ApiError::from_input)?;
    let fused = match &pair.vis {
        Raster::Gray(_) => png(io::encode_gray_png(out.fused.grid()))?,
        Raster::Color(c) => {
            let color = c.with_luminance(&out.fused).map_err(ApiError::from_input)?;
            png(io::encode_color_png(&color))?
        }
    };
    let w = &out.salience.weights;
    Ok(FuseResponse {
        fused,
        b_f: png(io::encode_mask_png(&a.b_f))?,
        weights: WeightSummary {
            p_ir: w.p_ir,
            p_vis: w.p_vis,
            im_ir: out.salience.im_ir.value,
            im_vis: out.salience.im_vis.value,
            mean_w_ir: region_mean(&w.w_ir, &a.b_f),
            mean_w_vis: region_mean(&w.w_vis, &a.b_f),
        },
        c_t,
        nouns: nouns(&p.text, &cfg),
    })
}

pub(crate) fn assess(state: &AppState, p: Payload) -> Result<Assessment, ApiError> {
    let fused_b64 = p
        .fused
        .as_deref()
        .ok_or_else(|| ApiError::BadRequest("`fused` image is required".into()))?;
    let metrics = p.metrics.clone().unwrap_or_else(|| Metric::ALL.to_vec());
    if metrics.is_empty() {
        return Err(ApiError::BadRequest("`metrics` is empty".into()));
    }
    let cfg = config(state, &p)?;
    let pair = resolve_pair(state, &p)?;
    let fused: GrayImage = decode_image("fused", fused_b64)?.luminance();
    if fused.extent() != pair.inputs.ir.extent() {
        return Err(ApiError::Unprocessable(format!(
            "fused extent {:?} differs from source extent {:?}",
            fused.extent(),
            pair.inputs.ir.extent()
        )));
    }
    let evidence = match &p.mask {
        Some(m) => {
            let bytes = decode_b64("mask", m)?;
            let b_f = io::decode_mask(&bytes, Path::new("mask")).map_err(ApiError::from_input)?;
            if b_f.extent() != fused.extent() {
                return Err(ApiError::Unprocessable("mask extent differs from source extent".into()));
            }
            let (ir_maps, vis_maps) = match &pair.inputs.heatmaps {
                HeatmapSource::Supplied { ir, vis } => (ir.clone(), vis.clone()),
                HeatmapSource::Proxy => (Vec::new(), Vec::new()),
            };
            pipeline::explicit_evidence(b_f, &ir_maps, &vis_maps, cfg.association.bin_threshold)
                .map_err(ApiError::from_input)?
        }
        None => {
            let a = pipeline::run_association(&pair.inputs, &p.text, &cfg).map_err(ApiError::from_input)?;
            pipeline::evidence_of(&a)
        }
    };
    assessment::assess(&fused, &pair.inputs.ir, &pair.inputs.vis, &evidence, &metrics, cfg.confidence)
        .map_err(ApiError::from_input)
}

pub(crate) fn pairs(state: &AppState) -> PairsResponse {
    PairsResponse {
        pairs: state
            .records
            .values()
            .map(|r| PairSummary {
                id: r.id.clone(),
                description: r.full_description(),
                has_instances: r.instances.is_some(),
                has_heatmaps: r.heatmaps.is_some(),
            })
            .collect(),
        failures: state.failures.clone(),
    }
}

/// A source image of a dataset pair, re-encoded as PNG.
pub(crate) fn pair_image(state: &AppState, id: &str, modality: &str) -> Result<Vec<u8>, ApiError> {
    let record = state
        .records
        .get(id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown pair id {id:?}")))?;
    let path = match modality {
        "ir" => &record.ir,
        "vis" => &record.vis,
        other => return Err(ApiError::NotFound(format!("unknown modality {other:?}"))),
    };
    let raster = io::load_raster(path).map_err(ApiError::from_server)?;
    let bytes = match raster {
        Raster::Gray(g) => io::encode_gray_png(g.grid()),
        Raster::Color(c) => io::encode_color_png(&c),
    };
    bytes.map_err(ApiError::from_server)
}
