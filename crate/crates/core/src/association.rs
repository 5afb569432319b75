//! Coarse-to-fine association of a text query with image regions.
//!
//! Coarse stage: per-noun heat maps are max-aggregated per modality,
//! binarized, and OR-combined into `b_hat`. Fine stage: every segmentation
//! instance whose overlap ratio with `b_hat` exceeds `alpha` is kept in full;
//! the union of kept instances is the final interest map `b_f`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Grid, HeatMap, InstanceMap, InterestMask};

/// Heat value the proxy assigns to matching instances.
pub const PROXY_HEAT: f64 = 0.9;

pub const DEFAULT_BIN_THRESHOLD: f64 = 0.35;
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Words accepted as nouns when no lexicon is configured.
pub const DEFAULT_LEXICON: &[&str] = &[
    "person", "pedestrian", "people", "man", "men", "woman", "women", "child", "children", "human",
    "car", "bus", "truck", "van", "bicycle", "bike", "motorcycle", "vehicle", "tree", "road",
    "street", "building", "house", "lamp", "light", "sign", "fence", "sky", "dog", "bench", "pole",
    "wall", "window", "door", "grass", "smoke", "boat", "water", "umbrella", "chair", "bag",
];

/// Surface words that denote the same segmentation class.
const ALIASES: &[(&str, &str)] = &[
    ("pedestrian", "person"),
    ("people", "person"),
    ("man", "person"),
    ("men", "person"),
    ("woman", "person"),
    ("women", "person"),
    ("child", "person"),
    ("children", "person"),
    ("human", "person"),
    ("bike", "bicycle"),
];

/// Map a noun or class name onto its canonical class word.
pub fn canonical_class(word: &str) -> &str {
    ALIASES
        .iter()
        .find(|(alias, _)| *alias == word)
        .map(|(_, canon)| *canon)
        .unwrap_or(word)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextQuery {
    pub raw: String,
    pub nouns: Vec<String>,
}

impl TextQuery {
    pub fn parse(raw: impl Into<String>, lexicon: &BTreeSet<String>) -> Self {
        let raw = raw.into();
        let nouns = extract_nouns(&raw, lexicon);
        TextQuery { raw, nouns }
    }

    pub fn is_empty(&self) -> bool {
        self.nouns.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    pub bin_threshold: f64,
    pub alpha: f64,
    pub lexicon: BTreeSet<String>,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        AssociationConfig {
            bin_threshold: DEFAULT_BIN_THRESHOLD,
            alpha: DEFAULT_ALPHA,
            lexicon: DEFAULT_LEXICON.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_threshold > 0.0 && self.bin_threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "binarize threshold {} outside (0, 1)",
                self.bin_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.lexicon.is_empty() {
            return Err(Error::InvalidParameter("noun lexicon is empty".into()));
        }
        Ok(())
    }
}

/// Lowercase lexicon words of `text`, deduplicated in first-occurrence order.
///
/// A token not in the lexicon is retried with one trailing `s` removed.
pub fn extract_nouns(text: &str, lexicon: &BTreeSet<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for token in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
    {
        let word = if lexicon.contains(&token) {
            Some(token)
        } else {
            token
                .strip_suffix('s')
                .filter(|s| lexicon.contains(*s))
                .map(str::to_string)
        };
        if let Some(word) = word {
            if !out.contains(&word) {
                out.push(word);
            }
        }
    }
    out
}

/// Pointwise maximum; an empty list yields zeros of `extent`.
pub fn aggregate_heatmaps(maps: &[HeatMap], extent: (usize, usize)) -> Result<HeatMap> {
    let mut acc = vec![0.0; extent.0 * extent.1];
    for m in maps {
        Error::check_extent(extent, m.extent())?;
        for (a, &v) in acc.iter_mut().zip(m.as_slice()) {
            *a = f64::max(*a, v);
        }
    }
    Ok(HeatMap::new(Grid::from_raw(extent.0, extent.1, acc), None))
}

/// 1 where `m >= threshold`.
pub fn binarize_interest(m: &HeatMap, threshold: f64) -> InterestMask {
    InterestMask::from_fn(m.width(), m.height(), |x, y| m.get(x, y) >= threshold)
}

/// Choose-max of two binary maps.
pub fn combine_modalities(b_ir: &InterestMask, b_vis: &InterestMask) -> Result<InterestMask> {
    b_ir.union(b_vis)
}

/// Fraction of `instance` covered by `b_hat`.
pub fn overlap_ratio(instance: &InterestMask, b_hat: &InterestMask) -> Result<f64> {
    Error::check_extent(instance.extent(), b_hat.extent())?;
    let (mut size, mut hit) = (0usize, 0usize);
    for (&o, &b) in instance.as_slice().iter().zip(b_hat.as_slice()) {
        if o {
            size += 1;
            if b {
                hit += 1;
            }
        }
    }
    if size == 0 {
        return Err(Error::DegenerateInstance);
    }
    Ok(hit as f64 / size as f64)
}

/// Overlap of one instance with `b_hat`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceOverlap {
    pub id: u16,
    pub class: String,
    pub ratio: f64,
    pub kept: bool,
}

/// Overlap ratio of every instance, ascending by id.
pub fn instance_overlaps(instances: &InstanceMap, b_hat: &InterestMask, alpha: f64) -> Result<Vec<InstanceOverlap>> {
    Error::check_extent(instances.extent(), b_hat.extent())?;
    let mut counts: BTreeMap<u16, (usize, usize)> = BTreeMap::new();
    for (&id, &b) in instances.ids().iter().zip(b_hat.as_slice()) {
        if id != 0 {
            let e = counts.entry(id).or_default();
            e.0 += 1;
            if b {
                e.1 += 1;
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|(id, (size, hit))| {
            let ratio = hit as f64 / size as f64;
            InstanceOverlap {
                id,
                class: instances.class_of(id).unwrap_or_default().to_string(),
                ratio,
                kept: ratio > alpha,
            }
        })
        .collect())
}

/// Union of the supports of all instances with overlap ratio `> alpha`.
pub fn refine_interest(instances: &InstanceMap, b_hat: &InterestMask, alpha: f64) -> Result<InterestMask> {
    let kept: BTreeSet<u16> = instance_overlaps(instances, b_hat, alpha)?
        .into_iter()
        .filter(|o| o.kept)
        .map(|o| o.id)
        .collect();
    Ok(mask_of_instances(instances, &kept))
}

fn mask_of_instances(instances: &InstanceMap, kept: &BTreeSet<u16>) -> InterestMask {
    let (w, h) = instances.extent();
    let ids = instances.ids();
    InterestMask::from_fn(w, h, |x, y| kept.contains(&ids[y * w + x]))
}

/// Stand-in heat maps built from the instance map: one per noun, set to
/// [`PROXY_HEAT`] on every instance of the noun's class.
pub fn proxy_heatmaps(nouns: &[String], instances: &InstanceMap) -> Vec<HeatMap> {
    let (w, h) = instances.extent();
    nouns
        .iter()
        .map(|noun| {
            let target = canonical_class(noun);
            let matching: BTreeSet<u16> = instances
                .classes()
                .iter()
                .filter(|(_, class)| canonical_class(class) == target)
                .map(|(&id, _)| id)
                .collect();
            let data = instances
                .ids()
                .iter()
                .map(|id| if matching.contains(id) { PROXY_HEAT } else { 0.0 })
                .collect();
            HeatMap::new(Grid::from_raw(w, h, data), Some(noun.clone()))
        })
        .collect()
}

/// Where the coarse stage gets its heat maps from.
#[derive(Clone, Debug, Default)]
pub enum HeatmapSource {
    /// Build maps from the instance map with [`proxy_heatmaps`].
    #[default]
    Proxy,
    /// Externally computed maps, possibly at patch resolution. A labelled map
    /// is used when its label names one of the query nouns; an unlabelled map
    /// is used whenever the query has at least one noun. A missing modality
    /// behaves as all-zero.
    Supplied { ir: Vec<HeatMap>, vis: Vec<HeatMap> },
}

fn select_supplied(maps: &[HeatMap], nouns: &[String], extent: (usize, usize)) -> Result<Vec<HeatMap>> {
    if nouns.is_empty() {
        return Ok(Vec::new());
    }
    let wanted: BTreeSet<&str> = nouns.iter().map(|n| canonical_class(n)).collect();
    maps.iter()
        .filter(|m| match m.label() {
            None => true,
            Some(label) => {
                let stripped = label.strip_suffix('s').unwrap_or(label);
                wanted.contains(canonical_class(label)) || wanted.contains(canonical_class(stripped))
            }
        })
        .map(|m| {
            if m.extent() == extent {
                Ok(m.clone())
            } else {
                m.upscale_nearest(extent.0, extent.1)
            }
        })
        .collect()
}

/// All intermediate and final association products.
#[derive(Clone, Debug, PartialEq)]
pub struct Association {
    pub m_hat_ir: HeatMap,
    pub m_hat_vis: HeatMap,
    pub b_ir: InterestMask,
    pub b_vis: InterestMask,
    pub b_hat: InterestMask,
    pub b_f: InterestMask,
    pub overlaps: Vec<InstanceOverlap>,
}

/// Run the whole coarse-to-fine chain for one image pair.
pub fn associate(
    query: &TextQuery,
    source: &HeatmapSource,
    instances: &InstanceMap,
    cfg: &AssociationConfig,
) -> Result<Association> {
    cfg.validate()?;
    let extent = instances.extent();
    let (ir_maps, vis_maps) = match source {
        HeatmapSource::Proxy => {
            let maps = proxy_heatmaps(&query.nouns, instances);
            (maps.clone(), maps)
        }
        HeatmapSource::Supplied { ir, vis } => (
            select_supplied(ir, &query.nouns, extent)?,
            select_supplied(vis, &query.nouns, extent)?,
        ),
    };
    let m_hat_ir = aggregate_heatmaps(&ir_maps, extent)?;
    let m_hat_vis = aggregate_heatmaps(&vis_maps, extent)?;
    let b_ir = binarize_interest(&m_hat_ir, cfg.bin_threshold);
    let b_vis = binarize_interest(&m_hat_vis, cfg.bin_threshold);
    let b_hat = combine_modalities(&b_ir, &b_vis)?;
    let overlaps = instance_overlaps(instances, &b_hat, cfg.alpha)?;
    let kept: BTreeSet<u16> = overlaps.iter().filter(|o| o.kept).map(|o| o.id).collect();
    let b_f = mask_of_instances(instances, &kept);
    Ok(Association {
        m_hat_ir,
        m_hat_vis,
        b_ir,
        b_vis,
        b_hat,
        b_f,
        overlaps,
    })
}
