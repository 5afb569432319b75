//! Text-aware fusion scores.
//!
//! A conventional score averages a similarity metric against both sources.
//! The text-aware variant blends it with the similarity to a text-guided
//! reference (infrared inside the interest map, visible outside), weighted by
//! how strongly the heat maps respond inside the interest map.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{qabf, ssim, stats, vif};
use crate::error::{Error, Result};
use crate::image::{GrayImage, Grid, HeatMap, InterestMask};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Qabf,
    Ssim,
    Vif,
    Sf,
    Sd,
    En,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::Qabf, Metric::Ssim, Metric::Vif, Metric::Sf, Metric::Sd, Metric::En];

    /// Column label, e.g. `SSIM`.
    pub fn label(self) -> &'static str {
        match self {
            Metric::Qabf => "Qabf",
            Metric::Ssim => "SSIM",
            Metric::Vif => "VIF",
            Metric::Sf => "SF",
            Metric::Sd => "SD",
            Metric::En => "EN",
        }
    }

    /// Label of the text-aware variant, e.g. `SSIM+`. `None` for
    /// no-reference metrics.
    pub fn plus_label(self) -> Option<String> {
        self.is_reference().then(|| format!("{}+", self.label()))
    }

    /// Whether the metric compares against a reference image.
    pub fn is_reference(self) -> bool {
        matches!(self, Metric::Qabf | Metric::Ssim | Metric::Vif)
    }

    /// Parse a comma-separated list such as `qabf,ssim,vif`.
    pub fn parse_list(s: &str) -> Result<Vec<Metric>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: Metric = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qabf" => Ok(Metric::Qabf),
            "ssim" => Ok(Metric::Ssim),
            "vif" => Ok(Metric::Vif),
            "sf" => Ok(Metric::Sf),
            "sd" => Ok(Metric::Sd),
            "en" | "entropy" => Ok(Metric::En),
            other => Err(Error::InvalidParameter(format!("unknown metric {other:?}"))),
        }
    }
}

/// Similarity of `f` to `reference` under a reference metric.
pub fn iqa(metric: Metric, f: &Grid, reference: &Grid) -> Result<f64> {
    match metric {
        Metric::Qabf => qabf::qabf(f, reference, reference),
        Metric::Ssim => ssim::ssim(f, reference),
        Metric::Vif => vif::vif(reference, f),
        other => Err(Error::InvalidParameter(format!("{other} is not a reference metric"))),
    }
}

/// No-reference value of `f`.
pub fn no_reference(metric: Metric, f: &Grid) -> Result<f64> {
    match metric {
        Metric::Sf => stats::sf(f),
        Metric::Sd => stats::sd(f),
        Metric::En => stats::entropy(f),
        other => Err(Error::InvalidParameter(format!("{other} needs a reference"))),
    }
}

/// Two-source average `(iqa(f, ir) + iqa(f, vis)) / 2`.
pub fn q_o(metric: Metric, f: &Grid, ir: &Grid, vis: &Grid) -> Result<f64> {
    Ok((iqa(metric, f, ir)? + iqa(metric, f, vis)?) / 2.0)
}

/// Infrared inside `b_f`, visible elsewhere.
pub fn text_guided_reference(ir: &GrayImage, vis: &GrayImage, b_f: &InterestMask) -> Result<GrayImage> {
    Error::check_extent(ir.extent(), vis.extent())?;
    Error::check_extent(ir.extent(), b_f.extent())?;
    let (w, h) = ir.extent();
    GrayImage::new(
        w,
        h,
        (0..w * h)
            .map(|i| {
                if b_f.as_slice()[i] {
                    ir.as_slice()[i]
                } else {
                    vis.as_slice()[i]
                }
            })
            .collect(),
    )
}

/// Support convention for the confidence numerator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceMode {
    /// Numerator over all of `b_f`, denominator over `b_f` within `b_hat`;
    /// the ratio is clamped to `[0, 1]`.
    #[default]
    Literal,
    /// Both sums restricted to `b_f` within `b_hat`.
    StrictSupport,
}

impl FromStr for ConfidenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(ConfidenceMode::Literal),
            "strict" | "strict-support" => Ok(ConfidenceMode::StrictSupport),
            other => Err(Error::InvalidParameter(format!("unknown confidence mode {other:?}"))),
        }
    }
}

/// Mean heat response inside the interest map, in `[0, 1]`. Zero when `b_f`
/// is empty or does not meet `b_hat`.
pub fn confidence(
    b_f: &InterestMask,
    b_hat: &InterestMask,
    m_ir: &HeatMap,
    m_vis: &HeatMap,
    mode: ConfidenceMode,
) -> Result<f64> {
    let extent = b_f.extent();
    Error::check_extent(extent, b_hat.extent())?;
    Error::check_extent(extent, m_ir.extent())?;
    Error::check_extent(extent, m_vis.extent())?;
    let (mut num, mut den) = (0.0, 0usize);
    for i in 0..b_f.as_slice().len() {
        if !b_f.as_slice()[i] {
            continue;
        }
        let inside_hat = b_hat.as_slice()[i];
        let response = m_ir.as_slice()[i].max(m_vis.as_slice()[i]);
        if inside_hat || mode == ConfidenceMode::Literal {
            num += response;
        }
        if inside_hat {
            den += 1;
        }
    }
    if den == 0 {
        return Ok(0.0);
    }
    Ok((num / den as f64).clamp(0.0, 1.0))
}

/// One metric evaluated on one fused image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: Metric,
    /// Conventional score (two-source average, or the plain no-reference value).
    pub q_o: f64,
    /// Text-aware score; absent for no-reference metrics.
    pub q_plus: Option<f64>,
    pub c_t: f64,
    pub w_o: f64,
}

/// `(1 - c_t) * q_o + c_t * iqa(f, i_tf)`.
pub fn q_plus(
    metric: Metric,
    f: &Grid,
    ir: &Grid,
    vis: &Grid,
    i_tf: &Grid,
    c_t: f64,
) -> Result<MetricResult> {
    if !(0.0..=1.0).contains(&c_t) {
        return Err(Error::InvalidParameter(format!("confidence {c_t} outside [0, 1]")));
    }
    let q_o = q_o(metric, f, ir, vis)?;
    let tf = iqa(metric, f, i_tf)?;
    Ok(MetricResult {
        metric,
        q_o,
        q_plus: Some(combine(q_o, tf, c_t)),
        c_t,
        w_o: 1.0 - c_t,
    })
}

#[inline]
pub(crate) fn combine(q_o: f64, tf: f64, c_t: f64) -> f64 {
    (1.0 - c_t) * q_o + c_t * tf
}

/// Association products the text-aware scores depend on.
#[derive(Clone, Debug)]
pub struct TextEvidence {
    pub b_f: InterestMask,
    pub b_hat: InterestMask,
    pub m_hat_ir: HeatMap,
    pub m_hat_vis: HeatMap,
}

impl TextEvidence {
    /// Evidence of an empty description.
    pub fn empty(width: usize, height: usize) -> Self {
        TextEvidence {
            b_f: InterestMask::empty(width, height),
            b_hat: InterestMask::empty(width, height),
            m_hat_ir: HeatMap::zeros(width, height),
            m_hat_vis: HeatMap::zeros(width, height),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub c_t: f64,
    pub results: Vec<MetricResult>,
}

/// Every requested metric on one fused image, in request order.
pub fn assess(
    fused: &GrayImage,
    ir: &GrayImage,
    vis: &GrayImage,
    evidence: &TextEvidence,
    metrics: &[Metric],
    mode: ConfidenceMode,
) -> Result<Assessment> {
    Error::check_extent(fused.extent(), ir.extent())?;
    Error::check_extent(fused.extent(), vis.extent())?;
    let c_t = confidence(
        &evidence.b_f,
        &evidence.b_hat,
        &evidence.m_hat_ir,
        &evidence.m_hat_vis,
        mode,
    )?;
    let i_tf = text_guided_reference(ir, vis, &evidence.b_f)?;
    let results: Vec<Result<MetricResult>> = par::map_slice(metrics, |&m| {
        if m.is_reference() {
            q_plus(m, fused, ir, vis, &i_tf, c_t)
        } else {
            Ok(MetricResult {
                metric: m,
                q_o: no_reference(m, fused)?,
                q_plus: None,
                c_t,
                w_o: 1.0 - c_t,
            })
        }
    });
    Ok(Assessment {
        c_t,
        results: results.into_iter().collect::<Result<_>>()?,
    })
}
