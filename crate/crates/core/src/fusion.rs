//! Region-partitioned fusion objective and its exact per-pixel minimizer.
//!
//! For a candidate fused image `f` the objective is
//!
//! ```text
//! L(f) = 1/(HW) * sum_{B_f}  (w_vis (f - vis))^2 + (w_ir (f - ir))^2
//!      + 1/(HW) * sum_{!B_f} p_vis (f - vis)^2   + p_ir (f - ir)^2
//! ```
//!
//! Every term touches one pixel, so the minimizer is found pixel by pixel as
//! a weighted mean of the two sources. Under [`WeightRule::InsideNorm`] the
//! interest-region weights enter squared; [`WeightRule::OutsideNorm`] moves
//! them outside the square and weights the interest terms linearly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, Grid, InterestMask};
use crate::par;
use crate::salience::SalienceWeights;

/// How the interest-region pixel weights enter the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRule {
    /// `||B * w * (f - I)||^2`: effective weight `w^2`.
    #[default]
    InsideNorm,
    /// `w * ||B * (f - I)||^2`: effective weight `w`.
    OutsideNorm,
}

impl WeightRule {
    #[inline]
    fn effective(self, w: f64) -> f64 {
        match self {
            WeightRule::InsideNorm => w * w,
            WeightRule::OutsideNorm => w,
        }
    }
}

impl std::str::FromStr for WeightRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inside-norm" | "inside" => Ok(WeightRule::InsideNorm),
            "outside-norm" | "outside" => Ok(WeightRule::OutsideNorm),
            other => Err(Error::InvalidParameter(format!("unknown weight rule {other:?}"))),
        }
    }
}

/// Everything the objective depends on.
#[derive(Clone, Debug)]
pub struct FusionPlan {
    pub b_f: InterestMask,
    pub weights: SalienceWeights,
    pub ir: GrayImage,
    pub vis: GrayImage,
    pub rule: WeightRule,
}

impl FusionPlan {
    pub fn new(b_f: InterestMask, weights: SalienceWeights, ir: GrayImage, vis: GrayImage) -> Result<Self> {
        let extent = ir.extent();
        Error::check_extent(extent, vis.extent())?;
        Error::check_extent(extent, b_f.extent())?;
        Error::check_extent(extent, weights.extent())?;
        Ok(FusionPlan {
            b_f,
            weights,
            ir,
            vis,
            rule: WeightRule::default(),
        })
    }

    pub fn with_rule(mut self, rule: WeightRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn extent(&self) -> (usize, usize) {
        self.ir.extent()
    }

    fn pixel_count(&self) -> f64 {
        let (w, h) = self.extent();
        (w * h) as f64
    }

    /// Region sums of the interest and irrelevant terms at `f`.
    fn region_sums(&self, f: &Grid) -> Result<(f64, f64)> {
        Error::check_extent(self.extent(), f.extent())?;
        let (w, h) = self.extent();
        let sw = &self.weights;
        let (p_ir, p_vis) = (sw.p_ir, sw.p_vis);
        let rows = par::map_rows(w, h, |y| {
            let (mut int, mut irr) = (0.0, 0.0);
            for x in 0..w {
                let v = f.get(x, y);
                let dv = v - self.vis.get(x, y);
                let di = v - self.ir.get(x, y);
                if self.b_f.get(x, y) {
                    match self.rule {
                        WeightRule::InsideNorm => {
                            let (a, b) = (sw.w_vis.get(x, y) * dv, sw.w_ir.get(x, y) * di);
                            int += a * a + b * b;
                        }
                        WeightRule::OutsideNorm => {
                            int += sw.w_vis.get(x, y) * dv * dv + sw.w_ir.get(x, y) * di * di;
                        }
                    }
                } else {
                    irr += p_vis * dv * dv + p_ir * di * di;
                }
            }
            (int, irr)
        });
        Ok(rows
            .into_iter()
            .fold((0.0, 0.0), |(a, b), (i, r)| (a + i, b + r)))
    }
}

/// Interest-region term of the objective.
pub fn interest_loss(f: &Grid, plan: &FusionPlan) -> Result<f64> {
    Ok(plan.region_sums(f)?.0 / plan.pixel_count())
}

/// Irrelevant-region term of the objective.
pub fn irrelevant_loss(f: &Grid, plan: &FusionPlan) -> Result<f64> {
    Ok(plan.region_sums(f)?.1 / plan.pixel_count())
}

pub fn total_loss(f: &Grid, plan: &FusionPlan) -> Result<f64> {
    let (int, irr) = plan.region_sums(f)?;
    let n = plan.pixel_count();
    Ok(int / n + irr / n)
}

/// `vis + t * (ir - vis)` kept inside the source interval. Exact when the
/// sources agree.
#[inline]
fn blend(ir: f64, vis: f64, t: f64) -> f64 {
    let v = vis + t * (ir - vis);
    v.clamp(ir.min(vis), ir.max(vis))
}

/// The exact minimizer of [`total_loss`].
pub fn fuse_closed_form(plan: &FusionPlan) -> Result<GrayImage> {
    let (w, h) = plan.extent();
    let sw = &plan.weights;
    let p_sum = sw.p_ir + sw.p_vis;
    if !(p_sum > 0.0) {
        return Err(Error::InvalidParameter("scalar weights sum to zero".into()));
    }
    let t_irr = sw.p_ir / p_sum;
    let rows: Vec<Result<Vec<f64>>> = par::map_rows(w, h, |y| {
        let mut row = Vec::with_capacity(w);
        for x in 0..w {
            let (ir, vis) = (plan.ir.get(x, y), plan.vis.get(x, y));
            let t = if plan.b_f.get(x, y) {
                let a = plan.rule.effective(sw.w_vis.get(x, y));
                let b = plan.rule.effective(sw.w_ir.get(x, y));
                if !(a + b > 0.0) {
                    return Err(Error::DegenerateWeights { x, y });
                }
                b / (a + b)
            } else {
                t_irr
            };
            row.push(blend(ir, vis, t));
        }
        Ok(row)
    });
    let mut data = Vec::with_capacity(w * h);
    for row in rows {
        data.extend(row?);
    }
    GrayImage::new(w, h, data)
}

/// Text embedding broadcast over the spatial grid by [`affine_fuse`].
#[derive(Clone, Debug, PartialEq)]
pub struct TextFeatureVector(Vec<f64>);

impl TextFeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("text feature vector needs K >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite text feature".into()));
        }
        Ok(TextFeatureVector(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `K`-channel features on the image grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedFeatures {
    channels: Vec<Grid>,
}

impl ProjectedFeatures {
    pub fn new(channels: Vec<Grid>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::InvalidParameter("projected features need K >= 1".into()))?;
        let extent = first.extent();
        for c in &channels {
            Error::check_extent(extent, c.extent())?;
        }
        Ok(ProjectedFeatures { channels })
    }

    pub fn zeros(width: usize, height: usize, k: usize) -> Self {
        ProjectedFeatures {
            channels: vec![Grid::zeros(width, height); k.max(1)],
        }
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn extent(&self) -> (usize, usize) {
        self.channels[0].extent()
    }

    pub fn channels(&self) -> &[Grid] {
        &self.channels
    }
}

/// `out(x, y, k) = mu(x, y, k) * text(k) + lambda(x, y, k)`.
pub fn affine_fuse(
    mu: &ProjectedFeatures,
    text: &TextFeatureVector,
    lambda: &ProjectedFeatures,
) -> Result<ProjectedFeatures> {
    Error::check_extent(mu.extent(), lambda.extent())?;
    if mu.channel_count() != lambda.channel_count() {
        return Err(Error::ChannelMismatch {
            expected: mu.channel_count(),
            found: lambda.channel_count(),
        });
    }
    if text.len() != mu.channel_count() {
        return Err(Error::ChannelMismatch {
            expected: mu.channel_count(),
            found: text.len(),
        });
    }
    let (w, h) = mu.extent();
    let channels = mu
        .channels
        .iter()
        .zip(&lambda.channels)
        .zip(text.as_slice())
        .map(|((m, l), &t)| {
            Grid::from_raw(
                w,
                h,
                m.as_slice()
                    .iter()
                    .zip(l.as_slice())
                    .map(|(&mv, &lv)| mv * t + lv)
                    .collect(),
            )
        })
        .collect();
    Ok(ProjectedFeatures { channels })
}
