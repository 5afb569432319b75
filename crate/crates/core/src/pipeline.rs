//! End-to-end associate, weigh, fuse, assess for one image pair.

use crate::assessment::{self, Assessment, ConfidenceMode, Metric, TextEvidence};
use crate::association::{self, Association, AssociationConfig, HeatmapSource, TextQuery};
use crate::error::{Error, Result};
use crate::fusion::{self, FusionPlan, WeightRule};
use crate::image::{GrayImage, HeatMap, InstanceMap, InterestMask};
use crate::salience::{self, SalienceConfig, SalienceReport};

/// Knobs shared by the CLI, the service, and batch runs.
#[derive(Clone, Debug, Default)]
pub struct PipelineConfig {
    pub association: AssociationConfig,
    pub salience: SalienceConfig,
    pub weight_rule: WeightRule,
    pub confidence: ConfidenceMode,
}

/// Inputs for one pair. A missing instance map behaves as an empty one.
#[derive(Clone, Debug)]
pub struct PairInputs {
    pub ir: GrayImage,
    pub vis: GrayImage,
    pub instances: Option<InstanceMap>,
    pub heatmaps: HeatmapSource,
}

impl PairInputs {
    pub fn new(ir: GrayImage, vis: GrayImage) -> Result<Self> {
        Error::check_extent(ir.extent(), vis.extent())?;
        Ok(PairInputs {
            ir,
            vis,
            instances: None,
            heatmaps: HeatmapSource::Proxy,
        })
    }

    pub fn with_instances(mut self, instances: InstanceMap) -> Result<Self> {
        Error::check_extent(self.ir.extent(), instances.extent())?;
        self.instances = Some(instances);
        Ok(self)
    }

    pub fn with_heatmaps(mut self, source: HeatmapSource) -> Self {
        self.heatmaps = source;
        self
    }

    fn instances(&self) -> InstanceMap {
        match &self.instances {
            Some(m) => m.clone(),
            None => {
                let (w, h) = self.ir.extent();
                InstanceMap::empty(w, h)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct FusionOutcome {
    pub association: Association,
    pub salience: SalienceReport,
    pub fused: GrayImage,
}

impl FusionOutcome {
    pub fn evidence(&self) -> TextEvidence {
        evidence_of(&self.association)
    }
}

pub fn evidence_of(a: &Association) -> TextEvidence {
    TextEvidence {
        b_f: a.b_f.clone(),
        b_hat: a.b_hat.clone(),
        m_hat_ir: a.m_hat_ir.clone(),
        m_hat_vis: a.m_hat_vis.clone(),
    }
}

/// Evidence from an explicit interest map and heat maps, without a text
/// query. Every map of a modality takes part in its aggregate; maps smaller
/// than the image are upscaled.
pub fn explicit_evidence(
    b_f: InterestMask,
    ir_maps: &[HeatMap],
    vis_maps: &[HeatMap],
    bin_threshold: f64,
) -> Result<TextEvidence> {
    let extent = b_f.extent();
    let fit = |maps: &[HeatMap]| -> Result<Vec<HeatMap>> {
        maps.iter()
            .map(|m| {
                if m.extent() == extent {
                    Ok(m.clone())
                } else {
                    m.upscale_nearest(extent.0, extent.1)
                }
            })
            .collect()
    };
    let m_hat_ir = association::aggregate_heatmaps(&fit(ir_maps)?, extent)?;
    let m_hat_vis = association::aggregate_heatmaps(&fit(vis_maps)?, extent)?;
    let b_hat = association::combine_modalities(
        &association::binarize_interest(&m_hat_ir, bin_threshold),
        &association::binarize_interest(&m_hat_vis, bin_threshold),
    )?;
    Ok(TextEvidence {
        b_f,
        b_hat,
        m_hat_ir,
        m_hat_vis,
    })
}

/// Ground `text` on the pair.
pub fn run_association(inputs: &PairInputs, text: &str, cfg: &PipelineConfig) -> Result<Association> {
    let query = TextQuery::parse(text, &cfg.association.lexicon);
    association::associate(&query, &inputs.heatmaps, &inputs.instances(), &cfg.association)
}

/// Associate, weigh, and fuse.
pub fn fuse_pair(inputs: &PairInputs, text: &str, cfg: &PipelineConfig) -> Result<FusionOutcome> {
    let association = run_association(inputs, text, cfg)?;
    let salience = salience::compute_salience(&inputs.ir, &inputs.vis, &association.b_f, &cfg.salience)?;
    let plan = FusionPlan::new(
        association.b_f.clone(),
        salience.weights.clone(),
        inputs.ir.clone(),
        inputs.vis.clone(),
    )?
    .with_rule(cfg.weight_rule);
    let fused = fusion::fuse_closed_form(&plan)?;
    Ok(FusionOutcome {
        association,
        salience,
        fused,
    })
}

/// Associate, weigh, fuse, and assess the fused result.
pub fn fuse_and_assess(
    inputs: &PairInputs,
    text: &str,
    metrics: &[Metric],
    cfg: &PipelineConfig,
) -> Result<(FusionOutcome, Assessment)> {
    let outcome = fuse_pair(inputs, text, cfg)?;
    let scores = assessment::assess(
        &outcome.fused,
        &inputs.ir,
        &inputs.vis,
        &outcome.evidence(),
        metrics,
        cfg.confidence,
    )?;
    Ok((outcome, scores))
}
