use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use textfuse_core::assessment::{self, ConfidenceMode, Metric};
use textfuse_core::association::{AssociationConfig, HeatmapSource};
use textfuse_core::dataset::{self, BatchConfig};
use textfuse_core::fusion::WeightRule;
use textfuse_core::io::{self, Raster};
use textfuse_core::pipeline::{self, PairInputs, PipelineConfig};
use textfuse_core::salience::{FilterBank, SalienceConfig};
use textfuse_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "textfuse", version, about = "Text-controllable infrared-visible image fusion and assessment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground a text query on a pair and write the interest map.
    Associate(AssociateArgs),
    /// Fuse a pair under a text query.
    Fuse(FuseArgs),
    /// Score a fused image against its sources.
    Assess(AssessArgs),
    /// Fuse and assess every pair of an annotated dataset.
    Batch(BatchArgs),
    /// Serve the HTTP API and, optionally, a static UI.
    Serve(ServeArgs),
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    ir: PathBuf,
    #[arg(long)]
    vis: PathBuf,
    /// Heat-map directory with ir/, vis/ and shared maps.
    #[arg(long)]
    heatmaps: Option<PathBuf>,
    /// Label image with a NAME.json class sidecar.
    #[arg(long)]
    instances: Option<PathBuf>,
}

#[derive(Args)]
struct AssocOpts {
    /// Instance overlap ratio a kept instance must exceed.
    #[arg(long, default_value_t = textfuse_core::association::DEFAULT_ALPHA)]
    alpha: f64,
    /// Heat value at or above which a pixel is of interest.
    #[arg(long, default_value_t = textfuse_core::association::DEFAULT_BIN_THRESHOLD)]
    bin_threshold: f64,
    #[arg(long, value_enum, default_value = "literal")]
    confidence: ConfidenceArg,
}

#[derive(Args)]
struct FusionOpts {
    /// Temperature of the scalar weight softmax.
    #[arg(long, default_value_t = 1.0)]
    softmax_c: f64,
    /// `default` or `file:PATH` to a JSON kernel bank.
    #[arg(long, default_value = "default")]
    feature_bank: String,
    #[arg(long, value_enum, default_value = "inside-norm")]
    weight_rule: WeightRuleArg,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ConfidenceArg {
    Literal,
    Strict,
}

impl From<ConfidenceArg> for ConfidenceMode {
    fn from(c: ConfidenceArg) -> Self {
        match c {
            ConfidenceArg::Literal => ConfidenceMode::Literal,
            ConfidenceArg::Strict => ConfidenceMode::StrictSupport,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum WeightRuleArg {
    InsideNorm,
    OutsideNorm,
}

impl From<WeightRuleArg> for WeightRule {
    fn from(w: WeightRuleArg) -> Self {
        match w {
            WeightRuleArg::InsideNorm => WeightRule::InsideNorm,
            WeightRuleArg::OutsideNorm => WeightRule::OutsideNorm,
        }
    }
}

#[derive(Args)]
struct AssociateArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, default_value = "")]
    text: String,
    #[command(flatten)]
    assoc: AssocOpts,
    /// Where to write B_f as a PNG.
    #[arg(long)]
    out_mask: Option<PathBuf>,
    /// Where to write the JSON summary; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, default_value = "")]
    text: String,
    #[command(flatten)]
    assoc: AssocOpts,
    #[command(flatten)]
    fusion: FusionOpts,
    /// Fused PNG; color when the visible input is color.
    #[arg(long)]
    out: PathBuf,
    /// Directory for w_ir.pfm, w_vis.pfm and scalars.json.
    #[arg(long)]
    dump_weights: Option<PathBuf>,
    #[arg(long)]
    dump_mask: Option<PathBuf>,
}

#[derive(Args)]
struct AssessArgs {
    #[arg(long)]
    fused: PathBuf,
    #[command(flatten)]
    pair: PairArgs,
    /// Explicit interest map; replaces text association.
    #[arg(long, conflicts_with_all = ["text", "instances"])]
    mask: Option<PathBuf>,
    #[arg(long)]
    text: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "qabf,ssim,vif,sf,sd,en")]
    metrics: Vec<Metric>,
    #[command(flatten)]
    assoc: AssocOpts,
    /// Where to write the JSON report; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the number of sentences per description variant.
    #[arg(long)]
    desc_subset: Option<usize>,
    /// Override the worker count.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    dataset_root: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Directory of built UI assets served at `/`.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

fn feature_bank(spec: &str) -> Result<FilterBank> {
    match spec {
        "default" => Ok(FilterBank::default()),
        s => match s.strip_prefix("file:") {
            Some(path) => FilterBank::load(path).with_context(|| format!("loading feature bank {path}")),
            None => bail!("--feature-bank must be `default` or `file:PATH`, got {s:?}"),
        },
    }
}

fn pipeline_config(assoc: &AssocOpts, fusion: Option<&FusionOpts>) -> Result<PipelineConfig> {
    let association = AssociationConfig {
        alpha: assoc.alpha,
        bin_threshold: assoc.bin_threshold,
        ..AssociationConfig::default()
    };
    association.validate()?;
    let mut cfg = PipelineConfig {
        association,
        confidence: assoc.confidence.into(),
        ..PipelineConfig::default()
    };
    if let Some(f) = fusion {
        if !(f.softmax_c.is_finite() && f.softmax_c > 0.0) {
            bail!("--softmax-c must be positive");
        }
        cfg.salience = SalienceConfig {
            bank: feature_bank(&f.feature_bank)?,
            softmax_c: f.softmax_c,
            ..SalienceConfig::default()
        };
        cfg.weight_rule = f.weight_rule.into();
    }
    Ok(cfg)
}

fn load_pair(args: &PairArgs) -> Result<(PairInputs, Raster)> {
    let ir = io::load_raster(&args.ir).with_context(|| format!("reading {}", args.ir.display()))?;
    let vis = io::load_raster(&args.vis).with_context(|| format!("reading {}", args.vis.display()))?;
    let mut inputs = PairInputs::new(ir.luminance(), vis.luminance())?;
    if let Some(p) = &args.instances {
        let map = io::load_instance_map(p).with_context(|| format!("reading {}", p.display()))?;
        inputs = inputs.with_instances(map)?;
    }
    if let Some(dir) = &args.heatmaps {
        let set = io::load_heatmap_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
        inputs = inputs.with_heatmaps(HeatmapSource::Supplied { ir: set.ir, vis: set.vis });
    }
    Ok((inputs, vis))
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn associate(args: AssociateArgs) -> Result<()> {
    let cfg = pipeline_config(&args.assoc, None)?;
    let (inputs, _) = load_pair(&args.pair)?;
    let a = pipeline::run_association(&inputs, &args.text, &cfg)?;
    let c_t = assessment::confidence(&a.b_f, &a.b_hat, &a.m_hat_ir, &a.m_hat_vis, cfg.confidence)?;
    if let Some(p) = &args.out_mask {
        io::save_mask_png(&a.b_f, p)?;
    }
    let nouns = textfuse_core::association::TextQuery::parse(args.text.as_str(), &cfg.association.lexicon).nouns;
    emit(
        &json!({
            "nouns": nouns,
            "c_t": c_t,
            "b_f_pixels": a.b_f.count(),
            "b_hat_pixels": a.b_hat.count(),
            "overlaps": a.overlaps,
        }),
        args.out.as_deref(),
    )
}

fn fuse(args: FuseArgs) -> Result<()> {
    let cfg = pipeline_config(&args.assoc, Some(&args.fusion))?;
    let (inputs, vis) = load_pair(&args.pair)?;
    let out = pipeline::fuse_pair(&inputs, &args.text, &cfg)?;
    match &vis {
        Raster::Gray(_) => io::save_gray_png(out.fused.grid(), &args.out)?,
        Raster::Color(c) => io::save_color_png(&c.with_luminance(&out.fused)?, &args.out)?,
    }
    let w = &out.salience.weights;
    let scalars = json!({
        "p_ir": w.p_ir,
        "p_vis": w.p_vis,
        "im_ir": out.salience.im_ir.value,
        "im_vis": out.salience.im_vis.value,
    });
    if let Some(dir) = &args.dump_weights {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("w_ir.pfm"), io::encode_pfm(&w.w_ir))?;
        fs::write(dir.join("w_vis.pfm"), io::encode_pfm(&w.w_vis))?;
        fs::write(dir.join("scalars.json"), serde_json::to_string_pretty(&scalars)? + "\n")?;
    }
    if let Some(p) = &args.dump_mask {
        io::save_mask_png(&out.association.b_f, p)?;
    }
    tracing::info!(
        b_f_pixels = out.association.b_f.count(),
        p_ir = w.p_ir,
        out = %args.out.display(),
        "fused"
    );
    Ok(())
}

fn assess(args: AssessArgs) -> Result<()> {
    if args.metrics.is_empty() {
        bail!("--metrics is empty");
    }
    let cfg = pipeline_config(&args.assoc, None)?;
    let (inputs, _) = load_pair(&args.pair)?;
    let fused = io::load_raster(&args.fused)
        .with_context(|| format!("reading {}", args.fused.display()))?
        .luminance();
    if fused.extent() != inputs.ir.extent() {
        bail!("fused extent {:?} differs from source extent {:?}", fused.extent(), inputs.ir.extent());
    }
    let evidence = match &args.mask {
        Some(p) => {
            let b_f = io::load_mask(p).with_context(|| format!("reading {}", p.display()))?;
            let (ir_maps, vis_maps) = match &inputs.heatmaps {
                HeatmapSource::Supplied { ir, vis } => (ir.clone(), vis.clone()),
                HeatmapSource::Proxy => (Vec::new(), Vec::new()),
            };
            pipeline::explicit_evidence(b_f, &ir_maps, &vis_maps, cfg.association.bin_threshold)?
        }
        None => {
            let text = args.text.as_deref().unwrap_or("");
            pipeline::evidence_of(&pipeline::run_association(&inputs, text, &cfg)?)
        }
    };
    let report = assessment::assess(&fused, &inputs.ir, &inputs.vis, &evidence, &args.metrics, cfg.confidence)?;
    emit(&serde_json::to_value(&report)?, args.out.as_deref())
}

fn batch(args: BatchArgs) -> Result<ExitCode> {
    let mut cfg = BatchConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(k) = args.desc_subset {
        cfg.desc_subset = Some(k);
    }
    if let Some(n) = args.parallelism {
        cfg.parallelism = n;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    let report = dataset::run_batch(&cfg)?;
    for f in &report.failures {
        tracing::error!(pair = %f.pair_id, error = %f.error, "record failed");
    }
    for r in &report.aggregate.ranks {
        tracing::info!(method = %r.method, mrank = r.mrank, mrank_plus = ?r.mrank_plus, "rank");
    }
    println!(
        "{} rows, {} failures, report in {}",
        report.rows.len(),
        report.failures.len(),
        cfg.output_dir.display()
    );
    Ok(if report.has_failures() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn serve(args: ServeArgs) -> Result<()> {
    let cfg = ServiceConfig {
        dataset_root: args.dataset_root,
        workers: args.workers,
        ui_dir: args.ui_dir,
        pipeline: PipelineConfig::default(),
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(textfuse_service::serve(&cfg, args.bind))?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let result = match Cli::parse().command {
        Command::Associate(a) => associate(a).map(|_| ExitCode::SUCCESS),
        Command::Fuse(a) => fuse(a).map(|_| ExitCode::SUCCESS),
        Command::Assess(a) => assess(a).map(|_| ExitCode::SUCCESS),
        Command::Batch(a) => batch(a),
        Command::Serve(a) => serve(a).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
