//! Command-line interface: train, eval, infer, inspect.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::cube::CubeSpec;
use crate::data::{bicubic_resize, load_image, save_image, DatasetIndex};
use crate::infer::super_resolve;
use crate::metrics::{evaluate, EvalReport, EvalRow};
use crate::model::{flops_estimate, Model, ModelConfig, Variant};
use crate::train::{Checkpoint, TrainConfig, Trainer};

#[derive(Parser)]
#[command(name = "cubeformer", version, about = "Lightweight super-resolution with 3D cube attention")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a model on a dataset directory (root/HR/*.png).
    Train(TrainArgs),
    /// Evaluate a checkpoint or baseline on a benchmark directory.
    Eval(EvalArgs),
    /// Super-resolve one PNG image.
    Infer(InferArgs),
    /// Report parameter counts, FLOPs, and the cube layout.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VariantArg {
    Full,
    Lite,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::Lite => Variant::Lite,
        }
    }
}

/// Model-shape flags shared by train and inspect. Desk-scale defaults;
/// paper scale is reachable with --groups 6 --channels 64.
#[derive(Args, Debug)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "full")]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    #[arg(long, default_value_t = 2)]
    pub groups: usize,
    #[arg(long, default_value_t = 32)]
    pub channels: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 3.0)]
    pub ffn_expansion: f64,
    #[arg(long, default_value_t = 2.0)]
    pub mbconv_expansion: f64,
    /// Cube extents h,w,c for block sampling.
    #[arg(long, value_parser = parse_spec_dims, default_value = "8,8,4")]
    pub intra_cube: (usize, usize, usize),
    /// Grid cell counts h,w,c for grid sampling.
    #[arg(long, value_parser = parse_spec_dims, default_value = "8,8,4")]
    pub inter_cube: (usize, usize, usize),
    /// Use the transposed affinity reading (A/B parity experiments).
    #[arg(long, default_value_t = false)]
    pub transposed_affinity: bool,
}

fn parse_spec_dims(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad cube dims '{s}'")))
        .collect::<Result<_, _>>()?;
    if parts.len() != 3 {
        return Err(format!("cube dims need three comma-separated values, got '{s}'"));
    }
    Ok((parts[0], parts[1], parts[2]))
}

impl ModelArgs {
    pub fn to_config(&self) -> ModelConfig {
        let (ih, iw, ic) = self.intra_cube;
        let (gh, gw, gc) = self.inter_cube;
        ModelConfig {
            variant: self.variant.into(),
            n_groups: self.groups,
            channels: self.channels,
            heads: self.heads,
            intra_spec: CubeSpec::block(ih, iw, ic),
            inter_spec: CubeSpec::grid(gh, gw, gc),
            scale: self.scale,
            ffn_expansion: self.ffn_expansion,
            mbconv_expansion: self.mbconv_expansion,
            qkv_kernel: 1,
            transposed_affinity: self.transposed_affinity,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Dataset root containing HR/ (and optional LR_x{scale}/).
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for manifest, loss log, and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub iters: u64,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 200_000)]
    pub halve_every: u64,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub checkpoint_every: u64,
    /// LR patch edge (must be a multiple of the cube layout).
    #[arg(long, default_value_t = 64)]
    pub patch: usize,
    /// Disable flip/rotation/channel-shuffle augmentation.
    #[arg(long, default_value_t = false)]
    pub no_augment: bool,
    /// Continue from a checkpoint file.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Benchmark root containing HR/ (and optional LR_x{scale}/).
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to evaluate.
    #[arg(long, required_unless_present = "baseline")]
    pub ckpt: Option<PathBuf>,
    /// Evaluate a model-free baseline instead of a checkpoint.
    #[arg(long, value_parser = ["bicubic", "identity"])]
    pub baseline: Option<String>,
    /// Scale for baseline evaluation (taken from the checkpoint otherwise).
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    /// Also write the report as JSON lines to this path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print JSON lines instead of the table.
    #[arg(long, default_value_t = false)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Read the configuration from a checkpoint instead of flags.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Resolution HxW for the FLOPs estimate and layout summary.
    #[arg(long, default_value = "64x64", value_parser = parse_res)]
    pub res: (usize, usize),
    #[arg(long, default_value_t = false)]
    pub json: bool,
}

fn parse_res(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once('x').ok_or_else(|| format!("bad resolution '{s}'"))?;
    Ok((
        h.parse().map_err(|_| format!("bad resolution '{s}'"))?,
        w.parse().map_err(|_| format!("bad resolution '{s}'"))?,
    ))
}

/// Everything needed to reproduce a run; written before any long work.
#[derive(Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: PathBuf,
    pub out: PathBuf,
    pub loss_log: String,
    pub checkpoint_pattern: String,
    pub resumed_from: Option<PathBuf>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let model_config = args.model.to_config();
    let train_config = TrainConfig {
        batch_size: args.batch,
        total_iters: args.iters,
        lr0: args.lr,
        halve_every: args.halve_every,
        lambda: args.lambda,
        seed: args.seed,
        checkpoint_every: args.checkpoint_every,
        patch_size: args.patch,
        augment: !args.no_augment,
        ..TrainConfig::default()
    };

    let mut trainer = match &args.resume {
        Some(ckpt) => Trainer::resume(ckpt, train_config)
            .with_context(|| format!("resuming from {}", ckpt.display()))?,
        None => Trainer::fresh(&model_config, train_config)?,
    };
    trainer.log_every = 50;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: trainer.config.seed,
        model: trainer.model.config,
        train: trainer.config,
        data: args.data.clone(),
        out: args.out.clone(),
        loss_log: "loss_log.jsonl".to_string(),
        checkpoint_pattern: "ckpt_{iter}".to_string(),
        resumed_from: args.resume.clone(),
    };
    let manifest_path = args.out.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", manifest_path.display()))?;

    let dataset = DatasetIndex::scan(&args.data, model_config.scale)?;
    let summary = trainer.run(&dataset, &args.out)?;
    println!(
        "trained to iteration {} ({} recorded steps); last checkpoint: {}",
        summary.final_iter,
        summary.records.len(),
        summary
            .last_checkpoint
            .as_deref()
            .map(Path::display)
            .map(|d| d.to_string())
            .unwrap_or_else(|| "none".into())
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let (model, scale, label): (Option<Model<f32>>, usize, String) = match (&args.ckpt, &args.baseline) {
        (Some(path), None) => {
            let ck = Checkpoint::load(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            let model = ck.restore_model()?;
            let scale = model.config.scale;
            (Some(model), scale, path.display().to_string())
        }
        (None, Some(baseline)) => (None, args.scale, format!("{baseline} baseline")),
        (Some(_), Some(_)) => bail!("--ckpt and --baseline are mutually exclusive"),
        (None, None) => unreachable!("clap enforces one of --ckpt/--baseline"),
    };

    let dataset = DatasetIndex::scan(&args.data, scale)?;
    let mut rows = Vec::new();
    for idx in 0..dataset.len() {
        let (hr, lr) = dataset.load_pair(idx)?;
        let output = match (&model, args.baseline.as_deref()) {
            (Some(m), _) => super_resolve(m, &lr)?,
            (None, Some("bicubic")) => bicubic_resize(&lr, hr.height, hr.width)?,
            (None, Some("identity")) => hr.clone(),
            _ => unreachable!(),
        };
        let (psnr_db, ssim_v) = evaluate(&output, &hr, scale)?;
        rows.push(EvalRow { name: dataset.pairs[idx].stem.clone(), psnr_db, ssim: ssim_v });
    }
    let report = EvalReport::new(scale, label, rows);
    if args.json {
        print!("{}", report.jsonl());
    } else {
        print!("{}", report.table());
    }
    if let Some(path) = &args.out {
        std::fs::write(path, report.jsonl())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_infer(args: InferArgs) -> anyhow::Result<()> {
    let ck = Checkpoint::load(&args.ckpt)
        .with_context(|| format!("loading checkpoint {}", args.ckpt.display()))?;
    let model = ck.restore_model()?;
    let input = load_image(&args.input)?;
    let output = super_resolve(&model, &input)?;
    save_image(&output, &args.output)?;
    println!(
        "{} ({}x{}) -> {} ({}x{})",
        args.input.display(),
        input.width,
        input.height,
        args.output.display(),
        output.width,
        output.height
    );
    Ok(())
}

#[derive(Serialize)]
struct LayoutSummary {
    per_head_channels: usize,
    intra_cube_extent: (usize, usize, usize),
    intra_cube_count: usize,
    intra_tokens_per_cube: usize,
    inter_cube_extent: (usize, usize, usize),
    inter_cube_count: usize,
    inter_tokens_per_cube: usize,
}

#[derive(Serialize)]
struct InspectOutput {
    config: ModelConfig,
    per_block: Vec<(String, usize)>,
    total_params: usize,
    published_target: Option<usize>,
    deviation_percent: Option<f64>,
    flops_at_res: u64,
    res: (usize, usize),
    layout: LayoutSummary,
}

/// Published parameter totals (Tables 1-2) for the default shape:
/// 6 groups, 64 channels, 4 heads, 8x8x4 cubes.
fn published_target(cfg: &ModelConfig) -> Option<usize> {
    let default_shape = cfg.n_groups == 6
        && cfg.channels == 64
        && cfg.heads == 4
        && cfg.intra_spec == CubeSpec::block(8, 8, 4)
        && cfg.inter_spec == CubeSpec::grid(8, 8, 4);
    if !default_shape {
        return None;
    }
    Some(match (cfg.variant, cfg.scale) {
        (Variant::Full, 2) => 778_000,
        (Variant::Full, 3) => 787_000,
        (Variant::Full, 4) => 799_000,
        (Variant::Lite, 2) => 349_000,
        (Variant::Lite, 3) => 358_000,
        (Variant::Lite, 4) => 370_000,
        _ => return None,
    })
}

fn cmd_inspect(args: InspectArgs) -> anyhow::Result<()> {
    let config = match &args.ckpt {
        Some(path) => {
            Checkpoint::load(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?
                .config
        }
        None => args.model.to_config(),
    };
    let mut model: Model<f32> = Model::new(&config, 0)?;

    // aggregate parameter counts per block (second path component for groups)
    let mut per_block: Vec<(String, usize)> = Vec::new();
    for (path, count) in model.param_breakdown() {
        let parts: Vec<&str> = path.split('.').collect();
        let block = if parts[0] == "ctg" {
            format!("{}.{}.{}", parts[0], parts[1], parts[2])
        } else {
            parts[0].to_string()
        };
        match per_block.last_mut() {
            Some((name, total)) if *name == block => *total += count,
            _ => per_block.push((block, count)),
        }
    }
    let total = model.param_count();
    let target = published_target(&config);
    let deviation = target.map(|t| (total as f64 - t as f64) / t as f64 * 100.0);

    let (h, w) = args.res;
    let attn_channels = match config.variant {
        Variant::Full => config.channels,
        Variant::Lite => config.channels / 2,
    };
    let per_head = attn_channels / config.heads;
    let intra = &config.intra_spec;
    let inter = &config.inter_spec;
    let layout = LayoutSummary {
        per_head_channels: per_head,
        intra_cube_extent: (intra.h, intra.w, intra.c),
        intra_cube_count: intra.cube_count(per_head, h, w) * config.heads,
        intra_tokens_per_cube: intra.cube_len(per_head, h, w),
        inter_cube_extent: (h / inter.h, w / inter.w, per_head / inter.c),
        inter_cube_count: inter.cube_count(per_head, h, w) * config.heads,
        inter_tokens_per_cube: inter.cube_len(per_head, h, w),
    };
    let out = InspectOutput {
        config,
        per_block,
        total_params: total,
        published_target: target,
        deviation_percent: deviation,
        flops_at_res: flops_estimate(&config, h, w),
        res: (h, w),
        layout,
    };

    if args.json {
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    println!("{} x{}  {} groups, {} channels, {} heads", config.variant, config.scale, config.n_groups, config.channels, config.heads);
    println!("{:<16} {:>10}", "block", "params");
    for (name, count) in &out.per_block {
        println!("{name:<16} {count:>10}");
    }
    println!("{:<16} {:>10}", "total", out.total_params);
    if let (Some(t), Some(d)) = (out.published_target, out.deviation_percent) {
        println!("published target {t} ({d:+.2}%)");
    }
    println!(
        "flops at {}x{}: {:.3} G",
        h,
        w,
        out.flops_at_res as f64 / 1e9
    );
    println!(
        "cube layout at {}x{} (per head {} channels):",
        h, w, out.layout.per_head_channels
    );
    println!(
        "  intra: {:?} extents, {} cubes of {} tokens",
        out.layout.intra_cube_extent, out.layout.intra_cube_count, out.layout.intra_tokens_per_cube
    );
    println!(
        "  inter: {:?} extents, {} cubes of {} tokens",
        out.layout.inter_cube_extent, out.layout.inter_cube_count, out.layout.inter_tokens_per_cube
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn spec_dims_parser() {
        assert_eq!(parse_spec_dims("8,8,4").unwrap(), (8, 8, 4));
        assert!(parse_spec_dims("8,8").is_err());
        assert_eq!(parse_res("48x64").unwrap(), (48, 64));
    }
}
