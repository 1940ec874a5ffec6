//! `trra` command-line front end.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{ExperimentConfig, PolicyArgs};
use trra_core::aggregator::{self, decide_all, fit_weights, metrics, read_predictions};
use trra_core::corpus::{self, augment_corpus, bench, synthetic_image, PipelineConfig};
use trra_core::earlystop::{replay, EarlyStopState, DEFAULT_PATIENCE};
use trra_core::gradcampp::{self, FeatureMapBundle, HOT_REGION_THRESHOLD};
use trra_core::gridsearch::{emit_grid, rank, read_grid, read_val_metrics, write_ranked};
use trra_core::refnet::{to_bundle, RefNetParams};
use trra_core::splitter::{read_roster, split_subjects, DEFAULT_MAX_RETRIES};
use trra_core::tensor::{image_to_tensor, Image8, VolumeGrid};
use trra_core::Variant;

#[derive(Parser)]
#[command(
    name = "trra",
    version,
    about = "Seeded augmentation, subject splitting, slice voting and Grad-CAM++ tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resize, augment and crop every PNG/VOL1 file of a directory.
    Augment(AugmentArgs),
    /// Subject-level train/val/test split with balance checks.
    Split(SplitArgs),
    /// Fit slice weights on validation predictions and vote on test subjects.
    Aggregate(AggregateArgs),
    /// Grad-CAM++ heatmap and overlay from a feature-map bundle.
    Explain(ExplainArgs),
    /// Emit a policy grid or rank it by validation accuracy.
    #[command(subcommand)]
    Gridsearch(GridCommand),
    /// Throughput of the augmentation pipeline per thread count.
    Bench(BenchArgs),
    /// Patience-based early stopping on a validation metric.
    Earlystop(EarlystopArgs),
    /// Write synthetic images, volumes and a roster for demos.
    Synth(SynthArgs),
    /// Run the reference network on an image and export its bundle.
    Refnet(RefnetArgs),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Resize target as HEIGHTxWIDTH before cropping.
    #[arg(long, value_parser = parse_dims)]
    resize: Option<(usize, usize)>,
    #[arg(long)]
    crop: Option<usize>,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    common: Common,
    /// CSV with header subject_id,label,age,sex.
    #[arg(long)]
    roster: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
    max_retries: u32,
}

#[derive(Args)]
struct AggregateArgs {
    #[command(flatten)]
    common: Common,
    /// Validation slice predictions (subject_id,slice_index,logit0,logit1,label).
    #[arg(long)]
    val: Option<PathBuf>,
    /// Test slice predictions, same schema.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    slices_per_subject: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    /// Directory holding A.tsr, G.tsr and meta.json.
    #[arg(long)]
    bundle: PathBuf,
    /// PNG to draw the overlay on.
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    alpha_blend: f64,
    /// Outline the region at or above --threshold in white.
    #[arg(long)]
    boundary: bool,
    #[arg(long, default_value_t = HOT_REGION_THRESHOLD)]
    threshold: f64,
    /// Also write the plain Grad-CAM map.
    #[arg(long)]
    baseline: bool,
}

#[derive(Subcommand)]
enum GridCommand {
    /// Write one JSON file per configuration plus grid.json.
    Emit {
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        output: PathBuf,
    },
    /// Rank configurations by validation accuracy.
    Rank {
        /// grid.json written by `emit`.
        #[arg(long)]
        grid: PathBuf,
        /// CSVs with header config_id,val_accuracy.
        #[arg(long = "val-metrics", num_args = 1.., required = true)]
        val_metrics: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Corpus directory; a synthetic corpus is used when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    synthetic: usize,
    /// Comma-separated thread counts.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
    threads: Vec<usize>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EarlystopArgs {
    /// File with one metric per line; replays the whole sequence.
    #[arg(long, conflicts_with_all = ["state", "metric"])]
    metrics: Option<PathBuf>,
    /// State file updated in place with --metric.
    #[arg(long, requires = "metric")]
    state: Option<PathBuf>,
    #[arg(long, requires = "state", allow_negative_numbers = true)]
    metric: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_PATIENCE)]
    patience: u32,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    images: usize,
    #[arg(long, default_value_t = 208)]
    height: usize,
    #[arg(long, default_value_t = 179)]
    width: usize,
    /// Number of VOL1 volumes to write.
    #[arg(long, default_value_t = 0)]
    volumes: usize,
    /// Sagittal extent of each volume.
    #[arg(long, default_value_t = 169)]
    sagittal: usize,
    /// Number of subjects in roster.csv; none when 0.
    #[arg(long, default_value_t = 0)]
    roster: usize,
}

#[derive(Args)]
struct RefnetArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 8)]
    channels: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Class whose score is explained; the predicted class when absent.
    #[arg(long)]
    class: Option<u8>,
    /// Directory of existing parameters to use instead of a fresh init.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HEIGHTxWIDTH")?;
    let h = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    let w = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    Ok((h, w))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.with_context(|| format!("--{name} is required (flag or config field)"))
}

fn cmd_augment(args: AugmentArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(args.common.config.as_deref())?;
    let policy = args.policy.resolve(cfg.policy.clone())?;
    let input = required(args.input.or(cfg.input), "input")?;
    let output = required(args.output.or(cfg.output), "output")?;
    let mut pipeline = PipelineConfig::new(args.common.seed.or(cfg.seed).unwrap_or(0), policy);
    if let Some(r) = args.resize.or(cfg.resize) {
        pipeline.resize = r;
    }
    if let Some(c) = args.crop.or(cfg.crop) {
        pipeline.crop = c;
    }
    let threads = args.threads.or(cfg.threads).unwrap_or(1);
    let manifest = augment_corpus(&input, &output, &pipeline, threads)?;
    println!(
        "augmented {} items into {} ({} errors)",
        manifest.items.len(),
        output.display(),
        manifest.errors.len()
    );
    if !manifest.errors.is_empty() {
        for e in &manifest.errors {
            eprintln!("  {}: {}", e.source, e.error);
        }
        bail!("{} inputs failed; see manifest.json", manifest.errors.len());
    }
    Ok(())
}

fn cmd_split(args: SplitArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(args.common.config.as_deref())?;
    let roster_path = required(args.roster.or(cfg.roster), "roster")?;
    let output = required(args.output.or(cfg.output), "output")?;
    let seed = args.common.seed.or(cfg.seed).unwrap_or(0);
    let roster = read_roster(&roster_path)?;
    let split = split_subjects(&roster, seed, args.max_retries)?;
    create_dir(&output)?;
    write_json(&output.join("split.json"), &split)?;
    println!(
        "train {} / val {} / test {} subjects, min balance p = {:.4} after {} attempt(s)",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        split.balance.min_p(),
        split.attempts
    );
    if split.warning {
        eprintln!(
            "warning: no balanced split within {} retries; kept the best one",
            args.max_retries
        );
    }
    Ok(())
}

fn cmd_aggregate(args: AggregateArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(args.common.config.as_deref())?;
    let val = required(args.val.or(cfg.val), "val")?;
    let test = required(args.test.or(cfg.test), "test")?;
    let output = required(args.output.or(cfg.output), "output")?;
    let slices = args
        .slices_per_subject
        .or(cfg.slices_per_subject)
        .unwrap_or(aggregator::DEFAULT_SLICES_PER_SUBJECT);
    let weights = fit_weights(&read_predictions(&val)?, slices)?;
    let decisions = decide_all(&read_predictions(&test)?, &weights)?;
    let report = metrics(&decisions)?;
    create_dir(&output)?;
    write_json(&output.join("weights.json"), &weights)?;
    write_json(&output.join("decisions.json"), &decisions)?;
    write_json(&output.join("metrics.json"), &report)?;
    println!(
        "{} subjects, accuracy {:.4}, sensitivity {}, specificity {}, AUC {}",
        report.n,
        report.accuracy,
        fmt_opt(report.sensitivity),
        fmt_opt(report.specificity),
        fmt_opt(report.auc)
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn cmd_explain(args: ExplainArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.alpha_blend) {
        bail!("--alpha-blend must lie in [0, 1]");
    }
    let bundle = FeatureMapBundle::<f64>::read_dir(&args.bundle)?;
    let map = gradcampp::heatmap(&bundle)?;
    create_dir(&args.output)?;
    map.to_tensor().write_tsr1(args.output.join("heatmap.tsr"))?;
    if args.baseline {
        gradcampp::gradcam_baseline(&bundle)?
            .to_tensor()
            .write_tsr1(args.output.join("gradcam.tsr"))?;
    }
    let base = match &args.base {
        Some(p) => Image8::read_png(p)?,
        None => Image8::filled(map.height, map.width, 0),
    };
    let overlay = if args.boundary {
        if !(0.0..=1.0).contains(&args.threshold) {
            bail!("--threshold must lie in [0, 1]");
        }
        gradcampp::render_overlay_with_boundary(&base, &map, args.alpha_blend, args.threshold, [255, 255, 255])
    } else {
        gradcampp::render_overlay(&base, &map, args.alpha_blend)
    };
    overlay.write_png(args.output.join("overlay.png"))?;
    let peak = map.argmax();
    println!(
        "heatmap {}×{}, peak at ({}, {})",
        map.height,
        map.width,
        peak / map.width,
        peak % map.width
    );
    Ok(())
}

fn cmd_gridsearch(cmd: GridCommand) -> Result<()> {
    match cmd {
        GridCommand::Emit { variant, output } => {
            let configs = emit_grid(variant, &output)?;
            println!(
                "wrote {} {} configs to {}",
                configs.len(),
                variant.as_str(),
                output.display()
            );
        }
        GridCommand::Rank {
            grid,
            val_metrics,
            output,
        } => {
            let configs = read_grid(&grid)?;
            let rows = rank(&configs, &read_val_metrics(&val_metrics)?)?;
            write_ranked(&output, &rows)?;
            let best = &rows[0];
            println!(
                "winner {} ({}) with val accuracy {:.4}",
                best.config_id, best.label, best.val_accuracy
            );
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(args.common.config.as_deref())?;
    let policy = args.policy.resolve(cfg.policy.clone())?;
    let seed = args.common.seed.or(cfg.seed).unwrap_or(0);
    let images: Vec<Image8> = match args.input.or(cfg.input) {
        Some(dir) => corpus::list_inputs(&dir)?
            .iter()
            .map(|p| corpus::load_images(p))
            .collect::<trra_core::Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .map(|(_, img)| img)
            .collect(),
        None => (0..args.synthetic)
            .map(|i| synthetic_image(208, 179, seed.wrapping_add(i as u64)))
            .collect(),
    };
    let report = bench(&images, &PipelineConfig::new(seed, policy), &args.threads)?;
    for run in &report.runs {
        println!(
            "threads {:>3}: {:>9.1} images/s  ({} images, {:.3} s)",
            run.threads, run.images_per_second, run.images, run.seconds
        );
    }
    for k in &report.per_kind {
        println!(
            "  {:<14} {:>8} calls {:>10.1} µs/call",
            k.kind.name(),
            k.count,
            k.mean_microseconds
        );
    }
    println!("deterministic across thread counts: {}", report.deterministic);
    if let Some(out) = args.output {
        write_json(&out, &report)?;
    }
    if !report.deterministic {
        bail!("outputs differ between thread counts");
    }
    Ok(())
}

#[derive(Serialize)]
struct ReplaySummary {
    epochs: usize,
    stop_epoch: Option<u32>,
    best_epoch: u32,
    best_metric: Option<f64>,
}

fn cmd_earlystop(args: EarlystopArgs) -> Result<()> {
    if let Some(path) = args.metrics {
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let metrics: Vec<f64> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.parse::<f64>().with_context(|| format!("bad metric {l:?}")))
            .collect::<Result<_>>()?;
        let (state, stop) = replay(args.patience, &metrics)?;
        let summary = ReplaySummary {
            epochs: metrics.len(),
            stop_epoch: stop,
            best_epoch: state.best_epoch,
            best_metric: state.best_metric,
        };
        println!("{}", serde_json::to_string(&summary)?);
        return Ok(());
    }
    let (Some(path), Some(metric)) = (args.state, args.metric) else {
        bail!("give either --metrics FILE or --state FILE --metric VALUE");
    };
    let mut state = if path.exists() {
        serde_json::from_slice(&fs::read(&path)?).with_context(|| format!("parsing {}", path.display()))?
    } else {
        EarlyStopState::new(args.patience)
    };
    let stop = state.update(metric)?;
    write_json(&path, &state)?;
    println!("{}", serde_json::json!({ "should_stop": stop, "state": state }));
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    create_dir(&args.output)?;
    corpus::write_synthetic_corpus(&args.output, args.images, args.height, args.width, args.seed)?;
    for v in 0..args.volumes {
        let (sag, cor, ax) = (args.sagittal, 48, 40);
        let data = (0..sag * cor * ax)
            .map(|i| {
                let (s, rest) = (i / (cor * ax), i % (cor * ax));
                let (y, x) = ((rest / ax) as f32, (rest % ax) as f32);
                let r2 = (y - cor as f32 / 2.0).powi(2) + (x - ax as f32 / 2.0).powi(2);
                1000.0 * (-r2 / (60.0 + s as f32 + v as f32 * 7.0)).exp()
            })
            .collect();
        VolumeGrid::new(sag, cor, ax, data)?.write_vol1(args.output.join(format!("vol_{v:03}.vol")))?;
    }
    if args.roster > 0 {
        let mut text = String::from("subject_id,label,age,sex\n");
        for i in 0..args.roster {
            // Deterministic spread of ages and sexes in both classes.
            let h = trra_core::rng::mix64(args.seed ^ i as u64);
            let age = 60.0 + (h % 300) as f64 / 10.0;
            let sex = if (h >> 20) & 1 == 0 { "M" } else { "F" };
            text.push_str(&format!("sub{i:04},{},{age:.1},{sex}\n", i % 2));
        }
        let path = args.output.join("roster.csv");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "wrote {} images, {} volumes{} to {}",
        args.images,
        args.volumes,
        if args.roster > 0 { " and roster.csv" } else { "" },
        args.output.display()
    );
    Ok(())
}

fn cmd_refnet(args: RefnetArgs) -> Result<()> {
    let params = match &args.params {
        Some(dir) => RefNetParams::<f64>::read_dir(dir)?,
        None => RefNetParams::<f64>::init(args.channels, args.seed)?,
    };
    let input = image_to_tensor::<f64>(&Image8::read_png(&args.image)?);
    let scores = trra_core::refnet::forward(&params, &input)?.scores;
    let class = match args.class {
        Some(c) if c > 1 => bail!("--class must be 0 or 1"),
        Some(c) => c,
        None => u8::from(scores[1] > scores[0]),
    };
    let bundle = to_bundle(&params, &input, class)?;
    bundle.write_dir(&args.output)?;
    params.write_dir(args.output.join("params"))?;
    println!(
        "scores ({:.6}, {:.6}); bundle for class {class} in {}",
        scores[0],
        scores[1],
        args.output.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Augment(a) => cmd_augment(a),
        Command::Split(a) => cmd_split(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Gridsearch(c) => cmd_gridsearch(c),
        Command::Bench(a) => cmd_bench(a),
        Command::Earlystop(a) => cmd_earlystop(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Refnet(a) => cmd_refnet(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
