//! `hoi-refine`: scene synthesis, training, evaluation, and gradient checks.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hoi_refine::autodiff::Fault;
use hoi_refine::params::RefinerParams;
use hoi_refine::synth::{load_dataset, write_dataset};
use hoi_refine::train::{evaluate_scenes, full_pipeline_gradcheck, train_with, GradcheckConfig};
use hoi_refine::{generate_dataset, save_mesh, GraphConfig, ModelDims};

use config::{FileConfig, GraphFlags, TrainFlags};
use report::{write_graphs, write_json, write_loss_csv, MetricsFile, RunRecord};

#[derive(Parser)]
#[command(
    name = "hoi-refine",
    version,
    about = "Graph-based refinement of hand and object meshes"
)]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic grasp scenes.
    Synth(SynthArgs),
    /// Train a refiner on a scene directory.
    Train(TrainArgs),
    /// Report initial and refined metrics for a checkpoint.
    Eval(EvalArgs),
    /// Finite-difference check of the full training gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads for scene-level parallelism (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct GraphArgs {
    /// Attention threshold.
    #[arg(long)]
    gamma: Option<f64>,
    /// Drop common-relation edges.
    #[arg(long)]
    no_ec: bool,
    /// Drop attention-guided edges.
    #[arg(long)]
    no_ea: bool,
}

impl GraphArgs {
    fn flags(&self) -> GraphFlags {
        GraphFlags {
            gamma: self.gamma,
            no_ec: self.no_ec,
            no_ea: self.no_ea,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Std-dev of the smooth vertex noise (mm).
    #[arg(long)]
    vertex_sigma: Option<f64>,
    /// Rigid translation magnitude (mm).
    #[arg(long)]
    translation: Option<f64>,
    /// Maximum rigid rotation (degrees).
    #[arg(long)]
    rotation_deg: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// 1-based epoch from which the reduced learning rate applies.
    #[arg(long)]
    lr_drop_epoch: Option<usize>,
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write refined meshes as OBJ.
    #[arg(long)]
    export_meshes: bool,
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    ReluMask,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    directions: Option<usize>,
    /// Descriptor, hidden, and attention widths.
    #[arg(long, num_args = 3, value_names = ["D", "H", "A"])]
    widths: Option<Vec<usize>>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Corrupt a backward rule (negative control).
    #[arg(long, hide = true)]
    inject_fault: Option<FaultArg>,
    #[command(flatten)]
    common: Common,
}

/// Runs `f` on a pool of `threads` workers; results do not depend on the count.
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .context("building thread pool")?;
    pool.install(f)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn synth(args: SynthArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let count = args.count.or(file.count).unwrap_or(20);
    if count == 0 {
        bail!("count must be ≥ 1");
    }
    let seed = args.seed.or(file.seed).unwrap_or(1);
    let params = config::scene_params(&file, args.vertex_sigma, args.translation, args.rotation_deg)?;
    let scenes = with_threads(args.common.threads.or(file.threads), || {
        Ok(generate_dataset(seed, count, &params)?)
    })?;
    prepare_out(&args.out)?;
    let manifest = write_dataset(&scenes, seed, &params, &args.out)?;
    println!(
        "seed {seed}: wrote {} scenes to {}",
        manifest.scenes.len(),
        args.out.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let cfg = config::train_config(
        &file,
        TrainFlags {
            seed: args.seed,
            epochs: args.epochs,
            lr: args.lr,
            lr_drop_epoch: args.lr_drop_epoch,
            graph: args.graph.flags(),
        },
    )?;
    let (manifest, scenes) = load_dataset(&args.scenes)?;
    prepare_out(&args.out)?;
    println!(
        "seed {}: training on {} scenes for {} epochs (lr {})",
        cfg.seed,
        scenes.len(),
        cfg.epochs,
        cfg.lr
    );
    let threads = args.common.threads.or(file.threads);
    let (outcome, evals) = with_threads(threads, || {
        let every = (cfg.epochs / 10).max(1);
        let outcome = train_with(&scenes, &cfg, |r| {
            if r.epoch == 1 || r.epoch % every == 0 || r.epoch == cfg.epochs {
                println!("epoch {:>5}  loss {:.6}", r.epoch, r.loss_total);
            }
        })?;
        let evals = evaluate_scenes(&scenes, &outcome.params, &cfg.graph, cfg.surface_samples)?;
        Ok((outcome, evals))
    })?;

    outcome.params.save(args.out.join("checkpoint.json"))?;
    write_loss_csv(&args.out.join("loss.csv"), &outcome.curve)?;
    let metrics = MetricsFile::new(cfg.seed, &manifest.scenes, &evals);
    write_json(&args.out.join("metrics.json"), &metrics)?;
    write_graphs(&args.out.join("graphs.json"), &cfg.graph, &manifest.scenes, &evals)?;
    write_json(&args.out.join("run.json"), &RunRecord::train(&cfg, manifest.seed))?;
    metrics.print();
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let graph: GraphConfig = config::graph_config(&file, args.graph.flags())?;
    let params = RefinerParams::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    if let Some(dims) = file.dims {
        if dims != params.dims {
            bail!(
                "checkpoint widths {:?} do not match configured widths {:?}",
                params.dims,
                dims
            );
        }
    }
    let surface_samples = file.surface_samples.unwrap_or(hoi_refine::losses::SURFACE_SAMPLES);
    let (manifest, scenes) = load_dataset(&args.scenes)?;
    prepare_out(&args.out)?;
    let evals = with_threads(args.common.threads.or(file.threads), || {
        Ok(evaluate_scenes(&scenes, &params, &graph, surface_samples)?)
    })?;
    if args.export_meshes {
        for (name, e) in manifest.scenes.iter().zip(&evals) {
            let dir = args.out.join("meshes").join(name);
            prepare_out(&dir)?;
            save_mesh(&e.refined_hand, dir.join("hand_refined.obj"))?;
            save_mesh(&e.refined_obj, dir.join("obj_refined.obj"))?;
        }
    }
    let metrics = MetricsFile::new(manifest.seed, &manifest.scenes, &evals);
    write_json(&args.out.join("metrics.json"), &metrics)?;
    write_graphs(&args.out.join("graphs.json"), &graph, &manifest.scenes, &evals)?;
    metrics.print();
    Ok(())
}

/// Returns whether the check passed.
fn gradcheck(args: GradcheckArgs) -> Result<bool> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let mut cfg = GradcheckConfig::default();
    cfg.seed = args.seed.or(file.seed).unwrap_or(cfg.seed);
    cfg.directions = args.directions.unwrap_or(cfg.directions);
    cfg.tolerance = args.tolerance.unwrap_or(cfg.tolerance);
    if let Some(w) = args.widths {
        cfg.dims = ModelDims {
            descriptor: w[0],
            hidden: w[1],
            attention: w[2],
        };
    } else if let Some(d) = file.dims {
        cfg.dims = d;
    }
    cfg.dims.validate()?;
    if cfg.directions == 0 {
        bail!("directions must be ≥ 1");
    }
    let fault = args.inject_fault.map(|f| match f {
        FaultArg::ReluMask => Fault::ReluIgnoresMask,
    });
    let report = with_threads(args.common.threads.or(file.threads), || {
        Ok(full_pipeline_gradcheck(&cfg, fault)?)
    })?;
    let pass = report.max_relative_error < cfg.tolerance;
    println!(
        "gradcheck seed {} directions {}: max relative error {:e} ({})",
        cfg.seed,
        cfg.directions,
        report.max_relative_error,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Synth(a) => synth(a).map(|_| true),
        Command::Train(a) => train(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
