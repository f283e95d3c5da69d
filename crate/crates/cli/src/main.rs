//! `ddr simulate|train|benchmark --config <path> [--seed N] [--out DIR]`
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use ddr_core::bench::run_benchmark;
use ddr_core::datagen::{provenance_json, standardize, to_csv_string, Dataset, Task};
use ddr_core::svg::scatter_svg;
use ddr_core::trainer::{training_log_csv, DdrModel, DdrTrainer};
use ddr_core::{DdrError, Result};
use log::info;

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "ddr", version, about = "Deep dimension reduction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `out`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset and write it as CSV with a provenance sidecar.
    Simulate(Common),
    /// Train a model; writes a checkpoint and the per-epoch log.
    Train(Common),
    /// Cross-validated comparison of the configured methods.
    Benchmark(Common),
}

fn exit_code(e: &DdrError) -> u8 {
    match e {
        DdrError::Numeric(_) | DdrError::Domain { .. } => 3,
        _ => 2,
    }
}

/// Write via a temporary sibling and rename, so readers never see partial files.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    fs::write(&tmp, contents).map_err(|e| DdrError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| DdrError::io(path, e))
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
}

fn setup(c: &Common) -> Result<Ctx> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|e| DdrError::io(&out, e))?;
    Ok(Ctx { cfg, out })
}

fn simulate(ctx: &Ctx) -> Result<()> {
    let ds = ctx.cfg.dataset()?;
    write_atomic(&ctx.out.join("data.csv"), to_csv_string(&ds).as_bytes())?;
    write_atomic(&ctx.out.join("data.json"), provenance_json(&ds).as_bytes())?;
    println!("wrote {} rows x {} columns", ds.n(), ds.x.cols() + ds.y.cols());
    Ok(())
}

fn train(ctx: &Ctx) -> Result<()> {
    let raw = ctx.cfg.dataset()?;
    let (ds, scaler) = if ctx.cfg.standardize {
        let (d, s) = standardize(&raw)?;
        (d, Some(s))
    } else {
        (raw, None)
    };
    let cfg = ctx.cfg.train_config(ds.task)?;
    let mut trainer = match &ctx.cfg.resume {
        Some(path) => {
            let mut model = DdrModel::load(path).map_err(|e| match e {
                DdrError::Io { path, source } => {
                    DdrError::Checkpoint(format!("{}: {source}", path.display()))
                }
                other => other,
            })?;
            model.config.outer_loops = cfg.outer_loops;
            DdrTrainer::resume(model, ds.x.clone(), ds.response_matrix())?
        }
        None => DdrTrainer::new(ds.x.clone(), ds.response_matrix(), cfg.clone())?,
    };
    let start = Instant::now();
    while trainer.epochs_done() < cfg.outer_loops {
        let rec = trainer.epoch()?;
        if rec.epoch % 50 == 0 {
            info!(
                "epoch {}: dcov {:.4} match {:.4} disc {:.4}",
                rec.epoch, rec.dcov_term, rec.match_term, rec.disc_loss
            );
        }
    }
    let model = trainer.into_model();
    write_atomic(&ctx.out.join("model.bin"), &model.weights_bytes())?;
    write_atomic(&ctx.out.join("model.bin.json"), model.metadata_json().as_bytes())?;
    write_atomic(
        &ctx.out.join("training_log.csv"),
        training_log_csv(&model.training_log).as_bytes(),
    )?;
    if let Some(s) = scaler {
        let json = serde_json::to_string_pretty(&s).expect("scaler serialises");
        write_atomic(&ctx.out.join("scaler.json"), json.as_bytes())?;
    }
    println!(
        "trained {} epochs in {:.1}s",
        model.training_log.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn thread_budget() -> usize {
    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("DDR_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(cap) if cap >= 1 => cap.min(avail),
        _ => avail,
    }
}

fn quartile_labels(ds: &Dataset, rows: &[f64]) -> Vec<usize> {
    let mut sorted = ds.y.column(0);
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p) as usize];
    let cuts = [q(0.25), q(0.5), q(0.75)];
    rows.iter().map(|v| cuts.iter().filter(|&&c| *v > c).count()).collect()
}

fn benchmark(ctx: &Ctx) -> Result<()> {
    let ds = ctx.cfg.dataset()?;
    let bc = ctx.cfg.bench_config(ds.task, thread_budget())?;
    let start = Instant::now();
    let report = run_benchmark(&ds, &bc)?;
    let wall = start.elapsed().as_secs_f64();
    write_atomic(&ctx.out.join("report.csv"), report.summary_csv().as_bytes())?;
    write_atomic(&ctx.out.join("folds.csv"), report.folds_csv().as_bytes())?;
    let run = serde_json::json!({
        "config": report.config,
        "config_hash": report.config_hash,
        "seed": report.seed,
        "standardized": report.standardized,
        "dataset": serde_json::from_str::<serde_json::Value>(&provenance_json(&ds)).expect("valid json"),
        "wall_clock_seconds": wall,
    });
    write_atomic(
        &ctx.out.join("run.json"),
        serde_json::to_string_pretty(&run).expect("json").as_bytes(),
    )?;
    if ctx.cfg.benchmark.svg {
        for f in report.folds.iter().filter(|f| f.fold == 0) {
            let Some((feats, labels)) = &f.test_features else { continue };
            if feats.cols() != 2 {
                continue;
            }
            let labels = match ds.task {
                Task::Classification => labels.clone(),
                Task::Regression => {
                    let (_, te) = ddr_core::datagen::kfold_split(ds.n(), bc.folds, bc.seed)?.split(0);
                    quartile_labels(&ds, &ds.y.select_rows(&te).column(0))
                }
            };
            let svg = scatter_svg(feats, &labels, &format!("{} features, fold 0", f.method))?;
            write_atomic(&ctx.out.join(format!("features_{}.svg", f.method)), svg.as_bytes())?;
        }
    }
    print!("{}", report.table());
    if report.summaries.iter().any(|s| s.failed) {
        eprintln!("some folds failed; see folds.csv");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&Ctx) -> Result<()>) = match &cli.command {
        Command::Simulate(c) => (c, simulate),
        Command::Train(c) => (c, train),
        Command::Benchmark(c) => (c, benchmark),
    };
    match setup(common).and_then(|ctx| run(&ctx)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
