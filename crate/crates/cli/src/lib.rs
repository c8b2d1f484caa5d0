//! Command-line front end: data generation, training, evaluation, latent-size sweeps,
//! timing reports and scripted reproduction runs.

pub mod commands;
pub mod config;
pub mod manifest;

use std::fmt;
use std::path::PathBuf;

use anyhow::bail;
use clap::{Args, Parser, Subcommand};
use kpca_deeponet::data::Synthetic2dSpec;
use kpca_deeponet::{Execution, Variant};

use crate::commands::{BenchSpec, GenDataArgs, SweepPlan};
use crate::config::{parse_list, parse_usize_list, RunConfig};

/// Bad invocation or configuration; the binary exits with status 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const THREADS_ENV: &str = "KPCADON_THREADS";

#[derive(Debug, Parser)]
#[command(name = "kpcadon", version, about = "Kernel-PCA DeepONet surrogates: train, evaluate, sweep, time")]
pub struct Cli {
    /// Run every trial and batch on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH", conflicts_with = "problem")]
    pub config: Option<PathBuf>,
    /// Preset to start from when no config file is given.
    #[arg(long, value_name = "NAME")]
    pub problem: Option<String>,
    #[arg(long, value_name = "kpca|pod")]
    pub variant: Option<Variant>,
    /// Latent sizes, e.g. `4,8,12` or `2-6`.
    #[arg(long, value_name = "LIST")]
    pub p: Option<String>,
    #[arg(long, value_name = "LIST", conflicts_with = "trials")]
    pub seeds: Option<String>,
    /// Use seeds 0..K.
    #[arg(long, value_name = "K")]
    pub trials: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train_data: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub test_data: Option<PathBuf>,
    /// Override the number of training epochs.
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
}

impl CommonArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match (&self.config, &self.problem) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => RunConfig::from_preset(name)?,
            (None, None) => RunConfig::from_preset("1d-nonlinear")?,
        };
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(p) = &self.p {
            cfg.p = parse_usize_list(p)?;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_list(s)?;
        }
        if let Some(k) = self.trials {
            if k == 0 {
                bail!(UsageError("--trials must be at least 1".into()));
            }
            cfg.seeds = (0..k).collect();
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(p) = &self.train_data {
            cfg.train_data = p.clone();
        }
        if let Some(p) = &self.test_data {
            cfg.test_data = p.clone();
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/test dataset files (1d-nonlinear or synthetic-2d).
    GenData {
        problem: String,
        out: PathBuf,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        /// Grid points of the 1-D problem.
        #[arg(long, default_value_t = kpca_deeponet::data::DEFAULT_1D_GRID)]
        grid: usize,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long, default_value_t = 16)]
        nx: usize,
        #[arg(long, default_value_t = 12)]
        ny: usize,
        #[arg(long, default_value_t = 16)]
        input_points: usize,
        #[arg(long, default_value_t = 2)]
        fields: usize,
    },
    /// Convert 1-D data held as two CSV files (inputs, outputs) into a dataset file.
    ImportCsv {
        inputs: PathBuf,
        outputs: PathBuf,
        out: PathBuf,
    },
    /// Train one model per (p, seed).
    Train(CommonArgs),
    /// Relative errors of trained models on a dataset.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Model files; by default the config's models for `--variant`, `--p` and the seeds.
        #[arg(long, value_name = "PATH")]
        model: Vec<PathBuf>,
        /// Dataset to evaluate on (default: the config's test data).
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        /// Replace branch predictions by the reducer's projection of the true outputs.
        #[arg(long)]
        oracle_latents: bool,
    },
    /// Error versus latent size for both variants over several seeds.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Output-kernel degrees for the KPCA rows (default: the configured degree).
        #[arg(long, value_name = "LIST")]
        dv: Option<String>,
    },
    /// Time the batched forward map against training-set size.
    BenchTime {
        #[arg(long, value_name = "LIST")]
        n: Option<String>,
        #[arg(long, value_name = "LIST")]
        p: Option<String>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_name = "kpca|pod")]
        variant: Option<Variant>,
        #[arg(long, value_name = "DIR", default_value = "runs/bench-time")]
        out: PathBuf,
    },
    /// Run a reproduction manifest (built-in name or file).
    Repro {
        manifest: Option<String>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// List built-in manifests.
        #[arg(long)]
        list: bool,
    },
}

pub fn parse_args<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(args)
}

fn exec_mode(cli_sequential: bool) -> Execution {
    if cli_sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

/// Run a parsed command, printing its human-readable summary.
pub fn execute(cli: Cli) -> anyhow::Result<()> {
    let exec = exec_mode(cli.sequential);
    match cli.command {
        Command::GenData {
            problem,
            out,
            n_train,
            n_test,
            grid,
            samples,
            nx,
            ny,
            input_points,
            fields,
        } => {
            let (tr, te) = commands::gen_data(&GenDataArgs {
                problem,
                out,
                n_train,
                n_test,
                grid,
                synthetic: Synthetic2dSpec {
                    samples,
                    nx,
                    ny,
                    input_points,
                    fields,
                },
            })?;
            println!("wrote {} and {}", tr.display(), te.display());
        }
        Command::ImportCsv { inputs, outputs, out } => {
            let ds = kpca_deeponet::FieldDataset::import_csv(&inputs, &outputs)?;
            ds.save(&out)?;
            println!("wrote {} ({} samples, m = {})", out.display(), ds.len(), ds.m());
        }
        Command::Train(common) => {
            let cfg = common.resolve()?;
            let records = commands::train(&cfg, exec)?;
            for r in records {
                println!(
                    "{} p={} seed={} final loss {:.6e} -> {}",
                    r.variant,
                    r.p,
                    r.seed,
                    r.final_loss,
                    r.model_path.display()
                );
            }
        }
        Command::Eval {
            common,
            model,
            data,
            oracle_latents,
        } => {
            let cfg = common.resolve()?;
            let expect = model.is_empty().then_some(cfg.variant);
            let models = if model.is_empty() {
                if cfg.p.len() != 1 {
                    bail!(UsageError("eval needs a single --p (or explicit --model files)".into()));
                }
                cfg.seeds
                    .iter()
                    .map(|&s| cfg.out.join(commands::model_file_name(cfg.variant, cfg.p[0], s)))
                    .collect()
            } else {
                model
            };
            let out = match (&common.out, common.config.is_some() || common.problem.is_some()) {
                (Some(o), _) => o.clone(),
                (None, true) => cfg.out.clone(),
                (None, false) => models[0].parent().map(PathBuf::from).unwrap_or_default(),
            };
            let data = data.unwrap_or_else(|| cfg.test_data.clone());
            let report = commands::eval(&models, expect, &data, oracle_latents, &out, exec)?;
            print!("{}", report.summary());
        }
        Command::Sweep { common, dv } => {
            let cfg = common.resolve()?;
            let variants = match common.variant {
                Some(v) => vec![v],
                None => vec![Variant::Kpca, Variant::Pod],
            };
            let kpca_degrees = match dv {
                Some(list) => parse_list(&list)?
                    .into_iter()
                    .map(|d| u32::try_from(d).map_err(|_| UsageError(format!("degree {d} too large"))))
                    .collect::<Result<Vec<_>, _>>()?,
                None => vec![cfg.kernel_v.degree],
            };
            let plan = SweepPlan {
                variants,
                kpca_degrees,
            };
            cfg.validate_for(&plan.variants)?;
            let train = commands::load_dataset(&cfg.train_data, "training")?;
            let test = commands::load_dataset(&cfg.test_data, "test")?;
            let result = commands::sweep(&cfg, &plan, &train, &test, exec)?;
            result.write(&cfg.out)?;
            print!("{}", result.table());
            println!("(population std over {} seeds; wrote {}/sweep.csv)", cfg.seeds.len(), cfg.out.display());
        }
        Command::BenchTime {
            n,
            p,
            batch,
            reps,
            warmup,
            epochs,
            variant,
            out,
        } => {
            let mut spec = BenchSpec::default();
            if let Some(n) = n {
                spec.n_train = parse_usize_list(&n)?;
            }
            if let Some(p) = p {
                spec.p = parse_usize_list(&p)?;
            }
            if let Some(b) = batch {
                spec.batch = b;
            }
            if let Some(r) = reps {
                spec.reps = r;
            }
            if let Some(w) = warmup {
                spec.warmup = w;
            }
            if let Some(e) = epochs {
                spec.epochs = e;
            }
            if let Some(v) = variant {
                spec.variants = vec![v];
            }
            let rows = commands::bench_time(&spec, exec)?;
            commands::write_bench(&rows, &out)?;
            println!("variant  n_train    p  median ms   total bytes");
            for r in &rows {
                match &r.error {
                    None => println!(
                        "{:<7} {:>8} {:>4} {:>10.4} {:>13}",
                        r.variant.as_str(),
                        r.n_train,
                        r.p,
                        r.median_ms,
                        r.total_bytes()
                    ),
                    Some(e) => println!("{:<7} {:>8} {:>4} failed: {e}", r.variant.as_str(), r.n_train, r.p),
                }
            }
        }
        Command::Repro { manifest, out, list } => {
            if list {
                for (name, _) in manifest::BUILTIN {
                    println!("{name}");
                }
                return Ok(());
            }
            let Some(name) = manifest else {
                bail!(UsageError("repro needs a manifest name or path (see --list)".into()));
            };
            let m = manifest::Manifest::resolve(&name)?;
            let out = out.unwrap_or_else(|| PathBuf::from("runs").join(&m.name));
            let report = m.run(&out)?;
            print!("{}", report.render());
            if report.verdict == manifest::Verdict::Fail {
                bail!("{} failed its checks", m.name);
            }
        }
    }
    Ok(())
}

/// Entry point shared by the binary: returns the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                kpca_deeponet::exec::init_thread_pool(n);
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got '{v}'");
                return 2;
            }
        }
    }
    let cli = match parse_args(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.downcast_ref::<UsageError>().is_some()) {
                2
            } else {
                1
            }
        }
    }
}
