//! The work behind each CLI verb, callable in-process.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use kpca_deeponet::data::{gen_1d_nonlinear, make_synthetic_2d, SplitSpec, Synthetic2dSpec};
use kpca_deeponet::format::write_atomic;
use kpca_deeponet::metrics::{per_sample_rel_l2, run_trials_keep};
use kpca_deeponet::operator::train_operator;
use kpca_deeponet::{
    rel_l2, rel_l2_flat, Execution, FieldDataset, KernelSpec, OperatorConfig, OperatorModel, TrialStats,
    Variant,
};

use crate::config::{ensure_dir, RunConfig};
use crate::UsageError;

pub const DATASET_EXT: &str = "kpcadat";
pub const MODEL_EXT: &str = "kpcadon";

pub fn model_file_name(variant: Variant, p: usize, seed: u64) -> String {
    format!("model_{variant}_p{p}_s{seed}.{MODEL_EXT}")
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    write_atomic(path, &csv_bytes(header, rows)?).with_context(|| format!("writing {}", path.display()))
}

pub fn load_dataset(path: &Path, what: &str) -> anyhow::Result<FieldDataset> {
    if !path.exists() {
        bail!(
            "{what} dataset {} does not exist (create it with `kpcadon gen-data`)",
            path.display()
        );
    }
    FieldDataset::load(path).with_context(|| format!("loading {what} dataset {}", path.display()))
}

// ---------------------------------------------------------------- gen-data

#[derive(Clone, Debug)]
pub struct GenDataArgs {
    pub problem: String,
    pub out: PathBuf,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub grid: usize,
    pub synthetic: Synthetic2dSpec,
}

/// Writes `train.kpcadat` and `test.kpcadat` into `out`; returns their paths.
pub fn gen_data(args: &GenDataArgs) -> anyhow::Result<(PathBuf, PathBuf)> {
    let (train, test) = match args.problem.as_str() {
        "1d-nonlinear" => gen_1d_nonlinear(
            args.n_train.unwrap_or(51),
            args.n_test.unwrap_or(51),
            args.grid,
        )?,
        "synthetic-2d" => {
            let all = make_synthetic_2d(&args.synthetic)?;
            let n = args.synthetic.samples;
            let n_train = args.n_train.unwrap_or(n - n / 4);
            let n_test = args.n_test.unwrap_or(n - n_train);
            all.split(&SplitSpec {
                train: n_train,
                test: n_test,
            })?
        }
        "cavity" | "navier-stokes" => bail!(UsageError(format!(
            "problem '{}' has no generator; supply data/{}/train.kpcadat and test.kpcadat (see import-csv)",
            args.problem, args.problem
        ))),
        other => bail!(UsageError(format!(
            "unknown problem '{other}' (generators: 1d-nonlinear, synthetic-2d)"
        ))),
    };
    ensure_dir(&args.out)?;
    let tr = args.out.join(format!("train.{DATASET_EXT}"));
    let te = args.out.join(format!("test.{DATASET_EXT}"));
    train.save(&tr)?;
    test.save(&te)?;
    Ok((tr, te))
}

// ---------------------------------------------------------------- train

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedRecord {
    pub variant: Variant,
    pub p: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub model_path: PathBuf,
}

/// Train one model per (p, seed) and write model files, loss curves and a summary.
pub fn train(cfg: &RunConfig, exec: Execution) -> anyhow::Result<Vec<TrainedRecord>> {
    cfg.validate_for(&[cfg.variant])?;
    let data = load_dataset(&cfg.train_data, "training")?;
    ensure_dir(&cfg.out)?;
    let jobs: Vec<(usize, u64)> = cfg
        .p
        .iter()
        .flat_map(|&p| cfg.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let results = kpca_deeponet::exec::map_indices(exec, jobs.len(), |i| {
        let (p, seed) = jobs[i];
        let op_cfg = cfg.operator_config(cfg.variant, p, seed);
        train_operator(&data, &op_cfg).map_err(anyhow::Error::from).and_then(|(model, report)| {
            let path = cfg.out.join(model_file_name(cfg.variant, p, seed));
            model.save(&path)?;
            let rows: Vec<Vec<String>> = report
                .epoch_loss
                .iter()
                .enumerate()
                .map(|(e, l)| vec![e.to_string(), l.to_string()])
                .collect();
            write_csv(
                &cfg.out.join(format!("loss_{}_p{p}_s{seed}.csv", cfg.variant)),
                &["epoch", "loss"],
                &rows,
            )?;
            Ok(TrainedRecord {
                variant: cfg.variant,
                p,
                seed,
                final_loss: report.final_loss().unwrap_or(f64::NAN),
                model_path: path,
            })
        })
    });
    let mut records = Vec::new();
    for (r, (p, seed)) in results.into_iter().zip(&jobs) {
        records.push(r.with_context(|| format!("training {} p={p} seed={seed}", cfg.variant))?);
    }
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.variant.to_string(),
                r.p.to_string(),
                r.seed.to_string(),
                r.final_loss.to_string(),
                r.model_path.file_name().unwrap().to_string_lossy().into_owned(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out.join("train_summary.csv"),
        &["variant", "p", "seed", "final_loss", "model"],
        &rows,
    )?;
    Ok(records)
}

// ---------------------------------------------------------------- eval

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub model: String,
    pub variant: Variant,
    pub p: usize,
    pub seed: u64,
    pub rel_l2: f64,
    pub rel_l2_flat: f64,
    pub per_sample: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub oracle: bool,
    pub records: Vec<EvalRecord>,
    /// Present when more than one model was evaluated.
    pub stats: Option<(TrialStats, TrialStats)>,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let tag = if self.oracle { " (oracle latents)" } else { "" };
        for r in &self.records {
            let _ = writeln!(
                s,
                "{} {} p={} seed={}{tag}: rel_l2 = {:.4}% (per-sample mean), {:.4}% (flattened)",
                r.model,
                r.variant,
                r.p,
                r.seed,
                100.0 * r.rel_l2,
                100.0 * r.rel_l2_flat
            );
        }
        if let Some((a, b)) = &self.stats {
            let _ = writeln!(
                s,
                "over {} trials{tag}: {:.4} +/- {:.4} % (per-sample mean), {:.4} +/- {:.4} % (flattened); population std",
                a.count(),
                100.0 * a.mean,
                100.0 * a.std,
                100.0 * b.mean,
                100.0 * b.std
            );
        }
        s
    }
}

pub fn evaluate_model(model: &OperatorModel, data: &FieldDataset, oracle: bool, exec: Execution) -> anyhow::Result<(f64, f64, Vec<f64>)> {
    let pred = model
        .predict_dataset(data, oracle, exec)
        .context("model and dataset disagree")?;
    let reference = data.outputs().view();
    Ok((
        rel_l2(pred.view(), reference)?,
        rel_l2_flat(pred.view(), reference)?,
        per_sample_rel_l2(pred.view(), reference)?,
    ))
}

/// Evaluate models on a dataset and write `eval.csv` and `eval_samples.csv` into `out`.
/// With `expect`, every model must be of that variant.
pub fn eval(
    models: &[PathBuf],
    expect: Option<Variant>,
    data_path: &Path,
    oracle: bool,
    out: &Path,
    exec: Execution,
) -> anyhow::Result<EvalReport> {
    if models.is_empty() {
        bail!(UsageError("no models to evaluate".into()));
    }
    let data = load_dataset(data_path, "evaluation")?;
    let mut records = Vec::new();
    for path in models {
        let model = match expect {
            Some(v) => OperatorModel::load_expecting(path, v),
            None => OperatorModel::load(path),
        }
        .with_context(|| format!("loading model {}", path.display()))?;
        let (e, ef, per) = evaluate_model(&model, &data, oracle, exec)
            .with_context(|| format!("evaluating {}", path.display()))?;
        records.push(EvalRecord {
            model: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
            variant: model.variant(),
            p: model.p(),
            seed: model.seed(),
            rel_l2: e,
            rel_l2_flat: ef,
            per_sample: per,
        });
    }
    let stats = if records.len() > 1 {
        let seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
        Some((
            TrialStats::from_errors(seeds.clone(), records.iter().map(|r| r.rel_l2).collect())?,
            TrialStats::from_errors(seeds, records.iter().map(|r| r.rel_l2_flat).collect())?,
        ))
    } else {
        None
    };
    ensure_dir(out)?;
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.variant.to_string(),
                r.p.to_string(),
                r.seed.to_string(),
                oracle.to_string(),
                r.rel_l2.to_string(),
                r.rel_l2_flat.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("eval.csv"),
        &["model", "variant", "p", "seed", "oracle_latents", "rel_l2", "rel_l2_flat"],
        &rows,
    )?;
    let samples: Vec<Vec<String>> = records
        .iter()
        .flat_map(|r| {
            r.per_sample
                .iter()
                .enumerate()
                .map(move |(i, e)| vec![r.model.clone(), i.to_string(), e.to_string()])
        })
        .collect();
    write_csv(&out.join("eval_samples.csv"), &["model", "sample", "rel_l2"], &samples)?;
    Ok(EvalReport {
        oracle,
        records,
        stats,
    })
}

// ---------------------------------------------------------------- sweep

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub variant: Variant,
    /// Degree of the output-space kernel; `None` for POD.
    pub d_v: Option<u32>,
    pub p: usize,
    /// Per-sample-mean convention.
    pub stats: Option<TrialStats>,
    /// Flattened convention.
    pub stats_flat: Option<TrialStats>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub variant: Variant,
    pub d_v: Option<u32>,
    pub p: usize,
    pub seed: u64,
    pub rel_l2: f64,
    pub rel_l2_flat: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub trials: Vec<TrialRecord>,
}

impl SweepResult {
    pub fn row(&self, variant: Variant, d_v: Option<u32>, p: usize) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.d_v == d_v && r.p == p)
    }

    /// Row with the smallest mean error among successful rows of a configuration.
    pub fn best(&self, variant: Variant, d_v: Option<u32>) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.variant == variant && r.d_v == d_v && r.stats.is_some())
            .min_by(|a, b| {
                let (x, y) = (a.stats.as_ref().unwrap().mean, b.stats.as_ref().unwrap().mean);
                x.total_cmp(&y)
            })
    }

    pub fn table(&self) -> String {
        let mut s = String::from("variant  d_v    p   mean rel_l2 (%)     std (%)   flattened (%)  status\n");
        for r in &self.rows {
            let dv = r.d_v.map_or("-".into(), |d| d.to_string());
            match (&r.stats, &r.stats_flat) {
                (Some(a), Some(b)) => {
                    let _ = writeln!(
                        s,
                        "{:<7} {:>4} {:>4} {:>16.5} {:>11.5} {:>15.5}  ok",
                        r.variant.as_str(),
                        dv,
                        r.p,
                        100.0 * a.mean,
                        100.0 * a.std,
                        100.0 * b.mean
                    );
                }
                _ => {
                    let _ = writeln!(
                        s,
                        "{:<7} {:>4} {:>4} {:>16} {:>11} {:>15}  failed: {}",
                        r.variant.as_str(),
                        dv,
                        r.p,
                        "-",
                        "-",
                        "-",
                        r.error.as_deref().unwrap_or("")
                    );
                }
            }
        }
        s
    }

    pub fn write(&self, out: &Path) -> anyhow::Result<()> {
        ensure_dir(out)?;
        let fmt_dv = |d: Option<u32>| d.map_or(String::new(), |d| d.to_string());
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let (n, mean, std, mf, sf) = match (&r.stats, &r.stats_flat) {
                    (Some(a), Some(b)) => (
                        a.count().to_string(),
                        a.mean.to_string(),
                        a.std.to_string(),
                        b.mean.to_string(),
                        b.std.to_string(),
                    ),
                    _ => ("0".into(), String::new(), String::new(), String::new(), String::new()),
                };
                let status = match &r.error {
                    None => "ok".to_string(),
                    Some(e) => format!("failed: {e}"),
                };
                vec![r.variant.to_string(), fmt_dv(r.d_v), r.p.to_string(), n, mean, std, mf, sf, status]
            })
            .collect();
        write_csv(
            &out.join("sweep.csv"),
            &["variant", "d_v", "p", "trials", "mean_rel_l2", "std_rel_l2", "mean_rel_l2_flat", "std_rel_l2_flat", "status"],
            &rows,
        )?;
        let trials: Vec<Vec<String>> = self
            .trials
            .iter()
            .map(|t| {
                vec![
                    t.variant.to_string(),
                    fmt_dv(t.d_v),
                    t.p.to_string(),
                    t.seed.to_string(),
                    t.rel_l2.to_string(),
                    t.rel_l2_flat.to_string(),
                    t.final_loss.to_string(),
                ]
            })
            .collect();
        write_csv(
            &out.join("sweep_trials.csv"),
            &["variant", "d_v", "p", "seed", "rel_l2", "rel_l2_flat", "final_loss"],
            &trials,
        )
    }
}

/// Which configurations a sweep covers. `kpca_degrees` lists output-kernel degrees for the
/// KPCA rows (the configured kernel's `gamma` and `c` are kept).
#[derive(Clone, Debug)]
pub struct SweepPlan {
    pub variants: Vec<Variant>,
    pub kpca_degrees: Vec<u32>,
}

struct TrialOutcome {
    flat: f64,
    per_sample: f64,
    final_loss: f64,
}

/// Run every (configuration, p) over all seeds; failures are recorded per row and the
/// sweep carries on.
pub fn sweep(
    cfg: &RunConfig,
    plan: &SweepPlan,
    train_data: &FieldDataset,
    test_data: &FieldDataset,
    exec: Execution,
) -> anyhow::Result<SweepResult> {
    cfg.validate_for(&plan.variants)?;
    let mut configs: Vec<(Variant, Option<u32>)> = Vec::new();
    for &v in &plan.variants {
        match v {
            Variant::Kpca => configs.extend(plan.kpca_degrees.iter().map(|&d| (v, Some(d)))),
            Variant::Pod => configs.push((v, None)),
        }
    }
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for &(variant, d_v) in &configs {
        for &p in &cfg.p {
            let make = |seed: u64| -> OperatorConfig {
                let mut c = cfg.operator_config(variant, p, seed);
                if let Some(d) = d_v {
                    c.kernel_v = KernelSpec { degree: d, ..c.kernel_v };
                }
                c
            };
            let result = run_trials_keep(
                &cfg.seeds,
                exec,
                |seed| {
                    let (model, report) = train_operator(train_data, &make(seed))?;
                    let pred = model.predict_dataset(test_data, false, Execution::Sequential)?;
                    let reference = test_data.outputs().view();
                    Ok(TrialOutcome {
                        per_sample: rel_l2(pred.view(), reference)?,
                        flat: rel_l2_flat(pred.view(), reference)?,
                        final_loss: report.final_loss().unwrap_or(f64::NAN),
                    })
                },
                |o| Ok(o.per_sample),
            );
            match result {
                Ok((stats, outcomes)) => {
                    for (seed, o) in cfg.seeds.iter().zip(&outcomes) {
                        trials.push(TrialRecord {
                            variant,
                            d_v,
                            p,
                            seed: *seed,
                            rel_l2: o.per_sample,
                            rel_l2_flat: o.flat,
                            final_loss: o.final_loss,
                        });
                    }
                    let flat = TrialStats::from_errors(
                        cfg.seeds.clone(),
                        outcomes.iter().map(|o| o.flat).collect(),
                    )?;
                    rows.push(SweepRow {
                        variant,
                        d_v,
                        p,
                        stats: Some(stats),
                        stats_flat: Some(flat),
                        error: None,
                    });
                }
                Err(e) => rows.push(SweepRow {
                    variant,
                    d_v,
                    p,
                    stats: None,
                    stats_flat: None,
                    error: Some(e.to_string()),
                }),
            }
        }
    }
    Ok(SweepResult { rows, trials })
}

// ---------------------------------------------------------------- bench-time

#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub n_train: Vec<usize>,
    pub p: Vec<usize>,
    pub batch: usize,
    pub reps: usize,
    pub warmup: usize,
    pub epochs: usize,
    pub nx: usize,
    pub ny: usize,
    pub variants: Vec<Variant>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            n_train: vec![100, 400, 1600],
            p: vec![8],
            batch: 100,
            reps: 15,
            warmup: 3,
            epochs: 20,
            nx: 32,
            ny: 32,
            variants: vec![Variant::Kpca, Variant::Pod],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub variant: Variant,
    pub n_train: usize,
    pub p: usize,
    pub m: usize,
    pub batch: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub reps: usize,
    pub bytes: Vec<(&'static str, usize)>,
    pub error: Option<String>,
}

impl BenchRow {
    pub fn component_bytes(&self, name: &str) -> usize {
        self.bytes.iter().find(|(n, _)| *n == name).map_or(0, |(_, b)| *b)
    }

    pub fn total_bytes(&self) -> usize {
        self.bytes.iter().map(|(_, b)| b).sum()
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Wall-clock time of the batched forward map (branch net plus reconstruction) on synthetic
/// 2-D data of growing training-set size.
pub fn bench_time(spec: &BenchSpec, exec: Execution) -> anyhow::Result<Vec<BenchRow>> {
    if spec.reps < 10 {
        bail!(UsageError("at least 10 timed repetitions are required".into()));
    }
    if spec.batch == 0 || spec.n_train.is_empty() || spec.p.is_empty() {
        bail!(UsageError("batch, n and p lists must be nonempty".into()));
    }
    let preset = kpca_deeponet::presets::preset("1d-nonlinear").expect("shipped preset");
    let mut rows = Vec::new();
    for &n in &spec.n_train {
        let all = make_synthetic_2d(&Synthetic2dSpec {
            samples: n + spec.batch,
            nx: spec.nx,
            ny: spec.ny,
            input_points: 16,
            fields: 1,
        })?;
        let (train, query) = all.split(&SplitSpec {
            train: n,
            test: spec.batch,
        })?;
        for &variant in &spec.variants {
            for &p in &spec.p {
                let mut cfg = preset.operator_config(variant, p);
                cfg.train.epochs = spec.epochs;
                let mut row = BenchRow {
                    variant,
                    n_train: n,
                    p,
                    m: train.m(),
                    batch: spec.batch,
                    median_ms: f64::NAN,
                    min_ms: f64::NAN,
                    reps: spec.reps,
                    bytes: Vec::new(),
                    error: None,
                };
                match train_operator(&train, &cfg) {
                    Ok((model, _)) => {
                        let inputs = query.inputs().view();
                        for _ in 0..spec.warmup {
                            std::hint::black_box(model.predict_batch(inputs, exec)?);
                        }
                        let mut times: Vec<f64> = (0..spec.reps)
                            .map(|_| {
                                let t = Instant::now();
                                let out = model.predict_batch(inputs, exec);
                                let dt = t.elapsed().as_secs_f64() * 1e3;
                                std::hint::black_box(out).map(|_| dt)
                            })
                            .collect::<Result<_, _>>()?;
                        row.min_ms = times.iter().copied().fold(f64::INFINITY, f64::min);
                        row.median_ms = median(&mut times);
                        row.bytes = model.resident_bytes();
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub fn write_bench(rows: &[BenchRow], out: &Path) -> anyhow::Result<()> {
    ensure_dir(out)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.variant.to_string(),
                r.n_train.to_string(),
                r.p.to_string(),
                r.m.to_string(),
                r.batch.to_string(),
                format!("{:.4}", r.median_ms),
                format!("{:.4}", r.min_ms),
                r.reps.to_string(),
                r.component_bytes("branch").to_string(),
                r.component_bytes("reducer").to_string(),
                r.component_bytes("ridge").to_string(),
                r.total_bytes().to_string(),
                r.error.clone().unwrap_or_else(|| "ok".into()),
            ]
        })
        .collect();
    write_csv(
        &out.join("bench_time.csv"),
        &[
            "variant", "n_train", "p", "m", "batch", "median_ms", "min_ms", "reps", "branch_bytes", "reducer_bytes",
            "ridge_bytes", "total_bytes", "status",
        ],
        &table,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn csv_is_deterministic() {
        let rows = vec![vec!["a".to_string(), 0.1.to_string()]];
        assert_eq!(csv_bytes(&["x", "y"], &rows).unwrap(), b"x,y\na,0.1\n");
    }
}
