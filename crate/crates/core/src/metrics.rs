//! Relative errors and multi-seed trial statistics.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};

fn norm(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_shapes(pred: ArrayView2<f64>, reference: ArrayView2<f64>) -> Result<()> {
    Error::check_dim("prediction rows", reference.nrows(), pred.nrows())?;
    Error::check_dim("prediction columns", reference.ncols(), pred.ncols())?;
    if reference.nrows() == 0 {
        return Err(Error::InvalidParameter("no samples to compare".into()));
    }
    Ok(())
}

/// `||pred_i - ref_i|| / ||ref_i||` for each sample (row).
pub fn per_sample_rel_l2(pred: ArrayView2<f64>, reference: ArrayView2<f64>) -> Result<Vec<f64>> {
    check_shapes(pred, reference)?;
    pred.rows()
        .into_iter()
        .zip(reference.rows())
        .enumerate()
        .map(|(i, (p, r))| {
            let denom = norm(r);
            if denom == 0.0 {
                return Err(Error::ZeroReference { sample: i });
            }
            Ok(norm((&p - &r).view()) / denom)
        })
        .collect()
}

/// Relative error averaged over samples.
pub fn rel_l2(pred: ArrayView2<f64>, reference: ArrayView2<f64>) -> Result<f64> {
    let errs = per_sample_rel_l2(pred, reference)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Relative error of the whole test set taken as one flattened vector.
pub fn rel_l2_flat(pred: ArrayView2<f64>, reference: ArrayView2<f64>) -> Result<f64> {
    check_shapes(pred, reference)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, r) in pred.iter().zip(reference.iter()) {
        num += (p - r) * (p - r);
        den += r * r;
    }
    if den == 0.0 {
        return Err(Error::ZeroReference { sample: 0 });
    }
    Ok((num / den).sqrt())
}

/// Per-trial errors with mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub seeds: Vec<u64>,
    pub errors: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl TrialStats {
    pub fn from_errors(seeds: Vec<u64>, errors: Vec<f64>) -> Result<Self> {
        Error::check_dim("trial seeds", errors.len(), seeds.len())?;
        if errors.is_empty() {
            return Err(Error::InvalidParameter("at least one trial is required".into()));
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
        Ok(TrialStats {
            seeds,
            errors,
            mean,
            std: var.sqrt(),
        })
    }

    pub fn count(&self) -> usize {
        self.errors.len()
    }
}

/// Train one model per seed and evaluate it. Each trial only sees its own seed, so trials
/// may run concurrently; results keep seed order either way. Every failure is collected
/// into one error naming the failed seeds.
pub fn run_trials<M, T, E>(seeds: &[u64], exec: Execution, train: T, eval: E) -> Result<TrialStats>
where
    M: Send,
    T: Fn(u64) -> Result<M> + Sync + Send,
    E: Fn(&M) -> Result<f64> + Sync + Send,
{
    run_trials_keep(seeds, exec, train, eval).map(|(stats, _)| stats)
}

/// [`run_trials`] that also returns the trained models in seed order.
pub fn run_trials_keep<M, T, E>(
    seeds: &[u64],
    exec: Execution,
    train: T,
    eval: E,
) -> Result<(TrialStats, Vec<M>)>
where
    M: Send,
    T: Fn(u64) -> Result<M> + Sync + Send,
    E: Fn(&M) -> Result<f64> + Sync + Send,
{
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    let outcomes = map_indices(exec, seeds.len(), |i| -> Result<(M, f64)> {
        let model = train(seeds[i])?;
        let err = eval(&model)?;
        Ok((model, err))
    });
    let mut errors = Vec::with_capacity(seeds.len());
    let mut models = Vec::with_capacity(seeds.len());
    let mut failed = Vec::new();
    let mut messages = Vec::new();
    for (seed, outcome) in seeds.iter().zip(outcomes) {
        match outcome {
            Ok((m, e)) => {
                models.push(m);
                errors.push(e);
            }
            Err(err) => {
                failed.push(*seed);
                messages.push(err.to_string());
            }
        }
    }
    if !failed.is_empty() {
        return Err(Error::TrialsFailed {
            seeds: failed,
            messages,
        });
    }
    Ok((TrialStats::from_errors(seeds.to_vec(), errors)?, models))
}
