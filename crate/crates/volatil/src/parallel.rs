//! Worker-pool execution of the rolling evaluation and of multiple chains.

use rayon::prelude::*;
use rayon::ThreadPool;
use volatil_core::predictive::{
    collect_results, evaluate_task, validate_evaluation, EvaluationConfig, EvaluationOutput,
};
use volatil_core::ModelTag;

use crate::error::{CliError, CliResult};

pub fn pool(threads: usize) -> CliResult<ThreadPool> {
    if threads == 0 {
        return Err(CliError::validation("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::runtime(format!("cannot start worker pool: {e}")))
}

/// Same result as [`volatil_core::rolling_evaluation`] for any pool size:
/// each task seeds its own generator and results are reduced by task key.
pub fn rolling_evaluation_parallel(
    y: &[f64],
    s: usize,
    models: &[ModelTag],
    cfg: &EvaluationConfig,
    pool: &ThreadPool,
) -> CliResult<EvaluationOutput> {
    let tasks = validate_evaluation(y, s, models, cfg)?;
    let results = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(model, t)| evaluate_task(y, t, model, cfg))
            .collect::<Vec<_>>()
    });
    Ok(collect_results(&tasks, results))
}
