//! Experiment grids over methods, batch sizes and trials.
//!
//! Cell `(H, trial)` samples its batch with seed `derive(master, [H, trial])`
//! and method `m` evaluates with `derive(master, [code(m), H, trial])`, so
//! rows do not depend on execution order or on the method list.

mod config;
mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use config::{Method, OutputConfig, PolicyKind, PolicySpec, RolloutConfig, SweepConfig, ThresholdConfig};
pub use report::{
    diagnostic_value, format_float, quantile, read_csv, render_table, summarize, write_csv, CellSummary, Status, Summary,
    SweepRow, TruthRecord, CSV_COLUMNS,
};

use crate::evaluators::{
    evaluate_cis, evaluate_flat, evaluate_known_structure, evaluate_mfmc, evaluate_model_based, normalized_error,
    reference_value, EvalResult, MfmcOptions,
};
use crate::fmdp::{exact_value, sample_batch, FactoredMdp, Policy, TrajectoryBatch};
use crate::gscope::{build_model, learn_structure, Thresholds};
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Seed coordinate for the reference value, outside every cell's range.
const TRUTH_STREAM: u64 = u64::MAX;

pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub summary: Summary,
}

struct Context<'a> {
    config: &'a SweepConfig,
    mdp: FactoredMdp,
    behavior: Policy,
    target: Policy,
    thresholds: Thresholds,
    truth: TruthRecord,
}

pub fn batch_seed(master: u64, h: usize, trial: usize) -> u64 {
    derive_seed(master, &[h as u64, trial as u64])
}

pub fn eval_seed(master: u64, method: Method, h: usize, trial: usize) -> u64 {
    derive_seed(master, &[method.code(), h as u64, trial as u64])
}

/// Runs one method on one batch.
fn run_method(ctx: &Context, method: Method, batch: &TrajectoryBatch, seed: u64) -> Result<EvalResult> {
    let n = ctx.config.rollouts.model;
    match method {
        Method::Gscope => {
            let s = learn_structure(batch, &ctx.thresholds)?;
            let model = build_model(batch, &s.parents, &ctx.thresholds)?;
            let mut r = evaluate_model_based(&model, &ctx.mdp, &ctx.target, n, seed)?;
            let exact = s.parents.as_slice() == ctx.mdp.parents();
            let total: usize = s.parents.iter().map(Vec::len).sum();
            r.diagnostics.insert("structure_exact".into(), exact as u8 as f64);
            r.diagnostics
                .insert("mean_parents".into(), total as f64 / s.parents.len() as f64);
            Ok(r)
        }
        Method::Ks => evaluate_known_structure(batch, &ctx.mdp, &ctx.thresholds, &ctx.target, n, seed),
        Method::Flat => evaluate_flat(batch, &ctx.mdp, &ctx.target, n, seed),
        Method::Mfmc => evaluate_mfmc(
            batch,
            &ctx.target,
            MfmcOptions {
                k: ctx.config.rollouts.mfmc_k,
                n_artificial: ctx.config.rollouts.mfmc_artificial,
            },
            seed,
        ),
        Method::Cis => evaluate_cis(batch, &ctx.target, &ctx.behavior, ctx.config.rollouts.cis_clip),
    }
}

fn make_row(ctx: &Context, method: Method, h: usize, trial: usize, result: Result<EvalResult>) -> SweepRow {
    let seed = eval_seed(ctx.config.master_seed, method, h, trial);
    let mut row = SweepRow {
        method,
        domain: ctx.config.domain.name.clone(),
        h,
        trial,
        seed,
        estimate: None,
        stderr: None,
        truth: ctx.truth.value,
        truth_stderr: ctx.truth.stderr,
        normalized_error: None,
        status: Status::Ok,
        diagnostics: BTreeMap::new(),
    };
    match result {
        Ok(r) => {
            row.estimate = Some(r.estimate);
            row.stderr = Some(r.stderr);
            row.normalized_error = normalized_error(r.estimate, ctx.truth.value).ok();
            row.diagnostics = r
                .diagnostics
                .iter()
                .map(|(k, &v)| (k.clone(), diagnostic_value(v)))
                .collect();
            row.diagnostics.insert("n".into(), r.n.into());
        }
        Err(e) => {
            row.status = if e.is_refusal() { Status::Refused } else { Status::Error };
            row.diagnostics.insert("reason".into(), e.to_string().into());
        }
    }
    row
}

fn run_cell(ctx: &Context, h: usize, trial: usize) -> Vec<SweepRow> {
    let master = ctx.config.master_seed;
    let batch = sample_batch(&ctx.mdp, &ctx.behavior, h, batch_seed(master, h, trial));
    ctx.config
        .methods
        .par_iter()
        .map(|&m| {
            let result = match &batch {
                Ok(b) => run_method(ctx, m, b, eval_seed(master, m, h, trial)),
                Err(e) => Err(Error::InvalidArgument(e.to_string())),
            };
            make_row(ctx, m, h, trial, result)
        })
        .collect()
}

/// Reference value of the target, exact where enumerable.
pub fn reference_truth(mdp: &FactoredMdp, target: &Policy, mc_rollouts: usize, master_seed: u64) -> Result<TruthRecord> {
    let exact = exact_value(mdp, target).is_ok();
    let (value, stderr) = reference_value(mdp, target, mc_rollouts, derive_seed(master_seed, &[TRUTH_STREAM]))?;
    Ok(TruthRecord {
        value,
        stderr,
        source: if exact { "exact" } else { "monte-carlo" }.into(),
        rollouts: if exact { 0 } else { mc_rollouts },
    })
}

fn execute(config: &SweepConfig) -> Result<SweepOutput> {
    config.validate()?;
    let mdp = config.domain.build()?;
    let behavior = config.behavior.build(&mdp)?;
    let target = config.target.build(&mdp)?;
    let thresholds = config.thresholds.build(mdp.gamma())?;
    let truth = reference_truth(&mdp, &target, config.rollouts.truth_mc, config.master_seed)?;
    let ctx = Context {
        config,
        mdp,
        behavior,
        target,
        thresholds,
        truth,
    };
    let cells: Vec<(usize, usize)> = config
        .h_grid
        .iter()
        .flat_map(|&h| (0..config.trials).map(move |t| (h, t)))
        .collect();
    let mut rows: Vec<SweepRow> = cells.par_iter().flat_map(|&(h, t)| run_cell(&ctx, h, t)).collect();
    rows.sort_by_key(SweepRow::sort_key);
    let summary = Summary {
        name: config.name.clone(),
        domain: config.domain.clone(),
        master_seed: config.master_seed,
        truth: ctx.truth.clone(),
        cells: summarize(&rows),
    };
    Ok(SweepOutput { rows, summary })
}

/// Runs every `(method, H, trial)` cell on a pool of `config.workers`
/// threads and returns rows sorted by `(method, H, trial)`.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutput> {
    if config.workers == 0 {
        return execute(config);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| execute(config))
}

/// Writes the CSV and summary named in `config.output` under `dir`.
pub fn write_outputs(output: &SweepOutput, config: &SweepConfig, dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = std::fs::File::create(dir.join(&config.output.csv))?;
    write_csv(&output.rows, std::io::BufWriter::new(file))?;
    std::fs::write(dir.join(&config.output.summary), output.summary.to_json()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::DomainSpec;

    fn tiny() -> SweepConfig {
        let mut c = SweepConfig::preset("paper_taxi").unwrap();
        c.domain = DomainSpec {
            d: Some(3),
            horizon: Some(10),
            ..DomainSpec::named("copy-chain")
        };
        c.target = PolicySpec {
            kind: PolicyKind::Constant,
            action: Some(1),
            eps_floor: Some(0.1),
        };
        c.h_grid = vec![5, 20];
        c.trials = 2;
        c.rollouts.model = 200;
        c.rollouts.truth_mc = 100;
        c.thresholds.min_count = Some(3);
        c
    }

    #[test]
    fn one_cell_one_row() {
        let mut c = tiny();
        c.h_grid = vec![5];
        c.trials = 1;
        c.methods = vec![Method::Cis];
        let out = run_sweep(&c).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.summary.cells.len(), 1);
    }

    #[test]
    fn deterministic_and_worker_independent() {
        let c = tiny();
        let a = run_sweep(&c).unwrap();
        let mut c1 = c.clone();
        c1.workers = 1;
        let b = run_sweep(&c1).unwrap();
        let mut reordered = c.clone();
        reordered.methods.reverse();
        reordered.h_grid.reverse();
        let r = run_sweep(&reordered).unwrap();
        let csv = |o: &SweepOutput| {
            let mut buf = Vec::new();
            write_csv(&o.rows, &mut buf).unwrap();
            buf
        };
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(csv(&a), csv(&r));
        assert_eq!(a.rows.len(), 5 * 2 * 2);
        assert_eq!(a.summary.truth.source, "exact");
    }

    #[test]
    fn flat_refusal_is_a_row() {
        let mut c = tiny();
        c.domain = DomainSpec {
            d: Some(20),
            horizon: Some(5),
            ..DomainSpec::named("random-fmdp")
        };
        c.target = PolicySpec::uniform();
        c.methods = vec![Method::Flat, Method::Cis];
        c.h_grid = vec![5];
        c.trials = 1;
        let out = run_sweep(&c).unwrap();
        let flat = out.rows.iter().find(|r| r.method == Method::Flat).unwrap();
        assert_eq!(flat.status, Status::Refused);
        assert!(flat.estimate.is_none());
        assert_eq!(out.summary.truth.source, "monte-carlo");
        let cis = out.rows.iter().find(|r| r.method == Method::Cis).unwrap();
        assert_eq!(cis.status, Status::Ok);
        assert_eq!(out.summary.cell(Method::Flat, 5).unwrap().refused, 1);
    }
}
