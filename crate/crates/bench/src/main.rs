//! `gscope-bench`: domain generation, sampling, learning, evaluation, sweeps
//! and theory reports from the command line.
//!
//! Exit status: 0 on success, 1 on usage or input errors, 2 when a request
//! is refused as infeasible (e.g. a flat model on a huge state space).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use gscope::domains::{plan_target_policy, reward_lookahead_policy, DomainSpec, DOMAIN_NAMES};
use gscope::evaluators::{
    evaluate_cis, evaluate_flat, evaluate_mfmc, evaluate_model_based, normalized_error, EvalResult, MfmcOptions,
};
use gscope::fmdp::{sample_batch, FactoredMdp, Policy, TrajectoryBatch};
use gscope::gscope::{build_model, learn_structure, LearnedModel, Provenance, Thresholds};
use gscope::sweep::{
    batch_seed, read_csv, reference_truth, render_table, run_sweep, summarize, write_outputs, Method, SweepConfig,
};
use gscope::theory::{check_assumptions, compute_psi, theorem1_bound, BoundInputs};
use gscope::{Error, Result};

#[derive(Parser)]
#[command(name = "gscope-bench", version, about = "Off-policy evaluation experiments on factored MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a registered domain and write it as FMDP JSON.
    GenDomain(GenDomainArgs),
    /// Sample a trajectory batch under a policy.
    Sample(SampleArgs),
    /// Learn parent sets and write the estimated model.
    Learn(LearnArgs),
    /// Estimate a target policy's value from a learned model or a batch.
    Eval(EvalArgs),
    /// Run a sweep over methods, batch sizes and trials.
    Sweep(SweepArgs),
    /// Assumption constants, mismatch coefficients and the evaluation bound.
    Theory(TheoryArgs),
    /// Validate a sweep CSV and print its summary table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenDomainArgs {
    /// One of: taxi, random-fmdp, assumption1-violation, assumption3-violation, copy-chain.
    name: String,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    gamma: Option<usize>,
    #[arg(long)]
    actions: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Generator seed (random-fmdp).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// A domain name or an FMDP JSON file.
    #[arg(long)]
    domain: String,
    /// uniform | planned[:floor] | reward-lookahead[:floor] | constant:ACTION[:floor]
    #[arg(long, default_value = "uniform")]
    policy: String,
    /// Number of trajectories.
    #[arg(long, default_value_t = 100)]
    h: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    /// Sweep config (preset name or TOML file) giving domain, behavior and thresholds.
    #[arg(long)]
    config: String,
    /// Learn from this batch instead of sampling one.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Trajectories to sample; defaults to the first entry of the H grid.
    #[arg(long)]
    h: Option<usize>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Learned model JSON; its provenance names the domain.
    #[arg(long, conflicts_with = "data")]
    model: Option<PathBuf>,
    /// Batch JSON, for the data-driven baselines.
    #[arg(long, requires = "domain")]
    data: Option<PathBuf>,
    /// Domain name or FMDP file (required with --data).
    #[arg(long)]
    domain: Option<String>,
    /// With --data: gscope or ks (default thresholds), flat, mfmc or cis.
    #[arg(long)]
    method: Option<String>,
    /// Sweep config whose target policy is used when --target is absent.
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    target: Option<String>,
    /// Behavior policy for cis.
    #[arg(long, default_value = "uniform")]
    behavior: String,
    #[arg(long, default_value_t = 1000)]
    rollouts: usize,
    #[arg(long, default_value_t = f64::INFINITY)]
    clip: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Preset name (paper_taxi, paper_random_fmdp) or TOML file.
    #[arg(long)]
    config: String,
    /// Output directory for the CSV and summary.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the trials per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Overrides the H grid (comma separated).
    #[arg(long, value_delimiter = ',')]
    h: Option<Vec<usize>>,
    /// Full-scale protocol: 40 trials and H up to 2000.
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long)]
    domain: String,
    #[arg(long, default_value = "uniform")]
    behavior: String,
    #[arg(long, default_value = "uniform")]
    target: String,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0.05)]
    delta1: f64,
    /// Used when the assumption check is refused or `C₂`/`C₃` do not exist.
    #[arg(long, default_value_t = 0.0)]
    c2: f64,
    #[arg(long, default_value_t = 0.0)]
    c3: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Sweep CSV to validate.
    #[arg(long)]
    csv: PathBuf,
    /// Write the recomputed per-cell summary here as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
            eprintln!("wrote {}", p.display());
            Ok(())
        }
        None => stdout(&format!("{text}\n")),
    }
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn stdout(text: &str) -> Result<()> {
    use std::io::Write as _;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn load_domain(name_or_path: &str) -> Result<FactoredMdp> {
    if Path::new(name_or_path).is_file() {
        FactoredMdp::from_json(&fs::read_to_string(name_or_path)?)
    } else {
        DomainSpec::named(name_or_path).build()
    }
}

fn parse_policy(spec: &str, mdp: &FactoredMdp) -> Result<Policy> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("bad number `{s}` in policy `{spec}`")))
    };
    let floor = |k: usize| parts.get(k).map_or(Ok(0.0), |s| num(s));
    match parts[0] {
        "uniform" if parts.len() == 1 => Ok(Policy::uniform(mdp.n_actions())),
        "planned" if parts.len() <= 2 => plan_target_policy(mdp, floor(1)?),
        "reward-lookahead" if parts.len() <= 2 => reward_lookahead_policy(mdp, floor(1)?),
        "constant" if (2..=3).contains(&parts.len()) => {
            let a = parts[1]
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad action in policy `{spec}`")))?;
            Policy::constant(mdp.n_actions(), mdp.gamma(), a)?.epsilon_floor(floor(2)?)
        }
        _ => Err(Error::InvalidArgument(format!("unknown policy `{spec}`"))),
    }
}

fn read_batch(path: &Path) -> Result<TrajectoryBatch> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn gen_domain(a: GenDomainArgs) -> Result<()> {
    if !DOMAIN_NAMES.contains(&a.name.as_str()) {
        return Err(Error::UnknownDomain(a.name));
    }
    let spec = DomainSpec {
        d: a.d,
        gamma: a.gamma,
        actions: a.actions,
        seed: a.seed,
        horizon: a.horizon,
        ..DomainSpec::named(&a.name)
    };
    emit(a.out.as_deref(), &spec.build()?.to_json()?)
}

fn sample(a: SampleArgs) -> Result<()> {
    let mdp = load_domain(&a.domain)?;
    let policy = parse_policy(&a.policy, &mdp)?;
    let batch = sample_batch(&mdp, &policy, a.h, a.seed)?;
    emit(a.out.as_deref(), &serde_json::to_string(&batch)?)
}

fn learn(a: LearnArgs) -> Result<()> {
    let mut config = SweepConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        config.master_seed = s;
    }
    let mdp = config.domain.build()?;
    let (batch, seeds) = match &a.data {
        Some(p) => (read_batch(p)?, Vec::new()),
        None => {
            let h = a.h.unwrap_or(config.h_grid[0]);
            let seed = batch_seed(config.master_seed, h, 0);
            let behavior = config.behavior.build(&mdp)?;
            (sample_batch(&mdp, &behavior, h, seed)?, vec![seed])
        }
    };
    batch.check_matches(&mdp)?;
    let thresholds = config.thresholds.build(mdp.gamma())?;
    let structure = learn_structure(&batch, &thresholds)?;
    let model = build_model(&batch, &structure.parents, &thresholds)?;
    let provenance = Provenance {
        domain: Some(config.domain.clone()),
        seeds,
        ..model.provenance().clone()
    };
    let model = model.with_provenance(provenance);
    let exact = structure.parents.as_slice() == mdp.parents();
    eprintln!(
        "learned parents from {} trajectories (matches true structure: {exact})",
        batch.len()
    );
    emit(a.out.as_deref(), &model.to_json()?)
}

fn eval_target(a: &EvalArgs, mdp: &FactoredMdp) -> Result<Policy> {
    match (&a.target, &a.config) {
        (Some(spec), _) => parse_policy(spec, mdp),
        (None, Some(c)) => SweepConfig::load(c)?.target.build(mdp),
        (None, None) => Ok(Policy::uniform(mdp.n_actions())),
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let (mdp, result): (FactoredMdp, EvalResult) = if let Some(path) = &a.model {
        let model = LearnedModel::from_json(&fs::read_to_string(path)?)?;
        let mdp = match (&a.domain, &model.provenance().domain) {
            (Some(d), _) => load_domain(d)?,
            (None, Some(spec)) => spec.build()?,
            (None, None) => {
                return Err(Error::InvalidArgument(
                    "model has no domain provenance; pass --domain".into(),
                ))
            }
        };
        if a.method.as_deref().is_some_and(|m| m != "gscope") {
            return Err(Error::InvalidArgument("--model evaluates with gscope only".into()));
        }
        let target = eval_target(&a, &mdp)?;
        let r = evaluate_model_based(&model, &mdp, &target, a.rollouts, a.seed)?;
        (mdp, r)
    } else if let Some(path) = &a.data {
        let mdp = load_domain(a.domain.as_deref().unwrap_or_default())?;
        let batch = read_batch(path)?;
        batch.check_matches(&mdp)?;
        let target = eval_target(&a, &mdp)?;
        let method: Method = a.method.as_deref().unwrap_or("mfmc").parse()?;
        let r = match method {
            Method::Flat => evaluate_flat(&batch, &mdp, &target, a.rollouts, a.seed)?,
            Method::Mfmc => evaluate_mfmc(&batch, &target, MfmcOptions::default(), a.seed)?,
            Method::Cis => evaluate_cis(&batch, &target, &parse_policy(&a.behavior, &mdp)?, a.clip)?,
            Method::Gscope | Method::Ks => {
                let th = Thresholds::new(0.1, 0.05, 0.0, mdp.gamma())?;
                let parents = if method == Method::Ks {
                    mdp.parents().to_vec()
                } else {
                    learn_structure(&batch, &th)?.parents
                };
                let model = build_model(&batch, &parents, &th)?;
                let mut r = evaluate_model_based(&model, &mdp, &target, a.rollouts, a.seed)?;
                r.method = method.name().into();
                r
            }
        };
        (mdp, r)
    } else {
        return Err(Error::InvalidArgument("pass --model or --data".into()));
    };
    let target = eval_target(&a, &mdp)?;
    let truth = reference_truth(&mdp, &target, 100_000, a.seed)?;
    let doc = json!({
        "result": result,
        "truth": truth,
        "normalized_error": normalized_error(result.estimate, truth.value).ok(),
    });
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&doc)?)
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut config = SweepConfig::load(&a.config)?;
    if a.full {
        config = config.full_scale();
    }
    if let Some(s) = a.seed {
        config.master_seed = s;
    }
    if let Some(w) = a.workers {
        config.workers = w;
    }
    if let Some(t) = a.trials {
        config.trials = t;
    }
    if let Some(h) = a.h {
        config.h_grid = h;
    }
    config.validate()?;
    let cells = config.h_grid.len() * config.trials * config.methods.len();
    eprintln!("sweep `{}`: {cells} cells", config.name);
    let start = Instant::now();
    let out = run_sweep(&config)?;
    write_outputs(&out, &config, &a.out)?;
    fs::write(a.out.join("config.toml"), config.to_toml()?)?;
    eprintln!(
        "finished in {:.1}s; wrote {} and {}",
        start.elapsed().as_secs_f64(),
        a.out.join(&config.output.csv).display(),
        a.out.join(&config.output.summary).display()
    );
    stdout(&render_table(&out.summary.cells))?;
    Ok(())
}

fn theory(a: TheoryArgs) -> Result<()> {
    let mdp = load_domain(&a.domain)?;
    let behavior = parse_policy(&a.behavior, &mdp)?;
    let target = parse_policy(&a.target, &mdp)?;
    let psi = compute_psi(&mdp, &behavior, &target, mdp.parents())?;
    let (assumptions, c2, c3) = match check_assumptions(&mdp, Some(&behavior)) {
        Ok(r) => {
            let (c2, c3) = (r.c2, r.c3.unwrap_or(a.c3));
            (Some(r), c2, c3)
        }
        Err(e) if e.is_refusal() => (None, a.c2, a.c3),
        Err(e) => return Err(e),
    };
    let inputs = BoundInputs {
        eps: a.eps,
        delta1: a.delta1,
        horizon: mdp.horizon(),
        n_vars: mdp.n_vars(),
        m: mdp.parents().iter().map(Vec::len).max().unwrap_or(0),
        c2,
        c3,
        psi: psi.clone(),
        n_actions: mdp.n_actions(),
        gamma: mdp.gamma(),
    };
    let bound = theorem1_bound(&inputs)?;
    let doc = json!({
        "assumptions": assumptions,
        "bound_inputs": inputs,
        "bound": bound,
    });
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&doc)?)
}

fn report(a: ReportArgs) -> Result<()> {
    let rows = read_csv(fs::File::open(&a.csv)?)?;
    let cells = summarize(&rows);
    eprintln!("{}: {} rows, schema ok", a.csv.display(), rows.len());
    stdout(&render_table(&cells))?;
    if let Some(p) = a.out {
        emit(Some(&p), &serde_json::to_string_pretty(&cells)?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenDomain(a) => gen_domain(a),
        Command::Sample(a) => sample(a),
        Command::Learn(a) => learn(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Theory(a) => theory(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_refusal() { 2 } else { 1 })
        }
    }
}
