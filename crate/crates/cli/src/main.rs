mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::{json, Value};

use config::{Format, Settings};
use output::{emit, OutDir, Table};
use ramdp::ambiguity::{kernel_gain, parse_mu, robust_gain};
use ramdp::dp::{SolverRegistry, SolverReport};
use ramdp::experiments::{ExperimentRegistry, Verdict};
use ramdp::instances::{builtin, BUILTIN_IDS};
use ramdp::mdp::induce_chain;
use ramdp::policies::{PiStarModel, PiStarOptions, PolicyContext};
use ramdp::sim::{phase_stats, run_batch, tv_from_batches, Batch};
use ramdp::sprt::simulate_tests;
use ramdp::stats::clopper_pearson_upper;
use ramdp::{Error, MdpInstance, PolicyRegistry, Weight};

#[derive(Parser)]
#[command(name = "ramdp", version, about = "Average-reward MDPs under kernel ambiguity")]
struct Cli {
    /// Output file (single-table commands) or directory (run-policy, reproduce).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Master seed; required by stochastic commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo batches.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file with the same keys as the flags; it wins on conflicts.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal gain, bias and policy of each kernel.
    Solve(SolveArgs),
    /// Robust gain α*(μ) and the minimizing kernels.
    WorstCase(WorstCaseArgs),
    /// Runs the mixture test of the Δ*-induced null chain on simulated paths.
    SprtCalibrate(SprtArgs),
    /// Monte Carlo regret, weighted-deviation and phase tables for a policy.
    RunPolicy(RunPolicyArgs),
    /// Lists or exports builtin instances.
    Instances {
        #[command(subcommand)]
        action: InstancesAction,
    },
    /// Runs a pinned acceptance experiment (`all` runs every one).
    Reproduce { name: String },
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file or builtin id.
    #[arg(long)]
    instance: Option<String>,
    /// `all` or a kernel name.
    #[arg(long)]
    kernel: Option<String>,
    /// rvi | enumerate
    #[arg(long)]
    solver: Option<String>,
}

#[derive(Args)]
struct WorstCaseArgs {
    #[arg(long)]
    instance: Option<String>,
    /// uniform | delta:<s> | file:<path>
    #[arg(long)]
    mu: Option<String>,
}

#[derive(Args)]
struct SprtArgs {
    #[arg(long)]
    instance: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    runs: Option<u64>,
    /// Simulate from this kernel under Δ* instead of the null chain.
    #[arg(long)]
    alt: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    /// Prefer an irreducible Δ* when one is gain-optimal.
    #[arg(long)]
    irreducible: bool,
}

#[derive(Args)]
struct RunPolicyArgs {
    #[arg(long)]
    instance: Option<String>,
    /// Registry spec `name[:arg]`, e.g. `pi-star`, `ucrl`, `stationary:rows.json`.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    /// Largest horizon; the grid is the powers of two below it plus T itself.
    #[arg(long = "T", alias = "horizon")]
    horizon: Option<u64>,
    /// Explicit comma-separated horizon grid.
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<u64>>,
    #[arg(long)]
    runs: Option<u64>,
    /// one | inv_sqrt | inv_T | file:<path>
    #[arg(long)]
    weight: Option<String>,
    #[arg(long)]
    zeta: Option<f64>,
    /// Registry name of the policy pi-star falls back to.
    #[arg(long)]
    fallback: Option<String>,
    /// Wrap the policy in epoch restarts with base length K.
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    irreducible: bool,
}

#[derive(Subcommand)]
enum InstancesAction {
    List,
    Export { id: String },
}

/// A bad name or argument; reported with exit status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<Usage>().is_some()
                || e.downcast_ref::<toml::de::Error>().is_some()
                || matches!(e.downcast_ref::<Error>(), Some(Error::Unknown { .. }));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

/// Returns whether every verdict passed.
fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut flags = Settings { out: cli.out, format: cli.format, seed: cli.seed, threads: cli.threads, ..Default::default() };
    match &cli.command {
        Command::Solve(a) => {
            flags.instance = a.instance.clone();
            flags.kernel = a.kernel.clone();
            flags.solver = a.solver.clone();
        }
        Command::WorstCase(a) => {
            flags.instance = a.instance.clone();
            flags.mu = a.mu.clone();
        }
        Command::SprtCalibrate(a) => {
            flags.instance = a.instance.clone();
            flags.rho = a.rho;
            flags.horizon = a.horizon;
            flags.runs = a.runs;
            flags.alt = a.alt.clone();
            flags.mu = a.mu.clone();
            flags.irreducible = a.irreducible.then_some(true);
        }
        Command::RunPolicy(a) => {
            flags.instance = a.instance.clone();
            flags.policy = a.policy.clone();
            flags.kernel = a.kernel.clone();
            flags.mu = a.mu.clone();
            flags.horizon = a.horizon;
            flags.horizons = a.horizons.clone();
            flags.runs = a.runs;
            flags.weight = a.weight.clone();
            flags.zeta = a.zeta;
            flags.fallback = a.fallback.clone();
            flags.k = a.k;
            flags.irreducible = a.irreducible.then_some(true);
        }
        Command::Instances { .. } | Command::Reproduce { .. } => {}
    }
    let settings = match &cli.config {
        Some(path) => Settings::merge(flags, Settings::load(path)?),
        None => flags,
    };
    if let Some(n) = settings.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            warn!("could not configure the thread pool: {e}");
        }
    }
    match cli.command {
        Command::Solve(_) => solve(&settings).map(|_| true),
        Command::WorstCase(_) => worst_case(&settings).map(|_| true),
        Command::SprtCalibrate(_) => sprt_calibrate(&settings).map(|_| true),
        Command::RunPolicy(_) => run_policy(&settings).map(|_| true),
        Command::Instances { action } => instances(&settings, action).map(|_| true),
        Command::Reproduce { name } => reproduce(&settings, &name),
    }
}

/// A JSON file path, or a builtin id when no such file exists.
fn load_instance(spec: &str) -> anyhow::Result<MdpInstance> {
    let path = std::path::Path::new(spec);
    if path.is_file() {
        return MdpInstance::load(path).with_context(|| format!("loading instance {spec}"));
    }
    Ok(builtin(spec)?.mdp)
}

fn select_kernels(mdp: &MdpInstance, spec: Option<&str>) -> anyhow::Result<Vec<usize>> {
    match spec {
        None | Some("all") => Ok((0..mdp.kernels().len()).collect()),
        Some(name) => Ok(vec![mdp.kernel_index(name)?]),
    }
}

fn solve(s: &Settings) -> anyhow::Result<()> {
    let mdp = load_instance(s.require_instance()?)?;
    let registry = SolverRegistry::builtin();
    let solver = registry.get(s.solver.as_deref().unwrap_or("rvi"))?;
    let reports = select_kernels(&mdp, s.kernel.as_deref())?
        .into_iter()
        .map(|k| solver.solve(&mdp, mdp.kernel(k)))
        .collect::<ramdp::Result<Vec<SolverReport>>>()?;
    let text = match s.format.unwrap_or(Format::Json) {
        Format::Json if reports.len() == 1 => serde_json::to_string_pretty(&reports[0])? + "\n",
        Format::Json => serde_json::to_string_pretty(&reports)? + "\n",
        Format::Csv => {
            let mut t = Table::new(&["kernel", "state", "gain", "bias", "policy"]);
            for r in &reports {
                for (state, gain) in r.gain.iter().enumerate() {
                    let bias = r.bias.as_ref().map_or(Value::Null, |b| b[state].into());
                    let policy = r.policy[state].iter().map(|p| p.to_string()).collect::<Vec<_>>().join(";");
                    t.push(vec![r.kernel.clone().into(), state.into(), (*gain).into(), bias, policy.into()]);
                }
            }
            t.render(Format::Csv)?
        }
    };
    emit(s.out.as_deref(), &text)
}

fn worst_case(s: &Settings) -> anyhow::Result<()> {
    let mdp = load_instance(s.require_instance()?)?;
    let mu_spec = s.mu.as_deref().ok_or_else(|| Usage("worst-case needs --mu (uniform | delta:<s> | file:<path>)".into()))?;
    let mu = parse_mu(mu_spec, mdp.n_states())?;
    let sol = robust_gain(&mdp, &mu)?;
    if !sol.is_singleton_worst {
        warn!("worst-case kernel is not unique: {:?}", sol.worst_kernels);
    }
    let text = match s.format.unwrap_or(Format::Json) {
        Format::Json => serde_json::to_string_pretty(&sol)? + "\n",
        Format::Csv => {
            let mut t = Table::new(&["kernel", "value", "worst", "weakly_communicating"]);
            for (k, name) in sol.kernel_names.iter().enumerate() {
                t.push(vec![
                    name.clone().into(),
                    sol.per_kernel_value[k].into(),
                    sol.worst_kernels.contains(&k).into(),
                    sol.weakly_communicating[k].into(),
                ]);
            }
            t.render(Format::Csv)?
        }
    };
    emit(s.out.as_deref(), &text)
}

fn sprt_calibrate(s: &Settings) -> anyhow::Result<()> {
    let seed = s.require_seed()?;
    let mdp = load_instance(s.require_instance()?)?;
    let rho = s.rho.context("missing --rho")?;
    let horizon = s.horizon.unwrap_or(10_000);
    let runs = s.runs.unwrap_or(1_000);
    let mu = parse_mu(s.mu.as_deref().unwrap_or("uniform"), mdp.n_states())?;
    let model = PiStarModel::build(
        &mdp,
        &PiStarOptions { zeta: 2.0, irreducible_preference: s.irreducible.unwrap_or(false), mu: mu.clone(), prior: None },
    )?;
    for w in &model.report.warnings {
        warn!("{w}");
    }
    let generator = match s.alt.as_deref() {
        Some(name) => induce_chain(mdp.kernel(mdp.kernel_index(name)?), &model.delta_star)?,
        None => model.p0.clone(),
    };
    let results = simulate_tests(&generator, &model.p0, &model.prior, &mu, rho, horizon, runs, seed)?;
    let mut t = Table::new(&["run_id", "tau", "rejected", "log_lambda_final"]);
    for r in &results {
        let log_lambda = if r.log_lambda_final.is_finite() { r.log_lambda_final.into() } else { Value::from("inf") };
        t.push(vec![r.run_id.into(), r.tau.map_or(Value::Null, Value::from), r.rejected.into(), log_lambda]);
    }
    emit(s.out.as_deref(), &t.render(s.format())?)?;
    let rejections = results.iter().filter(|r| r.rejected).count() as u64;
    eprintln!(
        "null `{}`, data from `{}`: {rejections}/{runs} rejected (rate {:.4}, 99% upper bound {:.4}, rho {rho})",
        model.report.worst_kernel_name,
        s.alt.as_deref().unwrap_or(&model.report.worst_kernel_name),
        rejections as f64 / runs.max(1) as f64,
        clopper_pearson_upper(rejections, runs, 0.99),
    );
    Ok(())
}

fn horizon_grid(s: &Settings) -> anyhow::Result<Vec<u64>> {
    if let Some(h) = &s.horizons {
        return Ok(h.clone());
    }
    let t = s.horizon.context("missing --T (or --horizons)")?;
    let mut grid: Vec<u64> = (1..64).map(|k| 1u64 << k).take_while(|&h| h < t).collect();
    grid.push(t);
    Ok(grid)
}

fn run_policy(s: &Settings) -> anyhow::Result<()> {
    let seed = s.require_seed()?;
    let mdp = load_instance(s.require_instance()?)?;
    let spec = s.policy.as_deref().context("missing --policy")?;
    let mu = parse_mu(s.mu.as_deref().unwrap_or("uniform"), mdp.n_states())?;
    let weight: Weight = s.weight.as_deref().unwrap_or("one").parse()?;
    let horizons = horizon_grid(s)?;
    let runs = s.runs.unwrap_or(1_000);
    let kernels = select_kernels(&mdp, s.kernel.as_deref())?;

    let mut ctx = PolicyContext::new(&mdp);
    ctx.mu = mu.clone();
    ctx.restart_k = s.k;
    ctx.irreducible_preference = s.irreducible.unwrap_or(false);
    if let Some(z) = s.zeta {
        ctx.zeta = z;
    }
    if let Some(f) = &s.fallback {
        ctx.fallback = f.clone();
    }
    let policy = PolicyRegistry::builtin().build(&mdp, spec, &ctx)?;
    info!("running `{}` on {} kernel(s), horizons {:?}", policy.name(), kernels.len(), horizons);

    let batches = kernels
        .iter()
        .map(|&k| run_batch(&mdp, k, policy.as_ref(), &mu, &horizons, runs, seed))
        .collect::<ramdp::Result<Vec<Batch>>>()?;
    let out = OutDir::create(s.out.clone().unwrap_or_else(|| PathBuf::from("ramdp-out")), s.format())?;

    for b in &batches {
        let (alpha, _) = kernel_gain(&mdp, b.kernel)?;
        let curve = b.regret(&alpha);
        let mut t = Table::new(&["T", "mean", "se", "n"]);
        for (i, &h) in curve.horizons.iter().enumerate() {
            t.push(vec![h.into(), curve.mean_regret[i].into(), curve.std_err[i].into(), curve.n_runs.into()]);
        }
        out.table(&format!("regret_{}", b.kernel_name), &t)?;
    }

    let alpha_star = robust_gain(&mdp, &mu)?.alpha_star;
    let tv = tv_from_batches(&batches, alpha_star, &weight);
    let mut t = Table::new(&["kernel", "T", "weighted_mean", "se"]);
    for k in &tv.per_kernel {
        for (i, &h) in tv.horizons.iter().enumerate() {
            t.push(vec![k.kernel.clone().into(), h.into(), k.weighted_mean[i].into(), k.std_err[i].into()]);
        }
    }
    out.table("tv", &t)?;

    let horizon = *horizons.last().expect("non-empty grid");
    let records_events = batches.iter().any(|b| b.outcomes.iter().any(|o| o.events.is_some()));
    if records_events {
        for b in &batches {
            write_phases(&out, b, horizon)?;
        }
    }

    let summary = json!({
        "policy": spec,
        "weight": tv.weight,
        "alpha_star": alpha_star,
        "horizons": tv.horizons,
        "envelope": tv.envelope,
        "tv_lower_envelope": tv.tv_lower_envelope,
        "runs": runs,
        "seed": seed,
        "kernels": batches.iter().map(|b| b.kernel_name.clone()).collect::<Vec<_>>(),
    });
    out.text("summary.json", &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    eprintln!("wrote {}", out.root.display());
    Ok(())
}

/// Per-epoch means over runs, plus the raw event records of every run.
fn write_phases(out: &OutDir, batch: &Batch, horizon: u64) -> anyhow::Result<()> {
    let mut events = Table::new(&["run", "epoch", "start", "length", "rejected_at", "testing", "fallback"]);
    let mut totals: Vec<(f64, f64, f64)> = Vec::new();
    for o in &batch.outcomes {
        let rows = phase_stats(o.events.as_deref(), horizon)?;
        let raw = o.events.as_deref().unwrap_or_default();
        for r in &rows {
            let rejected_at = raw.iter().find(|e| e.epoch == r.epoch).and_then(|e| e.rejected_at);
            events.push(vec![
                o.run.into(),
                r.epoch.into(),
                r.start.into(),
                r.length.into(),
                rejected_at.map_or(Value::Null, Value::from),
                r.testing.into(),
                r.fallback.into(),
            ]);
            let i = r.epoch as usize;
            if totals.len() <= i {
                totals.resize(i + 1, (0.0, 0.0, 0.0));
            }
            totals[i].0 += r.testing as f64;
            totals[i].1 += r.fallback as f64;
            totals[i].2 += r.rejected as u8 as f64;
        }
    }
    let n = batch.outcomes.len().max(1) as f64;
    let mut phases = Table::new(&["epoch", "testing", "fallback", "rejected"]);
    for (epoch, (testing, fallback, rejected)) in totals.iter().enumerate() {
        phases.push(vec![epoch.into(), (testing / n).into(), (fallback / n).into(), (rejected / n).into()]);
    }
    out.table(&format!("phases_{}", batch.kernel_name), &phases)?;
    out.table(&format!("events_{}", batch.kernel_name), &events)?;
    Ok(())
}

fn instances(s: &Settings, action: InstancesAction) -> anyhow::Result<()> {
    match action {
        InstancesAction::List => {
            let mut t = Table::new(&["id", "description"]);
            for (id, description) in BUILTIN_IDS {
                t.push(vec![id.into(), description.into()]);
            }
            let text = match s.format {
                Some(f) => t.render(f)?,
                None => BUILTIN_IDS.iter().map(|(id, d)| format!("{id:<32} {d}\n")).collect(),
            };
            emit(s.out.as_deref(), &text)
        }
        InstancesAction::Export { id } => {
            let named = builtin(&id)?;
            emit(s.out.as_deref(), &(named.mdp.to_json()? + "\n"))
        }
    }
}

fn reproduce(s: &Settings, name: &str) -> anyhow::Result<bool> {
    let registry = ExperimentRegistry::builtin();
    let names: Vec<&str> = if name == "all" {
        registry.names()
    } else {
        match registry.get(name) {
            Ok(e) => vec![e.name()],
            Err(_) => bail!(Usage(format!(
                "unknown experiment `{name}`; available: all, {}",
                registry.names().join(", ")
            ))),
        }
    };
    if s.seed.is_some() {
        warn!("reproduce runs with pinned seeds; --seed is ignored");
    }
    let root = s.out.clone().unwrap_or_else(|| PathBuf::from("ramdp-reproduce"));
    let mut all_passed = true;
    for n in names {
        let verdict = registry.get(n)?.run()?;
        write_verdict(&OutDir::create(root.join(n), s.format())?, &verdict)?;
        println!("{}", verdict.line());
        all_passed &= verdict.passed;
    }
    Ok(all_passed)
}

fn write_verdict(out: &OutDir, verdict: &Verdict) -> anyhow::Result<()> {
    for t in &verdict.tables {
        out.table(&t.name, &Table::from_strings(&t.columns, &t.rows))?;
    }
    let summary = json!({
        "name": verdict.name,
        "passed": verdict.passed,
        "detail": verdict.detail,
        "metrics": verdict.metrics,
    });
    out.text("verdict.json", &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    out.text("verdict.txt", &(verdict.line() + "\n"))?;
    Ok(())
}
