//! Pinned Monte Carlo experiments with pass/fail verdicts.
//!
//! Every experiment fixes its instance, policy, run count and seed, so its
//! verdict is a deterministic function of the code.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::ambiguity::{delta_mu, kernel_gain, uniform_mu};
use crate::chain::{chain_structure, MarkovMatrix};
use crate::dp::{
    bellman_residual, evaluate_stationary, solve_multichain_gain, solve_unichain_optimal,
    unichain_optimal_policy, UnichainOptions,
};
use crate::error::{Error, Result};
use crate::instances;
use crate::mdp::{induce_chain, StationaryPolicy};
use crate::policies::{
    FiniteHypothesisRuntime, OptimisticConfig, OptimisticRuntime, PiStarModel, PiStarOptions,
    PiStarRuntime, PolicyRuntime, StationaryRuntime, TvMinusInfinityPolicy, TvSchedule,
};
use crate::sim::{power_grid, rollout, run_batch, Weight};
use crate::sprt::{calibrate_type1, detection_delay, DirichletPrior};

/// A plot-ready table written next to the verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($x.to_string()),*] };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub metrics: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
}

impl Verdict {
    fn new(name: &str) -> Self {
        Self { name: name.into(), passed: true, detail: String::new(), metrics: BTreeMap::new(), tables: Vec::new() }
    }

    fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    /// Records one named check; the verdict passes only if all checks do.
    fn check(&mut self, ok: bool, what: impl AsRef<str>) {
        self.passed &= ok;
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(if ok { "ok: " } else { "FAILED: " });
        self.detail.push_str(what.as_ref());
    }

    /// `PASS name (detail)` or `FAIL name (detail)`.
    pub fn line(&self) -> String {
        format!("{} {} ({})", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn run(&self) -> Result<Verdict>;
}

fn sticky() -> MarkovMatrix {
    MarkovMatrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).expect("valid")
}

pub struct Type1Bound;

impl Experiment for Type1Bound {
    fn name(&self) -> &'static str {
        "type1_bound"
    }
    fn describe(&self) -> &'static str {
        "rejection rate under the null stays below rho (2000 runs, horizon 1e4)"
    }
    fn run(&self) -> Result<Verdict> {
        let mut v = Verdict::new(self.name());
        let mut table = Table::new("type1", &["rho", "runs", "rejections", "rate", "upper_99"]);
        for (i, rho) in [0.05, 0.1, 0.2].into_iter().enumerate() {
            let rep = calibrate_type1(&sticky(), &DirichletPrior::uniform(2), &[0.5, 0.5], rho, 10_000, 2000, 101 + i as u64)?;
            v.metric(format!("rate[{rho}]"), rep.rate);
            v.metric(format!("upper_99[{rho}]"), rep.upper_99);
            v.check(rep.rate <= rho, format!("rho={rho} rate {:.4} <= {rho}", rep.rate));
            v.check(rep.upper_99 <= 1.3 * rho, format!("rho={rho} 99% bound {:.4} <= {:.3}", rep.upper_99, 1.3 * rho));
            table.push(row![rho, rep.n_runs, rep.rejections, rep.rate, rep.upper_99]);
        }
        v.tables.push(table);
        Ok(v)
    }
}

pub struct DetectionDelayLog;

impl Experiment for DetectionDelayLog {
    fn name(&self) -> &'static str {
        "detection_delay_log"
    }
    fn describe(&self) -> &'static str {
        "mean rejection time grows like log(1/rho) (rho = 2^-2..2^-10, 500 runs)"
    }
    fn run(&self) -> Result<Verdict> {
        let p = MarkovMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]])?;
        let rhos: Vec<f64> = (2..=10).map(|k| (-(k as f64)).exp2()).collect();
        let rep = detection_delay(&sticky(), &p, &DirichletPrior::uniform(2), &[0.5, 0.5], &rhos, 500, 100_000, 202)?;
        let mut v = Verdict::new(self.name());
        let first = rep.rows.first().expect("rows").mean_tau;
        let last = rep.rows.last().expect("rows").mean_tau;
        let censored: u64 = rep.rows.iter().map(|r| r.censored).sum();
        v.metric("r_squared", rep.r_squared);
        v.metric("slope", rep.slope);
        v.metric("ratio", last / first);
        v.metric("censored", censored as f64);
        v.check(rep.r_squared >= 0.9, format!("R² {:.4} >= 0.9", rep.r_squared));
        v.check(last <= 20.0 * first, format!("tau(2^-10)/tau(2^-2) = {:.2} <= 20", last / first));
        let mut table = Table::new("detection_delay", &["rho", "log_inv_rho", "mean_tau", "se", "censored"]);
        for r in &rep.rows {
            table.push(row![r.rho, r.log_inv_rho, r.mean_tau, r.std_err, r.censored]);
        }
        v.tables.push(table);
        Ok(v)
    }
}

pub struct Prop1LinearRegret;

impl Experiment for Prop1LinearRegret {
    fn name(&self) -> &'static str {
        "prop1_linear_regret"
    }
    fn describe(&self) -> &'static str {
        "on the absorbing example every policy has regret/T >= 1/2 against some kernel"
    }
    fn run(&self) -> Result<Verdict> {
        let ex = instances::example1_absorbing();
        let mdp = &ex.mdp;
        let mu = delta_mu(3, 0)?;
        let horizon = 1000u64;
        let policies: Vec<(&str, Box<dyn PolicyRuntime>)> = vec![
            ("uniform", Box::new(StationaryRuntime::new(StationaryPolicy::uniform(3, 2)?))),
            ("ucrl", Box::new(OptimisticRuntime::new(mdp, OptimisticConfig::default()))),
            ("finite-hyp", Box::new(FiniteHypothesisRuntime::new(mdp)?)),
        ];
        let mut v = Verdict::new(self.name());
        let mut table = Table::new("regret", &["policy", "kernel", "T", "mean_regret_over_T", "se"]);
        for (name, policy) in &policies {
            let mut best = (f64::NEG_INFINITY, 0.0);
            for k in 0..2 {
                let alpha = kernel_gain(mdp, k)?.0;
                let curve = run_batch(mdp, k, policy.as_ref(), &mu, &[horizon], 1000, 303)?.regret(&alpha);
                let t = horizon as f64;
                let (m, se) = (curve.mean_regret[0] / t, curve.std_err[0] / t);
                table.push(row![name, curve.kernel, horizon, m, se]);
                if m > best.0 {
                    best = (m, se);
                }
            }
            let bound = 0.5 - 3.0 * best.1 - 1.0 / horizon as f64;
            v.metric(format!("max_regret_over_T[{name}]"), best.0);
            v.check(best.0 >= bound, format!("{name}: max regret/T {:.4} >= {:.4}", best.0, bound));
        }
        v.tables.push(table);
        Ok(v)
    }
}

pub struct RlSublinear;

impl RlSublinear {
    pub const INSTANCE_SEED: u64 = 404;
}

impl Experiment for RlSublinear {
    fn name(&self) -> &'static str {
        "rl_sublinear"
    }
    fn describe(&self) -> &'static str {
        "optimistic learner: regret/T at 2^16 is at most half of regret/T at 2^12"
    }
    fn run(&self) -> Result<Verdict> {
        let inst = instances::random_weakly_communicating(4, 2, 1, Self::INSTANCE_SEED);
        let mdp = &inst.mdp;
        let policy = OptimisticRuntime::new(mdp, OptimisticConfig::default());
        let horizons = [1u64 << 12, 1 << 13, 1 << 14, 1 << 15, 1 << 16];
        let alpha = kernel_gain(mdp, 0)?.0;
        let curve = run_batch(mdp, 0, &policy, &uniform_mu(4), &horizons, 500, 405)?.regret(&alpha);
        let per_t: Vec<f64> = curve.mean_regret.iter().zip(&horizons).map(|(r, t)| r / *t as f64).collect();
        let mut v = Verdict::new(self.name());
        let (early, late) = (per_t[0], per_t[per_t.len() - 1]);
        v.metric("regret_over_T[2^12]", early);
        v.metric("regret_over_T[2^16]", late);
        v.check(late <= 0.5 * early, format!("regret/T {late:.5} at 2^16 <= 0.5 × {early:.5} at 2^12"));
        let mut table = Table::new("regret", &["T", "mean", "se", "n"]);
        for (i, t) in horizons.iter().enumerate() {
            table.push(row![t, curve.mean_regret[i], curve.std_err[i], curve.n_runs]);
        }
        v.tables.push(table);
        Ok(v)
    }
}

pub struct SpanBound;

impl Experiment for SpanBound {
    fn name(&self) -> &'static str {
        "span_bound"
    }
    fn describe(&self) -> &'static str {
        "worst-case optimal stationary policy: cumulative deviation stays within sp(v*)"
    }
    fn run(&self) -> Result<Verdict> {
        let inst = instances::two_kernel_detectable(0.2)?;
        let mdp = &inst.mdp;
        let mu = uniform_mu(3);
        let model = PiStarModel::build(mdp, &pi_star_options(&mu))?;
        let span = model.report.span_v_star;
        let policy = StationaryRuntime::new(model.delta_star.clone());
        let horizons = power_grid(14);
        let batch = run_batch(mdp, model.report.worst_kernel, &policy, &mu, &horizons, 1000, 606)?;
        let (mean, se) = batch.deviation(model.report.alpha_star, &Weight::One);
        let mut v = Verdict::new(self.name());
        v.metric("span_v_star", span);
        let mut table = Table::new("tv", &["kernel", "T", "weighted_mean", "se"]);
        let mut worst_excess = f64::NEG_INFINITY;
        for (i, t) in horizons.iter().enumerate() {
            table.push(row![batch.kernel_name, t, mean[i], se[i]]);
            worst_excess = worst_excess.max(mean[i].abs() - span - 3.0 * se[i]);
        }
        v.metric("max_excess", worst_excess);
        v.check(worst_excess <= 0.0, format!("|mean deviation| <= sp(v*) + 3se at all {} horizons", horizons.len()));
        v.tables.push(table);
        Ok(v)
    }
}

pub struct Prop3TvDiverges;

impl Experiment for Prop3TvDiverges {
    fn name(&self) -> &'static str {
        "prop3_tv_diverges"
    }
    fn describe(&self) -> &'static str {
        "average-optimal policy whose inv_sqrt-weighted transient value diverges"
    }
    fn run(&self) -> Result<Verdict> {
        let inst = instances::single_state_two_action();
        let weight = Weight::InvSqrt;
        let schedule = TvSchedule::generate(&weight, 900)?;
        let ends = schedule.ends[..5].to_vec();
        let mut policy = TvMinusInfinityPolicy::new(schedule);
        let traj = rollout(&inst.mdp, 0, &mut policy, &[1.0], ends[4], 707)?;
        let alpha_star = 1.0;
        let mut v = Verdict::new(self.name());
        let mut table = Table::new("blocks", &["n", "T_n", "weighted_sum", "reward_over_T"]);
        let mut sums = Vec::new();
        for (i, &t) in ends.iter().enumerate() {
            let n = i + 1;
            let total: f64 = traj.rewards[..t as usize].iter().sum();
            let weighted = weight.eval(t) * (total - alpha_star * t as f64);
            let avg = total / t as f64;
            table.push(row![n, t, weighted, avg]);
            v.check(avg >= 1.0 - 2.0 / n as f64, format!("block {n}: reward/T {avg:.4} >= {:.4}", 1.0 - 2.0 / n as f64));
            sums.push(weighted);
        }
        v.metric("last_weighted_sum", *sums.last().expect("five blocks"));
        v.check(sums.windows(2).all(|w| w[1] < w[0]), "weighted sums strictly decreasing");
        v.check(sums[4] <= -3.0, format!("last weighted sum {} <= -3", sums[4]));
        v.tables.push(table);
        Ok(v)
    }
}

fn pi_star_options(mu: &[f64]) -> PiStarOptions {
    PiStarOptions { zeta: 2.0, irreducible_preference: false, mu: mu.to_vec(), prior: None }
}

const PI_STAR_RUNS: u64 = 2000;
const PI_STAR_EXP: u32 = 15;
const PI_STAR_SEED: u64 = 808;

/// π* with ζ = 2 and the finite-hypothesis fallback on the detectable testbed.
fn pi_star_setup() -> Result<(instances::NamedInstance, Arc<PiStarModel>, PiStarRuntime)> {
    let inst = instances::two_kernel_detectable(0.2)?;
    let model = Arc::new(PiStarModel::build(&inst.mdp, &pi_star_options(&uniform_mu(3)))?);
    let fallback = Box::new(FiniteHypothesisRuntime::new(&inst.mdp)?);
    let runtime = PiStarRuntime::new(model.clone(), fallback);
    Ok((inst, model, runtime))
}

pub struct PiStarTvConstant;

impl Experiment for PiStarTvConstant {
    fn name(&self) -> &'static str {
        "pistar_tv_constant"
    }
    fn describe(&self) -> &'static str {
        "pi* under the worst-case kernel: bounded transient loss, rare fallback"
    }
    fn run(&self) -> Result<Verdict> {
        let (inst, model, runtime) = pi_star_setup()?;
        let horizons = power_grid(PI_STAR_EXP);
        let t_max = *horizons.last().expect("grid");
        let batch = run_batch(&inst.mdp, model.report.worst_kernel, &runtime, &uniform_mu(3), &horizons, PI_STAR_RUNS, PI_STAR_SEED)?;
        let (mean, se) = batch.deviation(model.report.alpha_star, &Weight::One);
        let (frac, frac_se) = batch.fallback_fraction(t_max)?;
        let span = model.report.span_v_star;
        let zeta = model.schedule.zeta();
        let bound = -(zeta.exp2() / (zeta.exp2() - 1.0)) * span - 1.0 / ((zeta - 1.0).exp2() - 1.0);
        let last = mean.len() - 1;
        let mut v = Verdict::new(self.name());
        v.metric("deviation", mean[last]);
        v.metric("deviation_se", se[last]);
        v.metric("bound", bound);
        v.metric("fallback_fraction", frac);
        v.metric("fallback_fraction_se", frac_se);
        v.check(
            mean[last] >= bound - 3.0 * se[last],
            format!("deviation at 2^{PI_STAR_EXP} {:.4} >= {:.4} - 3se", mean[last], bound),
        );
        v.check(frac <= 0.05, format!("fallback fraction {frac:.5} <= 0.05"));
        v.tables.push(deviation_table(&batch.kernel_name, &horizons, &mean, &se));
        v.tables.push(phase_table(&batch, t_max)?);
        Ok(v)
    }
}

pub struct PiStarSuboptimalDiverges;

impl Experiment for PiStarSuboptimalDiverges {
    fn name(&self) -> &'static str {
        "pistar_suboptimal_diverges"
    }
    fn describe(&self) -> &'static str {
        "pi* under the better kernel: cumulative deviation grows without bound"
    }
    fn run(&self) -> Result<Verdict> {
        let (inst, model, runtime) = pi_star_setup()?;
        let alt = model.report.kernels.iter().find(|r| !r.worst).map(|r| r.kernel).ok_or_else(|| Error::structure("no alternative kernel"))?;
        let horizons = power_grid(PI_STAR_EXP);
        let t_max = *horizons.last().expect("grid");
        let batch = run_batch(&inst.mdp, alt, &runtime, &uniform_mu(3), &horizons, PI_STAR_RUNS, PI_STAR_SEED)?;
        let (mean, se) = batch.deviation(model.report.alpha_star, &Weight::One);
        let n = mean.len();
        let mut v = Verdict::new(self.name());
        v.metric("deviation", mean[n - 1]);
        v.check(mean[n - 1] >= 10.0, format!("deviation at 2^{PI_STAR_EXP} {:.3} >= 10", mean[n - 1]));
        v.check(
            mean[n - 3] < mean[n - 2] && mean[n - 2] < mean[n - 1],
            format!("increasing over the last three horizons ({:.2}, {:.2}, {:.2})", mean[n - 3], mean[n - 2], mean[n - 1]),
        );
        v.tables.push(deviation_table(&batch.kernel_name, &horizons, &mean, &se));
        v.tables.push(phase_table(&batch, t_max)?);
        Ok(v)
    }
}

fn deviation_table(kernel: &str, horizons: &[u64], mean: &[f64], se: &[f64]) -> Table {
    let mut t = Table::new("tv", &["kernel", "T", "weighted_mean", "se"]);
    for (i, h) in horizons.iter().enumerate() {
        t.push(row![kernel, h, mean[i], se[i]]);
    }
    t
}

/// Mean testing/fallback steps and rejection frequency per epoch.
fn phase_table(batch: &crate::sim::Batch, horizon: u64) -> Result<Table> {
    let mut sums: BTreeMap<u32, (f64, f64, f64)> = BTreeMap::new();
    for o in &batch.outcomes {
        for r in crate::sim::phase_stats(o.events.as_deref(), horizon)? {
            let e = sums.entry(r.epoch).or_default();
            e.0 += r.testing as f64;
            e.1 += r.fallback as f64;
            e.2 += r.rejected as u8 as f64;
        }
    }
    let n = batch.outcomes.len() as f64;
    let mut t = Table::new("phase_stats", &["epoch", "testing", "fallback", "rejected"]);
    for (epoch, (a, b, c)) in sums {
        t.push(row![epoch, a / n, b / n, c / n]);
    }
    Ok(t)
}

pub struct BellmanCrossCheck;

impl Experiment for BellmanCrossCheck {
    fn name(&self) -> &'static str {
        "bellman_cross_check"
    }
    fn describe(&self) -> &'static str {
        "relative value iteration agrees with policy enumeration on 200 random instances"
    }
    fn run(&self) -> Result<Verdict> {
        let results = (0..200u64)
            .into_par_iter()
            .map(|i| {
                let (n, na) = (2 + (i % 4) as usize, 2 + (i % 2) as usize);
                let inst = instances::random_weakly_communicating(n, na, 1, 9000 + i);
                let k = inst.mdp.kernel(0);
                let rvi = solve_unichain_optimal(&inst.mdp, k)?;
                let enumerated = solve_multichain_gain(&inst.mdp, k)?;
                let gap = enumerated.gain.iter().map(|g| (g - rvi.gain()).abs()).fold(0.0, f64::max);
                let residual = bellman_residual(&inst.mdp, k, rvi.gain(), &rvi.gain_bias.bias);
                Ok((gap, residual, rvi.gain_bias.residual))
            })
            .collect::<Result<Vec<_>>>()?;
        let max_gap = results.iter().map(|r| r.0).fold(0.0, f64::max);
        let max_res = results.iter().map(|r| r.1.max(r.2)).fold(0.0, f64::max);
        let spot = (0..10u64)
            .into_par_iter()
            .map(|i| {
                let inst = instances::random_weakly_communicating(2 + (i % 4) as usize, 2 + (i % 2) as usize, 1, 9000 + i * 20);
                let sol = solve_unichain_optimal(&inst.mdp, inst.mdp.kernel(0))?;
                let mut p = StationaryRuntime::new(sol.policy.clone());
                let traj = rollout(&inst.mdp, 0, &mut p, &uniform_mu(inst.mdp.n_states()), 1_000_000, 910 + i)?;
                let avg = traj.rewards.iter().sum::<f64>() / traj.rewards.len() as f64;
                Ok((avg - sol.gain()).abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        let max_spot = spot.iter().copied().fold(0.0, f64::max);
        let mut v = Verdict::new(self.name());
        v.metric("max_gain_gap", max_gap);
        v.metric("max_residual", max_res);
        v.metric("max_empirical_gap", max_spot);
        v.check(max_gap <= 1e-8, format!("max |alpha_rvi - alpha_enum| = {max_gap:.2e} <= 1e-8"));
        v.check(max_res <= 1e-9, format!("max Bellman residual {max_res:.2e} <= 1e-9"));
        v.check(max_spot <= 5e-3, format!("max empirical gap at T=1e6 {max_spot:.2e} <= 5e-3"));
        Ok(v)
    }
}

pub struct UnichainConstruction;

impl Experiment for UnichainConstruction {
    fn name(&self) -> &'static str {
        "unichain_construction"
    }
    fn describe(&self) -> &'static str {
        "redirected optimal policy is gain-optimal and unichain on 50 split instances"
    }
    fn run(&self) -> Result<Verdict> {
        let mut v = Verdict::new(self.name());
        let (mut split, mut unichain, mut optimal) = (0, 0, 0);
        let mut max_gap = 0.0f64;
        for seed in 0..50u64 {
            let inst = instances::split_optimal(seed);
            let (mdp, k) = (&inst.mdp, inst.mdp.kernel(0));
            let sol = solve_unichain_optimal(mdp, k)?;
            split += (chain_structure(&induce_chain(k, &sol.policy)?).closed_classes.len() > 1) as u32;
            let policy = unichain_optimal_policy(mdp, k, UnichainOptions::default())?;
            unichain += chain_structure(&induce_chain(k, &policy)?).is_unichain as u32;
            let gain = evaluate_stationary(mdp, k, &policy)?.gain;
            let gap = gain.iter().map(|g| (g - sol.gain()).abs()).fold(0.0, f64::max);
            max_gap = max_gap.max(gap);
            optimal += (gap <= 1e-9) as u32;
        }
        v.metric("greedy_split", split as f64);
        v.metric("max_gain_gap", max_gap);
        v.check(split == 50, format!("{split}/50 greedy optimal policies have several closed classes"));
        v.check(unichain == 50, format!("{unichain}/50 constructed policies unichain"));
        v.check(optimal == 50, format!("{optimal}/50 constructed policies gain-optimal within 1e-9"));
        Ok(v)
    }
}

/// Named experiments, in a fixed order.
pub struct ExperimentRegistry {
    experiments: Vec<Box<dyn Experiment>>,
}

impl ExperimentRegistry {
    pub fn builtin() -> Self {
        Self {
            experiments: vec![
                Box::new(Type1Bound),
                Box::new(DetectionDelayLog),
                Box::new(Prop1LinearRegret),
                Box::new(RlSublinear),
                Box::new(SpanBound),
                Box::new(Prop3TvDiverges),
                Box::new(PiStarTvConstant),
                Box::new(PiStarSuboptimalDiverges),
                Box::new(BellmanCrossCheck),
                Box::new(UnichainConstruction),
            ],
        }
    }

    pub fn register(&mut self, experiment: Box<dyn Experiment>) {
        self.experiments.push(experiment);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.experiments.iter().map(|e| e.name()).collect()
    }

    pub fn describe(&self) -> Vec<(&'static str, &'static str)> {
        self.experiments.iter().map(|e| (e.name(), e.describe())).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Experiment> {
        self.experiments.iter().find(|e| e.name() == name).map(|e| e.as_ref()).ok_or_else(|| Error::Unknown {
            kind: "experiment",
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }
}
