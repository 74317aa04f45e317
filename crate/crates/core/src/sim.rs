//! Seeded rollouts and Monte Carlo summaries: regret curves, transient-value
//! estimates and per-epoch phase statistics.
//!
//! Run `i` under master seed `m` draws the initial state and transitions from
//! stream `(m, i, Environment)` and actions from `(m, i, Policy)`, so the same
//! run index sees common random numbers under every kernel.

use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::ambiguity::{kernel_gain, robust_gain, validate_mu};
use crate::error::{Error, Result};
use crate::mdp::MdpInstance;
use crate::policies::{EpochEvent, PolicyRuntime};
use crate::rng::{sample_index, stream, StreamPurpose};
use crate::stats::mean_and_se;

/// Weight `w(T)` applied to cumulative deviations.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    One,
    InvSqrt,
    InvT,
    /// Piecewise-constant table of `(T, w)` pairs sorted by `T`; the entry with
    /// the largest `T` not exceeding the argument applies.
    Custom(Vec<(u64, f64)>),
}

impl Weight {
    pub fn eval(&self, t: u64) -> f64 {
        match self {
            Weight::One => 1.0,
            Weight::InvSqrt => 1.0 / (t as f64).sqrt(),
            Weight::InvT => 1.0 / t as f64,
            Weight::Custom(table) => {
                let i = table.partition_point(|(h, _)| *h <= t);
                table[i.saturating_sub(1)].1
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Weight::One => "one",
            Weight::InvSqrt => "inv_sqrt",
            Weight::InvT => "inv_T",
            Weight::Custom(_) => "custom",
        }
    }

    pub fn custom(mut table: Vec<(u64, f64)>) -> Result<Self> {
        if table.is_empty() || table.iter().any(|(_, w)| !w.is_finite()) {
            return Err(Error::param("custom weight table must be non-empty and finite"));
        }
        table.sort_by_key(|(t, _)| *t);
        Ok(Weight::Custom(table))
    }
}

impl FromStr for Weight {
    type Err = Error;

    /// `one`, `inv_sqrt`, `inv_T` or `file:<path>` holding a JSON list of `[T, w]` pairs.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(Weight::One),
            "inv_sqrt" => Ok(Weight::InvSqrt),
            "inv_T" | "inv_t" => Ok(Weight::InvT),
            other => match other.strip_prefix("file:") {
                Some(path) => Weight::custom(serde_json::from_str(&std::fs::read_to_string(path)?)?),
                None => Err(Error::Unknown {
                    kind: "weight",
                    name: other.to_string(),
                    available: "one, inv_sqrt, inv_T, file:<path>".into(),
                }),
            },
        }
    }
}

/// Horizons `2^1, …, 2^max_exp`.
pub fn power_grid(max_exp: u32) -> Vec<u64> {
    (1..=max_exp).map(|k| 1u64 << k).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub seed: u64,
    pub run: u64,
    pub kernel_name: String,
    pub events: Option<Vec<EpochEvent>>,
}

fn check_kernel(mdp: &MdpInstance, kernel: usize) -> Result<()> {
    if kernel >= mdp.kernels().len() {
        return Err(Error::param(format!("kernel index {kernel} out of range")));
    }
    Ok(())
}

fn checked_mu(mdp: &MdpInstance, mu: &[f64]) -> Result<Vec<f64>> {
    let mut mu = mu.to_vec();
    validate_mu(&mut mu, mdp.n_states())?;
    Ok(mu)
}

/// Simulates `horizon` steps of run 0 under `seed`. The runtime is reset first.
pub fn rollout(
    mdp: &MdpInstance,
    kernel: usize,
    policy: &mut dyn PolicyRuntime,
    mu: &[f64],
    horizon: u64,
    seed: u64,
) -> Result<Trajectory> {
    rollout_run(mdp, kernel, policy, mu, horizon, seed, 0)
}

pub fn rollout_run(
    mdp: &MdpInstance,
    kernel: usize,
    policy: &mut dyn PolicyRuntime,
    mu: &[f64],
    horizon: u64,
    seed: u64,
    run: u64,
) -> Result<Trajectory> {
    check_kernel(mdp, kernel)?;
    if horizon == 0 {
        return Err(Error::param("horizon must be at least 1"));
    }
    let mu = checked_mu(mdp, mu)?;
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon as usize + 1),
        actions: Vec::with_capacity(horizon as usize),
        rewards: Vec::with_capacity(horizon as usize),
        seed,
        run,
        kernel_name: mdp.kernel(kernel).name().to_string(),
        events: None,
    };
    simulate(mdp, kernel, policy, &mu, horizon, seed, run, |s, a, r| {
        if traj.states.is_empty() {
            traj.states.push(s);
        }
        if let Some(a) = a {
            traj.actions.push(a.0);
            traj.rewards.push(r);
            traj.states.push(a.1);
        }
    });
    traj.events = policy.events();
    Ok(traj)
}

/// Core loop. `visit(x0, None, _)` is called first, then
/// `visit(x_t, Some((a_t, x_{t+1})), r_t)` per step.
#[allow(clippy::too_many_arguments)]
fn simulate(
    mdp: &MdpInstance,
    kernel: usize,
    policy: &mut dyn PolicyRuntime,
    mu: &[f64],
    horizon: u64,
    seed: u64,
    run: u64,
    mut visit: impl FnMut(usize, Option<(usize, usize)>, f64),
) {
    let k = mdp.kernel(kernel);
    policy.reset();
    policy.set_horizon_hint(Some(horizon));
    let mut env = stream(seed, run, StreamPurpose::Environment);
    let mut pol = stream(seed, run, StreamPurpose::Policy);
    let mut x = sample_index(&mut env, mu);
    visit(x, None, 0.0);
    for t in 0..horizon {
        let dist = policy.act(x, t);
        debug_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let a = sample_index(&mut pol, dist);
        let r = mdp.reward(x, a);
        let next = sample_index(&mut env, k.row(x, a));
        policy.observe(x, a, next, t);
        visit(x, Some((a, next)), r);
        x = next;
    }
}

/// Summary of one run: initial state and cumulative reward at each horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub run: u64,
    pub x0: usize,
    pub cumulative_reward: Vec<f64>,
    pub events: Option<Vec<EpochEvent>>,
}

/// Runs of one policy against one kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Batch {
    pub kernel: usize,
    pub kernel_name: String,
    pub horizons: Vec<u64>,
    pub seed: u64,
    pub outcomes: Vec<RunOutcome>,
}

fn check_horizons(horizons: &[u64]) -> Result<()> {
    if horizons.is_empty() || horizons[0] == 0 || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("horizons must be positive and strictly increasing"));
    }
    Ok(())
}

/// Independent runs in parallel; each starts from a fresh copy of `policy`.
pub fn run_batch(
    mdp: &MdpInstance,
    kernel: usize,
    policy: &dyn PolicyRuntime,
    mu: &[f64],
    horizons: &[u64],
    n_runs: u64,
    seed: u64,
) -> Result<Batch> {
    check_kernel(mdp, kernel)?;
    check_horizons(horizons)?;
    let mu = checked_mu(mdp, mu)?;
    let horizon = *horizons.last().expect("non-empty");
    let outcomes = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let mut rt = policy.clone_box();
            let mut x0 = 0;
            let mut cum = 0.0;
            let mut steps = 0u64;
            let mut next_h = 0;
            let mut checkpoints = Vec::with_capacity(horizons.len());
            simulate(mdp, kernel, rt.as_mut(), &mu, horizon, seed, run, |s, step, r| match step {
                None => x0 = s,
                Some(_) => {
                    cum += r;
                    steps += 1;
                    if steps == horizons[next_h] {
                        checkpoints.push(cum);
                        next_h += 1;
                    }
                }
            });
            RunOutcome { run, x0, cumulative_reward: checkpoints, events: rt.events() }
        })
        .collect();
    Ok(Batch {
        kernel,
        kernel_name: mdp.kernel(kernel).name().to_string(),
        horizons: horizons.to_vec(),
        seed,
        outcomes,
    })
}

fn per_horizon(batch: &Batch, f: impl Fn(&RunOutcome, usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    (0..batch.horizons.len())
        .map(|h| {
            let xs: Vec<f64> = batch.outcomes.iter().map(|o| f(o, h)).collect();
            mean_and_se(&xs)
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretCurve {
    pub kernel: String,
    pub horizons: Vec<u64>,
    pub mean_regret: Vec<f64>,
    pub std_err: Vec<f64>,
    pub n_runs: u64,
    pub alpha_ref: Vec<f64>,
    /// Mean of `α_p(X_0)` over the runs.
    pub mean_alpha_x0: f64,
}

impl Batch {
    /// `R(T) = T α(X_0) − Σ_{t<T} r_t` per horizon.
    pub fn regret(&self, alpha: &[f64]) -> RegretCurve {
        let (mean_regret, std_err) = per_horizon(self, |o, h| {
            self.horizons[h] as f64 * alpha[o.x0] - o.cumulative_reward[h]
        });
        let a0: Vec<f64> = self.outcomes.iter().map(|o| alpha[o.x0]).collect();
        RegretCurve {
            kernel: self.kernel_name.clone(),
            horizons: self.horizons.clone(),
            mean_regret,
            std_err,
            n_runs: self.outcomes.len() as u64,
            alpha_ref: alpha.to_vec(),
            mean_alpha_x0: mean_and_se(&a0).0,
        }
    }

    /// Mean and standard error of `w(T) Σ_{t<T} (r_t − α*)` per horizon.
    pub fn deviation(&self, alpha_star: f64, weight: &Weight) -> (Vec<f64>, Vec<f64>) {
        per_horizon(self, |o, h| {
            let t = self.horizons[h];
            weight.eval(t) * (o.cumulative_reward[h] - t as f64 * alpha_star)
        })
    }

    /// Mean and standard error of the fraction of the first `horizon` steps
    /// spent in the fallback phase.
    pub fn fallback_fraction(&self, horizon: u64) -> Result<(f64, f64)> {
        let fractions = self
            .outcomes
            .iter()
            .map(|o| {
                let rows = phase_stats(o.events.as_deref(), horizon)?;
                Ok(rows.iter().map(|r| r.fallback).sum::<u64>() as f64 / horizon as f64)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(mean_and_se(&fractions))
    }
}

pub fn regret_curve(
    mdp: &MdpInstance,
    kernel: usize,
    policy: &dyn PolicyRuntime,
    mu: &[f64],
    horizons: &[u64],
    n_runs: u64,
    seed: u64,
) -> Result<RegretCurve> {
    check_kernel(mdp, kernel)?;
    let (alpha, _) = kernel_gain(mdp, kernel)?;
    Ok(run_batch(mdp, kernel, policy, mu, horizons, n_runs, seed)?.regret(&alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelTv {
    pub kernel: String,
    pub weighted_mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// Finite-horizon surrogate of the weighted transient value: per kernel, the
/// mean of `w(T) Σ_{t<T} (r_t − α*(μ))`; the envelope is the minimum over
/// kernels at each horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvEstimate {
    pub weight: String,
    pub alpha_star: f64,
    pub horizons: Vec<u64>,
    pub per_kernel: Vec<KernelTv>,
    pub envelope: Vec<f64>,
    /// Envelope at the largest horizon.
    pub tv_lower_envelope: f64,
}

pub fn tv_from_batches(batches: &[Batch], alpha_star: f64, weight: &Weight) -> TvEstimate {
    let per_kernel: Vec<KernelTv> = batches
        .iter()
        .map(|b| {
            let (weighted_mean, std_err) = b.deviation(alpha_star, weight);
            KernelTv { kernel: b.kernel_name.clone(), weighted_mean, std_err }
        })
        .collect();
    let horizons = batches.first().map(|b| b.horizons.clone()).unwrap_or_default();
    let envelope: Vec<f64> = (0..horizons.len())
        .map(|h| per_kernel.iter().map(|k| k.weighted_mean[h]).fold(f64::INFINITY, f64::min))
        .collect();
    TvEstimate {
        weight: weight.name().to_string(),
        alpha_star,
        tv_lower_envelope: envelope.last().copied().unwrap_or(f64::NAN),
        horizons,
        per_kernel,
        envelope,
    }
}

/// Runs `policy` against every kernel in `kernels` (all kernels if empty)
/// with common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn tv_estimate(
    mdp: &MdpInstance,
    kernels: &[usize],
    policy: &dyn PolicyRuntime,
    mu: &[f64],
    weight: &Weight,
    horizons: &[u64],
    n_runs: u64,
    seed: u64,
) -> Result<TvEstimate> {
    let alpha_star = robust_gain(mdp, mu)?.alpha_star;
    let all: Vec<usize> = (0..mdp.kernels().len()).collect();
    let kernels = if kernels.is_empty() { &all[..] } else { kernels };
    let batches = kernels
        .iter()
        .map(|&k| run_batch(mdp, k, policy, mu, horizons, n_runs, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(tv_from_batches(&batches, alpha_star, weight))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PhaseRow {
    pub epoch: u32,
    pub start: u64,
    /// Epoch length truncated at the horizon.
    pub length: u64,
    pub testing: u64,
    pub fallback: u64,
    pub rejected: bool,
}

/// Per-epoch testing and fallback step counts within the first `horizon` steps.
pub fn phase_stats(events: Option<&[EpochEvent]>, horizon: u64) -> Result<Vec<PhaseRow>> {
    let events = events.ok_or_else(|| Error::param("policy did not record epoch events"))?;
    Ok(events
        .iter()
        .filter(|e| e.start < horizon)
        .map(|e| {
            let end = (e.start + e.length).min(horizon);
            let switch = e.rejected_at.map_or(end, |r| r.min(end));
            PhaseRow {
                epoch: e.epoch,
                start: e.start,
                length: end - e.start,
                testing: switch - e.start,
                fallback: end - switch,
                rejected: e.rejected_at.is_some_and(|r| r <= end),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambiguity::{delta_mu, uniform_mu};
    use crate::dp::{bias_of_induced_chain, unichain_optimal_policy, UnichainOptions};
    use crate::instances;
    use crate::mdp::StationaryPolicy;
    use crate::policies::{OptimisticConfig, OptimisticRuntime, StationaryRuntime};

    fn always(n: usize, na: usize, a: usize) -> StationaryRuntime {
        StationaryRuntime::new(StationaryPolicy::deterministic(na, &vec![a; n]).unwrap())
    }

    #[test]
    fn example1_path() {
        let ex = instances::example1_absorbing();
        let mut p = always(3, 2, 0);
        let tr = rollout(&ex.mdp, 0, &mut p, &delta_mu(3, 0).unwrap(), 5, 1).unwrap();
        assert_eq!(tr.states, vec![0, 1, 1, 1, 1, 1]);
        assert_eq!(tr.rewards, vec![0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(tr.actions.len() + 1, tr.states.len());
        assert_eq!(tr.kernel_name, "p1");
    }

    #[test]
    fn rollouts_are_reproducible() {
        let inst = instances::random_weakly_communicating(4, 2, 1, 3);
        let mut p = OptimisticRuntime::new(&inst.mdp, OptimisticConfig::default());
        let a = rollout(&inst.mdp, 0, &mut p, &uniform_mu(4), 500, 9).unwrap();
        let b = rollout(&inst.mdp, 0, &mut p, &uniform_mu(4), 500, 9).unwrap();
        let c = rollout(&inst.mdp, 0, &mut p, &uniform_mu(4), 500, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.states, c.states);
        for (t, r) in a.rewards.iter().enumerate() {
            assert!((0.0..=1.0).contains(r));
            assert_eq!(*r, inst.mdp.reward(a.states[t], a.actions[t]));
        }
        let b1 = run_batch(&inst.mdp, 0, &p, &uniform_mu(4), &[10, 100], 20, 4).unwrap();
        let b2 = run_batch(&inst.mdp, 0, &p, &uniform_mu(4), &[10, 100], 20, 4).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn worst_action_regret_is_linear() {
        let inst = instances::single_state_two_action();
        let curve = regret_curve(&inst.mdp, 0, &always(1, 2, 0), &[1.0], &[1, 10, 100], 5, 1).unwrap();
        assert_eq!(curve.mean_regret, vec![1.0, 10.0, 100.0]);
        assert_eq!(curve.std_err, vec![0.0; 3]);
        assert!(curve.mean_regret.iter().zip(&curve.horizons).all(|(r, t)| *r <= *t as f64 + 1e-9));
    }

    #[test]
    fn regret_and_deviation_are_dual() {
        let inst = instances::two_kernel_detectable(0.2).unwrap();
        let mu = uniform_mu(3);
        let alpha_star = robust_gain(&inst.mdp, &mu).unwrap().alpha_star;
        let policy = StationaryRuntime::new(StationaryPolicy::uniform(3, 2).unwrap());
        for k in 0..2 {
            let batch = run_batch(&inst.mdp, k, &policy, &mu, &[8, 64, 512], 200, 3).unwrap();
            let alpha = kernel_gain(&inst.mdp, k).unwrap().0;
            let regret = batch.regret(&alpha);
            let (dev, _) = batch.deviation(alpha_star, &Weight::One);
            for (h, &t) in batch.horizons.iter().enumerate() {
                let lhs = regret.mean_regret[h] + dev[h];
                let rhs = t as f64 * (regret.mean_alpha_x0 - alpha_star);
                assert!((lhs - rhs).abs() <= 1e-9 * t as f64, "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn standard_error_shrinks_with_runs() {
        let inst = instances::random_weakly_communicating(3, 2, 1, 6);
        let policy = StationaryRuntime::new(StationaryPolicy::uniform(3, 2).unwrap());
        let mu = uniform_mu(3);
        let se = |runs| run_batch(&inst.mdp, 0, &policy, &mu, &[64], runs, 8).unwrap().regret(&[0.0; 3]).std_err[0];
        let ratio = se(8000) / se(4000);
        assert!((0.6..=0.82).contains(&ratio), "{ratio}");
    }

    #[test]
    fn optimal_policy_deviation_within_span() {
        let inst = instances::two_kernel_detectable(0.2).unwrap();
        let worst = 0;
        let k = inst.mdp.kernel(worst);
        let delta = unichain_optimal_policy(&inst.mdp, k, UnichainOptions::default()).unwrap();
        let span = bias_of_induced_chain(&inst.mdp, k, &delta).unwrap().span;
        let tv = tv_estimate(
            &inst.mdp, &[worst], &StationaryRuntime::new(delta), &uniform_mu(3),
            &Weight::One, &power_grid(10), 400, 5,
        ).unwrap();
        let kt = &tv.per_kernel[0];
        for (m, se) in kt.weighted_mean.iter().zip(&kt.std_err) {
            assert!(m.abs() <= span + 3.0 * se, "{m} {se} {span}");
        }
    }

    #[test]
    fn inverse_t_weight_gives_gain_gap() {
        let inst = instances::two_kernel_detectable(0.2).unwrap();
        let tv = tv_estimate(
            &inst.mdp, &[], &always(3, 2, 1), &uniform_mu(3), &Weight::InvT, &[1 << 14], 100, 2,
        ).unwrap();
        assert_eq!(tv.per_kernel.len(), 2);
        assert!(tv.tv_lower_envelope <= 0.0);
    }

    #[test]
    fn weights_parse_and_evaluate() {
        assert_eq!("one".parse::<Weight>().unwrap(), Weight::One);
        assert_eq!("inv_T".parse::<Weight>().unwrap().eval(4), 0.25);
        assert_eq!(Weight::InvSqrt.eval(16), 0.25);
        assert!("nope".parse::<Weight>().is_err());
        let w = Weight::custom(vec![(10, 0.5), (1, 1.0)]).unwrap();
        assert_eq!((w.eval(1), w.eval(9), w.eval(10), w.eval(100)), (1.0, 1.0, 0.5, 0.5));
        assert_eq!(power_grid(3), vec![2, 4, 8]);
    }

    #[test]
    fn phase_rows() {
        let events = [
            EpochEvent { epoch: 1, start: 0, length: 2, rejected_at: None },
            EpochEvent { epoch: 2, start: 2, length: 4, rejected_at: Some(5) },
            EpochEvent { epoch: 3, start: 6, length: 8, rejected_at: Some(13) },
        ];
        let rows = phase_stats(Some(&events), 10).unwrap();
        assert_eq!((rows[0].testing, rows[0].fallback, rows[0].rejected), (2, 0, false));
        assert_eq!((rows[1].testing, rows[1].fallback, rows[1].rejected), (3, 1, true));
        assert_eq!((rows[2].length, rows[2].testing, rows[2].fallback, rows[2].rejected), (4, 4, 0, false));
        for r in &rows {
            assert_eq!(r.testing + r.fallback, r.length);
        }
        assert!(phase_stats(None, 10).is_err());
    }
}
