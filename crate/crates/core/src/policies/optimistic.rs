use std::sync::Arc;

use serde::Serialize;

use super::{argmax_low, PolicyRuntime};
use crate::dp::ACTION_TIE_TOLERANCE;
use crate::mdp::{MdpInstance, TransitionKernel};

/// Settings of [`OptimisticRuntime`].
///
/// The L1 radius around the empirical row of `(s, a)` at episode start time
/// `t` is `sqrt(confidence_scale · S · ln(2 A t / delta) / max(1, N(s,a)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimisticConfig {
    pub confidence_scale: f64,
    pub delta: f64,
    /// Sweeps of extended value iteration per episode.
    pub max_sweeps: usize,
    pub span_tolerance: f64,
    /// Aperiodicity mixing weight.
    pub lambda: f64,
}

impl Default for OptimisticConfig {
    fn default() -> Self {
        Self {
            confidence_scale: 2.0,
            delta: 0.05,
            max_sweeps: 50,
            span_tolerance: 1e-9,
            lambda: 0.9,
        }
    }
}

/// Maximizes `p · v` over the L1 ball of `radius` around `p_hat`. `order`
/// lists states by decreasing `v`.
pub fn water_fill(p_hat: &[f64], radius: f64, order: &[usize]) -> Vec<f64> {
    let mut p = p_hat.to_vec();
    let best = order[0];
    p[best] = (p_hat[best] + radius / 2.0).min(1.0);
    let mut excess: f64 = p.iter().sum::<f64>() - 1.0;
    for &s in order.iter().rev() {
        if excess <= 0.0 {
            break;
        }
        if s == best {
            continue;
        }
        let cut = excess.min(p[s]);
        p[s] -= cut;
        excess -= cut;
    }
    p
}

/// Optimistic learner: doubling episodes, per-pair L1 confidence sets and
/// extended value iteration. Rewards are taken from the instance; only
/// transitions are learned. Plays deterministic actions.
#[derive(Debug, Clone)]
pub struct OptimisticRuntime {
    rewards: Arc<Vec<f64>>,
    known: Option<Arc<Vec<f64>>>,
    config: OptimisticConfig,
    n: usize,
    na: usize,
    counts: Vec<u64>,
    totals: Vec<u64>,
    episode_counts: Vec<u64>,
    episode_start_totals: Vec<u64>,
    value: Vec<f64>,
    policy: Vec<usize>,
    needs_plan: bool,
    steps: u64,
    episodes: u64,
    buf: Vec<f64>,
}

impl OptimisticRuntime {
    pub fn new(mdp: &MdpInstance, config: OptimisticConfig) -> Self {
        let (n, na) = (mdp.n_states(), mdp.n_actions());
        let rewards = (0..n).flat_map(|s| (0..na).map(move |a| (s, a))).map(|(s, a)| mdp.reward(s, a)).collect();
        Self {
            rewards: Arc::new(rewards),
            known: None,
            config,
            n,
            na,
            counts: vec![0; n * na * n],
            totals: vec![0; n * na],
            episode_counts: vec![0; n * na],
            episode_start_totals: vec![0; n * na],
            value: vec![0.0; n],
            policy: vec![0; n],
            needs_plan: true,
            steps: 0,
            episodes: 0,
            buf: vec![0.0; na],
        }
    }

    /// Oracle variant: the empirical kernel is replaced by `kernel` and the
    /// confidence sets have radius zero, so planning is plain value iteration.
    pub fn with_known_kernel(mdp: &MdpInstance, kernel: &TransitionKernel) -> Self {
        let mut rt = Self::new(
            mdp,
            OptimisticConfig { max_sweeps: 1_000_000, span_tolerance: 1e-12, ..OptimisticConfig::default() },
        );
        let flat = (0..rt.n)
            .flat_map(|s| (0..rt.na).map(move |a| (s, a)))
            .flat_map(|(s, a)| kernel.row(s, a).to_vec())
            .collect();
        rt.known = Some(Arc::new(flat));
        rt
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn current_policy(&self) -> &[usize] {
        &self.policy
    }

    fn estimate(&self, s: usize, a: usize, t: u64) -> (Vec<f64>, f64) {
        let (n, na) = (self.n, self.na);
        if let Some(k) = &self.known {
            let i = (s * na + a) * n;
            return (k[i..i + n].to_vec(), 0.0);
        }
        let total = self.totals[s * na + a];
        if total == 0 {
            return (vec![1.0 / n as f64; n], 2.0);
        }
        let i = (s * na + a) * n;
        let p_hat = self.counts[i..i + n].iter().map(|&c| c as f64 / total as f64).collect();
        let log_term = (2.0 * na as f64 * (t.max(1)) as f64 / self.config.delta).ln();
        let radius = (self.config.confidence_scale * n as f64 * log_term / total as f64).sqrt();
        (p_hat, radius)
    }

    fn plan(&mut self, t: u64) {
        let (n, na) = (self.n, self.na);
        let lambda = self.config.lambda;
        let sets: Vec<(Vec<f64>, f64)> =
            (0..n * na).map(|i| self.estimate(i / na, i % na, t)).collect();
        let mut v = self.value.clone();
        let mut order: Vec<usize> = (0..n).collect();
        let mut q = vec![0.0; na];
        let mut next = vec![0.0; n];
        for _ in 0..self.config.max_sweeps.max(1) {
            order.sort_by(|&x, &y| v[y].total_cmp(&v[x]).then(x.cmp(&y)));
            for s in 0..n {
                for (a, qa) in q.iter_mut().enumerate() {
                    let (p_hat, radius) = &sets[s * na + a];
                    let p = water_fill(p_hat, *radius, &order);
                    let pv: f64 = p.iter().zip(&v).map(|(p, x)| p * x).sum();
                    *qa = self.rewards[s * na + a] + (1.0 - lambda) * v[s] + lambda * pv;
                }
                next[s] = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
            let diffs: Vec<f64> = next.iter().zip(&v).map(|(a, b)| a - b).collect();
            let span = crate::linalg::span(&diffs);
            let lo = next.iter().copied().fold(f64::INFINITY, f64::min);
            for (vs, ns) in v.iter_mut().zip(&next) {
                *vs = ns - lo;
            }
            if span <= self.config.span_tolerance {
                break;
            }
        }
        order.sort_by(|&x, &y| v[y].total_cmp(&v[x]).then(x.cmp(&y)));
        for s in 0..n {
            for (a, qa) in q.iter_mut().enumerate() {
                let (p_hat, radius) = &sets[s * na + a];
                let p = water_fill(p_hat, *radius, &order);
                *qa = self.rewards[s * na + a] + lambda * p.iter().zip(&v).map(|(p, x)| p * x).sum::<f64>();
            }
            self.policy[s] = argmax_low(&q, ACTION_TIE_TOLERANCE);
        }
        self.value = v;
        self.episode_start_totals.copy_from_slice(&self.totals);
        self.episode_counts.iter_mut().for_each(|c| *c = 0);
        self.needs_plan = false;
        self.episodes += 1;
    }
}

impl PolicyRuntime for OptimisticRuntime {
    fn name(&self) -> &str {
        "ucrl"
    }

    fn act(&mut self, state: usize, time: u64) -> &[f64] {
        if self.needs_plan {
            self.plan(time + 1);
        }
        self.buf.iter_mut().for_each(|x| *x = 0.0);
        self.buf[self.policy[state]] = 1.0;
        &self.buf
    }

    fn observe(&mut self, state: usize, action: usize, next_state: usize, _time: u64) {
        let (n, na) = (self.n, self.na);
        let i = state * na + action;
        self.counts[i * n + next_state] += 1;
        self.totals[i] += 1;
        self.episode_counts[i] += 1;
        self.steps += 1;
        if self.episode_counts[i] >= self.episode_start_totals[i].max(1) {
            self.needs_plan = true;
        }
    }

    fn reset(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.totals.iter_mut().for_each(|c| *c = 0);
        self.episode_counts.iter_mut().for_each(|c| *c = 0);
        self.episode_start_totals.iter_mut().for_each(|c| *c = 0);
        self.value.iter_mut().for_each(|x| *x = 0.0);
        self.policy.iter_mut().for_each(|a| *a = 0);
        self.needs_plan = true;
        self.steps = 0;
        self.episodes = 0;
    }

    fn clone_box(&self) -> Box<dyn PolicyRuntime> {
        Box::new(self.clone())
    }

    fn observations(&self) -> u64 {
        self.steps
    }
}
