use std::sync::Arc;

use super::{argmax_low, PolicyRuntime};
use crate::dp::gain_optimal_policy;
use crate::error::{Error, Result};
use crate::mdp::MdpInstance;

#[derive(Debug)]
struct Hypotheses {
    n: usize,
    na: usize,
    /// Per kernel, row-major `(s, a, s')`.
    kernels: Vec<Vec<f64>>,
    /// Per kernel, a gain-optimal deterministic action per state.
    policies: Vec<Vec<usize>>,
}

/// Tracks the log-likelihood of the observed transitions under every kernel
/// of the ambiguity set and plays the optimal policy of the most likely one.
///
/// While more than one kernel remains possible, step `k² − 1` (k ≥ 2) plays
/// action `(k − 2) mod A` instead.
#[derive(Debug, Clone)]
pub struct FiniteHypothesisRuntime {
    hyp: Arc<Hypotheses>,
    loglik: Vec<f64>,
    steps: u64,
    buf: Vec<f64>,
}

impl FiniteHypothesisRuntime {
    pub fn new(mdp: &MdpInstance) -> Result<Self> {
        let (n, na) = (mdp.n_states(), mdp.n_actions());
        let mut kernels = Vec::new();
        let mut policies = Vec::new();
        for k in mdp.kernels() {
            kernels.push(
                (0..n).flat_map(|s| (0..na).map(move |a| (s, a))).flat_map(|(s, a)| k.row(s, a).to_vec()).collect(),
            );
            let policy = gain_optimal_policy(mdp, k)?;
            policies.push(policy.as_deterministic().ok_or_else(|| {
                Error::Numerical { context: "optimal policy is not deterministic".into(), residual: f64::NAN, tolerance: 0.0 }
            })?);
        }
        let count = kernels.len();
        Ok(Self {
            hyp: Arc::new(Hypotheses { n, na, kernels, policies }),
            loglik: vec![0.0; count],
            steps: 0,
            buf: vec![0.0; na],
        })
    }

    /// Index of the currently most likely kernel (lowest index on ties).
    pub fn leader(&self) -> usize {
        argmax_low(&self.loglik, 0.0)
    }

    pub fn log_likelihoods(&self) -> &[f64] {
        &self.loglik
    }

    fn ambiguous(&self) -> bool {
        self.loglik.iter().filter(|l| l.is_finite()).count() > 1
    }

    fn exploration_action(&self) -> Option<usize> {
        let m = self.steps + 1;
        let k = m.isqrt();
        (k >= 2 && k * k == m && self.ambiguous()).then(|| ((k - 2) % self.hyp.na as u64) as usize)
    }
}

impl PolicyRuntime for FiniteHypothesisRuntime {
    fn name(&self) -> &str {
        "finite-hyp"
    }

    fn act(&mut self, state: usize, _time: u64) -> &[f64] {
        let a = self.exploration_action().unwrap_or_else(|| self.hyp.policies[self.leader()][state]);
        self.buf.iter_mut().for_each(|x| *x = 0.0);
        self.buf[a] = 1.0;
        &self.buf
    }

    fn observe(&mut self, state: usize, action: usize, next_state: usize, _time: u64) {
        let (n, na) = (self.hyp.n, self.hyp.na);
        let idx = (state * na + action) * n + next_state;
        for (l, k) in self.loglik.iter_mut().zip(&self.hyp.kernels) {
            *l += k[idx].ln();
        }
        self.steps += 1;
    }

    fn reset(&mut self) {
        self.loglik.iter_mut().for_each(|l| *l = 0.0);
        self.steps = 0;
    }

    fn clone_box(&self) -> Box<dyn PolicyRuntime> {
        Box::new(self.clone())
    }

    fn observations(&self) -> u64 {
        self.steps
    }
}
