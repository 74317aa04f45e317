//! Average-reward dynamic programming: policy evaluation, relative value
//! iteration for constant-gain problems, exhaustive multichain gains, and the
//! unichain-inducing optimal policy.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::chain::{chain_structure, limiting_matrix, MarkovMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::{
    enumerate_deterministic, induce_chain, is_weakly_communicating, MdpInstance,
    StationaryPolicy, TransitionKernel,
};

/// Residual bound for [`evaluate_stationary`].
pub const EVALUATION_TOLERANCE: f64 = 1e-10;
/// Residual bound for the constant-gain optimality equation.
pub const BELLMAN_TOLERANCE: f64 = 1e-9;
/// Largest number of deterministic policies the enumerator will visit.
pub const ENUMERATION_CAP: usize = 1_000_000;
/// Actions within this distance of the Bellman maximum count as maximizers.
pub const ACTION_TIE_TOLERANCE: f64 = 1e-9;

/// Gain and bias of a Bellman system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainBias {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub residual: f64,
    pub span: f64,
}

impl GainBias {
    /// The common gain when all entries agree within `tol`.
    pub fn constant_gain(&self, tol: f64) -> Option<f64> {
        let g0 = *self.gain.first()?;
        self.gain.iter().all(|g| (g - g0).abs() <= tol).then_some(g0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalSolution {
    pub gain_bias: GainBias,
    pub policy: StationaryPolicy,
    pub deterministic: bool,
}

impl OptimalSolution {
    pub fn gain(&self) -> f64 {
        self.gain_bias.gain[0]
    }
}

fn check_dims(mdp: &MdpInstance, kernel: &TransitionKernel) -> Result<()> {
    if kernel.n_states() != mdp.n_states() || kernel.n_actions() != mdp.n_actions() {
        return Err(Error::shape("kernel does not match instance dimensions"));
    }
    Ok(())
}

/// Gain `g = P* r_Δ` and bias normalized by `P* v = 0` (so `ν_C · v = 0` on
/// every recurrent class) of a stationary policy.
pub fn evaluate_stationary(
    mdp: &MdpInstance,
    kernel: &TransitionKernel,
    policy: &StationaryPolicy,
) -> Result<GainBias> {
    check_dims(mdp, kernel)?;
    let p = induce_chain(kernel, policy)?;
    let r = policy.reward_vector(mdp);
    evaluate_chain(&p, &r)
}

/// [`evaluate_stationary`] on an explicit chain and reward vector.
pub fn evaluate_chain(p: &MarkovMatrix, r: &[f64]) -> Result<GainBias> {
    let n = p.n();
    let limit = limiting_matrix(p)?;
    let gain = limit.apply(r);

    // (I - P + P*) v = r - g
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] =
                if i == j { 1.0 } else { 0.0 } - p.get(i, j) + limit.get(i, j);
        }
    }
    let rhs: Vec<f64> = r.iter().zip(&gain).map(|(r, g)| r - g).collect();
    let bias = linalg::solve(n, &a, &rhs, "bias equation")?;

    let pg = p.apply(&gain);
    let pv = p.apply(&bias);
    let residual = (0..n)
        .map(|s| {
            let gain_eq = (gain[s] - pg[s]).abs();
            let bias_eq = (gain[s] + bias[s] - r[s] - pv[s]).abs();
            gain_eq.max(bias_eq)
        })
        .fold(0.0, f64::max);
    if residual > EVALUATION_TOLERANCE {
        return Err(Error::Numerical {
            context: "policy evaluation".into(),
            residual,
            tolerance: EVALUATION_TOLERANCE,
        });
    }
    let span = linalg::span(&bias);
    Ok(GainBias {
        gain,
        bias,
        residual,
        span,
    })
}

/// Settings for relative value iteration.
#[derive(Debug, Clone, Copy)]
pub struct RviConfig {
    /// Aperiodicity mixing weight `λ` in `(1-λ) I + λ P`.
    pub lambda: f64,
    pub span_tolerance: f64,
    pub max_iters: usize,
    pub reference_state: usize,
}

impl Default for RviConfig {
    fn default() -> Self {
        Self {
            lambda: 0.9,
            span_tolerance: 1e-12,
            max_iters: 1_000_000,
            reference_state: 0,
        }
    }
}

fn q_value(mdp: &MdpInstance, kernel: &TransitionKernel, v: &[f64], s: usize, a: usize) -> f64 {
    mdp.reward(s, a) + kernel.row(s, a).iter().zip(v).map(|(p, x)| p * x).sum::<f64>()
}

/// Bellman residual `max_s |max_a{r - α + p v} - v(s)|`.
pub fn bellman_residual(mdp: &MdpInstance, kernel: &TransitionKernel, gain: f64, v: &[f64]) -> f64 {
    (0..mdp.n_states())
        .map(|s| {
            let best = (0..mdp.n_actions())
                .map(|a| q_value(mdp, kernel, v, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            (best - gain - v[s]).abs()
        })
        .fold(0.0, f64::max)
}

/// Maximizing actions at each state, in increasing index order.
pub fn greedy_action_sets(
    mdp: &MdpInstance,
    kernel: &TransitionKernel,
    v: &[f64],
    tol: f64,
) -> Vec<Vec<usize>> {
    (0..mdp.n_states())
        .map(|s| {
            let q: Vec<f64> = (0..mdp.n_actions())
                .map(|a| q_value(mdp, kernel, v, s, a))
                .collect();
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..mdp.n_actions()).filter(|&a| q[a] >= best - tol).collect()
        })
        .collect()
}

/// Relative value iteration for the constant-gain optimality equation.
pub fn solve_unichain_optimal(mdp: &MdpInstance, kernel: &TransitionKernel) -> Result<OptimalSolution> {
    solve_unichain_optimal_with(mdp, kernel, RviConfig::default())
}

pub fn solve_unichain_optimal_with(
    mdp: &MdpInstance,
    kernel: &TransitionKernel,
    config: RviConfig,
) -> Result<OptimalSolution> {
    check_dims(mdp, kernel)?;
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    if config.reference_state >= n || !(0.0..=1.0).contains(&config.lambda) || config.lambda == 0.0 {
        return Err(Error::param("invalid relative value iteration settings"));
    }
    let lambda = config.lambda;
    let mut w = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut diff_span = f64::INFINITY;
    let mut gain = 0.0;
    let mut converged = false;
    for _ in 0..config.max_iters {
        for s in 0..n {
            let best = (0..na)
                .map(|a| {
                    mdp.reward(s, a)
                        + lambda * kernel.row(s, a).iter().zip(&w).map(|(p, x)| p * x).sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            next[s] = best + (1.0 - lambda) * w[s];
        }
        let (lo, hi) = next
            .iter()
            .zip(&w)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        diff_span = hi - lo;
        gain = 0.5 * (lo + hi);
        let anchor = next[config.reference_state];
        for (wi, ni) in w.iter_mut().zip(&next) {
            *wi = ni - anchor;
        }
        if diff_span <= config.span_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            iterations: config.max_iters,
            span: diff_span,
        });
    }

    let bias: Vec<f64> = w.iter().map(|x| lambda * x).collect();
    let actions: Vec<usize> = greedy_action_sets(mdp, kernel, &bias, ACTION_TIE_TOLERANCE)
        .into_iter()
        .map(|set| set[0])
        .collect();
    let policy = StationaryPolicy::deterministic(na, &actions)?;
    let residual = bellman_residual(mdp, kernel, gain, &bias);
    if residual > BELLMAN_TOLERANCE {
        return Err(Error::Numerical {
            context: "relative value iteration".into(),
            residual,
            tolerance: BELLMAN_TOLERANCE,
        });
    }
    Ok(OptimalSolution {
        gain_bias: GainBias {
            gain: vec![gain; n],
            span: linalg::span(&bias),
            bias,
            residual,
        },
        policy,
        deterministic: true,
    })
}

/// Optimal gains obtained by evaluating every deterministic stationary policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultichainGain {
    pub gain: Vec<f64>,
    /// A deterministic policy attaining the pointwise maximum at every state.
    pub policy: StationaryPolicy,
    pub policies_evaluated: usize,
}

pub fn solve_multichain_gain(mdp: &MdpInstance, kernel: &TransitionKernel) -> Result<MultichainGain> {
    check_dims(mdp, kernel)?;
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let mut best_gain = vec![f64::NEG_INFINITY; n];
    let mut best_sum = f64::NEG_INFINITY;
    let mut best_policy = None;
    let mut count = 0;
    for actions in enumerate_deterministic(n, na, ENUMERATION_CAP).map_err(|_| {
        Error::Capacity(format!(
            "{na}^{n} deterministic policies exceeds {ENUMERATION_CAP}; use the rvi solver"
        ))
    })? {
        let policy = StationaryPolicy::deterministic(na, &actions)?;
        let gb = evaluate_stationary(mdp, kernel, &policy)?;
        for (b, g) in best_gain.iter_mut().zip(&gb.gain) {
            *b = b.max(*g);
        }
        let sum: f64 = gb.gain.iter().sum();
        if sum > best_sum + 1e-12 {
            best_sum = sum;
            best_policy = Some(policy);
        }
        count += 1;
    }
    Ok(MultichainGain {
        gain: best_gain,
        policy: best_policy.expect("at least one deterministic policy"),
        policies_evaluated: count,
    })
}

/// A gain-optimal deterministic policy for any kernel: relative value
/// iteration for weakly communicating kernels, enumeration otherwise.
pub fn gain_optimal_policy(mdp: &MdpInstance, kernel: &TransitionKernel) -> Result<StationaryPolicy> {
    if is_weakly_communicating(mdp, kernel).holds {
        Ok(solve_unichain_optimal(mdp, kernel)?.policy)
    } else {
        Ok(solve_multichain_gain(mdp, kernel)?.policy)
    }
}

/// Options for [`unichain_optimal_policy`].
#[derive(Debug, Clone, Copy, Default)]
pub struct UnichainOptions {
    /// Try a uniform mixture over maximizing actions first and keep it when
    /// the induced chain is irreducible.
    pub prefer_irreducible: bool,
}

/// A gain-optimal policy whose induced chain is unichain.
///
/// Starting from the greedy optimal policy, every state of the communicating
/// class outside one chosen closed class is redirected one step along a
/// shortest positive-probability path toward that class.
pub fn unichain_optimal_policy(
    mdp: &MdpInstance,
    kernel: &TransitionKernel,
    options: UnichainOptions,
) -> Result<StationaryPolicy> {
    check_dims(mdp, kernel)?;
    let wc = is_weakly_communicating(mdp, kernel);
    let Some(cp) = wc.class else {
        return Err(Error::structure(format!(
            "kernel `{}` is not weakly communicating",
            kernel.name()
        )));
    };
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let solution = solve_unichain_optimal(mdp, kernel)?;
    let alpha = solution.gain();

    if options.prefer_irreducible {
        let sets = greedy_action_sets(mdp, kernel, &solution.gain_bias.bias, 1e-8);
        let mut dist = vec![0.0; n * na];
        for (s, set) in sets.iter().enumerate() {
            for &a in set {
                dist[s * na + a] = 1.0 / set.len() as f64;
            }
        }
        let mixed = StationaryPolicy::new(n, na, dist)?;
        if mdp.check_policy(&mixed).is_ok()
            && chain_structure(&induce_chain(kernel, &mixed)?).is_irreducible(n)
        {
            verify_unichain_optimal(mdp, kernel, &mixed, alpha)?;
            return Ok(mixed);
        }
    }

    let greedy = solution.policy;
    let structure = chain_structure(&induce_chain(kernel, &greedy)?);
    if structure.is_unichain {
        return Ok(greedy);
    }

    let target = &structure.closed_classes[0];
    let in_cp: Vec<bool> = (0..n).map(|s| cp.contains(&s)).collect();
    // reverse BFS distances to the target class within C_p
    let succ = kernel.union_successors();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for &s in target {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(t) = queue.pop_front() {
        for s in 0..n {
            if in_cp[s] && dist[s] == usize::MAX && succ[s].contains(&t) {
                dist[s] = dist[t] + 1;
                queue.push_back(s);
            }
        }
    }

    let mut actions = greedy.as_deterministic().expect("greedy policy is deterministic");
    for s in 0..n {
        if !in_cp[s] || dist[s] == 0 {
            continue;
        }
        if dist[s] == usize::MAX {
            return Err(Error::structure(format!("state {s} cannot reach the chosen class")));
        }
        actions[s] = (0..na)
            .find(|&a| {
                kernel
                    .row(s, a)
                    .iter()
                    .enumerate()
                    .any(|(t, &p)| p > 0.0 && dist[t] == dist[s] - 1)
            })
            .expect("a shortest-path successor exists");
    }
    let policy = StationaryPolicy::deterministic(na, &actions)?;
    verify_unichain_optimal(mdp, kernel, &policy, alpha)?;
    Ok(policy)
}

fn verify_unichain_optimal(
    mdp: &MdpInstance,
    kernel: &TransitionKernel,
    policy: &StationaryPolicy,
    alpha: f64,
) -> Result<()> {
    if !chain_structure(&induce_chain(kernel, policy)?).is_unichain {
        return Err(Error::structure("constructed policy is not unichain"));
    }
    let gb = evaluate_stationary(mdp, kernel, policy)?;
    let residual = gb.gain.iter().map(|g| (g - alpha).abs()).fold(0.0, f64::max);
    if residual > BELLMAN_TOLERANCE {
        return Err(Error::Numerical {
            context: "unichain policy gain".into(),
            residual,
            tolerance: BELLMAN_TOLERANCE,
        });
    }
    Ok(())
}

/// Gain and bias `v*` of the chain induced by a unichain policy.
pub fn bias_of_induced_chain(
    mdp: &MdpInstance,
    kernel: &TransitionKernel,
    policy: &StationaryPolicy,
) -> Result<GainBias> {
    let p = induce_chain(kernel, policy)?;
    if !chain_structure(&p).is_unichain {
        return Err(Error::structure("induced chain is not unichain"));
    }
    evaluate_chain(&p, &policy.reward_vector(mdp))
}

/// Uniform output of the registered gain solvers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    pub solver: String,
    pub kernel: String,
    pub gain: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    pub span: Option<f64>,
    pub policy: Vec<Vec<f64>>,
    pub residual: Option<f64>,
}

/// A named strategy for computing optimal gains of a single kernel.
pub trait GainSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, mdp: &MdpInstance, kernel: &TransitionKernel) -> Result<SolverReport>;
}

/// Relative value iteration; requires a weakly communicating kernel.
pub struct RviSolver;

impl GainSolver for RviSolver {
    fn name(&self) -> &'static str {
        "rvi"
    }

    fn solve(&self, mdp: &MdpInstance, kernel: &TransitionKernel) -> Result<SolverReport> {
        let sol = solve_unichain_optimal(mdp, kernel)?;
        Ok(SolverReport {
            solver: self.name().into(),
            kernel: kernel.name().into(),
            gain: sol.gain_bias.gain,
            span: Some(sol.gain_bias.span),
            bias: Some(sol.gain_bias.bias),
            policy: sol.policy.rows(),
            residual: Some(sol.gain_bias.residual),
        })
    }
}

/// Exhaustive deterministic-policy enumeration; reports gains only.
pub struct EnumerationSolver;

impl GainSolver for EnumerationSolver {
    fn name(&self) -> &'static str {
        "enumerate"
    }

    fn solve(&self, mdp: &MdpInstance, kernel: &TransitionKernel) -> Result<SolverReport> {
        let sol = solve_multichain_gain(mdp, kernel)?;
        Ok(SolverReport {
            solver: self.name().into(),
            kernel: kernel.name().into(),
            gain: sol.gain,
            bias: None,
            span: None,
            policy: sol.policy.rows(),
            residual: None,
        })
    }
}

/// Solvers selectable by name.
pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Box<dyn GainSolver>>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        Self {
            solvers: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(RviSolver));
        reg.register(Box::new(EnumerationSolver));
        reg
    }

    pub fn register(&mut self, solver: Box<dyn GainSolver>) {
        self.solvers.insert(solver.name(), solver);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn GainSolver> {
        self.solvers.get(name).map(|b| b.as_ref()).ok_or_else(|| Error::Unknown {
            kind: "solver",
            name: name.into(),
            available: self.names().join(", "),
        })
    }
}
