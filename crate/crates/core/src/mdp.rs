//! Finite MDP primitives: instances, transition kernels and stationary policies.
//!
//! Kernels are stored densely as `probs[(s * n_actions + a) * n_states + s']`.
//! Every probability row is validated on construction: rows summing to one
//! within [`ROW_TOLERANCE`] are accepted as-is, rows within
//! [`RENORMALIZE_TOLERANCE`] are silently renormalized, anything else is
//! rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{chain_structure, MarkovMatrix};
use crate::error::{Error, Result};

/// Rows are accepted verbatim when they sum to one within this tolerance.
pub const ROW_TOLERANCE: f64 = 1e-12;
/// Rows farther than this from summing to one are rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;

/// Largest state space handled by the dense solvers.
pub const MAX_STATES: usize = 64;

/// The admissible per-step action distributions available to the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PolicyConstraint {
    /// Any distribution over actions.
    #[default]
    #[serde(rename = "all")]
    AllDistributions,
    /// Only point masses.
    #[serde(rename = "deterministic")]
    DeterministicOnly,
}

/// Checks a probability vector, renormalizing it in place if it is within the
/// renormalization tolerance.
pub(crate) fn check_prob_row(row: &mut [f64], what: impl Fn() -> String) -> Result<()> {
    if let Some(x) = row.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::Probability(format!("{}: entry {x} is not a probability", what())));
    }
    let sum: f64 = row.iter().sum();
    let dev = (sum - 1.0).abs();
    if dev <= ROW_TOLERANCE {
        Ok(())
    } else if dev <= RENORMALIZE_TOLERANCE {
        row.iter_mut().for_each(|x| *x /= sum);
        Ok(())
    } else {
        Err(Error::Probability(format!("{}: row sums to {sum}", what())))
    }
}

/// A candidate transition kernel `p(s'|s,a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    name: String,
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TransitionKernel {
    /// Builds a kernel from a flat `[s][a][s']` table.
    pub fn new(
        name: impl Into<String>,
        n_states: usize,
        n_actions: usize,
        mut probs: Vec<f64>,
    ) -> Result<Self> {
        let name = name.into();
        if n_states == 0 || n_actions == 0 {
            return Err(Error::shape("kernel needs at least one state and one action"));
        }
        if probs.len() != n_states * n_actions * n_states {
            return Err(Error::shape(format!(
                "kernel `{name}` has {} entries, expected {}",
                probs.len(),
                n_states * n_actions * n_states
            )));
        }
        for (idx, row) in probs.chunks_mut(n_states).enumerate() {
            let (s, a) = (idx / n_actions, idx % n_actions);
            check_prob_row(row, || format!("kernel `{name}` row (s={s}, a={a})"))?;
        }
        Ok(Self {
            name,
            n_states,
            n_actions,
            probs,
        })
    }

    /// Builds a kernel from nested `[s][a][s']` rows.
    pub fn from_nested(name: impl Into<String>, rows: &[Vec<Vec<f64>>]) -> Result<Self> {
        let name = name.into();
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, per_action) in rows.iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(Error::shape(format!(
                    "kernel `{name}` state {s} has {} actions, expected {n_actions}",
                    per_action.len()
                )));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::shape(format!(
                        "kernel `{name}` row (s={s}, a={a}) has length {}, expected {n_states}",
                        row.len()
                    )));
                }
                flat.extend_from_slice(row);
            }
        }
        Self::new(name, n_states, n_actions, flat)
    }

    /// Builds a kernel from one `|S| x |S|` matrix per action.
    pub fn from_action_matrices(name: impl Into<String>, per_action: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n_actions = per_action.len();
        let n_states = per_action.first().map_or(0, Vec::len);
        let mut nested = vec![vec![Vec::new(); n_actions]; n_states];
        for (a, m) in per_action.iter().enumerate() {
            if m.len() != n_states {
                return Err(Error::shape("action matrices must share a state count"));
            }
            for (s, row) in m.iter().enumerate() {
                nested[s][a] = row.clone();
            }
        }
        Self::from_nested(name, &nested)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `p(·|s,a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.probs[start..start + self.n_states]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.probs[(s * self.n_actions + a) * self.n_states + next]
    }

    /// Nested `[s][a][s']` copy, the layout used by the instance file format.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|a| self.row(s, a).to_vec()).collect())
            .collect()
    }

    /// Successor sets of the union digraph: `s -> s'` iff `p(s'|s,a) > 0` for some `a`.
    pub fn union_successors(&self) -> Vec<Vec<usize>> {
        (0..self.n_states)
            .map(|s| {
                (0..self.n_states)
                    .filter(|&t| (0..self.n_actions).any(|a| self.prob(s, a, t) > 0.0))
                    .collect()
            })
            .collect()
    }
}

/// A stationary randomized policy `Δ(a|s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryPolicy {
    n_states: usize,
    n_actions: usize,
    dist: Vec<f64>,
}

impl StationaryPolicy {
    pub fn new(n_states: usize, n_actions: usize, mut dist: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || dist.len() != n_states * n_actions {
            return Err(Error::shape(format!(
                "policy table has {} entries, expected {n_states}x{n_actions}",
                dist.len()
            )));
        }
        for (s, row) in dist.chunks_mut(n_actions).enumerate() {
            check_prob_row(row, || format!("policy row for state {s}"))?;
        }
        Ok(Self {
            n_states,
            n_actions,
            dist,
        })
    }

    /// Point-mass policy choosing `actions[s]` at state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut dist = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::shape(format!("action {a} out of range at state {s}")));
            }
            dist[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, dist)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Result<Self> {
        Self::new(
            n_states,
            n_actions,
            vec![1.0 / n_actions as f64; n_states * n_actions],
        )
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::shape("policy rows have unequal lengths"));
        }
        Self::new(rows.len(), n_actions, rows.concat())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.dist[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.dist.chunks(self.n_actions).map(<[f64]>::to_vec).collect()
    }

    /// The chosen action at every state when the policy is deterministic.
    pub fn as_deterministic(&self) -> Option<Vec<usize>> {
        (0..self.n_states)
            .map(|s| {
                let row = self.row(s);
                row.iter().position(|&x| x == 1.0)
            })
            .collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.as_deterministic().is_some()
    }

    /// Expected one-step reward `Σ_a Δ(a|s) r(s,a)` per state.
    pub fn reward_vector(&self, mdp: &MdpInstance) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| {
                self.row(s)
                    .iter()
                    .enumerate()
                    .map(|(a, w)| w * mdp.reward(s, a))
                    .sum()
            })
            .collect()
    }
}

/// A finite MDP with a finite ambiguity set of kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpInstance {
    n_states: usize,
    n_actions: usize,
    reward: Vec<f64>,
    kernels: Vec<TransitionKernel>,
    constraint: PolicyConstraint,
}

impl MdpInstance {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        reward: Vec<f64>,
        kernels: Vec<TransitionKernel>,
        constraint: PolicyConstraint,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::shape("instance needs at least one state and one action"));
        }
        if n_states > MAX_STATES {
            return Err(Error::Capacity(format!(
                "{n_states} states exceeds the supported maximum of {MAX_STATES}"
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::shape(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if let Some(r) = reward.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Reward(format!("reward {r} outside [0, 1]")));
        }
        if kernels.is_empty() {
            return Err(Error::shape("ambiguity set must contain at least one kernel"));
        }
        for k in &kernels {
            if k.n_states != n_states || k.n_actions != n_actions {
                return Err(Error::shape(format!(
                    "kernel `{}` is {}x{}, instance is {n_states}x{n_actions}",
                    k.name, k.n_states, k.n_actions
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            reward,
            kernels,
            constraint,
        })
    }

    /// Builds an instance from a `[s][a]` reward table.
    pub fn from_reward_rows(
        reward: &[Vec<f64>],
        kernels: Vec<TransitionKernel>,
        constraint: PolicyConstraint,
    ) -> Result<Self> {
        let n_states = reward.len();
        let n_actions = reward.first().map_or(0, Vec::len);
        if reward.iter().any(|r| r.len() != n_actions) {
            return Err(Error::shape("reward rows have unequal lengths"));
        }
        Self::new(n_states, n_actions, reward.concat(), kernels, constraint)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn reward_rows(&self) -> Vec<Vec<f64>> {
        self.reward.chunks(self.n_actions).map(<[f64]>::to_vec).collect()
    }

    pub fn kernels(&self) -> &[TransitionKernel] {
        &self.kernels
    }

    pub fn kernel(&self, index: usize) -> &TransitionKernel {
        &self.kernels[index]
    }

    pub fn kernel_index(&self, name: &str) -> Result<usize> {
        self.kernels
            .iter()
            .position(|k| k.name == name)
            .ok_or_else(|| Error::Unknown {
                kind: "kernel",
                name: name.to_string(),
                available: self
                    .kernels
                    .iter()
                    .map(|k| k.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", "),
            })
    }

    pub fn constraint(&self) -> PolicyConstraint {
        self.constraint
    }

    /// Checks that `policy` is admissible for this instance.
    pub fn check_policy(&self, policy: &StationaryPolicy) -> Result<()> {
        if policy.n_states != self.n_states || policy.n_actions != self.n_actions {
            return Err(Error::shape(format!(
                "policy is {}x{}, instance is {}x{}",
                policy.n_states, policy.n_actions, self.n_states, self.n_actions
            )));
        }
        if self.constraint == PolicyConstraint::DeterministicOnly && !policy.is_deterministic() {
            return Err(Error::param("instance admits deterministic policies only"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

impl Serialize for MdpInstance {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        InstanceFile::from(self).serialize(serializer)
    }
}

/// On-disk instance layout.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    n_states: usize,
    n_actions: usize,
    reward: Vec<Vec<f64>>,
    kernels: Vec<KernelFile>,
    #[serde(default)]
    constraint: PolicyConstraint,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelFile {
    name: String,
    probs: Vec<Vec<Vec<f64>>>,
}

impl From<&MdpInstance> for InstanceFile {
    fn from(mdp: &MdpInstance) -> Self {
        Self {
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            reward: mdp.reward_rows(),
            kernels: mdp
                .kernels
                .iter()
                .map(|k| KernelFile {
                    name: k.name.clone(),
                    probs: k.to_nested(),
                })
                .collect(),
            constraint: mdp.constraint,
        }
    }
}

impl TryFrom<InstanceFile> for MdpInstance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        if file.reward.len() != file.n_states
            || file.reward.iter().any(|r| r.len() != file.n_actions)
        {
            return Err(Error::shape("reward table does not match n_states x n_actions"));
        }
        let kernels = file
            .kernels
            .iter()
            .map(|k| {
                let kernel = TransitionKernel::from_nested(k.name.clone(), &k.probs)?;
                if kernel.n_states != file.n_states || kernel.n_actions != file.n_actions {
                    return Err(Error::shape(format!(
                        "kernel `{}` does not match n_states x n_actions",
                        k.name
                    )));
                }
                Ok(kernel)
            })
            .collect::<Result<Vec<_>>>()?;
        MdpInstance::new(
            file.n_states,
            file.n_actions,
            file.reward.concat(),
            kernels,
            file.constraint,
        )
    }
}

/// The Markov chain `p_Δ(s'|s) = Σ_a p(s'|s,a) Δ(a|s)`.
pub fn induce_chain(kernel: &TransitionKernel, policy: &StationaryPolicy) -> Result<MarkovMatrix> {
    if kernel.n_states != policy.n_states || kernel.n_actions != policy.n_actions {
        return Err(Error::shape(format!(
            "kernel is {}x{}, policy is {}x{}",
            kernel.n_states, kernel.n_actions, policy.n_states, policy.n_actions
        )));
    }
    let n = kernel.n_states;
    let mut probs = vec![0.0; n * n];
    for s in 0..n {
        let out = &mut probs[s * n..(s + 1) * n];
        for (a, &w) in policy.row(s).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(kernel.row(s, a)) {
                *o += w * p;
            }
        }
    }
    MarkovMatrix::new(n, probs)
}

/// Outcome of the weak-communication check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WeakCommunication {
    pub holds: bool,
    /// The communicating class `C_p` when the property holds.
    pub class: Option<Vec<usize>>,
}

/// Decides whether `kernel` is weakly communicating.
///
/// `C_p` must be the unique closed strongly connected component of the union
/// digraph. The remaining states are transient under every stationary policy
/// iff no nonempty subset of them can be kept closed by some action choice;
/// the largest such subset is found by a greatest-fixpoint pruning.
pub fn is_weakly_communicating(mdp: &MdpInstance, kernel: &TransitionKernel) -> WeakCommunication {
    let n = mdp.n_states();
    let succ = kernel.union_successors();
    let mut union = vec![0.0; n * n];
    for (s, row) in succ.iter().enumerate() {
        for &t in row {
            union[s * n + t] = 1.0 / row.len() as f64;
        }
    }
    let structure = chain_structure(
        &MarkovMatrix::new(n, union).expect("union digraph rows are normalized"),
    );
    if structure.closed_classes.len() != 1 {
        return WeakCommunication {
            holds: false,
            class: None,
        };
    }
    let class = structure.closed_classes[0].clone();

    let mut alive: Vec<bool> = (0..n).map(|s| !class.contains(&s)).collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if !alive[s] {
                continue;
            }
            let can_stay = (0..mdp.n_actions()).any(|a| {
                kernel
                    .row(s, a)
                    .iter()
                    .enumerate()
                    .all(|(t, &p)| p == 0.0 || alive[t])
            });
            if !can_stay {
                alive[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if alive.iter().any(|&x| x) {
        WeakCommunication {
            holds: false,
            class: None,
        }
    } else {
        WeakCommunication {
            holds: true,
            class: Some(class),
        }
    }
}

/// All deterministic stationary policies in lexicographic order, as action vectors.
pub(crate) fn enumerate_deterministic(
    n_states: usize,
    n_actions: usize,
    cap: usize,
) -> Result<impl Iterator<Item = Vec<usize>>> {
    let total = (n_actions as u128).checked_pow(n_states as u32).unwrap_or(u128::MAX);
    if total > cap as u128 {
        return Err(Error::Capacity(format!(
            "{n_actions}^{n_states} deterministic policies exceeds the enumeration cap of {cap}"
        )));
    }
    Ok((0..total as usize).map(move |mut code| {
        let mut actions = vec![0; n_states];
        for a in actions.iter_mut().rev() {
            *a = code % n_actions;
            code /= n_actions;
        }
        actions
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    #[test]
    fn rejects_bad_rows() {
        assert!(TransitionKernel::new("k", 2, 1, vec![0.5, 0.6, 0.0, 1.0]).is_err());
        assert!(TransitionKernel::new("k", 2, 1, vec![-0.1, 1.1, 0.0, 1.0]).is_err());
        assert!(TransitionKernel::new("k", 2, 1, vec![0.5, 0.5, 0.0]).is_err());
    }

    #[test]
    fn renormalizes_last_ulp_noise() {
        let k = TransitionKernel::new("k", 2, 1, vec![0.5, 0.5 + 5e-11, 0.0, 1.0]).unwrap();
        let sum: f64 = k.row(0, 0).iter().sum();
        assert!((sum - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn rejects_out_of_range_reward() {
        let k = TransitionKernel::new("k", 1, 1, vec![1.0]).unwrap();
        let err = MdpInstance::new(1, 1, vec![1.5], vec![k], PolicyConstraint::AllDistributions);
        assert!(matches!(err, Err(Error::Reward(_))));
    }

    #[test]
    fn induce_example1_always_a1() {
        let inst = instances::example1_absorbing();
        let policy = StationaryPolicy::deterministic(2, &[0, 0, 0]).unwrap();
        let m = induce_chain(inst.mdp.kernel(0), &policy).unwrap();
        assert_eq!(
            m.rows(),
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]
        );
    }

    #[test]
    fn induce_deterministic_is_action_slice() {
        let inst = instances::random_weakly_communicating(4, 3, 1, 11);
        let k = inst.mdp.kernel(0);
        let policy = StationaryPolicy::deterministic(3, &[2, 0, 1, 2]).unwrap();
        let m = induce_chain(k, &policy).unwrap();
        for (s, a) in [2, 0, 1, 2].into_iter().enumerate() {
            assert_eq!(m.row(s), k.row(s, a));
        }
    }

    #[test]
    fn induce_uniform_mixes_rows() {
        let k = TransitionKernel::from_nested("k", &[vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ]])
        .unwrap();
        let m = induce_chain(&k, &StationaryPolicy::uniform(2, 2).unwrap()).unwrap();
        assert_eq!(m.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn induce_shape_error() {
        let inst = instances::example1_absorbing();
        let policy = StationaryPolicy::uniform(2, 2).unwrap();
        assert!(matches!(induce_chain(inst.mdp.kernel(0), &policy), Err(Error::Shape(_))));
    }

    #[test]
    fn weak_communication_examples() {
        let ex1 = instances::example1_absorbing();
        for k in ex1.mdp.kernels() {
            assert!(!is_weakly_communicating(&ex1.mdp, k).holds);
        }
        let single = instances::single_state_two_action();
        let wc = is_weakly_communicating(&single.mdp, single.mdp.kernel(0));
        assert_eq!(wc.class, Some(vec![0]));
        let rnd = instances::random_weakly_communicating(4, 2, 1, 3);
        let wc = is_weakly_communicating(&rnd.mdp, rnd.mdp.kernel(0));
        assert_eq!(wc.class, Some(vec![0, 1, 2, 3]));
    }

    /// Brute force: weakly communicating iff, for every deterministic policy,
    /// all closed classes lie inside the unique closed class of the union graph.
    fn brute_force_wc(mdp: &MdpInstance, k: &TransitionKernel) -> bool {
        let wc_class = {
            let n = mdp.n_states();
            let succ = k.union_successors();
            let mut m = vec![0.0; n * n];
            for (s, row) in succ.iter().enumerate() {
                for &t in row {
                    m[s * n + t] = 1.0 / row.len() as f64;
                }
            }
            let st = chain_structure(&MarkovMatrix::new(n, m).unwrap());
            if st.closed_classes.len() != 1 {
                return false;
            }
            st.closed_classes[0].clone()
        };
        enumerate_deterministic(mdp.n_states(), mdp.n_actions(), 1 << 20)
            .unwrap()
            .all(|actions| {
                let p = StationaryPolicy::deterministic(mdp.n_actions(), &actions).unwrap();
                let st = chain_structure(&induce_chain(k, &p).unwrap());
                st.closed_classes.iter().flatten().all(|s| wc_class.contains(s))
            })
    }

    #[test]
    fn fixpoint_agrees_with_deterministic_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let n = rng.random_range(1..=4);
            let na = rng.random_range(1..=2);
            // sparse random kernels: each row a point mass or a two-point split
            let mut probs = Vec::new();
            for _ in 0..n * na {
                let mut row = vec![0.0; n];
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                row[i] += 0.5;
                row[j] += 0.5;
                probs.extend(row);
            }
            let k = TransitionKernel::new("k", n, na, probs).unwrap();
            let mdp = MdpInstance::new(
                n,
                na,
                vec![0.0; n * na],
                vec![k.clone()],
                PolicyConstraint::AllDistributions,
            )
            .unwrap();
            assert_eq!(
                is_weakly_communicating(&mdp, &k).holds,
                brute_force_wc(&mdp, &k),
                "{k:?}"
            );
        }
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let inst = instances::example1_absorbing();
        let text = inst.mdp.to_json().unwrap();
        assert_eq!(MdpInstance::from_json(&text).unwrap(), inst.mdp);
        let bad = text.replacen("\"n_states\"", "\"extra\": 1, \"n_states\"", 1);
        assert!(MdpInstance::from_json(&bad).is_err());
    }

    #[test]
    fn enumeration_order_and_cap() {
        let all: Vec<_> = enumerate_deterministic(2, 2, 10).unwrap().collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert!(enumerate_deterministic(21, 2, 1_000_000).is_err());
    }
}
