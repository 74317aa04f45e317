//! Library of named instances: the absorbing counterexample, the single-state
//! two-action instance, a detectable two-kernel testbed, and seeded random
//! generators.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::ambiguity::{robust_gain, uniform_mu};
use crate::chain::{chain_structure, kl_rate};
use crate::dp::{bias_of_induced_chain, unichain_optimal_policy, UnichainOptions};
use crate::error::{Error, Result};
use crate::mdp::{induce_chain, MdpInstance, PolicyConstraint, TransitionKernel};

/// Floor applied to generated transition probabilities.
pub const PROBABILITY_FLOOR: f64 = 1e-3;

/// How an expected value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Certification {
    /// Closed-form value known from the construction of the instance.
    Analytic,
    /// Computed by the shipped solvers when the instance was generated.
    Computed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedValue {
    pub value: f64,
    pub certification: Certification,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedInstance {
    pub id: String,
    pub mdp: MdpInstance,
    pub notes: String,
    pub expected: BTreeMap<String, ExpectedValue>,
}

impl NamedInstance {
    fn new(id: impl Into<String>, mdp: MdpInstance, notes: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            mdp,
            notes: notes.into(),
            expected: BTreeMap::new(),
        }
    }

    fn expect(mut self, key: &str, value: f64, certification: Certification) -> Self {
        self.expected.insert(
            key.to_string(),
            ExpectedValue {
                value,
                certification,
            },
        );
        self
    }
}

/// Three states `{i, e1, e2}` (indices 0, 1, 2) and two actions. Both end
/// states are absorbing; action `a_k` leads from `i` to `e1` under kernel
/// `p^(k)` and to `e2` under the other kernel.
pub fn example1_absorbing() -> NamedInstance {
    let a1 = vec![
        vec![0.0, 1.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ];
    let a2 = vec![
        vec![0.0, 0.0, 1.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ];
    let p1 = TransitionKernel::from_action_matrices("p1", &[a1.clone(), a2.clone()])
        .expect("valid kernel");
    let p2 = TransitionKernel::from_action_matrices("p2", &[a2, a1]).expect("valid kernel");
    let reward = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]];
    let mdp = MdpInstance::from_reward_rows(&reward, vec![p1, p2], PolicyConstraint::AllDistributions)
        .expect("valid instance");
    NamedInstance::new(
        "example1_absorbing",
        mdp,
        "absorbing counterexample: no policy has sublinear regret under both kernels",
    )
    .expect("gain_p1_i", 1.0, Certification::Analytic)
    .expect("gain_p2_i", 1.0, Certification::Analytic)
}

/// One state, actions `a_0` (reward 0) and `a_1` (reward 1).
pub fn single_state_two_action() -> NamedInstance {
    let p = TransitionKernel::new("p", 1, 2, vec![1.0, 1.0]).expect("valid kernel");
    let mdp = MdpInstance::new(1, 2, vec![0.0, 1.0], vec![p], PolicyConstraint::AllDistributions)
        .expect("valid instance");
    NamedInstance::new(
        "single_state_two_action",
        mdp,
        "optimal policies with arbitrarily poor transient value exist here",
    )
    .expect("alpha", 1.0, Certification::Analytic)
    .expect("span", 0.0, Certification::Analytic)
}

const DETECTABLE_BASE: [[[f64; 3]; 2]; 3] = [
    [[0.6, 0.3, 0.1], [0.2, 0.4, 0.4]],
    [[0.3, 0.5, 0.2], [0.1, 0.5, 0.4]],
    [[0.2, 0.3, 0.5], [0.4, 0.4, 0.2]],
];
const DETECTABLE_REWARD: [[f64; 2]; 3] = [[0.1, 0.0], [0.5, 0.4], [1.0, 0.9]];

/// Two strictly positive kernels on three states. The alternative moves a
/// `2·delta` share of every row onto the best state, so its optimal gain is
/// strictly larger and its rows differ from the worst-case kernel's by at
/// least `delta` in total variation.
pub fn two_kernel_detectable(delta: f64) -> Result<NamedInstance> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::param(format!("delta must lie in (0, 0.5], got {delta}")));
    }
    let mut star = Vec::new();
    let mut alt = Vec::new();
    for per_state in DETECTABLE_BASE {
        for row in per_state {
            star.extend_from_slice(&row);
            let mut moved: Vec<f64> = row.iter().map(|p| (1.0 - 2.0 * delta) * p).collect();
            moved[2] += 2.0 * delta;
            alt.extend(moved);
        }
    }
    let p_star = TransitionKernel::new("p_star", 3, 2, star)?;
    let p_alt = TransitionKernel::new("p_alt", 3, 2, alt)?;
    let reward: Vec<Vec<f64>> = DETECTABLE_REWARD.iter().map(|r| r.to_vec()).collect();
    let mdp = MdpInstance::from_reward_rows(&reward, vec![p_star, p_alt], PolicyConstraint::AllDistributions)?;

    let robust = robust_gain(&mdp, &uniform_mu(3))?;
    if robust.worst_kernels != [0] {
        return Err(Error::structure("detectable instance lost its unique worst kernel"));
    }
    let k_star = mdp.kernel(0);
    let delta_star = unichain_optimal_policy(&mdp, k_star, UnichainOptions::default())?;
    let p0 = induce_chain(k_star, &delta_star)?;
    let c0 = chain_structure(&p0).closed_classes[0].clone();
    let p_alt_chain = induce_chain(mdp.kernel(1), &delta_star)?;
    let rate = kl_rate(&p_alt_chain, &p0, &chain_structure(&p_alt_chain).closed_classes[0])?;
    if rate <= 0.0 || c0.len() != 3 {
        return Err(Error::structure("detectable instance is not identifiable"));
    }
    let v_star = bias_of_induced_chain(&mdp, k_star, &delta_star)?;
    let alpha_alt = robust.per_kernel_gain[1][0];
    Ok(NamedInstance::new(
        format!("two_kernel_detectable:{delta}"),
        mdp,
        "unique worst-case kernel; the alternative is identifiable under the worst-case optimal policy",
    )
    .expect("alpha_star", robust.alpha_star, Certification::Computed)
    .expect("alpha_alt", alpha_alt, Certification::Computed)
    .expect("span_v_star", v_star.span, Certification::Computed)
    .expect("kl_rate_alt", rate, Certification::Computed))
}

fn random_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x = (*x / sum).max(PROBABILITY_FLOOR));
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= sum);
    row
}

/// Random instance with strictly positive (hence irreducible) kernels whose
/// rows are uniform-Dirichlet draws floored at [`PROBABILITY_FLOOR`].
pub fn random_weakly_communicating(
    n_states: usize,
    n_actions: usize,
    n_kernels: usize,
    seed: u64,
) -> NamedInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reward: Vec<f64> = (0..n_states * n_actions).map(|_| rng.random()).collect();
    let kernels = (0..n_kernels.max(1))
        .map(|k| {
            let probs = (0..n_states * n_actions)
                .flat_map(|_| random_row(&mut rng, n_states))
                .collect();
            TransitionKernel::new(format!("k{k}"), n_states, n_actions, probs).expect("valid kernel")
        })
        .collect();
    let mdp = MdpInstance::new(n_states, n_actions, reward, kernels, PolicyConstraint::AllDistributions)
        .expect("valid instance");
    NamedInstance::new(
        format!("random_wc:{n_states}:{n_actions}:{n_kernels}:{seed}"),
        mdp,
        "random strictly positive kernels",
    )
}

/// Random weakly communicating instance in which at least two states carry a
/// deterministic self-loop with reward 1, so the greedy optimal policy has
/// several closed classes.
pub fn split_optimal(seed: u64) -> NamedInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5EED);
    let n = rng.random_range(4..=6);
    let na = rng.random_range(2..=3);
    let n_good = rng.random_range(2..=n - 1);
    let mut good: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        good.swap(i, rng.random_range(0..=i));
    }
    good.truncate(n_good);

    let mut reward = vec![0.0; n * na];
    let mut probs = Vec::with_capacity(n * na * n);
    for s in 0..n {
        for a in 0..na {
            if a == 0 && good.contains(&s) {
                reward[s * na] = 1.0;
                let mut row = vec![0.0; n];
                row[s] = 1.0;
                probs.extend(row);
            } else {
                reward[s * na + a] = 0.9 * rng.random::<f64>();
                probs.extend(random_row(&mut rng, n));
            }
        }
    }
    let k = TransitionKernel::new("p", n, na, probs).expect("valid kernel");
    let mdp = MdpInstance::new(n, na, reward, vec![k], PolicyConstraint::AllDistributions)
        .expect("valid instance");
    NamedInstance::new(
        format!("split_optimal:{seed}"),
        mdp,
        "greedy optimal policy splits into several closed classes",
    )
    .expect("alpha", 1.0, Certification::Analytic)
}

/// Builtin ids accepted by [`builtin`].
pub const BUILTIN_IDS: [(&str, &str); 5] = [
    ("example1_absorbing", "absorbing two-kernel counterexample"),
    ("single_state_two_action", "one state, rewards 0 and 1"),
    ("two_kernel_detectable[:delta]", "detectable testbed, delta defaults to 0.2"),
    ("random_wc:<S>:<A>:<K>:<seed>", "random strictly positive kernels"),
    ("split_optimal:<seed>", "greedy optimum with several closed classes"),
];

/// Resolves a builtin instance id.
pub fn builtin(id: &str) -> Result<NamedInstance> {
    let mut parts = id.split(':');
    let head = parts.next().unwrap_or_default();
    let args: Vec<&str> = parts.collect();
    let num = |s: &str| -> Result<u64> {
        s.parse().map_err(|_| Error::param(format!("bad integer `{s}` in instance id `{id}`")))
    };
    match (head, args.as_slice()) {
        ("example1_absorbing", []) => Ok(example1_absorbing()),
        ("single_state_two_action", []) => Ok(single_state_two_action()),
        ("two_kernel_detectable", []) => two_kernel_detectable(0.2),
        ("two_kernel_detectable", [d]) => two_kernel_detectable(
            d.parse().map_err(|_| Error::param(format!("bad delta `{d}`")))?,
        ),
        ("random_wc", [s, a, k, seed]) => Ok(random_weakly_communicating(
            num(s)? as usize,
            num(a)? as usize,
            num(k)? as usize,
            num(seed)?,
        )),
        ("split_optimal", [seed]) => Ok(split_optimal(num(seed)?)),
        _ => Err(Error::Unknown {
            kind: "instance",
            name: id.into(),
            available: BUILTIN_IDS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", "),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{solve_multichain_gain, solve_unichain_optimal};
    use crate::mdp::is_weakly_communicating;

    #[test]
    fn example1_matrices_are_literal() {
        let ex = example1_absorbing();
        let p1 = ex.mdp.kernel(0);
        let p2 = ex.mdp.kernel(1);
        let a1 = [[0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let a2 = [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for s in 0..3 {
            assert_eq!(p1.row(s, 0), a1[s]);
            assert_eq!(p1.row(s, 1), a2[s]);
            assert_eq!(p2.row(s, 0), a2[s]);
            assert_eq!(p2.row(s, 1), a1[s]);
        }
        assert_eq!(ex.mdp.reward_rows(), vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn expected_values_reproduce() {
        let ex = example1_absorbing();
        for (k, key) in [(0, "gain_p1_i"), (1, "gain_p2_i")] {
            let g = solve_multichain_gain(&ex.mdp, ex.mdp.kernel(k)).unwrap().gain[0];
            assert!((g - ex.expected[key].value).abs() <= 1e-8);
        }
        let single = single_state_two_action();
        let sol = solve_unichain_optimal(&single.mdp, single.mdp.kernel(0)).unwrap();
        assert!((sol.gain() - single.expected["alpha"].value).abs() <= 1e-8);
        assert!((sol.gain_bias.span - single.expected["span"].value).abs() <= 1e-8);

        let det = two_kernel_detectable(0.2).unwrap();
        let sol = solve_unichain_optimal(&det.mdp, det.mdp.kernel(0)).unwrap();
        assert!((sol.gain() - det.expected["alpha_star"].value).abs() <= 1e-8);
        let alt = solve_unichain_optimal(&det.mdp, det.mdp.kernel(1)).unwrap();
        assert!((alt.gain() - det.expected["alpha_alt"].value).abs() <= 1e-8);
        assert!(alt.gain() > sol.gain());
    }

    #[test]
    fn detectable_checks() {
        let det = two_kernel_detectable(0.2).unwrap();
        assert!(det.expected["kl_rate_alt"].value > 0.0);
        assert!(two_kernel_detectable(0.0).is_err());
        assert!(two_kernel_detectable(0.6).is_err());
        assert_eq!(two_kernel_detectable(0.2).unwrap(), det);
        // total-variation gap per row is at least delta
        for s in 0..3 {
            for a in 0..2 {
                let tv: f64 = det.mdp.kernel(0).row(s, a).iter()
                    .zip(det.mdp.kernel(1).row(s, a))
                    .map(|(x, y)| (x - y).abs())
                    .sum::<f64>() / 2.0;
                assert!(tv >= 0.2 - 1e-12);
            }
        }
    }

    #[test]
    fn random_instances_are_weakly_communicating_and_reproducible() {
        for seed in 0..20 {
            let inst = random_weakly_communicating(4, 2, 3, seed);
            for k in inst.mdp.kernels() {
                let wc = is_weakly_communicating(&inst.mdp, k);
                assert_eq!(wc.class, Some(vec![0, 1, 2, 3]));
                for s in 0..4 {
                    for a in 0..2 {
                        assert!(k.row(s, a).iter().all(|&p| p > 0.0));
                    }
                }
            }
            assert_eq!(inst, random_weakly_communicating(4, 2, 3, seed));
        }
    }

    #[test]
    fn single_kernel_robust_equals_classical() {
        let inst = random_weakly_communicating(3, 2, 1, 4);
        let robust = robust_gain(&inst.mdp, &uniform_mu(3)).unwrap();
        let sol = solve_unichain_optimal(&inst.mdp, inst.mdp.kernel(0)).unwrap();
        assert!((robust.alpha_star - sol.gain()).abs() <= 1e-12);
    }

    #[test]
    fn builtin_ids_resolve() {
        assert_eq!(builtin("example1_absorbing").unwrap().id, "example1_absorbing");
        assert_eq!(builtin("random_wc:3:2:1:7").unwrap().mdp.n_states(), 3);
        assert!(builtin("two_kernel_detectable:0.3").is_ok());
        assert!(builtin("nope").is_err());
        assert!(builtin("split_optimal:x").is_err());
    }
}
