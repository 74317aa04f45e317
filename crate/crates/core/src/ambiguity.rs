//! Worst-case selection over a finite, non-rectangular ambiguity set.

use rayon::prelude::*;
use serde::Serialize;

use crate::dp::{solve_multichain_gain, solve_unichain_optimal};
use crate::error::{Error, Result};
use crate::mdp::{check_prob_row, is_weakly_communicating, MdpInstance};

/// Kernels whose weighted gain is within this distance of the minimum are worst-case.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustSolution {
    /// `α*(μ) = min_p Σ_s μ(s) α_p(s)`.
    pub alpha_star: f64,
    /// Indices of the minimizing kernels, ascending.
    pub worst_kernels: Vec<usize>,
    pub kernel_names: Vec<String>,
    pub per_kernel_gain: Vec<Vec<f64>>,
    /// `μ · α_p` per kernel.
    pub per_kernel_value: Vec<f64>,
    pub weakly_communicating: Vec<bool>,
    pub initial_dist: Vec<f64>,
    pub is_singleton_worst: bool,
}

impl RobustSolution {
    pub fn all_weakly_communicating(&self) -> bool {
        self.weakly_communicating.iter().all(|&b| b)
    }

    /// Lowest-index worst-case kernel.
    pub fn worst_kernel(&self) -> usize {
        self.worst_kernels[0]
    }
}

pub fn uniform_mu(n_states: usize) -> Vec<f64> {
    vec![1.0 / n_states as f64; n_states]
}

pub fn delta_mu(n_states: usize, state: usize) -> Result<Vec<f64>> {
    if state >= n_states {
        return Err(Error::param(format!("state {state} out of range")));
    }
    let mut mu = vec![0.0; n_states];
    mu[state] = 1.0;
    Ok(mu)
}

/// Parses `uniform`, `delta:<s>` or `file:<path>` (a JSON array of probabilities).
pub fn parse_mu(spec: &str, n_states: usize) -> Result<Vec<f64>> {
    let mut mu = if spec == "uniform" {
        uniform_mu(n_states)
    } else if let Some(s) = spec.strip_prefix("delta:") {
        let state = s
            .parse()
            .map_err(|_| Error::param(format!("bad state `{s}` in initial distribution")))?;
        delta_mu(n_states, state)?
    } else if let Some(path) = spec.strip_prefix("file:") {
        serde_json::from_str(&std::fs::read_to_string(path)?)?
    } else {
        return Err(Error::param(format!(
            "initial distribution must be uniform, delta:<s> or file:<path>, got `{spec}`"
        )));
    };
    validate_mu(&mut mu, n_states)?;
    Ok(mu)
}

pub(crate) fn validate_mu(mu: &mut [f64], n_states: usize) -> Result<()> {
    if mu.len() != n_states {
        return Err(Error::shape(format!(
            "initial distribution has {} entries, expected {n_states}",
            mu.len()
        )));
    }
    check_prob_row(mu, || "initial distribution".into())
}

/// Optimal gain vector of one kernel: relative value iteration when the
/// kernel is weakly communicating, deterministic-policy enumeration otherwise.
pub fn kernel_gain(mdp: &MdpInstance, index: usize) -> Result<(Vec<f64>, bool)> {
    let kernel = mdp.kernel(index);
    if is_weakly_communicating(mdp, kernel).holds {
        Ok((solve_unichain_optimal(mdp, kernel)?.gain_bias.gain, true))
    } else {
        let gain = solve_multichain_gain(mdp, kernel)
            .map_err(|e| match e {
                Error::Capacity(msg) => Error::Capacity(format!("kernel `{}`: {msg}", kernel.name())),
                other => other,
            })?
            .gain;
        Ok((gain, false))
    }
}

/// Computes `α*(μ)` and the worst-case kernel set by solving every kernel.
pub fn robust_gain(mdp: &MdpInstance, mu: &[f64]) -> Result<RobustSolution> {
    let mut mu = mu.to_vec();
    validate_mu(&mut mu, mdp.n_states())?;
    let solved = (0..mdp.kernels().len())
        .into_par_iter()
        .map(|k| kernel_gain(mdp, k))
        .collect::<Result<Vec<_>>>()?;
    let (per_kernel_gain, weakly_communicating): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    let per_kernel_value: Vec<f64> = per_kernel_gain
        .iter()
        .map(|g| g.iter().zip(&mu).map(|(g, m)| g * m).sum())
        .collect();
    let alpha_star = per_kernel_value.iter().copied().fold(f64::INFINITY, f64::min);
    let worst_kernels: Vec<usize> = per_kernel_value
        .iter()
        .enumerate()
        .filter(|(_, v)| **v <= alpha_star + TIE_TOLERANCE)
        .map(|(k, _)| k)
        .collect();
    Ok(RobustSolution {
        alpha_star,
        is_singleton_worst: worst_kernels.len() == 1,
        worst_kernels,
        kernel_names: mdp.kernels().iter().map(|k| k.name().to_string()).collect(),
        per_kernel_gain,
        per_kernel_value,
        weakly_communicating,
        initial_dist: mu,
    })
}

/// Existence of a worst-case kernel. Always holds for a finite ambiguity set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCaseExistence {
    pub holds: bool,
    pub witness: usize,
    pub minimizers: Vec<usize>,
}

pub fn assumption1_check(mdp: &MdpInstance, mu: &[f64]) -> Result<WorstCaseExistence> {
    let sol = robust_gain(mdp, mu)?;
    Ok(WorstCaseExistence {
        holds: true,
        witness: sol.worst_kernel(),
        minimizers: sol.worst_kernels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::evaluate_stationary;
    use crate::instances;
    use crate::mdp::{PolicyConstraint, StationaryPolicy, TransitionKernel};
    use proptest::prelude::*;

    #[test]
    fn example1_tie() {
        let ex = instances::example1_absorbing();
        let sol = robust_gain(&ex.mdp, &delta_mu(3, 0).unwrap()).unwrap();
        assert!((sol.alpha_star - 1.0).abs() < 1e-12);
        assert_eq!(sol.worst_kernels, vec![0, 1]);
        assert!(!sol.is_singleton_worst);
        let a1 = assumption1_check(&ex.mdp, &delta_mu(3, 0).unwrap()).unwrap();
        assert!(a1.holds);
        assert_eq!(a1.minimizers, vec![0, 1]);
    }

    #[test]
    fn singleton_set() {
        let inst = instances::random_weakly_communicating(3, 2, 1, 8);
        let sol = robust_gain(&inst.mdp, &uniform_mu(3)).unwrap();
        assert_eq!(sol.worst_kernels, vec![0]);
        assert_eq!(sol.alpha_star, sol.per_kernel_value[0]);
        assert_eq!(assumption1_check(&inst.mdp, &uniform_mu(3)).unwrap().witness, 0);
    }

    #[test]
    fn scaled_rewards_pick_lower_gain() {
        // absorbing into a 0.7-reward or a 0.4-reward state
        let hi = TransitionKernel::new("hi", 2, 1, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let lo = TransitionKernel::new("lo", 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let mdp = MdpInstance::new(2, 1, vec![0.7, 0.4], vec![hi, lo], PolicyConstraint::AllDistributions).unwrap();
        let sol = robust_gain(&mdp, &uniform_mu(2)).unwrap();
        assert!((sol.alpha_star - 0.4).abs() < 1e-12);
        assert_eq!(sol.worst_kernels, vec![1]);
        assert!(sol.is_singleton_worst);
        assert!((sol.per_kernel_value[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn parse_mu_variants() {
        assert_eq!(parse_mu("uniform", 2).unwrap(), vec![0.5, 0.5]);
        assert_eq!(parse_mu("delta:1", 2).unwrap(), vec![0.0, 1.0]);
        assert!(parse_mu("delta:2", 2).is_err());
        assert!(parse_mu("nonsense", 2).is_err());
    }

    #[test]
    fn weakly_communicating_gain_is_mu_independent() {
        use rand::{Rng, SeedableRng};
        let inst = instances::random_weakly_communicating(4, 2, 3, 17);
        let base = robust_gain(&inst.mdp, &uniform_mu(4)).unwrap().alpha_star;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let mut mu: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = mu.iter().sum();
            mu.iter_mut().for_each(|x| *x /= s);
            let a = robust_gain(&inst.mdp, &mu).unwrap().alpha_star;
            assert!((a - base).abs() <= 1e-10);
        }
    }

    fn random_mu(seed: u64, n: usize) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut mu: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let s: f64 = mu.iter().sum();
        mu.iter_mut().for_each(|x| *x /= s);
        mu
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn concave_in_mu(seed in 0u64..1000, lambda in 0.0f64..=1.0) {
            let ex = instances::example1_absorbing();
            let m1 = random_mu(seed, 3);
            let m2 = random_mu(seed + 5000, 3);
            let mix: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            let a1 = robust_gain(&ex.mdp, &m1).unwrap().alpha_star;
            let a2 = robust_gain(&ex.mdp, &m2).unwrap().alpha_star;
            let am = robust_gain(&ex.mdp, &mix).unwrap().alpha_star;
            prop_assert!(am >= lambda * a1 + (1.0 - lambda) * a2 - 1e-10);
        }

        #[test]
        fn weak_duality(seed in 0u64..1000) {
            let ex = instances::example1_absorbing();
            let mu = random_mu(seed, 3);
            let alpha = robust_gain(&ex.mdp, &mu).unwrap().alpha_star;
            let dist: Vec<f64> = random_mu(seed + 99, 3 * 2)
                .chunks(2).flat_map(|c| { let s = c[0] + c[1]; vec![c[0] / s, c[1] / s] }).collect();
            let policy = StationaryPolicy::new(3, 2, dist).unwrap();
            let worst = ex.mdp.kernels().iter().map(|k| {
                let g = evaluate_stationary(&ex.mdp, k, &policy).unwrap().gain;
                g.iter().zip(&mu).map(|(g, m)| g * m).sum::<f64>()
            }).fold(f64::INFINITY, f64::min);
            prop_assert!(worst <= alpha + 1e-9);
        }
    }
}
