//! Mixture sequential probability ratio test for a Markov kernel under a
//! product Dirichlet prior.
//!
//! The mixture likelihood ratio is computed through the Dirichlet posterior
//! predictive, so each transition costs O(1):
//! `Δ log Λ = log((γ(s'|s) + N(s,s')) / Σ_u (γ(u|s) + N(s,u))) − log P0(s'|s)`.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::chain::{chain_structure, kl_rate, MarkovMatrix};
use crate::error::{Error, Result};
use crate::rng::{sample_index, stream, StreamPurpose};
use crate::stats::{clopper_pearson_upper, least_squares, mean_and_se};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirichletPrior {
    n: usize,
    gamma: Vec<f64>,
    row_sums: Vec<f64>,
}

impl DirichletPrior {
    /// `gamma` is row-major `n × n`; every entry must be positive and finite.
    pub fn new(n: usize, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != n * n {
            return Err(Error::shape(format!("prior has {} entries, expected {}", gamma.len(), n * n)));
        }
        if let Some(g) = gamma.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::param(format!("prior weights must be positive, got {g}")));
        }
        let row_sums = gamma.chunks(n).map(|r| r.iter().sum()).collect();
        Ok(Self { n, gamma, row_sums })
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(n, vec![1.0; n * n]).expect("unit weights are valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self, s: usize, t: usize) -> f64 {
        self.gamma[s * self.n + t]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.gamma[s * self.n..(s + 1) * self.n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionCause {
    ZeroProbability,
    Threshold,
}

/// State of one test started at time `start_time` from `last_state`.
#[derive(Debug, Clone)]
pub struct SprtState {
    null_kernel: MarkovMatrix,
    prior: DirichletPrior,
    counts: Vec<u64>,
    row_totals: Vec<u64>,
    log_lambda: f64,
    rho: f64,
    log_threshold: f64,
    start_time: u64,
    steps: u64,
    rejected_at: Option<u64>,
    cause: Option<RejectionCause>,
    last_state: usize,
}

pub fn new_test(
    p0: &MarkovMatrix,
    prior: &DirichletPrior,
    rho: f64,
    start_time: u64,
    initial_state: usize,
) -> Result<SprtState> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::param(format!("rejection level must lie in (0, 1), got {rho}")));
    }
    let n = p0.n();
    if prior.n() != n {
        return Err(Error::shape(format!("prior is over {} states, null kernel over {n}", prior.n())));
    }
    if initial_state >= n {
        return Err(Error::shape(format!("initial state {initial_state} out of range")));
    }
    Ok(SprtState {
        null_kernel: p0.clone(),
        prior: prior.clone(),
        counts: vec![0; n * n],
        row_totals: vec![0; n],
        log_lambda: 0.0,
        rho,
        log_threshold: -rho.ln(),
        start_time,
        steps: 0,
        rejected_at: None,
        cause: None,
        last_state: initial_state,
    })
}

impl SprtState {
    /// Processes the transition `last_state → next`. Returns whether the test
    /// has rejected. After rejection this is a no-op.
    pub fn observe(&mut self, next: usize) -> Result<bool> {
        let n = self.null_kernel.n();
        if next >= n {
            return Err(Error::shape(format!("state {next} out of range")));
        }
        if self.rejected_at.is_some() {
            return Ok(true);
        }
        let s = self.last_state;
        let p0 = self.null_kernel.get(s, next);
        self.steps += 1;
        let now = self.start_time + self.steps;
        if p0 == 0.0 {
            self.log_lambda = f64::INFINITY;
            self.rejected_at = Some(now);
            self.cause = Some(RejectionCause::ZeroProbability);
        } else {
            let idx = s * n + next;
            let num = self.prior.gamma(s, next) + self.counts[idx] as f64;
            let den = self.prior.row_sums[s] + self.row_totals[s] as f64;
            self.log_lambda += (num / den).ln() - p0.ln();
            if self.log_lambda >= self.log_threshold {
                self.rejected_at = Some(now);
                self.cause = Some(RejectionCause::Threshold);
            }
        }
        self.counts[s * n + next] += 1;
        self.row_totals[s] += 1;
        self.last_state = next;
        Ok(self.rejected_at.is_some())
    }

    /// `1{τ ≤ n}`.
    pub fn rejected(&self, n: u64) -> bool {
        self.rejected_at.is_some_and(|t| t <= n)
    }

    pub fn is_rejected(&self) -> bool {
        self.rejected_at.is_some()
    }

    pub fn rejected_at(&self) -> Option<u64> {
        self.rejected_at
    }

    pub fn cause(&self) -> Option<RejectionCause> {
        self.cause
    }

    pub fn log_lambda(&self) -> f64 {
        self.log_lambda
    }

    pub fn log_threshold(&self) -> f64 {
        self.log_threshold
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn start_time(&self) -> u64 {
        self.start_time
    }

    /// Time of the most recent observation.
    pub fn time(&self) -> u64 {
        self.start_time + self.steps
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn last_state(&self) -> usize {
        self.last_state
    }

    pub fn count(&self, s: usize, t: usize) -> u64 {
        self.counts[s * self.null_kernel.n() + t]
    }
}

fn ln_multivariate_beta(alpha: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut acc) = (0.0, 0.0);
    for a in alpha {
        sum += a;
        acc += ln_gamma(a);
    }
    acc - ln_gamma(sum)
}

/// Closed-form log mixture likelihood ratio of a whole state path:
/// `Σ_s [log B(γ(·|s) + N(s,·)) − log B(γ(·|s))] − Σ_t log P0(x_{t+1}|x_t)`.
/// Returns `+∞` if the path uses a transition with null probability zero.
pub fn batch_log_lambda(p0: &MarkovMatrix, prior: &DirichletPrior, path: &[usize]) -> Result<f64> {
    let n = p0.n();
    if prior.n() != n {
        return Err(Error::shape("prior and null kernel sizes differ"));
    }
    if let Some(&bad) = path.iter().find(|&&s| s >= n) {
        return Err(Error::shape(format!("state {bad} out of range")));
    }
    let mut counts = vec![0u64; n * n];
    let mut null_ll = 0.0;
    for w in path.windows(2) {
        let p = p0.get(w[0], w[1]);
        if p == 0.0 {
            return Ok(f64::INFINITY);
        }
        null_ll += p.ln();
        counts[w[0] * n + w[1]] += 1;
    }
    let mut mix_ll = 0.0;
    for s in 0..n {
        let row = &counts[s * n..(s + 1) * n];
        if row.iter().all(|&c| c == 0) {
            continue;
        }
        let g = prior.row(s);
        mix_ll += ln_multivariate_beta(g.iter().zip(row).map(|(g, &c)| g + c as f64))
            - ln_multivariate_beta(g.iter().copied());
    }
    Ok(mix_ll - null_ll)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRun {
    pub run_id: u64,
    pub tau: Option<u64>,
    pub rejected: bool,
    pub log_lambda_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Type1Report {
    pub rho: f64,
    pub horizon: u64,
    pub n_runs: u64,
    pub rejections: u64,
    pub rate: f64,
    /// Clopper-Pearson 99% upper bound on the rejection probability.
    pub upper_99: f64,
    pub runs: Vec<CalibrationRun>,
}

/// Simulates the null chain from `mu` and runs one test per trajectory.
pub fn calibrate_type1(
    p0: &MarkovMatrix,
    prior: &DirichletPrior,
    mu: &[f64],
    rho: f64,
    horizon: u64,
    n_runs: u64,
    seed: u64,
) -> Result<Type1Report> {
    let runs = simulate_tests(p0, p0, prior, mu, rho, horizon, n_runs, seed)?;
    let rejections = runs.iter().filter(|r| r.rejected).count() as u64;
    Ok(Type1Report {
        rho,
        horizon,
        n_runs,
        rejections,
        rate: if n_runs == 0 { 0.0 } else { rejections as f64 / n_runs as f64 },
        upper_99: clopper_pearson_upper(rejections, n_runs, 0.99),
        runs,
    })
}

/// Runs one test of `p0` per trajectory of `generator` started from `mu`.
/// Each trajectory stops at rejection or after `horizon` transitions.
#[allow(clippy::too_many_arguments)]
pub fn simulate_tests(
    generator: &MarkovMatrix,
    p0: &MarkovMatrix,
    prior: &DirichletPrior,
    mu: &[f64],
    rho: f64,
    horizon: u64,
    n_runs: u64,
    seed: u64,
) -> Result<Vec<CalibrationRun>> {
    new_test(p0, prior, rho, 0, 0)?;
    check_initial(mu, p0.n())?;
    if generator.n() != p0.n() {
        return Err(Error::param(format!(
            "generator has {} states, null chain has {}",
            generator.n(),
            p0.n()
        )));
    }
    Ok((0..n_runs)
        .into_par_iter()
        .map(|run_id| {
            let mut rng = stream(seed, run_id, StreamPurpose::Environment);
            let mut x = sample_index(&mut rng, mu);
            let mut test = new_test(p0, prior, rho, 0, x).expect("validated above");
            for _ in 0..horizon {
                x = sample_index(&mut rng, generator.row(x));
                if test.observe(x).expect("state in range") {
                    break;
                }
            }
            CalibrationRun {
                run_id,
                tau: test.rejected_at(),
                rejected: test.is_rejected(),
                log_lambda_final: test.log_lambda(),
            }
        })
        .collect())
}

fn check_initial(mu: &[f64], n: usize) -> Result<()> {
    let mut mu = mu.to_vec();
    crate::ambiguity::validate_mu(&mut mu, n)
}

/// First crossing time of each threshold `−log ρ` along one path, using a
/// single running statistic. Entries are `None` if not crossed within the path.
pub fn crossing_times(
    p0: &MarkovMatrix,
    prior: &DirichletPrior,
    rhos: &[f64],
    path: &[usize],
) -> Result<Vec<Option<u64>>> {
    let smallest = rhos.iter().copied().fold(f64::INFINITY, f64::min);
    let Some(&x0) = path.first() else {
        return Ok(vec![None; rhos.len()]);
    };
    let mut test = new_test(p0, prior, smallest, 0, x0)?;
    let mut out = vec![None; rhos.len()];
    for &x in &path[1..] {
        let done = test.observe(x)?;
        for (slot, rho) in out.iter_mut().zip(rhos) {
            if slot.is_none() && test.log_lambda() >= -rho.ln() {
                *slot = Some(test.time());
            }
        }
        if done {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayRow {
    pub rho: f64,
    pub log_inv_rho: f64,
    pub mean_tau: f64,
    pub std_err: f64,
    /// Runs that did not reject within the horizon; they count as `horizon`.
    pub censored: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayReport {
    pub rows: Vec<DelayRow>,
    pub n_runs: u64,
    pub horizon: u64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Whether the alternative differs from the null on its recurrent classes.
    pub distinguishable: bool,
}

/// Simulates the alternative chain and measures rejection times of the test
/// for each level; every level is evaluated on the same trajectories.
#[allow(clippy::too_many_arguments)]
pub fn detection_delay(
    p0: &MarkovMatrix,
    p_alt: &MarkovMatrix,
    prior: &DirichletPrior,
    mu: &[f64],
    rhos: &[f64],
    n_runs: u64,
    horizon: u64,
    seed: u64,
) -> Result<DelayReport> {
    if p_alt.n() != p0.n() {
        return Err(Error::shape("null and alternative kernels differ in size"));
    }
    if let Some(r) = rhos.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(Error::param(format!("rejection level must lie in (0, 1), got {r}")));
    }
    check_initial(mu, p0.n())?;
    let distinguishable = alternative_is_distinguishable(p0, p_alt)?;
    if !distinguishable {
        log::warn!("alternative kernel agrees with the null on every recurrent class");
    }
    let smallest = rhos.iter().copied().fold(f64::INFINITY, f64::min);
    let per_run: Vec<Vec<Option<u64>>> = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = stream(seed, run, StreamPurpose::Environment);
            let mut x = sample_index(&mut rng, mu);
            let mut test = new_test(p0, prior, smallest, 0, x).expect("validated above");
            let mut out = vec![None; rhos.len()];
            for _ in 0..horizon {
                x = sample_index(&mut rng, p_alt.row(x));
                let done = test.observe(x).expect("state in range");
                for (slot, rho) in out.iter_mut().zip(rhos) {
                    if slot.is_none() && test.log_lambda() >= -rho.ln() {
                        *slot = Some(test.time());
                    }
                }
                if done {
                    break;
                }
            }
            out
        })
        .collect();
    let rows: Vec<DelayRow> = rhos
        .iter()
        .enumerate()
        .map(|(i, &rho)| {
            let taus: Vec<f64> = per_run.iter().map(|r| r[i].unwrap_or(horizon) as f64).collect();
            let (mean, se) = mean_and_se(&taus);
            DelayRow {
                rho,
                log_inv_rho: -rho.ln(),
                mean_tau: mean,
                std_err: se,
                censored: per_run.iter().filter(|r| r[i].is_none()).count() as u64,
            }
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.log_inv_rho).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_tau).collect();
    let (slope, intercept, r_squared) = least_squares(&xs, &ys);
    Ok(DelayReport { rows, n_runs, horizon, slope, intercept, r_squared, distinguishable })
}

/// True if some closed class of `p_alt` has a positive KL rate against `p0`.
pub fn alternative_is_distinguishable(p0: &MarkovMatrix, p_alt: &MarkovMatrix) -> Result<bool> {
    for class in &chain_structure(p_alt).closed_classes {
        if kl_rate(p_alt, p0, class)? > 0.0 {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sticky() -> MarkovMatrix {
        MarkovMatrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap()
    }

    fn simulate(p: &MarkovMatrix, x0: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut path = vec![x0];
        for _ in 0..len {
            let x = sample_index(rng, p.row(*path.last().unwrap()));
            path.push(x);
        }
        path
    }

    #[test]
    fn fresh_test() {
        let t = new_test(&sticky(), &DirichletPrior::uniform(2), 0.25, 0, 0).unwrap();
        assert_eq!(t.log_lambda(), 0.0);
        assert!(!t.rejected(1000));
        assert!((t.log_threshold() - 4f64.ln()).abs() < 1e-15);
        assert!(new_test(&sticky(), &DirichletPrior::uniform(2), 1.0, 0, 0).is_err());
        assert!(new_test(&sticky(), &DirichletPrior::uniform(2), 0.0, 0, 0).is_err());
    }

    #[test]
    fn first_increment_is_zero() {
        let p0 = MarkovMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let mut t = new_test(&p0, &DirichletPrior::uniform(2), 0.1, 0, 0).unwrap();
        t.observe(1).unwrap();
        assert!(t.log_lambda().abs() < 1e-15);
        assert_eq!(t.count(0, 1), 1);
    }

    #[test]
    fn zero_probability_rejects_immediately() {
        let p0 = MarkovMatrix::identity(2);
        let mut t = new_test(&p0, &DirichletPrior::uniform(2), 0.01, 5, 0).unwrap();
        assert!(!t.observe(0).unwrap());
        assert!(!t.observe(0).unwrap());
        assert!(t.observe(1).unwrap());
        assert_eq!(t.rejected_at(), Some(8));
        assert_eq!(t.cause(), Some(RejectionCause::ZeroProbability));
        assert!(t.rejected(8) && !t.rejected(7));
        let before = t.clone().steps();
        t.observe(0).unwrap();
        assert_eq!(t.steps(), before);
        assert!(t.observe(2).is_err());
    }

    #[test]
    fn absorbing_null_never_rejects_on_its_own_paths() {
        let p0 = MarkovMatrix::identity(3);
        let mut t = new_test(&p0, &DirichletPrior::uniform(3), 0.5, 0, 1).unwrap();
        for _ in 0..10_000 {
            t.observe(1).unwrap();
            assert!(t.log_lambda() <= 0.0);
        }
        assert!(!t.is_rejected());
        let rep = calibrate_type1(&p0, &DirichletPrior::uniform(3), &[1.0 / 3.0; 3], 0.5, 1000, 50, 4).unwrap();
        assert_eq!(rep.rejections, 0);
    }

    #[test]
    fn incremental_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let n = 2 + trial % 4;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let r: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
                    let s: f64 = r.iter().sum();
                    r.into_iter().map(|x| x / s).collect()
                })
                .collect();
            let p0 = MarkovMatrix::from_rows(&rows).unwrap();
            let gamma: Vec<f64> = (0..n * n).map(|_| 0.2 + 2.0 * rng.random::<f64>()).collect();
            let prior = DirichletPrior::new(n, gamma).unwrap();
            let path: Vec<usize> = (0..=(1 + trial % 100)).map(|_| rng.random_range(0..n)).collect();
            let mut t = new_test(&p0, &prior, 1e-300, 0, path[0]).unwrap();
            for &x in &path[1..] {
                t.observe(x).unwrap();
            }
            let batch = batch_log_lambda(&p0, &prior, &path).unwrap();
            assert!((t.log_lambda() - batch).abs() <= 1e-9, "{} vs {batch}", t.log_lambda());
        }
    }

    #[test]
    fn batch_agrees_with_prior_sampling() {
        use rand_distr::{Dirichlet, Distribution};
        let p0 = sticky();
        let prior = DirichletPrior::uniform(2);
        let path = [0, 0, 1, 1, 1, 0, 1];
        let dir = Dirichlet::new([1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..100_000)
            .map(|_| {
                let rows = [dir.sample(&mut rng), dir.sample(&mut rng)];
                path.windows(2).map(|w| rows[w[0]][w[1]] / p0.get(w[0], w[1])).product()
            })
            .collect();
        let (mean, se) = mean_and_se(&samples);
        let closed = batch_log_lambda(&p0, &prior, &path).unwrap().exp();
        assert!((mean - closed).abs() <= 3.0 * se, "{mean} ± {se} vs {closed}");
    }

    #[test]
    fn tiny_rho_never_rejects_at_desk_horizon() {
        let rep = calibrate_type1(&sticky(), &DirichletPrior::uniform(2), &[0.5, 0.5], 1e-6, 2000, 200, 9).unwrap();
        assert_eq!(rep.rejections, 0);
        assert_eq!(rep.runs.len(), 200);
    }

    #[test]
    fn supermartingale_under_null() {
        let p0 = sticky();
        let prior = DirichletPrior::uniform(2);
        let checkpoints = [1usize, 5, 20, 50];
        let mut sums = vec![Vec::new(); checkpoints.len()];
        for run in 0..10_000u64 {
            let mut rng = stream(21, run, StreamPurpose::Environment);
            let x0 = sample_index(&mut rng, &[0.5, 0.5]);
            let mut t = new_test(&p0, &prior, 1e-300, 0, x0).unwrap();
            let mut x = x0;
            for step in 1..=50 {
                x = sample_index(&mut rng, p0.row(x));
                t.observe(x).unwrap();
                if let Some(i) = checkpoints.iter().position(|&c| c == step) {
                    sums[i].push(t.log_lambda().exp());
                }
            }
        }
        for values in sums {
            let (mean, se) = mean_and_se(&values);
            assert!(mean <= 1.0 + 3.0 * se, "{mean} ± {se}");
        }
    }

    #[test]
    fn zero_edge_delay_matches_first_passage() {
        // null forbids 0 → 1; the alternative takes it with probability 0.25,
        // so the first traversal time is geometric with mean 4
        let p0 = MarkovMatrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let p = MarkovMatrix::from_rows(&[vec![0.75, 0.25], vec![0.5, 0.5]]).unwrap();
        let rep = detection_delay(&p0, &p, &DirichletPrior::uniform(2), &[1.0, 0.0], &[1e-12], 4000, 10_000, 2).unwrap();
        let row = &rep.rows[0];
        assert!((row.mean_tau - 4.0).abs() <= 3.0 * row.std_err, "{row:?}");
        assert!(rep.distinguishable);
    }

    #[test]
    fn identical_alternative_is_flagged_and_censored() {
        let rho = 0.1;
        let rep = detection_delay(&sticky(), &sticky(), &DirichletPrior::uniform(2), &[0.5, 0.5], &[rho], 500, 2000, 5).unwrap();
        assert!(!rep.distinguishable);
        assert!(rep.rows[0].censored as f64 >= (1.0 - rho) * 500.0 - 3.0 * (500.0 * rho).sqrt());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn smaller_rho_rejects_later(seed in 0u64..10_000) {
            let p0 = sticky();
            let p = MarkovMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let path = simulate(&p, 0, 300, &mut rng);
            let rhos = [0.3, 0.1, 0.01, 1e-4];
            let taus = crossing_times(&p0, &DirichletPrior::uniform(2), &rhos, &path).unwrap();
            for w in taus.windows(2) {
                match (w[0], w[1]) {
                    (Some(a), Some(b)) => prop_assert!(a <= b),
                    (None, Some(_)) => prop_assert!(false),
                    _ => {}
                }
            }
        }

        #[test]
        fn shifted_start_is_suffix_test(seed in 0u64..10_000, m in 0usize..40) {
            let p0 = sticky();
            let prior = DirichletPrior::uniform(2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let path = simulate(&p0, 1, 80, &mut rng);
            let mut shifted = new_test(&p0, &prior, 0.05, m as u64, path[m]).unwrap();
            let mut fresh = new_test(&p0, &prior, 0.05, 0, path[m]).unwrap();
            for &x in &path[m + 1..] {
                shifted.observe(x).unwrap();
                fresh.observe(x).unwrap();
            }
            prop_assert_eq!(shifted.log_lambda(), fresh.log_lambda());
            prop_assert_eq!(shifted.rejected_at().map(|t| t - m as u64), fresh.rejected_at());
        }

        #[test]
        fn counts_track_steps(seed in 0u64..10_000, len in 0usize..60) {
            let p0 = sticky();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let path = simulate(&p0, 0, len, &mut rng);
            let mut t = new_test(&p0, &DirichletPrior::uniform(2), 1e-300, 0, 0).unwrap();
            for &x in &path[1..] { t.observe(x).unwrap(); }
            let total: u64 = (0..2).flat_map(|s| (0..2).map(move |u| (s, u))).map(|(s, u)| t.count(s, u)).sum();
            prop_assert_eq!(total, t.steps());
            prop_assert!(t.log_lambda().is_finite());
        }
    }
}
