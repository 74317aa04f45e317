//! Markov-chain structure: communicating classes, stationary and limiting
//! distributions, and the stationary-weighted KL rate between two chains.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::check_prob_row;

/// Residual bound for stationary distributions.
pub const STATIONARY_TOLERANCE: f64 = 1e-10;
/// Residual bound for the projector identities of the limiting matrix.
pub const LIMITING_TOLERANCE: f64 = 1e-9;

/// A row-stochastic `n x n` matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovMatrix {
    n: usize,
    probs: Vec<f64>,
}

impl MarkovMatrix {
    pub fn new(n: usize, mut probs: Vec<f64>) -> Result<Self> {
        if n == 0 || probs.len() != n * n {
            return Err(Error::shape(format!(
                "Markov matrix has {} entries, expected {n}x{n}",
                probs.len()
            )));
        }
        for (s, row) in probs.chunks_mut(n).enumerate() {
            check_prob_row(row, || format!("Markov matrix row {s}"))?;
        }
        Ok(Self { n, probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::shape("Markov matrix must be square"));
        }
        Self::new(n, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut probs = vec![0.0; n * n];
        for i in 0..n {
            probs[i * n + i] = 1.0;
        }
        Self { n, probs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n..(s + 1) * self.n]
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.probs[s * self.n + t]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.probs.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &MarkovMatrix) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.probs[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.probs[k * n + j];
                }
            }
        }
        out
    }

    /// `self * v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.probs
            .chunks(self.n)
            .map(|row| row.iter().zip(v).map(|(p, x)| p * x).sum())
            .collect()
    }
}

/// Closed communicating classes and transient states of a chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainStructure {
    /// Sorted classes, ordered by smallest member.
    pub closed_classes: Vec<Vec<usize>>,
    pub transient_states: Vec<usize>,
    pub is_unichain: bool,
}

impl ChainStructure {
    /// Index of the closed class containing `s`, if any.
    pub fn class_of(&self, s: usize) -> Option<usize> {
        self.closed_classes.iter().position(|c| c.contains(&s))
    }

    pub fn is_irreducible(&self, n: usize) -> bool {
        self.is_unichain && self.closed_classes[0].len() == n
    }
}

fn sccs(matrix: &MarkovMatrix) -> Vec<Vec<usize>> {
    let n = matrix.n();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for s in 0..n {
        for t in 0..n {
            if matrix.get(s, t) > 0.0 {
                graph.add_edge(nodes[s], nodes[t], ());
            }
        }
    }
    let mut comps: Vec<Vec<usize>> = tarjan_scc(&graph)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|ix| ix.index()).collect();
            c.sort_unstable();
            c
        })
        .collect();
    comps.sort_by_key(|c| c[0]);
    comps
}

/// Decomposes a chain into closed communicating classes and transient states.
pub fn chain_structure(matrix: &MarkovMatrix) -> ChainStructure {
    let n = matrix.n();
    let mut closed_classes = Vec::new();
    let mut transient_states = Vec::new();
    for comp in sccs(matrix) {
        let mut inside = vec![false; n];
        comp.iter().for_each(|&s| inside[s] = true);
        let closed = comp
            .iter()
            .all(|&s| (0..n).all(|t| matrix.get(s, t) == 0.0 || inside[t]));
        if closed {
            closed_classes.push(comp);
        } else {
            transient_states.extend(comp);
        }
    }
    transient_states.sort_unstable();
    let is_unichain = closed_classes.len() == 1;
    ChainStructure {
        closed_classes,
        transient_states,
        is_unichain,
    }
}

fn check_closed_irreducible(matrix: &MarkovMatrix, class: &[usize]) -> Result<()> {
    let n = matrix.n();
    if class.is_empty() || class.iter().any(|&s| s >= n) {
        return Err(Error::structure("class is empty or has out-of-range states"));
    }
    let mut sorted = class.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if chain_structure(matrix).closed_classes.contains(&sorted) {
        Ok(())
    } else {
        Err(Error::structure(format!(
            "{class:?} is not a closed communicating class"
        )))
    }
}

/// The stationary distribution of `matrix` restricted to a closed class,
/// returned as a full-length vector that vanishes outside the class.
pub fn stationary_distribution(matrix: &MarkovMatrix, class: &[usize]) -> Result<Vec<f64>> {
    check_closed_irreducible(matrix, class)?;
    let mut class = class.to_vec();
    class.sort_unstable();
    let k = class.len();
    // Solve ν (P_C - I) = 0 with the last equation replaced by Σν = 1.
    let mut a = vec![0.0; k * k];
    for (i, &si) in class.iter().enumerate() {
        for (j, &sj) in class.iter().enumerate() {
            // row j of the transposed system, column i
            a[j * k + i] = matrix.get(si, sj) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..k {
        a[(k - 1) * k + i] = 1.0;
    }
    let mut b = vec![0.0; k];
    b[k - 1] = 1.0;
    let nu_c = linalg::solve(k, &a, &b, "stationary distribution")?;

    let mut nu = vec![0.0; matrix.n()];
    for (&s, &x) in class.iter().zip(&nu_c) {
        nu[s] = x;
    }
    let residual = class
        .iter()
        .map(|&t| (class.iter().map(|&s| nu[s] * matrix.get(s, t)).sum::<f64>() - nu[t]).abs())
        .fold(0.0, f64::max);
    if residual > STATIONARY_TOLERANCE {
        return Err(Error::Numerical {
            context: "stationary distribution".into(),
            residual,
            tolerance: STATIONARY_TOLERANCE,
        });
    }
    Ok(nu)
}

/// The Cesàro limit `P* = lim (1/T) Σ P^t`.
pub fn limiting_matrix(matrix: &MarkovMatrix) -> Result<MarkovMatrix> {
    let n = matrix.n();
    let structure = chain_structure(matrix);
    let nus = structure
        .closed_classes
        .iter()
        .map(|c| stationary_distribution(matrix, c))
        .collect::<Result<Vec<_>>>()?;

    // Absorption probabilities B = (I - Q)^{-1} R for transient states.
    let transient = &structure.transient_states;
    let m = transient.len();
    let k = nus.len();
    let mut absorb = vec![0.0; m * k];
    if m > 0 {
        let mut a = vec![0.0; m * m];
        let mut r = vec![0.0; m * k];
        for (i, &s) in transient.iter().enumerate() {
            for (j, &t) in transient.iter().enumerate() {
                a[i * m + j] = if i == j { 1.0 } else { 0.0 } - matrix.get(s, t);
            }
            for (c, class) in structure.closed_classes.iter().enumerate() {
                r[i * k + c] = class.iter().map(|&t| matrix.get(s, t)).sum();
            }
        }
        absorb = linalg::solve_many(m, k, &a, &r, "absorption probabilities")?;
    }

    let mut probs = vec![0.0; n * n];
    for (c, class) in structure.closed_classes.iter().enumerate() {
        for &s in class {
            probs[s * n..(s + 1) * n].copy_from_slice(&nus[c]);
        }
    }
    for (i, &s) in transient.iter().enumerate() {
        for (c, nu) in nus.iter().enumerate() {
            let w = absorb[i * k + c];
            for t in 0..n {
                probs[s * n + t] += w * nu[t];
            }
        }
    }
    // Clamp round-off before validation.
    for x in probs.iter_mut() {
        if *x < 0.0 && *x > -1e-13 {
            *x = 0.0;
        }
    }
    let limit = MarkovMatrix::new(n, probs)?;

    let pp = limit.mul(matrix);
    let residual = pp
        .iter()
        .zip(limit.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if residual > LIMITING_TOLERANCE {
        return Err(Error::Numerical {
            context: "limiting matrix".into(),
            residual,
            tolerance: LIMITING_TOLERANCE,
        });
    }
    Ok(limit)
}

/// `KL(p || q)` for probability vectors with `0 log(0/q) = 0` and `p log(p/0) = ∞`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if a == 0.0 {
                0.0
            } else if b == 0.0 {
                f64::INFINITY
            } else {
                a * (a / b).ln()
            }
        })
        .sum()
}

/// `I_C(P || P_0) = Σ_{s∈C} ν_{P,C}(s) KL(P(·|s) || P_0(·|s))`.
pub fn kl_rate(p: &MarkovMatrix, p0: &MarkovMatrix, class: &[usize]) -> Result<f64> {
    if p.n() != p0.n() {
        return Err(Error::shape("kl_rate requires matrices of equal size"));
    }
    let nu = stationary_distribution(p, class)?;
    let mut total = 0.0;
    for &s in class {
        let kl = kl_divergence(p.row(s), p0.row(s));
        if kl.is_infinite() {
            return Ok(f64::INFINITY);
        }
        total += nu[s] * kl;
    }
    Ok(total.max(0.0))
}
