use serde::Serialize;

use super::PolicyRuntime;
use crate::error::{Error, Result};
use crate::sim::Weight;

/// Block ends `T_1 < T_2 < …` and bad-action budgets `B_n = ⌊T_n / n⌋`,
/// with `T_{n+1} ≥ 2 T_n` and `T_n w(T_n) ≥ n² + n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvSchedule {
    pub ends: Vec<u64>,
    pub budgets: Vec<u64>,
}

fn scaled(weight: &Weight, t: u64) -> f64 {
    t as f64 * weight.eval(t)
}

impl TvSchedule {
    pub fn new(ends: Vec<u64>, weight: &Weight) -> Result<Self> {
        let mut prev = 0u64;
        for (i, &t) in ends.iter().enumerate() {
            let n = i as u64 + 1;
            if t == 0 || (i > 0 && t < 2 * prev) {
                return Err(Error::param(format!("block end T_{n} = {t} must be at least twice T_{} = {prev}", n - 1)));
            }
            if scaled(weight, t) < (n * n + n) as f64 {
                return Err(Error::param(format!("block end T_{n} = {t} violates T w(T) ≥ n² + n")));
            }
            prev = t;
        }
        let budgets = ends.iter().enumerate().map(|(i, &t)| t / (i as u64 + 1)).collect();
        Ok(Self { ends, budgets })
    }

    /// `T_n = max(2 T_{n−1}, min{T : T w(T) ≥ n² + n})` with `T_0 = 0`, until
    /// `T_n ≥ horizon`. `T w(T)` must be nondecreasing.
    pub fn generate(weight: &Weight, horizon: u64) -> Result<Self> {
        let mut ends = Vec::new();
        let mut prev = 0u64;
        let mut n = 1u64;
        while prev < horizon {
            let target = (n * n + n) as f64;
            let mut hi = 1u64;
            while scaled(weight, hi) < target {
                hi = hi.checked_mul(2).filter(|h| *h < 1 << 62).ok_or_else(|| {
                    Error::param(format!("weight `{}` never satisfies T w(T) ≥ {target}", weight.name()))
                })?;
            }
            let mut lo = hi / 2;
            while lo + 1 < hi {
                let mid = lo + (hi - lo) / 2;
                if scaled(weight, mid) >= target { hi = mid } else { lo = mid }
            }
            let t = hi.max(2 * prev);
            ends.push(t);
            prev = t;
            n += 1;
        }
        Self::new(ends, weight)
    }

    /// `Σ_{t < T_n} w(T_n)(r_t − 1) = −w(T_n) B_n` for `n ≥ 1`.
    pub fn weighted_deviation_at_end(&self, n: usize, weight: &Weight) -> f64 {
        -weight.eval(self.ends[n - 1]) * self.budgets[n - 1] as f64
    }
}

/// On a one-state instance with rewards `r(a_i) = i`, block `n` (steps
/// `T_{n−1} ≤ t < T_n`) plays `a_1` and then `a_0` for its last
/// `B_n − B_{n−1}` steps. After the last block it plays `a_1`.
#[derive(Debug, Clone)]
pub struct TvMinusInfinityPolicy {
    schedule: TvSchedule,
    good: [f64; 2],
    bad: [f64; 2],
}

impl TvMinusInfinityPolicy {
    pub fn new(schedule: TvSchedule) -> Self {
        Self { schedule, good: [0.0, 1.0], bad: [1.0, 0.0] }
    }

    pub fn schedule(&self) -> &TvSchedule {
        &self.schedule
    }

    pub fn plays_bad(&self, time: u64) -> bool {
        let ends = &self.schedule.ends;
        let i = ends.partition_point(|&e| e <= time);
        if i == ends.len() {
            return false;
        }
        let prev_budget = if i == 0 { 0 } else { self.schedule.budgets[i - 1] };
        time >= ends[i] - (self.schedule.budgets[i] - prev_budget)
    }
}

impl PolicyRuntime for TvMinusInfinityPolicy {
    fn name(&self) -> &str {
        "tv-minus-infinity"
    }

    fn act(&mut self, _state: usize, time: u64) -> &[f64] {
        if self.plays_bad(time) { &self.bad } else { &self.good }
    }

    fn observe(&mut self, _: usize, _: usize, _: usize, _: u64) {}

    fn reset(&mut self) {}

    fn clone_box(&self) -> Box<dyn PolicyRuntime> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_sqrt_schedule() {
        let w = Weight::InvSqrt;
        let s = TvSchedule::generate(&w, 900).unwrap();
        assert_eq!(s.ends, vec![4, 36, 144, 400, 900]);
        assert_eq!(s.budgets, vec![4, 18, 48, 100, 180]);
        for (n, (&t, &b)) in s.ends.iter().zip(&s.budgets).enumerate() {
            assert!(b as f64 / t as f64 <= 1.0 / (n as f64 + 1.0));
            let expected = ((n as u64 + 1).pow(2) + n as u64 + 1).pow(2);
            assert_eq!(t, expected.max(if n == 0 { 0 } else { 2 * s.ends[n - 1] }));
        }
        assert_eq!(s.budgets[0], s.ends[0]);
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        let w = Weight::InvSqrt;
        assert!(TvSchedule::new(vec![4, 7], &w).is_err());
        assert!(TvSchedule::new(vec![3], &w).is_err());
        assert!(TvSchedule::new(vec![4, 36], &w).is_ok());
        assert!(TvSchedule::generate(&Weight::InvT, 100).is_err());
    }

    #[test]
    fn bad_action_counts_match_budgets() {
        let w = Weight::InvSqrt;
        let s = TvSchedule::generate(&w, 900).unwrap();
        let p = TvMinusInfinityPolicy::new(s.clone());
        let mut bad = 0u64;
        let mut k = 0;
        for t in 0..900u64 {
            bad += p.plays_bad(t) as u64;
            if t + 1 == s.ends[k] {
                assert_eq!(bad, s.budgets[k]);
                let weighted = -w.eval(t + 1) * bad as f64;
                assert_eq!(weighted, s.weighted_deviation_at_end(k + 1, &w));
                k += 1;
            }
        }
        assert!(p.plays_bad(3) && p.plays_bad(0));
        assert!(!p.plays_bad(4) && p.plays_bad(35) && !p.plays_bad(17));
        assert!(!p.plays_bad(10_000));
    }
}
