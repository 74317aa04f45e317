use std::sync::Arc;

use super::PolicyRuntime;
use crate::error::{Error, Result};

/// Builds a fresh runtime for a given horizon.
pub type PolicyFamily = Arc<dyn Fn(u64) -> Box<dyn PolicyRuntime> + Send + Sync>;

/// Runs `family(K)` on `[0, K)` and a fresh `family(2ⁿK)` on each segment
/// `[2ⁿK, 2ⁿ⁺¹K)`, discarding all earlier data at every boundary. The inner
/// runtime sees time relative to its segment start.
pub struct EpochRestartWrapper {
    k: u64,
    family: PolicyFamily,
    current: Box<dyn PolicyRuntime>,
    segment_start: u64,
    next_boundary: u64,
    restarts: Vec<u64>,
}

impl EpochRestartWrapper {
    pub fn new(k: u64, family: PolicyFamily) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("epoch base length must be at least 1"));
        }
        let current = family(k);
        Ok(Self { k, family, current, segment_start: 0, next_boundary: k, restarts: Vec::new() })
    }

    /// Times at which the inner runtime was replaced.
    pub fn restart_times(&self) -> &[u64] {
        &self.restarts
    }

    pub fn inner(&self) -> &dyn PolicyRuntime {
        self.current.as_ref()
    }

    fn advance(&mut self, time: u64) {
        while time >= self.next_boundary {
            let start = self.next_boundary;
            self.current = (self.family)(start);
            self.segment_start = start;
            self.next_boundary = start.saturating_mul(2);
            self.restarts.push(start);
        }
    }
}

impl PolicyRuntime for EpochRestartWrapper {
    fn name(&self) -> &str {
        "epoch-restart"
    }

    fn act(&mut self, state: usize, time: u64) -> &[f64] {
        self.advance(time);
        self.current.act(state, time - self.segment_start)
    }

    fn observe(&mut self, state: usize, action: usize, next_state: usize, time: u64) {
        self.advance(time);
        self.current.observe(state, action, next_state, time - self.segment_start);
    }

    fn reset(&mut self) {
        self.current = (self.family)(self.k);
        self.segment_start = 0;
        self.next_boundary = self.k;
        self.restarts.clear();
    }

    fn clone_box(&self) -> Box<dyn PolicyRuntime> {
        Box::new(Self {
            k: self.k,
            family: self.family.clone(),
            current: self.current.clone_box(),
            segment_start: self.segment_start,
            next_boundary: self.next_boundary,
            restarts: self.restarts.clone(),
        })
    }

    fn observations(&self) -> u64 {
        self.current.observations()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::policies::{OptimisticConfig, OptimisticRuntime, StationaryRuntime};
    use crate::mdp::StationaryPolicy;

    #[test]
    fn unit_base_restarts_at_powers_of_two() {
        let fam: PolicyFamily =
            Arc::new(|_| Box::new(StationaryRuntime::new(StationaryPolicy::uniform(1, 2).unwrap())));
        let mut w = EpochRestartWrapper::new(1, fam).unwrap();
        for t in 0..20 {
            w.act(0, t);
            w.observe(0, 0, 0, t);
        }
        assert_eq!(w.restart_times(), &[1, 2, 4, 8, 16]);
        assert!(EpochRestartWrapper::new(0, Arc::new(|_| unreachable!())).is_err());
    }

    #[test]
    fn horizons_follow_segment_lengths() {
        use std::sync::Mutex;
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        let fam: PolicyFamily = Arc::new(move |h| {
            log.lock().unwrap().push(h);
            Box::new(StationaryRuntime::new(StationaryPolicy::uniform(1, 2).unwrap()))
        });
        let mut w = EpochRestartWrapper::new(3, fam).unwrap();
        for t in 0..30 {
            w.act(0, t);
        }
        assert_eq!(*seen.lock().unwrap(), vec![3, 3, 6, 12, 24]);
    }

    #[test]
    fn statistics_are_fresh_after_each_boundary() {
        let inst = instances::random_weakly_communicating(3, 2, 1, 4);
        let mdp = inst.mdp.clone();
        let fam: PolicyFamily = Arc::new(move |_| Box::new(OptimisticRuntime::new(&mdp, OptimisticConfig::default())));
        let mut w = EpochRestartWrapper::new(2, fam).unwrap();
        for t in 0..64u64 {
            w.act(0, t);
            if t.is_power_of_two() && t >= 2 {
                assert_eq!(w.observations(), 0, "t = {t}");
            }
            w.observe(0, 0, 1, t);
        }
        w.reset();
        assert_eq!(w.observations(), 0);
        assert!(w.restart_times().is_empty());
    }
}
