use std::sync::Arc;

use super::PolicyRuntime;
use crate::mdp::StationaryPolicy;

/// Plays `Δ(·|s)` at every step.
#[derive(Debug, Clone)]
pub struct StationaryRuntime {
    policy: Arc<StationaryPolicy>,
}

impl StationaryRuntime {
    pub fn new(policy: StationaryPolicy) -> Self {
        Self { policy: Arc::new(policy) }
    }

    pub fn policy(&self) -> &StationaryPolicy {
        &self.policy
    }
}

impl PolicyRuntime for StationaryRuntime {
    fn name(&self) -> &str {
        "stationary"
    }

    fn act(&mut self, state: usize, _time: u64) -> &[f64] {
        self.policy.row(state)
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
    fn returns_policy_rows() {
        let mut det = StationaryRuntime::new(StationaryPolicy::deterministic(3, &[2, 0]).unwrap());
        assert_eq!(det.act(0, 0), &[0.0, 0.0, 1.0]);
        assert_eq!(det.act(1, 9), &[1.0, 0.0, 0.0]);
        let mut uni = StationaryRuntime::new(StationaryPolicy::uniform(1, 2).unwrap());
        uni.observe(0, 0, 0, 0);
        uni.reset();
        assert_eq!(uni.act(0, 3), &[0.5, 0.5]);
    }
}
