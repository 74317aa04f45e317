//! Policy runtimes and the registry that builds them by name.
//!
//! A runtime returns a distribution over actions for the current state; the
//! simulator samples from it with its own policy random stream.

mod epoch;
mod finite_hypothesis;
mod optimistic;
mod pi_star;
mod stationary;
mod tv_adversarial;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::ambiguity::uniform_mu;
use crate::error::{Error, Result};
use crate::mdp::{MdpInstance, StationaryPolicy};

pub use epoch::{EpochRestartWrapper, PolicyFamily};
pub use finite_hypothesis::FiniteHypothesisRuntime;
pub use optimistic::{water_fill, OptimisticConfig, OptimisticRuntime};
pub use pi_star::{
    EpochSchedule, IdentifiabilityRow, PiStarModel, PiStarOptions, PiStarReport, PiStarRuntime,
};
pub use stationary::StationaryRuntime;
pub use tv_adversarial::{TvMinusInfinityPolicy, TvSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Testing,
    Fallback,
}

/// One epoch of an epoch-based policy. `length` is the nominal epoch length;
/// `rejected_at` is the absolute time from which the fallback acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EpochEvent {
    pub epoch: u32,
    pub start: u64,
    pub length: u64,
    pub rejected_at: Option<u64>,
}

/// The act/observe contract shared by all policies.
pub trait PolicyRuntime: Send + Sync {
    fn name(&self) -> &str;

    /// Action distribution at `state` and absolute time `time`.
    fn act(&mut self, state: usize, time: u64) -> &[f64];

    fn observe(&mut self, state: usize, action: usize, next_state: usize, time: u64);

    /// Returns to the initial internal state.
    fn reset(&mut self);

    fn clone_box(&self) -> Box<dyn PolicyRuntime>;

    /// Number of steps the runtime may be asked to play from now on.
    fn set_horizon_hint(&mut self, _horizon: Option<u64>) {}

    /// Transitions absorbed into learned statistics since the last reset.
    fn observations(&self) -> u64 {
        0
    }

    fn phase(&self) -> Option<Phase> {
        None
    }

    fn events(&self) -> Option<Vec<EpochEvent>> {
        None
    }
}

impl Clone for Box<dyn PolicyRuntime> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Index of the largest entry; the lowest index wins within `tol`.
pub(crate) fn argmax_low(values: &[f64], tol: f64) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().position(|&v| v >= best - tol).unwrap_or(0)
}

/// Settings shared by the policy factories.
#[derive(Debug, Clone)]
pub struct PolicyContext {
    pub mu: Vec<f64>,
    pub zeta: f64,
    /// Registry name of the fallback used by `pi-star`.
    pub fallback: String,
    pub irreducible_preference: bool,
    /// Wrap the policy in the epoch-restart scheme with this base length.
    pub restart_k: Option<u64>,
    pub optimistic: OptimisticConfig,
}

impl PolicyContext {
    pub fn new(mdp: &MdpInstance) -> Self {
        Self {
            mu: uniform_mu(mdp.n_states()),
            zeta: 2.0,
            fallback: "finite-hyp".into(),
            irreducible_preference: false,
            restart_k: None,
            optimistic: OptimisticConfig::default(),
        }
    }
}

pub trait PolicyFactory: Send + Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn build(&self, mdp: &MdpInstance, arg: Option<&str>, ctx: &PolicyContext) -> Result<Box<dyn PolicyRuntime>>;
}

struct StationaryFactory;

impl PolicyFactory for StationaryFactory {
    fn name(&self) -> &'static str {
        "stationary"
    }
    fn describe(&self) -> &'static str {
        "stationary:<file> with a JSON array of per-state action distributions"
    }
    fn build(&self, mdp: &MdpInstance, arg: Option<&str>, _: &PolicyContext) -> Result<Box<dyn PolicyRuntime>> {
        let path = arg.ok_or_else(|| Error::param("stationary policy needs a file: stationary:<file>"))?;
        let rows: Vec<Vec<f64>> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let policy = StationaryPolicy::from_rows(&rows)?;
        mdp.check_policy(&policy)?;
        Ok(Box::new(StationaryRuntime::new(policy)))
    }
}

struct UniformFactory;

impl PolicyFactory for UniformFactory {
    fn name(&self) -> &'static str {
        "uniform"
    }
    fn describe(&self) -> &'static str {
        "uniformly random actions"
    }
    fn build(&self, mdp: &MdpInstance, _: Option<&str>, _: &PolicyContext) -> Result<Box<dyn PolicyRuntime>> {
        let policy = StationaryPolicy::uniform(mdp.n_states(), mdp.n_actions())?;
        mdp.check_policy(&policy)?;
        Ok(Box::new(StationaryRuntime::new(policy)))
    }
}

struct RobustStationaryFactory;

impl PolicyFactory for RobustStationaryFactory {
    fn name(&self) -> &'static str {
        "robust-stationary"
    }
    fn describe(&self) -> &'static str {
        "unichain optimal policy of the worst-case kernel, played forever"
    }
    fn build(&self, mdp: &MdpInstance, _: Option<&str>, ctx: &PolicyContext) -> Result<Box<dyn PolicyRuntime>> {
        let model = PiStarModel::build(mdp, &pi_star_options(ctx))?;
        Ok(Box::new(StationaryRuntime::new(model.delta_star.clone())))
    }
}

struct OptimisticFactory;

impl PolicyFactory for OptimisticFactory {
    fn name(&self) -> &'static str {
        "ucrl"
    }
    fn describe(&self) -> &'static str {
        "optimistic learner with doubling episodes and L1 confidence sets"
    }
    fn build(&self, mdp: &MdpInstance, _: Option<&str>, ctx: &PolicyContext) -> Result<Box<dyn PolicyRuntime>> {
        Ok(Box::new(OptimisticRuntime::new(mdp, ctx.optimistic)))
    }
}

struct FiniteHypothesisFactory;

impl PolicyFactory for FiniteHypothesisFactory {
    fn name(&self) -> &'static str {
        "finite-hyp"
    }
    fn describe(&self) -> &'static str {
        "plays the optimal policy of the most likely kernel in the ambiguity set"
    }
    fn build(&self, mdp: &MdpInstance, _: Option<&str>, _: &PolicyContext) -> Result<Box<dyn PolicyRuntime>> {
        Ok(Box::new(FiniteHypothesisRuntime::new(mdp)?))
    }
}

struct PiStarFactory;

fn pi_star_options(ctx: &PolicyContext) -> PiStarOptions {
    PiStarOptions {
        zeta: ctx.zeta,
        irreducible_preference: ctx.irreducible_preference,
        mu: ctx.mu.clone(),
        prior: None,
    }
}

impl PolicyFactory for PiStarFactory {
    fn name(&self) -> &'static str {
        "pi-star"
    }
    fn describe(&self) -> &'static str {
        "epoch-based test-then-fallback policy (see --zeta, --fallback)"
    }
    fn build(&self, mdp: &MdpInstance, _: Option<&str>, ctx: &PolicyContext) -> Result<Box<dyn PolicyRuntime>> {
        if ctx.fallback == "pi-star" {
            return Err(Error::param("pi-star cannot be its own fallback"));
        }
        let registry = PolicyRegistry::builtin();
        let fallback_ctx = PolicyContext { restart_k: None, ..ctx.clone() };
        let fallback = registry.build(mdp, &ctx.fallback, &fallback_ctx)?;
        let model = Arc::new(PiStarModel::build(mdp, &pi_star_options(ctx))?);
        for w in &model.report.warnings {
            log::warn!("{w}");
        }
        Ok(Box::new(PiStarRuntime::new(model, fallback)))
    }
}

struct TvAdversarialFactory;

impl PolicyFactory for TvAdversarialFactory {
    fn name(&self) -> &'static str {
        "tv-minus-infinity"
    }
    fn describe(&self) -> &'static str {
        "average-optimal policy with diverging transient value on a one-state, two-action instance (arg: weight, default inv_sqrt)"
    }
    fn build(&self, mdp: &MdpInstance, arg: Option<&str>, _: &PolicyContext) -> Result<Box<dyn PolicyRuntime>> {
        if mdp.n_states() != 1 || mdp.n_actions() != 2 {
            return Err(Error::param("tv-minus-infinity needs a one-state, two-action instance"));
        }
        let weight: crate::sim::Weight = arg.unwrap_or("inv_sqrt").parse()?;
        Ok(Box::new(TvMinusInfinityPolicy::new(TvSchedule::generate(&weight, 1 << 40)?)))
    }
}

/// Named policy factories.
pub struct PolicyRegistry {
    factories: BTreeMap<&'static str, Box<dyn PolicyFactory>>,
}

impl PolicyRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(StationaryFactory));
        r.register(Box::new(UniformFactory));
        r.register(Box::new(RobustStationaryFactory));
        r.register(Box::new(OptimisticFactory));
        r.register(Box::new(FiniteHypothesisFactory));
        r.register(Box::new(PiStarFactory));
        r.register(Box::new(TvAdversarialFactory));
        r
    }

    pub fn register(&mut self, factory: Box<dyn PolicyFactory>) {
        self.factories.insert(factory.name(), factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn describe(&self) -> Vec<(&'static str, &'static str)> {
        self.factories.values().map(|f| (f.name(), f.describe())).collect()
    }

    /// Builds `name` or `name:arg`, wrapped in epoch restarts when
    /// `ctx.restart_k` is set.
    pub fn build(&self, mdp: &MdpInstance, spec: &str, ctx: &PolicyContext) -> Result<Box<dyn PolicyRuntime>> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let factory = self.factories.get(name).ok_or_else(|| Error::Unknown {
            kind: "policy",
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        let runtime = factory.build(mdp, arg, ctx)?;
        match ctx.restart_k {
            None => Ok(runtime),
            Some(k) => {
                let template = runtime;
                let family: PolicyFamily = Arc::new(move |horizon| {
                    let mut fresh = template.clone_box();
                    fresh.reset();
                    fresh.set_horizon_hint(Some(horizon));
                    fresh
                });
                Ok(Box::new(EpochRestartWrapper::new(k, family)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    #[test]
    fn registry_builds_every_builtin() {
        let reg = PolicyRegistry::builtin();
        let inst = instances::two_kernel_detectable(0.2).unwrap();
        let ctx = PolicyContext::new(&inst.mdp);
        for name in ["uniform", "robust-stationary", "ucrl", "finite-hyp", "pi-star"] {
            let mut p = reg.build(&inst.mdp, name, &ctx).unwrap();
            let d = p.act(0, 0).to_vec();
            assert_eq!(d.len(), 2);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(reg.build(&inst.mdp, "nope", &ctx), Err(Error::Unknown { .. })));
        assert!(reg.build(&inst.mdp, "tv-minus-infinity", &ctx).is_err());
        let single = instances::single_state_two_action();
        assert!(reg.build(&single.mdp, "tv-minus-infinity", &PolicyContext::new(&single.mdp)).is_ok());
    }

    #[test]
    fn restart_option_wraps() {
        let reg = PolicyRegistry::builtin();
        let inst = instances::two_kernel_detectable(0.2).unwrap();
        let ctx = PolicyContext { restart_k: Some(4), ..PolicyContext::new(&inst.mdp) };
        let p = reg.build(&inst.mdp, "ucrl", &ctx).unwrap();
        assert_eq!(p.name(), "epoch-restart");
    }

    #[test]
    fn argmax_prefers_low_index() {
        assert_eq!(argmax_low(&[1.0, 1.0 + 1e-12, 0.5], 1e-9), 0);
        assert_eq!(argmax_low(&[1.0, 2.0], 1e-9), 1);
    }
}
