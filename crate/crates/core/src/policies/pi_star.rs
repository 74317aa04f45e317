use std::sync::Arc;

use serde::Serialize;

use super::{EpochEvent, Phase, PolicyRuntime};
use crate::ambiguity::robust_gain;
use crate::chain::{chain_structure, kl_rate, MarkovMatrix};
use crate::dp::{bias_of_induced_chain, unichain_optimal_policy, UnichainOptions};
use crate::error::{Error, Result};
use crate::mdp::{induce_chain, MdpInstance, StationaryPolicy};
use crate::sprt::{new_test, DirichletPrior, SprtState};

/// Epoch `j ≥ 1` starts at `t_j = 2^j − 2`, lasts `L_j = 2^j` steps and tests
/// at level `ρ_j = 2^{−ζ j}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochSchedule {
    zeta: f64,
}

impl EpochSchedule {
    pub const MAX_EPOCH: u32 = 62;

    pub fn new(zeta: f64) -> Result<Self> {
        if !(zeta > 1.0 && zeta.is_finite()) {
            return Err(Error::param(format!("zeta must be greater than 1, got {zeta}")));
        }
        if (-zeta * Self::MAX_EPOCH as f64).exp2() == 0.0 {
            return Err(Error::param(format!("zeta = {zeta} makes late rejection levels underflow")));
        }
        Ok(Self { zeta })
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn length(&self, j: u32) -> u64 {
        assert!((1..=Self::MAX_EPOCH).contains(&j), "epoch {j} out of range");
        1u64 << j
    }

    pub fn rho(&self, j: u32) -> f64 {
        (-self.zeta * j as f64).exp2()
    }

    pub fn start(&self, j: u32) -> u64 {
        self.length(j) - 2
    }

    /// The epoch containing time `t`.
    pub fn epoch_at(&self, t: u64) -> u32 {
        let j = 63 - (t + 2).leading_zeros();
        assert!(j <= Self::MAX_EPOCH, "time {t} beyond the last epoch");
        j
    }
}

#[derive(Debug, Clone)]
pub struct PiStarOptions {
    pub zeta: f64,
    pub irreducible_preference: bool,
    /// Initial distribution used to pick the worst-case kernel.
    pub mu: Vec<f64>,
    /// Defaults to the uniform prior.
    pub prior: Option<DirichletPrior>,
}

/// How an alternative kernel looks under `Δ*`, compared with `P_0` on `C_0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiabilityRow {
    pub kernel: usize,
    pub name: String,
    /// `μ · α_p`.
    pub value: f64,
    pub worst: bool,
    /// Largest total-variation distance between rows of `P` and `P_0` on `C_0`.
    pub tv_on_c0: f64,
    pub differs_on_c0: bool,
    /// Largest KL rate of `P` against `P_0` over the closed classes of `P`.
    pub kl_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiStarReport {
    pub worst_kernel: usize,
    pub worst_kernel_name: String,
    pub singleton_worst: bool,
    pub alpha_star: f64,
    pub span_v_star: f64,
    pub v_star: Vec<f64>,
    pub delta_star: Vec<Vec<f64>>,
    pub c0: Vec<usize>,
    pub p0_irreducible: bool,
    /// Every non-worst kernel differs from `P_0` on `C_0` under `Δ*`.
    pub identifiable: bool,
    pub kernels: Vec<IdentifiabilityRow>,
    pub warnings: Vec<String>,
}

/// Everything π* precomputes: `Δ*`, `P_0 = p*_{Δ*}`, the prior and schedule.
#[derive(Debug, Clone)]
pub struct PiStarModel {
    pub schedule: EpochSchedule,
    pub delta_star: StationaryPolicy,
    pub p0: MarkovMatrix,
    pub prior: DirichletPrior,
    pub report: PiStarReport,
}

impl PiStarModel {
    pub fn build(mdp: &MdpInstance, options: &PiStarOptions) -> Result<Self> {
        let schedule = EpochSchedule::new(options.zeta)?;
        let robust = robust_gain(mdp, &options.mu)?;
        let worst = robust.worst_kernel();
        let mut warnings = Vec::new();
        if !robust.is_singleton_worst {
            warnings.push(format!(
                "worst-case kernel is not unique ({:?}); using `{}`",
                robust.worst_kernels,
                mdp.kernel(worst).name()
            ));
        }
        let kernel = mdp.kernel(worst);
        let delta_star = unichain_optimal_policy(
            mdp,
            kernel,
            UnichainOptions { prefer_irreducible: options.irreducible_preference },
        )?;
        let p0 = induce_chain(kernel, &delta_star)?;
        let v_star = bias_of_induced_chain(mdp, kernel, &delta_star)?;
        let structure = chain_structure(&p0);
        let c0 = structure.closed_classes[0].clone();
        let p0_irreducible = structure.is_irreducible(mdp.n_states());
        let prior = match &options.prior {
            Some(p) if p.n() != mdp.n_states() => return Err(Error::shape("prior size does not match instance")),
            Some(p) => p.clone(),
            None => DirichletPrior::uniform(mdp.n_states()),
        };
        let mut kernels = Vec::new();
        for (k, q) in mdp.kernels().iter().enumerate() {
            let pq = induce_chain(q, &delta_star)?;
            let tv_on_c0 = c0
                .iter()
                .map(|&s| 0.5 * pq.row(s).iter().zip(p0.row(s)).map(|(a, b)| (a - b).abs()).sum::<f64>())
                .fold(0.0, f64::max);
            let mut kl = 0.0f64;
            for class in &chain_structure(&pq).closed_classes {
                kl = kl.max(kl_rate(&pq, &p0, class)?);
            }
            kernels.push(IdentifiabilityRow {
                kernel: k,
                name: q.name().to_string(),
                value: robust.per_kernel_value[k],
                worst: robust.worst_kernels.contains(&k),
                tv_on_c0,
                differs_on_c0: tv_on_c0 > 0.0,
                kl_rate: kl,
            });
        }
        let identifiable = kernels.iter().filter(|r| !r.worst).all(|r| r.differs_on_c0);
        for r in kernels.iter().filter(|r| !r.worst && !r.differs_on_c0) {
            warnings.push(format!("kernel `{}` agrees with the null chain on its recurrent class", r.name));
        }
        let report = PiStarReport {
            worst_kernel: worst,
            worst_kernel_name: kernel.name().to_string(),
            singleton_worst: robust.is_singleton_worst,
            alpha_star: robust.alpha_star,
            span_v_star: v_star.span,
            v_star: v_star.bias,
            delta_star: delta_star.rows(),
            c0,
            p0_irreducible,
            identifiable,
            kernels,
            warnings,
        };
        Ok(Self { schedule, delta_star, p0, prior, report })
    }
}

/// Plays `Δ*` while the epoch's test of `P_0` has not rejected, then hands
/// control to a freshly reset fallback until the epoch ends. The fallback
/// sees time measured from the rejection.
pub struct PiStarRuntime {
    model: Arc<PiStarModel>,
    template: Box<dyn PolicyRuntime>,
    fallback: Box<dyn PolicyRuntime>,
    phase: Phase,
    epoch_end: u64,
    sprt: Option<SprtState>,
    rejected_at: u64,
    events: Vec<EpochEvent>,
}

impl PiStarRuntime {
    pub fn new(model: Arc<PiStarModel>, fallback: Box<dyn PolicyRuntime>) -> Self {
        let mut template = fallback;
        template.reset();
        Self {
            model,
            fallback: template.clone_box(),
            template,
            phase: Phase::Testing,
            epoch_end: 0,
            sprt: None,
            rejected_at: 0,
            events: Vec::new(),
        }
    }

    pub fn model(&self) -> &PiStarModel {
        &self.model
    }

    pub fn test(&self) -> Option<&SprtState> {
        self.sprt.as_ref()
    }

    fn start_epoch(&mut self, state: usize, time: u64) {
        let schedule = &self.model.schedule;
        let j = schedule.epoch_at(time);
        let start = schedule.start(j);
        let length = schedule.length(j);
        self.epoch_end = start + length;
        self.sprt = Some(
            new_test(&self.model.p0, &self.model.prior, schedule.rho(j), start, state)
                .expect("schedule levels lie in (0, 1)"),
        );
        self.phase = Phase::Testing;
        self.events.push(EpochEvent { epoch: j, start, length, rejected_at: None });
    }
}

impl PolicyRuntime for PiStarRuntime {
    fn name(&self) -> &str {
        "pi-star"
    }

    fn act(&mut self, state: usize, time: u64) -> &[f64] {
        if self.sprt.is_none() || time >= self.epoch_end {
            self.start_epoch(state, time);
        }
        match self.phase {
            Phase::Testing => self.model.delta_star.row(state),
            Phase::Fallback => self.fallback.act(state, time - self.rejected_at),
        }
    }

    fn observe(&mut self, state: usize, action: usize, next_state: usize, time: u64) {
        match self.phase {
            Phase::Testing => {
                let Some(test) = self.sprt.as_mut() else { return };
                if test.observe(next_state).expect("state in range") {
                    let tau = time + 1;
                    self.phase = Phase::Fallback;
                    self.rejected_at = tau;
                    self.fallback = self.template.clone_box();
                    self.fallback.reset();
                    self.fallback.set_horizon_hint(Some(self.epoch_end.saturating_sub(tau)));
                    if let Some(ev) = self.events.last_mut() {
                        ev.rejected_at = Some(tau);
                    }
                }
            }
            Phase::Fallback => self.fallback.observe(state, action, next_state, time - self.rejected_at),
        }
    }

    fn reset(&mut self) {
        self.fallback = self.template.clone_box();
        self.phase = Phase::Testing;
        self.epoch_end = 0;
        self.sprt = None;
        self.rejected_at = 0;
        self.events.clear();
    }

    fn clone_box(&self) -> Box<dyn PolicyRuntime> {
        Box::new(Self {
            model: self.model.clone(),
            template: self.template.clone_box(),
            fallback: self.fallback.clone_box(),
            phase: self.phase,
            epoch_end: self.epoch_end,
            sprt: self.sprt.clone(),
            rejected_at: self.rejected_at,
            events: self.events.clone(),
        })
    }

    fn phase(&self) -> Option<Phase> {
        Some(self.phase)
    }

    fn events(&self) -> Option<Vec<EpochEvent>> {
        Some(self.events.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambiguity::uniform_mu;
    use crate::instances;
    use crate::policies::FiniteHypothesisRuntime;
    use crate::rng::{sample_index, stream, StreamPurpose};

    fn options() -> PiStarOptions {
        PiStarOptions { zeta: 2.0, irreducible_preference: false, mu: uniform_mu(3), prior: None }
    }

    #[test]
    fn schedule_arithmetic() {
        let s = EpochSchedule::new(2.0).unwrap();
        assert_eq!((s.length(1), s.rho(1)), (2, 1.0 / 4.0));
        assert_eq!((s.length(2), s.rho(2)), (4, 1.0 / 16.0));
        assert_eq!((s.length(3), s.rho(3)), (8, 1.0 / 64.0));
        assert_eq!(s.start(1), 0);
        for j in 1..=40u32 {
            let sum: u64 = (1..j).map(|i| s.length(i)).sum();
            assert_eq!(sum, (1u64 << j) - 2);
            assert_eq!(s.start(j), sum);
            assert_eq!(s.epoch_at(s.start(j)), j);
            assert_eq!(s.epoch_at(s.start(j) + s.length(j) - 1), j);
        }
        assert!(EpochSchedule::new(1.0).is_err());
        assert!(EpochSchedule::new(f64::NAN).is_err());
    }

    #[test]
    fn model_on_detectable_instance() {
        let inst = instances::two_kernel_detectable(0.2).unwrap();
        let m = PiStarModel::build(&inst.mdp, &options()).unwrap();
        assert!(m.report.singleton_worst);
        assert!(m.report.identifiable);
        assert!(m.report.warnings.is_empty());
        assert!((m.report.alpha_star - inst.expected["alpha_star"].value).abs() < 1e-8);
        assert!((m.report.span_v_star - inst.expected["span_v_star"].value).abs() < 1e-8);
        let alt = m.report.kernels.iter().find(|r| !r.worst).unwrap();
        assert!(alt.kl_rate > 0.0 && alt.tv_on_c0 > 0.0);
    }

    #[test]
    fn tie_warns_and_picks_lowest_index() {
        let inst = instances::random_weakly_communicating(3, 2, 1, 3);
        let k = inst.mdp.kernel(0).clone();
        let k2 = crate::mdp::TransitionKernel::from_nested("twin", &k.to_nested()).unwrap();
        let mdp = MdpInstance::from_reward_rows(&inst.mdp.reward_rows(), vec![k, k2], inst.mdp.constraint()).unwrap();
        let m = PiStarModel::build(&mdp, &options()).unwrap();
        assert_eq!(m.report.worst_kernel, 0);
        assert!(!m.report.singleton_worst);
        assert!(!m.report.warnings.is_empty());
    }

    fn traced_run(kernel: usize, horizon: u64, seed: u64) -> (Vec<EpochEvent>, bool) {
        let inst = instances::two_kernel_detectable(0.2).unwrap();
        let model = Arc::new(PiStarModel::build(&inst.mdp, &options()).unwrap());
        let fallback = Box::new(FiniteHypothesisRuntime::new(&inst.mdp).unwrap());
        let mut rt = PiStarRuntime::new(model.clone(), fallback);
        let k = inst.mdp.kernel(kernel);
        let mut env = stream(seed, 0, StreamPurpose::Environment);
        let mut pol = stream(seed, 0, StreamPurpose::Policy);
        let mut s = 0;
        let mut trace_ok = true;
        let mut last_phase = Phase::Testing;
        let mut epoch_entries = 0;
        for t in 0..horizon {
            let d = rt.act(s, t).to_vec();
            let phase = rt.phase().unwrap();
            let epoch_start = model.schedule.start(model.schedule.epoch_at(t)) == t;
            if epoch_start {
                trace_ok &= phase == Phase::Testing;
                epoch_entries = 0;
            } else if last_phase == Phase::Testing && phase == Phase::Fallback {
                epoch_entries += 1;
                trace_ok &= epoch_entries == 1;
            } else if last_phase == Phase::Fallback {
                trace_ok &= phase == Phase::Fallback;
            }
            if phase == Phase::Testing {
                trace_ok &= d == model.delta_star.row(s);
            }
            last_phase = phase;
            let a = sample_index(&mut pol, &d);
            let next = sample_index(&mut env, k.row(s, a));
            rt.observe(s, a, next, t);
            s = next;
        }
        (rt.events().unwrap(), trace_ok)
    }

    #[test]
    fn phase_machine_traces() {
        for (kernel, seed) in [(0, 1), (1, 2), (1, 3)] {
            let (events, ok) = traced_run(kernel, 4000, seed);
            assert!(ok);
            assert_eq!(events.len(), EpochSchedule::new(2.0).unwrap().epoch_at(3999) as usize);
            for (i, e) in events.iter().enumerate() {
                assert_eq!(e.epoch as usize, i + 1);
                if let Some(r) = e.rejected_at {
                    assert!(r > e.start && r <= e.start + e.length);
                }
            }
        }
    }

    #[test]
    fn alternative_kernel_is_rejected_in_late_epochs() {
        let horizon = 1 << 12;
        let (events, _) = traced_run(1, horizon, 7);
        let complete: Vec<_> = events.iter().filter(|e| e.start + e.length <= horizon).collect();
        assert!(complete.iter().rev().take(3).all(|e| e.rejected_at.is_some()), "{complete:?}");
    }
}
