//! Tabular robust average-reward MDPs: dynamic programming, worst-case kernel
//! selection over finite ambiguity sets, a mixture sequential test for Markov
//! kernels, online policies and a Monte Carlo harness.

pub mod ambiguity;
pub mod chain;
pub mod dp;
pub mod error;
pub mod experiments;
pub mod instances;
mod linalg;
pub mod mdp;
pub mod policies;
pub mod rng;
pub mod sim;
pub mod sprt;
pub mod stats;

pub use ambiguity::{robust_gain, RobustSolution};
pub use chain::{chain_structure, ChainStructure, MarkovMatrix};
pub use dp::{GainBias, OptimalSolution};
pub use error::{Error, Result};
pub use mdp::{MdpInstance, PolicyConstraint, StationaryPolicy, TransitionKernel};
pub use policies::{PolicyRegistry, PolicyRuntime};
pub use sim::{RegretCurve, TvEstimate, Trajectory, Weight};
pub use sprt::{DirichletPrior, SprtState};
