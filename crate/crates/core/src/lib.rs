//! Magnetization chain of the Curie-Weiss model killed near the origin.
//!
//! The chain lives on `E_n = {-1 + 2i/n}` and jumps by `±2/n`. The killed chain
//! is absorbed when it enters `[-1, ε]`; the crate computes its quasi-stationary
//! distribution, its exact conditioned transient laws, Monte Carlo estimates of
//! the same, and the mean-field ODE that governs the large-`n` limit.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolution;
pub mod law;
pub mod mean_field;
pub mod metrics;
pub mod model;
pub mod sampler;
pub mod spectral;

pub use error::{Error, Result};
pub use evolution::{
    conditional_law, conditional_laws_at, evolve_killed, expmv, laws_at, survival_prob, verify_doeblin,
    verify_lyapunov, LyapunovReport, Side,
};
pub use law::{DiscreteLaw, SubProbLaw};
pub use mean_field::{integrate_limit, integrate_modified, ModifiedSolution, OdeSolution};
pub use metrics::{tv, w1, w2, weighted_tv, WeightedTvSpec};
pub use model::{find_m_plus, Grid, GridKind, ModelParams, Potential, TridiagGenerator};
pub use sampler::{
    mc_conditional_expectation, sample_auxiliary, sample_killed, sample_path, sample_triple_coupling,
    CouplingSetup, McEstimate, Record, SimConfig, Trajectory, TripleOutcome,
};
pub use spectral::{
    doob_transform, harris_constants, killed_spectrum, perron_eigenpair, stationary_full, HarrisConstants,
    PerronMethod, PerronOptions, SpectralPack,
};
