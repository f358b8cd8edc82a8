//! Truncated matrix Lie maps for autonomous polynomial ODEs.
//!
//! A system `X' = Σ_k P_k X^{[k]}` ([`ode::PolynomialODE`]) is turned into a
//! discrete-time polynomial map `Y = Σ_k W_k X^{[k]}` ([`map::LieMap`]) by
//! [`builder::build_map`]. Maps are rolled out with [`propagator`] in place
//! of step-by-step integration, fitted to sampled trajectories with
//! [`learn`], and translated back into ODE coefficients with [`interpret`].

pub mod builder;
pub mod error;
pub mod exec;
pub mod interpret;
pub mod learn;
pub mod map;
pub mod monomial;
pub mod ode;
pub mod propagator;
pub mod reference;

pub use nalgebra;
pub use builder::{build_map, compose, compose_all, BuilderConfig};
pub use error::{Error, Result};
pub use exec::Execution;
pub use interpret::{linear_log, map_to_ode, InterpretConfig, Interpretation, SparsityTemplate};
pub use learn::{adamax_step, fit, loss_and_grad, AdamaxParams, AdamaxState, FitResult, Init, Sequence, TimeSeriesDataset, TrainConfig};
pub use map::LieMap;
pub use monomial::{monomial_count, reduced_power, reduced_power_jacobian, MonomialBasis, MultiIndex};
pub use ode::{parse_ode, PolynomialODE};
pub use propagator::{
    apply, apply_batch, poincare_section, simulate, CrossingDirection, SectionConfig, SectionEvent,
    Trajectory, DEFAULT_GUARD,
};
