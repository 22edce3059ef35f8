//! Moment-closure analysis of stochastic mass-action reaction networks.
//!
//! The crate closes the mean/covariance moment hierarchy by dropping third
//! cumulants, integrates the resulting ODE system with an adaptive
//! Dormand-Prince scheme, and layers two kinds of sensitivity analysis on
//! top: normalized forward-difference local sensitivities on a frozen
//! integration mesh, and variance-based Sobol' indices estimated from
//! pick-and-freeze designs. A truncated master-equation solver based on
//! uniformization serves as the reference for accuracy checks.
//!
//! Entry points:
//! - [`model::parse_model`] reads the text grammar for networks.
//! - [`moments::simulate`] integrates the closed moment equations.
//! - [`cme::oracle_moments`] computes reference moments from the full
//!   truncated distribution.
//! - [`local::local_sensitivity`] and [`local::perturbation_sweep`] cover
//!   derivative-based analysis.
//! - [`sobol::sample_design`], [`sobol::evaluate_design`], and the
//!   Martinez/Jansen estimators cover global analysis.
//! - [`cli::run`] backs the `momsens` binary.

pub mod cli;
pub mod cme;
pub mod csvout;
pub mod integrate;
pub mod local;
pub mod model;
pub mod moments;
pub mod sobol;
pub mod sym;

pub use cme::{oracle_moments, OracleMoments};
pub use integrate::{uniform_grid, IntegrateError, Trajectory};
pub use local::{fd_sensitivity, local_sensitivity, perturbation_sweep, LocalSensitivityReport};
pub use model::{parse_model, ModelError, ParameterPoint, ReactionNetwork};
pub use moments::{build_moment_system, simulate, MomentSystem, MomentTrajectory, SimulateError};
pub use sobol::{
    evaluate_design, jansen_indices, martinez_indices, sample_design, EvalOptions, ParameterBox,
    SobolReport,
};
