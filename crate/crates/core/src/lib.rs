//! Multigenerational status-transmission models.
//!
//! The crate covers five transmission families (latent factor, grandparent
//! effects, multiplicity, poverty trap, two-parent assortative), their
//! closed-form kinship moments, a deterministic pedigree simulator, the usual
//! regression and moment estimators, and canned replications of the standard
//! figures and regression table.

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod io;
pub mod model;
pub mod moments;
pub mod ols;
pub mod pedigree;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use estimators::{
    beta_k_estimate, fit_latent_factor, group_level_estimate, multigen_regression, r2_of,
    sibling_regression, Control, FitResult, PairOptions,
};
pub use model::{
    validate, AssortativeParams, GrandparentAR2Params, LatentFactorParams, ModelSpec,
    MultiplicityParams, PovertyTrapParams, Severity, Violation,
};
pub use moments::{
    analytic_moments, ar2_moments, assortative_moments, duality_gp_coefficient,
    iterated_prediction, latent_factor_extrapolation_error, latent_factor_moments,
    multiplicity_extrapolation_error, multiplicity_moments, MomentSet,
};
pub use ols::{ols, RegressionResult};
pub use pedigree::{AncestorLine, Columns, Pedigree, Person, SimTopology};
pub use sim::{poverty_persistence_curve, simulate, spouse_draw};
pub use experiments::{
    replicate, replicate_fig1a, replicate_fig1b, replicate_fig2a, replicate_fig2b,
    replicate_table2, Experiment, ReplicationReport, Source,
};
pub use io::{emit, export_panel, load_panel, Emit, Format, RunHeader};
