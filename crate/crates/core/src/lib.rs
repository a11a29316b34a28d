//! Nonlinear expectations on finite state spaces.
//!
//! Convex and sublinear expectations are stored in dual (penalty) form and
//! evaluated as a finite maximum. On top of that the crate provides
//! maximal, minimal and limit-based extensions from a subspace, consistent
//! families of marginal expectations with a robust Kolmogorov extension,
//! nonlinear Markov kernels with Chapman–Kolmogorov composition, and a
//! drift/volatility-uncertainty family of Gaussian path functionals.

pub mod axioms;
pub mod conjugate;
pub mod document;
pub mod error;
pub mod expectation;
pub mod extension;
pub mod gaussian;
pub mod kernels;
pub mod kolmogorov;
mod lp;
pub mod report;
pub mod space;

pub use axioms::{verify_axioms, Axiom, AxiomCheck, AxiomReport, AXIOM_TOL};
pub use conjugate::{conjugate, hull_membership, scenario_membership, ConjugateEstimate, Membership};
pub use error::{Error, Result};
pub use expectation::{dual_eval, pushforward, EntropicModel, ExpectationModel, OracleModel, PenaltyModel, StateMap};
pub use extension::{
    bar_extension_eval, continuity_from_above_check, delta_extension_eval, hat_vs_bar_gap_demo, maximal_extension_eval,
    minimal_extension_eval, tightness_continuity_check, Certificate, Direction, ExtensionResult, GapDemo,
    MonotoneSequenceSpec, SubspaceModel,
};
pub use gaussian::{
    gridded_normal_scenarios, linear_eval, robust_eval, GaussianFamily, GaussianFunction, ParamBox, RobustValue,
    TimeGrid,
};
pub use kernels::{
    chapman_check, compose, lift_parameter, markov_chain_family, two_point_identity_check, KernelFamily, MarkovChain,
    NonlinearKernel, OneStepOperator,
};
pub use kolmogorov::{
    check_consistency_expectations, check_consistency_scenario_sets, cylinder_eval, extension_marginal,
    project_function, pushforward_marginal, CylinderFunction, FamilyGenerator, FiniteSubset, MarginalFamily,
    ProductSpace,
};
pub use lp::LP_TOL;
pub use report::{ConsistencyReport, ConsistencyRow};
pub use space::{RandomVariable, Scenario, StateSpace};
