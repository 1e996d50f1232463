//! Discrete forms, implicit evolution and the semigroup experiments.

pub mod evolve;
pub mod experiments;
pub mod form;

pub use evolve::{evolve, inner, lp_norm, Evolver, Scheme, SemigroupState};
pub use experiments::{
    bilinear_functional, check_contractivity, check_truncation_convergence, flow_monotonicity, lp_gradient_estimate,
    search_growth, singular_potential, truncate_potential, BilinearParams, BilinearReport, ContractivityParams,
    ContractivityReport, FlowParams, FlowReport, GrowthReport, LpGradientReport, ProbeSpec, TruncationParams,
    TruncationReport,
};
pub use form::{assemble, DiscreteForm};
