//! Robust density estimation for finite mixture models by ρ-estimation.
//!
//! The crate is organised bottom-up:
//!
//! - [`emission`]: parametric emission families, samplers, VC bounds and parameter nets.
//! - [`simplex`]: δ-floored rational weight grids on the simplex.
//! - [`mixture`]: mixture candidates, lazy parameter lattices and finite candidate sets.
//! - [`quadrature`] and [`metrics`]: Hellinger distances, Fisher information, component matching.
//! - [`rho`]: the ψ / T / Υ machinery, penalties and the estimator search.
//! - [`selection`]: order selection and emission-family selection.
//! - [`experiments`]: seeded simulation studies and mixing-measure discretization.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod emission;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod mixture;
pub mod quadrature;
pub mod rho;
pub mod rng;
pub mod selection;
pub mod simplex;

pub use emission::{Density, EmissionKind, EmissionNet, EmissionParams, EmissionSpec};
pub use error::{Result, RhoError};
pub use mixture::{CandidateSet, MixtureCandidate, ModelDescriptor, ModelLattice};
pub use rho::{PenaltySpec, RhoFit, SearchConfig, SearchMode};
pub use simplex::WeightVector;
