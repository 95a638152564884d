//! Random-walk Metropolis on finite windows of translation-invariant,
//! finite-range Gibbs fields, with estimators for the high-dimensional
//! scaling limit.

pub mod cylinder;
pub mod error;
pub mod estimators;
pub mod lattice;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod scaling;

pub use cylinder::CylinderFunction;
pub use error::{Error, Result};
pub use estimators::EstimateWithError;
pub use lattice::{BoundaryMode, Neighborhood, VertexId, Window, WindowSpec};
pub use model::{Configuration, InteractionModel, ModelFamily, ModelSpec};
pub use sampler::{run_chain, ChainRun, InitMode, ProposalSpec, StepRecord};
pub use scaling::{c_theoretical, tau_star, RunPlan};
