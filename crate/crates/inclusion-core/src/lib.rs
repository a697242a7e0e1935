//! Exact and Monte Carlo analysis of condensing inclusion processes on
//! finite site graphs.
//!
//! The library computes, exactly at finite particle number N:
//!
//! * the invariant product measure and its valley (condensate) masses,
//! * equilibrium potentials, capacities and mean hitting times by linear
//!   solves on the configuration graph,
//! * the explicit variational test functions / test flows whose Dirichlet
//!   and generalized-Thomson values sandwich the capacity on the second
//!   metastable time scale `N/d_N^2`,
//! * the resistance constants governing the limiting condensate motion and
//!   the induced rate matrix / limit chain between metastable components,
//! * event-driven (Gillespie) simulation with trace, hitting-time and
//!   thermalization estimators.
//!
//! Numeric kernels in [`num`] are generic over the scalar type; the domain
//! layer works with the concrete alias [`Real`].

pub mod analysis;
pub mod measure;
pub mod model;
pub mod modelfile;
pub mod num;
pub mod potential;
pub mod simulate;
pub mod variational;

/// Scalar type used by the domain layer.
pub type Real = f64;

pub use measure::{MeasureTable, WeightTable};
pub use model::{Configuration, ConfigurationSpace, InclusionModel, ModelError, SiteGraph};
pub use potential::{CapacityReport, DiscreteFlow, EdgeList, PotentialField, SolveError};
pub use variational::{Resistance, ResistanceSet, SigmaDecomposition, TestFunction, Variant};
