// SPDX-License-Identifier: MIT
//! Explicit variational objects: resistances, interpolation kernels, test
//! functions, test flows, the tube decomposition of the Dirichlet form,
//! and the three-sided capacity sandwich built from them.

pub mod resistance;
pub mod sigma;
pub mod test_flow;
pub mod test_function;

pub use resistance::{
    has_open_channel, kernel_k, kernel_l, p_set, resistance_continuum, resistance_discrete,
    Resistance, ResistanceSet, VariationalError,
};
pub use sigma::{dirichlet_decomposition, SigmaDecomposition};
pub use test_flow::build_test_flow;
pub use test_function::{build_test_function, check_simple_shape, TestFunction, Variant};

use crate::measure::MeasureTable;
use crate::model::{condensate, ConfigurationSpace, InclusionModel};
use crate::potential::{
    capacity, dirichlet_form, generalized_thomson_bound, EdgeList, SolveError,
};
use crate::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SandwichError {
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Exact capacity between two valley families together with its explicit
/// variational brackets and the limit target they approach.
#[derive(Debug, Clone)]
pub struct SandwichReport {
    pub capacity: Real,
    /// Generalized Thomson value of the explicit test flow (zero when every
    /// channel across the partition is blocked).
    pub lower_bound: Real,
    /// Dirichlet form of the explicit test function.
    pub upper_bound: Real,
    /// `(1/|S★|) Σ_{i∈A, j∈B} 1/𝔯_{i,j}`, the common limit of all three
    /// after multiplication by `N/d²`.
    pub target: Real,
    /// `N/d²`, the normalization factor.
    pub scale: Real,
}

impl SandwichReport {
    pub fn normalized(&self, v: Real) -> Real {
        v * self.scale
    }
}

/// Condensate indices `𝓔^(2)(A) = {ξ^{x_{i,n}} : i ∈ A}`.
pub fn component_valleys(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    comps: &[usize],
) -> Vec<usize> {
    let g = model.graph();
    let n = model.particle_count();
    let s = g.site_count();
    comps
        .iter()
        .flat_map(|&c| g.components()[c].iter())
        .map(|&x| space.index_of(&condensate(s, n, x)).expect("condensate enumerated"))
        .collect()
}

/// Computes the capacity across a nontrivial component partition `{A, B}`
/// together with the test-function upper bound and the test-flow lower
/// bound, asserting the sandwich ordering.
pub fn capacity_sandwich(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    table: &MeasureTable,
    edges: &EdgeList,
    a_components: &[usize],
) -> Result<SandwichReport, SandwichError> {
    let g = model.graph();
    let kappa = g.components().len();
    if a_components.is_empty() || a_components.len() >= kappa {
        return Err(VariationalError::TrivialPartition.into());
    }
    let b_components: Vec<usize> =
        (0..kappa).filter(|c| !a_components.contains(c)).collect();
    let source = component_valleys(model, space, a_components);
    let sink = component_valleys(model, space, &b_components);
    let report = capacity(edges, space.len(), &source, &sink)?;

    let variant = Variant::General { a_components: a_components.to_vec() };
    let f = build_test_function(model, space, variant.clone())?;
    let upper = dirichlet_form(edges, &f.values);

    let lower = match build_test_flow(model, space, &variant) {
        Ok(psi) => generalized_thomson_bound(edges, &psi, &report.potential)?,
        Err(VariationalError::TrivialFlowForPartition) => 0.0,
        Err(e) => return Err(e.into()),
    };

    let _ = table; // measure enters through the prebuilt edge conductances
    assert!(
        lower <= report.capacity * (1.0 + 1e-9) + 1e-300,
        "Thomson bound {lower} exceeds capacity {}",
        report.capacity
    );
    assert!(
        upper >= report.capacity * (1.0 - 1e-9),
        "Dirichlet bound {upper} undercuts capacity {}",
        report.capacity
    );

    let resistances = ResistanceSet::build(g, model.particle_count());
    let mut target = 0.0;
    for &i in a_components {
        for &j in &b_components {
            target += resistances.continuum(i, j).inverse_or_zero();
        }
    }
    target /= g.star_sites().len() as Real;
    let d = model.diffusion();
    Ok(SandwichReport {
        capacity: report.capacity,
        lower_bound: lower,
        upper_bound: upper,
        target,
        scale: model.particle_count() as Real / (d * d),
    })
}
