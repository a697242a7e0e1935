// SPDX-License-Identifier: MIT
//! Explicit test flows for the lower capacity bound.
//!
//! The flow lives on three-site tubes only; its value is engineered so the
//! divergence vanishes at every condensate and at every tube interior
//! configuration, leaving only summable boundary terms for the generalized
//! Thomson principle. The denominators use the continuum resistance, as
//! the construction prescribes.

use crate::model::{Configuration, ConfigurationSpace, InclusionModel, SiteGraph};
use crate::potential::DiscreteFlow;
use crate::variational::resistance::{
    p_set, resistance_continuum, Resistance, VariationalError,
};
use crate::variational::test_function::{check_simple_shape, Variant};
use crate::Real;

/// Per-channel flow numerator: `m★(y_p)^ℓ / (a/r_i + b/r_j)` where both
/// legs are open by the choice of `p`.
fn flow_numerator(graph: &SiteGraph, xi: usize, xj: usize, y: usize, a: Real, b: Real, ell: usize) -> Real {
    let denom = a / graph.rate(xi, y) + b / graph.rate(xj, y);
    graph.m_star(y).powi(ell as i32) / denom
}

/// The parallel-bank denominator at leg lengths `(a, b)`:
/// `Σ_{ñ,m̃,q} 1/((1 − m★(y_q))(a/r + b/r))` with blocked legs dropping out.
fn flow_bank(graph: &SiteGraph, ci: usize, cj: usize, a: Real, b: Real) -> Real {
    let mut total = 0.0;
    for &xi in &graph.components()[ci] {
        for &xj in &graph.components()[cj] {
            for &y in graph.non_star_sites() {
                let (ri, rj) = (graph.rate(xi, y), graph.rate(xj, y));
                let leg_i = if a == 0.0 { 0.0 } else if ri == 0.0 { continue } else { a / ri };
                let leg_j = if b == 0.0 { 0.0 } else if rj == 0.0 { continue } else { b / rj };
                let r = (1.0 - graph.m_star(y)) * (leg_i + leg_j);
                if r > 0.0 {
                    total += 1.0 / r;
                }
            }
        }
    }
    total
}

/// Builds the test flow across the partition `{A, B}` (for the general
/// variant) or across `{x₁}, {x₂}` (simple variant).
pub fn build_test_flow(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    variant: &Variant,
) -> Result<DiscreteFlow, VariationalError> {
    let g = model.graph();
    match variant {
        Variant::Simple => {
            check_simple_shape(g)?;
            build_general_flow(model, space, &[0], &[1])
        }
        Variant::General { a_components } => {
            let kappa = g.components().len();
            if a_components.is_empty() || a_components.len() >= kappa {
                return Err(VariationalError::TrivialPartition);
            }
            let b: Vec<usize> = (0..kappa).filter(|c| !a_components.contains(c)).collect();
            build_general_flow(model, space, a_components, &b)
        }
    }
}

fn build_general_flow(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    a_side: &[usize],
    b_side: &[usize],
) -> Result<DiscreteFlow, VariationalError> {
    let g = model.graph();
    let n = model.particle_count();
    let s = g.site_count();
    let half = n / 2;
    let mut flow = DiscreteFlow::new();
    let mut any_open = false;
    for &ci in a_side {
        for &cj in b_side {
            let r_cont = match resistance_continuum(g, ci, cj) {
                Resistance::Finite(v) => v,
                Resistance::Blocked => continue,
            };
            any_open = true;
            for &xi in &g.components()[ci] {
                for &xj in &g.components()[cj] {
                    for p in p_set(g, xi, xj) {
                        let y = g.non_star_sites()[p];
                        for ell in 0..half {
                            for k in 1..=n.saturating_sub(ell + 1) {
                                // η = (k, ℓ): k on x_{i,n}, ℓ on y_p, rest on x_{j,m}
                                let mut eta: Configuration = vec![0; s];
                                eta[xi] = k as u32;
                                eta[y] = ell as u32;
                                eta[xj] = (n - k - ell) as u32;
                                let idx = space.index_of(&eta).expect("tube point enumerated") as u32;
                                let (a, b) =
                                    ((n - k - ell - 1) as Real, (k + ell) as Real);
                                let value = flow_numerator(g, xi, xj, y, a, b, ell)
                                    / (r_cont * flow_bank(g, ci, cj, a, b));
                                // outgoing leg x_{i,n} → y_p
                                let to_mid = crate::model::sigma_move(&eta, xi, y);
                                let mid_idx =
                                    space.index_of(&to_mid).expect("move enumerated") as u32;
                                flow.add(idx, mid_idx, value);
                                // incoming leg x_{j,m} → y_p carries −value
                                let from_b = crate::model::sigma_move(&eta, xj, y);
                                let b_idx =
                                    space.index_of(&from_b).expect("move enumerated") as u32;
                                flow.add(idx, b_idx, -value);
                            }
                        }
                    }
                }
            }
        }
    }
    if !any_open || flow.is_trivial() {
        return Err(VariationalError::TrivialFlowForPartition);
    }
    Ok(flow)
}
