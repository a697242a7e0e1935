// SPDX-License-Identifier: MIT
//! Partition of the Dirichlet form along the tube structure.
//!
//! Every rate-positive unordered edge of the configuration graph falls in
//! exactly one class: inside a single three-site tube (Σ1), between two
//! distinct tubes (Σ2), across the tube-complement boundary (Σ3), or
//! entirely outside the tubes (Σ4). Edges shared by several tubes (their
//! two-site intersections) count once, in Σ1.

use crate::model::{ConfigurationSpace, InclusionModel};
use crate::potential::EdgeList;
use crate::variational::test_function::{classify_sites, SiteKind};
use crate::Real;

/// The four partial Dirichlet sums and the class of every edge (indexed as
/// in the originating `EdgeList`).
#[derive(Debug, Clone)]
pub struct SigmaDecomposition {
    pub sigma: [Real; 4],
    pub edge_class: Vec<u8>,
    pub edge_counts: [usize; 4],
}

impl SigmaDecomposition {
    pub fn total(&self) -> Real {
        self.sigma.iter().sum()
    }
}

/// Bitmask of occupied sites (site graphs here are far below 32 sites).
fn support_mask(eta: &[u32]) -> u32 {
    let mut m = 0u32;
    for (x, &k) in eta.iter().enumerate() {
        if k > 0 {
            m |= 1 << x;
        }
    }
    m
}

/// Masks of all three-site tubes `{x_{i,n}, y_p, x_{j,m}}` with `i ≠ j`.
fn tube_masks(model: &InclusionModel) -> Vec<u32> {
    let g = model.graph();
    let kinds = classify_sites(g);
    let mut masks = Vec::new();
    let star_sites: Vec<(usize, usize)> = (0..g.site_count())
        .filter_map(|x| match kinds[x] {
            SiteKind::Star { comp } => Some((x, comp)),
            SiteKind::Mid => None,
        })
        .collect();
    for (a, &(xa, ca)) in star_sites.iter().enumerate() {
        for &(xb, cb) in star_sites.iter().skip(a + 1) {
            if ca == cb {
                continue;
            }
            for &y in g.non_star_sites() {
                masks.push((1 << xa) | (1 << xb) | (1 << y));
            }
        }
    }
    masks
}

/// Classifies every edge of the list and accumulates the four partial
/// Dirichlet sums of `f` in one pass.
pub fn dirichlet_decomposition(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    edges: &EdgeList,
    f: &[Real],
) -> SigmaDecomposition {
    let tubes = tube_masks(model);
    let in_some_tube = |mask: u32| tubes.iter().any(|t| mask & !t == 0);
    let support: Vec<u32> = space.configs().iter().map(|c| support_mask(c)).collect();
    let mut sigma = [0.0; 4];
    let mut edge_counts = [0usize; 4];
    let mut edge_class = Vec::with_capacity(edges.edges().len());
    for e in edges.edges() {
        let (si, sj) = (support[e.i as usize], support[e.j as usize]);
        let class = if in_some_tube(si | sj) {
            0
        } else {
            match (in_some_tube(si), in_some_tube(sj)) {
                (true, true) => 1,
                (false, false) => 3,
                _ => 2,
            }
        };
        let df = f[e.i as usize] - f[e.j as usize];
        sigma[class] += e.cond * df * df;
        edge_counts[class] += 1;
        edge_class.push(class as u8 + 1);
    }
    SigmaDecomposition { sigma, edge_class, edge_counts }
}
