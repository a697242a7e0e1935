// SPDX-License-Identifier: MIT
//! Explicit test functions approximating the equilibrium potential between
//! valley families.
//!
//! The general construction dispatches on the support of a configuration:
//! condensates get their boundary values, two-site tubes copy the star
//! endpoint, three-site tubes across distinct components interpolate
//! through the K/L kernels (open pairs) or linearly (blocked pairs), and
//! everything else collapses to component copies, a concentration map, or
//! a majority threshold.

use crate::model::{Configuration, ConfigurationSpace, InclusionModel, SiteGraph};
use crate::variational::resistance::{
    bank_conductance, in_q_set, kernel_k, kernel_l, resistance_discrete,
    Resistance, ResistanceSet, VariationalError,
};
use crate::Real;

/// Which construction a test object follows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Variant {
    /// The four-site special shape (two isolated star sites, two
    /// intermediate sites, every crossing rate positive).
    Simple,
    /// The general construction for a component family `A` (the source
    /// side of the partition).
    General { a_components: Vec<usize> },
}

/// A test function over the enumerated configuration space.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub values: Vec<Real>,
    pub variant: Variant,
}

/// Per-site classification reused by the dispatch.
#[derive(Debug, Clone, Copy)]
pub(crate) enum SiteKind {
    /// Star site carrying its component index.
    Star { comp: usize },
    /// Intermediate (non-star) site.
    Mid,
}

pub(crate) fn classify_sites(graph: &SiteGraph) -> Vec<SiteKind> {
    (0..graph.site_count())
        .map(|x| match graph.component_of(x) {
            Some(comp) => SiteKind::Star { comp },
            None => SiteKind::Mid,
        })
        .collect()
}

/// Checks the simple-case shape: `S = {x₁, x₂, y₁, y₂}` with
/// `r(y_p, x_i) > r(x_i, y_p) > 0` for all crossings, no direct star-star
/// rate, and equal star measures (the last holds by construction of S★).
pub fn check_simple_shape(graph: &SiteGraph) -> Result<(usize, usize, [usize; 2]), VariationalError> {
    let bad = |msg: &str| Err(VariationalError::ConditionViolated(msg.into()));
    if graph.site_count() != 4 {
        return bad("expected exactly four sites");
    }
    let stars = graph.star_sites();
    let mids = graph.non_star_sites();
    if stars.len() != 2 || mids.len() != 2 {
        return bad("expected two maximal-measure sites and two intermediate sites");
    }
    let (x1, x2) = (stars[0], stars[1]);
    if graph.rate(x1, x2) != 0.0 || graph.rate(x2, x1) != 0.0 {
        return bad("direct rate between the two maximal sites must vanish");
    }
    for &x in &[x1, x2] {
        for &y in mids {
            let (out, into) = (graph.rate(x, y), graph.rate(y, x));
            if !(into > out && out > 0.0) {
                return bad("every crossing needs r(y,x) > r(x,y) > 0");
            }
        }
    }
    Ok((x1, x2, [mids[0], mids[1]]))
}

struct GeneralCtx<'a> {
    model: &'a InclusionModel,
    kinds: Vec<SiteKind>,
    in_a: Vec<bool>,
    resistances: ResistanceSet,
}

impl GeneralCtx<'_> {
    /// Boundary value of the condensate on star site `x`.
    fn boundary_star(&self, comp: usize) -> Real {
        if self.in_a[comp] {
            1.0
        } else {
            0.0
        }
    }

    fn value(&self, eta: &[u32]) -> Result<Real, VariationalError> {
        let n = self.model.particle_count();
        let mut stars: Vec<usize> = Vec::new(); // occupied star sites
        let mut mids: Vec<usize> = Vec::new(); // occupied intermediate sites
        for (x, &cnt) in eta.iter().enumerate() {
            if cnt > 0 {
                match self.kinds[x] {
                    SiteKind::Star { .. } => stars.push(x),
                    SiteKind::Mid => mids.push(x),
                }
            }
        }
        let comp = |x: usize| match self.kinds[x] {
            SiteKind::Star { comp } => comp,
            SiteKind::Mid => unreachable!(),
        };
        // condensates (including ξ^{y_p}: value 0 via the majority rule)
        if stars.len() + mids.len() == 1 {
            return Ok(if stars.len() == 1 { self.boundary_star(comp(stars[0])) } else { 0.0 });
        }
        // two-site tube {x_{i,n}, y_p}: copy the star endpoint
        if stars.len() == 1 && mids.len() == 1 {
            return Ok(self.boundary_star(comp(stars[0])));
        }
        if stars.len() == 2 && mids.len() <= 1 {
            let (xi, xj) = (stars[0], stars[1]);
            let (ci, cj) = (comp(xi), comp(xj));
            if ci != cj {
                // three-site tube across distinct components
                return self.tube_value(eta, xi, ci, xj, cj, mids.first().copied());
            }
            // component copy: both star sites share a component
            return Ok(self.boundary_star(ci));
        }
        // concentration map: three star sites, two sharing a component
        if mids.is_empty() && stars.len() == 3 {
            for a in 0..3 {
                for b in a + 1..3 {
                    if comp(stars[a]) == comp(stars[b]) {
                        let keep = stars[a].min(stars[b]);
                        let drop = stars[a].max(stars[b]);
                        let mut folded: Configuration = eta.to_vec();
                        folded[keep] += folded[drop];
                        folded[drop] = 0;
                        return self.value(&folded);
                    }
                }
            }
        }
        // majority threshold
        let half = n / 2;
        let mut per_comp = vec![0u32; self.in_a.len()];
        for &x in &stars {
            per_comp[comp(x)] += eta[x];
        }
        let hit = per_comp
            .iter()
            .enumerate()
            .any(|(c, &mass)| self.in_a[c] && mass as usize > half);
        Ok(if hit { 1.0 } else { 0.0 })
    }

    /// Value on a three-site tube `{x_{i,n}, y_p, x_{j,m}}` with both star
    /// sites occupied; `mid` is the occupied intermediate site if any.
    fn tube_value(
        &self,
        eta: &[u32],
        xi: usize,
        ci: usize,
        xj: usize,
        cj: usize,
        mid: Option<usize>,
    ) -> Result<Real, VariationalError> {
        let g = self.model.graph();
        let n = self.model.particle_count();
        let (k, ell) = (eta[xi] as usize, mid.map_or(0, |y| eta[y] as usize));
        let (fi, fj) = (self.boundary_star(ci), self.boundary_star(cj));
        if self.resistances.is_open(ci, cj) {
            let rn = match self.resistances.discrete(ci, cj) {
                Resistance::Finite(v) => v,
                Resistance::Blocked => unreachable!(),
            };
            let kernel = match mid {
                None => {
                    // ℓ = 0: the K and L kernels both collapse to the
                    // prefix sum of the serial resistances
                    let mut acc = 0.0;
                    for t in 1..=k {
                        if let Some(c) =
                            bank_conductance(g, ci, cj, (n - t) as Real, (t - 1) as Real)
                        {
                            if c > 0.0 {
                                acc += 1.0 / c;
                            }
                        }
                    }
                    acc
                }
                Some(y) if in_q_set(g, xi, xj, y) => {
                    kernel_k(g, n, ci, xi, y, cj, xj, k, ell)?
                }
                Some(_) => kernel_l(g, n, ci, cj, k, ell)?,
            };
            Ok((kernel * fi + (rn - kernel) * fj) / rn)
        } else {
            match mid {
                Some(y) if in_q_set(g, xi, xj, y) => {
                    // one leg open: the intermediate particles count toward
                    // the open side
                    if g.rate(xi, y) > 0.0 {
                        Ok(((k + ell) as Real * fi + (n - k - ell) as Real * fj) / n as Real)
                    } else {
                        Ok((k as Real * fi + (n - k) as Real * fj) / n as Real)
                    }
                }
                // no leg open (or no intermediate): split the middle evenly
                _ => {
                    let w = k as Real + ell as Real / 2.0;
                    Ok((w * fi + (n as Real - w) * fj) / n as Real)
                }
            }
        }
    }
}

/// Builds the test function for the given variant over the whole space.
pub fn build_test_function(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    variant: Variant,
) -> Result<TestFunction, VariationalError> {
    match &variant {
        Variant::Simple => build_simple(model, space).map(|values| TestFunction {
            values,
            variant,
        }),
        Variant::General { a_components } => {
            let kappa = model.graph().components().len();
            if a_components.is_empty() || a_components.len() >= kappa {
                return Err(VariationalError::TrivialPartition);
            }
            let mut in_a = vec![false; kappa];
            for &c in a_components {
                in_a[c] = true;
            }
            let ctx = GeneralCtx {
                model,
                kinds: classify_sites(model.graph()),
                in_a,
                resistances: ResistanceSet::build(model.graph(), model.particle_count()),
            };
            let values = space
                .configs()
                .iter()
                .map(|eta| ctx.value(eta))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TestFunction { values, variant })
        }
    }
}

/// The simple-case construction, kept verbatim as a cross-check against
/// the general one.
fn build_simple(
    model: &InclusionModel,
    space: &ConfigurationSpace,
) -> Result<Vec<Real>, VariationalError> {
    let g = model.graph();
    let (x1, x2, ys) = check_simple_shape(g)?;
    let n = model.particle_count();
    let rn = match resistance_discrete(g, n, 0, 1) {
        Resistance::Finite(v) if v > 0.0 => v,
        _ => {
            return Err(VariationalError::ConditionViolated(
                "simple shape must have open channels".into(),
            ))
        }
    };
    let half = n / 2;
    let values = space
        .configs()
        .iter()
        .map(|eta| {
            let k = eta[x1] as usize;
            let a = eta[x2] as usize;
            let occupied_mids: Vec<usize> = ys.iter().copied().filter(|&y| eta[y] > 0).collect();
            if k >= 1 && a == 0 && occupied_mids.len() <= 1 {
                return Ok(1.0); // 𝓐^{x₁,y_p} side, including ξ^{x₁}
            }
            if k == 0 && a >= 1 && occupied_mids.len() <= 1 {
                return Ok(0.0);
            }
            if k >= 1 && a >= 1 && occupied_mids.len() <= 1 {
                // inside a three-site tube: K_p^{k,ℓ}/𝔯^N
                let (y, ell) = match occupied_mids.first() {
                    Some(&y) => (y, eta[y] as usize),
                    None => (ys[0], 0),
                };
                let kv = kernel_k(g, n, 0, x1, y, 1, x2, k, ell)?;
                return Ok(kv / rn);
            }
            // 𝓥_N: majority threshold on x₁
            Ok(if k > half { 1.0 } else { 0.0 })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(values)
}
