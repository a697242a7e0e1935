// SPDX-License-Identifier: MIT
//! Exact potential theory on the configuration graph.
//!
//! Everything here works with conductances `c(η,ζ) = μ(η)q(η,ζ)`, which are
//! symmetric by reversibility. Equilibrium potentials and mean hitting
//! times are linear solves against the μ-symmetrized generator; capacities
//! come out as Dirichlet forms and are bracketed by test functions (upper)
//! and test flows through the generalized Thomson principle (lower).

use crate::measure::MeasureTable;
use crate::model::{ConfigurationSpace, InclusionModel};
use crate::num::{solve_dense, solve_ic_cg, SparseSym};
use crate::Real;
use std::collections::HashMap;
use thiserror::Error;

/// Above this many unknowns the equilibrium solve switches from dense LU to
/// diagonally preconditioned conjugate gradient.
pub const DENSE_SOLVE_LIMIT: usize = 2500;
/// Relative residual target for iterative solves.
pub const CG_TOLERANCE: Real = 1e-10;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("linear solve did not converge: {iterations} iterations, relative residual {residual:.3e}")]
    SolveDiverged { iterations: usize, residual: Real },
    #[error("source and sink sets must be disjoint and the source nonempty")]
    BadBoundarySets,
    #[error("flow carries value {value} on the zero-rate edge ({i},{j})")]
    DivisionByZeroRate { i: usize, j: usize, value: Real },
    #[error("the zero flow admits no Thomson bound")]
    TrivialFlow,
    #[error("tube flatness requires r({c},{a}) > r({a},{c}) > 0, got {into:.3} vs {out:.3}")]
    RatioNotContracting { a: String, c: String, into: Real, out: Real },
}

/// One unordered configuration edge: endpoints `i < j`, the particle move
/// `x → y` realizing it from side `i`, and the conductance `μ(η)q(η,ζ)`.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    pub i: u32,
    pub j: u32,
    pub x: u16,
    pub y: u16,
    pub cond: Real,
}

/// Every unordered edge of the configuration graph, enumerated once, plus a
/// conductance lookup keyed by the endpoint pair.
pub struct EdgeList {
    edges: Vec<Edge>,
    cond_of: HashMap<(u32, u32), Real>,
    incident: Vec<Vec<u32>>,
}

impl EdgeList {
    pub fn build(model: &InclusionModel, space: &ConfigurationSpace, table: &MeasureTable) -> Self {
        let s = model.graph().site_count();
        let mut edges = Vec::new();
        for (i, eta) in space.configs().iter().enumerate() {
            let mu = table.probability(i);
            for x in 0..s {
                if eta[x] == 0 {
                    continue;
                }
                for y in 0..s {
                    if y == x || model.graph().rate(x, y) == 0.0 {
                        continue;
                    }
                    let zeta = crate::model::sigma_move(eta, x, y);
                    let j = space.index_of(&zeta).expect("move stays inside the space");
                    // each unordered edge is seen from both sides; keep one
                    if j > i {
                        edges.push(Edge {
                            i: i as u32,
                            j: j as u32,
                            x: x as u16,
                            y: y as u16,
                            cond: mu * model.jump_rate(eta, x, y),
                        });
                    }
                }
            }
        }
        let cond_of = edges.iter().map(|e| ((e.i, e.j), e.cond)).collect();
        let mut incident = vec![Vec::new(); space.len()];
        for (k, e) in edges.iter().enumerate() {
            incident[e.i as usize].push(k as u32);
            incident[e.j as usize].push(k as u32);
        }
        EdgeList { edges, cond_of, incident }
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
    /// Conductance across the unordered pair, or `None` off the edge set.
    pub fn conductance(&self, i: u32, j: u32) -> Option<Real> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.cond_of.get(&key).copied()
    }
    pub fn incident(&self, i: usize) -> &[u32] {
        &self.incident[i]
    }
}

/// `½ Σ μ q (Δf)²`, the half absorbed by counting each edge once.
pub fn dirichlet_form(edges: &EdgeList, f: &[Real]) -> Real {
    edges
        .edges
        .iter()
        .map(|e| {
            let df = f[e.i as usize] - f[e.j as usize];
            e.cond * df * df
        })
        .sum()
}

/// Antisymmetric edge function stored in the canonical `i < j` orientation.
#[derive(Debug, Clone, Default)]
pub struct DiscreteFlow {
    values: HashMap<(u32, u32), Real>,
}

impl DiscreteFlow {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `v` to the flow from `i` to `j` (signed by orientation).
    pub fn add(&mut self, i: u32, j: u32, v: Real) {
        debug_assert_ne!(i, j);
        let (key, signed) = if i < j { ((i, j), v) } else { ((j, i), -v) };
        *self.values.entry(key).or_insert(0.0) += signed;
    }

    /// The flow from `i` to `j`; zero off the stored support.
    pub fn get(&self, i: u32, j: u32) -> Real {
        let (key, sign) = if i < j { ((i, j), 1.0) } else { ((j, i), -1.0) };
        sign * self.values.get(&key).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = (&(u32, u32), &Real)> {
        self.values.iter()
    }

    pub fn is_trivial(&self) -> bool {
        self.values.values().all(|v| *v == 0.0)
    }

    /// Net outflow per configuration.
    pub fn divergence_all(&self, n_states: usize) -> Vec<Real> {
        let mut div = vec![0.0; n_states];
        for (&(i, j), &v) in &self.values {
            div[i as usize] += v;
            div[j as usize] -= v;
        }
        div
    }
}

/// The flow `Φ_f(η,ζ) = μ(η)q(η,ζ)(f(η) − f(ζ))` induced by a function.
pub fn flow_of_function(edges: &EdgeList, f: &[Real]) -> DiscreteFlow {
    let mut flow = DiscreteFlow::new();
    for e in &edges.edges {
        let v = e.cond * (f[e.i as usize] - f[e.j as usize]);
        if v != 0.0 {
            flow.add(e.i, e.j, v);
        }
    }
    flow
}

/// `‖φ‖² = Σ_{edges} φ(η,ζ)²/(μq)`, each unordered edge once.
pub fn flow_norm_squared(edges: &EdgeList, flow: &DiscreteFlow) -> Result<Real, SolveError> {
    let mut acc = 0.0;
    for (&(i, j), &v) in &flow.values {
        if v == 0.0 {
            continue;
        }
        match edges.conductance(i, j) {
            Some(c) if c > 0.0 => acc += v * v / c,
            _ => {
                return Err(SolveError::DivisionByZeroRate {
                    i: i as usize,
                    j: j as usize,
                    value: v,
                })
            }
        }
    }
    Ok(acc)
}

/// `⟨φ,ψ⟩ = Σ_{edges} φψ/(μq)` over the union of supports.
pub fn flow_inner_product(
    edges: &EdgeList,
    a: &DiscreteFlow,
    b: &DiscreteFlow,
) -> Result<Real, SolveError> {
    let mut acc = 0.0;
    for (&(i, j), &va) in &a.values {
        let vb = b.values.get(&(i, j)).copied().unwrap_or(0.0);
        if va == 0.0 || vb == 0.0 {
            continue;
        }
        match edges.conductance(i, j) {
            Some(c) if c > 0.0 => acc += va * vb / c,
            _ => {
                return Err(SolveError::DivisionByZeroRate {
                    i: i as usize,
                    j: j as usize,
                    value: va,
                })
            }
        }
    }
    Ok(acc)
}

/// Equilibrium potential between two configuration sets: harmonic off the
/// boundary, 1 on the source, 0 on the sink.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub values: Vec<Real>,
    pub source_set: Vec<usize>,
    pub sink_set: Vec<usize>,
    /// Max over interior states of `|Σ_ζ c(η,ζ)(h(η)−h(ζ))|` divided by the
    /// total incident conductance — a scale-free harmonicity defect.
    pub harmonic_residual: Real,
    pub solver_iterations: usize,
}

enum BoundaryRole {
    Interior(usize),
    Source,
    Sink,
}

fn classify_boundary(
    n_states: usize,
    source: &[usize],
    sink: &[usize],
) -> Result<(Vec<BoundaryRole>, usize), SolveError> {
    let mut roles: Vec<Option<bool>> = vec![None; n_states]; // true = source
    for &i in source {
        roles[i] = Some(true);
    }
    for &i in sink {
        if roles[i] == Some(true) {
            return Err(SolveError::BadBoundarySets);
        }
        roles[i] = Some(false);
    }
    let mut out = Vec::with_capacity(n_states);
    let mut n_interior = 0;
    for r in roles {
        out.push(match r {
            None => {
                n_interior += 1;
                BoundaryRole::Interior(n_interior - 1)
            }
            Some(true) => BoundaryRole::Source,
            Some(false) => BoundaryRole::Sink,
        });
    }
    Ok((out, n_interior))
}

/// Solves the symmetric interior system `M u = rhs` where `M` has diagonal
/// `Σ c` and off-diagonal `−c` between interior states. Returns the interior
/// solution and the iteration count.
fn solve_interior(
    edges: &EdgeList,
    roles: &[BoundaryRole],
    n_interior: usize,
    rhs: &[Real],
) -> Result<(Vec<Real>, usize), SolveError> {
    if n_interior == 0 {
        return Ok((Vec::new(), 0));
    }
    if n_interior <= DENSE_SOLVE_LIMIT {
        let mut a = vec![0.0; n_interior * n_interior];
        let mut b = rhs.to_vec();
        for e in edges.edges() {
            let (ri, rj) = (&roles[e.i as usize], &roles[e.j as usize]);
            match (ri, rj) {
                (BoundaryRole::Interior(p), BoundaryRole::Interior(q)) => {
                    a[p * n_interior + p] += e.cond;
                    a[q * n_interior + q] += e.cond;
                    a[p * n_interior + q] -= e.cond;
                    a[q * n_interior + p] -= e.cond;
                }
                (BoundaryRole::Interior(p), _) => a[p * n_interior + p] += e.cond,
                (_, BoundaryRole::Interior(q)) => a[q * n_interior + q] += e.cond,
                _ => {}
            }
        }
        if !solve_dense(&mut a, &mut b, n_interior) {
            return Err(SolveError::SolveDiverged { iterations: 0, residual: Real::INFINITY });
        }
        Ok((b, 0))
    } else {
        let mut triplets: Vec<(u32, u32, Real)> = Vec::new();
        let mut diag = vec![0.0; n_interior];
        for e in edges.edges() {
            let (ri, rj) = (&roles[e.i as usize], &roles[e.j as usize]);
            match (ri, rj) {
                (BoundaryRole::Interior(p), BoundaryRole::Interior(q)) => {
                    diag[*p] += e.cond;
                    diag[*q] += e.cond;
                    let (p, q) = (*p as u32, *q as u32);
                    triplets.push((p, q, -e.cond));
                    triplets.push((q, p, -e.cond));
                }
                (BoundaryRole::Interior(p), _) => diag[*p] += e.cond,
                (_, BoundaryRole::Interior(q)) => diag[*q] += e.cond,
                _ => {}
            }
        }
        for (p, &v) in diag.iter().enumerate() {
            triplets.push((p as u32, p as u32, v));
        }
        let mat = SparseSym::from_triplets(n_interior, &mut triplets);
        let cap = 50 * (n_interior as Real).sqrt().ceil() as usize;
        let out = solve_ic_cg(&mat, rhs, CG_TOLERANCE, cap);
        if !out.converged {
            return Err(SolveError::SolveDiverged {
                iterations: out.iterations,
                residual: out.relative_residual,
            });
        }
        Ok((out.x, out.iterations))
    }
}

/// Expands an interior solution to the full state space with the given
/// boundary values and measures the harmonicity defect.
fn assemble_field(
    edges: &EdgeList,
    roles: &[BoundaryRole],
    interior: &[Real],
    source_value: Real,
    sink_value: Real,
    rhs_full: impl Fn(usize) -> Real,
) -> (Vec<Real>, Real) {
    let values: Vec<Real> = roles
        .iter()
        .map(|r| match r {
            BoundaryRole::Interior(p) => interior[*p],
            BoundaryRole::Source => source_value,
            BoundaryRole::Sink => sink_value,
        })
        .collect();
    let n = values.len();
    let mut defect = vec![0.0; n];
    let mut weight = vec![0.0; n];
    for e in edges.edges() {
        let d = e.cond * (values[e.i as usize] - values[e.j as usize]);
        defect[e.i as usize] += d;
        defect[e.j as usize] -= d;
        weight[e.i as usize] += e.cond;
        weight[e.j as usize] += e.cond;
    }
    let mut residual: Real = 0.0;
    for (idx, r) in roles.iter().enumerate() {
        if let BoundaryRole::Interior(_) = r {
            if weight[idx] > 0.0 {
                residual = residual.max((defect[idx] - rhs_full(idx)).abs() / weight[idx]);
            }
        }
    }
    (values, residual)
}

/// Solves for the equilibrium potential `h` with `h = 1` on `source` and
/// `h = 0` on `sink`.
pub fn solve_equilibrium_potential(
    edges: &EdgeList,
    n_states: usize,
    source: &[usize],
    sink: &[usize],
) -> Result<PotentialField, SolveError> {
    if sink.is_empty() || source.is_empty() {
        return Err(SolveError::BadBoundarySets);
    }
    let (roles, n_interior) = classify_boundary(n_states, source, sink)?;
    // rhs picks up the source boundary values: Σ_{ζ∈A} c(η,ζ)·1
    let mut rhs = vec![0.0; n_interior];
    for e in edges.edges() {
        match (&roles[e.i as usize], &roles[e.j as usize]) {
            (BoundaryRole::Interior(p), BoundaryRole::Source) => rhs[*p] += e.cond,
            (BoundaryRole::Source, BoundaryRole::Interior(q)) => rhs[*q] += e.cond,
            _ => {}
        }
    }
    let (interior, iterations) = solve_interior(edges, &roles, n_interior, &rhs)?;
    let (values, harmonic_residual) = assemble_field(edges, &roles, &interior, 1.0, 0.0, |_| 0.0);
    if harmonic_residual > 1e-9 {
        return Err(SolveError::SolveDiverged { iterations, residual: harmonic_residual });
    }
    Ok(PotentialField {
        values,
        source_set: source.to_vec(),
        sink_set: sink.to_vec(),
        harmonic_residual,
        solver_iterations: iterations,
    })
}

/// Capacity between two configuration sets with optional variational
/// brackets attached by the caller.
#[derive(Debug, Clone)]
pub struct CapacityReport {
    pub capacity: Real,
    pub potential: PotentialField,
    pub lower_bound: Option<Real>,
    pub upper_bound: Option<Real>,
}

/// `Cap(A,B) = D(h_{A,B})`. An empty sink is the degenerate case with
/// capacity zero (the potential is constant one).
pub fn capacity(
    edges: &EdgeList,
    n_states: usize,
    source: &[usize],
    sink: &[usize],
) -> Result<CapacityReport, SolveError> {
    if sink.is_empty() {
        return Ok(CapacityReport {
            capacity: 0.0,
            potential: PotentialField {
                values: vec![1.0; n_states],
                source_set: source.to_vec(),
                sink_set: Vec::new(),
                harmonic_residual: 0.0,
                solver_iterations: 0,
            },
            lower_bound: None,
            upper_bound: None,
        });
    }
    let potential = solve_equilibrium_potential(edges, n_states, source, sink)?;
    let capacity = dirichlet_form(edges, &potential.values);
    Ok(CapacityReport { capacity, potential, lower_bound: None, upper_bound: None })
}

/// Generalized Thomson principle: `[Σ_η h(η)(div ψ)(η)]² / ‖ψ‖²` is a lower
/// bound on the capacity, for any nontrivial compatible flow.
pub fn generalized_thomson_bound(
    edges: &EdgeList,
    psi: &DiscreteFlow,
    h: &PotentialField,
) -> Result<Real, SolveError> {
    if psi.is_trivial() {
        return Err(SolveError::TrivialFlow);
    }
    let norm_sq = flow_norm_squared(edges, psi)?;
    if norm_sq == 0.0 {
        return Err(SolveError::TrivialFlow);
    }
    let div = psi.divergence_all(h.values.len());
    let num: Real = h.values.iter().zip(&div).map(|(hv, dv)| hv * dv).sum();
    Ok(num * num / norm_sq)
}

/// Mean hitting time of `target` from `start`: solves the μ-symmetrized
/// system `Σ_ζ c(η,ζ)(u(η)−u(ζ)) = μ(η)` off the target with `u = 0` on it.
pub fn exact_mean_hitting(
    edges: &EdgeList,
    table: &MeasureTable,
    n_states: usize,
    start: usize,
    target: &[usize],
) -> Result<Real, SolveError> {
    if target.is_empty() {
        return Err(SolveError::BadBoundarySets);
    }
    if target.contains(&start) {
        return Ok(0.0);
    }
    let (roles, n_interior) = classify_boundary(n_states, &[], target)?;
    let mut rhs = vec![0.0; n_interior];
    for (idx, r) in roles.iter().enumerate() {
        if let BoundaryRole::Interior(p) = r {
            rhs[*p] = table.probability(idx);
        }
    }
    let (interior, iterations) = solve_interior(edges, &roles, n_interior, &rhs)?;
    let (values, residual) = assemble_field(edges, &roles, &interior, 0.0, 0.0, |idx| {
        table.probability(idx)
    });
    // scale-free check: rhs entries are O(μ); defect weighting already
    // normalizes by conductance, so accept a modest absolute tolerance
    if !values[start].is_finite() {
        return Err(SolveError::SolveDiverged { iterations, residual });
    }
    Ok(values[start])
}

/// Residuals of the one-dimensional harmonic recursion along the `x ↔ y`
/// tube: for `i = 1..N−1`, how far `h(ζ_i)` is from the `r`-weighted average
/// of its tube neighbors. `ζ_i` puts `i` particles on `y`, the rest on `x`.
pub fn tube_residual_check(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    h: &PotentialField,
    x: usize,
    y: usize,
) -> Vec<Real> {
    let g = model.graph();
    let (fwd, bwd) = (g.rate(x, y), g.rate(y, x));
    assert!(fwd + bwd > 0.0, "tube needs at least one positive rate");
    let n = model.particle_count();
    let s = g.site_count();
    let hv = |i: usize| {
        let idx = space
            .index_of(&crate::model::tube_point(s, n, x, y, i))
            .expect("tube point enumerated");
        h.values[idx]
    };
    (1..n)
        .map(|i| (hv(i) - (fwd * hv(i + 1) + bwd * hv(i - 1)) / (fwd + bwd)).abs())
        .collect()
}

/// Flatness of the equilibrium potential along the half-tubes toward a
/// non-star site `c`: returns `(sup |h(ζ_i^{a,c}) − 1|, sup h(ζ_i^{b,c}))`
/// over `0 ≤ i ≤ ⌊N/2⌋`, requiring the inward rate to dominate.
pub fn tube_flatness_check(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    h: &PotentialField,
    a: usize,
    b: usize,
    c: usize,
) -> Result<(Real, Real), SolveError> {
    let g = model.graph();
    for &site in &[a, b] {
        let into = g.rate(c, site);
        let out = g.rate(site, c);
        if !(into > out && out > 0.0) {
            return Err(SolveError::RatioNotContracting {
                a: g.names()[site].clone(),
                c: g.names()[c].clone(),
                into,
                out,
            });
        }
    }
    let n = model.particle_count();
    let s = g.site_count();
    let value = |from: usize, i: usize| {
        let idx = space
            .index_of(&crate::model::tube_point(s, n, from, c, i))
            .expect("tube point enumerated");
        h.values[idx]
    };
    let mut sup_a: Real = 0.0;
    let mut sup_b: Real = 0.0;
    for i in 0..=n / 2 {
        sup_a = sup_a.max((value(a, i) - 1.0).abs());
        sup_b = sup_b.max(value(b, i));
    }
    Ok((sup_a, sup_b))
}
