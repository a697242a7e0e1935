// SPDX-License-Identifier: MIT
//! Assembles exact capacities into mean transition rates between top
//! components, builds the first- and second-scale limit chains, derives the
//! coarser partition induced by the second-scale chain, and runs the ratio
//! and marginal diagnostics.

use thiserror::Error;

use crate::measure::{valley_mass, MeasureTable};
use crate::model::{condensate, ConfigurationSpace, InclusionModel};
use crate::num::expm;
use crate::potential::{capacity, EdgeList, SolveError};
use crate::simulate::{simulate_path, valley_of, SimulationRun};
use crate::variational::ResistanceSet;
use crate::Real;

/// Errors from the rate-matrix assembly.
#[derive(Debug, Error)]
pub enum AnalysisError {
    /// The capacity combination `½[Cap_i + Cap_j − Cap_{ij}]` came out
    /// negative beyond round-off, signalling inconsistent inputs.
    #[error("capacity combination for pair ({i},{j}) is negative: {value} (scale {scale})")]
    InconsistentCapacities { i: usize, j: usize, value: Real, scale: Real },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Which time scale a limit chain lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// θ₁ = 1/d: the chain of single top sites with the original rates.
    First,
    /// θ₂ = N/d²: the chain of top components with resistance rates.
    Second,
}

/// A continuous-time Markov chain on a handful of labelled states.
#[derive(Debug, Clone)]
pub struct LimitChain {
    pub scale: Scale,
    pub labels: Vec<String>,
    /// Row-major off-diagonal rates; `rate[i][i] = 0`.
    pub rate: Vec<Real>,
}

impl LimitChain {
    pub fn state_count(&self) -> usize {
        self.labels.len()
    }

    pub fn rate_of(&self, i: usize, j: usize) -> Real {
        self.rate[i * self.labels.len() + j]
    }

    /// Row-major generator matrix with `-Σ` diagonals.
    pub fn generator(&self) -> Vec<Real> {
        let k = self.labels.len();
        let mut g = self.rate.clone();
        for i in 0..k {
            let row_sum: Real = (0..k).filter(|&j| j != i).map(|j| g[i * k + j]).sum();
            g[i * k + i] = -row_sum;
        }
        g
    }

    /// Transition probabilities `P(t) = e^{tL}` by dense matrix exponential.
    pub fn transition_matrix(&self, t: Real) -> Vec<Real> {
        let k = self.labels.len();
        let g: Vec<Real> = self.generator().iter().map(|&v| v * t).collect();
        expm(&g, k)
    }
}

/// Builds the limit chain for the requested scale.
///
/// First scale: states are the top sites with the original rates restricted
/// to them. Second scale: states are the top components with rates
/// `1/(|S_i|·𝔯_{i,j})`; blocked pairs get rate 0.
pub fn limit_generator(model: &InclusionModel, scale: Scale, res: &ResistanceSet) -> LimitChain {
    let g = model.graph();
    match scale {
        Scale::First => {
            let stars = g.star_sites();
            let k = stars.len();
            let mut rate = vec![0.0; k * k];
            for (a, &x) in stars.iter().enumerate() {
                for (b, &y) in stars.iter().enumerate() {
                    if a != b {
                        rate[a * k + b] = g.rate(x, y);
                    }
                }
            }
            LimitChain {
                scale,
                labels: stars.iter().map(|&x| g.names()[x].clone()).collect(),
                rate,
            }
        }
        Scale::Second => {
            let comps = g.components();
            let k = comps.len();
            let mut rate = vec![0.0; k * k];
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        // blocked resistance means no transition on this scale
                        rate[i * k + j] =
                            res.continuum(i, j).inverse_or_zero() / comps[i].len() as Real;
                    }
                }
            }
            let labels = comps
                .iter()
                .map(|c| {
                    c.iter().map(|&x| g.names()[x].as_str()).collect::<Vec<_>>().join("+")
                })
                .collect();
            LimitChain { scale, labels, rate }
        }
    }
}

/// Connected components of the positive-rate graph of a second-scale chain:
/// the blocks of the coarser, third-level decomposition.
pub fn level3_partition(chain: &LimitChain) -> Vec<Vec<usize>> {
    let k = chain.state_count();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..k {
        for j in 0..k {
            if i != j && (chain.rate_of(i, j) > 0.0 || chain.rate_of(j, i) > 0.0) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); k];
    for i in 0..k {
        let r = find(&mut parent, i);
        blocks[r].push(i);
    }
    blocks.retain(|b| !b.is_empty());
    blocks.sort_by_key(|b| b[0]);
    blocks
}

/// Mean transition rates between top components together with their
/// normalization against the second-scale limits.
#[derive(Debug, Clone)]
pub struct RateMatrixReport {
    /// κ×κ row-major `r★(i,j)`, diagonal zero.
    pub r_star: Vec<Real>,
    /// `θ₂ · r★(i,j)`.
    pub normalized: Vec<Real>,
    /// Limit values `1/(|S_i|·𝔯_{i,j})`, blocked ↦ 0.
    pub target: Vec<Real>,
    /// Per-component ratio diagnostic (0 for singleton components).
    pub h1_ratios: Vec<Real>,
    pub component_count: usize,
}

/// Condensate state indices for the top sites of component `i`.
fn component_valley_indices(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    comp: usize,
) -> Vec<usize> {
    let g = model.graph();
    let s = g.site_count();
    let n = model.particle_count();
    g.components()[comp]
        .iter()
        .map(|&x| space.index_of(&condensate(s, n, x)).expect("valley enumerated"))
        .collect()
}

/// Assembles the mean rates from exact capacities:
/// `μ(𝓔²(i))·r★(i,j) = ½[Cap_i + Cap_j − Cap_{ij}]` with the convention
/// `Cap(·,∅) = 0`, clipping negative round-off at zero and rejecting
/// violations beyond `1e-8` relative.
pub fn mean_rate_via_capacities(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    table: &MeasureTable,
    edges: &EdgeList,
    res: &ResistanceSet,
) -> Result<RateMatrixReport, AnalysisError> {
    let g = model.graph();
    let comps = g.components();
    let k = comps.len();
    let valleys: Vec<Vec<usize>> = (0..k).map(|i| component_valley_indices(model, space, i)).collect();
    // Cap_i = Cap(𝓔²(i), 𝓔★ ∖ 𝓔²(i))
    let mut cap_single = vec![0.0; k];
    for i in 0..k {
        let sink: Vec<usize> =
            (0..k).filter(|&j| j != i).flat_map(|j| valleys[j].iter().copied()).collect();
        cap_single[i] = capacity(edges, space.len(), &valleys[i], &sink)?.capacity;
    }
    let mut r_star = vec![0.0; k * k];
    let mut normalized = vec![0.0; k * k];
    let mut target = vec![0.0; k * k];
    for i in 0..k {
        let mass = valley_mass(table, space, &comps[i]);
        for j in 0..k {
            if i == j {
                continue;
            }
            let source: Vec<usize> =
                valleys[i].iter().chain(valleys[j].iter()).copied().collect();
            let sink: Vec<usize> = (0..k)
                .filter(|&l| l != i && l != j)
                .flat_map(|l| valleys[l].iter().copied())
                .collect();
            let cap_pair = capacity(edges, space.len(), &source, &sink)?.capacity;
            let mut half = 0.5 * (cap_single[i] + cap_single[j] - cap_pair);
            let scale = cap_single[i].max(cap_single[j]).max(Real::MIN_POSITIVE);
            if half < 0.0 {
                if half < -1e-8 * scale {
                    return Err(AnalysisError::InconsistentCapacities {
                        i,
                        j,
                        value: half,
                        scale,
                    });
                }
                half = 0.0;
            }
            r_star[i * k + j] = half / mass;
            normalized[i * k + j] = model.theta2() * r_star[i * k + j];
            target[i * k + j] =
                res.continuum(i, j).inverse_or_zero() / comps[i].len() as Real;
        }
    }
    let mut h1_ratios = Vec::with_capacity(k);
    for i in 0..k {
        h1_ratios.push(h1_ratio(model, space, edges, i)?);
    }
    Ok(RateMatrixReport { r_star, normalized, target, h1_ratios, component_count: k })
}

/// Ratio of the component's exit capacity to the smallest capacity between
/// valley pairs inside it. Zero by convention for singleton components
/// (the infimum is over an empty set).
pub fn h1_ratio(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    edges: &EdgeList,
    comp: usize,
) -> Result<Real, AnalysisError> {
    let g = model.graph();
    let inside = component_valley_indices(model, space, comp);
    if inside.len() < 2 {
        return Ok(0.0);
    }
    let sink: Vec<usize> = (0..g.components().len())
        .filter(|&j| j != comp)
        .flat_map(|j| component_valley_indices(model, space, j))
        .collect();
    let exit = capacity(edges, space.len(), &inside, &sink)?.capacity;
    let mut inf = Real::INFINITY;
    for (a, &p) in inside.iter().enumerate() {
        for &q in inside.iter().skip(a + 1) {
            let c = capacity(edges, space.len(), &[p], &[q])?.capacity;
            inf = inf.min(c);
        }
    }
    Ok(exit / inf)
}

/// Monte Carlo check of the finite-dimensional marginals on the second time
/// scale against the limit chain's matrix exponential.
#[derive(Debug, Clone)]
pub struct MarginalCheck {
    /// The (rescaled) time grid.
    pub times: Vec<Real>,
    /// MC estimate of `P[η(θ₂ s) ∉ 𝓔★]` per grid point.
    pub outside_fraction: Vec<Real>,
    /// MC estimate of `P[η(θ₂ t) ∈ 𝓔²(A_k)]`, one row per grid point.
    pub mc_marginals: Vec<Vec<Real>>,
    /// The limit chain's marginals at the same times.
    pub limit_marginals: Vec<Vec<Real>>,
}

/// Runs `replicas` trajectories to each horizon `θ₂·t` from the condensate on
/// the first top site of `start_component` and compares the end-time component
/// marginals against `e^{t𝓛₂}` started at that component.
pub fn marginal_check(
    model: &InclusionModel,
    chain: &LimitChain,
    start_component: usize,
    times: &[Real],
    replicas: usize,
    seed: u64,
) -> MarginalCheck {
    use rayon::prelude::*;
    assert_eq!(chain.scale, Scale::Second, "marginals are a second-scale diagnostic");
    let g = model.graph();
    let k = chain.state_count();
    let start_site = g.components()[start_component][0];
    let start = condensate(g.site_count(), model.particle_count(), start_site);
    let theta2 = model.theta2();
    let mut outside_fraction = Vec::with_capacity(times.len());
    let mut mc_marginals = Vec::with_capacity(times.len());
    let mut limit_marginals = Vec::with_capacity(times.len());
    for (ti, &t) in times.iter().enumerate() {
        let tallies: Vec<Option<usize>> = (0..replicas as u64)
            .into_par_iter()
            .map(|rep| {
                let run = SimulationRun::new(seed.wrapping_add(ti as u64), rep)
                    .with_max_time(theta2 * t);
                let out = simulate_path(model, &run, &start, |_| false);
                valley_of(model, &out.final_state).and_then(|x| g.component_of(x))
            })
            .collect();
        let mut counts = vec![0usize; k];
        let mut outside = 0usize;
        for v in tallies {
            match v {
                Some(c) => counts[c] += 1,
                None => outside += 1,
            }
        }
        outside_fraction.push(outside as Real / replicas as Real);
        mc_marginals.push(counts.iter().map(|&c| c as Real / replicas as Real).collect());
        let p = chain.transition_matrix(t);
        limit_marginals.push(p[start_component * k..(start_component + 1) * k].to_vec());
    }
    MarginalCheck { times: times.to_vec(), outside_fraction, mc_marginals, limit_marginals }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::stationary_measure;
    use crate::model::SiteGraph;

    fn fig1_model(n: usize, d: Real) -> InclusionModel {
        let g = SiteGraph::new(
            vec!["1".into(), "2".into(), "3".into()],
            vec![0.0, 1.0, 0.0, 2.0, 0.0, 2.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.5, 1.0],
        )
        .unwrap();
        InclusionModel::new(g, n, d).unwrap()
    }

    fn fig2_graph() -> SiteGraph {
        // four top sites a, b, c, e; y1 bridges a—b, y2 bridges c—e, and the
        // only other connection is y1—y2
        let names = vec!["a".into(), "b".into(), "c".into(), "e".into(), "y1".into(), "y2".into()];
        let mut rate = vec![0.0; 36];
        let mut set = |x: usize, y: usize, v: Real| rate[x * 6 + y] = v;
        for (top, mid) in [(0usize, 4usize), (1, 4), (2, 5), (3, 5)] {
            set(top, mid, 1.0);
            set(mid, top, 2.0);
        }
        set(4, 5, 1.0);
        set(5, 4, 1.0);
        SiteGraph::new(names, rate, vec![1.0, 1.0, 1.0, 1.0, 0.5, 0.5]).unwrap()
    }

    #[test]
    fn first_scale_is_null_chain_for_fig1() {
        let model = fig1_model(4, 0.1);
        let res = ResistanceSet::build(model.graph(), 4);
        let chain = limit_generator(&model, Scale::First, &res);
        assert_eq!(chain.labels, vec!["1", "3"]);
        assert!(chain.rate.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn second_scale_rates_for_fig1() {
        // 𝔯 = ½ and singleton components, so both rates are 2
        let model = fig1_model(4, 0.1);
        let res = ResistanceSet::build(model.graph(), 4);
        let chain = limit_generator(&model, Scale::Second, &res);
        assert_eq!(chain.state_count(), 2);
        assert!((chain.rate_of(0, 1) - 2.0).abs() < 1e-9);
        assert!((chain.rate_of(1, 0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn two_state_marginal_closed_form() {
        // rate-2 symmetric chain: P(stay at t) = ½(1 + e^{−4t})
        let model = fig1_model(4, 0.1);
        let res = ResistanceSet::build(model.graph(), 4);
        let chain = limit_generator(&model, Scale::Second, &res);
        for t in [0.0, 0.1, 0.25, 1.0] {
            let p = chain.transition_matrix(t);
            let exact = 0.5 * (1.0 + (-4.0 * t).exp());
            assert!((p[0] - exact).abs() < 1e-12, "t={t}: {} vs {exact}", p[0]);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn level3_blocks() {
        // fig2 shape: open pairs (a,b) and (c,e) only → two blocks
        let g = fig2_graph();
        let model = InclusionModel::new(g, 3, 0.1).unwrap();
        let res = ResistanceSet::build(model.graph(), 3);
        let chain = limit_generator(&model, Scale::Second, &res);
        let blocks = level3_partition(&chain);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].len() + blocks[1].len(), 4);
        // fig1: all pairs open → single block
        let m1 = fig1_model(4, 0.1);
        let r1 = ResistanceSet::build(m1.graph(), 4);
        let c1 = limit_generator(&m1, Scale::Second, &r1);
        assert_eq!(level3_partition(&c1).len(), 1);
    }

    #[test]
    fn second_scale_chain_is_reversible() {
        let g = fig2_graph();
        let model = InclusionModel::new(g, 3, 0.1).unwrap();
        let res = ResistanceSet::build(model.graph(), 3);
        let chain = limit_generator(&model, Scale::Second, &res);
        let comps = model.graph().components();
        let k = chain.state_count();
        for i in 0..k {
            for j in 0..k {
                let lhs = comps[i].len() as Real * chain.rate_of(i, j);
                let rhs = comps[j].len() as Real * chain.rate_of(j, i);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_rates_match_resistance_target() {
        // θ₂·r★(1,2) approaches 1/(1·𝔯) = 2 as N grows
        let mut errs = Vec::new();
        for n in [8usize, 16, 32] {
            let d = 1.0 / (n * n) as Real;
            let model = fig1_model(n, d);
            let space = ConfigurationSpace::enumerate(&model).unwrap();
            let table = stationary_measure(&model, &space);
            let edges = EdgeList::build(&model, &space, &table);
            let res = ResistanceSet::build(model.graph(), n);
            let report = mean_rate_via_capacities(&model, &space, &table, &edges, &res).unwrap();
            assert_eq!(report.component_count, 2);
            assert_eq!(report.r_star[0], 0.0); // diagonal
            // symmetric model: equal masses → equal rates
            assert!((report.r_star[1] - report.r_star[2]).abs() < 1e-9 * report.r_star[1]);
            assert!((report.target[1] - 2.0).abs() < 1e-9);
            errs.push((report.normalized[1] - 2.0).abs());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "errors {errs:?}");
        assert!(errs[2] < 0.5, "errors {errs:?}");
    }

    #[test]
    fn h1_ratio_singleton_is_zero() {
        let n = 6;
        let model = fig1_model(n, 0.1);
        let space = ConfigurationSpace::enumerate(&model).unwrap();
        let table = stationary_measure(&model, &space);
        let edges = EdgeList::build(&model, &space, &table);
        assert_eq!(h1_ratio(&model, &space, &edges, 0).unwrap(), 0.0);
    }

    #[test]
    fn marginal_check_at_time_zero_and_quarter() {
        let n = 8;
        let model = fig1_model(n, 0.1);
        let res = ResistanceSet::build(model.graph(), n);
        let chain = limit_generator(&model, Scale::Second, &res);
        let check = marginal_check(&model, &chain, 0, &[0.0, 0.25], 400, 99);
        // t = 0: still at the start valley
        assert_eq!(check.mc_marginals[0][0], 1.0);
        assert_eq!(check.outside_fraction[0], 0.0);
        assert!((check.limit_marginals[0][0] - 1.0).abs() < 1e-12);
        // t = 0.25: limit is ½(1+e^{-1}); finite-N bias at d=0.1 is sizeable,
        // so only the limit value and MC normalization are checked here
        let exact = 0.5 * (1.0 + (-1.0 as Real).exp());
        assert!((check.limit_marginals[1][0] - exact).abs() < 1e-12);
        let probs = &check.mc_marginals[1];
        assert!((probs[0] + probs[1] + check.outside_fraction[1] - 1.0).abs() < 1e-12);
    }
}
