// SPDX-License-Identifier: MIT
//! Effective resistances between metastable components.
//!
//! A transition between components `i` and `j` is a chain of `N` serial
//! conductors indexed by `t`; each conductor is a parallel bank of channels
//! `(n, m, p)` carrying one particle from `x_{i,n}` through `y_p` to
//! `x_{j,m}`. The geometric-series weight `1/(1 − m★(y_p))` accounts for
//! the excursions the particle makes back and forth on the way. Both the
//! continuum integral and its discretized sum are provided, together with
//! the K and L interpolation kernels built from the same denominators.

use crate::model::SiteGraph;
use crate::num::adaptive_simpson;
use crate::Real;
use thiserror::Error;

/// Absolute tolerance for the resistance quadrature.
pub const QUADRATURE_TOL: Real = 1e-10;

#[derive(Debug, Error)]
pub enum VariationalError {
    #[error("components ({0},{1}) have every channel blocked; the kernel is undefined")]
    ChannelUndefined(usize, usize),
    #[error("model does not match the simple-case shape: {0}")]
    ConditionViolated(String),
    #[error("no open channel crosses the partition; the test flow is trivial")]
    TrivialFlowForPartition,
    #[error("component partition must be nontrivial (both sides nonempty)")]
    TrivialPartition,
}

/// A resistance value: finite, or infinite because every channel is blocked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resistance {
    Finite(Real),
    Blocked,
}

impl Resistance {
    pub fn finite(&self) -> Option<Real> {
        match self {
            Resistance::Finite(v) => Some(*v),
            Resistance::Blocked => None,
        }
    }
    pub fn is_blocked(&self) -> bool {
        matches!(self, Resistance::Blocked)
    }
    /// The limit-chain convention: a blocked pair carries rate zero, i.e.
    /// `1/∞ = 0`.
    pub fn inverse_or_zero(&self) -> Real {
        match self {
            Resistance::Finite(v) => 1.0 / v,
            Resistance::Blocked => 0.0,
        }
    }
}

/// Serial resistance of `a` steps against rate `r`: zero for `a = 0`
/// regardless of the rate, infinite (`None`) for `r = 0` otherwise.
fn leg(a: Real, r: Real) -> Option<Real> {
    if a == 0.0 {
        Some(0.0)
    } else if r == 0.0 {
        None
    } else {
        Some(a / r)
    }
}

/// Conductance of one channel `(n, m, p)` at leg lengths `(a, b)`:
/// `1/((1 − m★(y_p))(a/r_i + b/r_j))`, zero when a leg is blocked,
/// infinite (`None`) when the total resistance vanishes.
fn channel_conductance(
    m_star_y: Real,
    a: Real,
    r_in: Real,
    b: Real,
    r_out: Real,
) -> Option<Real> {
    match (leg(a, r_in), leg(b, r_out)) {
        (Some(ra), Some(rb)) => {
            let total = (1.0 - m_star_y) * (ra + rb);
            if total == 0.0 {
                None // infinite conductance: the serial chain has length 0
            } else {
                Some(1.0 / total)
            }
        }
        _ => Some(0.0),
    }
}

/// Total conductance of the parallel bank over all `(n, m, p)` at leg
/// lengths `(a, b)`. `None` means infinite.
pub(crate) fn bank_conductance(graph: &SiteGraph, i: usize, j: usize, a: Real, b: Real) -> Option<Real> {
    let mut total = 0.0;
    for &xi in &graph.components()[i] {
        for &xj in &graph.components()[j] {
            for &y in graph.non_star_sites() {
                match channel_conductance(
                    graph.m_star(y),
                    a,
                    graph.rate(xi, y),
                    b,
                    graph.rate(xj, y),
                ) {
                    Some(c) => total += c,
                    None => return None,
                }
            }
        }
    }
    Some(total)
}

/// Whether any channel between components `i` and `j` is open, i.e. some
/// `(n, m, p)` has both rates positive.
pub fn has_open_channel(graph: &SiteGraph, i: usize, j: usize) -> bool {
    graph.components()[i].iter().any(|&xi| {
        graph.components()[j].iter().any(|&xj| {
            graph
                .non_star_sites()
                .iter()
                .any(|&y| graph.rate(xi, y) > 0.0 && graph.rate(xj, y) > 0.0)
        })
    })
}

/// The continuum resistance: quadrature of the inverse bank conductance
/// over the interpolation parameter `t ∈ [0,1]`.
pub fn resistance_continuum(graph: &SiteGraph, i: usize, j: usize) -> Resistance {
    assert_ne!(i, j, "resistance is defined between distinct components");
    if !has_open_channel(graph, i, j) {
        return Resistance::Blocked;
    }
    let integrand = |t: Real| {
        let mut total = 0.0;
        for &xi in &graph.components()[i] {
            for &xj in &graph.components()[j] {
                for &y in graph.non_star_sites() {
                    let (ri, rj) = (graph.rate(xi, y), graph.rate(xj, y));
                    // closed channels carry no conductance in the continuum
                    if ri > 0.0 && rj > 0.0 {
                        total += 1.0
                            / ((1.0 - graph.m_star(y)) * ((1.0 - t) / ri + t / rj));
                    }
                }
            }
        }
        1.0 / total
    };
    Resistance::Finite(adaptive_simpson(integrand, 0.0, 1.0, QUADRATURE_TOL))
}

/// The discrete resistance: `Σ_{t=1}^N` of the inverse bank conductance at
/// leg lengths `(N−t, t−1)`; scales like `N²` times the continuum value.
pub fn resistance_discrete(graph: &SiteGraph, n: usize, i: usize, j: usize) -> Resistance {
    assert_ne!(i, j, "resistance is defined between distinct components");
    if !has_open_channel(graph, i, j) {
        return Resistance::Blocked;
    }
    let mut sum = 0.0;
    for t in 1..=n {
        match bank_conductance(graph, i, j, (n - t) as Real, (t - 1) as Real) {
            Some(c) if c > 0.0 => sum += 1.0 / c,
            // zero conductance cannot happen with an open channel and
            // positive legs; infinite conductance contributes nothing
            _ => {}
        }
    }
    Resistance::Finite(sum)
}

/// Precomputed resistances between every ordered pair of components, with
/// the open-pair index set `I`.
#[derive(Debug, Clone)]
pub struct ResistanceSet {
    kappa_star: usize,
    continuum: Vec<Resistance>,
    discrete: Vec<Resistance>,
}

impl ResistanceSet {
    pub fn build(graph: &SiteGraph, n: usize) -> Self {
        let k = graph.components().len();
        let mut continuum = Vec::with_capacity(k * k);
        let mut discrete = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continuum.push(Resistance::Blocked);
                    discrete.push(Resistance::Blocked);
                } else {
                    continuum.push(resistance_continuum(graph, i, j));
                    discrete.push(resistance_discrete(graph, n, i, j));
                }
            }
        }
        ResistanceSet { kappa_star: k, continuum, discrete }
    }

    pub fn component_count(&self) -> usize {
        self.kappa_star
    }
    pub fn continuum(&self, i: usize, j: usize) -> Resistance {
        self.continuum[i * self.kappa_star + j]
    }
    pub fn discrete(&self, i: usize, j: usize) -> Resistance {
        self.discrete[i * self.kappa_star + j]
    }
    /// Whether `(i,j)` belongs to the open-pair set `I`.
    pub fn is_open(&self, i: usize, j: usize) -> bool {
        i != j && !self.continuum[i * self.kappa_star + j].is_blocked()
    }
}

/// The sites `P_{i,n,j,m}` (both legs open) for a concrete channel pair.
pub fn p_set(graph: &SiteGraph, xi: usize, xj: usize) -> Vec<usize> {
    graph
        .non_star_sites()
        .iter()
        .enumerate()
        .filter(|&(_, &y)| graph.rate(xi, y) > 0.0 && graph.rate(xj, y) > 0.0)
        .map(|(p, _)| p)
        .collect()
}

/// Whether `y_p ∈ Q_{i,n,j,m}` (at least one leg open).
pub fn in_q_set(graph: &SiteGraph, xi: usize, xj: usize, y: usize) -> bool {
    graph.rate(xi, y) + graph.rate(xj, y) > 0.0
}

/// Splits a leg-length pair into the fraction carried by each side of one
/// channel, honoring the blocked-leg conventions: an infinite numerator
/// over the infinite denominator is 1, a finite numerator over the
/// infinite denominator is 0.
fn split_fractions(a: Real, r_in: Real, b: Real, r_out: Real) -> (Real, Real) {
    match (leg(a, r_in), leg(b, r_out)) {
        (Some(ra), Some(rb)) => {
            let total = ra + rb;
            if total == 0.0 {
                // the bank conductance is infinite here and the term is
                // dropped by the caller; any split works
                (0.0, 0.0)
            } else {
                (ra / total, rb / total)
            }
        }
        (None, Some(_)) => (1.0, 0.0),
        (Some(_), None) => (0.0, 1.0),
        (None, None) => unreachable!("channel with both legs blocked has no fractions"),
    }
}

/// The K interpolation kernel for the channel `(x_{i,n}, y_p, x_{j,m})`:
/// two partial sums of per-step fractions against the shared bank
/// conductance. Requires `(i,j)` open.
#[allow(clippy::too_many_arguments)]
pub fn kernel_k(
    graph: &SiteGraph,
    n_particles: usize,
    i: usize,
    xi: usize,
    y: usize,
    j: usize,
    xj: usize,
    k: usize,
    ell: usize,
) -> Result<Real, VariationalError> {
    if !has_open_channel(graph, i, j) {
        return Err(VariationalError::ChannelUndefined(i, j));
    }
    let n = n_particles;
    debug_assert!(k >= 1 && k + ell <= n);
    let (ri, rj) = (graph.rate(xi, y), graph.rate(xj, y));
    let mut acc = 0.0;
    for t in 1..=k + ell {
        let (a, b) = ((n - t) as Real, (t - 1) as Real);
        let c = match bank_conductance(graph, i, j, a, b) {
            Some(c) if c > 0.0 => c,
            _ => continue,
        };
        let (f1, f2) = split_fractions(a, ri, b, rj);
        let mut term = 0.0;
        if t <= k {
            term += f1;
        }
        term += f2;
        acc += term / c;
    }
    Ok(acc)
}

/// The L interpolation kernel: same serial denominators, but the per-step
/// fractions are the rate-free weights `(N−t)/(N−1)` and `(t−1)/(N−1)`.
pub fn kernel_l(
    graph: &SiteGraph,
    n_particles: usize,
    i: usize,
    j: usize,
    k: usize,
    ell: usize,
) -> Result<Real, VariationalError> {
    if !has_open_channel(graph, i, j) {
        return Err(VariationalError::ChannelUndefined(i, j));
    }
    let n = n_particles;
    debug_assert!(k >= 1 && k + ell <= n);
    let mut acc = 0.0;
    for t in 1..=k + ell {
        let (a, b) = ((n - t) as Real, (t - 1) as Real);
        let c = match bank_conductance(graph, i, j, a, b) {
            Some(c) if c > 0.0 => c,
            _ => continue,
        };
        let mut term = 0.0;
        if t <= k {
            term += (n - t) as Real / (n - 1) as Real;
        }
        term += (t - 1) as Real / (n - 1) as Real;
        acc += term / c;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SiteGraph;

    fn fig1() -> SiteGraph {
        SiteGraph::new(
            vec!["1".into(), "2".into(), "3".into()],
            vec![0.0, 1.0, 0.0, 2.0, 0.0, 2.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.5, 1.0],
        )
        .unwrap()
    }

    fn simple4() -> SiteGraph {
        // x1, x2, y1, y2 with r(x_i, y_p) = 1, r(y_p, x_i) = 2,
        // r(y1,y2) = r(y2,y1) = 1, m ∝ (1, 1, ½, ½)
        SiteGraph::new(
            vec!["x1".into(), "x2".into(), "y1".into(), "y2".into()],
            vec![
                0.0, 0.0, 1.0, 1.0, //
                0.0, 0.0, 1.0, 1.0, //
                2.0, 2.0, 0.0, 1.0, //
                2.0, 2.0, 1.0, 0.0,
            ],
            vec![1.0, 1.0, 0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn fig1_continuum_is_one_half() {
        // single channel, integrand (1 − ½)((1−t)+t) = ½
        let g = fig1();
        let r = resistance_continuum(&g, 0, 1).finite().unwrap();
        assert!((r - 0.5).abs() < 1e-10, "{r}");
    }

    #[test]
    fn simple4_continuum_is_one_quarter() {
        // two identical channels in parallel, each of resistance ½
        let g = simple4();
        let r = resistance_continuum(&g, 0, 1).finite().unwrap();
        assert!((r - 0.25).abs() < 1e-10, "{r}");
    }

    #[test]
    fn fig1_discrete_closed_form() {
        // bank conductance at step t: 1/(½((N−t)+(t−1))) = 2/(N−1),
        // so the sum is N(N−1)/2
        let g = fig1();
        for &n in &[1usize, 2, 8, 33] {
            let r = resistance_discrete(&g, n, 0, 1).finite().unwrap();
            let expect = (n * (n - 1)) as Real / 2.0;
            assert!((r - expect).abs() < 1e-9 * expect.max(1.0), "N={n}: {r}");
        }
    }

    #[test]
    fn simple4_discrete_closed_form() {
        let g = simple4();
        let r = resistance_discrete(&g, 16, 0, 1).finite().unwrap();
        assert!((r - (16.0 * 15.0 / 4.0)).abs() < 1e-9);
    }

    #[test]
    fn discrete_over_n_squared_converges() {
        let g = fig1();
        for &n in &[32usize, 64, 128] {
            let rd = resistance_discrete(&g, n, 0, 1).finite().unwrap();
            assert!(
                (rd / (n * n) as Real - 0.5).abs() <= 5.0 / n as Real,
                "N={n}"
            );
        }
    }

    #[test]
    fn discrete_symmetry() {
        let g = simple4();
        let a = resistance_discrete(&g, 17, 0, 1).finite().unwrap();
        let b = resistance_discrete(&g, 17, 1, 0).finite().unwrap();
        assert!((a - b).abs() < 1e-12 * a);
        let rc_a = resistance_continuum(&g, 0, 1).finite().unwrap();
        let rc_b = resistance_continuum(&g, 1, 0).finite().unwrap();
        assert!((rc_a - rc_b).abs() < 1e-9);
    }

    #[test]
    fn blocked_pair() {
        // y reachable only from x1's side: all channels to x2 blocked
        let g = SiteGraph::new(
            vec!["x1".into(), "x2".into(), "y".into(), "z".into()],
            vec![
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                2.0, 0.0, 0.0, 1.0, //
                0.0, 2.0, 1.0, 0.0,
            ],
            vec![1.0, 1.0, 0.5, 0.5],
        )
        .unwrap();
        assert_eq!(g.components().len(), 2);
        assert!(resistance_continuum(&g, 0, 1).is_blocked());
        assert!(resistance_discrete(&g, 10, 0, 1).is_blocked());
        assert_eq!(resistance_continuum(&g, 0, 1).inverse_or_zero(), 0.0);
    }

    #[test]
    fn single_particle_discrete_resistance_is_zero() {
        // N=1: the only term has both legs of length 0, infinite conductance
        let g = fig1();
        assert_eq!(resistance_discrete(&g, 1, 0, 1).finite().unwrap(), 0.0);
    }

    #[test]
    fn kernel_k_prefix_recovers_discrete() {
        // ℓ=0: K^{k,0} is the k-th partial sum, so K^{N,0} = 𝔯^N and the
        // normalized value climbs monotonically from ~0 to 1
        let g = fig1();
        let n = 12;
        let rn = resistance_discrete(&g, n, 0, 1).finite().unwrap();
        let y = g.non_star_sites()[0];
        let mut prev = -1.0;
        for k in 1..=n {
            let kk = kernel_k(&g, n, 0, 0, y, 1, 2, k, 0).unwrap();
            assert!(kk > prev);
            prev = kk;
        }
        let full = kernel_k(&g, n, 0, 0, y, 1, 2, n, 0).unwrap();
        assert!((full - rn).abs() < 1e-12 * rn);
    }

    #[test]
    fn kernels_agree_on_two_site_tube() {
        // at ℓ=0 the K and L kernels coincide term by term in total
        let g = simple4();
        let n = 9;
        let y = g.non_star_sites()[0];
        for k in 1..n {
            let kk = kernel_k(&g, n, 0, 0, y, 1, 1, k, 0).unwrap();
            let ll = kernel_l(&g, n, 0, 1, k, 0).unwrap();
            assert!((kk - ll).abs() < 1e-12, "k={k}: {kk} vs {ll}");
        }
    }

    #[test]
    fn kernel_blocked_leg_conventions() {
        // channel open on the i side only: fractions are (0, 1), so the
        // kernel reduces to the (k+ℓ)-prefix of the resistance sum
        let g = SiteGraph::new(
            vec!["x1".into(), "x2".into(), "y1".into(), "y2".into()],
            vec![
                0.0, 0.0, 1.0, 1.0, //
                0.0, 0.0, 1.0, 0.0, //
                2.0, 2.0, 0.0, 1.0, //
                2.0, 0.0, 1.0, 0.0,
            ],
            vec![1.0, 1.0, 0.5, 0.5],
        )
        .unwrap();
        // pair (x1, x2): channel through y1 open, through y2 blocked on x2's side
        let n = 8;
        let y2 = g.non_star_sites()[1];
        let k = 3;
        let ell = 2;
        let kk = kernel_k(&g, n, 0, 0, y2, 1, 1, k, ell).unwrap();
        // expected: Σ_{t=1}^{k+ℓ} 1/C_t since (f1,f2) = (0,1)
        let mut expect = 0.0;
        for t in 1..=k + ell {
            let c = bank_conductance(&g, 0, 1, (n - t) as Real, (t - 1) as Real).unwrap();
            expect += 1.0 / c;
        }
        assert!((kk - expect).abs() < 1e-13);
    }

    #[test]
    fn channel_undefined_error() {
        let g = SiteGraph::new(
            vec!["x1".into(), "x2".into(), "y".into(), "z".into()],
            vec![
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                2.0, 0.0, 0.0, 1.0, //
                0.0, 2.0, 1.0, 0.0,
            ],
            vec![1.0, 1.0, 0.5, 0.5],
        )
        .unwrap();
        let y = g.non_star_sites()[0];
        assert!(matches!(
            kernel_k(&g, 6, 0, 0, y, 1, 1, 2, 1),
            Err(VariationalError::ChannelUndefined(0, 1))
        ));
    }

    #[test]
    fn resistance_set_roundtrip() {
        let g = simple4();
        let set = ResistanceSet::build(&g, 20);
        assert!(set.is_open(0, 1));
        assert!(!set.is_open(0, 0));
        assert!((set.continuum(0, 1).finite().unwrap() - 0.25).abs() < 1e-9);
        assert!((set.discrete(0, 1).finite().unwrap() - 95.0).abs() < 1e-9);
        let y = g.non_star_sites()[0];
        assert_eq!(p_set(&g, 0, 1), vec![0, 1]);
        assert!(in_q_set(&g, 0, 1, y));
    }
}
