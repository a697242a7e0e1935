// SPDX-License-Identifier: MIT
//! Shared builders and an independent dense oracle for the integration and
//! acceptance tests.
#![allow(dead_code)]

use inclusion_core::measure::MeasureTable;
use inclusion_core::model::{ConfigurationSpace, InclusionModel, SiteGraph};
use inclusion_core::Real;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Three-site chain 1 — 2 — 3 with m = (1, 1/2, 1): two singleton top
/// components joined by one channel, 𝔯 = 1/2.
pub fn fig1(n: usize, d: Real) -> InclusionModel {
    let g = SiteGraph::new(
        vec!["1".into(), "2".into(), "3".into()],
        vec![0.0, 1.0, 0.0, 2.0, 0.0, 2.0, 0.0, 1.0, 0.0],
        vec![1.0, 0.5, 1.0],
    )
    .unwrap();
    InclusionModel::new(g, n, d).unwrap()
}

/// Symmetric model with two top sites and two channels, m★(y_p) = 1/2 and
/// all top→channel rates 1: 𝔯 = 1/4.
pub fn simple4(n: usize, d: Real) -> InclusionModel {
    let g = SiteGraph::new(
        vec!["x1".into(), "x2".into(), "y1".into(), "y2".into()],
        vec![
            0.0, 0.0, 1.0, 1.0, //
            0.0, 0.0, 1.0, 1.0, //
            2.0, 2.0, 0.0, 1.0, //
            2.0, 2.0, 1.0, 0.0,
        ],
        vec![1.0, 1.0, 0.5, 0.5],
    )
    .unwrap();
    InclusionModel::new(g, n, d).unwrap()
}

/// Three top sites a, b, c over a single channel y, with an extra direct
/// a ↔ b edge so that {a, b} form one doubleton component: 𝔫(1) = 2.
pub fn therm5(n: usize, d: Real) -> InclusionModel {
    let g = SiteGraph::new(
        vec!["a".into(), "b".into(), "c".into(), "y".into()],
        vec![
            0.0, 1.0, 0.0, 1.0, //
            1.0, 0.0, 0.0, 1.0, //
            0.0, 0.0, 0.0, 1.0, //
            2.0, 2.0, 2.0, 0.0,
        ],
        vec![1.0, 1.0, 1.0, 0.5],
    )
    .unwrap();
    InclusionModel::new(g, n, d).unwrap()
}

/// Four top sites in two doubleton components {a, b} and {c, e}, each pair
/// sharing a private channel; the channels are linked to keep the graph
/// irreducible, but the components stay at graph distance > 2.
pub fn fig2(n: usize, d: Real) -> InclusionModel {
    let names = vec!["a".into(), "b".into(), "c".into(), "e".into(), "y1".into(), "y2".into()];
    let mut rate = vec![0.0; 36];
    let mut set = |x: usize, y: usize, v: f64| rate[x * 6 + y] = v;
    for (top, mid) in [(0usize, 4usize), (1, 4), (2, 5), (3, 5)] {
        set(top, mid, 1.0);
        set(mid, top, 2.0);
    }
    set(4, 5, 1.0);
    set(5, 4, 1.0);
    let g = SiteGraph::new(names, rate, vec![1.0, 1.0, 1.0, 1.0, 0.5, 0.5]).unwrap();
    InclusionModel::new(g, n, d).unwrap()
}

/// Random reversible irreducible model: random positive measure, random
/// rates on a random spanning tree plus extra edges, with the reverse rate
/// fixed by detailed balance r(y,x) = r(x,y)·m(x)/m(y).
pub fn random_reversible(seed: u64, max_sites: usize, max_n: usize) -> InclusionModel {
    let mut rng = StdRng::seed_from_u64(seed);
    let s = rng.random_range(2..=max_sites);
    let measure: Vec<Real> = (0..s).map(|_| rng.random_range(0.2..1.0)).collect();
    let mut rate = vec![0.0; s * s];
    let link = |rng: &mut StdRng, rate: &mut Vec<Real>, x: usize, y: usize| {
        if x == y || rate[x * s + y] > 0.0 {
            return;
        }
        let v: Real = rng.random_range(0.5..2.0);
        rate[x * s + y] = v;
        rate[y * s + x] = v * measure[x] / measure[y];
    };
    for x in 1..s {
        let parent = rng.random_range(0..x);
        link(&mut rng, &mut rate, x, parent);
    }
    for _ in 0..s {
        let x = rng.random_range(0..s);
        let y = rng.random_range(0..s);
        link(&mut rng, &mut rate, x, y);
    }
    let names = (0..s).map(|i| format!("s{i}")).collect();
    let g = SiteGraph::new(names, rate, measure).unwrap();
    let n = rng.random_range(2..=max_n);
    let d = rng.random_range(0.05..1.5);
    InclusionModel::new(g, n, d).unwrap()
}

/// Plain Gaussian elimination with partial pivoting, kept deliberately
/// separate from the library's solvers so the oracle shares no code path.
pub fn gauss_solve(mut a: Vec<Vec<Real>>, mut b: Vec<Real>) -> Vec<Real> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(a[col][col].abs() > 0.0, "oracle system is singular");
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// Symmetric conductance c(η,ζ) = μ(η)·q(η,ζ) assembled directly from the
/// generator, independent of the library's edge list.
fn oracle_conductance(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    table: &MeasureTable,
) -> Vec<Vec<(usize, Real)>> {
    let s = model.graph().site_count();
    let mut adj = vec![Vec::new(); space.len()];
    for (i, eta) in space.configs().iter().enumerate() {
        for x in 0..s {
            if eta[x] == 0 {
                continue;
            }
            for y in 0..s {
                if y == x {
                    continue;
                }
                let q = model.jump_rate(eta, x, y);
                if q <= 0.0 {
                    continue;
                }
                let zeta = inclusion_core::model::sigma_move(eta, x, y);
                let j = space.index_of(&zeta).unwrap();
                adj[i].push((j, table.probability(i) * q));
            }
        }
    }
    adj
}

/// Dense-oracle equilibrium potential: h = 1 on `source`, 0 on `sink`,
/// harmonic elsewhere, via direct Gaussian elimination.
pub fn oracle_potential(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    table: &MeasureTable,
    source: &[usize],
    sink: &[usize],
) -> Vec<Real> {
    let adj = oracle_conductance(model, space, table);
    let n = space.len();
    let mut role = vec![0i8; n]; // 0 interior, 1 source, -1 sink
    for &i in source {
        role[i] = 1;
    }
    for &i in sink {
        role[i] = -1;
    }
    let interior: Vec<usize> = (0..n).filter(|&i| role[i] == 0).collect();
    let pos: Vec<Option<usize>> = {
        let mut pos = vec![None; n];
        for (p, &i) in interior.iter().enumerate() {
            pos[i] = Some(p);
        }
        pos
    };
    let m = interior.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for (p, &i) in interior.iter().enumerate() {
        for &(j, c) in &adj[i] {
            a[p][p] += c;
            match role[j] {
                1 => b[p] += c,
                -1 => {}
                _ => a[p][pos[j].unwrap()] -= c,
            }
        }
    }
    let x = gauss_solve(a, b);
    let mut h = vec![0.0; n];
    for &i in source {
        h[i] = 1.0;
    }
    for (p, &i) in interior.iter().enumerate() {
        h[i] = x[p];
    }
    h
}

/// Dense-oracle capacity: Dirichlet form of the oracle potential, summed
/// directly over ordered generator moves (halved).
pub fn oracle_capacity(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    table: &MeasureTable,
    source: &[usize],
    sink: &[usize],
) -> Real {
    let h = oracle_potential(model, space, table, source, sink);
    let adj = oracle_conductance(model, space, table);
    let mut total = 0.0;
    for (i, row) in adj.iter().enumerate() {
        for &(j, c) in row {
            let df = h[i] - h[j];
            total += 0.5 * c * df * df;
        }
    }
    total
}

/// Dense-oracle mean hitting time of `target` from `start`, solving
/// Σ_ζ c(η,ζ)(u(η)−u(ζ)) = μ(η) off the target.
pub fn oracle_mean_hitting(
    model: &InclusionModel,
    space: &ConfigurationSpace,
    table: &MeasureTable,
    start: usize,
    target: &[usize],
) -> Real {
    let adj = oracle_conductance(model, space, table);
    let n = space.len();
    let mut absorbed = vec![false; n];
    for &i in target {
        absorbed[i] = true;
    }
    if absorbed[start] {
        return 0.0;
    }
    let interior: Vec<usize> = (0..n).filter(|&i| !absorbed[i]).collect();
    let pos: Vec<Option<usize>> = {
        let mut pos = vec![None; n];
        for (p, &i) in interior.iter().enumerate() {
            pos[i] = Some(p);
        }
        pos
    };
    let m = interior.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for (p, &i) in interior.iter().enumerate() {
        b[p] = table.probability(i);
        for &(j, c) in &adj[i] {
            a[p][p] += c;
            if !absorbed[j] {
                a[p][pos[j].unwrap()] -= c;
            }
        }
    }
    let x = gauss_solve(a, b);
    x[pos[start].unwrap()]
}

/// Relative difference guarded against zero denominators.
pub fn rel_err(got: Real, want: Real) -> Real {
    (got - want).abs() / want.abs().max(Real::MIN_POSITIVE)
}
