// SPDX-License-Identifier: MIT
//! Property-based checks on randomly generated reversible models.

mod common;

use common::{random_reversible, rel_err};
use inclusion_core::measure::stationary_measure;
use inclusion_core::model::{sigma_move, ConfigurationSpace};
use inclusion_core::potential::{
    capacity, dirichlet_form, flow_inner_product, flow_norm_squared, flow_of_function, EdgeList,
};
use inclusion_core::Real;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// μ(η)q(η,ζ) = μ(ζ)q(ζ,η) on every positive move of a random model.
    #[test]
    fn stationary_measure_is_reversible(seed in 0u64..10_000) {
        let model = random_reversible(seed, 5, 12);
        let space = ConfigurationSpace::enumerate(&model).unwrap();
        let table = stationary_measure(&model, &space);
        let s = model.graph().site_count();
        for (i, eta) in space.configs().iter().enumerate() {
            for x in 0..s {
                if eta[x] == 0 { continue; }
                for y in 0..s {
                    if y == x { continue; }
                    let q = model.jump_rate(eta, x, y);
                    if q <= 0.0 { continue; }
                    let zeta = sigma_move(eta, x, y);
                    let j = space.index_of(&zeta).unwrap();
                    let back = model.jump_rate(&zeta, y, x);
                    let lhs = table.probability(i) * q;
                    let rhs = table.probability(j) * back;
                    prop_assert!(rel_err(lhs, rhs) < 1e-12,
                        "detailed balance broken: {lhs} vs {rhs}");
                }
            }
        }
    }

    /// ‖Φ_f‖² = D_N(f) for random f (the flow of a function carries its
    /// Dirichlet form), and ⟨Φ_f, ψ⟩ = Σ f·div ψ for random ψ.
    #[test]
    fn function_flow_identities(seed in 0u64..10_000) {
        let model = random_reversible(seed, 4, 10);
        let space = ConfigurationSpace::enumerate(&model).unwrap();
        let table = stationary_measure(&model, &space);
        let edges = EdgeList::build(&model, &space, &table);
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as Real / (1u64 << 53) as Real
        };
        let f: Vec<Real> = (0..space.len()).map(|_| next()).collect();
        let flow = flow_of_function(&edges, &f);
        let norm = flow_norm_squared(&edges, &flow).unwrap();
        let diri = dirichlet_form(&edges, &f);
        prop_assert!((norm - diri).abs() <= 1e-12 * diri.max(1e-300),
            "flow norm {norm} vs Dirichlet form {diri}");

        let g: Vec<Real> = (0..space.len()).map(|_| next()).collect();
        let psi = flow_of_function(&edges, &g);
        let inner = flow_inner_product(&edges, &flow, &psi).unwrap();
        let div = psi.divergence_all(space.len());
        let pairing: Real = f.iter().zip(&div).map(|(a, b)| a * b).sum();
        prop_assert!((inner - pairing).abs() <= 1e-10 * inner.abs().max(1.0),
            "inner product {inner} vs pairing {pairing}");

        // total divergence of any flow vanishes
        let total: Real = div.iter().sum();
        prop_assert!(total.abs() < 1e-10, "total divergence {total}");
    }

    /// Capacity is symmetric in its arguments and monotone under enlarging
    /// the source set.
    #[test]
    fn capacity_symmetry_and_monotonicity(seed in 0u64..10_000) {
        let model = random_reversible(seed, 4, 8);
        let space = ConfigurationSpace::enumerate(&model).unwrap();
        let table = stationary_measure(&model, &space);
        let edges = EdgeList::build(&model, &space, &table);
        let n = space.len();
        let a = 0;
        let b = n - 1;
        let mid = n / 2;
        prop_assume!(mid != a && mid != b);
        let ab = capacity(&edges, n, &[a], &[b]).unwrap().capacity;
        let ba = capacity(&edges, n, &[b], &[a]).unwrap().capacity;
        prop_assert!(rel_err(ab, ba) < 1e-9, "asymmetric capacity {ab} vs {ba}");
        let wide = capacity(&edges, n, &[a, mid], &[b]).unwrap().capacity;
        prop_assert!(wide >= ab * (1.0 - 1e-9), "capacity not monotone: {wide} < {ab}");
    }
}
