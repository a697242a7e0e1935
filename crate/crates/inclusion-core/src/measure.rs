// SPDX-License-Identifier: MIT
//! The invariant product measure, computed exactly in log space.
//!
//! Unnormalized weights scale like `d^{#occupied}/Π η_x!` and underflow in
//! linear arithmetic for small diffusion, so every quantity here is a log.

use crate::model::{ConfigurationSpace, InclusionModel};
use crate::num::log_sum_exp;
use crate::Real;
use rayon::prelude::*;

/// Table of `log w(k)` for `k = 0..=N`, where `w(k) = Γ(d+k)/(k! Γ(d))`.
#[derive(Debug, Clone)]
pub struct WeightTable {
    log_w: Vec<Real>,
    d: Real,
}

/// Builds the weight sequence through the log-space recurrence
/// `(k+1) w(k+1) = (d+k) w(k)`; no Gamma evaluations needed.
pub fn weight_sequence(d: Real, n: usize) -> WeightTable {
    assert!(d > 0.0, "diffusion parameter must be positive");
    let mut log_w = Vec::with_capacity(n + 1);
    log_w.push(0.0);
    for k in 0..n {
        let k = k as Real;
        log_w.push(log_w[log_w.len() - 1] + (d + k).ln() - (k + 1.0).ln());
    }
    WeightTable { log_w, d }
}

impl WeightTable {
    pub fn log_w(&self, k: usize) -> Real {
        self.log_w[k]
    }
    pub fn max_index(&self) -> usize {
        self.log_w.len() - 1
    }
    pub fn diffusion(&self) -> Real {
        self.d
    }
}

/// The invariant measure over an enumerated configuration space: per-state
/// log weights and the log partition function.
#[derive(Debug, Clone)]
pub struct MeasureTable {
    log_weight: Vec<Real>,
    log_z: Real,
}

/// Evaluates `log Π_x w(η_x) m★(x)^{η_x}` for one configuration.
pub fn log_config_weight(model: &InclusionModel, weights: &WeightTable, eta: &[u32]) -> Real {
    let g = model.graph();
    let mut acc = 0.0;
    for (x, &k) in eta.iter().enumerate() {
        if k > 0 {
            acc += weights.log_w(k as usize) + k as Real * g.m_star(x).ln();
        }
    }
    acc
}

/// Builds the full measure table; the partition function uses log-sum-exp
/// with summands sorted descending to keep the relative error at the
/// machine-epsilon-times-count level.
pub fn stationary_measure(model: &InclusionModel, space: &ConfigurationSpace) -> MeasureTable {
    let weights = weight_sequence(model.diffusion(), model.particle_count());
    let log_weight: Vec<Real> = space
        .configs()
        .par_iter()
        .map(|eta| log_config_weight(model, &weights, eta))
        .collect();
    let mut summands = log_weight.clone();
    let log_z = log_sum_exp(&mut summands);
    MeasureTable { log_weight, log_z }
}

impl MeasureTable {
    pub fn log_weight(&self, idx: usize) -> Real {
        self.log_weight[idx]
    }
    pub fn log_z(&self) -> Real {
        self.log_z
    }
    /// Normalized probability of the configuration at `idx`.
    pub fn probability(&self, idx: usize) -> Real {
        (self.log_weight[idx] - self.log_z).exp()
    }
    pub fn len(&self) -> usize {
        self.log_weight.len()
    }
    pub fn is_empty(&self) -> bool {
        self.log_weight.is_empty()
    }
}

/// Mass of the valley over a site set: `Σ_{x∈A} μ(ξ^x)` where `ξ^x` is the
/// configuration with every particle on `x`.
pub fn valley_mass(
    table: &MeasureTable,
    space: &ConfigurationSpace,
    sites: &[usize],
) -> Real {
    let n = space.particle_count();
    let s = space.config(0).len();
    let mut total = 0.0;
    for &x in sites {
        let idx = space
            .index_of(&crate::model::condensate(s, n, x))
            .expect("condensate configuration must be enumerated");
        total += table.probability(idx);
    }
    total
}
