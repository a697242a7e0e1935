// SPDX-License-Identifier: MIT
//! Event-driven exact simulation of the inclusion process and Monte Carlo
//! estimators for hitting times, thermalization probabilities, and the time
//! spent outside the condensate valleys.
//!
//! Replicas draw from independent counter-based RNG streams keyed by
//! `(seed, replica_id)`, so estimates are reproducible regardless of
//! scheduling and replicas can run embarrassingly parallel.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{condensate, sigma_move, Configuration, InclusionModel};
use crate::Real;

/// Errors surfaced by the Monte Carlo estimators.
#[derive(Debug, Error)]
pub enum SimulateError {
    /// A replica hit its horizon before satisfying the stop predicate.
    #[error("replica {replica_id} exhausted its horizon after {elapsed} time units, {events} events")]
    HorizonExhausted { replica_id: u64, elapsed: Real, events: u64 },
    /// Thermalization is vacuous for a component with a single top site.
    #[error("component {component} has a single top site; nothing to thermalize")]
    ComponentSingleton { component: usize },
}

/// Identity and budget of a single simulation run. Identical
/// `(seed, replica_id, model, start)` reproduce identical trajectories.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub seed: u64,
    pub replica_id: u64,
    /// Stop after this much process time (`None` = unbounded).
    pub max_time: Option<Real>,
    /// Stop after this many jump events (`None` = unbounded).
    pub max_events: Option<u64>,
    /// Record the full `(time, from, to)` event log in the summary.
    pub log_events: bool,
}

impl SimulationRun {
    pub fn new(seed: u64, replica_id: u64) -> Self {
        SimulationRun { seed, replica_id, max_time: None, max_events: None, log_events: false }
    }

    pub fn with_max_time(mut self, t: Real) -> Self {
        self.max_time = Some(t);
        self
    }

    pub fn with_max_events(mut self, n: u64) -> Self {
        self.max_events = Some(n);
        self
    }

    pub fn with_event_log(mut self) -> Self {
        self.log_events = true;
        self
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.replica_id);
        rng
    }
}

/// Why a trajectory ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The stop predicate fired.
    Predicate,
    /// The time or event budget ran out first.
    HorizonExhausted,
    /// The configuration is absorbing (no move has positive rate).
    Absorbed,
}

/// Trajectory summary returned by [`simulate_path`].
#[derive(Debug, Clone)]
pub struct PathSummary {
    pub final_state: Configuration,
    pub elapsed: Real,
    pub events: u64,
    pub stop: StopReason,
    /// Populated when the run requested an event log: `(jump time, from, to)`.
    pub event_log: Option<Vec<(Real, Configuration, Configuration)>>,
}

/// Ordered site pairs with a positive jump rate, fixed by the graph.
fn positive_pairs(model: &InclusionModel) -> Vec<(usize, usize)> {
    let g = model.graph();
    let s = g.site_count();
    let mut pairs = Vec::new();
    for x in 0..s {
        for y in 0..s {
            if x != y && g.rate(x, y) > 0.0 {
                pairs.push((x, y));
            }
        }
    }
    pairs
}

/// Exact event-driven (Gillespie) simulation from `start` until `stop`
/// returns true, the budget in `run` is exhausted, or the state absorbs.
/// The predicate is evaluated on the initial state first, so `stop(start)`
/// short-circuits with zero events.
pub fn simulate_path(
    model: &InclusionModel,
    run: &SimulationRun,
    start: &Configuration,
    mut stop: impl FnMut(&Configuration) -> bool,
) -> PathSummary {
    let mut rng = run.rng();
    let pairs = positive_pairs(model);
    let mut eta = start.clone();
    let mut elapsed = 0.0;
    let mut events = 0u64;
    let mut log = if run.log_events { Some(Vec::new()) } else { None };
    let mut rates = vec![0.0; pairs.len()];

    if stop(&eta) {
        return PathSummary {
            final_state: eta,
            elapsed,
            events,
            stop: StopReason::Predicate,
            event_log: log,
        };
    }
    loop {
        if let Some(cap) = run.max_events {
            if events >= cap {
                return PathSummary {
                    final_state: eta,
                    elapsed,
                    events,
                    stop: StopReason::HorizonExhausted,
                    event_log: log,
                };
            }
        }
        let mut total = 0.0;
        for (k, &(x, y)) in pairs.iter().enumerate() {
            let q = model.jump_rate(&eta, x, y);
            rates[k] = q;
            total += q;
        }
        if total <= 0.0 {
            return PathSummary {
                final_state: eta,
                elapsed,
                events,
                stop: StopReason::Absorbed,
                event_log: log,
            };
        }
        // Exp(total) holding time; 1 - U avoids ln(0).
        let u: Real = rng.random();
        let hold = -(1.0 - u).ln() / total;
        if let Some(t_max) = run.max_time {
            if elapsed + hold > t_max {
                return PathSummary {
                    final_state: eta,
                    elapsed: t_max,
                    events,
                    stop: StopReason::HorizonExhausted,
                    event_log: log,
                };
            }
        }
        elapsed += hold;
        // pick a move proportional to its rate
        let mut v: Real = rng.random::<Real>() * total;
        let mut chosen = pairs.len() - 1;
        for (k, &q) in rates.iter().enumerate() {
            if q <= 0.0 {
                continue;
            }
            if v < q {
                chosen = k;
                break;
            }
            v -= q;
        }
        let (x, y) = pairs[chosen];
        let next = sigma_move(&eta, x, y);
        if let Some(log) = log.as_mut() {
            log.push((elapsed, eta.clone(), next.clone()));
        }
        eta = next;
        events += 1;
        if stop(&eta) {
            return PathSummary {
                final_state: eta,
                elapsed,
                events,
                stop: StopReason::Predicate,
                event_log: log,
            };
        }
    }
}

/// Time accounting of a trajectory against the condensate valleys, i.e. the
/// trace process on 𝓔★ with the clock turned off outside.
#[derive(Debug, Clone, Default)]
pub struct TraceStatistics {
    /// Entries into each valley, keyed by the top site carrying the condensate.
    pub visits: HashMap<usize, u64>,
    /// Time spent sitting in each valley.
    pub local_time: HashMap<usize, Real>,
    /// Time spent outside every valley. `Σ local_time + outside_time` equals
    /// the elapsed time of the trajectory.
    pub outside_time: Real,
    /// `(time / θ₂, component index)` whenever the valley projection moves to
    /// a different top component.
    pub projected_jumps: Vec<(Real, usize)>,
}

/// Maps a configuration to its condensate top site, if it is one.
pub fn valley_of(model: &InclusionModel, eta: &[u32]) -> Option<usize> {
    let n = model.particle_count() as u32;
    let g = model.graph();
    eta.iter().position(|&k| k == n).filter(|&x| g.is_star(x))
}

/// Replays an event-logged trajectory and excises the time spent outside the
/// condensate valleys. `summary` must carry an event log.
pub fn trace_on_valleys(
    model: &InclusionModel,
    start: &Configuration,
    summary: &PathSummary,
) -> TraceStatistics {
    let log = summary.event_log.as_ref().expect("trace requires an event log");
    let theta2 = model.theta2();
    let mut stats = TraceStatistics::default();
    let mut current = valley_of(model, start);
    let mut last_component: Option<usize> = current.and_then(|x| model.graph().component_of(x));
    if let Some(x) = current {
        *stats.visits.entry(x).or_insert(0) += 1;
    }
    let mut t_prev = 0.0;
    let account = |valley: Option<usize>, dt: Real, stats: &mut TraceStatistics| match valley {
        Some(x) => *stats.local_time.entry(x).or_insert(0.0) += dt,
        None => stats.outside_time += dt,
    };
    for (t, _, to) in log {
        account(current, t - t_prev, &mut stats);
        t_prev = *t;
        let next = valley_of(model, to);
        if let Some(x) = next {
            if current != next {
                *stats.visits.entry(x).or_insert(0) += 1;
                let comp = model.graph().component_of(x);
                if comp != last_component {
                    if let Some(c) = comp {
                        stats.projected_jumps.push((t / theta2, c));
                    }
                    last_component = comp;
                }
            }
        }
        current = next;
    }
    account(current, summary.elapsed - t_prev, &mut stats);
    stats
}

/// Sample statistics for a Monte Carlo estimator.
#[derive(Debug, Clone)]
pub struct SampleStats {
    pub n: usize,
    pub mean: Real,
    pub variance: Real,
    pub std_error: Real,
}

impl SampleStats {
    pub fn from_samples(samples: &[Real]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<Real>() / n as Real;
        let variance = if n > 1 {
            samples.iter().map(|&s| (s - mean) * (s - mean)).sum::<Real>() / (n - 1) as Real
        } else {
            0.0
        };
        SampleStats { n, mean, variance, std_error: (variance / n as Real).sqrt() }
    }
}

/// Hitting times `τ_target` from `start` over independent replicas.
///
/// Replicas map to RNG streams by index; the reduction is an ordered
/// collection by replica id, so the result is deterministic under any
/// parallel schedule.
pub fn hitting_time_samples(
    model: &InclusionModel,
    start: &Configuration,
    target: &[Configuration],
    replicas: usize,
    seed: u64,
) -> Result<SampleStats, SimulateError> {
    let samples: Result<Vec<Real>, SimulateError> = (0..replicas as u64)
        .into_par_iter()
        .map(|rep| {
            let run = SimulationRun::new(seed, rep).with_max_events(1_000_000_000);
            let out = simulate_path(model, &run, start, |eta| target.iter().any(|t| t == eta));
            match out.stop {
                StopReason::Predicate => Ok(out.elapsed),
                _ => Err(SimulateError::HorizonExhausted {
                    replica_id: rep,
                    elapsed: out.elapsed,
                    events: out.events,
                }),
            }
        })
        .collect();
    Ok(SampleStats::from_samples(&samples?))
}

/// Monte Carlo estimates of the thermalization probabilities inside top
/// component `i`: for each ordered pair `(x, y)` of distinct top sites of the
/// component, the probability that the walk started at the condensate on `x`
/// reaches the condensate on `y` before any condensate outside the component.
///
/// Returns `(site pairs, probabilities)` aligned by index.
pub fn thermalization_probability(
    model: &InclusionModel,
    component: usize,
    replicas: usize,
    seed: u64,
) -> Result<(Vec<(usize, usize)>, Vec<Real>), SimulateError> {
    let g = model.graph();
    let inside = g.components()[component].clone();
    if inside.len() < 2 {
        return Err(SimulateError::ComponentSingleton { component });
    }
    let outside: Vec<usize> =
        g.star_sites().iter().copied().filter(|x| !inside.contains(x)).collect();
    let s = g.site_count();
    let n = model.particle_count();
    let mut pairs = Vec::new();
    for &x in &inside {
        for &y in &inside {
            if x != y {
                pairs.push((x, y));
            }
        }
    }
    let probs: Vec<Real> = pairs
        .par_iter()
        .map(|&(x, y)| {
            let start = condensate(s, n, x);
            let good = condensate(s, n, y);
            let bad: Vec<Configuration> = outside.iter().map(|&z| condensate(s, n, z)).collect();
            let hits: u64 = (0..replicas as u64)
                .into_par_iter()
                .map(|rep| {
                    // separate the seed space per pair so pairs are independent
                    let run = SimulationRun::new(
                        seed ^ ((x as u64) << 32) ^ ((y as u64) << 48),
                        rep,
                    )
                    .with_max_events(1_000_000_000);
                    let out = simulate_path(model, &run, &start, |eta| {
                        eta == &good || bad.iter().any(|b| b == eta)
                    });
                    u64::from(out.stop == StopReason::Predicate && out.final_state == good)
                })
                .sum();
            hits as Real / replicas as Real
        })
        .collect();
    Ok((pairs, probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::stationary_measure;
    use crate::model::{ConfigurationSpace, SiteGraph};
    use crate::potential::{exact_mean_hitting, EdgeList};

    fn fig1_model(n: usize, d: Real) -> InclusionModel {
        let g = SiteGraph::new(
            vec!["1".into(), "2".into(), "3".into()],
            vec![0.0, 1.0, 0.0, 2.0, 0.0, 2.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.5, 1.0],
        )
        .unwrap();
        InclusionModel::new(g, n, d).unwrap()
    }

    #[test]
    fn equal_seeds_reproduce_event_logs() {
        let model = fig1_model(6, 0.2);
        let start = condensate(3, 6, 0);
        let run = SimulationRun::new(7, 3).with_max_events(500).with_event_log();
        let a = simulate_path(&model, &run, &start, |_| false);
        let b = simulate_path(&model, &run, &start, |_| false);
        assert_eq!(a.event_log, b.event_log);
        assert_eq!(a.elapsed, b.elapsed);
        let other = SimulationRun::new(7, 4).with_max_events(500).with_event_log();
        let c = simulate_path(&model, &other, &start, |_| false);
        assert_ne!(a.event_log, c.event_log);
    }

    #[test]
    fn stop_on_start_is_immediate() {
        let model = fig1_model(4, 0.2);
        let start = condensate(3, 4, 0);
        let run = SimulationRun::new(1, 0);
        let out = simulate_path(&model, &run, &start, |eta| eta[0] == 4);
        assert_eq!(out.events, 0);
        assert_eq!(out.stop, StopReason::Predicate);
    }

    #[test]
    fn holding_time_matches_total_rate() {
        // empirical mean holding at a fixed state ≈ 1/Σq within 3σ
        let model = fig1_model(5, 0.3);
        let start: Configuration = vec![2, 2, 1];
        let pairs = positive_pairs(&model);
        let total: Real = pairs.iter().map(|&(x, y)| model.jump_rate(&start, x, y)).sum();
        let m = 10_000;
        let mut sum = 0.0;
        for rep in 0..m {
            let run = SimulationRun::new(42, rep).with_max_events(1);
            let out = simulate_path(&model, &run, &start, |_| false);
            sum += out.elapsed;
        }
        let mean = sum / m as Real;
        let exact = 1.0 / total;
        // Exp(λ) has σ = 1/λ, so the sample-mean σ is exact/√m
        let tol = 3.0 * exact / (m as Real).sqrt();
        assert!((mean - exact).abs() < tol, "mean {mean} vs {exact} ± {tol}");
    }

    #[test]
    fn jump_distribution_matches_rates() {
        // frequencies of the first jump from a fixed state vs q/Σq, 3σ per move
        let model = fig1_model(6, 0.4);
        let start: Configuration = vec![3, 2, 1];
        let pairs = positive_pairs(&model);
        let rates: Vec<Real> = pairs.iter().map(|&(x, y)| model.jump_rate(&start, x, y)).collect();
        let total: Real = rates.iter().sum();
        let m = 20_000usize;
        let mut counts = vec![0usize; pairs.len()];
        for rep in 0..m as u64 {
            let run = SimulationRun::new(9, rep).with_max_events(1).with_event_log();
            let out = simulate_path(&model, &run, &start, |_| false);
            let (_, from, to) = &out.event_log.as_ref().unwrap()[0];
            let k = pairs
                .iter()
                .position(|&(x, y)| sigma_move(from, x, y) == *to && model.jump_rate(from, x, y) > 0.0)
                .unwrap();
            counts[k] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            let p = rates[k] / total;
            if p == 0.0 {
                assert_eq!(c, 0);
                continue;
            }
            let sigma = (p * (1.0 - p) * m as Real).sqrt();
            assert!(
                ((c as Real) - p * m as Real).abs() < 3.0 * sigma,
                "move {k}: count {c}, expected {}",
                p * m as Real
            );
        }
    }

    #[test]
    fn trace_accounting_is_exact() {
        let model = fig1_model(8, 0.1);
        let start = condensate(3, 8, 0);
        let run = SimulationRun::new(5, 0).with_max_events(20_000).with_event_log();
        let out = simulate_path(&model, &run, &start, |_| false);
        let stats = trace_on_valleys(&model, &start, &out);
        let total: Real = stats.local_time.values().sum::<Real>() + stats.outside_time;
        assert!((total - out.elapsed).abs() < 1e-9 * out.elapsed.max(1.0));
        // valleys are only at the two star sites 0 and 2
        for x in stats.local_time.keys() {
            assert!(*x == 0 || *x == 2);
        }
        assert!(stats.visits[&0] >= 1);
    }

    #[test]
    fn mc_hitting_time_matches_exact_solver() {
        let n = 5;
        let model = fig1_model(n, 0.3);
        let space = ConfigurationSpace::enumerate(&model).unwrap();
        let table = stationary_measure(&model, &space);
        let edges = EdgeList::build(&model, &space, &table);
        let a = space.index_of(&condensate(3, n, 0)).unwrap();
        let b = space.index_of(&condensate(3, n, 2)).unwrap();
        let exact = exact_mean_hitting(&edges, &table, space.len(), a, &[b]).unwrap();
        let stats = hitting_time_samples(
            &model,
            &condensate(3, n, 0),
            &[condensate(3, n, 2)],
            2000,
            1234,
        )
        .unwrap();
        assert!(
            (stats.mean - exact).abs() < 3.0 * stats.std_error,
            "mc {} ± {} vs exact {exact}",
            stats.mean,
            stats.std_error
        );
    }

    #[test]
    fn hitting_from_target_is_zero() {
        let model = fig1_model(4, 0.2);
        let t = condensate(3, 4, 2);
        let stats = hitting_time_samples(&model, &t, &[t.clone()], 10, 0).unwrap();
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.variance, 0.0);
    }

    #[test]
    fn thermalization_rejects_singletons() {
        let model = fig1_model(4, 0.2);
        assert!(matches!(
            thermalization_probability(&model, 0, 10, 0),
            Err(SimulateError::ComponentSingleton { component: 0 })
        ));
    }

    #[test]
    fn long_run_occupation_matches_measure() {
        // TV distance over {valley 1, valley 2, rest} after many events
        let n = 6;
        let model = fig1_model(n, 0.2);
        let space = ConfigurationSpace::enumerate(&model).unwrap();
        let table = stationary_measure(&model, &space);
        let start = condensate(3, n, 0);
        let run = SimulationRun::new(77, 0).with_max_events(2_000_000).with_event_log();
        let out = simulate_path(&model, &run, &start, |_| false);
        let stats = trace_on_valleys(&model, &start, &out);
        let p0 = stats.local_time.get(&0).copied().unwrap_or(0.0) / out.elapsed;
        let p2 = stats.local_time.get(&2).copied().unwrap_or(0.0) / out.elapsed;
        let rest = stats.outside_time / out.elapsed;
        let q0 = table.probability(space.index_of(&condensate(3, n, 0)).unwrap());
        let q2 = table.probability(space.index_of(&condensate(3, n, 2)).unwrap());
        let qrest = 1.0 - q0 - q2;
        let tv = 0.5 * ((p0 - q0).abs() + (p2 - q2).abs() + (rest - qrest).abs());
        assert!(tv <= 0.02, "tv = {tv}");
    }
}
