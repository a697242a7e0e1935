//! Site graphs, inclusion-process models, and the configuration space.
//!
//! A model is a finite set of sites with jump kernel `r(x,y)` reversible
//! with respect to a probability measure `m`, a particle count `N`, and a
//! diffusion parameter `d_N`. The configuration space is the simplex of
//! occupation vectors summing to `N`; particles move one at a time with
//! rate `η_x (d_N + η_y) r(x,y)`.

use crate::Real;
use std::collections::HashMap;
use thiserror::Error;

/// Relative tolerance for the edgewise detailed-balance identity.
pub const DETAILED_BALANCE_RTOL: Real = 1e-12;
/// Sites within this relative distance of the maximal measure join the
/// metastable set (ties in floating input are intentional equalities).
pub const MAX_MEASURE_RTOL: Real = 1e-9;
/// Default cap on the configuration-space size for full enumeration.
pub const DEFAULT_STATE_CAP: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model needs at least two sites, got {0}")]
    TooFewSites(usize),
    #[error("duplicate site identifier {0:?}")]
    DuplicateSite(String),
    #[error("self-loop rate r({0},{0}) = {1} rejected; rates must vanish on the diagonal")]
    SelfLoop(String, Real),
    #[error("negative rate r({0},{1}) = {2}")]
    NegativeRate(String, String, Real),
    #[error("site {0} has non-positive measure {1}")]
    NonPositiveMeasure(String, Real),
    #[error("detailed balance violated between {x} and {y}: |m(x)r(x,y) - m(y)r(y,x)| = {residual:.3e}")]
    DetailedBalanceViolation { x: String, y: String, residual: Real },
    #[error("rate graph is not irreducible; sites {0:?} are cut off from the rest")]
    NotIrreducible(Vec<String>),
    #[error("particle count must be positive")]
    ZeroParticles,
    #[error("diffusion parameter d_N must be positive, got {0}")]
    NonPositiveDiffusion(Real),
    #[error("configuration space has {count} states, above the cap {cap}")]
    StateSpaceTooLarge { count: u128, cap: usize },
    #[error("unknown site {0:?}")]
    UnknownSite(String),
}

/// Finite site graph with reversible jump kernel and its metastable
/// decomposition: the maximal-measure sites, their normalized measure, the
/// level-2 components (maximal rate-connected subsets of the maximal set),
/// and the remaining sites.
#[derive(Debug, Clone)]
pub struct SiteGraph {
    names: Vec<String>,
    rate: Vec<Real>,
    measure: Vec<Real>,
    max_measure: Real,
    s_star: Vec<usize>,
    is_star: Vec<bool>,
    m_star: Vec<Real>,
    level2: Vec<Vec<usize>>,
    component_of: Vec<Option<usize>>,
    non_star: Vec<usize>,
}

impl SiteGraph {
    /// Builds and validates a site graph from a full rate matrix (row-major)
    /// and an unnormalized positive measure.
    pub fn new(names: Vec<String>, rate: Vec<Real>, measure: Vec<Real>) -> Result<Self, ModelError> {
        let s = names.len();
        if s < 2 {
            return Err(ModelError::TooFewSites(s));
        }
        assert_eq!(rate.len(), s * s, "rate matrix dimension mismatch");
        assert_eq!(measure.len(), s, "measure dimension mismatch");
        {
            let mut seen = std::collections::HashSet::new();
            for n in &names {
                if !seen.insert(n.clone()) {
                    return Err(ModelError::DuplicateSite(n.clone()));
                }
            }
        }
        for (x, &m) in measure.iter().enumerate() {
            if !(m > 0.0) {
                return Err(ModelError::NonPositiveMeasure(names[x].clone(), m));
            }
        }
        for x in 0..s {
            if rate[x * s + x] != 0.0 {
                return Err(ModelError::SelfLoop(names[x].clone(), rate[x * s + x]));
            }
            for y in 0..s {
                if rate[x * s + y] < 0.0 {
                    return Err(ModelError::NegativeRate(names[x].clone(), names[y].clone(), rate[x * s + y]));
                }
            }
        }
        let total: Real = measure.iter().sum();
        let measure: Vec<Real> = measure.iter().map(|m| m / total).collect();
        for x in 0..s {
            for y in x + 1..s {
                let fwd = measure[x] * rate[x * s + y];
                let bwd = measure[y] * rate[y * s + x];
                let scale = fwd.abs().max(bwd.abs()).max(1.0);
                if (fwd - bwd).abs() > DETAILED_BALANCE_RTOL * scale {
                    return Err(ModelError::DetailedBalanceViolation {
                        x: names[x].clone(),
                        y: names[y].clone(),
                        residual: (fwd - bwd).abs(),
                    });
                }
            }
        }
        // irreducibility: by detailed balance r(x,y) > 0 iff r(y,x) > 0,
        // so an undirected reachability sweep suffices
        {
            let mut seen = vec![false; s];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(x) = stack.pop() {
                for y in 0..s {
                    if !seen[y] && rate[x * s + y] > 0.0 {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
            if seen.iter().any(|&v| !v) {
                let cut = (0..s).filter(|&x| !seen[x]).map(|x| names[x].clone()).collect();
                return Err(ModelError::NotIrreducible(cut));
            }
        }
        let max_measure = measure.iter().cloned().fold(Real::MIN, Real::max);
        let is_star: Vec<bool> = measure
            .iter()
            .map(|&m| (max_measure - m) <= MAX_MEASURE_RTOL * max_measure)
            .collect();
        let s_star: Vec<usize> = (0..s).filter(|&x| is_star[x]).collect();
        let m_star: Vec<Real> = measure.iter().map(|&m| m / max_measure).collect();
        // level-2 components: union-find over rate-positive pairs inside the star set
        let mut parent: Vec<usize> = (0..s).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            let mut root = x;
            while parent[root] != root {
                root = parent[root];
            }
            let mut cur = x;
            while parent[cur] != root {
                let next = parent[cur];
                parent[cur] = root;
                cur = next;
            }
            root
        }
        for &x in &s_star {
            for &y in &s_star {
                if x < y && rate[x * s + y] > 0.0 {
                    let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
                    if rx != ry {
                        parent[rx] = ry;
                    }
                }
            }
        }
        let mut roots: Vec<usize> = Vec::new();
        let mut level2: Vec<Vec<usize>> = Vec::new();
        let mut component_of = vec![None; s];
        for &x in &s_star {
            let r = find(&mut parent, x);
            let idx = match roots.iter().position(|&q| q == r) {
                Some(i) => i,
                None => {
                    roots.push(r);
                    level2.push(Vec::new());
                    roots.len() - 1
                }
            };
            level2[idx].push(x);
            component_of[x] = Some(idx);
        }
        let non_star = (0..s).filter(|&x| !is_star[x]).collect();
        Ok(SiteGraph {
            names,
            rate,
            measure,
            max_measure,
            s_star,
            is_star,
            m_star,
            level2,
            component_of,
            non_star,
        })
    }

    /// Builds from sparse `(from, to, rate)` triples over named sites.
    pub fn from_triples(
        names: Vec<String>,
        triples: &[(String, String, Real)],
        measure_by_name: &HashMap<String, Real>,
    ) -> Result<Self, ModelError> {
        let s = names.len();
        let index: HashMap<&str, usize> =
            names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut rate = vec![0.0; s * s];
        for (from, to, v) in triples {
            let &x = index.get(from.as_str()).ok_or_else(|| ModelError::UnknownSite(from.clone()))?;
            let &y = index.get(to.as_str()).ok_or_else(|| ModelError::UnknownSite(to.clone()))?;
            rate[x * s + y] += v;
        }
        let mut measure = vec![0.0; s];
        for (name, &m) in measure_by_name {
            let &x = index.get(name.as_str()).ok_or_else(|| ModelError::UnknownSite(name.clone()))?;
            measure[x] = m;
        }
        SiteGraph::new(names, rate, measure)
    }

    pub fn site_count(&self) -> usize {
        self.names.len()
    }
    pub fn names(&self) -> &[String] {
        &self.names
    }
    pub fn site_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
    pub fn rate(&self, x: usize, y: usize) -> Real {
        self.rate[x * self.names.len() + y]
    }
    /// Normalized site measure `m` (sums to one).
    pub fn measure(&self, x: usize) -> Real {
        self.measure[x]
    }
    pub fn max_measure(&self) -> Real {
        self.max_measure
    }
    /// The maximal-measure sites, ascending.
    pub fn star_sites(&self) -> &[usize] {
        &self.s_star
    }
    pub fn is_star(&self, x: usize) -> bool {
        self.is_star[x]
    }
    /// `m(x)` relative to the maximum; equals 1 exactly on star sites.
    pub fn m_star(&self, x: usize) -> Real {
        if self.is_star[x] {
            1.0
        } else {
            self.m_star[x]
        }
    }
    /// Level-2 components of the star set (each a maximal rate-connected subset).
    pub fn components(&self) -> &[Vec<usize>] {
        &self.level2
    }
    pub fn component_of(&self, x: usize) -> Option<usize> {
        self.component_of[x]
    }
    /// Sites below the maximal measure, ascending (the `y` sites).
    pub fn non_star_sites(&self) -> &[usize] {
        &self.non_star
    }

    /// Structured validation summary (star set, components, the rest).
    pub fn report(&self) -> ValidationReport {
        ValidationReport {
            sites: self.names.clone(),
            star_sites: self.s_star.iter().map(|&x| self.names[x].clone()).collect(),
            components: self
                .level2
                .iter()
                .map(|c| c.iter().map(|&x| self.names[x].clone()).collect())
                .collect(),
            non_star_sites: self.non_star.iter().map(|&x| self.names[x].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub sites: Vec<String>,
    pub star_sites: Vec<String>,
    pub components: Vec<Vec<String>>,
    pub non_star_sites: Vec<String>,
}

/// Length of the shortest rate-positive path between two site sets
/// (0 when they intersect).
pub fn graph_distance(graph: &SiteGraph, a: &[usize], b: &[usize]) -> usize {
    assert!(!a.is_empty() && !b.is_empty(), "graph distance of empty set");
    let s = graph.site_count();
    let in_b = {
        let mut v = vec![false; s];
        for &x in b {
            v[x] = true;
        }
        v
    };
    let mut dist = vec![usize::MAX; s];
    let mut queue = std::collections::VecDeque::new();
    for &x in a {
        dist[x] = 0;
        queue.push_back(x);
    }
    while let Some(x) = queue.pop_front() {
        if in_b[x] {
            return dist[x];
        }
        for y in 0..s {
            if graph.rate(x, y) > 0.0 && dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    usize::MAX // unreachable for irreducible graphs; defensive
}

/// A site graph together with the particle count and diffusion parameter.
#[derive(Debug, Clone)]
pub struct InclusionModel {
    graph: SiteGraph,
    n: usize,
    d: Real,
    schedule_tag: Option<String>,
    warnings: Vec<String>,
}

impl InclusionModel {
    pub fn new(graph: SiteGraph, n: usize, d: Real) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::ZeroParticles);
        }
        if !(d > 0.0) {
            return Err(ModelError::NonPositiveDiffusion(d));
        }
        let mut warnings = Vec::new();
        let dlogn = d * (n as Real).ln();
        if dlogn > 0.1 {
            warnings.push(format!(
                "d_N·log N = {dlogn:.4} is not small; asymptotic regime assumes it vanishes"
            ));
        }
        Ok(InclusionModel { graph, n, d, schedule_tag: None, warnings })
    }

    pub fn with_schedule_tag(mut self, tag: impl Into<String>) -> Self {
        self.schedule_tag = Some(tag.into());
        self
    }

    pub fn graph(&self) -> &SiteGraph {
        &self.graph
    }
    pub fn particle_count(&self) -> usize {
        self.n
    }
    pub fn diffusion(&self) -> Real {
        self.d
    }
    pub fn schedule_tag(&self) -> Option<&str> {
        self.schedule_tag.as_deref()
    }
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
    /// First metastable time scale `1/d_N`.
    pub fn theta1(&self) -> Real {
        1.0 / self.d
    }
    /// Second metastable time scale `N/d_N²`.
    pub fn theta2(&self) -> Real {
        self.n as Real / (self.d * self.d)
    }

    /// Jump rate `η_x (d_N + η_y) r(x,y)` of the move `x → y`.
    pub fn jump_rate(&self, eta: &[u32], x: usize, y: usize) -> Real {
        debug_assert_ne!(x, y);
        eta[x] as Real * (self.d + eta[y] as Real) * self.graph.rate(x, y)
    }
}

/// Occupation vector; the particle count is an invariant of the space, not
/// stored per configuration.
pub type Configuration = Vec<u32>;

/// Moves one particle from `x` to `y`; the identity when `x` is empty.
pub fn sigma_move(eta: &[u32], x: usize, y: usize) -> Configuration {
    debug_assert_ne!(x, y);
    let mut out = eta.to_vec();
    if out[x] > 0 {
        out[x] -= 1;
        out[y] += 1;
    }
    out
}

/// The configuration with all `n` particles on `x`.
pub fn condensate(site_count: usize, n: usize, x: usize) -> Configuration {
    let mut eta = vec![0u32; site_count];
    eta[x] = n as u32;
    eta
}

/// The two-site tube interpolation point: `i` particles on `y`, the rest on `x`.
pub fn tube_point(site_count: usize, n: usize, x: usize, y: usize, i: usize) -> Configuration {
    let mut eta = vec![0u32; site_count];
    eta[x] = (n - i) as u32;
    eta[y] = i as u32;
    eta
}

/// Number of configurations of `n` particles on `s` sites.
pub fn state_count(s: usize, n: usize) -> u128 {
    // C(n + s - 1, s - 1)
    let mut acc: u128 = 1;
    for k in 1..s {
        acc = acc * (n as u128 + k as u128) / k as u128;
    }
    acc
}

/// Fully enumerated configuration space with both directions of the
/// index ↔ occupation-vector map.
// Debug derive kept for test ergonomics; the index map can be large but is rarely printed.
#[derive(Debug)]
pub struct ConfigurationSpace {
    configs: Vec<Configuration>,
    index: HashMap<Configuration, usize>,
    n: usize,
}

impl ConfigurationSpace {
    pub fn enumerate(model: &InclusionModel) -> Result<Self, ModelError> {
        Self::enumerate_with_cap(model.graph().site_count(), model.particle_count(), DEFAULT_STATE_CAP)
    }

    /// Enumerates all occupation vectors in lexicographic order.
    pub fn enumerate_with_cap(s: usize, n: usize, cap: usize) -> Result<Self, ModelError> {
        let count = state_count(s, n);
        if count > cap as u128 {
            return Err(ModelError::StateSpaceTooLarge { count, cap });
        }
        let mut configs = Vec::with_capacity(count as usize);
        let mut cur = vec![0u32; s];
        fn rec(cur: &mut Vec<u32>, pos: usize, left: u32, out: &mut Vec<Configuration>) {
            if pos + 1 == cur.len() {
                cur[pos] = left;
                out.push(cur.clone());
                return;
            }
            for v in 0..=left {
                cur[pos] = v;
                rec(cur, pos + 1, left - v, out);
            }
        }
        rec(&mut cur, 0, n as u32, &mut configs);
        let index = configs.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        Ok(ConfigurationSpace { configs, index, n })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
    pub fn particle_count(&self) -> usize {
        self.n
    }
    pub fn config(&self, i: usize) -> &Configuration {
        &self.configs[i]
    }
    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }
    pub fn index_of(&self, eta: &[u32]) -> Option<usize> {
        self.index.get(eta).copied()
    }
}
