//! Model definition files.
//!
//! A model file is TOML with keys `sites` (ordered identifiers), `rates`
//! (list of `[from, to, value]` triples), `measure` (site → positive real),
//! and optionally `N` and `d_N`. The diffusion parameter may be a literal
//! number or a rule string such as `"N^-2"` or `"0.5*N^-1.5"` evaluated per
//! particle count.

use crate::model::{InclusionModel, ModelError, SiteGraph};
use crate::Real;
use serde::Deserialize;
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("key `d_N`: unrecognized rule {0:?}; expected a number, `N^-a`, or `c*N^-a`")]
    BadDiffusionRule(String),
    #[error("key `d_N` is missing and no override was given")]
    MissingDiffusion,
    #[error("key `N` is missing and no override was given")]
    MissingParticleCount,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Rule assigning the diffusion parameter to each particle count.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffusionRule {
    Constant(Real),
    /// `c · N^{-alpha}`
    Power { c: Real, alpha: Real },
}

impl DiffusionRule {
    pub fn evaluate(&self, n: usize) -> Real {
        match self {
            DiffusionRule::Constant(d) => *d,
            DiffusionRule::Power { c, alpha } => c * (n as Real).powf(-alpha),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DiffusionRule::Constant(d) => format!("{d}"),
            DiffusionRule::Power { c, alpha } if *c == 1.0 => format!("N^-{alpha}"),
            DiffusionRule::Power { c, alpha } => format!("{c}*N^-{alpha}"),
        }
    }

    /// Parses a rule string: a bare number, `N^-a`, or `c*N^-a`.
    pub fn parse(text: &str) -> Result<Self, ModelFileError> {
        let t = text.trim();
        if let Ok(v) = t.parse::<Real>() {
            return Ok(DiffusionRule::Constant(v));
        }
        let (c, power) = match t.split_once('*') {
            Some((c_str, rest)) => {
                let c = c_str
                    .trim()
                    .parse::<Real>()
                    .map_err(|_| ModelFileError::BadDiffusionRule(text.into()))?;
                (c, rest.trim())
            }
            None => (1.0, t),
        };
        let alpha = power
            .strip_prefix("N^-")
            .or_else(|| power.strip_prefix("N^(-").and_then(|s| s.strip_suffix(')')))
            .and_then(|s| s.trim().parse::<Real>().ok())
            .ok_or_else(|| ModelFileError::BadDiffusionRule(text.into()))?;
        Ok(DiffusionRule::Power { c, alpha })
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum DiffusionField {
    Literal(f64),
    Rule(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelFile {
    sites: Vec<String>,
    rates: Vec<(String, String, f64)>,
    measure: HashMap<String, f64>,
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "d_N")]
    d_n: Option<DiffusionField>,
}

/// Parsed model file: the validated site graph plus the optional defaults
/// for `N` and the `d_N` rule.
#[derive(Debug)]
pub struct ModelFile {
    pub graph: SiteGraph,
    pub particle_count: Option<usize>,
    pub diffusion_rule: Option<DiffusionRule>,
}

impl ModelFile {
    pub fn parse_str(text: &str, origin: &str) -> Result<Self, ModelFileError> {
        let raw: RawModelFile = toml::from_str(text).map_err(|e| ModelFileError::Parse {
            path: origin.into(),
            message: e.to_string(),
        })?;
        let graph = SiteGraph::from_triples(raw.sites, &raw.rates, &raw.measure)?;
        let diffusion_rule = match raw.d_n {
            None => None,
            Some(DiffusionField::Literal(v)) => Some(DiffusionRule::Constant(v)),
            Some(DiffusionField::Rule(s)) => Some(DiffusionRule::parse(&s)?),
        };
        Ok(ModelFile { graph, particle_count: raw.n, diffusion_rule })
    }

    pub fn load(path: &Path) -> Result<Self, ModelFileError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelFileError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse_str(&text, &path.display().to_string())
    }

    /// Instantiates a model at the given particle count, falling back to the
    /// file's own `N`/`d_N` when the overrides are absent.
    pub fn instantiate(
        &self,
        n_override: Option<usize>,
        rule_override: Option<&DiffusionRule>,
    ) -> Result<InclusionModel, ModelFileError> {
        let n = n_override
            .or(self.particle_count)
            .ok_or(ModelFileError::MissingParticleCount)?;
        let rule = rule_override
            .or(self.diffusion_rule.as_ref())
            .ok_or(ModelFileError::MissingDiffusion)?;
        let model = InclusionModel::new(self.graph.clone(), n, rule.evaluate(n))?;
        Ok(model.with_schedule_tag(rule.describe()))
    }
}
