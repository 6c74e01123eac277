//! Scenario configuration: the JSON schema, validation into a [`CocycleSystem`] and
//! the canonical form used for digests.

use cocycle_core::walk::AtomSpec;
use cocycle_core::{CocycleSystem, Mat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::experiments::Experiment;

/// Configuration problems; all map to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// One atom of the measure. `base_map[i]` is the index of the image of state `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub probability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_map: Option<Vec<usize>>,
    /// Either one `n × n` matrix (rows) shared by all states, or one per state.
    pub matrices: Vec<Vec<Vec<f64>>>,
}

fn default_states() -> Vec<String> {
    vec!["x".to_string()]
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Matrix dimension.
    pub n: usize,
    #[serde(default = "default_states")]
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_distribution: Option<Vec<f64>>,
    pub atoms: Vec<AtomConfig>,
    /// Accept measures that are not symmetric.
    #[serde(default)]
    pub allow_asymmetric: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; not part of the digest and never affects results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub experiments: Vec<Experiment>,
}

fn to_mat(rows: &[Vec<f64>], what: &str) -> Result<Mat, ConfigError> {
    Mat::from_rows(rows).ok_or_else(|| ConfigError::Invalid(format!("{what}: rows of unequal length")))
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Pretty JSON with every defaulted field written out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form with `workers` removed.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.workers = None;
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }

    /// Checks everything [`CocycleSystem::new`] does not: experiment parameters.
    pub fn validate(&self) -> Result<CocycleSystem, ConfigError> {
        for (i, e) in self.experiments.iter().enumerate() {
            e.validate().map_err(|m| ConfigError::Invalid(format!("experiment {i} ({}): {m}", e.kind())))?;
        }
        if self.workers == Some(0) {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        self.system()
    }

    pub fn system(&self) -> Result<CocycleSystem, ConfigError> {
        let atoms = self
            .atoms
            .iter()
            .enumerate()
            .map(|(a, c)| {
                let matrices = c.matrices.iter().map(|m| to_mat(m, &format!("atom {a}"))).collect::<Result<Vec<_>, _>>()?;
                Ok(AtomSpec { probability: c.probability, base_map: c.base_map.clone(), matrices })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        CocycleSystem::new(self.n, self.states.clone(), atoms, self.base_distribution.clone(), self.allow_asymmetric)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Config describing `system`, with shared matrices collapsed.
    pub fn from_system(name: &str, description: &str, system: &CocycleSystem, allow_asymmetric: bool) -> Self {
        let ns = system.n_states();
        let atoms = (0..system.n_atoms())
            .map(|a| {
                let mats: Vec<Vec<Vec<f64>>> = (0..ns).map(|x| system.matrix(a, x).matrix().to_rows()).collect();
                let matrices = if mats.iter().all(|m| m == &mats[0]) { vec![mats[0].clone()] } else { mats };
                let map: Vec<usize> = (0..ns).map(|x| system.image(a, x)).collect();
                let base_map = (map.iter().enumerate().any(|(i, &y)| i != y)).then_some(map);
                AtomConfig { probability: system.probability(a), base_map, matrices }
            })
            .collect();
        let uniform = system.base_distribution().iter().all(|&p| p == 1.0 / ns as f64);
        ScenarioConfig {
            name: name.to_string(),
            description: description.to_string(),
            n: system.dim(),
            states: system.states().to_vec(),
            base_distribution: (!uniform).then(|| system.base_distribution().to_vec()),
            atoms,
            allow_asymmetric,
            seed: default_seed(),
            workers: None,
            experiments: Vec::new(),
        }
    }
}
