//! Bundled scenarios and scenario directories.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::{ConfigError, ScenarioConfig};

/// `(name, JSON text)` of the bundled scenarios, in catalog order.
pub const BUNDLED: [(&str, &str); 6] = [
    ("rotation", include_str!("../scenarios/rotation.json")),
    ("diag-negative-control", include_str!("../scenarios/diag-negative-control.json")),
    ("sl2-mixed", include_str!("../scenarios/sl2-mixed.json")),
    ("sl2c-realified", include_str!("../scenarios/sl2c-realified.json")),
    ("sl3-generic", include_str!("../scenarios/sl3-generic.json")),
    ("reducible-line-control", include_str!("../scenarios/reducible-line-control.json")),
];

pub fn bundled() -> Vec<ScenarioConfig> {
    BUNDLED.iter().map(|(_, text)| ScenarioConfig::parse(text).expect("bundled scenarios parse")).collect()
}

pub fn bundled_by_name(name: &str) -> Option<ScenarioConfig> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| ScenarioConfig::parse(text).expect("bundled scenarios parse"))
}

/// Every `*.json` in `dir`, sorted by file name.
pub fn from_dir(dir: &Path) -> Result<Vec<ScenarioConfig>, ConfigError> {
    let io = |source| ConfigError::Io { path: dir.display().to_string(), source };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths.iter().map(|p| ScenarioConfig::load(p)).collect()
}

/// SHA-256 over the names and digests of `list`, in order.
pub fn catalog_digest(list: &[ScenarioConfig]) -> String {
    let mut h = Sha256::new();
    for c in list {
        h.update(c.name.as_bytes());
        h.update([0]);
        h.update(c.digest().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use cocycle_core::catalog;

    #[test]
    fn bundled_systems_match_catalog() {
        for c in bundled() {
            let a = c.validate().unwrap();
            let b = catalog::by_name(&c.name).unwrap();
            assert_eq!(a.dim(), b.dim());
            assert_eq!(a.n_atoms(), b.n_atoms());
            assert_eq!(a.n_states(), b.n_states());
            for k in 0..a.n_atoms() {
                assert_eq!(a.probability(k), b.probability(k));
                for x in 0..a.n_states() {
                    assert_eq!(a.image(k, x), b.image(k, x));
                    let d = a.matrix(k, x).matrix().sub(b.matrix(k, x).matrix()).max_abs();
                    assert!(d < 1e-15, "{} atom {k}: {d}", c.name);
                }
            }
        }
    }

    #[test]
    fn names_follow_catalog_order() {
        let names: Vec<_> = bundled().into_iter().map(|c| c.name).collect();
        assert_eq!(names, catalog::NAMES);
        assert!(bundled().iter().all(|c| !c.description.is_empty()));
    }
}
