//! Runs a configuration and writes its report, curves and tables.
//!
//! `report.json` depends only on the configuration, the seed and the crate version.
//! Wall-clock times go to `timing.json` next to it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{ConfigError, ScenarioConfig};
use crate::experiments::{Context, Curve};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the output directory when `--out` is absent.
pub const OUT_ENV: &str = "COCYCLE_LAB_OUT";

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentRecord {
    pub kind: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// File names under `curves/`.
    pub curves: Vec<String>,
    pub tables: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub description: String,
    pub digest: String,
    pub seed: u64,
    pub version: String,
    pub experiments: Vec<ExperimentRecord>,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.experiments.iter().any(|e| e.status == Status::Failed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Result of the first successful experiment of `kind`.
    pub fn result(&self, kind: &str) -> Option<&serde_json::Value> {
        self.experiments.iter().find(|e| e.kind == kind && e.status == Status::Ok).and_then(|e| e.result.as_ref())
    }
}

/// Everything a run produces, before it is written.
pub struct RunOutput {
    pub report: RunReport,
    /// `(file name, CSV text)` for curves and tables.
    pub curves: Vec<(String, String)>,
    pub tables: Vec<(String, String)>,
    /// Seconds per experiment.
    pub timing: Vec<(String, f64)>,
}

pub fn curve_csv(c: &Curve) -> String {
    let mut s = String::from("horizon,value\n");
    for (x, y) in &c.points {
        s.push_str(&format!("{x},{y}\n"));
    }
    s
}

fn worker_count(workers: Option<usize>) -> usize {
    workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Validates and runs `config`. `seed` and `workers` override the config values.
pub fn run(config: &ScenarioConfig, seed: Option<u64>, workers: Option<usize>) -> Result<RunOutput, ConfigError> {
    let system = config.validate()?;
    if workers == Some(0) {
        return Err(ConfigError::Invalid("workers must be at least 1".into()));
    }
    let seed = seed.unwrap_or(config.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(workers.or(config.workers)))
        .build()
        .map_err(|e| ConfigError::Invalid(format!("cannot start worker pool: {e}")))?;
    let ctx = Context { system: &system, seed };
    let plan: Vec<_> = config.experiments.iter().flat_map(|e| e.expand()).collect();
    let mut records = Vec::new();
    let mut curves = Vec::new();
    let mut tables = Vec::new();
    let mut timing = Vec::new();
    for (i, e) in plan.iter().enumerate() {
        let prefix = format!("{:02}-{}", i + 1, e.kind());
        let t0 = Instant::now();
        let outcome = pool.install(|| e.run(&ctx));
        timing.push((prefix.clone(), t0.elapsed().as_secs_f64()));
        records.push(match outcome {
            Ok(o) => {
                let mut cnames = Vec::new();
                for c in &o.curves {
                    let f = format!("{prefix}-{}.csv", c.name);
                    curves.push((f.clone(), curve_csv(c)));
                    cnames.push(f);
                }
                let mut tnames = Vec::new();
                for (name, text) in o.tables {
                    let f = format!("{prefix}-{name}");
                    tables.push((f.clone(), text));
                    tnames.push(f);
                }
                ExperimentRecord { kind: e.kind().into(), status: Status::Ok, result: Some(o.result), error: None, curves: cnames, tables: tnames }
            }
            Err(msg) => ExperimentRecord { kind: e.kind().into(), status: Status::Failed, result: None, error: Some(msg), curves: vec![], tables: vec![] },
        });
    }
    let report = RunReport {
        scenario: config.name.clone(),
        description: config.description.clone(),
        digest: config.digest(),
        seed,
        version: VERSION.into(),
        experiments: records,
    };
    Ok(RunOutput { report, curves, tables, timing })
}

/// `--out`, then [`OUT_ENV`], then `out/<scenario>`.
pub fn output_dir(flag: Option<&Path>, scenario: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => Path::new("out").join(scenario),
    }
}

impl RunOutput {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir.join("curves"))?;
        std::fs::write(dir.join("report.json"), self.report.to_json())?;
        for (f, text) in &self.curves {
            std::fs::write(dir.join("curves").join(f), text)?;
        }
        for (f, text) in &self.tables {
            std::fs::write(dir.join(f), text)?;
        }
        let timing: serde_json::Map<String, serde_json::Value> =
            self.timing.iter().map(|(k, v)| (k.clone(), serde_json::json!(v))).collect();
        std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")
    }
}
