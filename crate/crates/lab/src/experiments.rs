//! Experiment kinds, their parameters and their execution.
//!
//! Every trial draws from streams addressed by its index, trials run on the worker
//! pool, and results are collected in trial order, so the output does not depend on
//! the number of workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use cocycle_core::oseledets::{
    self, backward_flag, covariant_blocks, forward_flag, geodesic_tracking, intersect_flags, CovariantParams,
};
use cocycle_core::rng::{Domain, Stream};
use cocycle_core::stationary::{self, AtomReport, FurstenbergRow, PullbackParams, StationarityDiagnostic};
use cocycle_core::structure::{self, FormParams, ScaledProduct, TightnessParams, TightnessReport};
use cocycle_core::walk::{sample_word, Orientation};
use cocycle_core::{stats, CocycleSystem, LyapunovReport, MeasureCloud, PartialFlagPoint, RegularityReport};

/// A named `(horizon, value)` series written as CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    pub fn new(name: impl Into<String>, xs: &[f64], ys: &[f64]) -> Self {
        Self { name: name.into(), points: xs.iter().copied().zip(ys.iter().copied()).collect() }
    }
}

/// Result of one experiment.
#[derive(Debug, Default)]
pub struct Outcome {
    pub result: serde_json::Value,
    pub curves: Vec<Curve>,
    /// Named CSV tables other than curves (header line included).
    pub tables: Vec<(String, String)>,
}

/// Shared inputs of every experiment in a run.
pub struct Context<'a> {
    pub system: &'a CocycleSystem,
    pub seed: u64,
}

fn start_state(system: &CocycleSystem, seed: u64, trial: u64) -> usize {
    system.sample_state(&mut Stream::new(seed, trial, Domain::Start, 0))
}

fn increasing(h: &[usize]) -> Result<(), String> {
    if h.is_empty() || h[0] == 0 || h.windows(2).any(|w| w[0] >= w[1]) {
        Err("horizons must be positive and strictly increasing".into())
    } else {
        Ok(())
    }
}

fn positive(v: usize, what: &str) -> Result<(), String> {
    if v == 0 {
        Err(format!("{what} must be at least 1"))
    } else {
        Ok(())
    }
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("results serialize")
}

// ---------------------------------------------------------------- parameters

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentsParams {
    pub n_steps: usize,
    pub n_trials: usize,
    pub cluster_tol: f64,
}

impl Default for ExponentsParams {
    fn default() -> Self {
        Self { n_steps: 10_000, n_trials: 16, cluster_tol: oseledets::DEFAULT_CLUSTER_TOL }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PullbackConfig {
    /// Paths (the first ones of the flag experiment) on which pullbacks are run.
    pub paths: usize,
    pub horizons: Vec<usize>,
    pub radius: f64,
    pub burn_in: usize,
    pub n_samples: usize,
    pub n_chains: usize,
    pub max_points: usize,
}

impl Default for PullbackConfig {
    fn default() -> Self {
        Self { paths: 4, horizons: vec![50, 100, 200, 400], radius: 1e-2, burn_in: 200, n_samples: 1000, n_chains: 2, max_points: 500 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlagsParams {
    /// Horizons of the forward and backward estimates; the past and the future of
    /// each two-sided path both have the largest horizon as length.
    pub horizons: Vec<usize>,
    pub n_paths: usize,
    pub flag_tol: f64,
    pub angle_tol: f64,
    /// Cluster sizes; estimated from an exponent run when absent.
    pub multiplicities: Option<Vec<usize>>,
    pub exponents: ExponentsParams,
    pub pullback: Option<PullbackConfig>,
}

impl Default for FlagsParams {
    fn default() -> Self {
        Self {
            horizons: vec![250, 500, 1000],
            n_paths: 100,
            flag_tol: oseledets::DEFAULT_FLAG_TOL,
            angle_tol: 1e-3,
            multiplicities: None,
            exponents: ExponentsParams { n_steps: 5000, n_trials: 8, ..ExponentsParams::default() },
            pullback: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConformalityParams {
    pub horizons: Vec<usize>,
    pub n_trials: usize,
    pub past: usize,
    pub tail: usize,
    /// Block dimensions, fastest first; from the exponent clusters when absent.
    pub block_dims: Option<Vec<usize>>,
    pub exponents: ExponentsParams,
    pub tightness: TightnessConfig,
    pub cauchy_tol: f64,
}

impl Default for ConformalityParams {
    fn default() -> Self {
        Self {
            horizons: vec![100, 1000, 10_000],
            n_trials: 32,
            past: 200,
            tail: 200,
            block_dims: None,
            exponents: ExponentsParams::default(),
            tightness: TightnessConfig::default(),
            cauchy_tol: FormParams::default().cauchy_tol,
        }
    }
}

/// Serializable mirror of [`TightnessParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TightnessConfig {
    pub max_slope: f64,
    pub max_ratio: f64,
    pub unbounded_growth: f64,
    pub unbounded_slope: f64,
    pub floor: f64,
}

impl Default for TightnessConfig {
    fn default() -> Self {
        let d = TightnessParams::default();
        Self { max_slope: d.max_slope, max_ratio: d.max_ratio, unbounded_growth: d.unbounded_growth, unbounded_slope: d.unbounded_slope, floor: d.floor }
    }
}

impl TightnessConfig {
    fn params(&self) -> TightnessParams {
        TightnessParams {
            max_slope: self.max_slope,
            max_ratio: self.max_ratio,
            unbounded_growth: self.unbounded_growth,
            unbounded_slope: self.unbounded_slope,
            floor: self.floor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryParams {
    pub burn_in: usize,
    /// Samples per chain.
    pub n_samples: usize,
    pub n_chains: usize,
    pub eps_min: f64,
    pub eps_max: f64,
    pub atom_threshold: f64,
    pub max_points: usize,
    /// Also write the cloud as `cloud.csv`.
    pub export_cloud: bool,
}

impl Default for StationaryParams {
    fn default() -> Self {
        Self {
            burn_in: 200,
            n_samples: 5000,
            n_chains: 4,
            eps_min: 1e-3,
            eps_max: 0.2,
            atom_threshold: stationary::DEFAULT_ATOM_THRESHOLD,
            max_points: 4000,
            export_cloud: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularityParams {
    pub cloud: StationaryParams,
    pub n_g: usize,
}

impl Default for RegularityParams {
    fn default() -> Self {
        Self { cloud: StationaryParams::default(), n_g: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FurstenbergParams {
    pub cloud: StationaryParams,
    pub n_mc: usize,
    pub exponents: ExponentsParams,
}

impl Default for FurstenbergParams {
    fn default() -> Self {
        Self {
            cloud: StationaryParams { n_samples: 250_000, ..StationaryParams::default() },
            n_mc: 1_000_000,
            exponents: ExponentsParams { n_steps: 20_000, ..ExponentsParams::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingParams {
    pub horizons: Vec<usize>,
    pub n_trials: usize,
    pub tail: usize,
    pub exponents: ExponentsParams,
}

impl Default for TrackingParams {
    fn default() -> Self {
        Self { horizons: vec![100, 1000, 10_000], n_trials: 8, tail: 2000, exponents: ExponentsParams { n_steps: 20_000, ..ExponentsParams::default() } }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullReportParams {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Exponents(ExponentsParams),
    Flags(FlagsParams),
    Blocks(FlagsParams),
    Conformality(ConformalityParams),
    Stationary(StationaryParams),
    Regularity(RegularityParams),
    Furstenberg(FurstenbergParams),
    Tracking(TrackingParams),
    FullReport(FullReportParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Exponents(_) => "exponents",
            Experiment::Flags(_) => "flags",
            Experiment::Blocks(_) => "blocks",
            Experiment::Conformality(_) => "conformality",
            Experiment::Stationary(_) => "stationary",
            Experiment::Regularity(_) => "regularity",
            Experiment::Furstenberg(_) => "furstenberg",
            Experiment::Tracking(_) => "tracking",
            Experiment::FullReport(_) => "full-report",
        }
    }

    /// `full-report` stands for every other kind with default parameters.
    pub fn expand(&self) -> Vec<Experiment> {
        match self {
            Experiment::FullReport(_) => vec![
                Experiment::Exponents(ExponentsParams::default()),
                Experiment::Flags(FlagsParams::default()),
                Experiment::Blocks(FlagsParams::default()),
                Experiment::Conformality(ConformalityParams::default()),
                Experiment::Stationary(StationaryParams::default()),
                Experiment::Regularity(RegularityParams::default()),
                Experiment::Furstenberg(FurstenbergParams::default()),
                Experiment::Tracking(TrackingParams::default()),
            ],
            e => vec![e.clone()],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        fn exps(e: &ExponentsParams) -> Result<(), String> {
            positive(e.n_steps, "n_steps")?;
            positive(e.n_trials, "n_trials")
        }
        fn cloud(c: &StationaryParams) -> Result<(), String> {
            positive(c.burn_in, "burn_in")?;
            positive(c.n_samples, "n_samples")?;
            positive(c.n_chains, "n_chains")?;
            if !(c.eps_min > 0.0 && c.eps_max >= 100.0 * c.eps_min) {
                return Err("eps grid must be positive and span at least two decades".into());
            }
            Ok(())
        }
        match self {
            Experiment::Exponents(p) => exps(p),
            Experiment::Flags(p) | Experiment::Blocks(p) => {
                increasing(&p.horizons)?;
                positive(p.n_paths, "n_paths")?;
                exps(&p.exponents)?;
                if let Some(pb) = &p.pullback {
                    increasing(&pb.horizons)?;
                    if pb.horizons.last() > p.horizons.last() {
                        return Err("pullback horizons must not exceed the flag horizons".into());
                    }
                    positive(pb.n_samples, "pullback n_samples")?;
                    positive(pb.burn_in, "pullback burn_in")?;
                    positive(pb.n_chains, "pullback n_chains")?;
                }
                Ok(())
            }
            Experiment::Conformality(p) => {
                increasing(&p.horizons)?;
                if p.horizons.len() < 2 || p.horizons[p.horizons.len() - 1] < 100 * p.horizons[0] {
                    return Err("conformality horizons must span at least two decades".into());
                }
                positive(p.n_trials, "n_trials")?;
                exps(&p.exponents)
            }
            Experiment::Stationary(p) => cloud(p),
            Experiment::Regularity(p) => {
                cloud(&p.cloud)?;
                positive(p.n_g, "n_g")
            }
            Experiment::Furstenberg(p) => {
                cloud(&p.cloud)?;
                positive(p.n_mc, "n_mc")?;
                exps(&p.exponents)
            }
            Experiment::Tracking(p) => {
                increasing(&p.horizons)?;
                positive(p.n_trials, "n_trials")?;
                exps(&p.exponents)
            }
            Experiment::FullReport(_) => Ok(()),
        }
    }

    pub fn run(&self, ctx: &Context) -> Result<Outcome, String> {
        match self {
            Experiment::Exponents(p) => run_exponents(ctx, p),
            Experiment::Flags(p) => run_flags(ctx, p, false),
            Experiment::Blocks(p) => run_flags(ctx, p, true),
            Experiment::Conformality(p) => run_conformality(ctx, p),
            Experiment::Stationary(p) => run_stationary(ctx, p),
            Experiment::Regularity(p) => run_regularity(ctx, p),
            Experiment::Furstenberg(p) => run_furstenberg(ctx, p),
            Experiment::Tracking(p) => run_tracking(ctx, p),
            Experiment::FullReport(_) => Err("full-report must be expanded before running".into()),
        }
    }
}

// ---------------------------------------------------------------- runs

/// Exponent estimate with trials spread over the pool.
pub fn exponents(ctx: &Context, p: &ExponentsParams) -> Result<LyapunovReport, String> {
    let burn = oseledets::default_burn_in(p.n_steps);
    let trials: Vec<Vec<f64>> = (0..p.n_trials as u64)
        .into_par_iter()
        .map(|t| oseledets::exponent_trial(ctx.system, ctx.seed, t, p.n_steps, burn, Orientation::Forward))
        .collect();
    LyapunovReport::from_trials(&trials, p.cluster_tol, p.n_steps, burn).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct ExponentsResult {
    report: LyapunovReport,
    exponent_sum: f64,
    exponent_sum_se: f64,
}

fn run_exponents(ctx: &Context, p: &ExponentsParams) -> Result<Outcome, String> {
    let report = exponents(ctx, p)?;
    let (exponent_sum, exponent_sum_se) = report.trace_check();
    Ok(Outcome { result: json(&ExponentsResult { report, exponent_sum, exponent_sum_se }), ..Outcome::default() })
}

struct PathRecord {
    error: Option<String>,
    converged: bool,
    residuals: Vec<f64>,
    generic: bool,
    w0: bool,
    margin: f64,
    blocks_ok: bool,
    block_margin: f64,
    point: Option<PartialFlagPoint>,
}

fn flag_path(ctx: &Context, p: &FlagsParams, mult: &[usize], t: u64) -> PathRecord {
    let mut rec = PathRecord {
        error: None,
        converged: false,
        residuals: Vec::new(),
        generic: false,
        w0: false,
        margin: 0.0,
        blocks_ok: false,
        block_margin: 0.0,
        point: None,
    };
    let h = *p.horizons.last().expect("validated");
    let word = sample_word(ctx.system, ctx.seed, t, 2 * h, Orientation::TwoSided { origin: h });
    let x0 = start_state(ctx.system, ctx.seed, t);
    let fw = forward_flag(ctx.system, &word, x0, &p.horizons, mult, p.flag_tol);
    let bw = backward_flag(ctx.system, &word, x0, &p.horizons, mult, p.flag_tol);
    let (fw, bw) = match (fw, bw) {
        (Ok(f), Ok(b)) => (f, b),
        (Err(e), _) | (_, Err(e)) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    rec.converged = fw.converged && bw.converged;
    rec.residuals = fw.residuals.clone();
    match structure::transversality(&fw, &bw, p.angle_tol) {
        Ok(t) => {
            rec.generic = t.failures == 0;
            rec.w0 = t.label.is_longest();
            rec.margin = t.margin;
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    if let Ok(b) = intersect_flags(&fw, &bw, p.angle_tol) {
        rec.blocks_ok = b.dims == mult;
        rec.block_margin = b.margin;
    }
    rec.point = Some(fw.point);
    rec
}

#[derive(Serialize)]
struct PullbackSummary {
    paths: usize,
    horizons: Vec<usize>,
    median_mass: Vec<f64>,
    min_final_mass: f64,
    max_final_distance: f64,
    stationary: bool,
}

#[derive(Serialize)]
struct FlagsResult {
    multiplicities: Vec<usize>,
    n_paths: usize,
    errors: usize,
    converged_fraction: f64,
    transversal_fraction: f64,
    w0_fraction: f64,
    margin_min: f64,
    margin_median: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pullback: Option<PullbackSummary>,
}

#[derive(Serialize)]
struct BlocksResult {
    multiplicities: Vec<usize>,
    n_paths: usize,
    errors: usize,
    dims_match_fraction: f64,
    margin_min: f64,
    margin_median: f64,
}

fn fraction(recs: &[PathRecord], f: impl Fn(&PathRecord) -> bool) -> f64 {
    recs.iter().filter(|r| f(r)).count() as f64 / recs.len() as f64
}

fn simulate_cloud(ctx: &Context, burn_in: usize, n_samples: usize, n_chains: usize) -> Result<MeasureCloud, String> {
    let chains = (0..n_chains as u64)
        .into_par_iter()
        .map(|c| stationary::simulate_chain(ctx.system, burn_in, n_samples, ctx.seed, c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    stationary::cloud_from_chains(ctx.system, chains).map_err(|e| e.to_string())
}

fn run_flags(ctx: &Context, p: &FlagsParams, blocks: bool) -> Result<Outcome, String> {
    let mult = match &p.multiplicities {
        Some(m) => m.clone(),
        None => exponents(ctx, &p.exponents)?.multiplicities,
    };
    if mult.iter().sum::<usize>() != ctx.system.dim() || mult.contains(&0) {
        return Err(format!("multiplicities {mult:?} do not partition the dimension"));
    }
    let recs: Vec<PathRecord> = (0..p.n_paths as u64).into_par_iter().map(|t| flag_path(ctx, p, &mult, t)).collect();
    let errors = recs.iter().filter(|r| r.error.is_some()).count();
    if errors == recs.len() {
        return Err(format!("every path failed; first error: {}", recs[0].error.as_deref().unwrap_or("")));
    }
    if blocks {
        let margins: Vec<f64> = recs.iter().filter(|r| r.blocks_ok).map(|r| r.block_margin).collect();
        let res = BlocksResult {
            multiplicities: mult,
            n_paths: recs.len(),
            errors,
            dims_match_fraction: fraction(&recs, |r| r.blocks_ok),
            margin_min: margins.iter().copied().fold(f64::INFINITY, f64::min),
            margin_median: if margins.is_empty() { 0.0 } else { stats::median(&margins) },
        };
        return Ok(Outcome { result: json(&res), ..Outcome::default() });
    }

    let margins: Vec<f64> = recs.iter().filter(|r| r.error.is_none()).map(|r| r.margin).collect();
    let mut curves = Vec::new();
    let nres = p.horizons.len().saturating_sub(1);
    if nres > 0 {
        let med: Vec<f64> = (0..nres)
            .map(|i| {
                let v: Vec<f64> = recs.iter().filter_map(|r| r.residuals.get(i).copied()).collect();
                if v.is_empty() { f64::NAN } else { stats::median(&v) }
            })
            .collect();
        let xs: Vec<f64> = p.horizons[1..].iter().map(|&h| h as f64).collect();
        curves.push(Curve::new("forward-flag-residual-median", &xs, &med));
    }

    let pullback = match &p.pullback {
        None => None,
        Some(pb) => {
            let cloud = simulate_cloud(ctx, pb.burn_in, pb.n_samples, pb.n_chains)?;
            let h = *p.horizons.last().expect("validated");
            let params = PullbackParams { radius: pb.radius, max_points: pb.max_points };
            let chosen: Vec<u64> = (0..recs.len() as u64).filter(|&t| recs[t as usize].point.is_some()).take(pb.paths).collect();
            let runs = chosen
                .par_iter()
                .map(|&t| {
                    let point = recs[t as usize].point.as_ref().expect("filtered");
                    let word = sample_word(ctx.system, ctx.seed, t, 2 * h, Orientation::TwoSided { origin: h });
                    let x0 = start_state(ctx.system, ctx.seed, t);
                    stationary::pullback_limit(ctx.system, &cloud, &word, x0, &pb.horizons, point.spec(), Some(point), &params)
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            let median_mass: Vec<f64> =
                (0..pb.horizons.len()).map(|i| stats::median(&runs.iter().map(|r| r[i].mass).collect::<Vec<_>>())).collect();
            let xs: Vec<f64> = pb.horizons.iter().map(|&h| h as f64).collect();
            curves.push(Curve::new("pullback-mass-median", &xs, &median_mass));
            Some(PullbackSummary {
                paths: runs.len(),
                horizons: pb.horizons.clone(),
                median_mass,
                min_final_mass: runs.iter().map(|r| r[r.len() - 1].mass).fold(f64::INFINITY, f64::min),
                max_final_distance: runs.iter().map(|r| r[r.len() - 1].reference_distance.unwrap_or(f64::INFINITY)).fold(0.0, f64::max),
                stationary: cloud.is_stationary(),
            })
        }
    };
    let res = FlagsResult {
        multiplicities: mult,
        n_paths: recs.len(),
        errors,
        converged_fraction: fraction(&recs, |r| r.converged),
        transversal_fraction: fraction(&recs, |r| r.generic),
        w0_fraction: fraction(&recs, |r| r.w0),
        margin_min: margins.iter().copied().fold(f64::INFINITY, f64::min),
        margin_median: if margins.is_empty() { 0.0 } else { stats::median(&margins) },
        pullback,
    };
    Ok(Outcome { result: json(&res), curves, ..Outcome::default() })
}

struct FormRecord {
    transfer: f64,
    cauchy: f64,
    defect: f64,
}

struct ConformalityTrial {
    /// `[block][horizon]`.
    defects: Vec<Vec<f64>>,
    invariance: Vec<f64>,
    conjugation: Vec<f64>,
    rates: Vec<f64>,
    /// Per block; `Err` carries the non-Cauchy residual.
    forms: Vec<Option<Result<FormRecord, f64>>>,
}

fn conformality_trial(ctx: &Context, p: &ConformalityParams, dims: &[usize], t: u64) -> Result<ConformalityTrial, String> {
    let h = *p.horizons.last().expect("validated");
    let word = sample_word(ctx.system, ctx.seed, t, p.past + h + p.tail, Orientation::TwoSided { origin: p.past });
    let x0 = start_state(ctx.system, ctx.seed, t);
    let cb = covariant_blocks(ctx.system, &word, x0, dims, CovariantParams { past: p.past, future: h, tail: p.tail }).map_err(|e| e.to_string())?;
    let conf = structure::conformality_along(&cb, &p.horizons).map_err(|e| e.to_string())?;
    let conj = structure::conjugation_along(&cb, &p.horizons).map_err(|e| e.to_string())?;
    let fp = FormParams { cauchy_tol: p.cauchy_tol, ..FormParams::default() };
    let forms = cb
        .steps
        .iter()
        .map(|steps| {
            if steps[0].rows() < 2 {
                return None;
            }
            Some(match structure::estimate_invariant_form(steps, &fp) {
                Ok(f) => {
                    let mut prod = ScaledProduct::identity(steps[0].rows());
                    steps.iter().for_each(|m| prod.push(m));
                    let defect = structure::defect_in_form(prod.matrix(), &f.form).unwrap_or(f64::INFINITY);
                    Ok(FormRecord { transfer: f.transfer_residual, cauchy: f.cauchy_residual, defect })
                }
                Err(cocycle_core::Error::NotCauchy { residual }) => Err(residual),
                Err(_) => Err(f64::INFINITY),
            })
        })
        .collect();
    Ok(ConformalityTrial {
        defects: conf.blocks.iter().map(|b| b.defects.clone()).collect(),
        invariance: cb.residuals.clone(),
        conjugation: conj.residuals,
        rates: conj.block_rates.last().cloned().unwrap_or_default(),
        forms,
    })
}

#[derive(Serialize)]
struct FormSummary {
    trials: usize,
    non_cauchy: usize,
    max_transfer_residual: f64,
    max_cauchy_residual: f64,
    max_form_defect: f64,
}

#[derive(Serialize)]
struct BlockSummary {
    dim: usize,
    tightness: TightnessReport,
    /// Largest defect over trials, per horizon.
    max_defect: Vec<f64>,
    max_invariance_residual: f64,
    /// Only estimated on tight blocks of dimension ≥ 2.
    #[serde(skip_serializing_if = "Option::is_none")]
    form: Option<FormSummary>,
    rate: f64,
    rate_se: f64,
    exponent: f64,
    exponent_se: f64,
    rate_z: f64,
}

#[derive(Serialize)]
struct ConformalityResult {
    block_dims: Vec<usize>,
    horizons: Vec<usize>,
    n_trials: usize,
    errors: usize,
    blocks: Vec<BlockSummary>,
    /// Median over trials of the max-over-blocks orthogonality defect.
    conjugation_residual_median: Vec<f64>,
}

fn run_conformality(ctx: &Context, p: &ConformalityParams) -> Result<Outcome, String> {
    let rep = exponents(ctx, &p.exponents)?;
    let dims = p.block_dims.clone().unwrap_or_else(|| rep.multiplicities.clone());
    if dims.iter().sum::<usize>() != ctx.system.dim() || dims.contains(&0) {
        return Err(format!("block dimensions {dims:?} do not partition the dimension"));
    }
    let runs: Vec<Result<ConformalityTrial, String>> =
        (0..p.n_trials as u64).into_par_iter().map(|t| conformality_trial(ctx, p, &dims, t)).collect();
    let errors = runs.iter().filter(|r| r.is_err()).count();
    let ok: Vec<&ConformalityTrial> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    if ok.is_empty() {
        return Err(format!("every trial failed; first error: {}", runs[0].as_ref().err().map_or("", |s| s.as_str())));
    }
    let xs: Vec<f64> = p.horizons.iter().map(|&h| h as f64).collect();
    let mut curves = Vec::new();
    let mut blocks = Vec::new();
    let mut offset = 0;
    for (l, &d) in dims.iter().enumerate() {
        let by_h: Vec<Vec<f64>> = (0..p.horizons.len()).map(|i| ok.iter().map(|r| r.defects[l][i]).collect()).collect();
        let tightness = structure::schmidt_tightness(&p.horizons, &by_h, &p.tightness.params()).map_err(|e| e.to_string())?;
        curves.push(Curve::new(format!("block{}-defect-median", l + 1), &xs, &tightness.medians));
        curves.push(Curve::new(format!("block{}-defect-p95", l + 1), &xs, &tightness.p95));
        let form = (d >= 2 && tightness.verdict == structure::Tightness::Tight).then(|| {
            let fs: Vec<&Result<FormRecord, f64>> = ok.iter().filter_map(|r| r.forms[l].as_ref()).collect();
            let good: Vec<&FormRecord> = fs.iter().filter_map(|f| f.as_ref().ok()).collect();
            FormSummary {
                trials: fs.len(),
                non_cauchy: fs.len() - good.len(),
                max_transfer_residual: good.iter().map(|f| f.transfer).fold(0.0, f64::max),
                max_cauchy_residual: good.iter().map(|f| f.cauchy).fold(0.0, f64::max),
                max_form_defect: good.iter().map(|f| f.defect).fold(0.0, f64::max),
            }
        });
        let rates: Vec<f64> = ok.iter().map(|r| r.rates[l]).collect();
        let rate = stats::mean(&rates);
        let rate_se = if rates.len() > 1 { stats::std_err(&rates) } else { 0.0 };
        let exponent = rep.exponents[offset..offset + d].iter().sum::<f64>() / d as f64;
        let exponent_se = rep.std_errors[offset..offset + d].iter().sum::<f64>() / d as f64;
        let combined = (rate_se * rate_se + exponent_se * exponent_se).sqrt();
        let diff = (rate - exponent).abs();
        let rate_z = if diff <= 1e-12 { 0.0 } else if combined > 0.0 { diff / combined } else { f64::INFINITY };
        offset += d;
        blocks.push(BlockSummary {
            dim: d,
            max_defect: by_h.iter().map(|d| d.iter().copied().fold(0.0, f64::max)).collect(),
            tightness,
            max_invariance_residual: ok.iter().map(|r| r.invariance[l]).fold(0.0, f64::max),
            form,
            rate,
            rate_se,
            exponent,
            exponent_se,
            rate_z,
        });
    }
    let conjugation_residual_median: Vec<f64> =
        (0..p.horizons.len()).map(|i| stats::median(&ok.iter().map(|r| r.conjugation[i]).collect::<Vec<_>>())).collect();
    curves.push(Curve::new("conjugation-residual-median", &xs, &conjugation_residual_median));
    let res = ConformalityResult { block_dims: dims, horizons: p.horizons.clone(), n_trials: runs.len(), errors, blocks, conjugation_residual_median };
    Ok(Outcome { result: json(&res), curves, ..Outcome::default() })
}

/// `weight,state,b_00,…` rows of the flag bases, row-major.
pub fn cloud_csv(system: &CocycleSystem, cloud: &MeasureCloud) -> String {
    let n = cloud.dim();
    let mut out = String::from("weight,state");
    for i in 0..n {
        for j in 0..n {
            out.push_str(&format!(",b{i}{j}"));
        }
    }
    out.push('\n');
    for ((w, &x), z) in cloud.weights().iter().zip(cloud.states()).zip(cloud.flags()) {
        out.push_str(&format!("{w:e},{}", system.states()[x]));
        for v in z.basis().as_slice() {
            out.push_str(&format!(",{v:e}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct StationaryResult {
    samples: usize,
    diagnostic: Option<StationarityDiagnostic>,
    atom: AtomReport,
}

fn run_stationary(ctx: &Context, p: &StationaryParams) -> Result<Outcome, String> {
    let cloud = simulate_cloud(ctx, p.burn_in, p.n_samples, p.n_chains)?;
    let grid = stationary::geometric_grid(p.eps_min, p.eps_max);
    let atom = stationary::atom_test(&cloud, &grid, p.atom_threshold, p.max_points).map_err(|e| e.to_string())?;
    let curves = vec![Curve::new("atom-ball-mass", &atom.radii, &atom.masses)];
    let tables = if p.export_cloud { vec![("cloud.csv".to_string(), cloud_csv(ctx.system, &cloud))] } else { Vec::new() };
    let res = StationaryResult { samples: cloud.len(), diagnostic: cloud.diagnostic().cloned(), atom };
    Ok(Outcome { result: json(&res), curves, tables })
}

#[derive(Serialize)]
struct RegularityResult {
    samples: usize,
    stationary: bool,
    report: RegularityReport,
}

fn run_regularity(ctx: &Context, p: &RegularityParams) -> Result<Outcome, String> {
    let c = &p.cloud;
    let cloud = simulate_cloud(ctx, c.burn_in, c.n_samples, c.n_chains)?;
    let grid = stationary::geometric_grid(c.eps_min, c.eps_max);
    let params = stationary::RegularityParams { n_g: p.n_g, max_points: c.max_points, atom_threshold: c.atom_threshold };
    let report = stationary::regularity_scan(&cloud, &grid, &params, ctx.seed).map_err(|e| e.to_string())?;
    let curves = vec![Curve::new("regularity-worst-mass", &report.eps, &report.masses)];
    Ok(Outcome { result: json(&RegularityResult { samples: cloud.len(), stationary: cloud.is_stationary(), report }), curves, ..Outcome::default() })
}

#[derive(Serialize)]
struct FurstenbergResult {
    samples: usize,
    n_mc: usize,
    rows: Vec<FurstenbergRow>,
    max_z: f64,
    consistent: bool,
}

fn run_furstenberg(ctx: &Context, p: &FurstenbergParams) -> Result<Outcome, String> {
    let c = &p.cloud;
    let cloud = simulate_cloud(ctx, c.burn_in, c.n_samples, c.n_chains)?;
    let rep = exponents(ctx, &p.exponents)?;
    let rows = stationary::furstenberg_check(ctx.system, &cloud, &rep, p.n_mc, ctx.seed).map_err(|e| e.to_string())?;
    let max_z = rows.iter().map(|r| r.z).fold(0.0, f64::max);
    let res = FurstenbergResult { samples: cloud.len(), n_mc: p.n_mc, consistent: max_z <= 3.0, max_z, rows };
    Ok(Outcome { result: json(&res), ..Outcome::default() })
}

#[derive(Serialize)]
struct TrackingResult {
    horizons: Vec<usize>,
    exponents: Vec<f64>,
    exponent_norm: f64,
    median_defect: Vec<f64>,
    /// `median_defect / ‖Λ‖`.
    relative: Vec<f64>,
    errors: usize,
}

fn run_tracking(ctx: &Context, p: &TrackingParams) -> Result<Outcome, String> {
    let rep = exponents(ctx, &p.exponents)?;
    let h = *p.horizons.last().expect("validated");
    let runs: Vec<Result<Vec<f64>, String>> = (0..p.n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let word = sample_word(ctx.system, ctx.seed, t, h + p.tail, Orientation::Forward);
            let x0 = start_state(ctx.system, ctx.seed, t);
            geodesic_tracking(ctx.system, &word, x0, &p.horizons, &rep.exponents, p.tail).map_err(|e| e.to_string())
        })
        .collect();
    let ok: Vec<&Vec<f64>> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    if ok.is_empty() {
        return Err(format!("every trial failed; first error: {}", runs[0].as_ref().err().map_or("", |s| s.as_str())));
    }
    let median_defect: Vec<f64> = (0..p.horizons.len()).map(|i| stats::median(&ok.iter().map(|d| d[i]).collect::<Vec<_>>())).collect();
    let exponent_norm = rep.exponents.iter().map(|l| l * l).sum::<f64>().sqrt();
    let relative: Vec<f64> = median_defect.iter().map(|d| if exponent_norm > 0.0 { d / exponent_norm } else { f64::INFINITY }).collect();
    let xs: Vec<f64> = p.horizons.iter().map(|&h| h as f64).collect();
    let curves = vec![Curve::new("tracking-defect-median", &xs, &median_defect)];
    let res = TrackingResult { horizons: p.horizons.clone(), exponents: rep.exponents.clone(), exponent_norm, median_defect, relative, errors: runs.len() - ok.len() };
    Ok(Outcome { result: json(&res), curves, ..Outcome::default() })
}
