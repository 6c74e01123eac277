//! Lyapunov spectrum, per-root rates, the degenerate set `I`, Oseledets flags, their
//! two-sided intersections and geodesic tracking.

mod covariant;
mod flags;
mod tracking;

pub use covariant::{covariant_blocks, CovariantBlocks, CovariantParams};
pub use flags::{backward_flag, forward_flag, intersect_flags, BlockDecomposition, FlagEstimate, DEFAULT_FLAG_TOL};
pub use tracking::geodesic_tracking;

use alloc::vec::Vec;

use crate::liegroup::ParabolicSpec;
use crate::rng::{Domain, Stream};
use crate::{math, stats};
use crate::walk::{CocycleSystem, Orientation, ProductAccumulator};
use crate::{Error, Result};

/// Default relative clustering tolerance (fraction of the spectral spread).
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-2;

/// Exponent estimate from one trajectory: `(L(n) − L(b)) / (n − b)` with the
/// log-diagonal `L` of the accumulated product, `b` the burn-in. Entries are in the
/// accumulator's row order, not sorted, so that averaging over trials does not bias
/// exponents that fluctuate around each other.
pub fn exponent_trial(
    system: &CocycleSystem,
    seed: u64,
    trial: u64,
    n_steps: usize,
    burn_in: usize,
    orientation: Orientation,
) -> Vec<f64> {
    let mut start = Stream::new(seed, trial, Domain::Start, 0);
    let x0 = system.sample_state(&mut start);
    let domain = if orientation == Orientation::Backward { Domain::Backward } else { Domain::Forward };
    let mut rng = Stream::new(seed, trial, domain, 0);
    let cum = system.cumulative();
    let mut acc = ProductAccumulator::at_state(system.dim(), x0);
    let burn_in = burn_in.min(n_steps.saturating_sub(1));
    let mut base = acc.log_diagonal();
    for step in 0..n_steps {
        if step == burn_in {
            base = acc.log_diagonal();
        }
        let a = if cum.len() == 1 { 0 } else { rng.categorical(cum) };
        if orientation == Orientation::Backward {
            acc.advance_backward(system, a);
        } else {
            acc.advance_forward(system, a);
        }
    }
    let span = (n_steps - burn_in) as f64;
    acc.log_diagonal().iter().zip(&base).map(|(l, b)| (l - b) / span).collect()
}

/// Default burn-in: a tenth of the trajectory.
pub fn default_burn_in(n_steps: usize) -> usize {
    n_steps / 10
}

/// Floor added in quadrature to every standard error.
pub const ROUNDING_SE: f64 = f64::EPSILON;

/// Lyapunov spectrum with uncertainties and derived root data.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LyapunovReport {
    /// `λ_1 ≥ … ≥ λ_n`, nats per step.
    pub exponents: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Cluster sizes `m_1, …, m_k`.
    pub multiplicities: Vec<usize>,
    /// `λ_{α_k} = λ_k − λ_{k+1}` for `k = 1..n−1`.
    pub root_rates: Vec<f64>,
    /// Standard error of each `λ_{α_k}`, from the per-trial differences.
    pub root_rate_errors: Vec<f64>,
    /// Clustering band applied to each gap.
    pub root_tolerances: Vec<f64>,
    /// `I`: 1-based indices of the degenerate simple roots.
    pub degenerate: Vec<usize>,
    /// `I' = {n − k : k ∈ I}`.
    pub degenerate_opposite: Vec<usize>,
    pub n_steps: usize,
    pub n_trials: usize,
    pub burn_in: usize,
}

impl LyapunovReport {
    /// Merges per-trial estimates (in trial order) into a report.
    pub fn from_trials(trials: &[Vec<f64>], cluster_tol: f64, n_steps: usize, burn_in: usize) -> Result<Self> {
        let first = trials.first().ok_or_else(|| Error::Insufficient("no trials".into()))?;
        let n = first.len();
        if trials.iter().any(|t| t.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: trials.iter().map(Vec::len).find(|&l| l != n).unwrap_or(0) });
        }
        let column = |i: usize| -> Vec<f64> { trials.iter().map(|t| t[i]).collect() };
        let means: Vec<f64> = (0..n).map(|i| stats::mean(&column(i))).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| means[b].partial_cmp(&means[a]).unwrap_or(core::cmp::Ordering::Equal));
        // Rounding in the accumulated logs contributes about one ulp per step to a rate.
        let se = |xs: &[f64]| {
            let stat = if xs.len() > 1 { stats::std_err(xs) } else { 0.0 };
            math::sqrt(stat * stat + ROUNDING_SE * ROUNDING_SE)
        };
        let exponents: Vec<f64> = order.iter().map(|&i| means[i]).collect();
        let std_errors: Vec<f64> = order.iter().map(|&i| se(&column(i))).collect();
        let mut root_rates = Vec::with_capacity(n - 1);
        let mut root_rate_errors = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            let (a, b) = (order[k], order[k + 1]);
            let d: Vec<f64> = trials.iter().map(|t| t[a] - t[b]).collect();
            root_rates.push(stats::mean(&d));
            root_rate_errors.push(se(&d));
        }
        let spread = exponents[0] - exponents[n - 1];
        let root_tolerances: Vec<f64> =
            root_rate_errors.iter().map(|e| (cluster_tol * spread).max(3.0 * e)).collect();
        let mut report = Self {
            exponents,
            std_errors,
            multiplicities: Vec::new(),
            root_rates,
            root_rate_errors,
            root_tolerances,
            degenerate: Vec::new(),
            degenerate_opposite: Vec::new(),
            n_steps,
            n_trials: trials.len(),
            burn_in,
        };
        report.degenerate =
            (1..n).filter(|&k| report.root_rates[k - 1] <= report.root_tolerances[k - 1]).collect();
        report.refresh_derived();
        Ok(report)
    }

    fn refresh_derived(&mut self) {
        let n = self.dim();
        let mut opp: Vec<usize> = self.degenerate.iter().map(|&k| n - k).collect();
        opp.sort_unstable();
        self.degenerate_opposite = opp;
        self.multiplicities = self.parabolic().block_dims();
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    /// `P_I` for the degenerate set.
    pub fn parabolic(&self) -> ParabolicSpec {
        ParabolicSpec::new(self.dim(), self.degenerate.clone()).expect("degenerate roots are in range")
    }

    /// Mean exponent of each cluster, weighted by multiplicity.
    pub fn cluster_exponents(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut i = 0;
        for &m in &self.multiplicities {
            out.push(self.exponents[i..i + m].iter().sum::<f64>() / m as f64);
            i += m;
        }
        out
    }

    /// `Σ λ_i` and its combined standard error.
    pub fn trace_check(&self) -> (f64, f64) {
        let s = self.exponents.iter().sum();
        let e = self.std_errors.iter().map(|v| v * v).sum::<f64>();
        (s, crate::math::sqrt(e))
    }
}

/// Sequential estimate over `n_trials` forward trajectories of `n_steps` steps.
pub fn estimate_exponents(
    system: &CocycleSystem,
    n_steps: usize,
    n_trials: usize,
    seed: u64,
    cluster_tol: f64,
) -> Result<LyapunovReport> {
    if n_steps == 0 || n_trials == 0 {
        return Err(Error::InvalidInput("n_steps and n_trials must be at least 1".into()));
    }
    let burn = default_burn_in(n_steps);
    let trials: Vec<Vec<f64>> =
        (0..n_trials as u64).map(|t| exponent_trial(system, seed, t, n_steps, burn, Orientation::Forward)).collect();
    LyapunovReport::from_trials(&trials, cluster_tol, n_steps, burn)
}

/// Degenerate roots `I = {α_k : λ_{α_k} ≤ tol}` and their opposites `I'`.
pub fn classify_degenerate_roots(report: &LyapunovReport, tol: f64) -> (ParabolicSpec, ParabolicSpec) {
    let n = report.dim();
    let i: Vec<usize> = (1..n).filter(|&k| report.root_rates[k - 1] <= tol).collect();
    let spec = ParabolicSpec::new(n, i).expect("roots in range");
    let opp = spec.opposite();
    (spec, opp)
}
