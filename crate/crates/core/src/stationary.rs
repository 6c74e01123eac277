//! Stationary measures on `X × SL(n)/B` as weighted sample clouds, with pullback
//! limits, regularity and atom scans, and the boundary-integral formula for the
//! root exponents.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::boundary::{self, FullFlag, PartialFlagPoint};
use crate::liegroup::{self, GroupElement, ParabolicSpec};
use crate::linalg;
use crate::oseledets::LyapunovReport;
use crate::rng::{Domain, Stream};
use crate::walk::{base_path, CocycleSystem, Word};
use crate::{math, stats, Error, Result};

/// Tolerance on the total weight of a cloud.
pub const WEIGHT_TOL: f64 = 1e-12;
/// Number of batches used for batch-means standard errors.
pub const BATCHES: usize = 32;
/// Default mass threshold of [`atom_test`].
pub const DEFAULT_ATOM_THRESHOLD: f64 = 0.1;
/// Ball centres tried when searching for the heaviest ball.
pub const MAX_CENTERS: usize = 64;

/// A smooth test function on `X × SL(n)/B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TestFunction {
    /// Indicator of a base state.
    State(usize),
    /// Entry `(i, j)` of the orthogonal projector onto a level of the flag.
    Projector { level: usize, i: usize, j: usize },
}

impl TestFunction {
    pub fn eval(&self, x: usize, z: &FullFlag) -> f64 {
        match *self {
            TestFunction::State(s) => f64::from(u8::from(x == s)),
            TestFunction::Projector { level, i, j } => {
                let b = z.basis();
                (0..level).map(|c| b[(i, c)] * b[(j, c)]).sum()
            }
        }
    }

    pub fn name(&self) -> String {
        match *self {
            TestFunction::State(s) => format!("state[{s}]"),
            TestFunction::Projector { level, i, j } => format!("proj{level}[{i},{j}]"),
        }
    }
}

/// Fixed battery: all but one state indicator, the leading diagonal entries of each
/// level projector (the last diagonal entry is determined by the trace) and one
/// off-diagonal entry of the line projector.
pub fn test_battery(n: usize, n_states: usize) -> Vec<TestFunction> {
    let mut out: Vec<TestFunction> = (0..n_states.saturating_sub(1)).map(TestFunction::State).collect();
    for level in 1..n {
        for i in 0..n - 1 {
            out.push(TestFunction::Projector { level, i, j: i });
        }
    }
    if n >= 2 {
        out.push(TestFunction::Projector { level: 1, i: 0, j: 1 });
    }
    out
}

/// Convolution check of one test function.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TestCheck {
    pub name: String,
    /// `∫ f d(cloud)`.
    pub direct: f64,
    /// `∫ f d(μ ∗ cloud)`.
    pub convolved: f64,
    /// Batch-means standard error of the difference.
    pub se: f64,
    pub z: f64,
    /// Largest `|mean_c − pooled| / se_c` over chains, `se_c` by batch means.
    pub chain_spread: f64,
}

/// Stationarity diagnostic attached to a simulated cloud.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StationarityDiagnostic {
    pub checks: Vec<TestCheck>,
    pub max_z: f64,
    /// Every `|convolved − direct| ≤ 3·se`.
    pub passed: bool,
    /// Largest chain spread over the battery; large values suggest several ergodic
    /// components reached from different starts.
    pub max_chain_spread: f64,
}

/// Weighted samples `(w_i, x_i, z_i)` of a measure on `X × SL(n)/B`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeasureCloud {
    weights: Vec<f64>,
    states: Vec<usize>,
    flags: Vec<FullFlag>,
    diagnostic: Option<StationarityDiagnostic>,
}

impl MeasureCloud {
    pub fn new(weights: Vec<f64>, states: Vec<usize>, flags: Vec<FullFlag>) -> Result<Self> {
        if flags.is_empty() {
            return Err(Error::InvalidInput("empty cloud".into()));
        }
        if weights.len() != flags.len() || states.len() != flags.len() {
            return Err(Error::DimensionMismatch { expected: flags.len(), got: weights.len().min(states.len()) });
        }
        let n = flags[0].dim();
        if flags.iter().any(|f| f.dim() != n) {
            return Err(Error::InvalidInput("cloud flags of different dimensions".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("cloud weights must be positive".into()));
        }
        let total = compensated_sum(&weights);
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidInput(format!("cloud weights must sum to 1 within {WEIGHT_TOL:e} (got {total})")));
        }
        Ok(Self { weights, states, flags, diagnostic: None })
    }

    /// Equal weights.
    pub fn uniform(states: Vec<usize>, flags: Vec<FullFlag>) -> Result<Self> {
        let w = 1.0 / flags.len().max(1) as f64;
        Self::new(vec![w; flags.len()], states, flags)
    }

    pub fn point_mass(state: usize, flag: FullFlag) -> Self {
        Self { weights: vec![1.0], states: vec![state], flags: vec![flag], diagnostic: None }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.flags[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn flags(&self) -> &[FullFlag] {
        &self.flags
    }

    pub fn diagnostic(&self) -> Option<&StationarityDiagnostic> {
        self.diagnostic.as_ref()
    }

    /// False only when a diagnostic is attached and failed.
    pub fn is_stationary(&self) -> bool {
        self.diagnostic.as_ref().is_none_or(|d| d.passed)
    }

    /// `∫ f d(cloud)`.
    pub fn integrate(&self, f: impl Fn(usize, &FullFlag) -> f64) -> f64 {
        self.weights.iter().zip(&self.states).zip(&self.flags).map(|((w, &x), z)| w * f(x, z)).sum()
    }

    /// The conditional cloud `η_x`; `None` when no sample sits over `x`.
    pub fn conditioned(&self, x: usize) -> Option<MeasureCloud> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.states[i] == x).collect();
        if idx.is_empty() {
            return None;
        }
        let total: f64 = idx.iter().map(|&i| self.weights[i]).sum();
        Some(MeasureCloud {
            weights: idx.iter().map(|&i| self.weights[i] / total).collect(),
            states: vec![x; idx.len()],
            flags: idx.iter().map(|&i| self.flags[i].clone()).collect(),
            diagnostic: None,
        })
    }

    /// At most `max` samples at evenly spaced indices, renormalised.
    pub fn thinned(&self, max: usize) -> MeasureCloud {
        if self.len() <= max || max == 0 {
            return self.clone();
        }
        let idx: Vec<usize> = (0..max).map(|k| k * self.len() / max).collect();
        let total: f64 = idx.iter().map(|&i| self.weights[i]).sum();
        MeasureCloud {
            weights: idx.iter().map(|&i| self.weights[i] / total).collect(),
            states: idx.iter().map(|&i| self.states[i]).collect(),
            flags: idx.iter().map(|&i| self.flags[i].clone()).collect(),
            diagnostic: self.diagnostic.clone(),
        }
    }
}

/// Neumaier summation; naive sums of 10⁶ equal weights drift by more than 1e-12.
fn compensated_sum(xs: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// Running sums for one test function along one chain.
#[derive(Clone, Debug, Default)]
struct TestSums {
    f: f64,
    d: f64,
    f_batches: Vec<f64>,
    d_batches: Vec<f64>,
}

/// Samples of one stationary chain, with the diagnostic sums for the battery.
#[derive(Clone, Debug)]
pub struct ChainSamples {
    states: Vec<usize>,
    flags: Vec<FullFlag>,
    sums: Vec<TestSums>,
    batch_len: usize,
}

impl ChainSamples {
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }
}

/// `(Pf)(x, z) = Σ_g μ(g) f(g·(x, z))` for every test function.
fn convolve(system: &CocycleSystem, battery: &[TestFunction], x: usize, z: &FullFlag, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for a in 0..system.n_atoms() {
        let (m, y) = system.step_forward(a, x);
        let gz = z.act_matrix(m);
        let p = system.probability(a);
        for (o, f) in out.iter_mut().zip(battery) {
            *o += p * f.eval(y, &gz);
        }
    }
}

/// One chain of `(x, z) ↦ (g x, A(g, x) z)` from a random start, keeping the
/// `n_samples` states after `burn_in` steps.
pub fn simulate_chain(system: &CocycleSystem, burn_in: usize, n_samples: usize, seed: u64, chain: u64) -> Result<ChainSamples> {
    if burn_in == 0 || n_samples == 0 {
        return Err(Error::InvalidInput("burn_in and n_samples must be at least 1".into()));
    }
    let n = system.dim();
    let battery = test_battery(n, system.n_states());
    let mut start = Stream::new(seed, chain, Domain::Start, 0);
    let mut x = system.sample_state(&mut start);
    let mut z = FullFlag::random(&mut start, n);
    let mut rng = Stream::new(seed, chain, Domain::Chain, 0);
    let cum = system.cumulative().to_vec();
    let mut step = |x: &mut usize, z: &mut FullFlag| {
        let a = rng.categorical(&cum);
        let (m, y) = system.step_forward(a, *x);
        *z = z.act_matrix(m);
        *x = y;
    };
    for _ in 0..burn_in {
        step(&mut x, &mut z);
    }
    let batch_len = n_samples.div_ceil(BATCHES);
    let nb = n_samples.div_ceil(batch_len);
    let mut sums = vec![TestSums { f_batches: vec![0.0; nb], d_batches: vec![0.0; nb], ..TestSums::default() }; battery.len()];
    let mut states = Vec::with_capacity(n_samples);
    let mut flags = Vec::with_capacity(n_samples);
    let mut pf = vec![0.0; battery.len()];
    for t in 0..n_samples {
        convolve(system, &battery, x, &z, &mut pf);
        states.push(x);
        flags.push(z.clone());
        let f0: Vec<f64> = battery.iter().map(|f| f.eval(x, &z)).collect();
        step(&mut x, &mut z);
        for (k, s) in sums.iter_mut().enumerate() {
            s.f += f0[k];
            s.d += pf[k] - f0[k];
            s.f_batches[t / batch_len] += f0[k];
            s.d_batches[t / batch_len] += pf[k] - f0[k];
        }
    }
    Ok(ChainSamples { states, flags, sums, batch_len })
}

fn batch_means(sums: &[f64], batch_len: usize, total_len: usize) -> Vec<f64> {
    sums.iter().enumerate().map(|(b, s)| s / (batch_len.min(total_len - b * batch_len)) as f64).collect()
}

fn batch_se(sums: &[f64], batch_len: usize, total_len: usize) -> f64 {
    let means = batch_means(sums, batch_len, total_len);
    if means.len() < 2 {
        0.0
    } else {
        stats::std_err(&means)
    }
}

/// Pools chains (in the given order) into an equal-weight cloud with its diagnostic.
pub fn cloud_from_chains(system: &CocycleSystem, chains: Vec<ChainSamples>) -> Result<MeasureCloud> {
    let battery = test_battery(system.dim(), system.n_states());
    let total: usize = chains.iter().map(ChainSamples::len).sum();
    if total == 0 {
        return Err(Error::Insufficient("no chain samples".into()));
    }
    let nf = total as f64;
    let mut checks = Vec::with_capacity(battery.len());
    for (k, f) in battery.iter().enumerate() {
        let sf: f64 = chains.iter().map(|c| c.sums[k].f).sum();
        let sd: f64 = chains.iter().map(|c| c.sums[k].d).sum();
        let direct = sf / nf;
        let diff = sd / nf;
        let means: Vec<f64> = chains.iter().flat_map(|c| batch_means(&c.sums[k].d_batches, c.batch_len, c.len())).collect();
        let se = if means.len() > 1 { stats::std_err(&means) } else { 0.0 };
        let z = score(diff, se);
        let mut spread: f64 = 0.0;
        if chains.len() > 1 {
            for c in &chains {
                let mean_c = c.sums[k].f / c.len() as f64;
                let se_c = batch_se(&c.sums[k].f_batches, c.batch_len, c.len());
                spread = spread.max(score(mean_c - direct, se_c));
            }
        }
        checks.push(TestCheck { name: f.name(), direct, convolved: direct + diff, se, z, chain_spread: spread });
    }
    let max_z = checks.iter().map(|c| c.z).fold(0.0, f64::max);
    let max_chain_spread = checks.iter().map(|c| c.chain_spread).fold(0.0, f64::max);
    let passed = checks.iter().all(|c| c.z <= 3.0);
    let mut states = Vec::with_capacity(total);
    let mut flags = Vec::with_capacity(total);
    for c in chains {
        states.extend(c.states);
        flags.extend(c.flags);
    }
    let mut cloud = MeasureCloud::uniform(states, flags)?;
    cloud.diagnostic = Some(StationarityDiagnostic { checks, max_z, passed, max_chain_spread });
    Ok(cloud)
}

/// `|diff| / se`, with exact agreement scoring 0 even when `se = 0`.
fn score(diff: f64, se: f64) -> f64 {
    if diff.abs() <= 1e-12 {
        0.0
    } else if se > 0.0 {
        diff.abs() / se
    } else {
        f64::INFINITY
    }
}

/// `n_chains` chains of `n_samples` each after `burn_in`, pooled in chain order.
pub fn simulate_stationary(system: &CocycleSystem, burn_in: usize, n_samples: usize, n_chains: usize, seed: u64) -> Result<MeasureCloud> {
    if n_chains == 0 {
        return Err(Error::InvalidInput("at least one chain".into()));
    }
    let chains = (0..n_chains as u64).map(|c| simulate_chain(system, burn_in, n_samples, seed, c)).collect::<Result<Vec<_>>>()?;
    cloud_from_chains(system, chains)
}

/// Heaviest ball found among at most [`MAX_CENTERS`] sample centres.
#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: usize,
    pub mass: f64,
}

/// Heaviest `radius`-ball among evenly spaced sample centres, for a symmetric
/// distance `dist(i, j)` on points with weights `w`.
fn heaviest_ball(w: &[f64], radius: f64, dist: impl Fn(usize, usize) -> f64) -> Ball {
    let n = w.len();
    let centers: Vec<usize> = if n <= MAX_CENTERS { (0..n).collect() } else { (0..MAX_CENTERS).map(|k| k * n / MAX_CENTERS).collect() };
    let mut best = Ball { center: centers[0], mass: 0.0 };
    for &c in &centers {
        let mass: f64 = (0..n).filter(|&i| dist(c, i) < radius).map(|i| w[i]).sum();
        if mass > best.mass {
            best = Ball { center: c, mass };
        }
    }
    best
}

/// Heaviest ball masses for each radius; centres are searched per radius.
fn ball_masses(w: &[f64], radii: &[f64], dist: impl Fn(usize, usize) -> f64) -> Vec<Ball> {
    let n = w.len();
    let centers: Vec<usize> = if n <= MAX_CENTERS { (0..n).collect() } else { (0..MAX_CENTERS).map(|k| k * n / MAX_CENTERS).collect() };
    let table: Vec<Vec<f64>> = centers.iter().map(|&c| (0..n).map(|i| dist(c, i)).collect()).collect();
    radii
        .iter()
        .map(|&r| {
            let mut best = Ball { center: centers[0], mass: 0.0 };
            for (ci, &c) in centers.iter().enumerate() {
                let mass: f64 = table[ci].iter().zip(w).filter(|(d, _)| **d < r).map(|(_, w)| w).sum();
                if mass > best.mass {
                    best = Ball { center: c, mass };
                }
            }
            best
        })
        .collect()
}

/// One horizon of a pullback sequence.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PullbackStep {
    pub horizon: usize,
    /// Base state `x_n` whose conditional cloud was pulled back.
    pub state: usize,
    /// Largest mass of a `radius`-ball in `SL(n)/P`.
    pub mass: f64,
    pub center: PartialFlagPoint,
    /// Distance from the centre to the reference point, when one is given.
    pub reference_distance: Option<f64>,
}

/// Options for [`pullback_limit`].
#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PullbackParams {
    pub radius: f64,
    /// Conditional clouds are thinned to this many samples.
    pub max_points: usize,
}

impl Default for PullbackParams {
    fn default() -> Self {
        Self { radius: 1e-2, max_points: 2000 }
    }
}

/// Pulls the conditional cloud `η_{x_n}` back by `(A^n)^{-1}` along the future of
/// `word` from `x0`, projects to `SL(n)/P` for `spec`, and reports the heaviest ball
/// at each horizon. `reference` (typically the forward flag estimate) is compared
/// with each centre.
pub fn pullback_limit(
    system: &CocycleSystem,
    cloud: &MeasureCloud,
    word: &Word,
    x0: usize,
    horizons: &[usize],
    spec: &ParabolicSpec,
    reference: Option<&PartialFlagPoint>,
    params: &PullbackParams,
) -> Result<Vec<PullbackStep>> {
    system.check_state(x0)?;
    if cloud.dim() != system.dim() || spec.dim() != system.dim() {
        return Err(Error::DimensionMismatch { expected: system.dim(), got: cloud.dim() });
    }
    let future = word.future();
    if horizons.windows(2).any(|w| w[0] >= w[1]) || horizons.last().is_some_and(|&h| h > future.len()) {
        return Err(Error::InvalidInput("horizons must increase within the word".into()));
    }
    let path = base_path(system, &future, x0);
    let mut out = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let state = path[h];
        let sub = cloud
            .conditioned(state)
            .ok_or_else(|| Error::Insufficient(format!("no cloud samples over state {state}")))?
            .thinned(params.max_points);
        let pulled: Vec<PartialFlagPoint> = sub
            .flags()
            .iter()
            .map(|z| {
                let mut basis = z.basis().clone();
                for t in (0..h).rev() {
                    basis = linalg::qr(&system.inverse_matrix(future[t], path[t]).matmul(&basis)).q;
                }
                PartialFlagPoint::new(spec.clone(), basis)
            })
            .collect::<Result<_>>()?;
        let ball = heaviest_ball(sub.weights(), params.radius, |i, j| pulled[i].distance(&pulled[j]).unwrap_or(f64::INFINITY));
        let center = pulled[ball.center].clone();
        let reference_distance = reference.map(|r| center.distance(r)).transpose()?;
        out.push(PullbackStep { horizon: h, state, mass: ball.mass, center, reference_distance });
    }
    Ok(out)
}

/// Outcome of [`atom_test`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING-KEBAB-CASE"))]
pub enum AtomVerdict {
    Atom,
    NoAtom,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AtomReport {
    pub verdict: AtomVerdict,
    /// Radii in increasing order.
    pub radii: Vec<f64>,
    /// Heaviest ball mass at each radius.
    pub masses: Vec<f64>,
    /// Sample count used.
    pub samples: usize,
}

fn check_grid(grid: &[f64]) -> Result<Vec<f64>> {
    let mut g = grid.to_vec();
    if g.is_empty() || g.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidInput("radius grid must be positive".into()));
    }
    g.sort_by(f64::total_cmp);
    if g[g.len() - 1] < 100.0 * g[0] {
        return Err(Error::Insufficient("radius grid must span at least two decades".into()));
    }
    Ok(g)
}

/// Geometric grid `hi, hi/2, …` down to at most `lo`, returned in increasing order.
pub fn geometric_grid(lo: f64, hi: f64) -> Vec<f64> {
    let mut g = Vec::new();
    let mut r = hi;
    while r > lo * (1.0 - 1e-12) {
        g.push(r);
        r /= 2.0;
    }
    g.push(r);
    g.reverse();
    g
}

/// Largest ball mass as the radius shrinks. `ATOM` when the mass at the smallest
/// radius is at least `threshold` and at least half the mass at the largest;
/// `INCONCLUSIVE` when fewer than `10 / threshold` samples are available.
pub fn atom_test(cloud: &MeasureCloud, radii: &[f64], threshold: f64, max_points: usize) -> Result<AtomReport> {
    let radii = check_grid(radii)?;
    let sub = cloud.thinned(max_points);
    let flags = sub.flags();
    let balls = ball_masses(sub.weights(), &radii, |i, j| boundary::flag_distance(&flags[i], &flags[j]).unwrap_or(f64::INFINITY));
    let masses: Vec<f64> = balls.iter().map(|b| b.mass).collect();
    let samples = sub.len();
    let verdict = if (samples as f64) * threshold < 10.0 {
        AtomVerdict::Inconclusive
    } else if masses[0] >= threshold && masses[0] >= 0.5 * masses[masses.len() - 1] {
        AtomVerdict::Atom
    } else {
        AtomVerdict::NoAtom
    };
    Ok(AtomReport { verdict, radii, masses, samples })
}

/// Options for [`regularity_scan`].
#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegularityParams {
    /// Group elements tried; half random, half placing `gJ` through cloud modes.
    pub n_g: usize,
    pub max_points: usize,
    pub atom_threshold: f64,
}

impl Default for RegularityParams {
    fn default() -> Self {
        Self { n_g: 32, max_points: 5000, atom_threshold: DEFAULT_ATOM_THRESHOLD }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegularityReport {
    /// ε grid, increasing.
    pub eps: Vec<f64>,
    /// `sup_g mass{z : dist_to_complement(z, g) < ε}` over the sampled `g`.
    pub masses: Vec<f64>,
    pub atom: AtomVerdict,
    /// Heaviest ball mass at the smallest ε.
    pub largest_ball_mass: f64,
}

/// Orthogonal matrix with determinant 1 whose columns span the levels of `z`, so
/// that `g·(standard flag) = z`.
fn frame_element(z: &FullFlag) -> GroupElement {
    let mut b = z.basis().clone();
    if b.det() < 0.0 {
        let n = b.cols();
        for i in 0..n {
            b[(i, n - 1)] = -b[(i, n - 1)];
        }
    }
    GroupElement::project(b).expect("orthogonal frame")
}

/// `(ε, δ)`-regularity scan of a cloud against translates of `J`.
pub fn regularity_scan(cloud: &MeasureCloud, eps: &[f64], params: &RegularityParams, seed: u64) -> Result<RegularityReport> {
    let eps = check_grid(eps)?;
    let sub = cloud.thinned(params.max_points);
    let n = sub.dim();
    let flags = sub.flags();
    let w = sub.weights();

    let balls = ball_masses(w, &eps, |i, j| boundary::flag_distance(&flags[i], &flags[j]).unwrap_or(f64::INFINITY));
    let masses_by_ball: Vec<f64> = balls.iter().map(|b| b.mass).collect();
    let samples = sub.len();
    let atom = if (samples as f64) * params.atom_threshold < 10.0 {
        AtomVerdict::Inconclusive
    } else if masses_by_ball[0] >= params.atom_threshold && masses_by_ball[0] >= 0.5 * masses_by_ball[masses_by_ball.len() - 1] {
        AtomVerdict::Atom
    } else {
        AtomVerdict::NoAtom
    };

    let mut gs = Vec::with_capacity(params.n_g.max(2));
    let mut rng = Stream::new(seed, 1, Domain::Probe, 0);
    for _ in 0..params.n_g.div_ceil(2) {
        gs.push(liegroup::random_element(&mut rng, n));
    }
    // Modes: the heaviest ball centres at each radius, then evenly spaced samples.
    let mut modes: Vec<usize> = balls.iter().map(|b| b.center).collect();
    modes.dedup();
    let mut k = 0;
    while modes.len() < params.n_g / 2 && k < samples {
        modes.push(k);
        k += (samples / (params.n_g / 2).max(1)).max(1);
    }
    modes.truncate((params.n_g / 2).max(1));
    gs.extend(modes.iter().map(|&i| frame_element(&flags[i])));

    let mut masses = vec![0.0f64; eps.len()];
    for g in &gs {
        let d: Vec<f64> = flags.iter().map(|z| boundary::dist_to_complement(z, g)).collect();
        for (m, &e) in masses.iter_mut().zip(&eps) {
            let mass: f64 = d.iter().zip(w).filter(|(d, _)| **d < e).map(|(_, w)| w).sum();
            *m = m.max(mass);
        }
    }
    Ok(RegularityReport { eps, masses, atom, largest_ball_mass: masses_by_ball[0] })
}

/// Boundary-integral against time-average estimate for one simple root.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FurstenbergRow {
    /// 1-based simple root.
    pub root: usize,
    /// `∫∫ σ̂_α(A(g, x) z) dν̂ dμ`.
    pub integral: f64,
    /// Batch-means standard error of the integral.
    pub integral_se: f64,
    pub lambda: f64,
    pub lambda_se: f64,
    pub combined_se: f64,
    pub z: f64,
}

/// Monte Carlo evaluation of the boundary integral for every simple root, using
/// `n_mc` draws: the cloud is traversed in order (wrapping) and each sample is paired
/// with an independent atom.
pub fn furstenberg_check(system: &CocycleSystem, cloud: &MeasureCloud, report: &LyapunovReport, n_mc: usize, seed: u64) -> Result<Vec<FurstenbergRow>> {
    if let Some(d) = cloud.diagnostic().filter(|d| !d.passed) {
        return Err(Error::NotStationary(format!("stationarity diagnostic failed (max z {:.2})", d.max_z)));
    }
    let n = system.dim();
    if cloud.dim() != n || report.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cloud.dim() });
    }
    if n_mc == 0 {
        return Err(Error::InvalidInput("n_mc must be positive".into()));
    }
    let roots = n - 1;
    let len = cloud.len();
    let nb = BATCHES.min(n_mc);
    let mut sums = vec![vec![0.0; nb]; roots];
    let mut weights = vec![0.0; nb];
    let mut rng = Stream::new(seed, 2, Domain::Probe, 0);
    let cum = system.cumulative().to_vec();
    for k in 0..n_mc {
        let i = if n_mc >= len { k % len } else { k * len / n_mc };
        let b = k * nb / n_mc;
        let a = rng.categorical(&cum);
        let (m, _) = system.step_forward(a, cloud.states()[i]);
        let r = linalg::qr(&m.matmul(cloud.flags()[i].basis())).r;
        let w = cloud.weights()[i];
        weights[b] += w;
        for (root, s) in sums.iter_mut().enumerate() {
            let (hi, lo) = (r[(root, root)], r[(root + 1, root + 1)]);
            if !(hi > 0.0 && lo > 0.0) {
                return Err(Error::DegenerateFrame);
            }
            s[b] += w * (math::ln(hi) - math::ln(lo));
        }
    }
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(roots);
    for (root, s) in sums.iter().enumerate() {
        let integral = s.iter().sum::<f64>() / total;
        let means: Vec<f64> = s.iter().zip(&weights).map(|(s, w)| s / w).collect();
        let integral_se = if means.len() > 1 { stats::std_err(&means) } else { 0.0 };
        let lambda = report.root_rates[root];
        let lambda_se = report.root_rate_errors[root];
        let combined_se = math::sqrt(integral_se * integral_se + lambda_se * lambda_se);
        let z = score(integral - lambda, combined_se);
        out.push(FurstenbergRow { root: root + 1, integral, integral_se, lambda, lambda_se, combined_se, z });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::linalg::Mat;
    use crate::oseledets::{estimate_exponents, forward_flag, DEFAULT_CLUSTER_TOL, DEFAULT_FLAG_TOL};
    use crate::walk::{sample_word, AtomSpec, Orientation};

    fn line_angle(z: &FullFlag) -> f64 {
        let b = z.basis();
        let t = math::atan2(b[(1, 0)], b[(0, 0)]);
        let pi = core::f64::consts::PI;
        ((t % pi) + pi) % pi
    }

    fn uniform_circle_cloud(n: usize) -> MeasureCloud {
        let pi = core::f64::consts::PI;
        let flags = (0..n)
            .map(|k| GroupElement::rotation(2, 0, 1, pi * (k as f64 + 0.5) / n as f64).into_matrix())
            .map(|m| FullFlag::new(m).unwrap())
            .collect();
        MeasureCloud::uniform(vec![0; n], flags).unwrap()
    }

    #[test]
    fn cloud_validation() {
        let f = FullFlag::standard(2);
        assert!(MeasureCloud::new(vec![0.5, 0.4], vec![0, 0], vec![f.clone(), f.clone()]).is_err());
        assert!(MeasureCloud::new(vec![1.5, -0.5], vec![0, 0], vec![f.clone(), f.clone()]).is_err());
        assert!(MeasureCloud::new(vec![], vec![], vec![]).is_err());
        let c = MeasureCloud::uniform(vec![0; 3], vec![f.clone(); 3]).unwrap();
        assert!((c.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(c.is_stationary());
    }

    #[test]
    fn identity_cloud_is_its_start() {
        let sys = catalog::deterministic(Mat::identity(3));
        let c = simulate_stationary(&sys, 5, 100, 1, 3).unwrap();
        assert!(c.flags().iter().all(|f| boundary::flag_distance(f, &c.flags()[0]).unwrap() < 1e-12));
        let d = c.diagnostic().unwrap();
        assert!(d.passed && d.max_z == 0.0);
    }

    #[test]
    fn irrational_rotation_equidistributes() {
        let sys = catalog::deterministic(GroupElement::rotation(2, 0, 1, 1.0).into_matrix());
        let n = 20_000;
        let c = simulate_stationary(&sys, 10, n, 1, 4).unwrap();
        assert!(c.is_stationary());
        let pi = core::f64::consts::PI;
        let mut t: Vec<f64> = c.flags().iter().map(|z| line_angle(z) / pi).collect();
        t.sort_by(f64::total_cmp);
        let ks = t.iter().enumerate().map(|(i, &u)| (u - i as f64 / n as f64).abs().max((u - (i + 1) as f64 / n as f64).abs())).fold(0.0, f64::max);
        assert!(ks <= 2.0 / math::sqrt(n as f64), "ks {ks}");
    }

    #[test]
    fn mixed_sl2_cloud_is_stationary_and_diffuse() {
        let sys = catalog::sl2_mixed();
        let c = simulate_stationary(&sys, 200, 20_000, 2, 5).unwrap();
        let d = c.diagnostic().unwrap();
        assert!(d.passed, "{d:?}");
        let rep = atom_test(&c, &geometric_grid(1e-3, 0.2), DEFAULT_ATOM_THRESHOLD, 4000).unwrap();
        assert_eq!(rep.verdict, AtomVerdict::NoAtom);
        assert!(rep.masses.windows(2).all(|w| w[0] <= w[1]));
        assert!(rep.masses[0] < 0.02 && rep.masses[rep.masses.len() - 1] > 0.1);
    }

    #[test]
    fn atom_examples() {
        let grid = geometric_grid(1e-3, 0.2);
        let point = MeasureCloud::uniform(vec![0; 200], vec![FullFlag::standard(3); 200]).unwrap();
        assert_eq!(atom_test(&point, &grid, DEFAULT_ATOM_THRESHOLD, 5000).unwrap().verdict, AtomVerdict::Atom);
        let circle = uniform_circle_cloud(4000);
        let rep = atom_test(&circle, &grid, DEFAULT_ATOM_THRESHOLD, 5000).unwrap();
        assert_eq!(rep.verdict, AtomVerdict::NoAtom);
        // Oracle: a ball of angular radius r holds mass 2r/π of the uniform measure.
        let pi = core::f64::consts::PI;
        for (r, m) in rep.radii.iter().zip(&rep.masses) {
            assert!((m - 2.0 * r / pi).abs() <= 2.0 / 4000.0, "r {r} m {m}");
        }
        let few = MeasureCloud::uniform(vec![0; 20], vec![FullFlag::standard(2); 20]).unwrap();
        assert_eq!(atom_test(&few, &grid, DEFAULT_ATOM_THRESHOLD, 5000).unwrap().verdict, AtomVerdict::Inconclusive);
        assert!(atom_test(&point, &[0.1, 0.01], 0.1, 100).is_err());

        let sys = catalog::reducible_line_control();
        let c = simulate_stationary(&sys, 5000, 5000, 1, 6).unwrap();
        assert_eq!(atom_test(&c, &grid, DEFAULT_ATOM_THRESHOLD, 5000).unwrap().verdict, AtomVerdict::Atom);
    }

    #[test]
    fn regularity_examples() {
        let grid = geometric_grid(1e-3, 0.2);
        let point = MeasureCloud::point_mass(0, FullFlag::standard(3));
        let params = RegularityParams { atom_threshold: 0.1, ..RegularityParams::default() };
        let rep = regularity_scan(&point, &grid, &params, 1).unwrap();
        assert!(rep.masses.iter().all(|m| *m == 1.0));

        // Oracle: J is a single line in P¹; an ε-neighbourhood in |sin| has arc mass 2·asin(ε)/π.
        let circle = uniform_circle_cloud(4000);
        let rep = regularity_scan(&circle, &grid, &params, 2).unwrap();
        let pi = core::f64::consts::PI;
        for (e, m) in rep.eps.iter().zip(&rep.masses) {
            assert!((m - 2.0 * libm::asin(*e) / pi).abs() <= 2.5 / 4000.0, "eps {e} m {m}");
        }
        assert_eq!(rep.atom, AtomVerdict::NoAtom);
    }

    #[test]
    fn mixed_sl2_regularity_agrees_across_sizes() {
        let sys = catalog::sl2_mixed();
        let grid = geometric_grid(1e-3, 0.2);
        let params = RegularityParams::default();
        let small = regularity_scan(&simulate_stationary(&sys, 200, 5000, 1, 7).unwrap(), &grid, &params, 3).unwrap();
        let large = regularity_scan(&simulate_stationary(&sys, 200, 20_000, 1, 8).unwrap(), &grid, &params, 3).unwrap();
        for r in [&small, &large] {
            assert!(r.masses.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(r.atom, AtomVerdict::NoAtom);
        }
        let top = grid.len() - 1;
        assert!((small.masses[top] - large.masses[top]).abs() < 0.1);
        assert!(large.masses[0] < 0.02);
    }

    #[test]
    fn pullback_examples() {
        let g = Mat::diag(&[3.0, 1.0, 1.0 / 3.0]);
        let specs = vec![AtomSpec { probability: 1.0, base_map: None, matrices: vec![g] }];
        let sys = CocycleSystem::new(3, vec![String::from("x")], specs, None, true).unwrap();
        let mut rng = Stream::new(9, 0, Domain::Probe, 0);
        let flags: Vec<FullFlag> = (0..200).map(|_| FullFlag::random(&mut rng, 3)).collect();
        let cloud = MeasureCloud::uniform(vec![0; 200], flags).unwrap();
        let word = Word::forward(vec![0; 64]);
        let spec = ParabolicSpec::borel(3);
        let target = PartialFlagPoint::from_full(spec.clone(), &FullFlag::reversed(3)).unwrap();
        let steps = pullback_limit(&sys, &cloud, &word, 0, &[4, 16, 64], &spec, Some(&target), &PullbackParams::default()).unwrap();
        assert!(steps.windows(2).all(|w| w[0].mass <= w[1].mass));
        assert!((steps[2].mass - 1.0).abs() < 1e-12);
        assert!(steps[2].reference_distance.unwrap() < 1e-10);

        let rot = catalog::rotation();
        let circle = simulate_stationary(&rot, 100, 400, 1, 10).unwrap();
        let w = sample_word(&rot, 10, 0, 64, Orientation::Forward);
        let intrinsic = atom_test(&circle, &[1e-4, 1e-2], 0.1, 1000).unwrap().masses[1];
        let steps = pullback_limit(&rot, &circle, &w, 0, &[16, 64], &spec, None, &PullbackParams::default()).unwrap();
        assert!(steps.iter().all(|s| s.mass <= intrinsic + 1e-12));
    }

    #[test]
    fn pullback_centre_matches_forward_flag() {
        let sys = catalog::sl3_generic();
        let cloud = simulate_stationary(&sys, 200, 2000, 1, 11).unwrap();
        let word = sample_word(&sys, 11, 3, 4000, Orientation::Forward);
        let fwd = forward_flag(&sys, &word, 0, &[500, 1000, 2000, 4000], &[1, 1, 1], DEFAULT_FLAG_TOL).unwrap();
        let spec = ParabolicSpec::borel(3);
        let steps = pullback_limit(&sys, &cloud, &word, 0, &[50, 100, 200, 400], &spec, Some(&fwd.point), &PullbackParams { radius: 1e-2, max_points: 500 }).unwrap();
        let last = steps.last().unwrap();
        assert!(last.mass >= 0.9, "{steps:?}");
        assert!(last.reference_distance.unwrap() <= 1e-2);
    }

    #[test]
    fn furstenberg_examples() {
        let rot = catalog::rotation();
        let cloud = simulate_stationary(&rot, 10, 2000, 1, 12).unwrap();
        let rep = estimate_exponents(&rot, 2000, 8, 12, DEFAULT_CLUSTER_TOL).unwrap();
        for row in furstenberg_check(&rot, &cloud, &rep, 2000, 12).unwrap() {
            assert!(row.integral.abs() < 1e-12 && row.z <= 3.0);
        }

        let g = Mat::diag(&[3.0, 1.0, 1.0 / 3.0]);
        let sys = catalog::deterministic(g);
        let rep = estimate_exponents(&sys, 100, 1, 1, DEFAULT_CLUSTER_TOL).unwrap();
        let point = MeasureCloud::point_mass(0, FullFlag::standard(3));
        for row in furstenberg_check(&sys, &point, &rep, 10, 1).unwrap() {
            assert!((row.integral - math::ln(3.0)).abs() < 1e-12);
            assert!((row.integral - row.lambda).abs() < 1e-12 && row.z == 0.0);
        }

        let mut bad = point.clone();
        bad.diagnostic = Some(StationarityDiagnostic { checks: vec![], max_z: 9.0, passed: false, max_chain_spread: 0.0 });
        assert!(matches!(furstenberg_check(&sys, &bad, &rep, 10, 1), Err(Error::NotStationary(_))));
    }

    #[test]
    fn mixed_sl2_furstenberg_agrees() {
        let sys = catalog::sl2_mixed();
        let cloud = simulate_stationary(&sys, 200, 50_000, 2, 13).unwrap();
        let rep = estimate_exponents(&sys, 20_000, 16, 13, DEFAULT_CLUSTER_TOL).unwrap();
        let rows = furstenberg_check(&sys, &cloud, &rep, 100_000, 13).unwrap();
        assert!(rows[0].z <= 3.0, "{rows:?}");
    }
}
