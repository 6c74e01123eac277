//! Block restrictions and the statistics built on them: conformality defects,
//! tightness of the defect distribution, invariant conformal forms, conjugation
//! residuals and the transversality of the forward and backward flags.

use alloc::format;
use alloc::vec::Vec;

use crate::boundary::Frame;
use crate::liegroup::{self, WeylLabel};
use crate::linalg::{self, Mat};
use crate::oseledets::{covariant_blocks, CovariantBlocks, CovariantParams, FlagEstimate};
use crate::stats;
use crate::walk::{CocycleSystem, ProductAccumulator, Word};
use crate::{math, Error, Result};

/// Relative residual above which a block is reported as not invariant.
pub const DEFAULT_INVARIANCE_TOL: f64 = 1e-3;

/// `frame_Nᵀ · A^n · frame_0`, stored as `e^{log_scale} · matrix`.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockRestriction {
    pub matrix: Mat,
    pub log_scale: f64,
    /// `‖(I − P_N) A^n F_0‖ / ‖A^n F_0‖`, `P_N` the projector onto `frame_N`.
    pub residual: f64,
    /// `residual ≤ tol`.
    pub invariant: bool,
}

/// Restriction of the accumulated product to a block given by its frames at both
/// ends. The product is applied in log-scaled form, so long horizons do not overflow.
pub fn block_restriction(acc: &ProductAccumulator, frame0: &Frame, frame_n: &Frame, tol: f64) -> Result<BlockRestriction> {
    let n = acc.dim();
    if frame0.dim() != n || frame_n.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: frame0.dim().max(frame_n.dim()) });
    }
    if frame0.len() != frame_n.len() {
        return Err(Error::DimensionMismatch { expected: frame0.len(), got: frame_n.len() });
    }
    let l = acc.log_diagonal();
    let c = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let uf = acc.upper().matmul(frame0.matrix());
    let y = Mat::from_fn(n, uf.cols(), |i, j| uf[(i, j)] * math::exp(l[i] - c));
    let x = acc.q().matmul(&y);
    let m = frame_n.matrix().tmatmul(&x);
    let lost = x.sub(&frame_n.matrix().matmul(&m)).frobenius();
    let total = x.frobenius();
    if total == 0.0 || !total.is_finite() {
        return Err(Error::Singular);
    }
    let residual = lost / total;
    Ok(BlockRestriction { matrix: m, log_scale: c, residual, invariant: residual <= tol })
}

/// `log(σ_max / σ_min)`: zero exactly for scalar multiples of orthogonal matrices.
pub fn conformality_defect(m: &Mat) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::InvalidInput("conformality defect needs a square matrix".into()));
    }
    if m.rows() == 1 {
        return if m[(0, 0)] != 0.0 { Ok(0.0) } else { Err(Error::Singular) };
    }
    let s = linalg::svd(m).s;
    let (hi, lo) = (s[0], s[s.len() - 1]);
    if !(lo > 0.0) || !hi.is_finite() {
        return Err(Error::Singular);
    }
    Ok((math::ln(hi) - math::ln(lo)).max(0.0))
}

/// Running product `M_n ⋯ M_1` of small matrices, kept as `e^{log_scale} · p`.
#[derive(Clone, Debug)]
pub struct ScaledProduct {
    p: Mat,
    log_scale: f64,
}

impl ScaledProduct {
    pub fn identity(d: usize) -> Self {
        Self { p: Mat::identity(d), log_scale: 0.0 }
    }

    pub fn push(&mut self, m: &Mat) {
        self.p = m.matmul(&self.p);
        let s = self.p.max_abs();
        if s > 0.0 && s.is_finite() {
            self.p = self.p.scale(1.0 / s);
            self.log_scale += math::ln(s);
        }
    }

    pub fn matrix(&self) -> &Mat {
        &self.p
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// `log |det|^{1/d}` of the represented product.
    pub fn log_factor(&self) -> f64 {
        let d = self.p.rows() as f64;
        self.log_scale + math::ln(linalg::lu_det(&self.p).abs()) / d
    }

    pub fn defect(&self) -> Result<f64> {
        conformality_defect(&self.p)
    }
}

/// Defect and conformal factor of one block over a path.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockConformality {
    pub dim: usize,
    /// `D_n` at each horizon.
    pub defects: Vec<f64>,
    /// `log |det|^{1/d}` of the restriction at each horizon.
    pub log_factors: Vec<f64>,
    /// Invariance residual of the block frames along the path.
    pub residual: f64,
}

/// Per-block conformality statistics along one path.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConformalityReport {
    pub horizons: Vec<usize>,
    pub blocks: Vec<BlockConformality>,
}

/// Defects of the block products at the given horizons.
pub fn conformality_along(blocks: &CovariantBlocks, horizons: &[usize]) -> Result<ConformalityReport> {
    let len = blocks.steps.first().map_or(0, Vec::len);
    if horizons.windows(2).any(|w| w[0] >= w[1]) || horizons.last().is_some_and(|&h| h > len) || horizons.first() == Some(&0) {
        return Err(Error::InvalidInput("horizons must increase within the covariant window".into()));
    }
    let mut out = Vec::with_capacity(blocks.dims.len());
    for (l, steps) in blocks.steps.iter().enumerate() {
        let d = blocks.dims[l];
        let mut prod = ScaledProduct::identity(d);
        let (mut defects, mut factors) = (Vec::new(), Vec::new());
        let mut done = 0;
        for &h in horizons {
            for m in &steps[done..h] {
                prod.push(m);
            }
            done = h;
            defects.push(prod.defect()?);
            factors.push(prod.log_factor());
        }
        out.push(BlockConformality { dim: d, defects, log_factors: factors, residual: blocks.residuals[l] });
    }
    Ok(ConformalityReport { horizons: horizons.to_vec(), blocks: out })
}

/// Covariant blocks plus [`conformality_along`] for one two-sided path.
pub fn conformality_on_path(
    system: &CocycleSystem,
    word: &Word,
    x0: usize,
    dims: &[usize],
    horizons: &[usize],
    past: usize,
    tail: usize,
) -> Result<ConformalityReport> {
    let future = *horizons.last().ok_or_else(|| Error::InvalidInput("no horizons".into()))?;
    let cb = covariant_blocks(system, word, x0, dims, CovariantParams { past, future, tail })?;
    conformality_along(&cb, horizons)
}

/// Verdict of the tightness statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING-KEBAB-CASE"))]
pub enum Tightness {
    Tight,
    Unbounded,
    Inconclusive,
}

/// Thresholds for [`schmidt_tightness`].
#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TightnessParams {
    /// Largest slope of the median against `ln n` still called tight.
    pub max_slope: f64,
    /// Largest p95 ratio (last over first horizon) still called tight.
    pub max_ratio: f64,
    /// Median growth per two decades of horizon that is called unbounded.
    pub unbounded_growth: f64,
    /// Slope against `ln n` that, with strictly increasing medians, is called
    /// unbounded even below `unbounded_growth`.
    pub unbounded_slope: f64,
    /// Added to medians and quantiles before forming ratios.
    pub floor: f64,
}

impl Default for TightnessParams {
    fn default() -> Self {
        Self { max_slope: 0.01, max_ratio: 2.0, unbounded_growth: 5.0, unbounded_slope: 0.25, floor: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TightnessReport {
    pub verdict: Tightness,
    /// Slope of the per-horizon median against `ln n`.
    pub slope: f64,
    /// `(p95_last + floor) / (p95_first + floor)`.
    pub p95_ratio: f64,
    /// Median growth factor rescaled to two decades of horizon.
    pub growth_per_two_decades: f64,
    pub medians: Vec<f64>,
    pub p95: Vec<f64>,
}

/// Tightness of defect samples `defects[h]` (one value per trial) at `horizons[h]`.
pub fn schmidt_tightness(horizons: &[usize], defects: &[Vec<f64>], params: &TightnessParams) -> Result<TightnessReport> {
    if horizons.len() != defects.len() {
        return Err(Error::DimensionMismatch { expected: horizons.len(), got: defects.len() });
    }
    if horizons.len() < 2 {
        return Err(Error::Insufficient("tightness needs at least two horizons".into()));
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] == 0 {
        return Err(Error::InvalidInput("horizons must be positive and increasing".into()));
    }
    let first = horizons[0] as f64;
    let last = *horizons.last().expect("nonempty") as f64;
    if last < 100.0 * first {
        return Err(Error::Insufficient("horizons must span at least two decades".into()));
    }
    if defects.iter().any(Vec::is_empty) {
        return Err(Error::Insufficient("no samples at some horizon".into()));
    }
    let medians: Vec<f64> = defects.iter().map(|d| stats::median(d)).collect();
    let p95: Vec<f64> = defects.iter().map(|d| stats::quantile(d, 0.95)).collect();
    let logs: Vec<f64> = horizons.iter().map(|&h| math::ln(h as f64)).collect();
    let slope = stats::slope(&logs, &medians);
    let f = params.floor;
    let p95_ratio = (p95[p95.len() - 1] + f) / (p95[0] + f);
    let decades = math::ln(last / first) / math::ln(10.0);
    let growth = (medians[medians.len() - 1] + f) / (medians[0] + f);
    let growth_per_two_decades = math::powf(growth, 2.0 / decades);
    let increasing = medians.windows(2).all(|w| w[1] > w[0]);
    let verdict = if slope <= params.max_slope && p95_ratio <= params.max_ratio {
        Tightness::Tight
    } else if growth_per_two_decades >= params.unbounded_growth || (increasing && slope >= params.unbounded_slope) {
        Tightness::Unbounded
    } else {
        Tightness::Inconclusive
    };
    Ok(TightnessReport { verdict, slope, p95_ratio, growth_per_two_decades, medians, p95 })
}

/// Determinant-normalised symmetric positive form preserved up to scale.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InvariantFormEstimate {
    pub form: Mat,
    /// Largest relative deviation of `G_n` from the estimate over the averaging window.
    pub cauchy_residual: f64,
    /// Largest relative deviation between the form transported from a later time and
    /// the form at time 0, both normalised.
    pub transfer_residual: f64,
}

/// Options for [`estimate_invariant_form`].
#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FormParams {
    /// Cauchy residual above which estimation fails.
    pub cauchy_tol: f64,
    /// Number of intermediate times at which the transfer residual is sampled.
    pub transfer_samples: usize,
}

impl Default for FormParams {
    fn default() -> Self {
        Self { cauchy_tol: 0.1, transfer_samples: 8 }
    }
}

/// `PᵀP / det(PᵀP)^{1/d}`; `None` when `P` is too ill-conditioned to normalise.
fn normalized_gram(p: &Mat) -> Option<Mat> {
    let mut g = p.tmatmul(p).symmetrize();
    let s = g.max_abs();
    if !(s > 0.0) || !s.is_finite() {
        return None;
    }
    g = g.scale(1.0 / s);
    let det = linalg::lu_det(&g);
    if !(det > 1e-280) {
        return None;
    }
    Some(g.scale(math::powf(det, -1.0 / g.rows() as f64)))
}

fn normalize_det(g: &Mat) -> Option<Mat> {
    let det = linalg::lu_det(g);
    (det > 0.0 && det.is_finite()).then(|| g.scale(math::powf(det, -1.0 / g.rows() as f64)))
}

fn rel_dev(a: &Mat, b: &Mat) -> f64 {
    a.sub(b).frobenius() / b.frobenius()
}

/// Cesàro average of `G(P_{m→n})` over `n` in the last decade of the sequence.
fn averaged_form(steps: &[Mat], m: usize, window_start: usize) -> Result<(Mat, Vec<Mat>)> {
    let d = steps[0].rows();
    let mut prod = ScaledProduct::identity(d);
    let mut grams = Vec::new();
    let mut sum = Mat::zeros(d, d);
    for (t, step) in steps.iter().enumerate().skip(m) {
        prod.push(step);
        if t + 1 >= window_start {
            let g = normalized_gram(prod.matrix()).ok_or(Error::NotCauchy { residual: f64::INFINITY })?;
            sum = sum.add(&g);
            grams.push(g);
        }
    }
    if grams.is_empty() {
        return Err(Error::Insufficient("empty averaging window".into()));
    }
    let avg = normalize_det(&sum.scale(1.0 / grams.len() as f64).symmetrize())
        .ok_or(Error::NotCauchy { residual: f64::INFINITY })?;
    Ok((avg, grams))
}

/// Estimates the form `⟨·,·⟩` at time 0 with `⟨P_{0→n} p, P_{0→n} q⟩ = e^{λ_n} ⟨p, q⟩_0`
/// (in orthonormal block frames) from the one-step restrictions `steps`.
pub fn estimate_invariant_form(steps: &[Mat], params: &FormParams) -> Result<InvariantFormEstimate> {
    let n = steps.len();
    if n < 20 {
        return Err(Error::Insufficient("at least 20 block restrictions are needed".into()));
    }
    let d = steps[0].rows();
    if steps.iter().any(|m| m.rows() != d || m.cols() != d) {
        return Err(Error::InvalidInput("block restrictions must all be d x d".into()));
    }
    let window = n - n * 9 / 10;
    let window_start = window.max(1);
    let (form, grams) = averaged_form(steps, 0, window_start)?;
    let cauchy = grams.iter().map(|g| rel_dev(g, &form)).fold(0.0, f64::max);
    if cauchy > params.cauchy_tol {
        return Err(Error::NotCauchy { residual: cauchy });
    }

    // Transport the form estimated from time m back to time 0.
    let last_m = (window_start / 2).max(1);
    let mut transfer: f64 = 0.0;
    let samples = params.transfer_samples.max(1);
    let mut prefix = ScaledProduct::identity(d);
    let mut done = 0;
    for s in 1..=samples {
        let m = (last_m * s / samples).max(1);
        if m <= done {
            continue;
        }
        for step in &steps[done..m] {
            prefix.push(step);
        }
        done = m;
        let (gm, _) = averaged_form(steps, m, window_start)?;
        let p = prefix.matrix();
        let back = normalize_det(&p.transpose().matmul(&gm).matmul(p).symmetrize())
            .ok_or(Error::NotCauchy { residual: f64::INFINITY })?;
        transfer = transfer.max(rel_dev(&back, &form));
    }
    Ok(InvariantFormEstimate { form, cauchy_residual: cauchy, transfer_residual: transfer })
}

/// Relative position of a forward and a backward flag estimate.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransversalityReport {
    pub label: WeylLabel,
    /// Smallest principal sine between retained levels whose dimensions add to at
    /// most `n`; positive iff the flags are in generic position.
    pub margin: f64,
    /// Samples not in generic position.
    pub failures: usize,
    pub samples: usize,
}

impl TransversalityReport {
    /// Folds several per-path reports; label and margin are those of the worst path.
    pub fn merge(reports: &[TransversalityReport]) -> Option<TransversalityReport> {
        let worst = reports.iter().min_by(|a, b| a.margin.total_cmp(&b.margin))?;
        Some(TransversalityReport {
            label: worst.label.clone(),
            margin: worst.margin,
            failures: reports.iter().map(|r| r.failures).sum(),
            samples: reports.iter().map(|r| r.samples).sum(),
        })
    }

    pub fn generic_fraction(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            1.0 - self.failures as f64 / self.samples as f64
        }
    }
}

/// Transversality of `V^+` and `V^-`: generic position means
/// `dim(V^+_a ∩ V^-_b) = max(0, a + b − n)` at all retained levels `a`, `b`, the
/// position `w₀` relative to the pair of parabolics.
pub fn transversality(vplus: &FlagEstimate, vminus: &FlagEstimate, angle_tol: f64) -> Result<TransversalityReport> {
    let n = vplus.dim();
    if vminus.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: vminus.dim() });
    }
    let levels = |e: &FlagEstimate| -> Vec<usize> {
        let mut l = e.point.spec().retained_levels();
        l.push(n);
        l
    };
    let (la, lb) = (levels(vplus), levels(vminus));
    let mut generic = true;
    let mut margin: f64 = 1.0;
    for &a in &la {
        for &b in &lb {
            let fa = vplus.flag.level(a);
            let fb = vminus.flag.level(b);
            let dim = liegroup::intersection_dim(&fa, &fb, angle_tol);
            if dim != (a + b).saturating_sub(n) {
                generic = false;
            }
            if a + b <= n {
                let s = linalg::principal_sines(&fa, &fb);
                margin = margin.min(s.first().copied().unwrap_or(1.0));
            }
        }
    }
    let label = if generic {
        WeylLabel::Permutation((1..=n).rev().collect())
    } else {
        liegroup::bruhat_profile(&vplus.flag, &vminus.flag, angle_tol)?.label
    };
    if !generic {
        margin = 0.0;
    }
    Ok(TransversalityReport { label, margin, failures: usize::from(!generic), samples: 1 })
}

/// Orthogonality defect of the block restrictions after removing the per-block
/// scalar, and the rates of those scalars.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConjugationReport {
    pub horizons: Vec<usize>,
    /// Max over blocks of `‖P̃ᵀP̃ − I‖_F`, `P̃ = P / |det P|^{1/d}`.
    pub residuals: Vec<f64>,
    /// `log |det P_ℓ|^{1/d_ℓ} / n` per horizon and block.
    pub block_rates: Vec<Vec<f64>>,
    /// Rates of the simple roots between consecutive blocks, per horizon.
    pub root_rates: Vec<Vec<f64>>,
    /// 1-based simple roots separating consecutive blocks.
    pub roots: Vec<usize>,
}

/// Conjugation residuals from covariant block restrictions.
pub fn conjugation_along(blocks: &CovariantBlocks, horizons: &[usize]) -> Result<ConjugationReport> {
    let len = blocks.steps.first().map_or(0, Vec::len);
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] == 0 || *horizons.last().expect("nonempty") > len {
        return Err(Error::InvalidInput("horizons must increase within the covariant window".into()));
    }
    let k = blocks.dims.len();
    let mut prods: Vec<ScaledProduct> = blocks.dims.iter().map(|&d| ScaledProduct::identity(d)).collect();
    let mut residuals = Vec::new();
    let mut block_rates = Vec::new();
    let mut root_rates = Vec::new();
    let mut done = 0;
    for &h in horizons {
        let mut worst: f64 = 0.0;
        let mut rates = Vec::with_capacity(k);
        for (l, prod) in prods.iter_mut().enumerate() {
            for m in &blocks.steps[l][done..h] {
                prod.push(m);
            }
            let p = prod.matrix();
            let d = p.rows();
            let det = linalg::lu_det(p).abs();
            if !(det > 0.0) {
                return Err(Error::Singular);
            }
            let pt = p.scale(math::powf(det, -1.0 / d as f64));
            worst = worst.max(pt.tmatmul(&pt).sub(&Mat::identity(d)).frobenius());
            rates.push(prod.log_factor() / h as f64);
        }
        done = h;
        root_rates.push(rates.windows(2).map(|w| w[0] - w[1]).collect());
        block_rates.push(rates);
        residuals.push(worst);
    }
    let mut roots = Vec::with_capacity(k.saturating_sub(1));
    let mut acc = 0;
    for &d in &blocks.dims[..k - 1] {
        acc += d;
        roots.push(acc);
    }
    Ok(ConjugationReport { horizons: horizons.to_vec(), residuals, block_rates, root_rates, roots })
}

/// Covariant blocks of dimensions `dims` along `word`, then [`conjugation_along`].
pub fn verify_conjugation(
    system: &CocycleSystem,
    word: &Word,
    x0: usize,
    dims: &[usize],
    horizons: &[usize],
    past: usize,
    tail: usize,
) -> Result<ConjugationReport> {
    let future = *horizons.last().ok_or_else(|| Error::InvalidInput("no horizons".into()))?;
    let cb = covariant_blocks(system, word, x0, dims, CovariantParams { past, future, tail })?;
    if let Some(r) = cb.residuals.iter().find(|&&r| r > DEFAULT_INVARIANCE_TOL) {
        return Err(Error::DegenerateSample(format!("block frames are not invariant (residual {r:.3e})")));
    }
    conjugation_along(&cb, horizons)
}

/// Defect in the frame adapted to a form `G`: `P ↦ G_n^{1/2} P G_0^{-1/2}` with the
/// same `G` at both ends, i.e. the conformality defect of `S P S⁻¹`, `S = G^{1/2}`.
pub fn defect_in_form(p: &Mat, form: &Mat) -> Result<f64> {
    let e = linalg::sym_eig(form);
    let d = p.rows();
    if e.0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("form is not positive definite".into()));
    }
    let sqrt = |pow: f64| -> Mat {
        let diag = Mat::from_fn(d, d, |i, j| if i == j { math::powf(e.0[i], pow) } else { 0.0 });
        e.1.matmul(&diag).matmul(&e.1.transpose())
    };
    conformality_defect(&sqrt(0.5).matmul(p).matmul(&sqrt(-0.5)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use alloc::vec;
    use crate::liegroup::{random_orthogonal, GroupElement};
    use crate::rng::{Domain, Stream};
    use crate::walk::{sample_word, Orientation};

    #[test]
    fn defect_examples() {
        let r = GroupElement::rotation(2, 0, 1, 0.7).into_matrix().scale(3.0);
        assert!(conformality_defect(&r).unwrap() < 1e-14);
        assert!((conformality_defect(&Mat::diag(&[2.0, 1.0])).unwrap() - math::ln(2.0)).abs() < 1e-14);
        let z = catalog::realify(&Mat::diag(&[1.3]), &Mat::diag(&[-0.4]));
        assert!(conformality_defect(&z).unwrap() < 1e-14);
        assert!(matches!(conformality_defect(&Mat::zeros(2, 2)), Err(Error::Singular)));
        assert_eq!(conformality_defect(&Mat::diag(&[5.0])).unwrap(), 0.0);
    }

    #[test]
    fn defect_is_bi_invariant() {
        let mut rng = Stream::new(1, 0, Domain::Probe, 0);
        for d in 2..=4 {
            for _ in 0..100 {
                let m = Mat::from_fn(d, d, |_, _| rng.normal());
                let q1 = random_orthogonal(&mut rng, d);
                let q2 = random_orthogonal(&mut rng, d);
                let c = 0.1 + 10.0 * rng.uniform();
                let a = conformality_defect(&m).unwrap();
                let b = conformality_defect(&q1.matmul(&m).matmul(&q2).scale(-c)).unwrap();
                assert!((a - b).abs() < 1e-10 * a.max(1.0));
            }
        }
    }

    #[test]
    fn restriction_examples() {
        let id = ProductAccumulator::identity(3);
        let f = Frame::new(Mat::identity(3).col_range(0, 2)).unwrap();
        let r = block_restriction(&id, &f, &f, DEFAULT_INVARIANCE_TOL).unwrap();
        assert!(r.matrix.max_abs_diff(&Mat::identity(2)) < 1e-15 && r.residual == 0.0);

        let mut acc = ProductAccumulator::identity(3);
        let g = Mat::diag(&[2.0, 1.0, 0.5]);
        for _ in 0..5 {
            acc.advance(&g);
        }
        let e23 = Frame::new(Mat::identity(3).col_range(1, 3)).unwrap();
        let r = block_restriction(&acc, &e23, &e23, DEFAULT_INVARIANCE_TOL).unwrap();
        let m = r.matrix.scale(math::exp(r.log_scale));
        assert!(m.max_abs_diff(&Mat::diag(&[1.0, 1.0 / 32.0])) < 1e-12);
        assert!(r.invariant);
    }

    #[test]
    fn restriction_on_fast_block_matches_projection() {
        // Generic path, fast block: compare with an explicit projection of the product.
        let sys = catalog::sl3_generic();
        let w = sample_word(&sys, 3, 0, 40, Orientation::Forward);
        let acc = crate::walk::forward_product(&sys, &w, 0).unwrap();
        let p = acc.reassemble();
        let f0 = Frame::new(Mat::identity(3).col_range(0, 1)).unwrap();
        let img = Frame::orthonormalize(&p.matmul(f0.matrix())).unwrap();
        let r = block_restriction(&acc, &f0, &img, DEFAULT_INVARIANCE_TOL).unwrap();
        assert!(r.residual < 1e-10);
        let direct = img.matrix().tmatmul(&p.matmul(f0.matrix()));
        assert!((r.matrix.scale(math::exp(r.log_scale))[(0, 0)] - direct[(0, 0)]).abs() < 1e-8 * direct[(0, 0)].abs());
    }

    #[test]
    fn tightness_examples() {
        let hs = [100, 1000, 10_000];
        let zeros = vec![vec![0.0; 10]; 3];
        let t = schmidt_tightness(&hs, &zeros, &TightnessParams::default()).unwrap();
        assert_eq!(t.verdict, Tightness::Tight);
        assert_eq!(t.slope, 0.0);
        let logs: Vec<Vec<f64>> = hs.iter().map(|&h| vec![0.5 * math::ln(h as f64); 10]).collect();
        let t = schmidt_tightness(&hs, &logs, &TightnessParams::default()).unwrap();
        assert_eq!(t.verdict, Tightness::Unbounded);
        let sqrt: Vec<Vec<f64>> = hs.iter().map(|&h| vec![math::sqrt(h as f64); 10]).collect();
        let t = schmidt_tightness(&hs, &sqrt, &TightnessParams::default()).unwrap();
        assert_eq!(t.verdict, Tightness::Unbounded);
        assert!(schmidt_tightness(&hs[..1], &zeros[..1], &TightnessParams::default()).is_err());
        assert!(schmidt_tightness(&[100, 1000], &zeros[..2], &TightnessParams::default()).is_err());
    }

    #[test]
    fn random_walk_range_is_unbounded() {
        // Oracle: the 1-d log-ratio walk of the diagonal control, simulated directly.
        let hs = [100usize, 1000, 10_000];
        let mut samples = vec![Vec::new(); 3];
        for t in 0..64 {
            let mut rng = Stream::new(5, t, Domain::Forward, 0);
            let mut s = 0i64;
            let mut h = 0;
            for step in 1..=10_000 {
                s += if rng.uniform() < 0.5 { 1 } else { -1 };
                if step == hs[h] {
                    samples[h].push(2.0 * math::ln(2.0) * (s.abs() as f64));
                    h += 1;
                    if h == 3 { break; }
                }
            }
        }
        let t = schmidt_tightness(&hs, &samples, &TightnessParams::default()).unwrap();
        assert_eq!(t.verdict, Tightness::Unbounded);

        let sys = catalog::diag_negative_control();
        let mut defects = vec![Vec::new(); 3];
        for t in 0..64 {
            let w = sample_word(&sys, 5, t, 10_100, Orientation::TwoSided { origin: 50 });
            let rep = conformality_on_path(&sys, &w, 0, &[3], &hs, 50, 50).unwrap();
            for (h, d) in rep.blocks[0].defects.iter().enumerate() {
                defects[h].push(*d);
            }
        }
        let t = schmidt_tightness(&hs, &defects, &TightnessParams::default()).unwrap();
        assert_eq!(t.verdict, Tightness::Unbounded);
        assert!(t.medians[2] >= 5.0 * t.medians[0]);
    }

    #[test]
    fn invariant_form_examples() {
        let mut rng = Stream::new(7, 0, Domain::Probe, 0);
        let steps: Vec<Mat> = (0..200).map(|_| random_orthogonal(&mut rng, 2).scale(1.7)).collect();
        let f = estimate_invariant_form(&steps, &FormParams::default()).unwrap();
        assert!(f.form.max_abs_diff(&Mat::identity(2)) < 1e-10);
        assert!(f.cauchy_residual < 1e-10 && f.transfer_residual < 1e-10);

        let steps = vec![Mat::diag(&[2.0, 0.5]); 200];
        assert!(matches!(estimate_invariant_form(&steps, &FormParams::default()), Err(Error::NotCauchy { .. })));
    }

    #[test]
    fn conformal_in_a_skewed_frame() {
        // Conjugated rotations S R S⁻¹ preserve the form (S⁻¹)ᵀS⁻¹.
        let mut rng = Stream::new(8, 0, Domain::Probe, 0);
        let s = Mat::from_rows(&[vec![1.0, 0.3], vec![0.0, 1.2]]).unwrap();
        let si = s.inverse().unwrap();
        let steps: Vec<Mat> = (0..400).map(|_| s.matmul(&random_orthogonal(&mut rng, 2)).matmul(&si)).collect();
        let p = steps.iter().fold(Mat::identity(2), |acc, m| m.matmul(&acc));
        assert!(conformality_defect(&p).unwrap() > 1e-3);
        let truth = normalize_det(&si.transpose().matmul(&si)).unwrap();
        assert!(defect_in_form(&p, &truth).unwrap() < 1e-10);
    }

    #[test]
    fn transversality_examples() {
        use crate::boundary::{FullFlag, PartialFlagPoint};
        use crate::liegroup::ParabolicSpec;
        let est = |flag: FullFlag, o| FlagEstimate {
            orientation: o,
            point: PartialFlagPoint::from_full(ParabolicSpec::borel(3), &flag).unwrap(),
            flag,
            multiplicities: vec![1, 1, 1],
            horizons: vec![1],
            residuals: vec![],
            horizon: 1,
            converged: true,
        };
        let t = transversality(&est(FullFlag::standard(3), Orientation::Forward), &est(FullFlag::reversed(3), Orientation::Backward), 1e-6).unwrap();
        assert!(t.label.is_longest());
        assert!((t.margin - 1.0).abs() < 1e-14);
        let t = transversality(&est(FullFlag::standard(3), Orientation::Forward), &est(FullFlag::standard(3), Orientation::Backward), 1e-6).unwrap();
        assert!(t.label.is_identity());
        assert_eq!(t.failures, 1);
    }

    #[test]
    fn conjugation_examples() {
        let sys = catalog::rotation();
        let w = sample_word(&sys, 1, 0, 400, Orientation::TwoSided { origin: 100 });
        let r = verify_conjugation(&sys, &w, 0, &[3], &[10, 100], 100, 100).unwrap();
        assert!(r.residuals.iter().all(|v| *v < 1e-10));
        assert!(r.block_rates.iter().flatten().all(|v| v.abs() < 1e-12));

        let g = Mat::diag(&[3.0, 1.0, 1.0 / 3.0]);
        let specs = vec![
            crate::walk::AtomSpec { probability: 1.0, base_map: None, matrices: vec![g] },
        ];
        let det = crate::walk::CocycleSystem::new(3, vec![alloc::string::String::from("x")], specs, None, true).unwrap();
        let w = Word::new(vec![0; 300], Orientation::TwoSided { origin: 100 }, 1).unwrap();
        let r = verify_conjugation(&det, &w, 0, &[1, 1, 1], &[10, 100], 100, 100).unwrap();
        assert!(r.residuals.iter().all(|v| *v < 1e-12));
        let l3 = math::ln(3.0);
        for rates in &r.root_rates {
            assert!((rates[0] - l3).abs() < 1e-12 && (rates[1] - l3).abs() < 1e-12);
        }
        assert_eq!(r.roots, vec![1, 2]);
    }
}
