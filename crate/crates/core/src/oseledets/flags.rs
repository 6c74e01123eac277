//! Oseledets flags read from the graded factor of a long product, and their
//! two-sided intersections.
//!
//! The forward flag `V_1^+ ⊃ V_2^+ ⊃ …` collects vectors growing at rate at most
//! `λ_i` under `A^n(u, x)`; the backward flag `V_1^- ⊂ V_2^- ⊂ …` collects vectors
//! growing at rate at most `−λ_j` under `A^{−n}(v, x)`.

use alloc::format;
use alloc::vec::Vec;

use crate::boundary::{Frame, FullFlag, PartialFlagPoint};
use crate::liegroup::ParabolicSpec;
use crate::linalg::{self, Mat};
use crate::walk::{CocycleSystem, Orientation, ProductAccumulator, Word};
use crate::{math, Error, Result};

/// Residual below which successive flag estimates count as converged.
pub const DEFAULT_FLAG_TOL: f64 = 1e-4;

/// Flag estimate at a sequence of horizons.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlagEstimate {
    pub orientation: Orientation,
    /// Increasing full flag whose retained levels are the Oseledets subspaces;
    /// for the forward flag level `m_k + … + m_i` is `V_i^+`, for the backward flag
    /// level `m_1 + … + m_j` is `V_j^-`.
    pub flag: FullFlag,
    pub point: PartialFlagPoint,
    /// `m_1, …, m_k` in order of decreasing exponent.
    pub multiplicities: Vec<usize>,
    pub horizons: Vec<usize>,
    /// Distance between the estimates at consecutive horizons.
    pub residuals: Vec<f64>,
    pub horizon: usize,
    pub converged: bool,
}

impl FlagEstimate {
    pub fn dim(&self) -> usize {
        self.flag.dim()
    }

    pub fn blocks(&self) -> usize {
        self.multiplicities.len()
    }

    /// Basis of `V_i^+` (forward) or `V_i^-` (backward), `i ∈ 1..=k`.
    pub fn subspace(&self, i: usize) -> Mat {
        let m = &self.multiplicities;
        let d: usize = match self.orientation {
            Orientation::Backward => m[..i].iter().sum(),
            _ => m[i - 1..].iter().sum(),
        };
        self.flag.level(d)
    }
}

fn spec_for(orientation: Orientation, m: &[usize]) -> ParabolicSpec {
    match orientation {
        Orientation::Backward => ParabolicSpec::from_block_dims(m),
        _ => {
            let rev: Vec<usize> = m.iter().rev().copied().collect();
            ParabolicSpec::from_block_dims(&rev)
        }
    }
}

fn check_horizons(horizons: &[usize], available: usize) -> Result<()> {
    if horizons.is_empty() {
        return Err(Error::InvalidInput("at least one horizon is required".into()));
    }
    if horizons[0] == 0 || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("horizons must be positive and strictly increasing".into()));
    }
    if *horizons.last().expect("nonempty") > available {
        return Err(Error::InvalidInput(format!(
            "largest horizon {} exceeds the {available} available atoms",
            horizons.last().expect("nonempty")
        )));
    }
    Ok(())
}

fn estimate(
    system: &CocycleSystem,
    atoms: &[usize],
    start: usize,
    horizons: &[usize],
    multiplicities: &[usize],
    tol: f64,
    orientation: Orientation,
) -> Result<FlagEstimate> {
    system.check_state(start)?;
    check_horizons(horizons, atoms.len())?;
    let n = system.dim();
    if multiplicities.iter().sum::<usize>() != n || multiplicities.contains(&0) {
        return Err(Error::InvalidInput("multiplicities must be positive and sum to n".into()));
    }
    let spec = spec_for(orientation, multiplicities);
    let mut acc = ProductAccumulator::at_state(n, start);
    let mut residuals = Vec::new();
    let mut last: Option<(FullFlag, PartialFlagPoint)> = None;
    let mut done = 0;
    for &h in horizons {
        for &a in &atoms[done..h] {
            if orientation == Orientation::Backward {
                acc.advance_backward(system, a);
            } else {
                acc.advance_forward(system, a);
            }
        }
        done = h;
        let f = acc.fast_first_basis();
        let basis = Mat::from_fn(n, n, |i, j| f[(i, n - 1 - j)]);
        let flag = FullFlag::new(basis)?;
        let point = PartialFlagPoint::from_full(spec.clone(), &flag)?;
        if let Some((_, prev)) = &last {
            residuals.push(point.distance(prev)?);
        }
        last = Some((flag, point));
    }
    let (flag, point) = last.expect("at least one horizon");
    let converged = residuals.last().map_or(true, |&r| r < tol);
    Ok(FlagEstimate {
        orientation: if orientation == Orientation::Backward { Orientation::Backward } else { Orientation::Forward },
        flag,
        point,
        multiplicities: multiplicities.to_vec(),
        horizons: horizons.to_vec(),
        residuals,
        horizon: *horizons.last().expect("nonempty"),
        converged,
    })
}

/// Forward flag `V^+(u, x0)` from the future part of `word`.
pub fn forward_flag(
    system: &CocycleSystem,
    word: &Word,
    x0: usize,
    horizons: &[usize],
    multiplicities: &[usize],
    tol: f64,
) -> Result<FlagEstimate> {
    if word.orientation() == Orientation::Backward {
        return Err(Error::InvalidInput("forward_flag needs a forward or two-sided word".into()));
    }
    estimate(system, &word.future(), x0, horizons, multiplicities, tol, Orientation::Forward)
}

/// Backward flag `V^-(v, y0)` from the past part of `word`.
pub fn backward_flag(
    system: &CocycleSystem,
    word: &Word,
    y0: usize,
    horizons: &[usize],
    multiplicities: &[usize],
    tol: f64,
) -> Result<FlagEstimate> {
    if word.orientation() == Orientation::Forward {
        return Err(Error::InvalidInput("backward_flag needs a backward or two-sided word".into()));
    }
    estimate(system, &word.past(), y0, horizons, multiplicities, tol, Orientation::Backward)
}

/// Oseledets blocks `𝒱_ℓ = V_ℓ^+ ∩ V_ℓ^-`.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockDecomposition {
    pub frames: Vec<Frame>,
    pub dims: Vec<usize>,
    /// Smallest principal angle between a block and the sum of the others.
    pub margin: f64,
}

impl BlockDecomposition {
    pub fn dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// All block frames side by side (`n × n`, blocks in order).
    pub fn stacked(&self) -> Mat {
        let n = self.dim();
        let mut cols = Vec::with_capacity(n);
        for f in &self.frames {
            for j in 0..f.len() {
                cols.push(f.matrix().col(j));
            }
        }
        Mat::from_columns(&cols)
    }
}

fn concat(mats: &[&Mat]) -> Mat {
    let cols: Vec<Vec<f64>> = mats.iter().flat_map(|m| (0..m.cols()).map(|j| m.col(j))).collect();
    Mat::from_columns(&cols)
}

/// Intersects a forward and a backward flag estimate with the same multiplicities.
///
/// Fails with [`Error::DegenerateSample`] when an intersection does not have the
/// expected dimension at `angle_tol`, or the blocks do not reassemble the flags.
pub fn intersect_flags(vplus: &FlagEstimate, vminus: &FlagEstimate, angle_tol: f64) -> Result<BlockDecomposition> {
    if vplus.multiplicities != vminus.multiplicities || vplus.dim() != vminus.dim() {
        return Err(Error::InvalidInput("flags have different multiplicity profiles".into()));
    }
    let k = vplus.blocks();
    let mut frames = Vec::with_capacity(k);
    for l in 1..=k {
        let p = vplus.subspace(l);
        let m = vminus.subspace(l);
        let want = vplus.multiplicities[l - 1];
        let svd = linalg::svd(&p.tmatmul(&m));
        let mproj = m.matmul(&m.transpose());
        let mut vecs = Vec::new();
        for i in 0..svd.s.len().min(p.cols()) {
            let v = p.mul_vec(&svd.u.col(i));
            let pv = mproj.mul_vec(&v);
            let sine = linalg::norm(&v.iter().zip(&pv).map(|(a, b)| a - b).collect::<Vec<_>>());
            let angle = math::atan2(sine, linalg::norm(&pv));
            if angle < angle_tol {
                vecs.push(v);
            }
        }
        if vecs.len() != want {
            return Err(Error::DegenerateSample(format!(
                "block {l}: intersection has dimension {} instead of {want}",
                vecs.len()
            )));
        }
        frames.push(Frame::orthonormalize(&Mat::from_columns(&vecs))?);
    }
    // V_i^+ = ⊕_{ℓ≥i} 𝒱_ℓ and V_j^- = ⊕_{ℓ≤j} 𝒱_ℓ.
    for i in 1..=k {
        let tail: Vec<&Mat> = frames[i - 1..].iter().map(Frame::matrix).collect();
        let head: Vec<&Mat> = frames[..i].iter().map(Frame::matrix).collect();
        for (sum, target) in [(concat(&tail), vplus.subspace(i)), (concat(&head), vminus.subspace(i))] {
            let q = Frame::orthonormalize(&sum).map_err(|_| Error::DegenerateSample("blocks are not independent".into()))?;
            let worst = linalg::principal_angles(q.matrix(), &target).into_iter().fold(0.0, f64::max);
            if worst >= angle_tol {
                return Err(Error::DegenerateSample(format!("blocks do not span level {i} of the flags")));
            }
        }
    }
    let mut margin = core::f64::consts::FRAC_PI_2;
    if k > 1 {
        for l in 0..k {
            let others: Vec<&Mat> = frames.iter().enumerate().filter(|(j, _)| *j != l).map(|(_, f)| f.matrix()).collect();
            let q = Frame::orthonormalize(&concat(&others)).map_err(|_| Error::DegenerateSample("blocks are not independent".into()))?;
            let a = linalg::principal_angles(frames[l].matrix(), q.matrix());
            margin = margin.min(a.into_iter().fold(f64::INFINITY, f64::min));
        }
    }
    let dims = vplus.multiplicities.clone();
    Ok(BlockDecomposition { frames, dims, margin })
}
