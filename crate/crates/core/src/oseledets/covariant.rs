//! Covariant Oseledets blocks along a two-sided path, by the forward QR / backward
//! triangular iteration.
//!
//! Forward: `A_t Q_{t−1} = Q_t R_t` from time `−past` to `future + tail`. Backward,
//! in the `Q_t` coordinates: column block `ℓ` of `C_{t−1}` spans `R_t⁻¹ C_t[:, ℓ]`,
//! starting from `C = I` at the end. Then `Q_t C_t[:, ℓ]` spans `𝒱_ℓ` at time `t` and
//! the one-step restriction of the cocycle to the block, in orthonormal block frames,
//! is `W_tᵀ R_t W_{t−1}` with `W` the orthonormalised column blocks. Every quantity
//! stays `O(1)` whatever the exponent gaps, unlike forming `A^n` on a slow block.

use alloc::vec::Vec;

use crate::boundary::Frame;
use crate::linalg::{self, Mat};
use crate::walk::{CocycleSystem, Orientation, Word};
use crate::{Error, Result};

/// Window of the two-sided path used for the covariant iteration.
#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CovariantParams {
    /// Steps before time 0 used to converge the forward QR frames.
    pub past: usize,
    /// Steps after time 0 for which block restrictions are reported.
    pub future: usize,
    /// Extra steps after `future` used to converge the backward iteration.
    pub tail: usize,
}

/// Block restrictions along a path.
#[derive(Clone, Debug)]
pub struct CovariantBlocks {
    pub dims: Vec<usize>,
    /// `steps[ℓ][t]` is the `d_ℓ × d_ℓ` restriction of step `t + 1` to block `ℓ`.
    pub steps: Vec<Vec<Mat>>,
    /// Largest relative invariance residual per block.
    pub residuals: Vec<f64>,
    /// Orthonormal block frames at time 0.
    pub frames0: Vec<Frame>,
}

fn solve_upper(r: &Mat, b: &Mat) -> Mat {
    let n = r.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= r[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / r[(i, i)];
        }
    }
    x
}

fn block_ranges(dims: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dims.len());
    let mut s = 0;
    for &d in dims {
        out.push((s, s + d));
        s += d;
    }
    out
}

/// Runs the covariant iteration on `word` (two-sided) around base point `x0`.
pub fn covariant_blocks(
    system: &CocycleSystem,
    word: &Word,
    x0: usize,
    dims: &[usize],
    params: CovariantParams,
) -> Result<CovariantBlocks> {
    let n = system.dim();
    if dims.iter().sum::<usize>() != n || dims.contains(&0) {
        return Err(Error::InvalidInput("block dimensions must be positive and sum to n".into()));
    }
    if !matches!(word.orientation(), Orientation::TwoSided { .. }) {
        return Err(Error::InvalidInput("covariant blocks need a two-sided word".into()));
    }
    system.check_state(x0)?;
    let past = word.past();
    let future = word.future();
    if past.len() < params.past || future.len() < params.future + params.tail {
        return Err(Error::InvalidInput("word is too short for the covariant window".into()));
    }
    if params.future == 0 {
        return Err(Error::InvalidInput("future window must be positive".into()));
    }

    // State at time −past, then forward atoms in time order.
    let mut y = x0;
    for &v in &past[..params.past] {
        y = system.preimage(v, y);
    }
    let mut q = Mat::identity(n);
    for &v in past[..params.past].iter().rev() {
        let (m, next) = system.step_forward(v, y);
        q = linalg::qr(&m.matmul(&q)).q;
        y = next;
    }
    debug_assert_eq!(y, x0);
    let q0 = q.clone();
    let total = params.future + params.tail;
    let mut rs = Vec::with_capacity(total);
    for &u in &future[..total] {
        let (m, next) = system.step_forward(u, y);
        let f = linalg::qr(&m.matmul(&q));
        q = f.q;
        rs.push(f.r);
        y = next;
    }

    let ranges = block_ranges(dims);
    let k = dims.len();
    let mut c = Mat::identity(n);
    let mut steps: Vec<Vec<Mat>> = (0..k).map(|_| Vec::with_capacity(params.future)).collect();
    let mut residuals = alloc::vec![0.0f64; k];
    for t in (1..=total).rev() {
        let r = &rs[t - 1];
        let raw = solve_upper(r, &c);
        let mut prev = Mat::zeros(n, n);
        for (l, &(a, b)) in ranges.iter().enumerate() {
            let w = linalg::thin_qr(&raw.col_range(a, b)).q;
            for i in 0..n {
                for j in a..b {
                    prev[(i, j)] = w[(i, j - a)];
                }
            }
            if t <= params.future {
                let wt = c.col_range(a, b);
                let rw = r.matmul(&w);
                let m = wt.tmatmul(&rw);
                let lost = rw.sub(&wt.matmul(&m)).frobenius() / rw.frobenius();
                residuals[l] = residuals[l].max(lost);
                steps[l].push(m);
            }
        }
        if !prev.is_finite() {
            return Err(Error::DegenerateFrame);
        }
        c = prev;
    }
    for s in &mut steps {
        s.reverse();
    }
    let frames0 = ranges
        .iter()
        .map(|&(a, b)| Frame::orthonormalize(&q0.matmul(&c.col_range(a, b))))
        .collect::<Result<Vec<_>>>()?;
    Ok(CovariantBlocks { dims: dims.to_vec(), steps, residuals, frames0 })
}
