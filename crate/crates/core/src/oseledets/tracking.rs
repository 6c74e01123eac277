//! Distance between the orbit `A^n(u, x)^{-1} K` and the fitted ray
//! `γ(t) = k · exp(t Λ) K` in the symmetric space `SL(n)/SO(n)`.
//!
//! With `d(gK, hK) = ‖a_log(g⁻¹h)‖` the defect at `n` is, up to a Weyl element on the
//! right, `‖a_log(A^n F e^{−nΛ})‖ / n`, where `F = (f_1, …, f_n)` is the fast-first
//! limiting frame. Writing `A^N = Q_N D_N U_N` for a horizon `N > n`,
//! `A_{n→N} Q_n = Q_N D' V` and `P U_N = T Fᵀ` (rows of `U_N` in grading order `P`),
//! one has `A^n F = Q_n V⁻¹ D_n Pᵀ T`, which is evaluated without cancellation.

use alloc::vec::Vec;

use crate::linalg::{self, Mat};
use crate::walk::{CocycleSystem, Orientation, ProductAccumulator, Word};
use crate::{math, Error, Result};

fn inverse_unit_upper(v: &Mat) -> Mat {
    let n = v.rows();
    let mut inv = Mat::identity(n);
    for j in 0..n {
        for i in (0..j).rev() {
            let mut s = 0.0;
            for k in i + 1..=j {
                s += v[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s;
        }
    }
    inv
}

/// Tracking defect at each horizon.
///
/// `exponents` is the fitted vector `Λ` (non-increasing). The limiting frame is read
/// at `N = max(horizons) + tail`, so the word needs that many future atoms.
pub fn geodesic_tracking(
    system: &CocycleSystem,
    word: &Word,
    x0: usize,
    horizons: &[usize],
    exponents: &[f64],
    tail: usize,
) -> Result<Vec<f64>> {
    let n = system.dim();
    if exponents.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: exponents.len() });
    }
    if word.orientation() == Orientation::Backward {
        return Err(Error::InvalidInput("geodesic_tracking needs a forward or two-sided word".into()));
    }
    if horizons.is_empty() || horizons[0] == 0 || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("horizons must be positive and strictly increasing".into()));
    }
    system.check_state(x0)?;
    let atoms = word.future();
    let big_n = horizons.last().expect("nonempty") + tail;
    if atoms.len() < big_n {
        return Err(Error::InvalidInput("word is shorter than the largest horizon plus tail".into()));
    }

    // Snapshot the accumulator at each horizon, then run to N.
    let mut acc = ProductAccumulator::at_state(n, x0);
    let mut snaps = Vec::with_capacity(horizons.len());
    let mut h = horizons.iter().peekable();
    for (t, &a) in atoms[..big_n].iter().enumerate() {
        acc.advance_forward(system, a);
        if h.peek() == Some(&&(t + 1)) {
            snaps.push(acc.clone());
            h.next();
        }
    }
    let (_, tri, order) = acc.fast_first_factor();
    // Pᵀ T: row order[j] of the result is row j of T.
    let mut pt = Mat::zeros(n, n);
    for (j, &r) in order.iter().enumerate() {
        for c in 0..n {
            pt[(r, c)] = tri[(j, c)];
        }
    }

    let mut out = Vec::with_capacity(horizons.len());
    for (snap, &hn) in snaps.iter().zip(horizons) {
        let mut rest = ProductAccumulator::from_matrix(&snap.q());
        rest.set_state(snap.state());
        for &a in &atoms[hn..big_n] {
            rest.advance_forward(system, a);
        }
        let vinv = inverse_unit_upper(&rest.upper());
        let l = snap.log_diagonal();
        // D_n Pᵀ T e^{−nΛ}, scaling entry-wise in the log domain.
        let mid = Mat::from_fn(n, n, |i, j| {
            let t = pt[(i, j)];
            if t == 0.0 {
                0.0
            } else {
                t * math::exp(l[i] - hn as f64 * exponents[j])
            }
        });
        let x = vinv.matmul(&mid);
        let s = linalg::svd(&x).s;
        if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Singular);
        }
        let norm = math::sqrt(s.iter().map(|v| { let l = math::ln(*v); l * l }).sum());
        out.push(norm / hn as f64);
    }
    Ok(out)
}
