use alloc::vec;
use alloc::vec::Vec;

use super::{dot, norm, Mat};
use crate::math;

/// Householder QR factors. `R` has a non-negative diagonal.
#[derive(Clone, Debug)]
pub struct Qr {
    pub q: Mat,
    pub r: Mat,
}

/// Thin singular value decomposition `a = u · diag(s) · vᵀ`, `s` non-increasing.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

/// Determinant by LU with partial pivoting.
pub fn lu_det(a: &Mat) -> f64 {
    assert!(a.is_square(), "determinant of a non-square matrix");
    let n = a.rows();
    let mut m = a.clone();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| m[(x, c)].abs().total_cmp(&m[(y, c)].abs()))
            .unwrap_or(c);
        if m[(p, c)] == 0.0 {
            return 0.0;
        }
        if p != c {
            m.swap_rows(p, c);
            det = -det;
        }
        let d = m[(c, c)];
        det *= d;
        for r in c + 1..n {
            let f = m[(r, c)] / d;
            if f != 0.0 {
                for j in c..n {
                    m[(r, j)] -= f * m[(c, j)];
                }
            }
        }
    }
    det
}

/// Full QR of an `m × n` matrix: `Q` is `m × m` orthogonal, `R` is `m × n`.
pub fn qr(a: &Mat) -> Qr {
    let m = a.rows();
    let n = a.cols();
    let mut r = a.clone();
    let mut q = Mat::identity(m);
    for k in 0..n.min(m.saturating_sub(1)) {
        let x: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        let alpha = norm(&x);
        if alpha == 0.0 {
            continue;
        }
        let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
        let mut v = x;
        v[0] += sign * alpha;
        let vn = norm(&v);
        if vn == 0.0 {
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= vn;
        }
        // R <- (I - 2vvᵀ) R on rows k..m
        for j in 0..n {
            let s: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
            for i in k..m {
                r[(i, j)] -= 2.0 * v[i - k] * s;
            }
        }
        // Q <- Q (I - 2vvᵀ) on columns k..m
        for i in 0..m {
            let s: f64 = (k..m).map(|j| q[(i, j)] * v[j - k]).sum();
            for j in k..m {
                q[(i, j)] -= 2.0 * s * v[j - k];
            }
        }
    }
    for k in 0..n.min(m) {
        for i in k + 1..m {
            r[(i, k)] = 0.0;
        }
        if r[(k, k)] < 0.0 {
            for j in 0..n {
                r[(k, j)] = -r[(k, j)];
            }
            for i in 0..m {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    Qr { q, r }
}

/// Thin QR of an `m × n` matrix with `m >= n`: `Q` is `m × n`, `R` is `n × n`.
pub fn thin_qr(a: &Mat) -> Qr {
    let n = a.cols();
    let full = qr(a);
    Qr { q: full.q.col_range(0, n), r: full.r.block(0, 0, n, n) }
}

/// Orthonormal basis of the orthogonal complement of the column span of `a`
/// (assumed to have full column rank).
pub fn orthonormal_complement(a: &Mat) -> Mat {
    let full = qr(a);
    full.q.col_range(a.cols(), a.rows())
}

/// One-sided Jacobi SVD.
pub fn svd(a: &Mat) -> Svd {
    if a.rows() < a.cols() {
        let t = svd(&a.transpose());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let m = a.rows();
    let n = a.cols();
    let scale = a.max_abs();
    if scale == 0.0 || !scale.is_finite() {
        let u = Mat::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
        return Svd { u, s: vec![if scale.is_finite() { 0.0 } else { f64::NAN }; n], v: Mat::identity(n) };
    }
    let mut w = a.scale(1.0 / scale);
    let mut v = Mat::identity(n);
    let eps = 1e-15;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let x = w[(i, p)];
                    let y = w[(i, q)];
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= eps * math::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + math::sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..m {
                    let x = w[(i, p)];
                    let y = w[(i, q)];
                    w[(i, p)] = c * x - s * y;
                    w[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let x = v[(i, p)];
                    let y = v[(i, q)];
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> = (0..n).map(|j| (norm(&w.col(j)), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let s: Vec<f64> = order.iter().map(|(x, _)| x * scale).collect();
    let idx: Vec<usize> = order.iter().map(|(_, j)| *j).collect();
    let v = v.select_cols(&idx);
    let mut u = Mat::zeros(m, n);
    let tiny = 1e-300;
    let mut filled = Vec::new();
    for (k, &(sv, j)) in order.iter().enumerate() {
        if sv > tiny {
            let col: Vec<f64> = w.col(j).iter().map(|x| x / sv).collect();
            u.set_col(k, &col);
            filled.push(k);
        }
    }
    if filled.len() < n {
        complete_columns(&mut u, &filled);
    }
    Svd { u, s, v }
}

/// Fills the columns of `u` not listed in `filled` with orthonormal vectors
/// orthogonal to the filled ones.
fn complete_columns(u: &mut Mat, filled: &[usize]) {
    let m = u.rows();
    let mut basis: Vec<Vec<f64>> = filled.iter().map(|&k| u.col(k)).collect();
    let mut e = 0;
    for k in 0..u.cols() {
        if filled.contains(&k) {
            continue;
        }
        while e < m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            e += 1;
            for _ in 0..2 {
                for b in &basis {
                    let d = dot(&cand, b);
                    for (c, bi) in cand.iter_mut().zip(b) {
                        *c -= d * bi;
                    }
                }
            }
            let nn = norm(&cand);
            if nn > 1e-8 {
                for c in cand.iter_mut() {
                    *c /= nn;
                }
                u.set_col(k, &cand);
                basis.push(cand);
                break;
            }
        }
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
/// Eigenvalues are returned in non-increasing order with matching eigenvector columns.
pub fn sym_eig(a: &Mat) -> (Vec<f64>, Mat) {
    assert!(a.is_square());
    let n = a.rows();
    let mut m = a.symmetrize();
    let mut v = Mat::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= 1e-300 || off <= 1e-32 * { let f = m.frobenius(); f * f } {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let vals = order.iter().map(|&i| m[(i, i)]).collect();
    (vals, v.select_cols(&order))
}

/// Sines of the principal angles between the column spans of two matrices with
/// orthonormal columns, in non-decreasing order. There are `min(p, q)` of them.
pub fn principal_sines(a: &Mat, b: &Mat) -> Vec<f64> {
    let (big, small) = if a.cols() >= b.cols() { (a, b) } else { (b, a) };
    // (I - P_big) small
    let proj = big.matmul(&big.tmatmul(small));
    let resid = small.sub(&proj);
    let mut s = svd(&resid).s;
    for x in s.iter_mut() {
        *x = x.min(1.0);
    }
    s.reverse();
    s
}

/// Principal angles (radians, non-decreasing) between two orthonormal column spans,
/// computed from both cosines and sines so that small and large angles are accurate.
pub fn principal_angles(a: &Mat, b: &Mat) -> Vec<f64> {
    let k = a.cols().min(b.cols());
    if k == 0 {
        return Vec::new();
    }
    let cos = svd(&a.tmatmul(b)).s; // non-increasing
    let sin = principal_sines(a, b); // non-decreasing
    (0..k).map(|i| math::atan2(sin[i], cos[i].min(1.0))).collect()
}
