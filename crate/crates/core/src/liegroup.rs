//! Lie-theoretic kernel for `SL(n, R)`: Cartan (KAK) decomposition, simple roots and
//! fundamental weights of type `A_{n-1}`, the Weyl group and relative Bruhat position
//! of two flags.
//!
//! The maximal compact subgroup is `SO(n)` (Cartan involution `g ↦ g⁻ᵀ`), so the
//! Cartan decomposition is the singular value decomposition with signs fixed. For
//! the positive chamber element `a = exp(diag(a_log))`:
//!
//! - simple root `α_k(a_log) = a_log[k] − a_log[k+1]`,
//! - fundamental weight `ω_k(a_log) = a_log[1] + … + a_log[k]`.

use alloc::vec;
use alloc::vec::Vec;
use alloc::format;

use crate::boundary::FullFlag;
use crate::linalg::{self, Mat};
use crate::rng::Stream;
use crate::{math, Error, Result};

/// Tolerance on `|det − 1|` accepted when constructing a [`GroupElement`].
pub const DET_TOLERANCE: f64 = 1e-6;

/// An element of `SL(n, R)`, `n >= 2`.
///
/// Construction rescales the matrix by `det^{-1/n}` so that the stored determinant
/// is 1 to rounding; inputs further than [`DET_TOLERANCE`] from 1 are rejected.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupElement(Mat);

impl GroupElement {
    pub fn new(m: Mat) -> Result<Self> {
        if !m.is_square() || m.rows() < 2 {
            return Err(Error::InvalidInput(format!(
                "group elements are square of size >= 2, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        if !m.is_finite() {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let det = m.det();
        if (det - 1.0).abs() > DET_TOLERANCE {
            return Err(Error::InvalidInput(format!("determinant {det} is not 1 (|det-1| > 1e-6)")));
        }
        let s = math::powf(det, -1.0 / m.rows() as f64);
        Ok(Self(m.scale(s)))
    }

    /// Rescales an invertible matrix into `SL(n, R)`; a negative determinant is first
    /// corrected by flipping the sign of the last row.
    pub fn project(mut m: Mat) -> Result<Self> {
        let det = m.det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Singular);
        }
        if det < 0.0 {
            let last = m.rows() - 1;
            for j in 0..m.cols() {
                m[(last, j)] = -m[(last, j)];
            }
        }
        let s = math::powf(det.abs(), -1.0 / m.rows() as f64);
        Self::new(m.scale(s))
    }

    pub fn identity(n: usize) -> Self {
        Self(Mat::identity(n))
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        Self::new(Mat::diag(values))
    }

    /// Rotation by `theta` in the plane of coordinates `i`, `j` (0-based).
    pub fn rotation(n: usize, i: usize, j: usize, theta: f64) -> Self {
        let mut m = Mat::identity(n);
        let (c, s) = (math::cos(theta), math::sin(theta));
        m[(i, i)] = c;
        m[(j, j)] = c;
        m[(i, j)] = -s;
        m[(j, i)] = s;
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }

    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        GroupElement(self.0.matmul(&other.0))
    }

    pub fn inverse(&self) -> GroupElement {
        GroupElement(self.0.inverse().expect("determinant-one matrices are invertible"))
    }

    pub fn kak(&self) -> CartanTriple {
        kak(self)
    }

    /// Log singular values, non-increasing.
    pub fn a_log(&self) -> Vec<f64> {
        linalg::svd(&self.0).s.iter().map(|s| math::ln(*s)).collect()
    }
}

/// `g = k1 · exp(diag(a_log)) · k2` with `k1, k2 ∈ SO(n)` and `a_log` non-increasing.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CartanTriple {
    pub k1: Mat,
    pub a_log: Vec<f64>,
    pub k2: Mat,
}

impl CartanTriple {
    /// Builds a triple from parts; `a_log` must be non-increasing.
    pub fn new(k1: Mat, a_log: Vec<f64>, k2: Mat) -> Self {
        debug_assert!(a_log.windows(2).all(|w| w[0] >= w[1]));
        Self { k1, a_log, k2 }
    }

    pub fn dim(&self) -> usize {
        self.a_log.len()
    }

    /// `k1 · exp(diag(a_log)) · k2` as an explicit matrix.
    pub fn reassemble(&self) -> Mat {
        let n = self.dim();
        let d = Mat::from_fn(n, n, |i, j| if i == j { math::exp(self.a_log[i]) } else { 0.0 });
        self.k1.matmul(&d).matmul(&self.k2)
    }

    /// Same `k1, k2` with `a_log` multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Self {
        Self { k1: self.k1.clone(), a_log: self.a_log.iter().map(|a| a * t).collect(), k2: self.k2.clone() }
    }
}

pub fn kak(g: &GroupElement) -> CartanTriple {
    let n = g.dim();
    let f = linalg::svd(g.matrix());
    let mut k1 = f.u;
    let mut v = f.v;
    // det(k1) · det(k2) = 1 because det(g) > 0; push a −1 into the last columns.
    if k1.det() < 0.0 {
        for i in 0..n {
            k1[(i, n - 1)] = -k1[(i, n - 1)];
            v[(i, n - 1)] = -v[(i, n - 1)];
        }
    }
    let a_log = f.s.iter().map(|s| math::ln(*s)).collect();
    CartanTriple { k1, a_log, k2: v.transpose() }
}

fn check_root(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        Err(Error::IndexOutOfRange { index: k, max: n - 1 })
    } else {
        Ok(())
    }
}

/// Simple root `α_k` on a log-chamber vector.
pub fn alpha_from_log(a_log: &[f64], k: usize) -> Result<f64> {
    check_root(a_log.len(), k)?;
    Ok(a_log[k - 1] - a_log[k])
}

/// Fundamental weight `ω_k` on a log-chamber vector.
pub fn omega_from_log(a_log: &[f64], k: usize) -> Result<f64> {
    check_root(a_log.len(), k)?;
    Ok(a_log[..k].iter().sum())
}

/// `α_k(g)`, in nats.
pub fn alpha_val(g: &GroupElement, k: usize) -> Result<f64> {
    check_root(g.dim(), k)?;
    alpha_from_log(&g.a_log(), k)
}

/// `ω_k(g)`: log of the product of the top `k` singular values.
pub fn omega_val(g: &GroupElement, k: usize) -> Result<f64> {
    check_root(g.dim(), k)?;
    omega_from_log(&g.a_log(), k)
}

/// Pairing `⟨α_k, α_j⟩` expressing simple roots in fundamental weights; for type
/// `A_{n-1}` this is the Cartan matrix.
pub fn cartan_pairing(n: usize) -> Vec<Vec<i32>> {
    assert!(n >= 2, "cartan_pairing needs n >= 2");
    let r = n - 1;
    (0..r)
        .map(|i| {
            (0..r)
                .map(|j| match i.abs_diff(j) {
                    0 => 2,
                    1 => -1,
                    _ => 0,
                })
                .collect()
        })
        .collect()
}

/// `Σ_γ ⟨α_k, γ⟩ · values[γ]` for values indexed by root (values[0] is root 1).
pub fn pair_with_roots(n: usize, k: usize, values: &[f64]) -> f64 {
    let c = cartan_pairing(n);
    c[k - 1].iter().zip(values).map(|(p, v)| f64::from(*p) * v).sum()
}

/// Signed permutation matrix with determinant `+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeylElement {
    matrix: Mat,
}

impl WeylElement {
    /// `perm[i]` is the (0-based) row holding the nonzero entry of column `i`, so the
    /// element sends `e_i` to `±e_{perm[i]}`. Signs are `+1` except possibly at column
    /// 0, which absorbs the sign of the permutation.
    pub fn from_permutation(perm: &[usize]) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || seen[p] {
                return Err(Error::InvalidInput("not a permutation".into()));
            }
            seen[p] = true;
        }
        let mut m = Mat::zeros(n, n);
        for (i, &p) in perm.iter().enumerate() {
            m[(p, i)] = 1.0;
        }
        if m.det() < 0.0 {
            m[(perm[0], 0)] = -1.0;
        }
        Ok(Self { matrix: m })
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// The underlying permutation (0-based images of the basis vectors).
    pub fn permutation(&self) -> Vec<usize> {
        let n = self.dim();
        (0..n).map(|j| (0..n).find(|&i| self.matrix[(i, j)] != 0.0).unwrap_or(0)).collect()
    }

    pub fn as_group_element(&self) -> GroupElement {
        GroupElement(self.matrix.clone())
    }

    /// Image of the simple root index `k` under `α ↦ −w α w⁻¹`, when this is a
    /// simple root again (always the case for the longest element).
    pub fn root_index_image(&self, k: usize) -> Option<usize> {
        let perm = self.permutation();
        // −w α_k w⁻¹ = e_{w(k+1)} − e_{w(k)}, simple iff w(k) = w(k+1) + 1.
        let (a, b) = (perm[k - 1], perm[k]);
        (a == b + 1).then_some(b + 1)
    }
}

/// Longest Weyl element: the coordinate reversal, signed to have determinant `+1`.
pub fn longest_weyl(n: usize) -> WeylElement {
    assert!(n >= 2);
    let perm: Vec<usize> = (0..n).rev().collect();
    let mut m = Mat::zeros(n, n);
    for (col, &row) in perm.iter().enumerate() {
        m[(row, col)] = 1.0;
    }
    if m.det() < 0.0 {
        m[(n - 1, 0)] = -1.0;
    }
    WeylElement { matrix: m }
}

/// The index map `k ↦ n − k` induced on simple roots by `α ↦ −w₀ α w₀⁻¹`.
pub fn opposition(n: usize, k: usize) -> usize {
    n - k
}

/// Subset `I` of the simple roots (1-based indices), defining the parabolic `P_I`.
///
/// A point of `H/P_I` is a partial flag that keeps level `j` exactly when
/// `α_j ∉ I`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParabolicSpec {
    n: usize,
    roots: Vec<usize>,
}

impl ParabolicSpec {
    pub fn new(n: usize, mut roots: Vec<usize>) -> Result<Self> {
        for &k in &roots {
            check_root(n, k)?;
        }
        roots.sort_unstable();
        roots.dedup();
        Ok(Self { n, roots })
    }

    /// The Borel subgroup (`I = ∅`): every level retained.
    pub fn borel(n: usize) -> Self {
        Self { n, roots: Vec::new() }
    }

    /// Parabolic whose retained levels are the partial sums of `dims`.
    pub fn from_block_dims(dims: &[usize]) -> Self {
        let n: usize = dims.iter().sum();
        let mut retained = Vec::new();
        let mut acc = 0;
        for d in &dims[..dims.len().saturating_sub(1)] {
            acc += d;
            retained.push(acc);
        }
        let roots = (1..n).filter(|k| !retained.contains(k)).collect();
        Self { n, roots }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn contains(&self, k: usize) -> bool {
        self.roots.contains(&k)
    }

    /// Retained flag levels `j ∈ 1..n` (those with `α_j ∉ I`).
    pub fn retained_levels(&self) -> Vec<usize> {
        (1..self.n).filter(|k| !self.contains(*k)).collect()
    }

    /// Block sizes between consecutive retained levels.
    pub fn block_dims(&self) -> Vec<usize> {
        let mut dims = Vec::new();
        let mut prev = 0;
        for l in self.retained_levels().into_iter().chain(core::iter::once(self.n)) {
            dims.push(l - prev);
            prev = l;
        }
        dims
    }

    /// `I' = { −w₀ α w₀⁻¹ : α ∈ I }`.
    pub fn opposite(&self) -> Self {
        let mut roots: Vec<usize> = self.roots.iter().map(|&k| opposition(self.n, k)).collect();
        roots.sort_unstable();
        Self { n: self.n, roots }
    }
}

/// `‖v_1 ∧ … ∧ v_k‖` for the columns of `frame`: the square root of their Gram
/// determinant. Columns are normalised before forming the Gram matrix and the norms
/// are multiplied back, which keeps the determinant well scaled. Rank drop gives 0.
pub fn wedge_volume(frame: &Mat) -> f64 {
    let k = frame.cols();
    if k == 0 {
        return 1.0;
    }
    let norms: Vec<f64> = (0..k).map(|j| linalg::norm(&frame.col(j))).collect();
    if norms.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return 0.0;
    }
    let unit = Mat::from_fn(frame.rows(), k, |i, j| frame[(i, j)] / norms[j]);
    let gram = unit.tmatmul(&unit);
    let det = linalg::lu_det(&gram);
    if det <= 0.0 {
        return 0.0;
    }
    norms.iter().product::<f64>() * math::sqrt(det)
}

/// Natural log of [`wedge_volume`], summing column-norm logs so that long columns do
/// not overflow. Returns `None` on rank drop.
pub fn log_wedge_volume(frame: &Mat) -> Option<f64> {
    let k = frame.cols();
    if k == 0 {
        return Some(0.0);
    }
    let norms: Vec<f64> = (0..k).map(|j| linalg::norm(&frame.col(j))).collect();
    if norms.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return None;
    }
    let unit = Mat::from_fn(frame.rows(), k, |i, j| frame[(i, j)] / norms[j]);
    let det = linalg::lu_det(&unit.tmatmul(&unit));
    if det <= 0.0 || !det.is_finite() {
        return None;
    }
    Some(norms.iter().map(|v| math::ln(*v)).sum::<f64>() + 0.5 * math::ln(det))
}

/// Relative position of two full flags.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum WeylLabel {
    /// `w` as a 1-based permutation: `dim(F_i ∩ F'_j) = #{a ≤ i : w(a) ≤ j}`.
    Permutation(Vec<usize>),
    Ambiguous,
}

impl WeylLabel {
    pub fn is_identity(&self) -> bool {
        matches!(self, WeylLabel::Permutation(p) if p.iter().enumerate().all(|(i, &w)| w == i + 1))
    }

    pub fn is_longest(&self) -> bool {
        matches!(self, WeylLabel::Permutation(p) if p.iter().enumerate().all(|(i, &w)| w == p.len() - i))
    }
}

/// Intersection-dimension table and Weyl position of two full flags.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BruhatProfile {
    /// `table[i-1][j-1] = dim(F_i ∩ F'_j)` for `i, j ∈ 1..=n`.
    pub table: Vec<Vec<usize>>,
    pub label: WeylLabel,
}

/// Default angle below which two directions are treated as equal.
pub const DEFAULT_ANGLE_TOL: f64 = 1e-6;

/// Number of principal angles below `angle_tol` between two orthonormal spans.
pub fn intersection_dim(a: &Mat, b: &Mat, angle_tol: f64) -> usize {
    linalg::principal_angles(a, b).iter().filter(|&&t| t < angle_tol).count()
}

pub fn bruhat_profile(f: &FullFlag, g: &FullFlag, angle_tol: f64) -> Result<BruhatProfile> {
    let n = f.dim();
    if g.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g.dim() });
    }
    if angle_tol <= 0.0 {
        return Err(Error::InvalidInput("angle tolerance must be positive".into()));
    }
    let table: Vec<Vec<usize>> = (1..=n)
        .map(|i| (1..=n).map(|j| intersection_dim(&f.level(i), &g.level(j), angle_tol)).collect())
        .collect();
    let label = label_from_table(&table);
    Ok(BruhatProfile { table, label })
}

fn label_from_table(table: &[Vec<usize>]) -> WeylLabel {
    let n = table.len();
    let r = |i: usize, j: usize| -> i64 {
        if i == 0 || j == 0 {
            0
        } else {
            table[i - 1][j - 1] as i64
        }
    };
    let mut perm = vec![0usize; n];
    let mut col_used = vec![false; n];
    for i in 1..=n {
        let mut found = None;
        for j in 1..=n {
            let d = r(i, j) - r(i - 1, j) - r(i, j - 1) + r(i - 1, j - 1);
            match d {
                0 => {}
                1 if found.is_none() && !col_used[j - 1] => found = Some(j),
                _ => return WeylLabel::Ambiguous,
            }
        }
        match found {
            Some(j) => {
                perm[i - 1] = j;
                col_used[j - 1] = true;
            }
            None => return WeylLabel::Ambiguous,
        }
    }
    WeylLabel::Permutation(perm)
}

/// Haar-distributed element of `SO(n)` (QR of a Gaussian matrix, det fixed to +1).
pub fn random_orthogonal(rng: &mut Stream, n: usize) -> Mat {
    let g = Mat::from_fn(n, n, |_, _| rng.normal());
    let mut q = linalg::qr(&g).q;
    if q.det() < 0.0 {
        for i in 0..n {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    q
}

/// Gaussian matrix projected to determinant one.
pub fn random_element(rng: &mut Stream, n: usize) -> GroupElement {
    loop {
        let g = Mat::from_fn(n, n, |_, _| rng.normal());
        if let Ok(e) = GroupElement::project(g) {
            return e;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Domain, Stream};

    #[test]
    fn identity_kak() {
        let t = kak(&GroupElement::identity(3));
        assert!(t.a_log.iter().all(|a| a.abs() < 1e-15));
        assert!(t.reassemble().max_abs_diff(&Mat::identity(3)) < 1e-14);
    }

    #[test]
    fn diagonal_kak() {
        let g = GroupElement::diag(&[4.0, 1.0, 0.25]).unwrap();
        let t = kak(&g);
        let ln4 = math::ln(4.0);
        assert!((t.a_log[0] - ln4).abs() < 1e-14);
        assert!(t.a_log[1].abs() < 1e-14);
        assert!((t.a_log[2] + ln4).abs() < 1e-14);
        for i in 0..3 {
            assert!((t.k1[(i, i)].abs() - 1.0).abs() < 1e-14);
            assert!((t.k2[(i, i)].abs() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn kak_rejects_bad_input() {
        let m = Mat::diag(&[2.0, 1.0]);
        assert!(matches!(GroupElement::new(m), Err(Error::InvalidInput(_))));
        let mut nan = Mat::identity(2);
        nan[(0, 1)] = f64::NAN;
        assert!(matches!(GroupElement::new(nan), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn kak_random_round_trip_and_signs() {
        let mut rng = Stream::new(1, 0, Domain::Probe, 0);
        for n in [2, 3, 4, 5] {
            for _ in 0..200 {
                let g = random_element(&mut rng, n);
                let t = kak(&g);
                assert!(t.reassemble().max_abs_diff(g.matrix()) < 1e-9);
                assert!(t.a_log.windows(2).all(|w| w[0] >= w[1]));
                assert!(t.k1.orthonormality_defect() < 1e-10);
                assert!(t.k2.orthonormality_defect() < 1e-10);
                assert!(t.k1.det() > 0.0 && t.k2.det() > 0.0);
            }
        }
    }

    #[test]
    fn alpha_and_omega_on_diagonal() {
        let g = GroupElement::diag(&[2.0, 1.0, 0.5]).unwrap();
        let l2 = math::ln(2.0);
        for k in 1..=2 {
            assert!((alpha_val(&g, k).unwrap() - l2).abs() < 1e-14);
            assert!((omega_val(&g, k).unwrap() - l2).abs() < 1e-14);
        }
        assert!(matches!(alpha_val(&g, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(omega_val(&g, 3), Err(Error::IndexOutOfRange { .. })));
        let id = GroupElement::identity(4);
        assert!(alpha_val(&id, 2).unwrap().abs() < 1e-15);
        assert!(omega_val(&id, 3).unwrap().abs() < 1e-15);
    }

    fn cofactor_det(m: &[Vec<f64>]) -> f64 {
        let n = m.len();
        if n == 1 {
            return m[0][0];
        }
        (0..n)
            .map(|j| {
                let minor: Vec<Vec<f64>> =
                    m[1..].iter().map(|r| r.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| *v).collect()).collect();
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][j] * cofactor_det(&minor)
            })
            .sum()
    }

    #[test]
    fn wedge_volume_values() {
        let e = Mat::identity(3).col_range(0, 2);
        assert!((wedge_volume(&e) - 1.0).abs() < 1e-15);
        let g = Mat::diag(&[2.0, 1.0, 0.5]);
        assert!((wedge_volume(&g.matmul(&e)) - 2.0).abs() < 1e-14);
        let degenerate = Mat::from_columns(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]);
        assert_eq!(wedge_volume(&degenerate), 0.0);
        assert_eq!(wedge_volume(&Mat::zeros(3, 1)), 0.0);
    }

    #[test]
    fn wedge_volume_matches_cofactor_gram() {
        let mut rng = Stream::new(2, 0, Domain::Probe, 0);
        for n in 2..=5 {
            for k in 1..n {
                for _ in 0..50 {
                    let f = Mat::from_fn(n, k, |_, _| rng.normal());
                    let gram: Vec<Vec<f64>> = (0..k)
                        .map(|a| (0..k).map(|b| linalg::dot(&f.col(a), &f.col(b))).collect())
                        .collect();
                    let oracle = cofactor_det(&gram).max(0.0).sqrt();
                    let v = wedge_volume(&f);
                    assert!((v - oracle).abs() <= 1e-10 * oracle.max(1.0), "{v} vs {oracle}");
                    let lv = log_wedge_volume(&f).unwrap();
                    assert!((lv.exp() - v).abs() <= 1e-10 * v.max(1.0));
                }
            }
        }
    }

    #[test]
    fn cartan_matrices() {
        assert_eq!(cartan_pairing(2), vec![vec![2]]);
        assert_eq!(cartan_pairing(3), vec![vec![2, -1], vec![-1, 2]]);
        assert_eq!(cartan_pairing(4)[1], vec![-1, 2, -1]);
    }

    #[test]
    fn longest_element() {
        let w2 = longest_weyl(2);
        assert_eq!(w2.matrix().to_rows(), vec![vec![0.0, 1.0], vec![-1.0, 0.0]]);
        for n in 2..7 {
            let w = longest_weyl(n);
            assert!((w.matrix().det() - 1.0).abs() < 1e-15);
            assert!(w.matrix().orthonormality_defect() == 0.0);
            assert_eq!(w.permutation(), (0..n).rev().collect::<Vec<_>>());
            for k in 1..n {
                assert_eq!(w.root_index_image(k), Some(n - k));
            }
        }
        assert_eq!(opposition(3, 1), 2);
        assert_eq!(opposition(3, 2), 1);
    }

    #[test]
    fn parabolic_levels() {
        let p = ParabolicSpec::new(4, vec![1, 3]).unwrap();
        assert_eq!(p.retained_levels(), vec![2]);
        assert_eq!(p.block_dims(), vec![2, 2]);
        assert_eq!(p.opposite().roots(), &[1, 3]);
        assert_eq!(ParabolicSpec::from_block_dims(&[2, 2]), p);
        assert_eq!(ParabolicSpec::from_block_dims(&[1, 1, 1]), ParabolicSpec::borel(3));
        assert_eq!(ParabolicSpec::new(3, vec![2]).unwrap().opposite().roots(), &[1]);
    }

    #[test]
    fn bruhat_standard_positions() {
        let std = FullFlag::standard(4);
        let rev = FullFlag::reversed(4);
        let same = bruhat_profile(&std, &std, DEFAULT_ANGLE_TOL).unwrap();
        assert!(same.label.is_identity());
        let opp = bruhat_profile(&std, &rev, DEFAULT_ANGLE_TOL).unwrap();
        assert!(opp.label.is_longest());
        assert_eq!(opp.table[1][1], 0);
        assert_eq!(opp.table[2][1], 1);
    }

    #[test]
    fn unrealisable_table_is_ambiguous() {
        let table = vec![vec![1, 1], vec![0, 2]];
        assert_eq!(label_from_table(&table), WeylLabel::Ambiguous);
    }
}
