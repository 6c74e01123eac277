//! Flag-variety geometry and the boundary functionals `ξ_k`, `σ̂_k`.
//!
//! For `g ∈ SL(n, R)` and a full flag `z` with orthonormal basis `Z`,
//!
//! - `ξ_k(g, z) = log vol(g·Z_k) − log vol(Z_k)` where `Z_k` holds the first `k`
//!   columns (the norm of `g` on the decomposable vector `z_1 ∧ … ∧ z_k`),
//! - `σ̂_k(g, z) = Σ_γ ⟨α_k, γ⟩ ξ_γ(g, z) = 2ξ_k − ξ_{k−1} − ξ_{k+1}`, which equals the
//!   `α_k` component of the Iwasawa `A`-part of `g` relative to `z`.
//!
//! Both satisfy the cocycle identity `f(g₁g₂, z) = f(g₁, g₂z) + f(g₂, z)`.

use alloc::vec::Vec;
use alloc::format;

use crate::liegroup::{self, CartanTriple, GroupElement, ParabolicSpec};
use crate::linalg::{self, Mat};
use crate::rng::Stream;
use crate::{math, Error, Result};

/// Orthonormality tolerance enforced on stored frames and flags.
pub const ORTHO_TOL: f64 = 1e-10;

/// `k` orthonormal vectors in `R^n`, stored as the columns of an `n × k` matrix.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Frame(Mat);

impl Frame {
    pub fn new(m: Mat) -> Result<Self> {
        if m.orthonormality_defect() > ORTHO_TOL {
            return Err(Error::InvalidInput("frame columns are not orthonormal".into()));
        }
        Ok(Self(m))
    }

    /// Orthonormal basis of the column span, preserving the nested order of spans.
    pub fn orthonormalize(m: &Mat) -> Result<Self> {
        let f = linalg::thin_qr(m);
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..m.cols() {
            if f.r[(i, i)] <= 1e-13 * scale {
                return Err(Error::DegenerateFrame);
            }
        }
        Ok(Self(f.q))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn len(&self) -> usize {
        self.0.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.cols() == 0
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }

    /// Orthogonal projector onto the span.
    pub fn projector(&self) -> Mat {
        self.0.matmul(&self.0.transpose())
    }
}

/// Point of `SL(n)/B`: an orthonormal basis whose first `i` vectors span level `i`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FullFlag {
    basis: Mat,
}

impl FullFlag {
    pub fn new(basis: Mat) -> Result<Self> {
        if !basis.is_square() {
            return Err(Error::InvalidInput("flag basis must be square".into()));
        }
        if basis.orthonormality_defect() > ORTHO_TOL {
            return Err(Error::InvalidInput("flag basis is not orthonormal".into()));
        }
        Ok(Self { basis })
    }

    /// Flag spanned by the leading columns of an arbitrary invertible matrix.
    pub fn from_spanning(m: &Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput("flag basis must be square".into()));
        }
        Ok(Self { basis: Frame::orthonormalize(m)?.into_matrix() })
    }

    /// `span(e_1) ⊂ span(e_1, e_2) ⊂ …`.
    pub fn standard(n: usize) -> Self {
        Self { basis: Mat::identity(n) }
    }

    /// `span(e_n) ⊂ span(e_n, e_{n−1}) ⊂ …`.
    pub fn reversed(n: usize) -> Self {
        Self { basis: Mat::from_fn(n, n, |i, j| if i + j == n - 1 { 1.0 } else { 0.0 }) }
    }

    /// Flag of a Haar-random orthonormal basis.
    pub fn random(rng: &mut Stream, n: usize) -> Self {
        Self { basis: liegroup::random_orthogonal(rng, n) }
    }

    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    /// Orthonormal basis of level `i` (`0 ≤ i ≤ n`), as an `n × i` matrix.
    pub fn level(&self, i: usize) -> Mat {
        self.basis.col_range(0, i)
    }

    pub fn level_frame(&self, i: usize) -> Frame {
        Frame(self.level(i))
    }

    /// Orthogonal projector onto level `i`.
    pub fn projector(&self, i: usize) -> Mat {
        let l = self.level(i);
        l.matmul(&l.transpose())
    }

    /// `g · z`.
    pub fn act(&self, g: &GroupElement) -> FullFlag {
        self.act_matrix(g.matrix())
    }

    /// `m · z` for any invertible matrix; a positive multiple of `g` acts like `g`.
    pub fn act_matrix(&self, m: &Mat) -> FullFlag {
        let f = linalg::qr(&m.matmul(&self.basis));
        FullFlag { basis: f.q }
    }

    /// The same flag with its basis written in the reverse order; level `i` of the
    /// result is the orthogonal complement of level `n − i` of `self`.
    pub fn orthogonal_dual(&self) -> FullFlag {
        let n = self.dim();
        FullFlag { basis: Mat::from_fn(n, n, |i, j| self.basis[(i, n - 1 - j)]) }
    }
}

/// Point of `SL(n)/P_I`: the retained levels (those `j` with `α_j ∉ I`) of a flag.
///
/// The basis is stored in full, but only spans at retained levels carry meaning.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PartialFlagPoint {
    spec: ParabolicSpec,
    basis: Mat,
}

impl PartialFlagPoint {
    pub fn new(spec: ParabolicSpec, basis: Mat) -> Result<Self> {
        if basis.rows() != spec.dim() || !basis.is_square() {
            return Err(Error::DimensionMismatch { expected: spec.dim(), got: basis.rows() });
        }
        if basis.orthonormality_defect() > ORTHO_TOL {
            return Err(Error::InvalidInput("partial flag basis is not orthonormal".into()));
        }
        Ok(Self { spec, basis })
    }

    pub fn from_full(spec: ParabolicSpec, flag: &FullFlag) -> Result<Self> {
        Self::new(spec, flag.basis().clone())
    }

    pub fn spec(&self) -> &ParabolicSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    /// A full flag through this point, compatible at every retained level.
    pub fn lift(&self) -> FullFlag {
        FullFlag { basis: self.basis.clone() }
    }

    /// Level `j`, which must be retained.
    pub fn level(&self, j: usize) -> Result<Mat> {
        if j == 0 || j >= self.dim() || self.spec.contains(j) {
            return Err(Error::InvalidInput(format!("level {j} is not retained")));
        }
        Ok(self.basis.col_range(0, j))
    }

    pub fn projector(&self, j: usize) -> Result<Mat> {
        let l = self.level(j)?;
        Ok(l.matmul(&l.transpose()))
    }

    pub fn act(&self, g: &GroupElement) -> PartialFlagPoint {
        let f = linalg::qr(&g.matrix().matmul(&self.basis));
        PartialFlagPoint { spec: self.spec.clone(), basis: f.q }
    }

    /// Largest principal angle over retained levels.
    pub fn distance(&self, other: &PartialFlagPoint) -> Result<f64> {
        if self.spec != other.spec {
            return Err(Error::InvalidInput("partial flags of different types".into()));
        }
        let mut worst: f64 = 0.0;
        for j in self.spec.retained_levels() {
            worst = worst.max(max_angle(&self.basis.col_range(0, j), &other.basis.col_range(0, j)));
        }
        Ok(worst)
    }
}

fn max_angle(a: &Mat, b: &Mat) -> f64 {
    linalg::principal_angles(a, b).into_iter().fold(0.0, f64::max)
}

fn check_root(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        Err(Error::IndexOutOfRange { index: k, max: n - 1 })
    } else {
        Ok(())
    }
}

fn check_dims(g: usize, z: usize) -> Result<()> {
    if g != z {
        Err(Error::DimensionMismatch { expected: z, got: g })
    } else {
        Ok(())
    }
}

/// `log vol(m · Z_k) − log vol(Z_k)` for any level `0 ≤ k ≤ n`.
fn xi_level(m: &Mat, z: &FullFlag, k: usize) -> Result<f64> {
    if k == 0 {
        return Ok(0.0);
    }
    let zk = z.level(k);
    let base = liegroup::log_wedge_volume(&zk).ok_or(Error::DegenerateFrame)?;
    let moved = liegroup::log_wedge_volume(&m.matmul(&zk)).ok_or(Error::DegenerateFrame)?;
    let v = moved - base;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::DegenerateFrame)
    }
}

/// `ξ_k(g, z)`.
pub fn xi(g: &GroupElement, z: &FullFlag, k: usize) -> Result<f64> {
    check_dims(g.dim(), z.dim())?;
    check_root(z.dim(), k)?;
    xi_level(g.matrix(), z, k)
}

/// `ξ_k(g, z)` for `g` given in Cartan form, evaluated through the Cauchy–Binet
/// expansion `‖∧^k(A W)‖² = Σ_S e^{2 a_S} det(W_S)²`, `W = k2 · Z_k`, so that very
/// large `a_log` never forms an explicit matrix product.
pub fn xi_kak(g: &CartanTriple, z: &FullFlag, k: usize) -> Result<f64> {
    let n = g.dim();
    check_dims(n, z.dim())?;
    check_root(n, k)?;
    let w = g.k2.matmul(&z.level(k));
    let mut terms = Vec::new();
    for s in linalg::subsets(n, k) {
        let minor = linalg::lu_det(&w.select_rows(&s));
        if minor != 0.0 {
            let a: f64 = s.iter().map(|&i| g.a_log[i]).sum();
            terms.push(2.0 * (a + math::ln(minor.abs())));
        }
    }
    if terms.is_empty() {
        return Err(Error::DegenerateFrame);
    }
    Ok(0.5 * math::log_sum_exp(terms.iter().copied()))
}

/// `σ̂_k(g, z)` through the root–weight pairing of the `ξ_γ`.
pub fn sigma_hat(g: &GroupElement, z: &FullFlag, k: usize) -> Result<f64> {
    check_dims(g.dim(), z.dim())?;
    let n = z.dim();
    check_root(n, k)?;
    let m = g.matrix();
    let mut xis = Vec::with_capacity(n - 1);
    for gamma in 1..n {
        xis.push(xi_level(m, z, gamma)?);
    }
    Ok(liegroup::pair_with_roots(n, k, &xis))
}

/// `σ̂_k` for `g` given in Cartan form; see [`xi_kak`].
pub fn sigma_hat_kak(g: &CartanTriple, z: &FullFlag, k: usize) -> Result<f64> {
    let n = g.dim();
    check_root(n, k)?;
    let mut xis = Vec::with_capacity(n - 1);
    for gamma in 1..n {
        xis.push(xi_kak(g, z, gamma)?);
    }
    Ok(liegroup::pair_with_roots(n, k, &xis))
}

/// `σ̂_k` from the Iwasawa decomposition `g·Z = Q R`: `log R_kk − log R_{k+1,k+1}`.
pub fn sigma_hat_iwasawa(g: &GroupElement, z: &FullFlag, k: usize) -> Result<f64> {
    check_dims(g.dim(), z.dim())?;
    check_root(z.dim(), k)?;
    let r = linalg::qr(&g.matrix().matmul(z.basis())).r;
    let (a, b) = (r[(k - 1, k - 1)], r[(k, k)]);
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::DegenerateFrame);
    }
    Ok(math::ln(a) - math::ln(b))
}

/// Transversality of level `k` of `w` to the level `n − k` of the standard flag:
/// the smallest singular value of the bottom `k` rows of `W_k`.
fn level_transversality(w: &Mat, k: usize) -> f64 {
    let n = w.rows();
    let rows: Vec<usize> = (n - k..n).collect();
    let block = w.col_range(0, k).select_rows(&rows);
    linalg::svd(&block).s.last().copied().unwrap_or(0.0)
}

/// Proxy distance from `z` to `g·J`, `J` the complement of the big Bruhat cell.
///
/// `g` is replaced by the orthogonal factor of `g = QR`; since `R ∈ B` fixes `J`,
/// `gJ = QJ`. With `w = Qᵀz`, the value is the minimum over `k = 1..n−1` of the
/// smallest principal cosine between level `k` of `w` and `span(e_{n−k+1}, …, e_n)`,
/// equivalently the smallest singular value of the corresponding minor block. It is
/// 0 exactly when `w` is outside the big cell and 1 for the reversed flag.
pub fn dist_to_complement(z: &FullFlag, g: &GroupElement) -> f64 {
    dist_to_complement_levels(z.basis(), g.matrix(), 1..z.dim())
}

/// [`dist_to_complement`] restricted to the retained levels of a partial flag.
pub fn dist_to_complement_partial(z: &PartialFlagPoint, g: &GroupElement) -> f64 {
    dist_to_complement_levels(z.basis(), g.matrix(), z.spec().retained_levels())
}

fn dist_to_complement_levels(basis: &Mat, g: &Mat, levels: impl IntoIterator<Item = usize>) -> f64 {
    let q = linalg::qr(g).q;
    let w = q.tmatmul(basis);
    levels.into_iter().map(|k| level_transversality(&w, k)).fold(f64::INFINITY, f64::min).clamp(0.0, 1.0)
}

/// Largest principal angle between corresponding levels, over all levels.
pub fn flag_distance(f: &FullFlag, g: &FullFlag) -> Result<f64> {
    check_dims(f.dim(), g.dim())?;
    let mut worst: f64 = 0.0;
    for i in 1..f.dim() {
        worst = worst.max(max_angle(&f.level(i), &g.level(i)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::{kak, random_element, random_orthogonal};
    use crate::rng::Domain;
    use core::f64::consts::FRAC_PI_2;

    fn rng(s: u64) -> Stream {
        Stream::new(s, 0, Domain::Probe, 0)
    }

    #[test]
    fn xi_on_diagonal() {
        let g = GroupElement::diag(&[2.0, 1.0, 0.5]).unwrap();
        let z = FullFlag::standard(3);
        let l2 = math::ln(2.0);
        assert!((xi(&g, &z, 1).unwrap() - l2).abs() < 1e-14);
        assert!((xi(&g, &z, 2).unwrap() - l2).abs() < 1e-14);
        assert!(matches!(xi(&g, &z, 3), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn functionals_vanish_on_rotations() {
        let mut r = rng(3);
        for n in 2..=5 {
            for _ in 0..20 {
                let k = GroupElement::new(random_orthogonal(&mut r, n)).unwrap();
                let z = FullFlag::random(&mut r, n);
                for a in 1..n {
                    assert!(xi(&k, &z, a).unwrap().abs() < 1e-12);
                    assert!(sigma_hat(&k, &z, a).unwrap().abs() < 1e-12);
                    assert!(sigma_hat_iwasawa(&k, &z, a).unwrap().abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn xi_cocycle_identity() {
        let mut r = rng(4);
        for n in 2..=5 {
            for _ in 0..200 {
                let g1 = random_element(&mut r, n);
                let g2 = random_element(&mut r, n);
                let z = FullFlag::random(&mut r, n);
                let z2 = z.act(&g2);
                for k in 1..n {
                    let lhs = xi(&g1.mul(&g2), &z, k).unwrap();
                    let rhs = xi(&g1, &z2, k).unwrap() + xi(&g2, &z, k).unwrap();
                    assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
                    let lhs = sigma_hat(&g1.mul(&g2), &z, k).unwrap();
                    let rhs = sigma_hat(&g1, &z2, k).unwrap() + sigma_hat(&g2, &z, k).unwrap();
                    assert!((lhs - rhs).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn xi_below_weight() {
        let mut r = rng(5);
        for n in 2..=5 {
            for _ in 0..200 {
                let g = random_element(&mut r, n);
                let z = FullFlag::random(&mut r, n);
                let a = g.a_log();
                for k in 1..n {
                    let w = liegroup::omega_from_log(&a, k).unwrap();
                    assert!(xi(&g, &z, k).unwrap() <= w + 1e-9);
                }
            }
        }
    }

    #[test]
    fn sigma_hat_routes_agree() {
        let mut r = rng(6);
        let g = GroupElement::diag(&[3.0, 1.0, 1.0 / 3.0]).unwrap();
        let z = FullFlag::standard(3);
        assert!((sigma_hat(&g, &z, 1).unwrap() - math::ln(3.0)).abs() < 1e-14);
        for n in 2..=6 {
            for _ in 0..200 {
                let g = random_element(&mut r, n);
                let z = FullFlag::random(&mut r, n);
                for k in 1..n {
                    let a = sigma_hat(&g, &z, k).unwrap();
                    let b = sigma_hat_iwasawa(&g, &z, k).unwrap();
                    assert!((a - b).abs() < 1e-8, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn factored_xi_matches_direct() {
        let mut r = rng(7);
        for n in 2..=5 {
            for _ in 0..100 {
                let g = random_element(&mut r, n);
                let z = FullFlag::random(&mut r, n);
                let t = kak(&g);
                for k in 1..n {
                    let a = xi(&g, &z, k).unwrap();
                    let b = xi_kak(&t, &z, k).unwrap();
                    assert!((a - b).abs() < 1e-9);
                    let a = sigma_hat(&g, &z, k).unwrap();
                    let b = sigma_hat_kak(&t, &z, k).unwrap();
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn complement_distance_examples() {
        let id = GroupElement::identity(3);
        assert!(dist_to_complement(&FullFlag::standard(3), &id).abs() < 1e-15);
        assert!((dist_to_complement(&FullFlag::reversed(3), &id) - 1.0).abs() < 1e-14);
        assert!((dist_to_complement(&FullFlag::reversed(4), &GroupElement::identity(4)) - 1.0).abs() < 1e-14);
        let w0 = liegroup::longest_weyl(3).as_group_element();
        assert!((dist_to_complement(&FullFlag::standard(3), &w0) - 1.0).abs() < 1e-14);
    }

    fn stacked_rank(a: &Mat, b: &Mat) -> usize {
        let m = Mat::from_fn(a.rows(), a.cols() + b.cols(), |i, j| {
            if j < a.cols() { a[(i, j)] } else { b[(i, j - a.cols())] }
        });
        let s = linalg::svd(&m).s;
        s.iter().filter(|&&v| v > 1e-8).count()
    }

    #[test]
    fn complement_distance_generic_flags() {
        let mut r = rng(8);
        let id = GroupElement::identity(4);
        let std = FullFlag::standard(4);
        for _ in 0..500 {
            let z = FullFlag::random(&mut r, 4);
            // Oracle: z is in the big cell iff every level is transverse to the
            // complementary standard level, i.e. the stacked bases have full rank.
            for k in 1..4 {
                assert_eq!(stacked_rank(&z.level(k), &std.level(4 - k)), 4);
            }
            assert!(dist_to_complement(&z, &id) > 0.0);
        }
    }

    #[test]
    fn complement_distance_is_translation_covariant() {
        let mut r = rng(9);
        for _ in 0..100 {
            let z = FullFlag::random(&mut r, 3);
            let g = random_element(&mut r, 3);
            let q = GroupElement::new(linalg::qr(g.matrix()).q).unwrap_or_else(|_| {
                let mut m = linalg::qr(g.matrix()).q;
                for i in 0..3 {
                    m[(i, 0)] = -m[(i, 0)];
                }
                GroupElement::new(m).unwrap()
            });
            let a = dist_to_complement(&z.act(&q), &q);
            let b = dist_to_complement(&z, &GroupElement::identity(3));
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn flag_distance_examples() {
        let mut r = rng(10);
        let s2 = FullFlag::standard(2);
        assert!(flag_distance(&s2, &s2).unwrap().abs() < 1e-15);
        assert!((flag_distance(&s2, &FullFlag::reversed(2)).unwrap() - FRAC_PI_2).abs() < 1e-14);
        for _ in 0..1000 {
            let a = FullFlag::random(&mut r, 3);
            let b = FullFlag::random(&mut r, 3);
            let c = FullFlag::random(&mut r, 3);
            let ab = flag_distance(&a, &b).unwrap();
            let bc = flag_distance(&b, &c).unwrap();
            let ac = flag_distance(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-9);
            assert!((ab - flag_distance(&b, &a).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_flags() {
        let spec = ParabolicSpec::new(3, alloc::vec![2]).unwrap();
        let p = PartialFlagPoint::from_full(spec.clone(), &FullFlag::standard(3)).unwrap();
        assert!(p.level(2).is_err());
        assert_eq!(p.level(1).unwrap().cols(), 1);
        // Permuting the basis inside the fused block does not move the point.
        let swapped = Mat::from_rows(&[
            alloc::vec![1.0, 0.0, 0.0],
            alloc::vec![0.0, 0.0, 1.0],
            alloc::vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let q = PartialFlagPoint::new(spec, swapped).unwrap();
        assert!(p.distance(&q).unwrap() < 1e-15);
        let id = GroupElement::identity(3);
        assert!(dist_to_complement_partial(&p, &id) < 1e-15);
    }
}
