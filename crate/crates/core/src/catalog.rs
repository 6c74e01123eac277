//! Reference cocycle systems: positive and negative controls and generic examples.
//!
//! These are the systems behind the scenarios shipped with the command-line tool.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Mat;
use crate::walk::{AtomSpec, CocycleSystem};
use crate::math;

fn single_state() -> Vec<String> {
    vec!["x".to_string()]
}

fn rot2(t: f64) -> Mat {
    let (c, s) = (math::cos(t), math::sin(t));
    Mat::from_rows(&[vec![c, -s], vec![s, c]]).expect("2x2")
}

/// Rotation about the unit axis `axis` by `t` (Rodrigues' formula).
pub fn rotation_about(axis: [f64; 3], t: f64) -> Mat {
    let l = math::sqrt(axis.iter().map(|a| a * a).sum());
    let [x, y, z] = [axis[0] / l, axis[1] / l, axis[2] / l];
    let (c, s) = (math::cos(t), math::sin(t));
    let k = 1.0 - c;
    Mat::from_rows(&[
        vec![c + x * x * k, x * y * k - z * s, x * z * k + y * s],
        vec![y * x * k + z * s, c + y * y * k, y * z * k - x * s],
        vec![z * x * k - y * s, z * y * k + x * s, c + z * z * k],
    ])
    .expect("3x3")
}

/// `μ = Σ p/2 (δ_g + δ_{g⁻¹})` over a single state.
fn symmetric_single_state(n: usize, gens: &[Mat]) -> CocycleSystem {
    let p = 0.5 / gens.len() as f64;
    let atoms = gens
        .iter()
        .flat_map(|g| {
            let gi = g.inverse().expect("invertible generator");
            [
                AtomSpec { probability: p, base_map: None, matrices: vec![g.clone()] },
                AtomSpec { probability: p, base_map: None, matrices: vec![gi] },
            ]
        })
        .collect();
    CocycleSystem::new(n, single_state(), atoms, None, false).expect("catalog systems are valid")
}

/// Rotations about the first and third axes by 1 and √2 radians, with inverses.
pub fn rotation() -> CocycleSystem {
    symmetric_single_state(3, &[rotation_about([1.0, 0.0, 0.0], 1.0), rotation_about([0.0, 0.0, 1.0], math::sqrt(2.0))])
}

/// `½δ_g + ½δ_{g⁻¹}` with `g = diag(2, 1, ½)`: zero exponents, products unbounded.
pub fn diag_negative_control() -> CocycleSystem {
    symmetric_single_state(3, &[Mat::diag(&[2.0, 1.0, 0.5])])
}

/// `h = diag(2, ½)` and the rotation by 1 radian, with inverses, each of mass ¼.
pub fn sl2_mixed() -> CocycleSystem {
    symmetric_single_state(2, &[Mat::diag(&[2.0, 0.5]), rot2(1.0)])
}

/// Real `4 × 4` form of a complex `2 × 2` matrix given as `(re, im)` parts, in the
/// coordinates `(Re z₁, Im z₁, Re z₂, Im z₂)`.
pub fn realify(re: &Mat, im: &Mat) -> Mat {
    let n = re.rows();
    Mat::from_fn(2 * n, 2 * n, |i, j| {
        let (a, b) = (re[(i / 2, j / 2)], im[(i / 2, j / 2)]);
        match (i % 2, j % 2) {
            (0, 0) | (1, 1) => a,
            (0, 1) => -b,
            _ => b,
        }
    })
}

/// Complex structure of `C² ≅ R⁴` in the coordinates of [`realify`].
pub fn complex_structure() -> Mat {
    realify(&Mat::zeros(2, 2), &Mat::identity(2))
}

/// Realified `SL(2, C)` walk: `h = diag(2e^{0.3i}, ½e^{−0.3i})` and
/// `k = [[cos 1, i sin 1], [i sin 1, cos 1]]`, with inverses.
pub fn sl2c_realified() -> CocycleSystem {
    let (c3, s3) = (math::cos(0.3), math::sin(0.3));
    let h = realify(&Mat::diag(&[2.0 * c3, 0.5 * c3]), &Mat::diag(&[2.0 * s3, -0.5 * s3]));
    let (c, s) = (math::cos(1.0), math::sin(1.0));
    let k = realify(&Mat::diag(&[c, c]), &Mat::from_rows(&[vec![0.0, s], vec![s, 0.0]]).expect("2x2"));
    symmetric_single_state(4, &[h, k])
}

/// Two-state `SL(3, R)` cocycle. The first atom swaps the states and acts by
/// `g` at the first state and `gᵀ` at the second, `g ∝ [[2,1,0],[0,1,1],[1,0,1]]`;
/// the second is a rotation by 1 radian about `(1,1,1)` fixing both states. Inverses
/// complete the symmetric measure.
pub fn sl3_generic() -> CocycleSystem {
    let s = math::powf(3.0, -1.0 / 3.0);
    let g = Mat::from_rows(&[vec![2.0, 1.0, 0.0], vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0]]).expect("3x3").scale(s);
    let gt = g.transpose();
    let r = rotation_about([1.0, 1.0, 1.0], 1.0);
    let inv = |m: &Mat| m.inverse().expect("invertible");
    let atoms = vec![
        AtomSpec { probability: 0.25, base_map: Some(vec![1, 0]), matrices: vec![g.clone(), gt.clone()] },
        // A(b, y) = A(a, b(y))⁻¹ with b = a⁻¹ = swap.
        AtomSpec { probability: 0.25, base_map: Some(vec![1, 0]), matrices: vec![inv(&gt), inv(&g)] },
        AtomSpec { probability: 0.25, base_map: None, matrices: vec![r.clone()] },
        AtomSpec { probability: 0.25, base_map: None, matrices: vec![inv(&r)] },
    ];
    CocycleSystem::new(3, vec!["a".to_string(), "b".to_string()], atoms, None, false).expect("catalog systems are valid")
}

/// `[[2, 1], [0, ½]]` and its inverse: the line `R e₁` is invariant.
pub fn reducible_line_control() -> CocycleSystem {
    symmetric_single_state(2, &[Mat::from_rows(&[vec![2.0, 1.0], vec![0.0, 0.5]]).expect("2x2")])
}

/// Single fixed matrix (an asymmetric, deterministic cocycle).
pub fn deterministic(g: Mat) -> CocycleSystem {
    let n = g.rows();
    let atoms = vec![AtomSpec { probability: 1.0, base_map: None, matrices: vec![g] }];
    CocycleSystem::new(n, single_state(), atoms, None, true).expect("valid matrix")
}

/// Names of the reference systems, in catalog order.
pub const NAMES: [&str; 6] =
    ["rotation", "diag-negative-control", "sl2-mixed", "sl2c-realified", "sl3-generic", "reducible-line-control"];

/// Reference system by name.
pub fn by_name(name: &str) -> Option<CocycleSystem> {
    Some(match name {
        "rotation" => rotation(),
        "diag-negative-control" => diag_negative_control(),
        "sl2-mixed" => sl2_mixed(),
        "sl2c-realified" => sl2c_realified(),
        "sl3-generic" => sl3_generic(),
        "reducible-line-control" => reducible_line_control(),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_reference_systems_build() {
        for name in NAMES {
            let s = by_name(name).unwrap();
            assert!(s.is_symmetric(), "{name}");
        }
    }

    #[test]
    fn realification_is_a_homomorphism() {
        let a = (Mat::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]]).unwrap(), Mat::from_rows(&[vec![0.3, 0.0], vec![1.0, 2.0]]).unwrap());
        let b = (Mat::from_rows(&[vec![0.0, 1.0], vec![1.5, 1.0]]).unwrap(), Mat::from_rows(&[vec![-1.0, 0.2], vec![0.0, 0.7]]).unwrap());
        let re = a.0.matmul(&b.0).sub(&a.1.matmul(&b.1));
        let im = a.0.matmul(&b.1).add(&a.1.matmul(&b.0));
        let lhs = realify(&a.0, &a.1).matmul(&realify(&b.0, &b.1));
        assert!(lhs.max_abs_diff(&realify(&re, &im)) < 1e-14);
        let j = complex_structure();
        assert!(j.matmul(&j).add(&Mat::identity(4)).max_abs() == 0.0);
        let m = realify(&a.0, &a.1);
        assert!(m.matmul(&j).max_abs_diff(&j.matmul(&m)) < 1e-15);
    }
}
