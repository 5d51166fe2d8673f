//! Canonical example maps: the cat-map planar mixing on 𝕋² and the 𝕋⁴ example
//! `A = diag([[2,1],[1,1]], [[5,12],[12,29]])` with its three surgeries.

use super::spec::{ConstructionSpec, MapSpec, MatrixFrame, PlanarProfile, SurgerySpec};
use crate::error::Result;
use crate::profiles::CutoffKind;
use crate::scalar::Scalar;
use crate::torus_linear::{IntMatrix, LinearPart};

pub fn cat_matrix() -> Vec<Vec<i64>> {
    vec![vec![2, 1], vec![1, 1]]
}

pub fn t4_matrix() -> Vec<Vec<i64>> {
    vec![vec![2, 1, 0, 0], vec![1, 1, 0, 0], vec![0, 0, 5, 12], vec![0, 0, 12, 29]]
}

/// Weak band containing both cat-map eigenvalues.
pub const CAT_WEAK_BAND: [f64; 2] = [0.01, 100.0];

/// Weak band separating the cat-map eigenvalues (weak) from the squared
/// `[[1,2],[2,5]]` eigenvalues (strong) of the 𝕋⁴ example.
pub const T4_WEAK_BAND: [f64; 2] = [0.1, 10.0];

/// Fixed points `p₀, p₁, p₂` carrying constructions and `p₃` left untouched.
pub const T4_POINTS: [[f64; 4]; 4] = [[0.0; 4], [0.0, 0.0, 0.0, 0.5], [0.0, 0.0, 0.5, 0.0], [0.0, 0.0, 0.5, 0.5]];

pub fn int_matrix(rows: &[Vec<i64>]) -> IntMatrix {
    IntMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
}

/// Planar mixing at `point` with smooth plateau profiles of support ε.
pub fn planar_mix_at(label: &str, point: Vec<f64>, eps: f64, strong_cutoff: Option<f64>) -> ConstructionSpec {
    ConstructionSpec::PlanarMix {
        label: Some(label.into()),
        point,
        eps,
        profile: PlanarProfile::Smooth { contracting_slope: None },
        strong_cutoff,
    }
}

/// Cat map with planar mixing at the origin (ε in squared-norm units).
pub fn mane_torus_spec(eps: f64) -> MapSpec {
    let mut s = MapSpec::linear_torus(cat_matrix(), CAT_WEAK_BAND);
    s.constructions.push(planar_mix_at("p0", vec![0.0, 0.0], eps, None));
    s
}

/// Squared-norm size of each planar mixing in the 𝕋⁴ example.
pub const T4_EPS: f64 = 0.02;

/// 𝕋⁴ example before surgeries: planar mixing at `p₀, p₁, p₂`, so the center
/// derivative is the identity there.
pub fn t4_pre_surgery_spec() -> MapSpec {
    let mut s = MapSpec::linear_torus(t4_matrix(), T4_WEAK_BAND);
    for (j, p) in T4_POINTS[..3].iter().enumerate() {
        s.constructions.push(planar_mix_at(&format!("p{j}"), p.to_vec(), T4_EPS, Some(0.4 * T4_EPS)));
    }
    s
}

/// The surgeries `B₀` (center `1 − η`), `B₁` (center `1 + η`) and `B₂`
/// (center rotation `[[1 − η/2, η/2], [−η/2, 1 − η/2]]`), in eigen-coordinates.
pub fn t4_surgeries<T: Scalar>(lin: &LinearPart<T>, eta: f64, radius: f64) -> Vec<SurgerySpec> {
    let d = lin.block_form();
    let (ss, uu) = (d[(0, 0)].f64(), d[(3, 3)].f64());
    let (a, b) = (1.0 - eta / 2.0, eta / 2.0);
    let mats = [
        vec![[ss, 0.0, 0.0, 0.0], [0.0, 1.0 - eta, 0.0, 0.0], [0.0, 0.0, 1.0 - eta, 0.0], [0.0, 0.0, 0.0, uu]],
        vec![[ss, 0.0, 0.0, 0.0], [0.0, 1.0 + eta, 0.0, 0.0], [0.0, 0.0, 1.0 + eta, 0.0], [0.0, 0.0, 0.0, uu]],
        vec![[ss, 0.0, 0.0, 0.0], [0.0, a, b, 0.0], [0.0, -b, a, 0.0], [0.0, 0.0, 0.0, uu]],
    ];
    mats.iter()
        .enumerate()
        .map(|(j, m)| SurgerySpec {
            label: Some(format!("B{j}")),
            point: T4_POINTS[j].to_vec(),
            matrix: m.iter().map(|r| r.to_vec()).collect(),
            frame: MatrixFrame::Eigen,
            radius,
            eta: None,
            blend: CutoffKind::Logarithmic,
            inner_ratio: (-30.0f64).exp(),
        })
        .collect()
}

/// Default C¹ size and radius of the 𝕋⁴ surgeries.
pub const T4_ETA: f64 = 0.05;
pub const T4_SURGERY_RADIUS: f64 = 1e-4;

/// 𝕋⁴ example after the three surgeries.
pub fn t4_post_surgery_spec() -> Result<MapSpec> {
    let lin = crate::torus_linear::ToralAutomorphism::<f64>::new(
        &int_matrix(&t4_matrix()),
        (T4_WEAK_BAND[0], T4_WEAK_BAND[1]),
    )?;
    let mut s = t4_pre_surgery_spec();
    s.surgeries = t4_surgeries(lin.linear(), T4_ETA, T4_SURGERY_RADIUS);
    Ok(s)
}
