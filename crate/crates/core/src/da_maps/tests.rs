use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::presets::*;
use super::*;
use crate::error::Error;
use crate::linalg::op_norm_max;
use crate::torus_linear::{Bundle, LiftPoint, ToralAutomorphism, TorusPoint};

const GOLDEN_LO: f64 = 0.381_966_011_250_105_1; // (3 − √5)/2
const GOLDEN_HI: f64 = 2.618_033_988_749_895; // (3 + √5)/2

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(7)
}

fn max_dev(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

fn ball_points(rng: &mut ChaCha8Rng, n: usize, center: &[f64], radius: f64, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..n).map(|i| center[i] + radius * (2.0 * rng.random::<f64>() - 1.0)).collect())
        .collect()
}

fn mane() -> MapModel<f64> {
    mane_mix_2d(GOLDEN_LO, GOLDEN_HI, 0.04, 0.04, 0.16, 0.2).unwrap()
}

#[test]
fn planar_mix_is_tangent_to_identity_at_origin() {
    let g = mane();
    let j = g.jacobian(&LiftPoint::new(vec![0.0, 0.0]));
    assert!(max_dev(&j, &DMatrix::identity(2, 2)) < 1e-12);
    let jm = g.jacobian_minus_identity(&LiftPoint::new(vec![0.0, 0.0]));
    assert_eq!(jm.amax(), 0.0);
}

#[test]
fn planar_mix_is_linear_outside_r1() {
    let g = mane();
    let mut rng = rng();
    let mut checked = 0;
    for _ in 0..1000 {
        let r: f64 = 0.16 + rng.random::<f64>();
        let t: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let x = vec![r.sqrt() * t.cos(), r.sqrt() * t.sin()];
        let y = g.eval_lift(&LiftPoint::new(x.clone())).coords;
        assert!((y[0] - GOLDEN_LO * x[0]).abs() <= 1e-12);
        assert!((y[1] - GOLDEN_HI * x[1]).abs() <= 1e-12);
        checked += 1;
    }
    assert_eq!(checked, 1000);
}

#[test]
fn planar_mix_jacobian_matches_finite_differences() {
    let g = mane();
    let pts = ball_points(&mut rng(), 2, &[0.0, 0.0], 0.5, 1000);
    let rep = fd_check(&g, &pts, 1e-6);
    assert!(rep.passes(), "{rep:?}");
}

#[test]
fn planar_mix_diagonal_entries_on_the_axis() {
    // for 0 < x² < ρ the contracting entry is below 1 and the expanding one above 1
    let g = mane();
    for k in 1..50 {
        let x = (0.04 * k as f64 / 50.0).sqrt();
        let j = g.jacobian(&LiftPoint::new(vec![x, 0.0]));
        assert!(j[(0, 0)] < 1.0 && j[(1, 1)] > 1.0, "x = {x}: {j}");
    }
}

#[test]
fn planar_mix_rejects_bad_radii_and_rates() {
    assert!(matches!(mane_mix_2d::<f64>(0.5, 2.0, 0.04, 0.04, 0.1, 0.2), Err(Error::BadGeometry(_))));
    assert!(matches!(mane_mix_2d::<f64>(0.5, 2.0, 0.04, 0.04, 0.16, 0.15), Err(Error::BadGeometry(_))));
    assert!(matches!(mane_mix_2d::<f64>(1.2, 2.0, 0.04, 0.04, 0.16, 0.2), Err(Error::NotHyperbolicLinearPart(_))));
    assert!(matches!(mane_mix_2d::<f64>(0.5, 0.9, 0.04, 0.04, 0.16, 0.2), Err(Error::NotHyperbolicLinearPart(_))));
}

fn embed() -> MapModel<f64> {
    embed_center_4d(0.05, GOLDEN_LO, GOLDEN_HI, 20.0, 0.2, 0.08).unwrap()
}

#[test]
fn embedded_mix_derivative_at_origin() {
    let f = embed();
    let j = f.jacobian(&LiftPoint::new(vec![0.0; 4]));
    let want = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 0.05, 20.0]));
    assert!(max_dev(&j, &want) < 1e-12, "{j}");
}

#[test]
fn embedded_mix_is_linear_far_out() {
    let f = embed();
    let mut rng = rng();
    for _ in 0..1000 {
        let mut x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = (0.2f64.sqrt() * (1.0 + rng.random::<f64>())) / nrm;
        x.iter_mut().for_each(|v| *v *= s);
        let y = f.eval_lift(&LiftPoint::new(x.clone())).coords;
        let lin = [GOLDEN_LO * x[0], GOLDEN_HI * x[1], 0.05 * x[2], 20.0 * x[3]];
        for i in 0..4 {
            assert!((y[i] - lin[i]).abs() <= 1e-12 * (1.0 + lin[i].abs()));
        }
    }
}

#[test]
fn embedded_mix_restricts_to_the_planar_map() {
    let f = embed();
    let (rho, l, r1) = embed_profile_parameters(0.2);
    let g = mane_mix_2d::<f64>(GOLDEN_LO, GOLDEN_HI, rho, l, r1, 0.2).unwrap();
    let mut rng = rng();
    for _ in 0..100 {
        let p = [0.6 * (rng.random::<f64>() - 0.5), 0.6 * (rng.random::<f64>() - 0.5)];
        let a = f.eval_lift(&LiftPoint::new(vec![p[0], p[1], 0.0, 0.0])).coords;
        let b = g.eval_lift(&LiftPoint::new(p.to_vec())).coords;
        assert!((a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
        assert_eq!((a[2], a[3]), (0.0, 0.0));
    }
}

#[test]
fn embedded_mix_jacobian_matches_finite_differences() {
    let f = embed();
    let pts = ball_points(&mut rng(), 4, &[0.0; 4], 0.4, 1000);
    let rep = fd_check(&f, &pts, 1e-6);
    assert!(rep.passes(), "{rep:?}");
}

fn contracting() -> MapModel<f64> {
    contracting_center_kd(&[0.3, 0.4, 0.5], 0.9, 1.1e12, 0.1).unwrap()
}

#[test]
fn contracting_center_is_identity_at_origin() {
    let g = contracting();
    let j = g.jacobian(&LiftPoint::new(vec![0.0; 3]));
    assert!(max_dev(&j, &DMatrix::identity(3, 3)) < 1e-12);
}

#[test]
fn contracting_center_contracts_in_max_norm() {
    let g = contracting();
    let mut rng = rng();
    let mut worst = 0.0f64;
    for s in 0..10_000 {
        // half the samples in the blend/plateau, half log-spread over the decay region
        let r = if s % 2 == 0 { 0.1 * rng.random::<f64>() } else { (0.1f64.ln() + rng.random::<f64>() * (2.2e12f64 / 0.1).ln()).exp() };
        let mut x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v *= r.sqrt() / nrm);
        let j = g.jacobian(&LiftPoint::new(x));
        worst = worst.max(op_norm_max(&j));
    }
    assert!(worst < 1.0, "worst max-norm {worst}");
}

#[test]
fn contracting_center_shrinks_spheres() {
    let g = contracting();
    let mut rng = rng();
    for k in 1..=1000 {
        let r = 0.1 * k as f64 / 1000.0;
        let mut x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v *= r.sqrt() / nrm);
        let y = g.eval_lift(&LiftPoint::new(x.clone())).coords;
        let alpha = y.iter().map(|v| v * v).sum::<f64>().sqrt() / r.sqrt();
        // the image of the sphere is again a sphere
        for i in 0..3 {
            assert!((y[i] - alpha * x[i]).abs() <= 1e-14);
        }
        assert!(alpha <= 1.0 - r + 1e-15, "r = {r}: α = {alpha}");
    }
}

#[test]
fn contracting_center_is_radial_inside_and_linear_outside() {
    let g = contracting();
    let y = g.eval_lift(&LiftPoint::new(vec![0.1, 0.0, 0.0])).coords;
    assert!((y[0] - 0.1 * (1.0 - 0.01)).abs() < 1e-15);
    let x = vec![1.1e6, 1.0, 2.0];
    let y = g.eval_lift(&LiftPoint::new(x.clone())).coords;
    assert_eq!(y, vec![0.3 * x[0], 0.4 * x[1], 0.5 * x[2]]);
}

#[test]
fn contracting_center_jacobian_matches_finite_differences() {
    let g = contracting();
    let pts = ball_points(&mut rng(), 3, &[0.0; 3], 0.4, 1000);
    let rep = fd_check(&g, &pts, 1e-6);
    assert!(rep.passes(), "{rep:?}");
}

#[test]
fn contracting_center_needs_a_feasible_plateau() {
    let e = contracting_center_kd::<f64>(&[0.3, 0.4, 0.5], 0.9, 1.0, 0.1).unwrap_err();
    assert!(matches!(e, Error::InfeasiblePlateau { .. }), "{e:?}");
    let e = contracting_center_kd::<f64>(&[0.3, 0.4, 0.5], 0.45, 1.0, 0.1).unwrap_err();
    assert!(matches!(e, Error::BadGeometry(_)));
}

fn t4_linear() -> ToralAutomorphism<f64> {
    ToralAutomorphism::new(&int_matrix(&t4_matrix()), (T4_WEAK_BAND[0], T4_WEAK_BAND[1])).unwrap()
}

#[test]
fn no_constructions_gives_the_linear_map() {
    let a = t4_linear();
    let f = general_da(&a, vec![]).unwrap();
    assert!(f.is_linear());
    let mut rng = rng();
    for _ in 0..100 {
        let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 3.0 - 1.0).collect();
        assert_eq!(f.jacobian(&LiftPoint::new(x)), *a.real());
    }
}

#[test]
fn flattening_both_weak_factors_gives_identity_center() {
    let a = t4_linear();
    let c = ConstructionSpec::Flatten {
        label: None,
        point: vec![0.0; 4],
        factors: vec![Bundle::Ws, Bundle::Wu],
        lambda: None,
        eps: 0.01,
        delta: 1e-4,
        blend: BlendSpec::default(),
        strong_cutoff: Some(0.005),
    };
    let f = general_da(&a, vec![c]).unwrap();
    let je = f.jacobian_eigen(&LiftPoint::new(vec![0.0; 4]));
    let center = je.view((1, 1), (2, 2)).into_owned();
    assert!(max_dev(&center, &DMatrix::identity(2, 2)) < 1e-12, "{je}");
    let pts = ball_points(&mut rng(), 4, &[0.0; 4], 0.15, 1000);
    let rep = fd_check(&f, &pts, 1e-6);
    assert!(rep.passes(), "{rep:?}");
}

#[test]
fn three_constructions_leave_the_map_linear_elsewhere() {
    let f = MapModel::<f64>::from_spec(&t4_pre_surgery_spec()).unwrap();
    let mut rng = rng();
    let pts: Vec<Vec<f64>> = (0..4000).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
    let (outside, worst) = linear_outside_defect(&f, &pts);
    assert!(outside >= 1000, "{outside}");
    assert!(worst <= 1e-12, "{worst}");
    for p in &T4_POINTS[..3] {
        let je = f.jacobian_eigen(&LiftPoint::new(p.to_vec()));
        assert!(max_dev(&je.view((1, 1), (2, 2)).into_owned(), &DMatrix::identity(2, 2)) < 1e-12);
    }
}

#[test]
fn overlapping_constructions_are_rejected() {
    let a = t4_linear();
    let big = |p: Vec<f64>| planar_mix_at("x", p, 0.1, Some(0.04));
    let e = general_da(&a, vec![big(vec![0.0; 4]), big(T4_POINTS[1].to_vec())]).unwrap_err();
    assert!(matches!(e, Error::OverlappingSupports { .. }), "{e:?}");
}

#[test]
fn planar_mix_needs_a_two_dimensional_center() {
    // companion matrix of t³ − t − 1: complex pair inside the band, one real expanding eigenvalue
    let mut s = MapSpec::linear_torus(vec![vec![0, 0, 1], vec![1, 0, 1], vec![0, 1, 0]], [0.5, 2.0]);
    s.constructions.push(planar_mix_at("p", vec![0.0; 3], 0.01, None));
    assert!(matches!(MapModel::<f64>::from_spec(&s), Err(Error::FrameMismatch(_))));
}

#[test]
fn constructions_must_sit_at_fixed_points() {
    let mut s = mane_torus_spec(0.05);
    if let ConstructionSpec::PlanarMix { point, .. } = &mut s.constructions[0] {
        *point = vec![0.3, 0.1];
    }
    assert!(matches!(MapModel::<f64>::from_spec(&s), Err(Error::NotAFixedPoint { .. })));
}

#[test]
fn torus_map_jacobian_matches_finite_differences() {
    let f = MapModel::<f64>::from_spec(&mane_torus_spec(0.2)).unwrap();
    let pts = ball_points(&mut rng(), 2, &[0.0, 0.0], 0.5, 1000);
    let rep = fd_check(&f, &pts, 1e-6);
    assert!(rep.passes(), "{rep:?}");
}

fn disk_grid(center: &[f64], radius: f64, m: usize) -> Vec<Vec<f64>> {
    let mut pts = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let u = -1.0 + 2.0 * (i as f64 + 0.5) / m as f64;
            let v = -1.0 + 2.0 * (j as f64 + 0.5) / m as f64;
            pts.push(vec![center[0] + radius * u, center[1] + radius * v]);
        }
    }
    pts
}

#[test]
fn trapezoid_mixing_folds_on_the_cat_torus() {
    let mut s = mane_torus_spec(0.2);
    if let ConstructionSpec::PlanarMix { profile, .. } = &mut s.constructions[0] {
        *profile = PlanarProfile::Trapezoid { rho: 0.04, l: 0.04, r1: 0.16 };
    }
    let f = MapModel::<f64>::from_spec(&s).unwrap();
    let (det, _) = min_jacobian_determinant(&f, &disk_grid(&[0.0, 0.0], 0.45, 120));
    assert!(det < 0.0, "min det {det}");
}

#[test]
fn smooth_mixing_is_a_local_diffeomorphism() {
    for eps in [0.2, 0.1, 0.05] {
        let f = MapModel::<f64>::from_spec(&mane_torus_spec(eps)).unwrap();
        let (det, x) = min_jacobian_determinant(&f, &disk_grid(&[0.0, 0.0], 0.45, 120));
        assert!(det > 0.05, "ε = {eps}: min det {det} at {x:?}");
    }
    let mut s = mane_torus_spec(0.2);
    if let ConstructionSpec::PlanarMix { profile, .. } = &mut s.constructions[0] {
        *profile = PlanarProfile::Smooth { contracting_slope: Some(0.1) };
    }
    assert!(matches!(MapModel::<f64>::from_spec(&s), Err(Error::BadGeometry(_))));
}

fn t4_post() -> MapModel<f64> {
    MapModel::from_spec(&t4_post_surgery_spec().unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lift_is_equivariant(x in prop::array::uniform4(-1.0f64..2.0), m in prop::array::uniform4(-3i64..=3)) {
        let f = t4_post();
        let a = f.linear_matrix();
        let xm: Vec<f64> = x.iter().zip(&m).map(|(&v, &k)| v + k as f64).collect();
        let fx = f.eval_lift(&LiftPoint::new(x.to_vec())).coords;
        let fxm = f.eval_lift(&LiftPoint::new(xm)).coords;
        for i in 0..4 {
            let am: f64 = (0..4).map(|j| a[(i, j)] * m[j] as f64).sum();
            prop_assert!((fxm[i] - fx[i] - am).abs() <= 1e-12 * (1.0 + am.abs()));
        }
    }

    #[test]
    fn inverse_round_trips(x in prop::array::uniform2(-0.6f64..0.6)) {
        let f = MapModel::<f64>::from_spec(&mane_torus_spec(0.2)).unwrap();
        let y = f.eval_lift(&LiftPoint::new(x.to_vec()));
        let back = f.inverse_lift(&y).unwrap();
        for i in 0..2 {
            prop_assert!((back.coords[i] - x[i]).abs() <= 1e-10);
        }
    }
}

#[test]
fn surgeries_set_the_indices() {
    let f = t4_post();
    let idx = |p: &[f64; 4]| fixed_point_index(&f, &TorusPoint::new(p.to_vec())).unwrap();
    let r0 = idx(&T4_POINTS[0]);
    let r1 = idx(&T4_POINTS[1]);
    let r2 = idx(&T4_POINTS[2]);
    let r3 = idx(&T4_POINTS[3]);
    assert_eq!((r0.index, r1.index, r3.index), (3, 1, 2));
    assert!(!r0.near_neutral && !r1.near_neutral && !r3.near_neutral);
    assert!(r2.complex && r2.complex_center, "{r2:?}");
    assert!(!r0.complex && !r3.complex);
    // the rotation block shows up exactly
    let c = &r2.eigenvalues[1];
    assert!((c[0] - (1.0 - T4_ETA / 2.0)).abs() < 1e-12 && (c[1].abs() - T4_ETA / 2.0).abs() < 1e-12);
}

#[test]
fn pre_surgery_fixed_points_are_neutral() {
    let f = MapModel::<f64>::from_spec(&t4_pre_surgery_spec()).unwrap();
    let r = fixed_point_index(&f, &TorusPoint::origin(4)).unwrap();
    assert!(r.near_neutral && r.warning.is_some());
    assert_eq!(r.moduli.iter().filter(|m| (*m - 1.0).abs() < 1e-12).count(), 2);
}

#[test]
fn index_of_the_cat_map() {
    let f = MapModel::<f64>::from_spec(&MapSpec::linear_torus(cat_matrix(), CAT_WEAK_BAND)).unwrap();
    let r = fixed_point_index(&f, &TorusPoint::origin(2)).unwrap();
    assert_eq!(r.index, 1);
    assert!((r.moduli[0] - GOLDEN_LO).abs() < 1e-14);
    let e = fixed_point_index(&f, &TorusPoint::new(vec![0.3, 0.1])).unwrap_err();
    assert!(matches!(e, Error::NotAFixedPoint { .. }));
}

#[test]
fn surgery_reports_and_locality() {
    let base = MapModel::<f64>::from_spec(&t4_pre_surgery_spec()).unwrap();
    let mut cur = base.clone();
    for s in t4_surgeries(base.linear(), T4_ETA, T4_SURGERY_RADIUS) {
        let (next, rep) = franks_surgery(&cur, s).unwrap();
        assert!(rep.declared_eta <= T4_ETA + 1e-6 && rep.declared_eta >= T4_ETA / 2.0, "{rep:?}");
        assert!(rep.c1_deviation <= 1.1 * rep.declared_eta, "{rep:?}");
        assert!(rep.c0_deviation <= T4_ETA * T4_SURGERY_RADIUS * 1.1, "{rep:?}");
        cur = next;
    }
    // equal to the base outside the surgery balls
    let mut rng = rng();
    let mut out = 0;
    for _ in 0..2000 {
        let k = rng.random_range(0..3);
        let x: Vec<f64> = (0..4).map(|i| T4_POINTS[k][i] + 0.03 * (2.0 * rng.random::<f64>() - 1.0)).collect();
        if cur.supports().iter().filter(|s| s.kind == SupportKind::Surgery).any(|s| {
            crate::torus_linear::torus_dist2(&x, &s.center).sqrt() < s.radius
        }) {
            continue;
        }
        out += 1;
        let a = cur.eval_lift(&LiftPoint::new(x.clone())).coords;
        let b = base.eval_lift(&LiftPoint::new(x)).coords;
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() <= 1e-12);
        }
    }
    assert!(out >= 1000);
}

#[test]
fn noop_surgery_on_linear_base() {
    let base = MapModel::<f64>::from_spec(&MapSpec::linear_torus(t4_matrix(), T4_WEAK_BAND)).unwrap();
    let a = base.linear_matrix().clone();
    let s = SurgerySpec {
        label: None,
        point: T4_POINTS[3].to_vec(),
        matrix: (0..4).map(|i| (0..4).map(|j| a[(i, j)]).collect()).collect(),
        frame: MatrixFrame::Standard,
        radius: 0.01,
        eta: None,
        blend: crate::profiles::CutoffKind::Logarithmic,
        inner_ratio: 1e-6,
    };
    let (_, rep) = franks_surgery(&base, s).unwrap();
    assert!(rep.c1_deviation <= 1e-9 && rep.c0_deviation <= 1e-12, "{rep:?}");
}

#[test]
fn oversized_surgery_is_rejected() {
    let base = MapModel::<f64>::from_spec(&MapSpec::linear_torus(t4_matrix(), T4_WEAK_BAND)).unwrap();
    let mut s = t4_surgeries(base.linear(), 0.3, 0.01).remove(1);
    s.point = T4_POINTS[3].to_vec();
    s.eta = Some(0.01);
    assert!(matches!(franks_surgery(&base, s), Err(Error::SurgeryTooLarge { .. })));
    let mut s = t4_surgeries(base.linear(), 0.3, 0.01).remove(1);
    s.point = vec![0.1, 0.2, 0.3, 0.4];
    assert!(matches!(franks_surgery(&base, s), Err(Error::NotAFixedPoint { .. })));
}

#[test]
fn measured_bounds_bracket_the_identity_center() {
    let f = MapModel::<f64>::from_spec(&t4_pre_surgery_spec()).unwrap();
    let b = measured_ph_bounds(&f, 24).unwrap();
    assert!(b.is_valid(), "{b:?}");
    assert!(b.lambda_c_minus <= GOLDEN_LO + 1e-12 && b.lambda_c_plus >= GOLDEN_HI - 1e-12);
    assert!(b.lambda_s < 0.03 && b.lambda_u > 33.0);
}

#[test]
fn spec_round_trips_through_json() {
    let s = t4_post_surgery_spec().unwrap();
    let text = serde_json::to_string(&s).unwrap();
    let back: MapSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, s);
    let f = MapModel::<f64>::from_spec(&back).unwrap();
    let g = t4_post();
    let x = LiftPoint::new(vec![0.001, -0.002, 0.0031, 0.499]);
    assert_eq!(f.eval_lift(&x), g.eval_lift(&x));
}

#[test]
fn works_in_single_precision() {
    let g = mane_mix_2d::<f32>(GOLDEN_LO, GOLDEN_HI, 0.04, 0.04, 0.16, 0.2).unwrap();
    let j = g.jacobian(&LiftPoint::new(vec![0.0f32, 0.0]));
    assert!((j[(0, 0)] - 1.0).abs() < 1e-6 && (j[(1, 1)] - 1.0).abs() < 1e-6);
}
