//! End-to-end use of the public API: specs round-trip, the 𝕋⁴ example's
//! surgeries and indices, and SH-Saddle on a coarse grid.

use saddlelab::cones::{sh_saddle_certify, ShSaddleOptions};
use saddlelab::da_maps::presets::{t4_post_surgery_spec, T4_POINTS};
use saddlelab::da_maps::{fixed_point_index, MapModel, MapSpec};
use saddlelab::torus_linear::{fixed_point_count, TorusPoint};

#[test]
fn spec_json_round_trip_reproduces_the_map_bit_for_bit() {
    let spec = t4_post_surgery_spec().unwrap();
    let text = serde_json::to_string(&spec).unwrap();
    let back: MapSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, spec);
    let (f, g) = (MapModel::<f64>::from_spec(&spec).unwrap(), MapModel::<f64>::from_spec(&back).unwrap());
    let (mut a, mut b) = (vec![0.0; 4], vec![0.0; 4]);
    for i in 0..200 {
        let x: Vec<f64> = (0..4).map(|j| ((i * 7 + j * 13) % 97) as f64 / 97.0 * 1e-2).collect();
        f.eval_slice(&x, &mut a);
        g.eval_slice(&x, &mut b);
        assert_eq!(a, b);
    }
}

#[test]
fn surgeries_give_the_expected_indices() {
    let f = MapModel::<f64>::from_spec(&t4_post_surgery_spec().unwrap()).unwrap();
    let idx: Vec<_> = T4_POINTS.iter().map(|p| fixed_point_index(&f, &TorusPoint::new(p.to_vec())).unwrap()).collect();
    assert_eq!(idx[0].index, 3);
    assert_eq!(idx[1].index, 1);
    assert!(idx[2].complex_center);
    assert_eq!(idx[3].index, 2);
    let a = f.automorphism().unwrap();
    // |det(A − I)| block by block: |1·0 − 1| · |4·28 − 12·12|
    assert_eq!(fixed_point_count(a.matrix(), 1).unwrap(), 32);
}

#[test]
fn coarse_sh_saddle_certificate_on_the_four_torus() {
    let f = MapModel::<f64>::from_spec(&t4_post_surgery_spec().unwrap()).unwrap();
    let rep = sh_saddle_certify(&f, &ShSaddleOptions::new(3, 1.0, 60), None).unwrap();
    assert_eq!((rep.d1, rep.d2, rep.points), (1, 1, 81));
    assert!(rep.pass);
    assert!(rep.min_rate > 1.0);
}
