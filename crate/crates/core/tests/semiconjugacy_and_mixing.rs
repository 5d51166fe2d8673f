//! Semiconjugacy fields on disk and the pipeline on maps with known answers.

use saddlelab::da_maps::presets::{cat_matrix, mane_torus_spec, CAT_WEAK_BAND};
use saddlelab::da_maps::{MapModel, MapSpec};
use saddlelab::mixing::{mixing_experiment, random_ball_pairs, transitivity_pipeline, MixingOptions, PipelineOptions};
use saddlelab::semiconjugacy::{compute_h, fiber_analysis, ConjugacyField, SeriesOptions};

#[test]
fn field_survives_a_save_and_load() {
    let f = MapModel::from_spec(&mane_torus_spec(0.1)).unwrap();
    let field = compute_h(&f, 32, &SeriesOptions::default()).unwrap();
    assert!(field.residual < 1e-8);
    let dir = std::env::temp_dir().join(format!("saddlelab-it-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("h.bin");
    field.save(&path).unwrap();
    let back = ConjugacyField::load(&path).unwrap();
    assert_eq!(back.v, field.v);
    assert_eq!(back.orders, field.orders);
    std::fs::remove_dir_all(&dir).unwrap();
    let fibers = fiber_analysis(&back, 0.2).unwrap();
    assert!(fibers.rho_light);
}

#[test]
fn nonlinear_cat_still_mixes() {
    let f = MapModel::from_spec(&mane_torus_spec(0.1)).unwrap();
    let pairs = random_ball_pairs(2, 8, 0.1, 21).unwrap();
    let rep = mixing_experiment(&f, &pairs, &MixingOptions { seed: 21, ..Default::default() }).unwrap();
    assert!(rep.pass);
    assert!(rep.max_first_hit.unwrap() <= 25);
}

#[test]
fn linear_pipeline_passes_with_identical_reports() {
    let f = MapModel::from_spec(&MapSpec::linear_torus(cat_matrix(), CAT_WEAK_BAND)).unwrap();
    let opts = PipelineOptions::new(0.1, 5, 100, 17);
    let a = transitivity_pipeline(&f, &opts).unwrap();
    assert!(a.pass);
    let b = transitivity_pipeline(&f, &opts).unwrap();
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
}
