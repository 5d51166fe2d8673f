//! Cone fields, orbit certificates, strong leaves and the avoidance search.

mod avoid;
mod certify;
mod cone;
mod growth;
mod leaf;

pub use avoid::{
    avoidance_search, clearance, grid_points, sh_saddle_certify, AvoidanceOptions, AvoidanceResult, Ball, ExactPoint,
    GridPointOutcome, ShSaddleOptions, ShSaddleReport, SideOutcome,
};
pub use certify::{
    backward_orbit, certify_along, certify_backward_cones, certify_forward_cones, forward_orbit, CertifyOptions,
    ConeWitness, Direction, OrbitConeCertificate, WitnessKind, CERT_SLACK,
};
pub use cone::{cone_contains, planar_cone_guards, ConeField, ConeSpec, Membership};
pub use growth::{disk_growth_check, GrowthReport};
pub use leaf::{grow_leaf_with, grow_strong_leaf, LeafOptions, StrongSegment};
