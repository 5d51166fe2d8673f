//! Semiconjugacy to the linear part, fibers, and degree-based image tests.

mod degree;
mod fibers;
mod field;
mod probe;

pub use degree::{degree_on_patch, degree_open_image, DegreeReport, Disk, Projector, ProjectorSide};
pub use fibers::{fiber_analysis, FiberComponent, FiberReport, FiberWitness};
pub use field::{
    compute_h, node_coords, node_index, normalize_lift, ConjugacyEval, ConjugacyField, ConjugacySolver, SeriesOptions,
};
pub use probe::{c0_distance, semicontinuity_probe, ProbeOptions, ProbeRow, SemicontinuityReport};
