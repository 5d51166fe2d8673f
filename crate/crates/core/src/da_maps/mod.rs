//! Derived-from-Anosov constructions with analytic Jacobians, and local
//! Franks-type surgeries at fixed points.

mod analysis;
mod constructions;
mod local;
mod model;
pub mod presets;
mod spec;

pub use analysis::{fd_check, fd_error, linear_outside_defect, measured_ph_bounds, min_jacobian_determinant, FdReport};
pub use constructions::{
    contracting_center_kd, embed_center_4d, embed_profile_parameters, fixed_point_index, franks_surgery, general_da,
    mane_mix_2d, IndexReport, SurgeryReport,
};
pub use model::{MapModel, SupportBall, SupportKind, FIXED_TOL};
pub use spec::{BlendSpec, BumpSpec, ConstructionSpec, DomainSpec, MapSpec, MatrixFrame, PlanarProfile, SurgerySpec};

#[cfg(test)]
mod tests;
