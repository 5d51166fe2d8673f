//! Integer hyperbolic matrices, their invariant splittings and torus geometry.

mod fixed_points;
mod geometry;
mod integer;
mod splitting;

pub use fixed_points::{fixed_point_count, fixed_points, fixed_points_exact, RationalPoint, MAX_ENUMERATED};
pub use geometry::{lift_near, project, torus_dist2, torus_distance, wrap01, wrapped_delta, LiftPoint, TorusPoint};
pub use integer::{determinant, unimodular_inverse, IntMatrix};
pub use splitting::{compute_splitting, Bundle, LinearPart, PHBounds, Side, ToralAutomorphism, TOL_HYP};
