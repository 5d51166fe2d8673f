pub mod cones;
pub mod da_maps;
pub mod error;
pub mod linalg;
pub mod mixing;
pub mod profiles;
pub mod scalar;
pub mod semiconjugacy;
pub mod torus_linear;

pub use error::{Error, Result};
pub use scalar::Scalar;
