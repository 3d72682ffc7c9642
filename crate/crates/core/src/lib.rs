//! Landau–de Gennes Q-tensor theory on 3D boxes: pointwise algebra, bulk
//! potential, discrete energies, minimizers and the vanishing-elasticity
//! experiment harness.

pub mod asymptotics;
pub mod bulk;
pub mod error;
pub mod field;
pub mod linalg;
pub mod qtensor;
pub mod solve;

pub use bulk::MaterialParams;
pub use error::{Error, Result};
pub use qtensor::QTensor;
