//! Shared linear-algebra aliases. The trait re-exports make scalar math
//! (`sqrt`, `sin`, `atan2`, ...) resolve without `std`.

pub use nalgebra::{ComplexField, RealField};

pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Vec2 = nalgebra::Vector2<f64>;
pub type DMat = nalgebra::DMatrix<f64>;
pub type DVec = nalgebra::DVector<f64>;
