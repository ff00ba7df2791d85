//! Rotation-averaging back-end for monocular SLAM.
//!
//! The crate decouples camera orientation and position estimation: pairwise
//! relative rotations are estimated from six grid-selected feature
//! correspondences, absolute rotations are solved per keyframe window by an
//! L1-initialized IRLS with spectral edge pruning, and absolute translations
//! are recovered afterwards by an l1 linear system solved with ADMM on the
//! unit sphere. Loop closures re-run the translation stage over interval
//! keyframes with rotations held fixed.
//!
//! Everything here is pure computation over in-memory values; file formats
//! and the command-line surface live in the companion `ravg-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod backend;
pub mod correspond;
pub mod eval;
pub mod geom;
pub(crate) mod la;
pub mod relrot;
pub mod rotavg;
pub mod sim;
pub mod transavg;

pub use geom::{Pose, Rotation};
