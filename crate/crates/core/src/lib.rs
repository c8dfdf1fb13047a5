//! Kinematics, statics, stimulus rendering and experiment tooling for a
//! fingertip haptic display built from two inverted five-bar linkages.

// Range checks are written `!(x > lo)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod device;
pub mod lab;
pub mod linkage;
pub mod log;
pub mod pattern;
pub mod report;
pub mod servo;
pub mod stats;
