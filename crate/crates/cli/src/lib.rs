//! Command line and local HTTP service for the haptic display.

pub mod cli;
pub mod error;
pub mod rig;
pub mod service;
