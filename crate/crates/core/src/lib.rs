//! Appearance-only multi-object tracking with an online, history-aware
//! Fisher discriminant projection.

pub mod assignment;
pub mod bench;
pub mod config;
pub mod eval;
pub mod fld;
pub mod io;
pub mod linalg;
pub mod record;
pub mod synth;
pub mod tracker;
