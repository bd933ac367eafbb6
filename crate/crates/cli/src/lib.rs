//! Experiment harness for `gibbs-control-core`: configuration, parallel
//! batch evaluation, verification checks, run directories and SVG plots.

pub mod config;
pub mod parallel;
pub mod plot;
pub mod run;
pub mod verify;
