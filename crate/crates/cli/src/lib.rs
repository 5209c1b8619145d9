//! Experiment front end: configuration, command orchestration, CSV/SVG
//! emission, and model persistence. The `replearn` binary is a thin
//! wrapper over this crate.

pub mod commands;
pub mod config;
pub mod error;
pub mod model;
pub mod svg;
