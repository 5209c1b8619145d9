//! The user guide, mirrored from `book/` so every code sample in the
//! rendered book compiles and runs under `cargo test --doc`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}

#[doc = include_str!("../../../book/src/multitask.md")]
pub mod multitask {}

#[doc = include_str!("../../../book/src/environment.md")]
pub mod environment {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/bounds.md")]
pub mod bounds {}

#[doc = include_str!("../../../book/src/running.md")]
pub mod running {}
