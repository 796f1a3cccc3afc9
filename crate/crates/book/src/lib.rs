//! Runs the guide's code listings as doc-tests.
//!
//! mdbook cannot test listings that depend on other crates, so each chapter
//! is pulled in as the docs of an empty module and `cargo test --doc` checks
//! it. One module per chapter keeps failures traceable to their file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/episodes.md")]
pub mod episodes {}
#[doc = include_str!("../../../book/src/forward-views.md")]
pub mod forward_views {}
#[doc = include_str!("../../../book/src/backward-views.md")]
pub mod backward_views {}
#[doc = include_str!("../../../book/src/averaging.md")]
pub mod averaging {}
#[doc = include_str!("../../../book/src/general.md")]
pub mod general {}
#[doc = include_str!("../../../book/src/equivalence.md")]
pub mod equivalence {}
#[doc = include_str!("../../../book/src/fixed-points.md")]
pub mod fixed_points {}
#[doc = include_str!("../../../book/src/cost.md")]
pub mod cost {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
