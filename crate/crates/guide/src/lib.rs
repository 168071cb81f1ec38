//! Compiles the book's code blocks as doctests, so `cargo test` keeps the
//! guide honest. One module per chapter makes a failure easy to place.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}

#[doc = include_str!("../../../book/src/posterior.md")]
pub mod posterior {}

#[doc = include_str!("../../../book/src/metric.md")]
pub mod metric {}

#[doc = include_str!("../../../book/src/sampling.md")]
pub mod sampling {}

#[doc = include_str!("../../../book/src/evidence.md")]
pub mod evidence {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
