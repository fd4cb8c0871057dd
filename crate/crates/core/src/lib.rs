//! Hierarchical corpus encoder: a dual encoder trained against a tree of
//! document clusters, with exact inner-product retrieval on top.

pub(crate) mod binio;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod index;
pub mod losses;
pub mod training;
pub mod vector;

pub use error::{HceError, Result};
