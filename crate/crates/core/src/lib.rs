//! Construction and verification of symmetric differential form families
//! attached to complete intersections with moving coefficient structure.

#![allow(clippy::needless_range_loop)]

mod bigser;
pub mod error;
pub mod exact_algebra;
pub mod field;
pub mod finite_geometry;
pub mod identity_verifier;
pub mod pipeline;
pub mod product_coup;
pub mod schedule;
pub mod section_builder;

pub use error::{Error, Result};
pub use field::{Field, FieldElement};
