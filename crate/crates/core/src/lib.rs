#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ams;
pub mod bounds;
pub mod channels;
pub mod combinatorics;
pub mod entropy;
pub mod error;
pub mod estimation;
pub mod models;
pub mod policies;
pub mod reproduce;
pub mod seeding;

pub use error::{Error, ErrorClass, Result};
