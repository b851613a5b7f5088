// Operator names follow the usual notation (T, S, K, …).
#![allow(non_snake_case)]

pub mod cauchy;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod exact;
pub mod field;
pub mod harness;
pub mod henkin;
pub mod holder;
pub mod quadrature;

pub use error::{DbarError, Result};

pub type C64 = num_complex::Complex64;
