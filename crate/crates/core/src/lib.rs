#![cfg_attr(not(feature = "std"), no_std)]
extern crate alloc;

pub mod classifiers;
pub mod domain;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod simulator;

pub use error::{Error, Result};
