//! Spot-checking mechanisms for peer grading.
//!
//! Students grade an assignment of binary quality; a TA occasionally grades
//! it too, and students whose report matches the TA are rewarded. This crate
//! builds the workload-minimizing spot-check policies that keep truthful
//! grading a dominant strategy, measures how often the TA is consulted,
//! certifies incentive compatibility by exhaustive enumeration and simulates
//! the grading process.

pub mod error;
pub mod incentives;
pub mod lp;
pub mod mechanisms;
pub mod prob_model;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
