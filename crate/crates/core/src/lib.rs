#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Random perforated domains at the critical scaling, nonlinear q-capacities
//! of balls and annuli, and Monte Carlo studies of the ergodic averages that
//! drive the homogenized strange term.

pub mod capacity;
pub mod classify;
pub mod error;
pub mod field;
pub mod gamma;
pub mod geometry;
pub mod homogenized;
pub mod process;
pub mod quadrature;
pub mod rng;
pub mod slln;
pub mod spatial;

pub use error::{Error, Result};
