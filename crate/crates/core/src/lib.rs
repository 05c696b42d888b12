//! Regularization by denoising (RED) for 2D seismic sections.
//!
//! The crate is organized bottom-up:
//!
//! * [`signal`] holds the grid data model, patch tiling, quality metrics and
//!   the SGRD/CSV file formats.
//! * [`denoiser`] implements the residual CNN (DnCNN) inference engine, a
//!   Gaussian blur baseline and operator-bank selection.
//! * [`train`] trains small DnCNN networks with hand-written backpropagation
//!   and Adam.
//! * [`linops`] provides the measurement operators (dense Gaussian,
//!   randomized DCT, identity).
//! * [`solver`] contains forward-backward splitting, the RED solver with
//!   a spectral non-monotone line search, and an ISTA baseline.
//! * [`synth`] generates linear-event sections.
//! * [`experiments`] runs the Monte Carlo harnesses and writes reports.
//!
//! [`workers`] sizes the thread pools; [`atomic`] writes every output file
//! through a temporary file and a rename.

// `!(x < y)` is used on purpose: it is also true for NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atomic;
pub mod denoiser;
pub mod error;
pub mod experiments;
pub mod linops;
pub mod rng;
pub mod signal;
pub mod solver;
pub mod synth;
pub mod train;
pub mod workers;

mod float_serde;

pub use error::{Error, Result};
pub use signal::SeismicSection;
