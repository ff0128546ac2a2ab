//! Numerical almost-reducibility for one-frequency analytic SL(2,ℝ)
//! cocycles.
//!
//! Functions on strips are truncated Fourier series ([`strip`]). Cocycles,
//! Lyapunov exponents and regime classification live in [`cocycle`];
//! continued fractions in [`arithmetic`]; the function-theoretic solvers
//! (Bezout identities, determinant zeroing, kernel vectors) in [`corona`];
//! and the reduction pipeline for rational frequencies in [`reducer`].

pub mod arithmetic;
pub mod cocycle;
pub mod corona;
pub mod error;
mod fft;
pub mod reducer;
pub mod strip;

pub use error::{Error, Result};
pub use strip::{MatrixFunction, Parity, StripFunction};
