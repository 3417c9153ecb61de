//! Uniform-norm low-rank approximation and the synthesis of s-good sensing
//! matrices.
//!
//! A submatrix `A_m` of `A` is certified s-good by any `Y` with
//! `‖I − YᵀA_m‖∞ < 1/(2s)`. Such pairs come from approximating `W = YᵀA` in
//! the uniform norm by few rank-one terms `z_i a_iᵀ`: by random sampling
//! ([`sampler`]), by a derandomized greedy descent on a smoothed max
//! ([`greedy`]), or row by row with re-optimized witnesses ([`synth`]).
//! [`gaussian`] and [`norm`] cover approximation of arbitrary matrices
//! through a factorization `A = PQᵀ`.

pub mod cli;
pub mod error;
pub mod gaussian;
pub mod goodness;
pub mod greedy;
pub mod hadamard;
pub mod io;
pub mod matrix;
pub mod norm;
pub mod potential;
pub mod rng;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};
pub use goodness::{certified_s, opt_certificate, GoodnessCertificate, SparsityLevel};
pub use hadamard::{build_hadamard, hadamard_certificate};
pub use matrix::Matrix;
pub use rng::RandomSource;
pub use synth::{synthesize, SynthConfig, SynthPolicy};
