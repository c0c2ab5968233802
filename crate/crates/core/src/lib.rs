//! Closed-form dynamics of a driven single-band tight-binding lattice.
//!
//! A particle hops between sites `n ∈ ℤ` with coupling `g_t` under a
//! homogeneous force `f_t`:
//!
//! ```text
//! H = g_t (K + K†) + f_t N,    K|n⟩ = |n−1⟩,    N|n⟩ = n|n⟩
//! ```
//!
//! The propagator factorises into `e^{−iηN} e^{−iχK} e^{−iχ*K†}` with the
//! phase integrals of [`drive`], which gives site-space matrix elements in
//! terms of Bessel functions, closed-form moments ([`observables`]),
//! quasienergy bands and invariants ([`floquet`]) and a matching classical
//! limit ([`classical`]). [`oracle`] integrates the Schrödinger equation
//! directly and is used to cross-check all of the above.
//!
//! Units: ħ = 1, lattice constant = 1.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod par;
pub mod quad;
pub mod special;
pub mod lattice;
pub mod drive;
pub mod propagator;
pub mod observables;
pub mod floquet;
pub mod classical;
pub mod oracle;

pub use error::{Error, Result};
pub use par::Exec;

