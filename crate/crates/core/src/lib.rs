//! Symmetric sign-changing solutions of the critical problem
//! `Delta(|Delta u|^{q'-2} Delta u) = |u|^{p-2} u` and the equivalent
//! Lane-Emden system `-Delta u = |v|^{q-2} v`, `-Delta v = |u|^{p-2} u`.
//!
//! Exponents live on the critical hyperbola `1/p + 1/q = (N-2)/N`. The
//! solver minimizes the energy over phi-equivariant functions on reduced
//! (bi-radial or radial) grids, with Nehari projection after every step.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discretize;
pub mod error;
pub mod exponents;
pub mod functional;
pub mod inversion;
pub mod kelvin;
pub mod par;
pub mod solver;
pub mod symmetry;

pub use error::{Error, Result};
pub use exponents::Exponents;
