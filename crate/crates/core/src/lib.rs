//! Macroscopic superposition indices and multipartite entanglement measures
//! for chains of spin-1/2 particles.
//!
//! Everything is dense and exact: states are complex amplitude vectors over
//! the `2^N` computational basis, site `l` (numbered from 1) maps to bit `l-1`.
//!
//! The crate is organised by measure:
//!
//! * [`qstate`]: pure and mixed states, the built-in state families, partial traces.
//! * [`observables`]: additive observables, correlations, the fluctuation matrix and index `p`.
//! * [`qindex`]: double commutators, trace norms, index `q` and the distance bounds.
//! * [`bipartite`]: Schmidt cuts, entropies, concurrence, localizable entanglement.
//! * [`factorize`]: inseparable blocks, `S1(l)`, the site count `E_B`.
//! * [`backaction`]: single-site projective measurements and what they disturb.
//! * [`validate`]: the property suite behind `macroent validate`.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod backaction;
pub mod bipartite;
mod error;
pub mod factorize;
pub mod linalg;
pub mod observables;
pub mod par;
pub mod qindex;
pub mod qstate;
pub mod scaling;
pub mod validate;

pub use error::{Error, Result};
pub use nalgebra::Complex;

/// Complex amplitude type used throughout.
pub type C64 = Complex<f64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
