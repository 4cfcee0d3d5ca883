//! Spectral data on discrete closed manifolds and the reconstruction
//! procedures that run on it.
//!
//! The crate is `no_std` with `alloc`. Everything that touches files, the
//! command line or text formats lives in the `ispec` companion crate.
//!
//! Layout, bottom up:
//! - [`linalg`]: sparse storage, banded LU, dense and filtered eigensolvers.
//! - [`manifold`]: cycles and tori, hypersurfaces, eigenbases, datasets and
//!   subdomain spectra.
//! - [`transmission`]: direct solvers with prescribed jumps across the
//!   hypersurface, used as ground truth.
//! - [`signal`], [`blago`]: time-sampled sources and wave coefficients
//!   computed from spectral data alone.
//! - [`geometry`]: heat-kernel distances on the hypersurface.
//! - [`response`]: layer operators, response operator and
//!   Neumann-to-Dirichlet maps from data.
//! - [`subdomain`]: constrained max-min spectra and their assignment.
//! - [`energy`]: interface source deconvolution and energy flux.
//! - [`green`]: Green records, pole/residue retrieval, dataset reassembly.
#![no_std]
// Once std is anywhere in the build graph its inherent float methods win
// over `Float`, which leaves those imports idle.
#![allow(unused_imports)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod blago;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod green;
pub mod linalg;
pub mod manifold;
pub mod response;
pub mod signal;
pub mod subdomain;
pub mod transmission;

pub use error::{Error, Result};
