//! Numerical laboratory for rotational Stokes waves in partial-hodograph
//! variables: uniform streams, dispersion, branch continuation, Bloch spectra
//! and subharmonic bifurcation analysis.

pub mod bifurcation;
pub mod continuation;
pub mod dispersion;
pub mod hodograph;
pub mod linalg;
pub mod mesh;
pub mod quad;
pub mod spectra;
pub mod stream;
