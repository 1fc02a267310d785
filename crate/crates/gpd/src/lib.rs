//! A workbench for measured groupoids with length functions at desk scale:
//! exact expansion certificates, Følner sets, the constructive exhaustion
//! by domains of expansion, normalized local Markov kernels with
//! Cheeger/spectral reports, weighted operators with dynamical
//! propagation and quasi-locality checks, finite-propagation approximants
//! to averaging and rank-one projections, and a symbolic cylinder engine
//! for graph groupoids.
//!
//! Everything set- or measure-theoretic is exact rational arithmetic;
//! operator norms and spectra are floating point with stated tolerances.
//! See the `examples/` directory for one runnable walkthrough per
//! capability, and the `gpd` binary for the certificate-producing CLI.

pub mod cli;
pub mod constructions;
pub mod exact;
pub mod expansion;
pub mod graphgpd;
pub mod groupoid;
pub mod io;
pub mod markov;
pub mod operators;
pub mod sets;
