//! Numerical laboratory for quantum ergodicity of eigenfunction restrictions.
//!
//! The crate bundles the classical side (geodesic and billiard flows, return
//! maps to a hypersurface cross-section, microlocal symmetry estimation) with
//! the quantum side (Dirichlet spectra on planar billiards, restriction of
//! eigenfunctions to curves, semiclassical quantization on the curve) and the
//! statistics that tie them together.

pub mod config;
pub mod dynamics;
pub mod geometry;
pub mod manifest;
pub mod qer;
pub mod restriction;
pub mod spectral;
pub mod symbols;
pub mod symmetry;

pub use geometry::{Domain, FermiFrame, Hypersurface, PhasePoint};
