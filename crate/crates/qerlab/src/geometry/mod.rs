//! Domains, hypersurfaces, Fermi frames, lifts and the reflection involution.

mod domain;
pub mod hyperbolic;
mod hypersurface;

pub use domain::{modular_neighbor_elements, Domain, FuchsianGroup};
pub use hypersurface::{FermiFrame, Hypersurface, DELTA_S_FRAC, TAU_H};

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("arclength {s} out of range [0, {length})")]
    OutOfRange { s: f64, length: f64 },
    #[error("coball coordinate |sigma| = {0} exceeds 1")]
    SigmaOutOfBall(f64),
    #[error("foot point is off the hypersurface: |y_n| = {0:.3e}")]
    OffCurve(f64),
}

/// A point of the unit (co)tangent bundle: base position plus unit direction.
///
/// Directions are Euclidean unit vectors of the conformal chart; in the
/// hyperbolic models the metric is conformal so angles and unit directions
/// agree with their Euclidean counterparts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub pos: Complex64,
    pub dir: Complex64,
}

impl PhasePoint {
    pub fn new(pos: Complex64, dir: Complex64) -> Self {
        let n = dir.norm();
        assert!(n > 0.0, "direction must be nonzero");
        PhasePoint { pos, dir: dir / n }
    }

    pub fn from_angle(pos: Complex64, theta: f64) -> Self {
        PhasePoint {
            pos,
            dir: Complex64::from_polar(1.0, theta),
        }
    }

    /// Time reversal: negate the direction.
    pub fn reverse(&self) -> Self {
        PhasePoint {
            pos: self.pos,
            dir: -self.dir,
        }
    }

    pub fn renormalized(&self) -> Self {
        PhasePoint {
            pos: self.pos,
            dir: self.dir / self.dir.norm(),
        }
    }
}

/// Euclidean inner product of two unit directions.
pub fn dot(a: Complex64, b: Complex64) -> f64 {
    (a.conj() * b).re
}
