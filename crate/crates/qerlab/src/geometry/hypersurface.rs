//! Hypersurfaces (curves) with Fermi frames, lifts, projection and the
//! reflection involution.
//!
//! Frame convention: `normal` is the tangent rotated clockwise by 90 degrees
//! (tangent = i * normal in complex notation).  The `+` side of a lift is the
//! side the normal points into.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::hyperbolic::{apply_phase, hyp_dist, Mobius};
use super::{dot, GeometryError, PhasePoint};

/// On-curve tolerance for "foot on H" decisions, in length units.
pub const TAU_H: f64 = 1e-9;

/// Open segments exclude an arclength margin of this fraction of L per end.
pub const DELTA_S_FRAC: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Hypersurface {
    /// Straight chord of a planar billiard (open, two-sided).
    Segment { p0: [f64; 2], p1: [f64; 2] },
    /// Hyperbolic distance circle about `center` with hyperbolic radius
    /// `radius`; `injectivity_radius` is the user-supplied embeddedness bound.
    GeodesicCircle {
        center: [f64; 2],
        radius: f64,
        injectivity_radius: f64,
    },
    /// Closed horocycle y = height of the modular surface (height > 1 so the
    /// curve is embedded in the cusp).
    ClosedHorocycle { height: f64 },
    /// Closed geodesic: projection of the axis of a hyperbolic element of
    /// SL(2, Z) given by its integer matrix.
    ClosedGeodesic { matrix: [[i64; 2]; 2] },
}

/// Orthonormal frame along the curve at arclength s.
#[derive(Debug, Clone, Copy)]
pub struct FermiFrame {
    pub s: f64,
    pub point: Complex64,
    pub tangent: Complex64,
    pub normal: Complex64,
}

impl Hypersurface {
    pub fn segment(p0: [f64; 2], p1: [f64; 2]) -> Self {
        Hypersurface::Segment { p0, p1 }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        match *self {
            Hypersurface::Segment { p0, p1 } => {
                let len = Complex64::new(p1[0] - p0[0], p1[1] - p0[1]).norm();
                if len <= 0.0 {
                    return Err(GeometryError::InvalidParameter(
                        "segment endpoints coincide".into(),
                    ));
                }
            }
            Hypersurface::GeodesicCircle {
                center,
                radius,
                injectivity_radius,
            } => {
                if center[1] <= 0.0 {
                    return Err(GeometryError::InvalidParameter(
                        "circle center must be in the upper half-plane".into(),
                    ));
                }
                if radius <= 0.0 {
                    return Err(GeometryError::InvalidParameter(
                        "circle radius must be positive".into(),
                    ));
                }
                if radius >= injectivity_radius {
                    return Err(GeometryError::InvalidParameter(format!(
                        "circle radius {radius} must be below the injectivity radius {injectivity_radius}"
                    )));
                }
            }
            Hypersurface::ClosedHorocycle { height } => {
                if height <= 1.0 {
                    return Err(GeometryError::InvalidParameter(
                        "horocycle height must exceed 1 for embeddedness".into(),
                    ));
                }
            }
            Hypersurface::ClosedGeodesic { matrix } => {
                let tr = matrix[0][0] + matrix[1][1];
                let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
                if det != 1 {
                    return Err(GeometryError::InvalidParameter(
                        "closed geodesic matrix must have determinant 1".into(),
                    ));
                }
                if tr.abs() <= 2 {
                    return Err(GeometryError::InvalidParameter(
                        "closed geodesic matrix must be hyperbolic (|trace| > 2)".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn is_closed(&self) -> bool {
        !matches!(self, Hypersurface::Segment { .. })
    }

    pub fn length(&self) -> f64 {
        match *self {
            Hypersurface::Segment { p0, p1 } => {
                Complex64::new(p1[0] - p0[0], p1[1] - p0[1]).norm()
            }
            Hypersurface::GeodesicCircle { radius, .. } => {
                2.0 * std::f64::consts::PI * radius.sinh()
            }
            Hypersurface::ClosedHorocycle { height } => 1.0 / height,
            Hypersurface::ClosedGeodesic { matrix } => {
                let tr = (matrix[0][0] + matrix[1][1]) as f64;
                2.0 * (tr.abs() / 2.0).acosh()
            }
        }
    }

    /// The frame element of the closed-geodesic axis: maps the vertical axis
    /// (0, infinity) onto the axis of the matrix.
    pub fn axis_element(&self) -> Mobius {
        match *self {
            Hypersurface::ClosedGeodesic { matrix } => {
                let (a, b, c, d) = (
                    matrix[0][0] as f64,
                    matrix[0][1] as f64,
                    matrix[1][0] as f64,
                    matrix[1][1] as f64,
                );
                // Fixed points of (az+b)/(cz+d): c z^2 + (d-a) z - b = 0.
                assert!(c != 0.0, "axis through infinity not supported");
                let disc = ((d - a) * (d - a) + 4.0 * b * c).sqrt();
                let r1 = ((a - d) - disc) / (2.0 * c);
                let r2 = ((a - d) + disc) / (2.0 * c);
                let (p, q) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
                Mobius::new(q, p, 1.0, 1.0)
            }
            _ => panic!("axis_element is only defined for closed geodesics"),
        }
    }

    /// Frame at arclength s in [0, L).
    pub fn frame(&self, s: f64) -> Result<FermiFrame, GeometryError> {
        let length = self.length();
        if !(0.0..length).contains(&s) {
            return Err(GeometryError::OutOfRange { s, length });
        }
        Ok(self.frame_unchecked(s))
    }

    /// Frame with s taken modulo the length for closed curves (no range check).
    pub fn frame_unchecked(&self, s: f64) -> FermiFrame {
        match *self {
            Hypersurface::Segment { p0, p1 } => {
                let a = Complex64::new(p0[0], p0[1]);
                let b = Complex64::new(p1[0], p1[1]);
                let tangent = (b - a) / (b - a).norm();
                FermiFrame {
                    s,
                    point: a + tangent * s,
                    tangent,
                    normal: tangent * Complex64::new(0.0, -1.0),
                }
            }
            Hypersurface::GeodesicCircle { center, radius, .. } => {
                let phi = s / radius.sinh();
                let g = Mobius::from_base_point(Complex64::new(center[0], center[1]))
                    .compose(&Mobius::rotation(phi));
                let (point, outward) = apply_phase(
                    &g,
                    Complex64::new(0.0, radius.exp()),
                    Complex64::new(0.0, 1.0),
                );
                FermiFrame {
                    s,
                    point,
                    tangent: outward * Complex64::new(0.0, 1.0),
                    normal: outward,
                }
            }
            Hypersurface::ClosedHorocycle { height } => {
                let x = -0.5 + height * s;
                FermiFrame {
                    s,
                    point: Complex64::new(x, height),
                    tangent: Complex64::new(1.0, 0.0),
                    normal: Complex64::new(0.0, -1.0),
                }
            }
            Hypersurface::ClosedGeodesic { .. } => {
                let g = self.axis_element();
                let (point, tangent) = apply_phase(
                    &g,
                    Complex64::new(0.0, s.exp()),
                    Complex64::new(0.0, 1.0),
                );
                FermiFrame {
                    s,
                    point,
                    tangent,
                    normal: tangent * Complex64::new(0.0, -1.0),
                }
            }
        }
    }

    /// Signed Fermi normal coordinate of a position, positive on the side the
    /// normal points into.  Defined in the canonical chart of the curve.
    pub fn signed_fermi(&self, p: Complex64) -> f64 {
        match *self {
            Hypersurface::Segment { p0, p1 } => {
                let a = Complex64::new(p0[0], p0[1]);
                let b = Complex64::new(p1[0], p1[1]);
                let tangent = (b - a) / (b - a).norm();
                let normal = tangent * Complex64::new(0.0, -1.0);
                dot(p - a, normal)
            }
            Hypersurface::GeodesicCircle { center, radius, .. } => {
                hyp_dist(p, Complex64::new(center[0], center[1])) - radius
            }
            Hypersurface::ClosedHorocycle { height } => {
                // Normal points downward; deeper into the surface is positive.
                -(p.im / height).ln()
            }
            Hypersurface::ClosedGeodesic { .. } => {
                let v = self.axis_element().inverse().apply(p);
                -(v.re / v.im).asinh()
            }
        }
    }

    /// Arclength coordinate of a position assumed on the curve, reduced
    /// modulo the curve's periodic identifications.
    pub fn arclength_of(&self, p: Complex64) -> f64 {
        match *self {
            Hypersurface::Segment { p0, p1 } => {
                let a = Complex64::new(p0[0], p0[1]);
                let b = Complex64::new(p1[0], p1[1]);
                let tangent = (b - a) / (b - a).norm();
                dot(p - a, tangent)
            }
            Hypersurface::GeodesicCircle { center, radius, .. } => {
                let c = Complex64::new(center[0], center[1]);
                let v = Mobius::from_base_point(c).inverse().apply(p);
                let (sh, ch) = (radius.sinh(), radius.cosh());
                let cos_phi = (ch - 1.0 / v.im) / sh;
                let sin_phi = -v.re / (v.im * sh);
                let phi = sin_phi.atan2(cos_phi);
                (phi.rem_euclid(2.0 * std::f64::consts::PI)) * sh
            }
            Hypersurface::ClosedHorocycle { height } => {
                ((p.re + 0.5).rem_euclid(1.0)) / height
            }
            Hypersurface::ClosedGeodesic { .. } => {
                let v = self.axis_element().inverse().apply(p);
                v.norm().ln().rem_euclid(self.length())
            }
        }
    }

    /// Whether an arclength value is inside the usable parameter range
    /// (excludes the endpoint margin of open curves).
    pub fn in_param_range(&self, s: f64) -> bool {
        let length = self.length();
        if self.is_closed() {
            (0.0..length).contains(&s)
        } else {
            let margin = DELTA_S_FRAC * length;
            s >= margin && s <= length - margin
        }
    }

    /// Section coordinates (s, sigma, side) of a phase point with foot on the
    /// curve (within `TAU_H`).
    pub fn section_coords(&self, p: &PhasePoint) -> Result<(f64, f64, i8), GeometryError> {
        let yn = self.signed_fermi(p.pos);
        if yn.abs() > TAU_H {
            return Err(GeometryError::OffCurve(yn.abs()));
        }
        let s = self.arclength_of(p.pos).clamp(0.0, self.length());
        let f = self.frame_unchecked(s);
        let sigma = dot(p.dir, f.tangent);
        let side = if dot(p.dir, f.normal) >= 0.0 { 1 } else { -1 };
        Ok((s, sigma, side))
    }

    /// Unit lift of (s, sigma) to the chosen side of the curve.
    pub fn lift_xi(&self, s: f64, sigma: f64, side: i8) -> Result<PhasePoint, GeometryError> {
        if sigma.abs() > 1.0 {
            return Err(GeometryError::SigmaOutOfBall(sigma.abs()));
        }
        let f = self.frame(s)?;
        let nu = (1.0 - sigma * sigma).max(0.0).sqrt();
        let dir = f.tangent * sigma + f.normal * (side as f64) * nu;
        Ok(PhasePoint::new(f.point, dir))
    }

    /// Tangential projection of a unit covector with foot on the curve.
    pub fn project_pi_h(&self, p: &PhasePoint) -> Result<f64, GeometryError> {
        let (_, sigma, _) = self.section_coords(p)?;
        Ok(sigma)
    }

    /// The reflection involution through T*H: negate the normal component.
    pub fn reflect_r_h(&self, p: &PhasePoint) -> Result<PhasePoint, GeometryError> {
        let yn = self.signed_fermi(p.pos);
        if yn.abs() > TAU_H {
            return Err(GeometryError::OffCurve(yn.abs()));
        }
        let s = self.arclength_of(p.pos);
        let f = self.frame_unchecked(s);
        let dir = p.dir - f.normal * (2.0 * dot(p.dir, f.normal));
        Ok(PhasePoint::new(p.pos, dir))
    }
}
