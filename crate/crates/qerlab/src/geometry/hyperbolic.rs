//! Upper half-plane model of the hyperbolic plane.
//!
//! Geodesics are handled in closed form through the isometry group: a phase
//! point (z, theta) is identified with the element of PSL(2, R) carrying the
//! reference point (i, up) to it, and the geodesic flow is right translation
//! by a diagonal one-parameter subgroup. No ODE integration anywhere.

use num_complex::Complex64;

/// Real Moebius transformation z -> (az + b)/(cz + d), det normalized to +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobius {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mobius {
    pub const IDENTITY: Mobius = Mobius {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        let det = a * d - b * c;
        assert!(det > 0.0, "Mobius matrix must have positive determinant");
        let s = det.sqrt();
        Mobius {
            a: a / s,
            b: b / s,
            c: c / s,
            d: d / s,
        }
    }

    /// x -> x + n.
    pub fn translation(n: f64) -> Self {
        Mobius::new(1.0, n, 0.0, 1.0)
    }

    /// z -> -1/z.
    pub fn inversion() -> Self {
        Mobius::new(0.0, -1.0, 1.0, 0.0)
    }

    /// Rotation by angle `phi` about the reference point i (elliptic element).
    pub fn rotation(phi: f64) -> Self {
        let (s, c) = (phi / 2.0).sin_cos();
        Mobius::new(c, s, -s, c)
    }

    /// Time-t geodesic translation along the vertical axis: z -> e^t z.
    pub fn boost(t: f64) -> Self {
        Mobius::new((t / 2.0).exp(), 0.0, 0.0, (-t / 2.0).exp())
    }

    /// Element mapping i to z0 without rotation (upper triangular).
    pub fn from_base_point(z0: Complex64) -> Self {
        assert!(z0.im > 0.0);
        let sy = z0.im.sqrt();
        Mobius::new(sy, z0.re / sy, 0.0, 1.0 / sy)
    }

    pub fn inverse(&self) -> Self {
        Mobius {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
    }

    pub fn compose(&self, other: &Mobius) -> Mobius {
        // self o other as maps.
        Mobius {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (self.c * z + self.d)
    }

    /// arg of the derivative at z; conformal rotation angle of tangent vectors.
    pub fn deriv_arg(&self, z: Complex64) -> f64 {
        let w = self.c * z + self.d;
        -2.0 * w.arg()
    }

    /// Projective normalization: flip overall sign so the matrix has a
    /// canonical representative (first nonzero of (a, b) positive).
    pub fn canonical_sign(&self) -> Mobius {
        let flip = if self.a.abs() > 1e-12 {
            self.a < 0.0
        } else if self.b.abs() > 1e-12 {
            self.b < 0.0
        } else {
            self.c < 0.0
        };
        if flip {
            Mobius {
                a: -self.a,
                b: -self.b,
                c: -self.c,
                d: -self.d,
            }
        } else {
            *self
        }
    }

    pub fn approx_eq(&self, other: &Mobius, tol: f64) -> bool {
        let p = self.canonical_sign();
        let q = other.canonical_sign();
        (p.a - q.a).abs() < tol
            && (p.b - q.b).abs() < tol
            && (p.c - q.c).abs() < tol
            && (p.d - q.d).abs() < tol
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }
}

/// Hyperbolic distance in the upper half-plane.
pub fn hyp_dist(z1: Complex64, z2: Complex64) -> f64 {
    let dz = z1 - z2;
    let arg = 1.0 + dz.norm_sqr() / (2.0 * z1.im * z2.im);
    arg.max(1.0).acosh()
}

/// Apply a Moebius transformation to a phase point (position, direction
/// angle).  Directions are Euclidean unit vectors in the conformal chart.
pub fn apply_phase(m: &Mobius, z: Complex64, dir: Complex64) -> (Complex64, Complex64) {
    let z2 = m.apply(z);
    let rot = Complex64::from_polar(1.0, m.deriv_arg(z));
    (z2, dir * rot)
}

/// The frame element: the unique g in PSL(2,R) with g(i) = z and carrying the
/// upward direction at i to `dir` at z.
pub fn frame_element(z: Complex64, dir: Complex64) -> Mobius {
    let theta = dir.im.atan2(dir.re);
    Mobius::from_base_point(z).compose(&Mobius::rotation(theta - std::f64::consts::FRAC_PI_2))
}

/// Exact geodesic flow in the upper half-plane for hyperbolic time `t`.
pub fn flow_plane(z: Complex64, dir: Complex64, t: f64) -> (Complex64, Complex64) {
    let g = frame_element(z, dir);
    let zt = Complex64::new(0.0, t.exp());
    apply_phase(&g, zt, Complex64::new(0.0, 1.0))
}

/// Reduce a point of the upper half-plane to the standard modular fundamental
/// domain |Re z| <= 1/2, |z| >= 1.  Returns the reduced point and the group
/// element g with g(z) = z_reduced.
pub fn modular_reduce(z: Complex64) -> (Complex64, Mobius) {
    let mut w = z;
    let mut g = Mobius::IDENTITY;
    for _ in 0..10_000 {
        let n = w.re.round();
        if n != 0.0 {
            let t = Mobius::translation(-n);
            w = t.apply(w);
            g = t.compose(&g);
        }
        if w.norm_sqr() < 1.0 - 1e-15 {
            let s = Mobius::inversion();
            w = s.apply(w);
            g = s.compose(&g);
        } else {
            return (w, g);
        }
    }
    // Points extremely close to the real axis can cycle; the callers never
    // produce them because geodesics of interest stay in a compact part.
    (w, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;

    fn c(x: f64, y: f64) -> C {
        C::new(x, y)
    }

    #[test]
    fn vertical_geodesic_is_exponential() {
        let (z, dir) = flow_plane(c(0.0, 1.0), c(0.0, 1.0), 1.5f64.ln());
        assert!((z - c(0.0, 1.5)).norm() < 1e-12);
        assert!((dir - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn flow_preserves_distance_to_start_along_geodesic() {
        let z0 = c(0.3, 0.8);
        let dir = C::from_polar(1.0, 0.7);
        let (z1, _) = flow_plane(z0, dir, 2.0);
        assert!((hyp_dist(z0, z1) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn modular_generators_relations() {
        let s = Mobius::inversion();
        let t = Mobius::translation(1.0);
        let s2 = s.compose(&s);
        assert!(s2.approx_eq(&Mobius::IDENTITY, 1e-12));
        let st = s.compose(&t);
        let st3 = st.compose(&st).compose(&st);
        assert!(st3.approx_eq(&Mobius::IDENTITY, 1e-12));
    }

    #[test]
    fn modular_reduction_lands_in_fundamental_domain() {
        let z = c(3.7, 0.2);
        let (w, g) = modular_reduce(z);
        assert!(w.re.abs() <= 0.5 + 1e-12);
        assert!(w.norm_sqr() >= 1.0 - 1e-12);
        assert!((g.apply(z) - w).norm() < 1e-9);
    }

    #[test]
    fn flow_group_property_plane() {
        let z0 = c(-0.4, 1.3);
        let dir = C::from_polar(1.0, -1.1);
        let (z1, d1) = flow_plane(z0, dir, 0.9);
        let (z2, d2) = flow_plane(z1, d1, 1.4);
        let (z3, d3) = flow_plane(z0, dir, 2.3);
        assert!((z2 - z3).norm() < 1e-10);
        assert!((d2 - d3).norm() < 1e-10);
    }
}
