//! Ambient domains: planar billiards and hyperbolic surfaces.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::hyperbolic::{hyp_dist, modular_reduce, Mobius};
use super::GeometryError;

/// Fuchsian group choice for the hyperbolic variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FuchsianGroup {
    /// No quotient: the full hyperbolic plane (infinite area).
    FreePlane,
    /// PSL(2, Z); the modular surface of area pi/3.
    Modular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Stadium { half_length: f64, cap_radius: f64 },
    UnitSquare,
    Hyperbolic { group: FuchsianGroup },
}

impl Domain {
    pub fn stadium(half_length: f64, cap_radius: f64) -> Result<Self, GeometryError> {
        if half_length <= 0.0 || cap_radius <= 0.0 {
            return Err(GeometryError::InvalidParameter(
                "stadium requires half_length > 0 and cap_radius > 0".into(),
            ));
        }
        Ok(Domain::Stadium {
            half_length,
            cap_radius,
        })
    }

    pub fn modular_surface() -> Self {
        Domain::Hyperbolic {
            group: FuchsianGroup::Modular,
        }
    }

    pub fn hyperbolic_plane() -> Self {
        Domain::Hyperbolic {
            group: FuchsianGroup::FreePlane,
        }
    }

    pub fn is_billiard(&self) -> bool {
        matches!(self, Domain::Stadium { .. } | Domain::UnitSquare)
    }

    pub fn is_hyperbolic(&self) -> bool {
        matches!(self, Domain::Hyperbolic { .. })
    }

    /// Riemannian area.  Infinite for the free hyperbolic plane.
    pub fn area(&self) -> f64 {
        match self {
            Domain::Stadium {
                half_length: a,
                cap_radius: r,
            } => 4.0 * a * r + std::f64::consts::PI * r * r,
            Domain::UnitSquare => 1.0,
            Domain::Hyperbolic {
                group: FuchsianGroup::Modular,
            } => std::f64::consts::PI / 3.0,
            Domain::Hyperbolic {
                group: FuchsianGroup::FreePlane,
            } => f64::INFINITY,
        }
    }

    /// Liouville volume of the unit cotangent bundle: 2 pi * area in 2-D.
    pub fn liouville_volume(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.area()
    }

    /// Characteristic length used to scale position errors in phase metrics.
    pub fn diameter_scale(&self) -> f64 {
        match self {
            Domain::Stadium {
                half_length: a,
                cap_radius: r,
            } => 2.0 * (a + r),
            Domain::UnitSquare => std::f64::consts::SQRT_2,
            Domain::Hyperbolic { .. } => 2.0,
        }
    }

    /// Signed distance to the billiard boundary, negative inside.
    ///
    /// Exact for both billiard variants.  Panics for hyperbolic domains,
    /// which have no boundary.
    pub fn signed_distance(&self, p: Complex64) -> f64 {
        match self {
            Domain::Stadium {
                half_length: a,
                cap_radius: r,
            } => {
                let x = p.re.abs();
                if x <= *a {
                    p.im.abs() - r
                } else {
                    (Complex64::new(x - a, p.im)).norm() - r
                }
            }
            Domain::UnitSquare => {
                let dx = (0.5 - (p.re - 0.5).abs()).min(0.5 - (p.im - 0.5).abs());
                -dx
            }
            Domain::Hyperbolic { .. } => panic!("hyperbolic domains have no boundary"),
        }
    }

    pub fn contains(&self, p: Complex64) -> bool {
        match self {
            Domain::Hyperbolic {
                group: FuchsianGroup::FreePlane,
            } => p.im > 0.0,
            Domain::Hyperbolic {
                group: FuchsianGroup::Modular,
            } => p.im > 0.0,
            _ => self.signed_distance(p) < 0.0,
        }
    }

    /// Distance between positions, respecting the model (and quotient).
    pub fn position_distance(&self, p: Complex64, q: Complex64) -> f64 {
        match self {
            Domain::Hyperbolic {
                group: FuchsianGroup::FreePlane,
            } => hyp_dist(p, q),
            Domain::Hyperbolic {
                group: FuchsianGroup::Modular,
            } => {
                let (pr, _) = modular_reduce(p);
                let (qr, _) = modular_reduce(q);
                let mut best = hyp_dist(pr, qr);
                for g in modular_neighbor_elements() {
                    best = best.min(hyp_dist(pr, g.apply(qr)));
                }
                best
            }
            _ => (p - q).norm(),
        }
    }

    pub fn bounding_box(&self) -> (Complex64, Complex64) {
        match self {
            Domain::Stadium {
                half_length: a,
                cap_radius: r,
            } => (Complex64::new(-a - r, -r), Complex64::new(a + r, *r)),
            Domain::UnitSquare => (Complex64::new(0.0, 0.0), Complex64::new(1.0, 1.0)),
            Domain::Hyperbolic { .. } => panic!("hyperbolic domains are not boxed"),
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            Domain::Stadium {
                half_length: a,
                cap_radius: r,
            } => 4.0 * a + 2.0 * std::f64::consts::PI * r,
            Domain::UnitSquare => 4.0,
            Domain::Hyperbolic { .. } => panic!("hyperbolic domains have no boundary"),
        }
    }
}

/// Elements of PSL(2, Z) whose translate of the fundamental domain touches a
/// small neighborhood of the fundamental domain itself.  Used for chart-safe
/// point comparisons and for completing hypersurface lift sets.
pub fn modular_neighbor_elements() -> &'static [Mobius] {
    use std::sync::OnceLock;
    static CELL: OnceLock<Vec<Mobius>> = OnceLock::new();
    CELL.get_or_init(|| {
        // Sample points of the core of the fundamental domain.
        let mut core = Vec::new();
        let ys = [0.9, 1.0, 1.2, 1.6, 2.2, 3.0];
        for &y in &ys {
            for k in -4..=4 {
                let x = 0.5 * k as f64 / 4.0;
                let z = Complex64::new(x, y);
                if z.norm_sqr() >= 1.0 {
                    core.push(z);
                }
            }
        }
        let gens = [
            Mobius::translation(1.0),
            Mobius::translation(-1.0),
            Mobius::inversion(),
        ];
        let mut words: Vec<Mobius> = vec![Mobius::IDENTITY];
        let mut frontier = words.clone();
        for _len in 0..5 {
            let mut next = Vec::new();
            for w in &frontier {
                for g in &gens {
                    let m = g.compose(w).canonical_sign();
                    if !words.iter().any(|u| u.approx_eq(&m, 1e-9)) {
                        words.push(m);
                        next.push(m);
                    }
                }
            }
            frontier = next;
        }
        // Keep non-identity elements that bring some translate of the core
        // close to the core.
        let mut out = Vec::new();
        for m in words.iter().skip(1) {
            let near = core.iter().any(|&z| {
                let w = m.apply(z);
                core.iter().any(|&u| hyp_dist(w, u) < 0.9)
            });
            if near {
                out.push(*m);
            }
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stadium_area_closed_form() {
        let d = Domain::stadium(1.0, 1.0).unwrap();
        assert!((d.area() - (4.0 + std::f64::consts::PI)).abs() < 1e-14);
        assert!((d.liouville_volume() - 2.0 * std::f64::consts::PI * d.area()).abs() < 1e-12);
    }

    #[test]
    fn stadium_signed_distance_samples() {
        let d = Domain::stadium(1.0, 1.0).unwrap();
        assert!(d.signed_distance(Complex64::new(0.0, 0.0)) < 0.0);
        assert!((d.signed_distance(Complex64::new(0.0, 1.0))).abs() < 1e-14);
        assert!((d.signed_distance(Complex64::new(2.0, 0.0))).abs() < 1e-14);
        assert!(d.signed_distance(Complex64::new(2.5, 0.0)) > 0.0);
    }

    #[test]
    fn stadium_area_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let d = Domain::stadium(1.0, 1.0).unwrap();
        let (lo, hi) = d.bounding_box();
        let box_area = (hi.re - lo.re) * (hi.im - lo.im);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000usize;
        let mut hits = 0usize;
        for _ in 0..n {
            let p = Complex64::new(
                rng.gen_range(lo.re..hi.re),
                rng.gen_range(lo.im..hi.im),
            );
            if d.contains(p) {
                hits += 1;
            }
        }
        let frac = hits as f64 / n as f64;
        let est = frac * box_area;
        let se = box_area * (frac * (1.0 - frac) / n as f64).sqrt();
        assert!(
            (est - d.area()).abs() < 3.0 * se,
            "MC area {est} vs exact {} (se {se})",
            d.area()
        );
    }

    #[test]
    fn modular_neighbors_nonempty_and_include_generators() {
        let nb = modular_neighbor_elements();
        assert!(nb.len() >= 4);
        assert!(nb
            .iter()
            .any(|m| m.approx_eq(&Mobius::translation(1.0), 1e-9)));
        assert!(nb.iter().any(|m| m.approx_eq(&Mobius::inversion(), 1e-9)));
    }
}
