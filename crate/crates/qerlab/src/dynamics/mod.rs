//! Flows, impact scanning against a hypersurface, return maps, reflection
//! maps and finite-difference section Jacobians.
//!
//! All trajectory work is closed-form: billiard flows are exact ray geometry
//! with specular reflection, hyperbolic flows are Moebius conjugations of the
//! vertical geodesic, and impact times are roots of per-segment scalar
//! equations.  No ODE stepping and no bracketing search anywhere.

mod billiard;
mod hyperbolic_flow;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::geometry::hyperbolic::apply_phase;
use crate::geometry::{
    dot, modular_neighbor_elements, Domain, FuchsianGroup, GeometryError, Hypersurface,
    PhasePoint,
};

/// Section points with |sigma| > 1 - SIGMA_BAND are treated as tangential
/// (fold-grazing) and censored from return-map statistics.
pub const SIGMA_BAND: f64 = 1e-3;

/// Minimum separation between recorded impact times.
pub const T_SEP: f64 = 1e-6;

/// Billiard impacts this close (in angle) to a wall-cap junction or square
/// corner abort the trajectory.
pub const CORNER_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("trajectory aborted at a boundary corner at t = {t:.6}")]
    CornerHit { t: f64 },
    #[error("orbit censored after {returns} returns within horizon {t_max}")]
    Censored { returns: usize, t_max: f64 },
    #[error("return lands in the tangential band: sigma = {sigma:.6}")]
    BandGrazing { sigma: f64 },
    #[error("section jacobian unavailable: {0}")]
    JacobianUnavailable(String),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// (s, sigma, side): coball coordinates plus the sheet tag of S*_H M.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSectionPoint {
    pub s: f64,
    pub sigma: f64,
    pub side: i8,
}

impl CrossSectionPoint {
    pub fn new(s: f64, sigma: f64, side: i8) -> Self {
        assert!(side == 1 || side == -1);
        CrossSectionPoint { s, sigma, side }
    }

    /// Image under the reflection involution: same (s, sigma), other sheet.
    pub fn reflected(&self) -> Self {
        CrossSectionPoint {
            s: self.s,
            sigma: self.sigma,
            side: -self.side,
        }
    }

    /// Time reversal of the lifted covector.
    pub fn reversed(&self) -> Self {
        CrossSectionPoint {
            s: self.s,
            sigma: -self.sigma,
            side: -self.side,
        }
    }

    pub fn in_band(&self) -> bool {
        self.sigma.abs() > 1.0 - SIGMA_BAND
    }
}

/// One crossing of the hypersurface by a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct Impact {
    pub t: f64,
    pub s: f64,
    pub sigma: f64,
    pub side: i8,
    /// |sigma| inside the tangential band; such impacts are kept in the list
    /// (time averages weight them by a vanishing cutoff) but censored from
    /// return maps.
    pub grazing: bool,
}

impl Impact {
    pub fn section(&self) -> CrossSectionPoint {
        CrossSectionPoint::new(self.s, self.sigma, self.side)
    }

    /// Canonical-chart phase point of the impact (the lift of its section
    /// coordinates).
    pub fn phase(&self, h: &Hypersurface) -> PhasePoint {
        let sigma = self.sigma.clamp(-1.0, 1.0);
        h.lift_xi(self.s, sigma, self.side)
            .expect("impact coordinates are in range")
    }
}

/// All impacts of a trajectory up to a horizon, with explicit censoring data.
#[derive(Debug, Clone)]
pub struct ImpactRecord {
    pub impacts: Vec<Impact>,
    pub t_max: f64,
    /// Time at which the trajectory was aborted (billiard corner), if any.
    pub aborted: Option<f64>,
}

impl ImpactRecord {
    /// 1-based impact access.
    pub fn nth(&self, j: usize) -> Option<&Impact> {
        assert!(j >= 1);
        self.impacts.get(j - 1)
    }
}

/// Flow a phase point for time t (either sign).  Exact for both model
/// families; billiard trajectories abort on corner hits.
pub fn flow(domain: &Domain, p: &PhasePoint, t: f64) -> Result<PhasePoint, DynamicsError> {
    if domain.is_billiard() {
        billiard::advance(domain, p, t)
    } else {
        Ok(hyperbolic_flow::flow(domain, p, t))
    }
}

/// Reduce a phase point to the canonical chart of the domain (fundamental
/// domain for quotients; identity otherwise).
pub fn canonicalize(domain: &Domain, p: &PhasePoint) -> PhasePoint {
    if domain.is_hyperbolic() {
        hyperbolic_flow::reduce_phase(domain, p)
    } else {
        *p
    }
}

/// Scaled phase metric: position error over the domain's diameter scale plus
/// direction angle error over pi.  Quotient-aware.
pub fn phase_distance(domain: &Domain, p: &PhasePoint, q: &PhasePoint) -> f64 {
    match domain {
        Domain::Hyperbolic {
            group: FuchsianGroup::Modular,
        } => {
            let pr = canonicalize(domain, p);
            let qr = canonicalize(domain, q);
            let mut best = raw_phase_distance(domain, &pr, &qr);
            for g in modular_neighbor_elements() {
                let (z, d) = apply_phase(g, qr.pos, qr.dir);
                let moved = PhasePoint::new(z, d);
                best = best.min(raw_phase_distance(domain, &pr, &moved));
            }
            best
        }
        _ => raw_phase_distance(domain, p, q),
    }
}

fn raw_phase_distance(domain: &Domain, p: &PhasePoint, q: &PhasePoint) -> f64 {
    let pos_err = match domain {
        Domain::Hyperbolic { .. } => crate::geometry::hyperbolic::hyp_dist(p.pos, q.pos),
        _ => (p.pos - q.pos).norm(),
    };
    let angle_err = (p.dir * q.dir.conj()).arg().abs();
    pos_err / domain.diameter_scale() + angle_err / std::f64::consts::PI
}

/// All impacts of the forward trajectory of p with H up to t_max.
pub fn impacts(
    domain: &Domain,
    h: &Hypersurface,
    p: &PhasePoint,
    t_max: f64,
) -> Result<ImpactRecord, DynamicsError> {
    assert!(t_max > 0.0);
    match (domain.is_billiard(), h) {
        (true, Hypersurface::Segment { .. }) => Ok(billiard::scan(domain, h, p, t_max)),
        (false, Hypersurface::Segment { .. }) | (true, _) => Err(DynamicsError::Unsupported(
            "hypersurface variant does not match the domain model".into(),
        )),
        (false, _) => {
            if matches!(
                domain,
                Domain::Hyperbolic {
                    group: FuchsianGroup::FreePlane
                }
            ) && !matches!(h, Hypersurface::GeodesicCircle { .. })
            {
                return Err(DynamicsError::Unsupported(
                    "closed horocycles and closed geodesics require the modular quotient".into(),
                ));
            }
            Ok(hyperbolic_flow::scan(domain, h, p, t_max))
        }
    }
}

/// Forward first impact time, or None if censored at the horizon.
pub fn impact_time(
    domain: &Domain,
    h: &Hypersurface,
    p: &PhasePoint,
    t_max: f64,
) -> Result<Option<f64>, DynamicsError> {
    let rec = impacts(domain, h, p, t_max)?;
    if rec.impacts.is_empty() {
        if let Some(t) = rec.aborted {
            return Err(DynamicsError::CornerHit { t });
        }
        return Ok(None);
    }
    Ok(Some(rec.impacts[0].t))
}

/// The first return map of the cross-section.
pub fn return_map_phi(
    domain: &Domain,
    h: &Hypersurface,
    q: &CrossSectionPoint,
    t_max: f64,
) -> Result<(CrossSectionPoint, f64), DynamicsError> {
    let rec = jth_return(domain, h, q, 1, t_max)?;
    let hit = rec.nth(1).unwrap();
    Ok((hit.section(), hit.t))
}

/// Iterated return: record of the first j returns of the lift of q.
pub fn jth_return(
    domain: &Domain,
    h: &Hypersurface,
    q: &CrossSectionPoint,
    j: usize,
    t_max: f64,
) -> Result<ImpactRecord, DynamicsError> {
    assert!(j >= 1);
    if q.in_band() {
        return Err(DynamicsError::BandGrazing { sigma: q.sigma });
    }
    let p = h.lift_xi(q.s, q.sigma, q.side)?;
    let rec = impacts(domain, h, &p, t_max)?;
    for (k, imp) in rec.impacts.iter().take(j).enumerate() {
        if imp.grazing {
            return Err(DynamicsError::BandGrazing { sigma: imp.sigma });
        }
        let _ = k;
    }
    if rec.impacts.len() < j {
        if let Some(t) = rec.aborted {
            return Err(DynamicsError::CornerHit { t });
        }
        return Err(DynamicsError::Censored {
            returns: rec.impacts.len(),
            t_max,
        });
    }
    Ok(rec)
}

/// One-sided jth return map on coball coordinates: lift to the given side,
/// return the jth (s', sigma') plus the return time.
pub fn one_sided_return(
    domain: &Domain,
    h: &Hypersurface,
    s: f64,
    sigma: f64,
    side: i8,
    j: usize,
    t_max: f64,
) -> Result<(f64, f64, f64), DynamicsError> {
    let q = CrossSectionPoint::new(s, sigma, side);
    let rec = jth_return(domain, h, &q, j, t_max)?;
    let hit = rec.nth(j).unwrap();
    Ok((hit.s, hit.sigma, hit.t))
}

/// Conjugate the reflection involution by the flow at a fixed impact time t:
/// flow forward t, reflect through T*H, flow back.  t must match an impact of
/// p's record within a small slack.
pub fn h_reflection_at_time(
    domain: &Domain,
    h: &Hypersurface,
    p: &PhasePoint,
    t: f64,
) -> Result<PhasePoint, DynamicsError> {
    let rec = impacts(domain, h, p, t + 1.0)?;
    let hit = rec
        .impacts
        .iter()
        .find(|imp| (imp.t - t).abs() <= 1e-7)
        .ok_or(DynamicsError::Censored {
            returns: rec.impacts.len(),
            t_max: t,
        })?;
    if hit.grazing {
        return Err(DynamicsError::BandGrazing { sigma: hit.sigma });
    }
    let reflected = hit.phase(h); // lift of (s, sigma, side)
    let flipped = h
        .lift_xi(hit.s, hit.sigma.clamp(-1.0, 1.0), -hit.side)
        .expect("impact coordinates are in range");
    let _ = reflected;
    flow(domain, &flipped, -hit.t)
}

/// The jth H-reflection map: reflect at the jth impact of p and flow back.
/// Returns the image and the impact time used.
pub fn h_reflection_rj(
    domain: &Domain,
    h: &Hypersurface,
    p: &PhasePoint,
    j: usize,
    t_max: f64,
) -> Result<(PhasePoint, f64), DynamicsError> {
    assert!(j >= 1);
    let rec = impacts(domain, h, p, t_max)?;
    if rec.impacts.len() < j {
        if let Some(t) = rec.aborted {
            return Err(DynamicsError::CornerHit { t });
        }
        return Err(DynamicsError::Censored {
            returns: rec.impacts.len(),
            t_max,
        });
    }
    let hit = rec.impacts[j - 1];
    if hit.grazing {
        return Err(DynamicsError::BandGrazing { sigma: hit.sigma });
    }
    let flipped = h
        .lift_xi(hit.s, hit.sigma.clamp(-1.0, 1.0), -hit.side)
        .expect("impact coordinates are in range");
    let image = flow(domain, &flipped, -hit.t)?;
    Ok((image, hit.t))
}

/// Central finite-difference Jacobian of the first return map in (s, sigma)
/// at fixed sheet, Richardson-extrapolated over steps h_fd and h_fd/2 to
/// cancel the leading truncation term (the flows are closed-form, so there is
/// no roundoff floor to speak of).  Fails rather than differencing across a
/// branch of the piecewise-smooth return map (detected by a return-time jump
/// or sheet flip among the stencil points).
pub fn section_jacobian(
    domain: &Domain,
    h: &Hypersurface,
    q: &CrossSectionPoint,
    t_max: f64,
    h_fd: f64,
) -> Result<[[f64; 2]; 2], DynamicsError> {
    // Strong hyperbolic stretching makes |det| - 1 ill-conditioned: with
    // entries of size m, the stencil only sits in the linear regime when the
    // image displacement m * h stays small.  Probe once to learn m, then
    // shrink the step accordingly (the closed-form flows leave plenty of room
    // above the roundoff floor).
    let probe = central_jacobian(domain, h, q, t_max, h_fd)?;
    let m = probe
        .iter()
        .flatten()
        .fold(1.0f64, |acc, e| acc.max(e.abs()));
    let h_eff = (1e-3 / m).min(h_fd).max(1e-9);
    let coarse = central_jacobian(domain, h, q, t_max, h_eff)?;
    let fine = central_jacobian(domain, h, q, t_max, h_eff / 2.0)?;
    let mut out = [[0.0f64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            // On a smooth branch the two quotients differ by the O(h^2)
            // truncation term; a larger gap means the stencil straddles a
            // discontinuity the time filter did not catch.
            if (fine[i][j] - coarse[i][j]).abs() > 0.01 * (1.0 + fine[i][j].abs()) {
                return Err(DynamicsError::JacobianUnavailable(
                    "difference quotients do not converge at this point".into(),
                ));
            }
            out[i][j] = (4.0 * fine[i][j] - coarse[i][j]) / 3.0;
        }
    }
    Ok(out)
}

fn central_jacobian(
    domain: &Domain,
    h: &Hypersurface,
    q: &CrossSectionPoint,
    t_max: f64,
    h_fd: f64,
) -> Result<[[f64; 2]; 2], DynamicsError> {
    assert!(h_fd > 0.0);
    let l = h.length();
    let (base, base_t) = return_map_phi(domain, h, q, t_max)?;
    let wrap = |s: f64| if h.is_closed() { s.rem_euclid(l) } else { s };
    let stencil = [
        (wrap(q.s + h_fd), q.sigma),
        (wrap(q.s - h_fd), q.sigma),
        (q.s, q.sigma + h_fd),
        (q.s, q.sigma - h_fd),
    ];
    let mut images = [[0.0f64; 2]; 4];
    let t_jump = (0.05f64).max(1e3 * h_fd);
    for (i, &(s, sigma)) in stencil.iter().enumerate() {
        if !h.in_param_range(s) || sigma.abs() >= 1.0 - SIGMA_BAND {
            return Err(DynamicsError::JacobianUnavailable(
                "stencil leaves the section parameter range".into(),
            ));
        }
        let qi = CrossSectionPoint::new(s, sigma, q.side);
        let (img, t) = return_map_phi(domain, h, &qi, t_max)
            .map_err(|e| DynamicsError::JacobianUnavailable(format!("stencil point: {e}")))?;
        if (t - base_t).abs() > t_jump || img.side != base.side {
            return Err(DynamicsError::JacobianUnavailable(
                "stencil straddles a branch of the return map".into(),
            ));
        }
        images[i] = [img.s, img.sigma];
    }
    // Nearest-image arclength differences on closed curves.
    let ds = |a: f64, b: f64| {
        if h.is_closed() {
            (a - b + 0.5 * l).rem_euclid(l) - 0.5 * l
        } else {
            a - b
        }
    };
    // A kink of the piecewise-smooth return map passing between the stencil
    // halves leaves the central quotient finite but meaningless; detect it by
    // comparing one-sided quotients against the base image.
    for (plus, minus) in [(0usize, 1usize), (2, 3)] {
        let sided = [
            (ds(images[plus][0], base.s), ds(base.s, images[minus][0])),
            (
                images[plus][1] - base.sigma,
                base.sigma - images[minus][1],
            ),
        ];
        for (fwd, bwd) in sided {
            let (mf, mb) = (fwd / h_fd, bwd / h_fd);
            let central = (mf + mb) / 2.0;
            if (mf - mb).abs() > 0.5 + 0.05 * central.abs() {
                return Err(DynamicsError::JacobianUnavailable(
                    "one-sided difference quotients disagree (kink in the return map)".into(),
                ));
            }
        }
    }
    Ok([
        [
            ds(images[0][0], images[1][0]) / (2.0 * h_fd),
            ds(images[2][0], images[3][0]) / (2.0 * h_fd),
        ],
        [
            (images[0][1] - images[1][1]) / (2.0 * h_fd),
            (images[2][1] - images[3][1]) / (2.0 * h_fd),
        ],
    ])
}

/// Sample the cross-section measure d mu_{L,H} = ds d sigma per sheet,
/// restricted to the usable parameter range and the non-tangential band.
pub fn sample_mu_lh<R: Rng>(h: &Hypersurface, rng: &mut R) -> CrossSectionPoint {
    let l = h.length();
    let margin = if h.is_closed() {
        0.0
    } else {
        crate::geometry::DELTA_S_FRAC * l
    };
    let s = rng.gen_range(margin..l - margin);
    let sigma = rng.gen_range(-(1.0 - SIGMA_BAND)..(1.0 - SIGMA_BAND));
    let side = if rng.gen::<bool>() { 1 } else { -1 };
    CrossSectionPoint::new(s, sigma, side)
}

/// Total mass of the sampled section measure (both sheets, band and endpoint
/// margins excluded); the full-section mass is 4 L.
pub fn mu_lh_mass(h: &Hypersurface) -> f64 {
    let l = h.length();
    let margin = if h.is_closed() {
        0.0
    } else {
        crate::geometry::DELTA_S_FRAC * l
    };
    2.0 * (l - 2.0 * margin) * 2.0 * (1.0 - SIGMA_BAND)
}

/// Sample the Liouville measure on S*M: uniform area times uniform direction.
pub fn sample_mu_l<R: Rng>(domain: &Domain, rng: &mut R) -> PhasePoint {
    let pos = match domain {
        Domain::Stadium { .. } | Domain::UnitSquare => {
            let (lo, hi) = domain.bounding_box();
            loop {
                let p = Complex64::new(rng.gen_range(lo.re..hi.re), rng.gen_range(lo.im..hi.im));
                if domain.signed_distance(p) < -1e-12 {
                    break p;
                }
            }
        }
        Domain::Hyperbolic {
            group: FuchsianGroup::Modular,
        } => {
            // x has density 1/sqrt(1-x^2) (arcsine substitution), then y has
            // density 1/y^2 above the unit circle.
            let phi = rng.gen_range(-std::f64::consts::FRAC_PI_6..std::f64::consts::FRAC_PI_6);
            let x = phi.sin();
            let y_min = phi.cos();
            let u: f64 = rng.gen_range(0.0..1.0);
            Complex64::new(x, y_min / (1.0 - u))
        }
        Domain::Hyperbolic {
            group: FuchsianGroup::FreePlane,
        } => panic!("the free hyperbolic plane has infinite Liouville volume"),
    };
    let theta = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    PhasePoint::from_angle(pos, theta)
}

/// Section coordinates of an impact given a planar representative lying on
/// the canonical (possibly unrolled) curve, together with its direction.
pub(crate) fn section_of(h: &Hypersurface, w: Complex64, e: Complex64) -> (f64, f64, i8) {
    match h {
        Hypersurface::ClosedGeodesic { .. } => {
            // The point may sit outside one fundamental period of the axis;
            // use the frame at its true axis parameter, then reduce s.
            let g = h.axis_element();
            let v = g.inverse().apply(w);
            let u = v.norm().ln();
            let (_, tangent) =
                apply_phase(&g, Complex64::new(0.0, u.exp()), Complex64::new(0.0, 1.0));
            let normal = tangent * Complex64::new(0.0, -1.0);
            let sigma = dot(e, tangent);
            let side = if dot(e, normal) >= 0.0 { 1 } else { -1 };
            (u.rem_euclid(h.length()), sigma, side)
        }
        _ => {
            // Segment and circle frames sit at the point itself; the
            // horocycle frame differs only by a horizontal translation, under
            // which tangent and normal are constant.
            let s = h.arclength_of(w);
            let f = h.frame_unchecked(s);
            let sigma = dot(e, f.tangent);
            let side = if dot(e, f.normal) >= 0.0 { 1 } else { -1 };
            (s, sigma, side)
        }
    }
}

/// Assemble an impact from raw crossing data, applying the endpoint margin
/// and the tangential band.  Returns None for margin-excluded crossings.
pub(crate) fn make_impact(
    h: &Hypersurface,
    t: f64,
    w: Complex64,
    e: Complex64,
) -> Option<Impact> {
    let (s, sigma, side) = section_of(h, w, e);
    if !h.in_param_range(s) {
        return None;
    }
    let grazing = sigma.abs() > 1.0 - SIGMA_BAND;
    debug_assert!(
        grazing || h.signed_fermi(w).abs() <= crate::geometry::TAU_H,
        "impact foot off the curve: |y_n| = {:.3e}",
        h.signed_fermi(w).abs()
    );
    Some(Impact {
        t,
        s,
        sigma,
        side,
        grazing,
    })
}
