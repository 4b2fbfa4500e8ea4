//! Exact billiard ray tracing with specular reflection.

use num_complex::Complex64;

use super::{make_impact, DynamicsError, Impact, ImpactRecord, CORNER_TOL, T_SEP};
use crate::geometry::{dot, Domain, Hypersurface, PhasePoint};

/// One straight flight segment of a billiard trajectory.
#[derive(Debug, Clone, Copy)]
struct Leg {
    start: Complex64,
    dir: Complex64,
    len: f64,
    t0: f64,
}

/// Outcome of tracing up to a time horizon.
struct Trace {
    legs: Vec<Leg>,
    /// Corner-abort time, if the trajectory was cut short.
    aborted: Option<f64>,
    end: Option<PhasePoint>,
}

const MAX_LEGS: usize = 1_000_000;

/// Next boundary intersection from an interior (or boundary) point.
/// Returns (time, outward normal, corner flag).
fn boundary_hit(domain: &Domain, p: Complex64, d: Complex64) -> Option<(f64, Complex64, bool)> {
    let mut best: Option<(f64, Complex64, bool)> = None;
    let mut consider = |t: f64, n: Complex64, corner: bool| {
        if t > 1e-12 && best.map_or(true, |(bt, _, _)| t < bt) {
            best = Some((t, n, corner));
        }
    };
    match *domain {
        Domain::Stadium {
            half_length: a,
            cap_radius: r,
        } => {
            // Straight walls y = +-r over |x| <= a.
            if d.im.abs() > 0.0 {
                for wy in [r, -r] {
                    let t = (wy - p.im) / d.im;
                    if t > 1e-12 {
                        let x = p.re + t * d.re;
                        if x.abs() <= a {
                            let corner = a - x.abs() < r * CORNER_TOL;
                            consider(t, Complex64::new(0.0, wy.signum()), corner);
                        }
                    }
                }
            }
            // Caps: circles of radius r about (+-a, 0), on their outer halves.
            for cs in [1.0f64, -1.0] {
                let c = Complex64::new(cs * a, 0.0);
                let rel = p - c;
                let beta = dot(d, rel);
                let gamma = rel.norm_sqr() - r * r;
                let disc = beta * beta - gamma;
                if disc < 0.0 {
                    continue;
                }
                let sq = disc.sqrt();
                for t in [-beta - sq, -beta + sq] {
                    if t > 1e-12 {
                        let hit = p + d * t;
                        if cs * (hit.re - cs * a) >= -1e-12 {
                            // Junctions are at (+-a, +-r): polar angle +-pi/2
                            // on the cap.
                            let corner = (hit.re - cs * a).abs() < r * CORNER_TOL;
                            let n = (hit - c) / r;
                            consider(t, n, corner);
                        }
                    }
                }
            }
        }
        Domain::UnitSquare => {
            let walls = [
                (d.re, (0.0 - p.re) / d.re, Complex64::new(-1.0, 0.0), false),
                (d.re, (1.0 - p.re) / d.re, Complex64::new(1.0, 0.0), false),
                (d.im, (0.0 - p.im) / d.im, Complex64::new(0.0, -1.0), true),
                (d.im, (1.0 - p.im) / d.im, Complex64::new(0.0, 1.0), true),
            ];
            for (den, t, n, horizontal) in walls {
                if den.abs() > 0.0 && t > 1e-12 {
                    let hit = p + d * t;
                    let along = if horizontal { hit.re } else { hit.im };
                    if (-1e-12..=1.0 + 1e-12).contains(&along) {
                        let corner = along < CORNER_TOL || along > 1.0 - CORNER_TOL;
                        consider(t, n, corner);
                    }
                }
            }
        }
        Domain::Hyperbolic { .. } => unreachable!("billiard tracing on a hyperbolic domain"),
    }
    best
}

fn trace(domain: &Domain, p: &PhasePoint, t_max: f64) -> Trace {
    let mut legs = Vec::new();
    let mut pos = p.pos;
    let mut dir = p.dir;
    let mut t0 = 0.0;
    while t0 < t_max {
        if legs.len() >= MAX_LEGS {
            return Trace {
                legs,
                aborted: Some(t0),
                end: None,
            };
        }
        let remaining = t_max - t0;
        match boundary_hit(domain, pos, dir) {
            Some((t_hit, normal, corner)) => {
                if t_hit >= remaining {
                    legs.push(Leg {
                        start: pos,
                        dir,
                        len: remaining,
                        t0,
                    });
                    let end = PhasePoint::new(pos + dir * remaining, dir);
                    return Trace {
                        legs,
                        aborted: None,
                        end: Some(end),
                    };
                }
                legs.push(Leg {
                    start: pos,
                    dir,
                    len: t_hit,
                    t0,
                });
                if corner {
                    return Trace {
                        legs,
                        aborted: Some(t0 + t_hit),
                        end: None,
                    };
                }
                pos += dir * t_hit;
                dir -= normal * (2.0 * dot(dir, normal));
                dir /= dir.norm();
                t0 += t_hit;
            }
            None => {
                // No boundary ahead (grazing degeneracy); abort.
                return Trace {
                    legs,
                    aborted: Some(t0),
                    end: None,
                };
            }
        }
    }
    Trace {
        legs,
        aborted: None,
        end: Some(PhasePoint::new(pos, dir)),
    }
}

/// Exact billiard flow for time t (either sign).
pub(crate) fn advance(
    domain: &Domain,
    p: &PhasePoint,
    t: f64,
) -> Result<PhasePoint, DynamicsError> {
    if t == 0.0 {
        return Ok(*p);
    }
    let (start, mag, reverse) = if t > 0.0 {
        (*p, t, false)
    } else {
        (p.reverse(), -t, true)
    };
    let tr = trace(domain, &start, mag);
    match tr.end {
        Some(end) => Ok(if reverse { end.reverse() } else { end }),
        None => Err(DynamicsError::CornerHit {
            t: tr.aborted.unwrap_or(0.0),
        }),
    }
}

/// All crossings of a straight chord H by the forward trajectory.
pub(crate) fn scan(
    domain: &Domain,
    h: &Hypersurface,
    p: &PhasePoint,
    t_max: f64,
) -> ImpactRecord {
    let (q0, q1) = match *h {
        Hypersurface::Segment { p0, p1 } => (
            Complex64::new(p0[0], p0[1]),
            Complex64::new(p1[0], p1[1]),
        ),
        _ => unreachable!("billiard scan requires a segment hypersurface"),
    };
    let l = h.length();
    let u = (q1 - q0) / l;
    let cross = |a: Complex64, b: Complex64| a.re * b.im - a.im * b.re;
    let tr = trace(domain, p, t_max);
    let mut impacts: Vec<Impact> = Vec::new();
    for leg in &tr.legs {
        let den = cross(leg.dir, u);
        if den.abs() < 1e-14 {
            continue; // parallel to H: grazing-parallel, measure zero
        }
        let rel = q0 - leg.start;
        let t = cross(rel, u) / den;
        let s = cross(rel, leg.dir) / den;
        if t > 1e-12 && t <= leg.len && (-1e-12..=l + 1e-12).contains(&s) {
            let tg = leg.t0 + t;
            if tg <= T_SEP {
                continue;
            }
            if let Some(imp) = make_impact(h, tg, leg.start + leg.dir * t, leg.dir) {
                impacts.push(imp);
            }
        }
    }
    impacts.sort_by(|a, b| a.t.total_cmp(&b.t));
    impacts.dedup_by(|a, b| (a.t - b.t).abs() <= T_SEP);
    ImpactRecord {
        impacts,
        t_max,
        aborted: tr.aborted,
    }
}
