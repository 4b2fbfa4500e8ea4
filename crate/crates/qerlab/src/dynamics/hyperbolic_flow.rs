//! Exact hyperbolic flow with fundamental-domain reduction, and closed-form
//! impact scanning against the hyperbolic hypersurfaces.
//!
//! Along a geodesic parametrized through its frame element, the distance to a
//! fixed point, the inverse height, and the horizontal axis coordinate are
//! all of the form P e^{-t} + Q e^{t} (+ const); crossing times are roots of
//! scalar exponential equations, solved in closed form per flow chunk and per
//! lift of the curve.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use super::{make_impact, Impact, ImpactRecord, T_SEP};
use crate::geometry::hyperbolic::{apply_phase, frame_element, hyp_dist, modular_reduce, Mobius};
use crate::geometry::{modular_neighbor_elements, Domain, FuchsianGroup, Hypersurface, PhasePoint};

/// Flow-chunk length.  Chunks bound how far a reduced trajectory can wander
/// from the fundamental domain, which is what the precomputed lift sets are
/// sized for.
const CHUNK: f64 = 0.25;

pub(crate) fn reduce_phase(domain: &Domain, p: &PhasePoint) -> PhasePoint {
    match domain {
        Domain::Hyperbolic {
            group: FuchsianGroup::Modular,
        } => {
            let (_, g) = modular_reduce(p.pos);
            let (z, d) = apply_phase(&g, p.pos, p.dir);
            PhasePoint::new(z, d)
        }
        _ => *p,
    }
}

/// Exact geodesic flow for time t (either sign), chunked to keep coordinates
/// in (a neighborhood of) the fundamental domain.
pub(crate) fn flow(domain: &Domain, p: &PhasePoint, t: f64) -> PhasePoint {
    let mut cur = reduce_phase(domain, p);
    let mut rem = t;
    while rem != 0.0 {
        let dt = rem.clamp(-CHUNK, CHUNK);
        let g = frame_element(cur.pos, cur.dir);
        let (z, d) = apply_phase(&g, Complex64::new(0.0, dt.exp()), Complex64::new(0.0, 1.0));
        cur = reduce_phase(domain, &PhasePoint::new(z, d));
        rem -= dt;
    }
    cur
}

/// Roots of P e^{-tau} + Q e^{tau} = C with P, Q >= 0, pushed through `emit`.
fn exp_roots(p: f64, q: f64, c: f64, mut emit: impl FnMut(f64)) {
    const TINY: f64 = 1e-300;
    if q <= TINY {
        if p > TINY && c > 0.0 {
            emit((p / c).ln());
        }
        return;
    }
    if p <= TINY {
        if c > 0.0 {
            emit((c / q).ln());
        }
        return;
    }
    let disc = c * c - 4.0 * p * q;
    if disc < 0.0 {
        return;
    }
    let sq = disc.sqrt();
    let u1 = (c + sq) / (2.0 * q);
    if u1 <= 0.0 {
        return;
    }
    emit(u1.ln());
    if sq > 0.0 {
        let u2 = p / (q * u1);
        emit(u2.ln());
    }
}

/// One or two Newton corrections on f(tau) = P e^{-tau} + Q e^{tau} - C.
fn polish(p: f64, q: f64, c: f64, mut tau: f64) -> f64 {
    for _ in 0..2 {
        let (em, ep) = ((-tau).exp(), tau.exp());
        let f = p * em + q * ep - c;
        let df = -p * em + q * ep;
        if df.abs() < 1e-12 {
            break;
        }
        tau -= f / df;
    }
    tau
}

/// Crossing times of the canonical curve by the trajectory tau -> m(i e^tau),
/// within the window [-1e-9, dt + 1e-9], appended to `out`.
fn push_crossings(h: &Hypersurface, m: &Mobius, dt: f64, out: &mut Vec<f64>) {
    let lo = -1e-9;
    let hi = dt + 1e-9;
    let mut window = |tau: f64| {
        if (lo..=hi).contains(&tau) {
            out.push(tau);
        }
    };
    match *h {
        Hypersurface::GeodesicCircle { center, radius, .. } => {
            let v = m.inverse().apply(Complex64::new(center[0], center[1]));
            if v.im <= 0.0 {
                return;
            }
            let p = v.norm_sqr() / (2.0 * v.im);
            let q = 1.0 / (2.0 * v.im);
            let c = radius.cosh();
            exp_roots(p, q, c, |tau| window(polish(p, q, c, tau)));
        }
        Hypersurface::ClosedHorocycle { height } => {
            // 1/Im(m(i e^tau)) = c^2 e^tau + d^2 e^{-tau}.
            let p = m.d * m.d;
            let q = m.c * m.c;
            let c = 1.0 / height;
            exp_roots(p, q, c, |tau| window(polish(p, q, c, tau)));
        }
        Hypersurface::ClosedGeodesic { .. } => {
            // Re((g_ax^{-1} m)(i e^tau)) has the sign of ac e^{2 tau} + bd.
            let n = h.axis_element().inverse().compose(m);
            let ac = n.a * n.c;
            let bd = n.b * n.d;
            if ac.abs() < 1e-300 {
                return; // trajectory parallel to or on the axis chart
            }
            let u2 = -bd / ac;
            if u2 > 0.0 {
                window(0.5 * u2.ln());
            }
        }
        Hypersurface::Segment { .. } => unreachable!("segments live in billiard domains"),
    }
}

/// All impacts of the forward trajectory with (all visible lifts of) H.
pub(crate) fn scan(
    domain: &Domain,
    h: &Hypersurface,
    p: &PhasePoint,
    t_max: f64,
) -> ImpactRecord {
    let lifts = lift_elements(domain, h);
    let mut cur = reduce_phase(domain, p);
    let mut t0 = 0.0;
    let mut raw: Vec<(f64, Complex64, Complex64)> = Vec::new();
    let mut taus: Vec<f64> = Vec::new();
    while t0 < t_max - 1e-12 {
        let dt = CHUNK.min(t_max - t0);
        let g = frame_element(cur.pos, cur.dir);
        for gamma in lifts.iter() {
            let m = gamma.inverse().compose(&g);
            taus.clear();
            push_crossings(h, &m, dt, &mut taus);
            for &tau in &taus {
                let t = t0 + tau;
                if t <= T_SEP || t > t_max + 1e-9 {
                    continue;
                }
                let (w, e) =
                    apply_phase(&m, Complex64::new(0.0, tau.exp()), Complex64::new(0.0, 1.0));
                raw.push((t, w, e));
            }
        }
        let (z, d) = apply_phase(&g, Complex64::new(0.0, dt.exp()), Complex64::new(0.0, 1.0));
        cur = reduce_phase(domain, &PhasePoint::new(z, d));
        t0 += dt;
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    raw.dedup_by(|a, b| (a.0 - b.0).abs() <= T_SEP);
    let impacts: Vec<Impact> = raw
        .into_iter()
        .filter_map(|(t, w, e)| make_impact(h, t, w, e))
        .collect();
    ImpactRecord {
        impacts,
        t_max,
        aborted: None,
    }
}

/// Group elements gamma such that gamma(canonical curve) can be crossed by a
/// reduced trajectory chunk: the reduction charts met along one period of the
/// curve, extended by the fundamental-domain neighbor elements, deduplicated
/// modulo the curve's planar stabilizer.
fn lift_elements(domain: &Domain, h: &Hypersurface) -> Arc<Vec<Mobius>> {
    if !matches!(
        domain,
        Domain::Hyperbolic {
            group: FuchsianGroup::Modular
        }
    ) {
        return Arc::new(vec![Mobius::IDENTITY]);
    }
    static CACHE: OnceLock<Mutex<Vec<(Hypersurface, Arc<Vec<Mobius>>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
    {
        let guard = cache.lock().unwrap();
        if let Some((_, v)) = guard.iter().find(|(k, _)| k == h) {
            return v.clone();
        }
    }
    let built = Arc::new(build_lift_elements(h));
    cache.lock().unwrap().push((*h, built.clone()));
    built
}

fn build_lift_elements(h: &Hypersurface) -> Vec<Mobius> {
    let l = h.length();
    let n = ((l / 0.04).ceil() as usize).max(48);
    let mut charts: Vec<Mobius> = vec![Mobius::IDENTITY];
    for k in 0..n {
        let w = h.frame_unchecked(l * k as f64 / n as f64).point;
        let (_, g) = modular_reduce(w);
        if !charts.iter().any(|c| c.approx_eq(&g, 1e-9)) {
            charts.push(g);
        }
    }
    let mut out: Vec<Mobius> = Vec::new();
    let neighbors = modular_neighbor_elements();
    for nb in std::iter::once(&Mobius::IDENTITY).chain(neighbors.iter()) {
        for chart in &charts {
            let cand = nb.compose(chart);
            if !out.iter().any(|m| same_lift(h, m, &cand)) {
                out.push(cand);
            }
        }
    }
    assert!(out.len() <= 400, "lift set unexpectedly large");
    out
}

/// Whether m1(curve) and m2(curve) are the same planar curve.
fn same_lift(h: &Hypersurface, m1: &Mobius, m2: &Mobius) -> bool {
    let d = m2.inverse().compose(m1);
    match *h {
        Hypersurface::GeodesicCircle { center, .. } => {
            let c = Complex64::new(center[0], center[1]);
            hyp_dist(d.apply(c), c) < 1e-9
        }
        Hypersurface::ClosedHorocycle { height } => [-1.0, 0.0, 1.0].iter().all(|&x| {
            let w = d.apply(Complex64::new(x, height));
            (w.im - height).abs() < 1e-9
        }),
        Hypersurface::ClosedGeodesic { .. } => {
            let g = h.axis_element();
            // Axis endpoints: g maps 0 and infinity to them.
            let p = g.b / g.d;
            let q = g.a / g.c;
            let dp = apply_real(&d, p);
            let dq = apply_real(&d, q);
            ((dp - p).abs() < 1e-9 && (dq - q).abs() < 1e-9)
                || ((dp - q).abs() < 1e-9 && (dq - p).abs() < 1e-9)
        }
        Hypersurface::Segment { .. } => unreachable!(),
    }
}

fn apply_real(m: &Mobius, x: f64) -> f64 {
    let den = m.c * x + m.d;
    if den.abs() < 1e-15 {
        f64::INFINITY
    } else {
        (m.a * x + m.b) / den
    }
}
