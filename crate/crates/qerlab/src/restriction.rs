//! Restriction of eigenfunctions to a curve H: traces, L^2(H) functionals,
//! discrete-Fourier (Kohn-Nirenberg) quantization of symbols on the curve,
//! and the restricted matrix elements.

use num_complex::Complex64;
use rustfft::FftPlanner;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Hypersurface;
use crate::spectral::SpectralBatch;
use crate::symbols::Symbol;

#[derive(Debug, Error)]
pub enum RestrictionError {
    #[error("curve node at s = {s:.4} lies outside the domain (distance {d:.3e})")]
    Clearance { s: f64, d: f64 },
    #[error("mode index {j} out of range for batch of {len}")]
    ModeOutOfRange { j: usize, len: usize },
    #[error("hypersurface variant is not a planar curve")]
    NotPlanar,
}

/// Frequency cap aperture: symbols act on modes up to |sigma| = 1 + EPS0,
/// rolled off smoothly above |sigma| = 1.
pub const EPS0: f64 = 0.2;

/// C^2 endpoint taper for open curves.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Taper {
    /// Fraction of the curve length tapered at each end.
    pub fraction: f64,
}

impl Default for Taper {
    fn default() -> Self {
        Taper { fraction: 0.05 }
    }
}

impl Taper {
    /// Taper weight at arclength s on an open curve of length l.
    pub fn weight(&self, s: f64, l: f64) -> f64 {
        let edge = self.fraction * l;
        if edge <= 0.0 {
            return 1.0;
        }
        let rise = |d: f64| {
            let t = (d / edge).clamp(0.0, 1.0);
            t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
        };
        rise(s) * rise(l - s)
    }

    pub fn id(&self) -> String {
        format!("c2-bump-{:.3}", self.fraction)
    }
}

/// Samples of a mode restricted to the curve at uniform arclength nodes.
/// Closed curves use n nodes at k l / n; open curves include both endpoints,
/// spacing l / (n - 1).
#[derive(Debug, Clone)]
pub struct CurveTrace {
    pub j: usize,
    pub lambda: f64,
    pub values: Vec<Complex64>,
    pub length: f64,
    pub closed: bool,
}

impl CurveTrace {
    pub fn n_nodes(&self) -> usize {
        self.values.len()
    }

    pub fn node_s(&self, k: usize) -> f64 {
        if self.closed {
            self.length * k as f64 / self.values.len() as f64
        } else {
            self.length * k as f64 / (self.values.len() - 1) as f64
        }
    }
}

/// Node-count policy: at least eight samples per wavelength along H.
pub fn default_n_s(lambda: f64, length: f64) -> usize {
    let per_wavelength = 8.0 * lambda * length / (2.0 * std::f64::consts::PI);
    (per_wavelength.ceil() as usize).max(64)
}

/// Bicubic (Catmull-Rom) interpolation of a grid eigenfunction, with the
/// Dirichlet zero-extension outside the mask.
fn bicubic(batch: &SpectralBatch, j: usize, p: Complex64) -> f64 {
    let g = &batch.grid;
    let fx = (p.re - g.x0) / g.h;
    let fy = (p.im - g.y0) / g.h;
    let ix = fx.floor() as i64;
    let iy = fy.floor() as i64;
    let tx = fx - ix as f64;
    let ty = fy - iy as f64;
    let cr = |p0: f64, p1: f64, p2: f64, p3: f64, t: f64| {
        let m1 = 0.5 * (p2 - p0);
        let m2 = 0.5 * (p3 - p1);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p1
            + (t3 - 2.0 * t2 + t) * m1
            + (-2.0 * t3 + 3.0 * t2) * p2
            + (t3 - t2) * m2
    };
    let row = |dy: i64| {
        cr(
            batch.value_at(j, ix - 1, iy + dy),
            batch.value_at(j, ix, iy + dy),
            batch.value_at(j, ix + 1, iy + dy),
            batch.value_at(j, ix + 2, iy + dy),
            tx,
        )
    };
    cr(row(-1), row(0), row(1), row(2), ty)
}

/// Restrict mode j of the batch to the curve at n_s uniform arclength nodes.
pub fn trace_on_curve(
    batch: &SpectralBatch,
    domain: &crate::geometry::Domain,
    h: &Hypersurface,
    j: usize,
    n_s: usize,
) -> Result<CurveTrace, RestrictionError> {
    if j >= batch.len() {
        return Err(RestrictionError::ModeOutOfRange { j, len: batch.len() });
    }
    if !matches!(h, Hypersurface::Segment { .. }) {
        return Err(RestrictionError::NotPlanar);
    }
    let l = h.length();
    let closed = h.is_closed();
    let denom = if closed { n_s } else { n_s - 1 } as f64;
    let mut values = Vec::with_capacity(n_s);
    for k in 0..n_s {
        let s = l * k as f64 / denom;
        let p = h.frame_unchecked(s).point;
        let d = domain.signed_distance(p);
        if d > 1e-9 {
            return Err(RestrictionError::Clearance { s, d });
        }
        values.push(Complex64::new(bicubic(batch, j, p), 0.0));
    }
    Ok(CurveTrace {
        j,
        lambda: batch.frequencies[j],
        values,
        length: l,
        closed,
    })
}

/// Quadrature of V |u|^2 along the curve: Riemann sum for closed curves,
/// trapezoid for open ones.
pub fn l2_on_curve(t: &CurveTrace, weight: impl Fn(f64) -> f64) -> f64 {
    let n = t.n_nodes();
    if t.closed {
        let w = t.length / n as f64;
        (0..n)
            .map(|k| weight(t.node_s(k)) * t.values[k].norm_sqr())
            .sum::<f64>()
            * w
    } else {
        let w = t.length / (n - 1) as f64;
        (0..n)
            .map(|k| {
                let trap = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                trap * weight(t.node_s(k)) * t.values[k].norm_sqr()
            })
            .sum::<f64>()
            * w
    }
}

/// Complex L^2(H) inner product <f, g> with the trace's quadrature rule.
fn inner_on_curve(f: &CurveTrace, g: &CurveTrace) -> Complex64 {
    assert_eq!(f.n_nodes(), g.n_nodes());
    let n = f.n_nodes();
    if f.closed {
        let w = f.length / n as f64;
        (0..n).map(|k| f.values[k] * g.values[k].conj()).sum::<Complex64>() * w
    } else {
        let w = f.length / (n - 1) as f64;
        (0..n)
            .map(|k| {
                let trap = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                f.values[k] * g.values[k].conj() * trap
            })
            .sum::<Complex64>()
            * w
    }
}

/// Smooth frequency cap: 1 on |sigma| <= 1, rolled off to 0 at 1 + EPS0.
fn cap(sigma: f64) -> f64 {
    let a = sigma.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 1.0 + EPS0 {
        0.0
    } else {
        let t = (a - 1.0) / EPS0;
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// Output of the curve quantization: the transformed trace plus diagnostics.
#[derive(Debug, Clone)]
pub struct QuantizedTrace {
    pub trace: CurveTrace,
    /// Tapered input actually quantized (needed for the pairing).
    pub tapered_input: CurveTrace,
    /// Fraction of spectral mass above the frequency cap exceeded 1%.
    pub aliasing: bool,
}

/// Kohn-Nirenberg quantization on the curve: taper (open curves), Fourier
/// transform, multiply mode xi_k by a(s, sigma_k) with sigma_k = xi_k /
/// lambda under the smooth cap, transform back with the s-dependence applied
/// on the left.
pub fn quantize_on_curve(a: &Symbol, t: &CurveTrace, taper: &Taper) -> QuantizedTrace {
    let n = t.n_nodes();
    let lambda = t.lambda;
    let l = t.length;
    // Tapered input on the periodic representation.
    let mut tapered = t.clone();
    if !t.closed {
        for k in 0..n {
            let w = taper.weight(t.node_s(k), l);
            tapered.values[k] *= w;
        }
    }
    // If the symbol has no sigma-dependence, quantization is pointwise
    // multiplication (identity in frequency); this keeps a == 1 exact and
    // makes the frequency cap (hence the aliasing guard) irrelevant.
    let mut aliasing = false;
    let values: Vec<Complex64> = match a {
        Symbol::Multiplication { v } => (0..n)
            .map(|m| tapered.values[m] * v.eval(t.node_s(m)))
            .collect(),
        _ => {
            // Periodic array: closed curves use all n nodes; open curves drop
            // the duplicate endpoint (tapered to zero anyway).
            let n_p = if t.closed { n } else { n - 1 };
            let mut buf: Vec<Complex64> = tapered.values[..n_p].to_vec();
            let mut planner = FftPlanner::new();
            planner.plan_fft_forward(n_p).process(&mut buf);

            let signed = |k: usize| -> i64 {
                if k <= n_p / 2 {
                    k as i64
                } else {
                    k as i64 - n_p as i64
                }
            };
            // Spectral mass above the cap (aliasing guard).
            let total: f64 = buf.iter().map(|c| c.norm_sqr()).sum();
            let mut above = 0.0;
            for (k, c) in buf.iter().enumerate() {
                let sigma = 2.0 * std::f64::consts::PI * signed(k) as f64 / (l * lambda);
                if sigma.abs() > 1.0 + EPS0 {
                    above += c.norm_sqr();
                }
            }
            aliasing = total > 0.0 && above > 0.01 * total;
            // v(s_m) = sum_k a(s_m, sigma_k) cap(sigma_k) u_hat_k e^{i xi_k s_m} / n_p.
            let mut out = vec![Complex64::new(0.0, 0.0); n_p];
            for (k, c) in buf.iter().enumerate() {
                if c.norm_sqr() == 0.0 {
                    continue;
                }
                let sk = signed(k);
                let sigma = 2.0 * std::f64::consts::PI * sk as f64 / (l * lambda);
                let capped = cap(sigma);
                if capped == 0.0 {
                    continue;
                }
                let sigma_eval = sigma.clamp(-1.0, 1.0);
                let phase = 2.0 * std::f64::consts::PI * sk as f64 / n_p as f64;
                for (m, o) in out.iter_mut().enumerate() {
                    let a_val = a.eval(t.length * m as f64 / n_p as f64, sigma_eval);
                    *o += c * capped * a_val * Complex64::from_polar(1.0, phase * m as f64);
                }
            }
            let scale = 1.0 / n_p as f64;
            let mut values: Vec<Complex64> = out.into_iter().map(|c| c * scale).collect();
            if !t.closed {
                // Restore the duplicate endpoint node (periodic image of s=0).
                values.push(values[0]);
            }
            values
        }
    };
    QuantizedTrace {
        trace: CurveTrace {
            j: t.j,
            lambda,
            values,
            length: l,
            closed: t.closed,
        },
        tapered_input: tapered,
        aliasing,
    }
}

/// One restricted matrix element <Op(a) u_j, u_j>_{L^2(H)}.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MatrixElementRecord {
    pub j: usize,
    pub lambda: f64,
    /// Re <Op(a) (taper u), taper u>.
    pub value: f64,
    /// Untapered restricted mass ||u_j||^2_{L^2(H)}.
    pub norm_sq: f64,
    pub symbol_id: String,
    pub taper_id: String,
    pub aliasing: bool,
}

pub fn symbol_id(a: &Symbol) -> String {
    let json = serde_json::to_string(a).expect("symbol serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let digest = hasher.finalize();
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn matrix_element(
    a: &Symbol,
    batch: &SpectralBatch,
    domain: &crate::geometry::Domain,
    h: &Hypersurface,
    j: usize,
    taper: &Taper,
) -> Result<MatrixElementRecord, RestrictionError> {
    let n_s = default_n_s(batch.frequencies[j.min(batch.len().saturating_sub(1))], h.length());
    matrix_element_with_nodes(a, batch, domain, h, j, taper, n_s)
}

pub fn matrix_element_with_nodes(
    a: &Symbol,
    batch: &SpectralBatch,
    domain: &crate::geometry::Domain,
    h: &Hypersurface,
    j: usize,
    taper: &Taper,
    n_s: usize,
) -> Result<MatrixElementRecord, RestrictionError> {
    let t = trace_on_curve(batch, domain, h, j, n_s)?;
    let norm_sq = l2_on_curve(&t, |_| 1.0);
    let q = quantize_on_curve(a, &t, taper);
    let value = inner_on_curve(&q.trace, &q.tapered_input).re;
    Ok(MatrixElementRecord {
        j,
        lambda: t.lambda,
        value,
        norm_sq,
        symbol_id: symbol_id(a),
        taper_id: taper.id(),
        aliasing: q.aliasing,
    })
}
