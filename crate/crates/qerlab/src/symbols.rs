//! Symbols a(s, sigma) on the coball bundle of H, the fold weight gamma, the
//! smooth aperture cutoffs, the limit functional omega, and the dynamically
//! averaged symbols built from impact records.

use thiserror::Error;

use crate::dynamics::{self, DynamicsError};
use crate::geometry::{dot, Domain, Hypersurface, PhasePoint};

#[derive(Debug, Error)]
pub enum SymbolError {
    #[error("quadrature failed to converge: last relative change {rel:.3e}")]
    QuadratureDivergence { rel: f64 },
    #[error("invalid cutoff aperture epsilon = {0}")]
    InvalidEpsilon(f64),
}

/// Scalar profile V(s) along the curve parameter, periodic with the given
/// period (open curves simply never evaluate past their length).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Profile {
    Constant(f64),
    /// Catmull-Rom cubic through uniform samples at s = k * period / n,
    /// wrapped periodically.
    Cubic { values: Vec<f64>, period: f64 },
}

/// Catmull-Rom interpolation through p0..p3 at t in [0,1] between p1 and p2.
fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    let m1 = 0.5 * (p2 - p0);
    let m2 = 0.5 * (p3 - p1);
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * p1
        + (t3 - 2.0 * t2 + t) * m1
        + (-2.0 * t3 + 3.0 * t2) * p2
        + (t3 - t2) * m2
}

impl Profile {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Cubic { values, period } => {
                let n = values.len();
                assert!(n >= 2 && *period > 0.0);
                let u = (s / period * n as f64).rem_euclid(n as f64);
                let i = (u.floor() as usize).min(n - 1);
                let t = u - i as f64;
                let at = |k: isize| values[(k.rem_euclid(n as isize)) as usize];
                let i = i as isize;
                catmull_rom(at(i - 1), at(i), at(i + 1), at(i + 2), t)
            }
        }
    }

    fn knot_count(&self) -> usize {
        match self {
            Profile::Constant(_) => 1,
            Profile::Cubic { values, .. } => values.len(),
        }
    }

    fn sup(&self) -> f64 {
        match self {
            Profile::Constant(c) => c.abs(),
            Profile::Cubic { values, period } => {
                let fine = values.len() * 16;
                (0..fine)
                    .map(|k| self.eval(period * k as f64 / fine as f64).abs())
                    .fold(0.0, f64::max)
                    * (1.0 + 1e-6)
            }
        }
    }
}

/// Symbol on B*H: bounded function of (s, sigma), |sigma| <= 1.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Symbol {
    /// a(s, sigma) = V(s).
    Multiplication { v: Profile },
    /// a(s, sigma) = V(s) * g(sigma) with g a polynomial (ascending coeffs).
    Separable { v: Profile, g: Vec<f64> },
    /// Row-major ns x nsigma grid over [0, period) x [-1, 1], bicubic
    /// interpolation (periodic in s, clamped in sigma).
    Tabulated {
        values: Vec<f64>,
        ns: usize,
        nsigma: usize,
        period: f64,
    },
}

impl Symbol {
    pub fn constant(c: f64) -> Self {
        Symbol::Multiplication {
            v: Profile::Constant(c),
        }
    }

    pub fn eval(&self, s: f64, sigma: f64) -> f64 {
        match self {
            Symbol::Multiplication { v } => v.eval(s),
            Symbol::Separable { v, g } => {
                let mut p = 0.0;
                for &c in g.iter().rev() {
                    p = p * sigma + c;
                }
                v.eval(s) * p
            }
            Symbol::Tabulated {
                values,
                ns,
                nsigma,
                period,
            } => {
                let (ns, nm) = (*ns, *nsigma);
                assert!(ns >= 2 && nm >= 2 && values.len() == ns * nm);
                let u = (s / period * ns as f64).rem_euclid(ns as f64);
                let i = (u.floor() as usize).min(ns - 1) as isize;
                let tu = u - i as f64;
                let w = (sigma.clamp(-1.0, 1.0) + 1.0) / 2.0 * (nm - 1) as f64;
                let j = (w.floor() as usize).min(nm - 2) as isize;
                let tw = w - j as f64;
                let at = |a: isize, b: isize| {
                    let a = a.rem_euclid(ns as isize) as usize;
                    let b = b.clamp(0, nm as isize - 1) as usize;
                    values[a * nm + b]
                };
                let row = |a: isize| {
                    catmull_rom(at(a, j - 1), at(a, j), at(a, j + 1), at(a, j + 2), tw)
                };
                catmull_rom(row(i - 1), row(i), row(i + 1), row(i + 2), tu)
            }
        }
    }

    /// Conservative supremum bound, dense-sampled for interpolated variants.
    pub fn sup_norm(&self) -> f64 {
        match self {
            Symbol::Multiplication { v } => v.sup(),
            Symbol::Separable { v, g } => {
                let gmax = (0..=512)
                    .map(|k| {
                        let sigma = -1.0 + 2.0 * k as f64 / 512.0;
                        let mut p = 0.0;
                        for &c in g.iter().rev() {
                            p = p * sigma + c;
                        }
                        p.abs()
                    })
                    .fold(0.0, f64::max);
                v.sup() * gmax * (1.0 + 1e-6)
            }
            Symbol::Tabulated {
                ns, nsigma, period, ..
            } => {
                let (fs, fm) = (ns * 8, nsigma * 8);
                let mut m = 0.0f64;
                for a in 0..fs {
                    for b in 0..=fm {
                        let s = period * a as f64 / fs as f64;
                        let sigma = -1.0 + 2.0 * b as f64 / fm as f64;
                        m = m.max(self.eval(s, sigma).abs());
                    }
                }
                m * (1.0 + 1e-6)
            }
        }
    }

    /// Interior knots of the s-dependence within one period, for composite
    /// quadrature.
    fn s_knots(&self, length: f64) -> usize {
        match self {
            Symbol::Multiplication { v } | Symbol::Separable { v, .. } => v.knot_count(),
            Symbol::Tabulated { ns, .. } => *ns,
        }
        .max(1)
            + (length.ceil() as usize)
    }
}

/// Fold weight gamma_{B*H}(sigma) = sqrt(1 - sigma^2).
pub fn gamma(sigma: f64) -> f64 {
    (1.0 - sigma * sigma).max(0.0).sqrt()
}

/// Full weight on T*_H M coordinates (sigma, eta_n): |eta_n| / |(sigma, eta_n)|.
pub fn gamma_full(sigma: f64, eta_n: f64) -> f64 {
    let r = (sigma * sigma + eta_n * eta_n).sqrt();
    if r == 0.0 {
        0.0
    } else {
        eta_n.abs() / r
    }
}

/// Aperture of the smooth cutoffs around the fold / conormal sets.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CutoffParams {
    pub epsilon: f64,
}

impl CutoffParams {
    pub fn new(epsilon: f64) -> Result<Self, SymbolError> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(SymbolError::InvalidEpsilon(epsilon));
        }
        Ok(CutoffParams { epsilon })
    }
}

/// C^2 quintic step: 0 at 0, 1 at 1, monotone, flat to second order at both
/// ends.
fn smoothstep5(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Antiderivative of smoothstep5 with value 0 at 0 (and 1/2 at 1).
fn smoothstep5_integral(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 0.5 + (t - 1.0);
    }
    let t4 = t * t * t * t;
    t4 * (2.5 - 3.0 * t + t * t)
}

/// Shoulder bump psi_eps: 1 on [0, eps/2], 0 beyond eps, C^2 monotone between.
pub fn psi_eps(y: f64, epsilon: f64) -> f64 {
    let y = y.abs();
    if y <= epsilon / 2.0 {
        1.0
    } else if y >= epsilon {
        0.0
    } else {
        1.0 - smoothstep5((y - epsilon / 2.0) / (epsilon / 2.0))
    }
}

/// Collar half-width around H inside which the cutoffs are supported.
fn collar_halfwidth(h: &Hypersurface) -> f64 {
    0.2 * h.length()
}

/// Fermi-type decomposition of a phase point near H: (y_n, sigma, eta_n).
fn fermi_components(h: &Hypersurface, p: &PhasePoint) -> (f64, f64, f64) {
    let y_n = h.signed_fermi(p.pos);
    let s = h.arclength_of(p.pos);
    let f = h.frame_unchecked(s);
    (y_n, dot(p.dir, f.tangent), dot(p.dir, f.normal))
}

/// Tangential cutoff: 1 in the eps/2-aperture cone around T*H (and on H),
/// 0 outside the eps-cone or outside the collar.
pub fn cutoff_tan(h: &Hypersurface, p: &PhasePoint, cut: &CutoffParams) -> f64 {
    let (y_n, sigma, eta_n) = fermi_components(h, p);
    if y_n.abs() >= collar_halfwidth(h) {
        return 0.0;
    }
    let ratio = eta_n * eta_n / (sigma * sigma + eta_n * eta_n).max(1e-300);
    psi_eps(ratio, cut.epsilon) * psi_eps(y_n, cut.epsilon)
}

/// Conormal cutoff: 1 near N*H, 0 outside the eps-cone or the collar.
pub fn cutoff_norm(h: &Hypersurface, p: &PhasePoint, cut: &CutoffParams) -> f64 {
    let (y_n, sigma, eta_n) = fermi_components(h, p);
    if y_n.abs() >= collar_halfwidth(h) {
        return 0.0;
    }
    let ratio = sigma * sigma / (sigma * sigma + eta_n * eta_n).max(1e-300);
    psi_eps(ratio, cut.epsilon) * psi_eps(y_n, cut.epsilon)
}

/// Tangential cutoff restricted to the section (y_n = 0, unit covector):
/// the aperture ratio reduces to 1 - sigma^2.
pub fn cutoff_tan_section(sigma: f64, cut: &CutoffParams) -> f64 {
    psi_eps((1.0 - sigma * sigma).max(0.0), cut.epsilon)
}

/// Half-width of the averaging window's shoulders.
pub const CHI_DELTA: f64 = 0.1;

/// Averaging window chi: even, C^2, supported in (-(1+delta), 1+delta),
/// identically 1/2 on [-(1-delta), 1-delta], unit integral.
pub fn chi_window(u: f64) -> f64 {
    let u = u.abs();
    if u <= 1.0 - CHI_DELTA {
        0.5
    } else if u >= 1.0 + CHI_DELTA {
        0.0
    } else {
        0.5 * (1.0 - smoothstep5((u - (1.0 - CHI_DELTA)) / (2.0 * CHI_DELTA)))
    }
}

/// Exact antiderivative of chi_window with limits 0 at -inf and 1 at +inf.
pub fn chi_window_antiderivative(u: f64) -> f64 {
    if u < 0.0 {
        return 1.0 - chi_window_antiderivative(-u);
    }
    let a = 1.0 - CHI_DELTA;
    if u <= a {
        0.5 + 0.5 * u
    } else if u >= 1.0 + CHI_DELTA {
        1.0
    } else {
        let tau = (u - a) / (2.0 * CHI_DELTA);
        0.5 + 0.5 * a + CHI_DELTA * (tau - smoothstep5_integral(tau))
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-based initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Adaptive Gauss-Legendre on [a, b]: double the order until the relative
/// change drops below 1e-11.
fn integrate_adaptive(a: f64, b: f64, f: &dyn Fn(f64) -> f64) -> Result<f64, SymbolError> {
    let mut n = 8;
    let mut prev = f64::NAN;
    while n <= 4096 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let val: f64 = gauss_legendre(n)
            .into_iter()
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half;
        if prev.is_finite() {
            let rel = (val - prev).abs() / (1.0 + val.abs());
            if rel < 1e-11 {
                return Ok(val);
            }
            if n == 4096 {
                return Err(SymbolError::QuadratureDivergence { rel });
            }
        }
        prev = val;
        n *= 2;
    }
    unreachable!()
}

/// The limit state omega(a) = 2 / vol(S*M) * int_{B*H} a gamma^{-1} ds dsigma,
/// with the tangential cutoff removed from the integrand when eps > 0
/// (omega((1 - chi_eps) a)).  The substitution sigma = sin(theta) absorbs the
/// endpoint singularity of gamma^{-1}.
pub fn omega(
    a: &Symbol,
    domain: &Domain,
    h: &Hypersurface,
    eps: Option<CutoffParams>,
) -> Result<f64, SymbolError> {
    let l = h.length();
    let vol = domain.liouville_volume();
    // theta-breakpoints: symbol sigma-knots plus cutoff shoulder edges.
    let mut thetas = vec![-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2];
    if let Symbol::Tabulated { nsigma, .. } = a {
        for j in 1..nsigma - 1 {
            let sigma = -1.0 + 2.0 * j as f64 / (*nsigma - 1) as f64;
            thetas.push(sigma.asin());
        }
    }
    if let Some(cut) = eps {
        for r in [cut.epsilon / 2.0, cut.epsilon] {
            let sigma = (1.0 - r).max(0.0).sqrt();
            thetas.push(sigma.asin());
            thetas.push(-(sigma.asin()));
        }
    }
    thetas.sort_by(f64::total_cmp);
    thetas.dedup_by(|x, y| (*x - *y).abs() < 1e-12);

    let inner = |s: f64| -> Result<f64, SymbolError> {
        let mut acc = 0.0;
        for w in thetas.windows(2) {
            acc += integrate_adaptive(w[0], w[1], &|theta: f64| {
                let sigma = theta.sin();
                let weight = match eps {
                    Some(cut) => 1.0 - cutoff_tan_section(sigma, &cut),
                    None => 1.0,
                };
                weight * a.eval(s, sigma)
            })?;
        }
        Ok(acc)
    };

    // Composite in s over the symbol's knot intervals (cubic per interval).
    let n_s = a.s_knots(l).max(4);
    let mut total = 0.0;
    for k in 0..n_s {
        let (s0, s1) = (l * k as f64 / n_s as f64, l * (k + 1) as f64 / n_s as f64);
        total += integrate_adaptive(s0, s1, &|s| inner(s).unwrap_or(f64::NAN))?;
    }
    Ok(2.0 / vol * total)
}

/// Value of a dynamically averaged symbol, with explicit censoring.
#[derive(Debug, Clone, Copy)]
pub struct AveragedValue {
    pub value: f64,
    /// True when the orbit was cut short inside the averaging window.
    pub censored: bool,
}

/// Signed impact times of the full (two-sided) orbit of p, with section
/// coordinates, out to |t| <= horizon.  Censoring covers either direction.
fn two_sided_impacts(
    domain: &Domain,
    h: &Hypersurface,
    p: &PhasePoint,
    horizon: f64,
) -> Result<(Vec<(f64, f64, f64)>, bool), DynamicsError> {
    let fwd = dynamics::impacts(domain, h, p, horizon)?;
    let bwd = dynamics::impacts(domain, h, &p.reverse(), horizon)?;
    let mut out: Vec<(f64, f64, f64)> = Vec::with_capacity(fwd.impacts.len() + bwd.impacts.len());
    for imp in bwd.impacts.iter().rev() {
        out.push((-imp.t, imp.s, -imp.sigma));
    }
    for imp in &fwd.impacts {
        out.push((imp.t, imp.s, imp.sigma));
    }
    Ok((out, fwd.aborted.is_some() || bwd.aborted.is_some()))
}

/// a_{T,eps}(p) = (1/T) sum_j ((1 - chi_eps^tan) gamma^{-1} a)(impact_j)
/// * chi(t_j / T), over impacts in both time directions.
pub fn time_avg_symbol(
    domain: &Domain,
    h: &Hypersurface,
    a: &Symbol,
    p: &PhasePoint,
    t_avg: f64,
    cut: &CutoffParams,
) -> Result<AveragedValue, DynamicsError> {
    assert!(t_avg > 0.0);
    assert!(
        cut.epsilon >= 2.0 * dynamics::SIGMA_BAND,
        "cutoff aperture must dominate the dynamics band"
    );
    let horizon = (1.0 + CHI_DELTA) * t_avg + 1e-9;
    let (times, censored) = two_sided_impacts(domain, h, p, horizon)?;
    let mut sum = 0.0;
    for &(t, s, sigma) in &times {
        sum += impact_weight(a, s, sigma, cut) * chi_window(t / t_avg);
    }
    Ok(AveragedValue {
        value: sum / t_avg,
        censored,
    })
}

/// The per-impact factor (1 - chi_eps^tan)(sigma) * gamma(sigma)^{-1} * a.
/// Vanishes identically inside the tangential band, so gamma^{-1} is bounded.
fn impact_weight(a: &Symbol, s: f64, sigma: f64, cut: &CutoffParams) -> f64 {
    let c = 1.0 - cutoff_tan_section(sigma, cut);
    if c == 0.0 {
        return 0.0;
    }
    c / gamma(sigma) * a.eval(s, sigma)
}

/// The window-coverage functional: sum over inter-impact intervals of the
/// exact integral of chi(t/T)/T.  Telescopes to 1 whenever the recorded orbit
/// covers the support of the window on both sides.
pub fn chi_bar(
    domain: &Domain,
    h: &Hypersurface,
    q: &dynamics::CrossSectionPoint,
    t_avg: f64,
) -> Result<AveragedValue, DynamicsError> {
    let p = h.lift_xi(q.s, q.sigma, q.side)?;
    // Scan well past the window support: certifying coverage needs one
    // recorded impact beyond each end of supp chi(t/T).
    let horizon = (1.0 + CHI_DELTA) * t_avg + 80.0;
    let (times, mut censored) = two_sided_impacts(domain, h, &p, horizon)?;
    // The base point itself is an impact at t = 0.
    let mut ts: Vec<f64> = times.iter().map(|&(t, _, _)| t).collect();
    ts.push(0.0);
    ts.sort_by(f64::total_cmp);
    if ts.first().map_or(true, |&t| t > -(1.0 + CHI_DELTA) * t_avg)
        || ts.last().map_or(true, |&t| t < (1.0 + CHI_DELTA) * t_avg)
    {
        censored = true;
    }
    let mut sum = 0.0;
    for w in ts.windows(2) {
        sum += chi_window_antiderivative(w[1] / t_avg) - chi_window_antiderivative(w[0] / t_avg);
    }
    Ok(AveragedValue {
        value: sum,
        censored,
    })
}

/// a_{T,R,eps}(p): trapezoid average of a_{T,eps} along the orbit over
/// [-R, R], computed from a single two-sided impact record by window shifts.
pub fn double_avg_symbol(
    domain: &Domain,
    h: &Hypersurface,
    a: &Symbol,
    p: &PhasePoint,
    t_avg: f64,
    r_avg: f64,
    cut: &CutoffParams,
) -> Result<AveragedValue, DynamicsError> {
    if r_avg == 0.0 {
        return time_avg_symbol(domain, h, a, p, t_avg, cut);
    }
    assert!(r_avg > 0.0);
    assert!(cut.epsilon >= 2.0 * dynamics::SIGMA_BAND);
    let horizon = r_avg + (1.0 + CHI_DELTA) * t_avg + 1e-9;
    let (times, censored) = two_sided_impacts(domain, h, p, horizon)?;
    let weights: Vec<(f64, f64)> = times
        .iter()
        .map(|&(t, s, sigma)| (t, impact_weight(a, s, sigma, cut)))
        .collect();
    let n = ((2.0 * r_avg / 0.25).ceil() as usize).max(32);
    let dr = 2.0 * r_avg / n as f64;
    let mut acc = 0.0;
    for k in 0..=n {
        let r = -r_avg + dr * k as f64;
        let shifted: f64 = weights
            .iter()
            .map(|&(t, w)| w * chi_window((t - r) / t_avg))
            .sum();
        let trap = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += trap * shifted / t_avg;
    }
    Ok(AveragedValue {
        value: acc / n as f64,
        censored,
    })
}

/// Monte Carlo statistics of a_{T,R,eps} over the Liouville measure.
#[derive(Debug, Clone, Copy)]
pub struct FieldStatistics {
    pub mean: f64,
    /// Mean squared deviation from the supplied reference value.
    pub variance: f64,
    pub stderr_mean: f64,
    pub samples: usize,
    pub censored_fraction: f64,
}

/// mu_L-average and variance of a_{T,R,eps} about omega_ref, deterministic in
/// the seed, fixed-order aggregation.
pub fn variance_over_sstarm(
    domain: &Domain,
    h: &Hypersurface,
    a: &Symbol,
    t_avg: f64,
    r_avg: f64,
    cut: &CutoffParams,
    omega_ref: f64,
    n_samples: usize,
    seed: u64,
) -> Result<FieldStatistics, DynamicsError> {
    use rand::SeedableRng;
    use rayon::prelude::*;
    let values: Vec<Option<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64
                    .wrapping_mul(i as u64 + 1)));
            let p = dynamics::sample_mu_l(domain, &mut rng);
            match double_avg_symbol(domain, h, a, &p, t_avg, r_avg, cut) {
                Ok(av) if !av.censored => Some(av.value),
                _ => None,
            }
        })
        .collect();
    let kept: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    let n = kept.len();
    assert!(n > 1, "all samples censored");
    let mean = kept.iter().sum::<f64>() / n as f64;
    let variance = kept.iter().map(|v| (v - omega_ref).powi(2)).sum::<f64>() / n as f64;
    let var_about_mean = kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(FieldStatistics {
        mean,
        variance,
        stderr_mean: (var_about_mean / n as f64).sqrt(),
        samples: n,
        censored_fraction: 1.0 - n as f64 / n_samples as f64,
    })
}

/// Convenience: statistics of a_{T,eps} (R = 0) for the mean identity.
pub fn mean_over_sstarm(
    domain: &Domain,
    h: &Hypersurface,
    a: &Symbol,
    t_avg: f64,
    cut: &CutoffParams,
    omega_ref: f64,
    n_samples: usize,
    seed: u64,
) -> Result<FieldStatistics, DynamicsError> {
    variance_over_sstarm(domain, h, a, t_avg, 0.0, cut, omega_ref, n_samples, seed)
}

/// Shifted-window evaluation used by the flow-covariance law: the sum at p
/// with the window recentred at r equals a_{T,eps}(G^r p).
pub fn time_avg_symbol_shifted(
    domain: &Domain,
    h: &Hypersurface,
    a: &Symbol,
    p: &PhasePoint,
    t_avg: f64,
    shift: f64,
    cut: &CutoffParams,
) -> Result<AveragedValue, DynamicsError> {
    let horizon = shift.abs() + (1.0 + CHI_DELTA) * t_avg + 1e-9;
    let (times, censored) = two_sided_impacts(domain, h, p, horizon)?;
    let mut sum = 0.0;
    for &(t, s, sigma) in &times {
        sum += impact_weight(a, s, sigma, cut) * chi_window((t - shift) / t_avg);
    }
    Ok(AveragedValue {
        value: sum / t_avg,
        censored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{sample_mu_l, sample_mu_lh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stadium() -> Domain {
        Domain::stadium(1.0, 1.0).unwrap()
    }

    fn chord() -> Hypersurface {
        Hypersurface::segment([0.2, -0.5], [0.5, 0.7])
    }

    fn bump_profile(l: f64) -> Profile {
        // Smooth positive profile sampled on 12 knots.
        let values = (0..12)
            .map(|k| {
                let s = l * k as f64 / 12.0;
                1.0 + 0.5 * (2.0 * std::f64::consts::PI * s / l).sin()
            })
            .collect();
        Profile::Cubic { values, period: l }
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma(0.0), 1.0);
        assert!((gamma(0.6) - 0.8).abs() < 1e-15);
        assert!((gamma_full(3.0, 4.0) - 0.8).abs() < 1e-15);
        assert_eq!(gamma(1.0), 0.0);
    }

    #[test]
    fn cutoff_examples() {
        let cut = CutoffParams::new(0.2).unwrap();
        let h = chord();
        // On T*H: tangential direction at an interior point.
        let f = h.frame(0.5).unwrap();
        let p_tan = PhasePoint::new(f.point, f.tangent);
        assert_eq!(cutoff_tan(&h, &p_tan, &cut), 1.0);
        // On N*H: normal direction.
        let p_norm = PhasePoint::new(f.point, f.normal);
        assert_eq!(cutoff_norm(&h, &p_norm, &cut), 1.0);
        assert_eq!(cutoff_tan(&h, &p_norm, &cut), 0.0);
        // Support edge of the section cutoff: 1 - sigma^2 = eps exactly.
        let sigma_edge = (1.0f64 - 0.2).sqrt();
        assert_eq!(cutoff_tan_section(sigma_edge, &cut), 0.0);
        // Plateau edge.
        let sigma_half = (1.0f64 - 0.1).sqrt();
        assert_eq!(cutoff_tan_section(sigma_half, &cut), 1.0);
        // Monotone shoulder.
        let mut prev = cutoff_tan_section(0.0, &cut);
        for k in 1..=100 {
            let v = cutoff_tan_section(k as f64 / 100.0, &cut);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn chi_window_properties() {
        assert_eq!(chi_window(0.0), 0.5);
        assert_eq!(chi_window(0.9), 0.5);
        assert_eq!(chi_window(1.1), 0.0);
        assert_eq!(chi_window(-0.3), chi_window(0.3));
        // Unit integral via the antiderivative.
        assert!((chi_window_antiderivative(2.0) - 1.0).abs() < 1e-15);
        assert!(chi_window_antiderivative(-2.0).abs() < 1e-15);
        // Antiderivative matches a fine midpoint sum.
        let n = 200_000;
        let (a, b) = (-1.5, 0.73);
        let dx = (b - a) / n as f64;
        let num: f64 = (0..n)
            .map(|k| chi_window(a + dx * (k as f64 + 0.5)))
            .sum::<f64>()
            * dx;
        let exact = chi_window_antiderivative(b) - chi_window_antiderivative(a);
        assert!((num - exact).abs() < 1e-9, "midpoint vs antiderivative: {num} vs {exact}");
    }

    #[test]
    fn omega_closed_forms() {
        let dom = stadium();
        // Unit-length segment on the waist axis: omega(1) = L / area.
        let h1 = Hypersurface::segment([0.2, 0.0], [1.2, 0.0]);
        let w = omega(&Symbol::constant(1.0), &dom, &h1, None).unwrap();
        let expect = 1.0 / (4.0 + std::f64::consts::PI);
        assert!((w - expect).abs() < 1e-10, "omega(1) = {w}, want {expect}");

        // Multiplication symbol: omega(V) = (1/area) * int V ds, oracle by a
        // fine midpoint rule.
        let h = chord();
        let l = h.length();
        let v = bump_profile(l);
        let a = Symbol::Multiplication { v: v.clone() };
        let wv = omega(&a, &dom, &h, None).unwrap();
        let n = 400_000;
        let int_v: f64 = (0..n)
            .map(|k| v.eval(l * (k as f64 + 0.5) / n as f64))
            .sum::<f64>()
            * l
            / n as f64;
        let expect_v = int_v / dom.area();
        assert!(
            (wv - expect_v).abs() < 1e-8,
            "omega(V) = {wv}, oracle {expect_v}"
        );

        // Odd symbol integrates to zero.
        let odd = Symbol::Separable {
            v: v.clone(),
            g: vec![0.0, 1.0],
        };
        let wo = omega(&odd, &dom, &h, None).unwrap();
        assert!(wo.abs() < 1e-12);
    }

    #[test]
    fn omega_cutoff_monotone_in_aperture() {
        let dom = stadium();
        let h = chord();
        let a = Symbol::constant(1.0);
        let full = omega(&a, &dom, &h, None).unwrap();
        let mut prev = 0.0;
        for eps in [0.2, 0.1, 0.05, 0.02] {
            let cut = CutoffParams::new(eps).unwrap();
            let w = omega(&a, &dom, &h, Some(cut)).unwrap();
            assert!(w > prev, "omega should grow as the aperture shrinks");
            assert!(w < full);
            prev = w;
        }
        // The removed mass is ~ 2 sqrt(eps) / pi of the total.
        let expected_gap = 2.0 * (0.02f64).sqrt() / std::f64::consts::PI * full;
        assert!((full - prev) < 1.5 * expected_gap, "gap {} vs ~{expected_gap}", full - prev);
    }

    #[test]
    fn tabulated_symbol_interpolates_samples() {
        let l = 2.0;
        let (ns, nm) = (16, 17);
        let f = |s: f64, sigma: f64| (s / l * std::f64::consts::PI).sin() + 0.3 * sigma * sigma;
        let mut values = Vec::new();
        for i in 0..ns {
            for j in 0..nm {
                let s = l * i as f64 / ns as f64;
                let sigma = -1.0 + 2.0 * j as f64 / (nm - 1) as f64;
                values.push(f(s, sigma));
            }
        }
        let a = Symbol::Tabulated {
            values,
            ns,
            nsigma: nm,
            period: l,
        };
        // Exact at the knots.
        for (i, j) in [(0usize, 0usize), (3, 5), (15, 16), (8, 8)] {
            let s = l * i as f64 / ns as f64;
            let sigma = -1.0 + 2.0 * j as f64 / (nm - 1) as f64;
            assert!((a.eval(s, sigma) - f(s, sigma)).abs() < 1e-12);
        }
        // Close in between for this smooth generator.
        let mut max_err = 0.0f64;
        for i in 0..200 {
            for j in 0..41 {
                let s = l * i as f64 / 200.0;
                let sigma = -1.0 + 2.0 * j as f64 / 40.0;
                max_err = max_err.max((a.eval(s, sigma) - f(s, sigma)).abs());
            }
        }
        // Clamped sigma-edges cost accuracy; interior knot spacing dominates
        // elsewhere.
        assert!(max_err < 0.05, "bicubic error {max_err}");
        assert!(a.sup_norm() >= 1.29);
    }

    #[test]
    fn chi_bar_is_one_on_section_points() {
        let dom = stadium();
        let h = chord();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        let mut max_dev = 0.0f64;
        while checked < 100 {
            let q = sample_mu_lh(&h, &mut rng);
            match chi_bar(&dom, &h, &q, 20.0) {
                Ok(av) if !av.censored => {
                    max_dev = max_dev.max((av.value - 1.0).abs());
                    checked += 1;
                }
                _ => continue,
            }
        }
        assert!(max_dev < 1e-3, "max |chi_bar - 1| = {max_dev:.3e}");
    }

    #[test]
    fn time_avg_mean_identity_small() {
        // MC average of a_{T,eps} over mu_L matches omega((1 - chi_eps) a)
        // within 3 standard errors (small pilot; the full check is part of
        // the acceptance suite).
        let dom = stadium();
        let h = chord();
        let cut = CutoffParams::new(0.2).unwrap();
        let a = Symbol::constant(1.0);
        let w = omega(&a, &dom, &h, Some(cut)).unwrap();
        let stats = mean_over_sstarm(&dom, &h, &a, 20.0, &cut, w, 20_000, 3).unwrap();
        let dev = (stats.mean - w).abs();
        assert!(
            dev <= 3.0 * stats.stderr_mean,
            "mean {} vs omega {} (3 SE = {})",
            stats.mean,
            w,
            3.0 * stats.stderr_mean
        );
        assert!(stats.censored_fraction < 0.05);
    }

    #[test]
    fn empty_window_gives_zero() {
        // A trajectory in the far cap never meets the short chord quickly.
        let dom = stadium();
        let h = Hypersurface::segment([1.5, -0.2], [1.5, 0.2]);
        let p = PhasePoint::from_angle(num_complex::Complex64::new(-1.5, 0.0), 1.3);
        let cut = CutoffParams::new(0.2).unwrap();
        let av = time_avg_symbol(&dom, &h, &Symbol::constant(1.0), &p, 0.05, &cut).unwrap();
        assert_eq!(av.value, 0.0);
    }

    #[test]
    fn sup_norm_bound_on_averages() {
        let dom = stadium();
        let h = chord();
        let cut = CutoffParams::new(0.2).unwrap();
        let l = h.length();
        let a = Symbol::Multiplication { v: bump_profile(l) };
        let bound_a = a.sup_norm();
        // gamma^{-1} on the support of (1 - chi_eps^tan): 1 - sigma^2 >= eps/2.
        let gamma_inv_sup = (cut.epsilon / 2.0).sqrt().recip();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut window_factor_max = 0.0f64;
        for _ in 0..200 {
            let p = sample_mu_l(&dom, &mut rng);
            let Ok(av) = time_avg_symbol(&dom, &h, &a, &p, 20.0, &cut) else {
                continue;
            };
            // Window mass factor measured on the same orbit.
            let unit = time_avg_symbol(&dom, &h, &Symbol::constant(1.0), &p, 20.0, &cut)
                .unwrap()
                .value;
            window_factor_max = window_factor_max.max(unit.abs());
            assert!(
                av.value.abs() <= gamma_inv_sup * (1.0 + CHI_DELTA) * bound_a + 1e-12,
                "|a_T| = {} exceeds C(eps) * sup|a|",
                av.value.abs()
            );
        }
        assert!(window_factor_max <= 1.0 + CHI_DELTA);
    }

    #[test]
    fn flow_covariance_of_time_average() {
        let dom = stadium();
        let h = chord();
        let cut = CutoffParams::new(0.2).unwrap();
        let a = Symbol::Multiplication {
            v: bump_profile(h.length()),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 25 {
            let p = sample_mu_l(&dom, &mut rng);
            let r = rng.gen_range(-3.0..3.0);
            let Ok(moved) = dynamics::flow(&dom, &p, r) else {
                continue;
            };
            let Ok(direct) = time_avg_symbol(&dom, &h, &a, &moved, 15.0, &cut) else {
                continue;
            };
            let Ok(shifted) = time_avg_symbol_shifted(&dom, &h, &a, &p, 15.0, r, &cut) else {
                continue;
            };
            if direct.censored || shifted.censored {
                continue;
            }
            assert!(
                (direct.value - shifted.value).abs() < 1e-8,
                "covariance violated: {} vs {}",
                direct.value,
                shifted.value
            );
            checked += 1;
        }
    }

    #[test]
    fn double_average_reduces_to_time_average_at_r_zero() {
        let dom = stadium();
        let h = chord();
        let cut = CutoffParams::new(0.2).unwrap();
        let a = Symbol::constant(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = sample_mu_l(&dom, &mut rng);
        let t = time_avg_symbol(&dom, &h, &a, &p, 12.0, &cut).unwrap();
        let d = double_avg_symbol(&dom, &h, &a, &p, 12.0, 0.0, &cut).unwrap();
        assert_eq!(t.value, d.value);
    }

    #[test]
    fn omega_linear_and_monotone() {
        let dom = stadium();
        let h = chord();
        let v = bump_profile(h.length());
        let a = Symbol::Multiplication { v: v.clone() };
        let w1 = omega(&a, &dom, &h, None).unwrap();
        // Linearity under scaling.
        let scaled = Symbol::Separable {
            v,
            g: vec![2.5],
        };
        let w2 = omega(&scaled, &dom, &h, None).unwrap();
        assert!((w2 - 2.5 * w1).abs() < 1e-10);
        // Monotonicity for nonnegative symbols: the bump profile is >= 0.5.
        assert!(w1 > 0.0);
    }
}
