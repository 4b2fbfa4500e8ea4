//! Monte Carlo estimation of the measure of microlocal reflection symmetry,
//! and coincidence detection between the reflection maps conjugated along the
//! orbit, with runners for the curved-hypersurface case studies.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rayon::prelude::*;

use crate::dynamics::{
    self, CrossSectionPoint, DynamicsError,
};
use crate::geometry::{Domain, Hypersurface};

/// Tolerances at which the symmetry estimate is reported alongside the
/// primary one (the event is an exact-equality set; any numerical measure is
/// tolerance-dependent).
pub const TOL_LADDER: [f64; 3] = [1e-4, 1e-6, 1e-8];

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SymmetryParams {
    /// Number of forward returns searched (backward returns are covered by
    /// running the time-reversed point).
    pub j_max: usize,
    /// Orbit horizon per direction.
    pub t_max: f64,
    /// Primary match tolerance in the scaled phase metric.
    pub tol_match: f64,
}

impl Default for SymmetryParams {
    fn default() -> Self {
        SymmetryParams {
            j_max: 6,
            t_max: 50.0,
            tol_match: 1e-6,
        }
    }
}

/// Outcome of the per-sample symmetry detector.
#[derive(Debug, Clone, Copy)]
pub enum IndicatorOutcome {
    /// Smallest phase mismatch over all searched returns, with the witness
    /// (j, k): j-th return of the orbit, k-th return of the reflected orbit.
    Detected { mismatch: f64, witness: (usize, usize) },
    /// No return admitted a comparison (empty orbit within the horizon);
    /// treated as censored in the estimate, since recurrence guarantees the
    /// set of truly non-returning points is null and the miss is a horizon
    /// artifact (near-tangential orbits whose crossings are all grazing).
    NoReturns,
    /// The sample's orbit was cut short (corner hit) before any usable return.
    Censored,
}

/// Smallest over j (both time directions) of the phase distance between
/// r_H G^{T^(j)} q and G^{T^(j)} r_H q; the symmetry indicator at tolerance
/// tol is "mismatch <= tol".
pub fn symmetry_indicator(
    domain: &Domain,
    h: &Hypersurface,
    q: &CrossSectionPoint,
    params: &SymmetryParams,
) -> IndicatorOutcome {
    if q.in_band() {
        return IndicatorOutcome::Censored;
    }
    let mut best: Option<(f64, (usize, usize))> = None;
    let mut any_return = false;
    let mut censored = false;
    // Forward search on q and on its time reversal (covering j < 0).
    for base in [*q, q.reversed()] {
        match directional_search(domain, h, &base, params) {
            Ok(Some((mismatch, witness))) => {
                any_return = true;
                if best.map_or(true, |(m, _)| mismatch < m) {
                    best = Some((mismatch, witness));
                }
            }
            Ok(None) => {}
            Err(DynamicsError::CornerHit { .. }) => censored = true,
            Err(_) => censored = true,
        }
    }
    match best {
        Some((mismatch, witness)) => IndicatorOutcome::Detected { mismatch, witness },
        None if censored => IndicatorOutcome::Censored,
        None if !any_return => IndicatorOutcome::NoReturns,
        None => IndicatorOutcome::NoReturns,
    }
}

/// Forward-only search: returns the best (mismatch, (j, k)) over usable
/// returns, None if the orbit produced no usable return, Err on corner abort
/// with no prior usable return.
fn directional_search(
    domain: &Domain,
    h: &Hypersurface,
    q: &CrossSectionPoint,
    params: &SymmetryParams,
) -> Result<Option<(f64, (usize, usize))>, DynamicsError> {
    let p = h.lift_xi(q.s, q.sigma, q.side)?;
    let p_ref = h.lift_xi(q.s, q.sigma, -q.side)?;
    let rec = dynamics::impacts(domain, h, &p, params.t_max)?;
    let rec_ref = dynamics::impacts(domain, h, &p_ref, params.t_max)?;
    let mut best: Option<(f64, (usize, usize))> = None;
    let mut usable = 0usize;
    for (idx, imp) in rec.impacts.iter().take(params.j_max).enumerate() {
        if imp.grazing {
            continue;
        }
        usable += 1;
        let j = idx + 1;
        // r_H G^{T^(j)} q: reflect the j-th impact in place.
        let lhs = h
            .lift_xi(imp.s, imp.sigma.clamp(-1.0, 1.0), -imp.side)
            .expect("impact coordinates in range");
        // G^{T^(j)} r_H q: flow the reflected start to the same time.
        let rhs = match dynamics::flow(domain, &p_ref, imp.t) {
            Ok(x) => x,
            Err(_) => continue,
        };
        let d = dynamics::phase_distance(domain, &lhs, &rhs);
        // Witness k: the return index of the reflected orbit nearest in time.
        let k = rec_ref
            .impacts
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (a.t - imp.t).abs().total_cmp(&(b.t - imp.t).abs())
            })
            .map(|(i, _)| i + 1)
            .unwrap_or(0);
        if best.map_or(true, |(m, _)| d < m) {
            best = Some((d, (j, k)));
        }
    }
    if usable == 0 {
        if let Some(t) = rec.aborted {
            return Err(DynamicsError::CornerHit { t });
        }
        return Ok(None);
    }
    Ok(best)
}

/// Monte Carlo verdict on the measure of microlocal reflection symmetry.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SymmetryVerdict {
    /// Fraction of non-censored samples whose mismatch is <= tol_match.
    pub estimate: f64,
    /// Binomial standard error of the estimate.
    pub stderr: f64,
    /// Non-censored sample count entering the estimate.
    pub samples: usize,
    pub censored_fraction: f64,
    /// Estimates at the reporting tolerance ladder.
    pub estimates_by_tol: Vec<(f64, f64)>,
    /// Sorted (j, k, count) witness histogram over detected samples at
    /// tol_match.
    pub witness_histogram: Vec<(usize, usize, usize)>,
    pub params: SymmetryParams,
    /// Set when the censored fraction exceeds 20%.
    pub low_confidence: bool,
}

impl SymmetryVerdict {
    fn from_outcomes(outcomes: &[IndicatorOutcome], params: &SymmetryParams) -> Self {
        let total = outcomes.len();
        let mut kept = 0usize;
        let mut hits = 0usize;
        let mut hits_by_tol = [0usize; TOL_LADDER.len()];
        let mut histogram: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for out in outcomes {
            match out {
                IndicatorOutcome::Censored | IndicatorOutcome::NoReturns => {}
                IndicatorOutcome::Detected { mismatch, witness } => {
                    kept += 1;
                    if *mismatch <= params.tol_match {
                        hits += 1;
                        *histogram.entry(*witness).or_insert(0) += 1;
                    }
                    for (slot, tol) in hits_by_tol.iter_mut().zip(TOL_LADDER) {
                        if *mismatch <= tol {
                            *slot += 1;
                        }
                    }
                }
            }
        }
        assert!(kept > 0, "all samples censored");
        let estimate = hits as f64 / kept as f64;
        let stderr = (estimate * (1.0 - estimate) / kept as f64).sqrt();
        let censored_fraction = 1.0 - kept as f64 / total as f64;
        SymmetryVerdict {
            estimate,
            stderr,
            samples: kept,
            censored_fraction,
            estimates_by_tol: TOL_LADDER
                .iter()
                .zip(hits_by_tol)
                .map(|(&tol, c)| (tol, c as f64 / kept as f64))
                .collect(),
            witness_histogram: histogram
                .into_iter()
                .map(|((j, k), c)| (j, k, c))
                .collect(),
            params: *params,
            low_confidence: censored_fraction > 0.2,
        }
    }
}

/// Estimate the symmetry measure by sampling the section measure, sheet and
/// coball coordinates uniform.  Deterministic in the seed and independent of
/// the worker count (indexed sample streams, fixed-order reduction).
pub fn symmetry_measure(
    domain: &Domain,
    h: &Hypersurface,
    n_samples: usize,
    params: &SymmetryParams,
    seed: u64,
) -> SymmetryVerdict {
    assert!(n_samples >= 100);
    let outcomes: Vec<IndicatorOutcome> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                seed ^ 0x5851_f42d_4c95_7f2du64.wrapping_mul(i as u64 + 1),
            );
            let q = dynamics::sample_mu_lh(h, &mut rng);
            symmetry_indicator(domain, h, &q, params)
        })
        .collect();
    SymmetryVerdict::from_outcomes(&outcomes, params)
}

/// Curved-hypersurface case studies on the modular surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum HhpCase {
    Circle,
    Horocycle,
    ClosedGeodesic,
}

/// One row of the left/right return-map comparison table: the first few
/// one-sided returns from each sheet over the same base coordinates.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ReturnComparisonRow {
    pub s: f64,
    pub sigma: f64,
    /// (s', sigma', T) per return index, + sheet.
    pub plus: Vec<(f64, f64, f64)>,
    /// Same for the - sheet.
    pub minus: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CaseStudyReport {
    pub case: HhpCase,
    pub verdict: SymmetryVerdict,
    pub return_table: Vec<ReturnComparisonRow>,
}

/// Shipped configuration for a case study.
pub fn case_configuration(case: HhpCase) -> (Domain, Hypersurface) {
    let dom = Domain::modular_surface();
    let h = match case {
        HhpCase::Circle => Hypersurface::GeodesicCircle {
            center: [0.0, 1.5],
            radius: 0.3,
            injectivity_radius: 0.33,
        },
        HhpCase::Horocycle => Hypersurface::ClosedHorocycle { height: 1.5 },
        HhpCase::ClosedGeodesic => Hypersurface::ClosedGeodesic {
            matrix: [[2, 1], [1, 1]],
        },
    };
    (dom, h)
}

/// Run a case study: symmetry measure plus a small left/right return table.
pub fn hhp_case_study(
    case: HhpCase,
    n_samples: usize,
    params: &SymmetryParams,
    seed: u64,
) -> CaseStudyReport {
    let (dom, h) = case_configuration(case);
    let verdict = symmetry_measure(&dom, &h, n_samples, params, seed);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut return_table = Vec::new();
    let n_rows = 5;
    let n_returns = params.j_max.min(4);
    while return_table.len() < n_rows {
        let q = dynamics::sample_mu_lh(&h, &mut rng);
        let side_returns = |side: i8| -> Option<Vec<(f64, f64, f64)>> {
            let mut rows = Vec::new();
            for j in 1..=n_returns {
                match dynamics::one_sided_return(&dom, &h, q.s, q.sigma, side, j, params.t_max) {
                    Ok(r) => rows.push(r),
                    Err(_) => return None,
                }
            }
            Some(rows)
        };
        let (Some(plus), Some(minus)) = (side_returns(1), side_returns(-1)) else {
            continue;
        };
        return_table.push(ReturnComparisonRow {
            s: q.s,
            sigma: q.sigma,
            plus,
            minus,
        });
    }
    CaseStudyReport {
        case,
        verdict,
        return_table,
    }
}
