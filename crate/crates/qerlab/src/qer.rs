//! Restricted quantum-ergodicity statistics: Cesaro means, variance ladders,
//! exceptional-set extraction, and side-by-side symmetric-vs-generic reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Domain, Hypersurface};
use crate::restriction::{matrix_element, symbol_id, MatrixElementRecord, RestrictionError, Taper};
use crate::spectral::{Parity, SpectralBatch};
use crate::symbols::{omega, Symbol};
use crate::symmetry::{symmetry_measure, SymmetryParams, SymmetryVerdict};

/// Deviation-threshold ladder, as multiples of |omega(a)|.
pub const THETA_LADDER: [f64; 3] = [0.25, 0.5, 1.0];

/// Cesaro means E(N) and variance sums S(N) over increasing prefixes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladders {
    pub n_values: Vec<usize>,
    pub e: Vec<f64>,
    pub s: Vec<f64>,
}

/// E(N) = prefix mean of the matrix-element values; S(N) = prefix mean of
/// squared deviations from the reference omega.  Records must be sorted by
/// frequency and the ladder must be increasing within range.
pub fn cesaro_and_variance(
    records: &[MatrixElementRecord],
    omega_ref: f64,
    ladder: &[usize],
) -> Ladders {
    assert!(
        records.windows(2).all(|w| w[0].lambda <= w[1].lambda),
        "records must be sorted by frequency"
    );
    assert!(
        ladder.windows(2).all(|w| w[0] < w[1]),
        "ladder must be increasing"
    );
    assert!(ladder.last().is_none_or(|&n| n <= records.len() && n > 0));
    let mut e = Vec::with_capacity(ladder.len());
    let mut s = Vec::with_capacity(ladder.len());
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut next = 0usize;
    for (count, r) in records.iter().enumerate() {
        sum += r.value;
        let d = r.value - omega_ref;
        sum_sq += d * d;
        while next < ladder.len() && ladder[next] == count + 1 {
            e.push(sum / (count + 1) as f64);
            s.push(sum_sq / (count + 1) as f64);
            next += 1;
        }
    }
    Ladders {
        n_values: ladder.to_vec(),
        e,
        s,
    }
}

/// Flagged fraction of one dyadic frequency window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFraction {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub flagged: usize,
    pub total: usize,
}

impl WindowFraction {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.flagged as f64 / self.total as f64
        }
    }
}

/// Finite-spectrum surrogate of the exceptional (non-equidistributing) set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalSet {
    pub theta: f64,
    /// Mode indices j with |value_j - omega| > theta.
    pub flagged: Vec<usize>,
    pub fraction: f64,
    /// Flagged fraction per dyadic frequency window.
    pub windows: Vec<WindowFraction>,
}

pub fn extract_density_one(
    records: &[MatrixElementRecord],
    omega_ref: f64,
    theta: f64,
) -> ExceptionalSet {
    assert!(theta > 0.0);
    let flagged: Vec<usize> = records
        .iter()
        .filter(|r| (r.value - omega_ref).abs() > theta)
        .map(|r| r.j)
        .collect();
    let fraction = if records.is_empty() {
        0.0
    } else {
        flagged.len() as f64 / records.len() as f64
    };
    let mut windows = Vec::new();
    if let Some(first) = records.first() {
        let lambda_max = records.iter().fold(0.0f64, |m, r| m.max(r.lambda));
        let mut lo = first.lambda.max(1e-12);
        while lo <= lambda_max {
            let hi = 2.0 * lo;
            let in_window = records
                .iter()
                .filter(|r| r.lambda >= lo && r.lambda < hi)
                .collect::<Vec<_>>();
            let flagged_in = in_window
                .iter()
                .filter(|r| (r.value - omega_ref).abs() > theta)
                .count();
            windows.push(WindowFraction {
                lambda_lo: lo,
                lambda_hi: hi,
                flagged: flagged_in,
                total: in_window.len(),
            });
            lo = hi;
        }
    }
    ExceptionalSet {
        theta,
        flagged,
        fraction,
        windows,
    }
}

/// Equal-width histogram of the matrix-element values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64], n_bins: usize) -> Histogram {
    assert!(n_bins > 0);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0usize; n_bins];
    if values.is_empty() || !(hi > lo) {
        if !values.is_empty() {
            counts[0] = values.len();
        }
        return Histogram {
            lo: lo.min(hi),
            hi: hi.max(lo),
            counts,
        };
    }
    for &v in values {
        let b = (((v - lo) / (hi - lo) * n_bins as f64) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Histogram { lo, hi, counts }
}

/// Full statistics for one (symbol, hypersurface) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QerReport {
    pub symbol_id: String,
    pub hypersurface: Hypersurface,
    pub omega: f64,
    pub ladders: Ladders,
    pub exceptional: Vec<ExceptionalSet>,
    pub value_histogram: Histogram,
    pub records: Vec<MatrixElementRecord>,
    /// Per-parity Cesaro means, when the batch carries class labels.
    pub class_means: Vec<(Parity, f64, usize)>,
    pub symmetry: Option<SymmetryVerdict>,
}

/// Default N-ladder: quarter, half, and full batch.
pub fn default_ladder(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = [n / 4, n / 2, n]
        .into_iter()
        .filter(|&k| k > 0)
        .collect();
    v.dedup();
    v
}

/// Compute the restricted matrix elements of all batch modes on one curve,
/// sorted by frequency.  Parallel over modes with index-ordered collection.
pub fn restricted_records(
    a: &Symbol,
    batch: &SpectralBatch,
    domain: &Domain,
    h: &Hypersurface,
    taper: &Taper,
) -> Result<Vec<MatrixElementRecord>, RestrictionError> {
    (0..batch.len())
        .into_par_iter()
        .map(|j| matrix_element(a, batch, domain, h, j, taper))
        .collect()
}

/// Assemble the report for one curve.  `symmetry_samples = 0` skips the
/// classical symmetry-measure estimate.
#[allow(clippy::too_many_arguments)]
pub fn qer_report(
    a: &Symbol,
    batch: &SpectralBatch,
    domain: &Domain,
    h: &Hypersurface,
    taper: &Taper,
    symmetry_samples: usize,
    params: &SymmetryParams,
    seed: u64,
) -> Result<QerReport, RestrictionError> {
    let records = restricted_records(a, batch, domain, h, taper)?;
    let omega_ref = omega(a, domain, h, None).expect("omega quadrature");
    let ladder = default_ladder(records.len());
    let ladders = cesaro_and_variance(&records, omega_ref, &ladder);
    let theta_scale = omega_ref.abs().max(1e-12);
    let exceptional = THETA_LADDER
        .iter()
        .map(|&t| extract_density_one(&records, omega_ref, t * theta_scale))
        .collect();
    let values: Vec<f64> = records.iter().map(|r| r.value).collect();
    let mut class_means = Vec::new();
    for parity in [Parity::Even, Parity::Odd, Parity::Mixed] {
        let class: Vec<f64> = records
            .iter()
            .filter(|r| batch.parity[r.j] == parity)
            .map(|r| r.value)
            .collect();
        if !class.is_empty() {
            class_means.push((
                parity,
                class.iter().sum::<f64>() / class.len() as f64,
                class.len(),
            ));
        }
    }
    let symmetry = if symmetry_samples >= 100 {
        Some(symmetry_measure(domain, h, symmetry_samples, params, seed))
    } else {
        None
    };
    Ok(QerReport {
        symbol_id: symbol_id(a),
        hypersurface: h.clone(),
        omega: omega_ref,
        ladders,
        exceptional,
        value_histogram: histogram(&values, 24),
        records,
        class_means,
        symmetry,
    })
}

/// Side-by-side reports for a symmetric and a generic curve on the same
/// domain and spectral batch.
#[allow(clippy::too_many_arguments)]
pub fn dichotomy_report(
    domain: &Domain,
    h_sym: &Hypersurface,
    h_generic: &Hypersurface,
    a: &Symbol,
    batch: &SpectralBatch,
    taper: &Taper,
    symmetry_samples: usize,
    seed: u64,
) -> Result<(QerReport, QerReport), RestrictionError> {
    let params = SymmetryParams::default();
    let sym = qer_report(a, batch, domain, h_sym, taper, symmetry_samples, &params, seed)?;
    let generic = qer_report(
        a,
        batch,
        domain,
        h_generic,
        taper,
        symmetry_samples,
        &params,
        seed,
    )?;
    Ok((sym, generic))
}
