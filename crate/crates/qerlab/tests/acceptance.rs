//! Acceptance gate: every criterion prints one pass/fail line and the suite
//! fails if any criterion does.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qerlab::dynamics;
use qerlab::geometry::{Domain, FuchsianGroup, Hypersurface, PhasePoint};
use qerlab::qer::{cesaro_and_variance, restricted_records};
use qerlab::restriction::{l2_on_curve, matrix_element_with_nodes, trace_on_curve, Taper};
use qerlab::spectral::{assemble_laplacian, eigensolve, weyl_check, BandMatrix, Grid, Parity, SpectralBatch};
use qerlab::symbols::{
    chi_bar, mean_over_sstarm, omega, variance_over_sstarm, CutoffParams, Profile, Symbol,
};
use qerlab::symmetry::{symmetry_measure, SymmetryParams};

fn stadium() -> Domain {
    Domain::Stadium {
        half_length: 1.0,
        cap_radius: 1.0,
    }
}

fn chord() -> Hypersurface {
    Hypersurface::segment([0.2, -0.5], [0.5, 0.7])
}

fn axis() -> Hypersurface {
    Hypersurface::segment([0.0, -1.0], [0.0, 1.0])
}

fn v_profile() -> Profile {
    Profile::Cubic {
        values: (0..12)
            .map(|k| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * k as f64 / 12.0).sin())
            .collect(),
        period: 1.0,
    }
}

fn stadium_batch() -> &'static (SpectralBatch, BandMatrix) {
    static CELL: OnceLock<(SpectralBatch, BandMatrix)> = OnceLock::new();
    CELL.get_or_init(|| {
        let dom = stadium();
        let grid = Grid::new(&dom, 1.0 / 64.0).unwrap();
        let a = assemble_laplacian(&dom, &grid, true);
        let batch = eigensolve(&grid, &a, 300).unwrap();
        (batch, a)
    })
}

fn square_batch() -> &'static SpectralBatch {
    static CELL: OnceLock<SpectralBatch> = OnceLock::new();
    CELL.get_or_init(|| {
        let dom = Domain::UnitSquare;
        let grid = Grid::new(&dom, 1.0 / 128.0).unwrap();
        let a = assemble_laplacian(&dom, &grid, false);
        eigensolve(&grid, &a, 12).unwrap()
    })
}

fn wrap_ds(l: f64, closed: bool, a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if closed {
        d.min(l - d)
    } else {
        d
    }
}

/// Criterion 1: exact phase-space identities on randomized cases.
fn c1_exact_identities() {
    let cases: [(Domain, Hypersurface); 2] = [
        (stadium(), chord()),
        (
            Domain::Hyperbolic {
                group: FuchsianGroup::Modular,
            },
            Hypersurface::GeodesicCircle {
                center: [0.0, 1.5],
                radius: 0.3,
                injectivity_radius: 0.33,
            },
        ),
    ];
    for (_dom, h) in &cases {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let l = h.length();
        for _ in 0..1000 {
            let q = dynamics::sample_mu_lh(h, &mut rng);
            let p = h.lift_xi(q.s, q.sigma, q.side).unwrap();
            // |xi| = 1.
            assert!((p.dir.norm() - 1.0).abs() < 1e-12, "lift is not unit");
            // pi_H o xi = id (tangential component) and the full
            // section-coordinate round trip.
            let sigma_back = h.project_pi_h(&p).unwrap();
            assert!((sigma_back - q.sigma).abs() < 1e-9, "projection");
            let (s2, sigma2, side2) = h.section_coords(&p).unwrap();
            assert!(wrap_ds(l, h.is_closed(), s2, q.s) < 1e-9);
            assert!((sigma2 - q.sigma).abs() < 1e-9);
            assert_eq!(side2, q.side);
            // r_H is an involution.
            let r = h.reflect_r_h(&p).unwrap();
            let rr = h.reflect_r_h(&r).unwrap();
            assert!((rr.pos - p.pos).norm() < 1e-12);
            assert!((rr.dir - p.dir).norm() < 1e-12);
        }
    }
    // Flow group and reversal laws.
    for dom in [stadium(), Domain::hyperbolic_plane(), Domain::modular_surface()] {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let free_plane = matches!(
            dom,
            Domain::Hyperbolic {
                group: FuchsianGroup::FreePlane
            }
        );
        let mut checked = 0;
        while checked < 1000 {
            // The free plane has infinite Liouville volume; draw from a box.
            let p = if free_plane {
                let pos = num_complex::Complex64::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(0.5..3.0),
                );
                PhasePoint::from_angle(pos, rng.gen_range(0.0..std::f64::consts::TAU))
            } else {
                dynamics::sample_mu_l(&dom, &mut rng)
            };
            let t1 = rng.gen_range(0.05..2.0);
            let t2 = rng.gen_range(0.05..2.0);
            let (Ok(a), Ok(ab)) = (
                dynamics::flow(&dom, &p, t1),
                dynamics::flow(&dom, &p, t1 + t2),
            ) else {
                continue;
            };
            let Ok(b) = dynamics::flow(&dom, &a, t2) else {
                continue;
            };
            assert!(
                dynamics::phase_distance(&dom, &b, &ab) < 1e-8,
                "group law broken"
            );
            // Time reversal: reverse, flow, reverse = inverse flow.
            let rev = PhasePoint::new(ab.pos, -ab.dir);
            let Ok(back) = dynamics::flow(&dom, &rev, t1 + t2) else {
                continue;
            };
            let back = PhasePoint::new(back.pos, -back.dir);
            assert!(
                dynamics::phase_distance(&dom, &back, &p) < 1e-7,
                "reversal law broken"
            );
            checked += 1;
        }
    }
}

/// Criterion 2: |det D Phi| = 1 on 1000 section samples per case.
fn c2_symplecticity() {
    use rayon::prelude::*;
    let cases: [(Domain, Hypersurface); 2] = [
        (stadium(), chord()),
        (
            Domain::hyperbolic_plane(),
            Hypersurface::GeodesicCircle {
                center: [0.0, 1.5],
                radius: 0.5,
                injectivity_radius: 10.0,
            },
        ),
    ];
    for (dom, h) in &cases {
        let worst = (0..2500u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(7_000 + i);
                let q = dynamics::sample_mu_lh(h, &mut rng);
                dynamics::section_jacobian(dom, h, &q, 60.0, 1e-5)
                    .ok()
                    .map(|j| (j[0][0] * j[1][1] - j[0][1] * j[1][0]).abs())
            })
            .collect::<Vec<_>>();
        let dets: Vec<f64> = worst.into_iter().flatten().collect();
        assert!(dets.len() >= 1000, "only {} valid samples", dets.len());
        for d in dets.iter().take(1000) {
            assert!((d - 1.0).abs() <= 1e-4, "|det| = {d}");
        }
    }
}

/// Criterion 3: the orbit-averaged window function is identically 1.
fn c3_chi_bar() {
    let dom = stadium();
    let h = chord();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut checked = 0;
    let mut max_dev = 0.0f64;
    while checked < 100 {
        let q = dynamics::sample_mu_lh(&h, &mut rng);
        let out = chi_bar(&dom, &h, &q, 20.0).unwrap();
        if out.censored {
            continue;
        }
        max_dev = max_dev.max((out.value - 1.0).abs());
        checked += 1;
    }
    assert!(max_dev < 1e-3, "max deviation {max_dev:.2e}");
}

/// Criterion 4: Monte Carlo mean of the ergodic average matches the cutoff
/// limit state within 3 standard errors.
fn c4_mean_identity() {
    let dom = stadium();
    let h = chord();
    let cut = CutoffParams::new(0.05).unwrap();
    let symbols = [
        Symbol::constant(1.0),
        Symbol::Multiplication { v: v_profile() },
        Symbol::Separable {
            v: v_profile(),
            g: vec![0.0, 1.0],
        },
    ];
    for a in &symbols {
        let omega_eps = omega(a, &dom, &h, Some(cut)).unwrap();
        let stats =
            mean_over_sstarm(&dom, &h, a, 10.0, &cut, omega_eps, 100_000, 44).unwrap();
        let dev = (stats.mean - omega_eps).abs();
        assert!(
            dev <= 3.0 * stats.stderr_mean.max(1e-12),
            "mean {} vs omega_eps {} ({}σ)",
            stats.mean,
            omega_eps,
            dev / stats.stderr_mean
        );
    }
}

/// Criterion 5: variance decay under double averaging on the stadium, and no
/// decay on the integrable square control.
fn c5_variance_decay() {
    let cut = CutoffParams::new(0.05).unwrap();
    let a = Symbol::Multiplication { v: v_profile() };

    let dom = stadium();
    let h = chord();
    let omega_eps = omega(&a, &dom, &h, Some(cut)).unwrap();
    let v10 =
        variance_over_sstarm(&dom, &h, &a, 10.0, 10.0, &cut, omega_eps, 1500, 55).unwrap();
    let v40 =
        variance_over_sstarm(&dom, &h, &a, 40.0, 40.0, &cut, omega_eps, 1500, 55).unwrap();
    assert!(
        v40.variance < 0.5 * v10.variance,
        "stadium variance {} -> {} did not halve",
        v10.variance,
        v40.variance
    );

    let dom = Domain::UnitSquare;
    let h = Hypersurface::segment([0.0, 0.5], [1.0, 0.5]);
    let omega_eps = omega(&a, &dom, &h, Some(cut)).unwrap();
    let v10 =
        variance_over_sstarm(&dom, &h, &a, 10.0, 10.0, &cut, omega_eps, 1500, 55).unwrap();
    let v40 =
        variance_over_sstarm(&dom, &h, &a, 40.0, 40.0, &cut, omega_eps, 1500, 55).unwrap();
    assert!(
        v40.variance >= 0.5 * v10.variance,
        "square control decayed: {} -> {}",
        v10.variance,
        v40.variance
    );
}

/// Criterion 6: the symmetry measure separates mirror-symmetric curves from
/// generic ones.
fn c6_symmetry_dichotomy() {
    let params = SymmetryParams::default();
    let verdict = symmetry_measure(&stadium(), &axis(), 10_000, &params, 66);
    assert_eq!(verdict.estimate, 1.0, "axis estimate {}", verdict.estimate);

    let asymmetric: [(Domain, Hypersurface); 3] = [
        (stadium(), chord()),
        (
            Domain::modular_surface(),
            Hypersurface::GeodesicCircle {
                center: [0.0, 1.5],
                radius: 0.3,
                injectivity_radius: 0.33,
            },
        ),
        (
            Domain::modular_surface(),
            Hypersurface::ClosedHorocycle { height: 1.5 },
        ),
    ];
    for (dom, h) in &asymmetric {
        let v = symmetry_measure(dom, h, 10_000, &params, 66);
        assert!(
            v.estimate <= 0.02,
            "{h:?}: estimate {} +- {}",
            v.estimate,
            v.stderr
        );
        assert!(
            v.censored_fraction <= 0.05,
            "{h:?}: censored {}",
            v.censored_fraction
        );
    }
}

/// Criterion 7: eigenvalues against the square closed form and the stadium
/// two-term Weyl law.
fn c7_spectral_validation() {
    let square = square_batch();
    let mut analytic: Vec<f64> = Vec::new();
    for m in 1..=8usize {
        for n in 1..=8usize {
            analytic.push(std::f64::consts::PI.powi(2) * (m * m + n * n) as f64);
        }
    }
    analytic.sort_by(f64::total_cmp);
    for j in 0..10 {
        let rel = (square.eigenvalues[j] - analytic[j]).abs() / analytic[j];
        assert!(rel < 5e-3, "square eigenvalue {j}: rel {rel:.2e}");
    }

    let (batch, op) = stadium_batch();
    let weyl = weyl_check(batch, &stadium(), op).unwrap();
    assert!(weyl.complete, "stadium batch misses eigenvalues");
    assert!(
        weyl.max_rel_dev_upper_half < 0.03,
        "stadium Weyl deviation {}",
        weyl.max_rel_dev_upper_half
    );
}

fn chord_records(a: &Symbol) -> Vec<qerlab::restriction::MatrixElementRecord> {
    let (batch, _) = stadium_batch();
    restricted_records(a, batch, &stadium(), &chord(), &Taper::default()).unwrap()
}

/// Criterion 8: the Cesaro mean of restricted mass reproduces L / area.
fn c8_restriction_weyl_mean() {
    let records = chord_records(&Symbol::constant(1.0));
    let mean: f64 =
        records.iter().map(|r| r.norm_sq).sum::<f64>() / records.len() as f64;
    let expected = chord().length() / stadium().area();
    let rel = (mean - expected).abs() / expected;
    assert!(rel < 0.10, "mean {mean} vs L/area {expected} (rel {rel:.3})");
}

/// Criterion 9: the quantum dichotomy between the symmetry axis and a
/// generic chord.
fn c9_qer_dichotomy() {
    let (batch, _) = stadium_batch();
    let dom = stadium();

    // Axis: odd modes vanish on the curve.
    let axis_records =
        restricted_records(&Symbol::constant(1.0), batch, &dom, &axis(), &Taper::default())
            .unwrap();
    let threshold = 0.1 * axis().length() / dom.area();
    let small: Vec<&qerlab::restriction::MatrixElementRecord> = axis_records
        .iter()
        .filter(|r| r.norm_sq < threshold)
        .collect();
    let frac = small.len() as f64 / axis_records.len() as f64;
    assert!(frac >= 0.40, "only {frac:.2} of axis modes are small");
    let odd_among_small = small
        .iter()
        .filter(|r| batch.parity[r.j] == Parity::Odd)
        .count() as f64
        / small.len() as f64;
    assert!(
        odd_among_small >= 0.95,
        "odd-class coincidence {odd_among_small:.3}"
    );

    // Generic chord: variance-sum decay and Cesaro-mean convergence.
    for a in [
        Symbol::constant(1.0),
        Symbol::Multiplication { v: v_profile() },
    ] {
        let mut records = chord_records(&a);
        records.sort_by(|x, y| x.lambda.total_cmp(&y.lambda));
        let omega_ref = omega(&a, &dom, &chord(), None).unwrap();
        let ladders = cesaro_and_variance(&records, omega_ref, &[75, 300]);
        assert!(
            ladders.s[1] < ladders.s[0],
            "no decay: S(75) = {}, S(300) = {}",
            ladders.s[0],
            ladders.s[1]
        );
        let rel = (ladders.e[1] - omega_ref).abs() / omega_ref.abs();
        assert!(
            rel < 0.15,
            "E(300) = {} vs omega = {omega_ref} (rel {rel:.3})",
            ladders.e[1]
        );
    }
}

/// Criterion 10: every square-billiard closed form in the restriction module
/// matches to 1e-3.
fn c10_oracle_equivalence() {
    let batch = square_batch();
    let dom = Domain::UnitSquare;
    let h = Hypersurface::segment([0.0, 0.5], [1.0, 0.5]);
    let taper = Taper::default();

    let diag_mode = |m: usize| -> (usize, f64) {
        let target = std::f64::consts::PI.powi(2) * (2 * m * m) as f64;
        let j = (0..batch.len())
            .min_by(|&i, &k| {
                (batch.eigenvalues[i] - target)
                    .abs()
                    .total_cmp(&(batch.eigenvalues[k] - target).abs())
            })
            .unwrap();
        let probe = if m % 2 == 1 { (0.5, 0.5) } else { (0.25, 0.25) };
        let analytic = 2.0
            * (m as f64 * std::f64::consts::PI * probe.0).sin()
            * (m as f64 * std::f64::consts::PI * probe.1).sin();
        let g = &batch.grid;
        let ix = ((probe.0 - g.x0) / g.h).round() as i64;
        let iy = ((probe.1 - g.y0) / g.h).round() as i64;
        (j, (batch.value_at(j, ix, iy) * analytic).signum())
    };

    let v = v_profile();
    for m in [1usize, 3] {
        let (j, sign) = diag_mode(m);
        // Trace closed form.
        let t = trace_on_curve(batch, &dom, &h, j, 128).unwrap();
        for k in 0..t.n_nodes() {
            let x = t.node_s(k);
            let analytic = 2.0
                * (m as f64 * std::f64::consts::PI * x).sin()
                * (m as f64 * std::f64::consts::PI * 0.5).sin();
            assert!(
                (sign * t.values[k].re - analytic).abs() < 1e-3,
                "trace of mode ({m},{m})"
            );
        }
        // Restricted mass.
        let mass = l2_on_curve(&t, |_| 1.0);
        assert!((mass - 2.0).abs() < 1e-3, "mass of ({m},{m}) = {mass}");
        // Matrix element of a multiplication symbol.
        let rec = matrix_element_with_nodes(
            &Symbol::Multiplication { v: v.clone() },
            batch,
            &dom,
            &h,
            j,
            &taper,
            256,
        )
        .unwrap();
        let n = 200_000;
        let oracle: f64 = (0..n)
            .map(|k| {
                let x = (k as f64 + 0.5) / n as f64;
                let u = 2.0 * (m as f64 * std::f64::consts::PI * x).sin();
                let w = taper.weight(x, 1.0);
                u * u * w * w * v.eval(x)
            })
            .sum::<f64>()
            / n as f64;
        assert!(
            (rec.value - oracle).abs() < 1e-3,
            "element of ({m},{m}): {} vs {oracle}",
            rec.value
        );
    }
    // Even-n mode vanishes on the midline.
    let (j, _) = diag_mode(2);
    let t = trace_on_curve(batch, &dom, &h, j, 128).unwrap();
    assert!(l2_on_curve(&t, |_| 1.0) <= 1e-5, "even mode mass");
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, fn())> = vec![
        ("exact phase-space identities", c1_exact_identities),
        ("return-map symplecticity", c2_symplecticity),
        ("orbit-averaged window is 1", c3_chi_bar),
        ("ergodic-average mean identity", c4_mean_identity),
        ("variance decay vs integrable control", c5_variance_decay),
        ("symmetry-measure dichotomy", c6_symmetry_dichotomy),
        ("spectral validation", c7_spectral_validation),
        ("restriction Weyl mean", c8_restriction_weyl_mean),
        ("quantum dichotomy", c9_qer_dichotomy),
        ("square closed-form oracles", c10_oracle_equivalence),
    ];
    // Write straight to stderr so the per-criterion lines survive libtest's
    // output capture even on a fully passing run.
    let report = |line: String| {
        use std::io::Write;
        let _ = writeln!(std::io::stderr(), "{line}");
    };
    let mut failures = Vec::new();
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        match catch_unwind(AssertUnwindSafe(run)) {
            Ok(()) => report(format!("[PASS] criterion {:2}: {name}", i + 1)),
            Err(err) => {
                let msg = err
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| err.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".to_string());
                report(format!("[FAIL] criterion {:2}: {name} — {msg}", i + 1));
                failures.push(format!("{}: {name}", i + 1));
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
