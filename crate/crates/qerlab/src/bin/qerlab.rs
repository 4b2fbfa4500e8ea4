//! Command-line driver: reproducible experiment stages bound together by a
//! TOML config, with hash-accounted artifacts and a manifest per run.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use qerlab::config::RunConfig;
use qerlab::dynamics;
use qerlab::manifest::{
    emit, fmt_f64, load_batch, require_upstream, save_batch, Manifest,
};
use qerlab::qer;
use qerlab::restriction::Taper;
use qerlab::spectral::{assemble_laplacian, eigensolve, weyl_check, Grid};
use qerlab::symmetry::{symmetry_measure, SymmetryParams};

#[derive(Parser)]
#[command(name = "qerlab", version, about = "Restricted quantum ergodicity laboratory")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if absent).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores). Results are thread-count
    /// independent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Cmd {
    /// Trace one trajectory of the flow from a section sample.
    FlowTrace,
    /// Record the impact sequence of a section sample on the hypersurface.
    SectionOrbit,
    /// Estimate the microlocal-symmetry measure of the hypersurface.
    Symmetry,
    /// Solve the Dirichlet eigenproblem and store the eigenpair batch.
    Spectrum,
    /// Restrict the batch to the curve and emit matrix elements.
    Restrict,
    /// Cesaro/variance ladders and exceptional sets for the batch.
    Qer,
    /// Human-oriented summary plus a plot script from prior stages.
    Report,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::FlowTrace => "flow-trace",
            Cmd::SectionOrbit => "section-orbit",
            Cmd::Symmetry => "symmetry",
            Cmd::Spectrum => "spectrum",
            Cmd::Restrict => "restrict",
            Cmd::Qer => "qer",
            Cmd::Report => "report",
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let config_path = cli
        .config
        .as_ref()
        .context("--config <path> is required")?;
    let config_text = std::fs::read_to_string(config_path)
        .with_context(|| format!("cannot read config {}", config_path.display()))?;
    let mut cfg = RunConfig::from_str(&config_text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool")?;
    }
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create {}", cli.out.display()))?;

    let started = Instant::now();
    let mut manifest = Manifest::new(
        cli.cmd.name(),
        &config_text,
        cfg.seed,
        cli.threads.unwrap_or_else(rayon::current_num_threads),
    );
    match cli.cmd {
        Cmd::FlowTrace => flow_trace(&cli, &cfg, &mut manifest)?,
        Cmd::SectionOrbit => section_orbit(&cli, &cfg, &mut manifest)?,
        Cmd::Symmetry => symmetry(&cli, &cfg, &mut manifest)?,
        Cmd::Spectrum => spectrum(&cli, &cfg, &mut manifest)?,
        Cmd::Restrict => restrict(&cli, &cfg, &mut manifest)?,
        Cmd::Qer => qer_cmd(&cli, &cfg, &mut manifest)?,
        Cmd::Report => report(&cli, &cfg, &mut manifest)?,
    }
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    let path = manifest.write(&cli.out)?;
    if cli.verbose {
        eprintln!(
            "{}: {} outputs in {:.2}s, manifest {}",
            cli.cmd.name(),
            manifest.outputs.len(),
            manifest.wall_time_secs,
            path.display()
        );
    }
    Ok(())
}

fn seeded_section_sample(cfg: &RunConfig) -> qerlab::dynamics::CrossSectionPoint {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    dynamics::sample_mu_lh(&cfg.hypersurface, &mut rng)
}

fn flow_trace(cli: &Cli, cfg: &RunConfig, manifest: &mut Manifest) -> Result<()> {
    let q = seeded_section_sample(cfg);
    let p = cfg.hypersurface.lift_xi(q.s, q.sigma, q.side)?;
    let mut csv = String::from("t,x,y,dir_x,dir_y\n");
    let dt = 0.05f64;
    let steps = (cfg.dynamics.t_max / dt).ceil() as usize;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let g = dynamics::flow(&cfg.domain, &p, t)?;
        let g = dynamics::canonicalize(&cfg.domain, &g);
        writeln!(
            csv,
            "{},{},{},{},{}",
            fmt_f64(t),
            fmt_f64(g.pos.re),
            fmt_f64(g.pos.im),
            fmt_f64(g.dir.re),
            fmt_f64(g.dir.im)
        )?;
    }
    emit(manifest, &cli.out, "flow_trace.csv", &csv)?;
    Ok(())
}

fn section_orbit(cli: &Cli, cfg: &RunConfig, manifest: &mut Manifest) -> Result<()> {
    let q = seeded_section_sample(cfg);
    let p = cfg.hypersurface.lift_xi(q.s, q.sigma, q.side)?;
    let rec = dynamics::impacts(&cfg.domain, &cfg.hypersurface, &p, cfg.dynamics.t_max)?;
    let mut csv = String::from("j,t,s,sigma,side,grazing\n");
    for (j, imp) in rec.impacts.iter().enumerate() {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            j + 1,
            fmt_f64(imp.t),
            fmt_f64(imp.s),
            fmt_f64(imp.sigma),
            imp.side,
            imp.grazing
        )?;
    }
    emit(manifest, &cli.out, "section_orbit.csv", &csv)?;
    Ok(())
}

fn symmetry_params(cfg: &RunConfig) -> SymmetryParams {
    SymmetryParams {
        j_max: cfg.dynamics.j_max,
        t_max: cfg.dynamics.t_max,
        tol_match: cfg.dynamics.tol_match,
    }
}

fn symmetry(cli: &Cli, cfg: &RunConfig, manifest: &mut Manifest) -> Result<()> {
    let params = symmetry_params(cfg);
    let verdict = symmetry_measure(
        &cfg.domain,
        &cfg.hypersurface,
        cfg.dynamics.n_samples,
        &params,
        cfg.seed,
    );
    let json = serde_json::to_string_pretty(&verdict)?;
    emit(manifest, &cli.out, "symmetry.json", &json)?;
    Ok(())
}

fn spectrum(cli: &Cli, cfg: &RunConfig, manifest: &mut Manifest) -> Result<()> {
    let grid = Grid::new(&cfg.domain, cfg.spectral.h)?;
    let a = assemble_laplacian(&cfg.domain, &grid, cfg.spectral.boundary_correction);
    let batch = eigensolve(&grid, &a, cfg.spectral.m)?;
    let bin_path = cli.out.join("spectrum.bin");
    save_batch(&bin_path, &cfg.domain, &batch)?;
    manifest.account(&bin_path)?;
    let mut csv = String::from("j,eigenvalue,frequency,residual,parity\n");
    for j in 0..batch.len() {
        writeln!(
            csv,
            "{},{},{},{},{:?}",
            j,
            fmt_f64(batch.eigenvalues[j]),
            fmt_f64(batch.frequencies[j]),
            fmt_f64(batch.residuals[j]),
            batch.parity[j]
        )?;
    }
    emit(manifest, &cli.out, "eigenvalues.csv", &csv)?;
    if batch.len() >= 20 {
        let weyl = weyl_check(&batch, &cfg.domain, &a)?;
        let json = serde_json::to_string_pretty(&weyl)?;
        emit(manifest, &cli.out, "weyl.json", &json)?;
    }
    Ok(())
}

fn taper(cfg: &RunConfig) -> Taper {
    Taper {
        fraction: cfg.restriction.taper_fraction,
    }
}

fn restrict(cli: &Cli, cfg: &RunConfig, manifest: &mut Manifest) -> Result<()> {
    let bin = require_upstream(&cli.out, "spectrum.bin", "spectrum")?;
    let batch = load_batch(&bin, &cfg.domain)?;
    let records = qer::restricted_records(
        &cfg.symbol,
        &batch,
        &cfg.domain,
        &cfg.hypersurface,
        &taper(cfg),
    )?;
    let mut csv = String::from("j,lambda,norm_sq,value,aliasing\n");
    for r in &records {
        writeln!(
            csv,
            "{},{},{},{},{}",
            r.j,
            fmt_f64(r.lambda),
            fmt_f64(r.norm_sq),
            fmt_f64(r.value),
            r.aliasing
        )?;
    }
    emit(manifest, &cli.out, "restrict.csv", &csv)?;
    Ok(())
}

fn qer_cmd(cli: &Cli, cfg: &RunConfig, manifest: &mut Manifest) -> Result<()> {
    let bin = require_upstream(&cli.out, "spectrum.bin", "spectrum")?;
    let batch = load_batch(&bin, &cfg.domain)?;
    let params = symmetry_params(cfg);
    let symmetry_samples = if cfg.domain.is_billiard() {
        cfg.dynamics.n_samples
    } else {
        0
    };
    let main_report = qer::qer_report(
        &cfg.symbol,
        &batch,
        &cfg.domain,
        &cfg.hypersurface,
        &taper(cfg),
        symmetry_samples,
        &params,
        cfg.seed,
    )?;
    let reports = if let Some(h_sym) = &cfg.hypersurface_symmetric {
        let sym_report = qer::qer_report(
            &cfg.symbol,
            &batch,
            &cfg.domain,
            h_sym,
            &taper(cfg),
            symmetry_samples,
            &params,
            cfg.seed,
        )?;
        serde_json::json!({ "generic": main_report, "symmetric": sym_report })
    } else {
        serde_json::json!({ "generic": main_report })
    };
    emit(manifest, &cli.out, "qer.json", &serde_json::to_string_pretty(&reports)?)?;
    let mut csv = String::from("curve,n,cesaro_mean,variance_sum\n");
    let ladder_rows = |label: &str, rep: &qer::QerReport, csv: &mut String| {
        for (i, &n) in rep.ladders.n_values.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{label},{n},{},{}",
                fmt_f64(rep.ladders.e[i]),
                fmt_f64(rep.ladders.s[i])
            );
        }
    };
    ladder_rows("generic", &main_report, &mut csv);
    if let Some(sym) = reports.get("symmetric") {
        let rep: qer::QerReport = serde_json::from_value(sym.clone())?;
        ladder_rows("symmetric", &rep, &mut csv);
    }
    emit(manifest, &cli.out, "ladders.csv", &csv)?;
    Ok(())
}

fn report(cli: &Cli, cfg: &RunConfig, manifest: &mut Manifest) -> Result<()> {
    let restrict_csv = require_upstream(&cli.out, "restrict.csv", "restrict")?;
    let qer_json = require_upstream(&cli.out, "qer.json", "qer")?;
    let qer_text = std::fs::read_to_string(&qer_json)?;
    let parsed: serde_json::Value = serde_json::from_str(&qer_text)?;
    let generic: qer::QerReport = serde_json::from_value(
        parsed
            .get("generic")
            .context("qer.json lacks a generic report")?
            .clone(),
    )?;
    let summary = serde_json::json!({
        "schema_version": 1,
        "domain": cfg.domain,
        "hypersurface": cfg.hypersurface,
        "symbol_id": generic.symbol_id,
        "omega": generic.omega,
        "ladder_n": generic.ladders.n_values,
        "cesaro_means": generic.ladders.e,
        "variance_sums": generic.ladders.s,
        "exceptional_fractions": generic
            .exceptional
            .iter()
            .map(|e| (e.theta, e.fraction))
            .collect::<Vec<_>>(),
        "has_symmetric_slot": parsed.get("symmetric").is_some(),
    });
    emit(
        manifest,
        &cli.out,
        "report.json",
        &serde_json::to_string_pretty(&summary)?,
    )?;
    let plot = r#"#!/usr/bin/env python3
"""Plot the matrix-element histogram and the variance-sum decay.

Reads restrict.csv and ladders.csv from this directory.
"""
import csv
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = pathlib.Path(__file__).resolve().parent
values = []
with open(here / "restrict.csv") as f:
    for row in csv.DictReader(f):
        values.append(float(row["value"]))
ladder = {"generic": [], "symmetric": []}
with open(here / "ladders.csv") as f:
    for row in csv.DictReader(f):
        ladder[row["curve"]].append((int(row["n"]), float(row["variance_sum"])))

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.hist(values, bins=24)
ax1.set_xlabel("matrix element")
ax1.set_ylabel("count")
ax1.set_title("restricted matrix elements")
for label, pts in ladder.items():
    if pts:
        ns, ss = zip(*sorted(pts))
        ax2.plot(ns, ss, marker="o", label=label)
ax2.set_xlabel("N")
ax2.set_ylabel("S(N)")
ax2.set_title("variance-sum decay")
ax2.legend()
fig.tight_layout()
fig.savefig(here / "report.png", dpi=150)
print("wrote", here / "report.png")
"#;
    emit(manifest, &cli.out, "plot_report.py", plot)?;
    let _ = restrict_csv;
    Ok(())
}
