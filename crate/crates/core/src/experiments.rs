//! Experiment orchestration: each command composes the library modules into
//! one run producing a verdict, a JSON report, and CSV tables.

use serde_json::{json, Value};

use crate::assumptions::{self, AssumptionReport, Verdict};
use crate::bounds::{self, BoundReport, EintlSample};
use crate::config::{Command, ExperimentConfig};
use crate::engine::build_f_eps;
use crate::error::{Error, Result};
use crate::sim::{compare_to_series, simulate_paths, BinSpec, SimConfig};
use crate::{Lattice, Levels, QuadSpec};

/// Worst acceptable relative error in the per-level mass identity.
pub const MASS_IDENTITY_TOL: f64 = 1e-5;

/// Slack added to the series truncation bound when judging the mass defect.
pub const DEFECT_SLACK: f64 = 1e-6;

/// Result of one experiment run, ready to be written to disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub verdict: Verdict,
    pub report: Value,
    /// (file name, rendered CSV body) pairs.
    pub tables: Vec<(String, String)>,
}

fn aggregate<I: IntoIterator<Item = Verdict>>(verdicts: I) -> Verdict {
    let mut out = Verdict::Pass;
    for v in verdicts {
        match v {
            Verdict::Fail => return Verdict::Fail,
            Verdict::Inconclusive => out = Verdict::Inconclusive,
            Verdict::Pass => {}
        }
    }
    out
}

fn assumption_json(r: &AssumptionReport<f64>) -> Value {
    json!({
        "condition": format!("{:?}", r.condition),
        "verdict": r.verdict,
        "worst_ratio": r.worst_ratio,
        "worst_location": r.worst_location,
        "samples_checked": r.samples_checked,
        "constants": r.constants,
        "notes": r.notes,
    })
}

fn bound_json(r: &BoundReport<f64>) -> Value {
    json!({
        "target": r.target,
        "samples": r.samples,
        "max_ratio": r.max_ratio,
        "fitted": r.fitted,
        "verdict": r.verdict,
        "boundary_sup": r.boundary_sup,
        "notes": r.notes,
    })
}

fn lattice_for(cfg: &ExperimentConfig) -> Result<Lattice> {
    let g = cfg.grid.ok_or_else(|| {
        Error::InvalidParam(format!("command `{}` needs a [grid] section", cfg.command))
    })?;
    Lattice::symmetric(cfg.kernel.dim, g.half_width, g.spacing)
}

fn levels_for(cfg: &ExperimentConfig, spec: &QuadSpec) -> Result<Levels> {
    let kernel = cfg.kernel.build()?;
    let grid = lattice_for(cfg)?;
    Ok(Levels::new(build_f_eps(&kernel, &grid, spec)?))
}

/// Executes the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.command {
        Command::CheckAssumptions => run_check_assumptions(cfg),
        Command::Iterate => run_iterate(cfg),
        Command::Density => run_density(cfg),
        Command::Simulate => run_simulate(cfg),
        Command::VerifyBounds => run_verify_bounds(cfg),
        Command::SweepS3 => run_sweep(cfg),
    }
}

fn run_check_assumptions(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = QuadSpec::default();
    let kernel = cfg.kernel.build()?;
    let radii = [0.25, 0.5, 1.0];
    let origin = [[0.0f64; 3]];

    let reports = vec![
        assumptions::check_a1a(&kernel.phi, 16.0, 0.01)?,
        assumptions::check_a1b(&kernel.phi, 64.0, 800)?,
        assumptions::check_a1c(
            &kernel.phi,
            kernel.params.alpha,
            kernel.params.dim,
            &cfg.run.lags,
            &spec,
        )?,
        assumptions::check_a2(&kernel)?,
        assumptions::check_a3(&kernel)?,
        assumptions::check_a4(&kernel, &radii, &origin, &spec)?,
    ];

    let verdict = aggregate(reports.iter().map(|r| r.verdict));
    let constants: Vec<(String, f64, String)> = reports
        .iter()
        .flat_map(|r| {
            r.constants
                .iter()
                .map(|(k, &v)| (k.clone(), v, format!("{:?} check", r.condition)))
        })
        .collect();
    let csv = crate::report::constants_csv(
        constants.iter().map(|(k, v, p)| (k.as_str(), *v, p.as_str())),
    );

    Ok(Outcome {
        verdict,
        report: json!({
            "command": cfg.command,
            "verdict": verdict,
            "conditions": reports.iter().map(assumption_json).collect::<Vec<_>>(),
        }),
        tables: vec![("constants.csv".into(), csv)],
    })
}

fn run_iterate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = QuadSpec::default();
    let mut ik = levels_for(cfg, &spec)?;
    ik.ensure_levels(cfg.run.n_levels.max(1))?;

    let certs = ik.certificates();
    let worst = certs
        .iter()
        .map(|c| c.rel_err)
        .fold(0.0f64, f64::max);
    let verdict = if worst.is_finite() && worst <= MASS_IDENTITY_TOL {
        Verdict::Pass
    } else {
        Verdict::Fail
    };

    let cert_rows: Vec<Vec<f64>> = certs
        .iter()
        .map(|c| {
            vec![
                c.level as f64,
                c.source.map(|s| s as f64).unwrap_or(-1.0),
                c.lattice_mass,
                c.escaped_mass,
                c.expected,
                c.rel_err,
            ]
        })
        .collect();
    let cert_csv = crate::report::numeric_csv(
        &["level", "source", "lattice_mass", "escaped_mass", "expected", "rel_err"],
        &cert_rows,
    );

    let sup_rows: Vec<Vec<f64>> = (1..=ik.level_count())
        .map(|n| {
            let (sup, _, on_edge) = ik.sup_at_level(n);
            vec![n as f64, sup, if on_edge { 1.0 } else { 0.0 }]
        })
        .collect();
    let sup_csv = crate::report::numeric_csv(&["level", "sup", "boundary_sup"], &sup_rows);

    Ok(Outcome {
        verdict,
        report: json!({
            "command": cfg.command,
            "verdict": verdict,
            "levels_built": ik.level_count(),
            "worst_rel_err": worst,
            "rel_err_tolerance": MASS_IDENTITY_TOL,
            "certificates": certs.len(),
        }),
        tables: vec![
            ("certificates.csv".into(), cert_csv),
            ("level_sups.csv".into(), sup_csv),
        ],
    })
}

fn run_density(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = QuadSpec::default();
    let mut ik = levels_for(cfg, &spec)?;
    let source = ik.gk.grid.origin_index();
    let dres = ik.density_p_eps(cfg.run.t, source, cfg.run.series_tol)?;

    let defect = dres.mass_defect();
    let verdict = if defect <= dres.truncation_bound + DEFECT_SLACK {
        Verdict::Pass
    } else {
        Verdict::Fail
    };

    let rows: Vec<Vec<f64>> = dres
        .q
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let p = dres.grid.point(i);
            vec![p[0], p[1], p[2], q]
        })
        .collect();
    let csv = crate::report::numeric_csv(&["x0", "x1", "x2", "q"], &rows);

    Ok(Outcome {
        verdict,
        report: json!({
            "command": cfg.command,
            "verdict": verdict,
            "t": dres.t,
            "atom": dres.atom,
            "escaped_mass": dres.escaped_mass,
            "n_terms": dres.n_terms,
            "truncation_bound": dres.truncation_bound,
            "mass_defect": defect,
        }),
        tables: vec![("density.csv".into(), csv)],
    })
}

fn run_simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let kernel = cfg.kernel.build()?;
    let bins = BinSpec::new(cfg.kernel.dim, cfg.run.bin_half_width, cfg.run.bin_width)?;
    let sim_cfg = SimConfig {
        kernel,
        source: [0.0; 3],
        t_horizon: cfg.run.t,
        n_paths: cfg.run.n_paths,
        seed: cfg.run.seed,
        bins,
    };
    let emp = simulate_paths(&sim_cfg)?;

    let rows: Vec<Vec<f64>> = emp
        .rows()
        .map(|(center, width, mass, stderr)| vec![center, width, mass, stderr])
        .collect();
    let csv = crate::report::numeric_csv(&["center", "width", "mass", "stderr"], &rows);

    let mut report = json!({
        "command": cfg.command,
        "n_paths": cfg.run.n_paths,
        "seed": cfg.run.seed,
        "t": cfg.run.t,
        "atom_estimate": emp.atom_estimate(),
        "atom_std_error": emp.atom_std_error(),
    });

    let verdict = if cfg.grid.is_some() {
        let spec = QuadSpec::default();
        let mut ik = levels_for(cfg, &spec)?;
        let source = ik.gk.grid.origin_index();
        let dres = ik.density_p_eps(cfg.run.t, source, cfg.run.series_tol)?;
        let cmp = compare_to_series(&emp, &dres)?;
        report["comparison"] = json!({
            "verdict": cmp.verdict,
            "n_tested": cmp.n_tested,
            "n_within": cmp.n_within,
            "fraction_within": cmp.fraction_within,
            "worst_z": cmp.worst_z,
            "atom_z": cmp.atom_z,
            "atom_expected": cmp.atom_expected,
        });
        cmp.verdict
    } else {
        report["notes"] = json!("no [grid] section, so no series comparison was run");
        Verdict::Pass
    };
    report["verdict"] = json!(verdict);

    Ok(Outcome {
        verdict,
        report,
        tables: vec![("histogram.csv".into(), csv)],
    })
}

fn run_verify_bounds(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = QuadSpec::default();
    let kernel = cfg.kernel.build()?;
    let mut ik = levels_for(cfg, &spec)?;
    let n_max = cfg.run.n_levels.max(4);

    let mut reports: Vec<BoundReport<f64>> = vec![
        bounds::verify_estimate1(&mut ik, 1, n_max)?,
        bounds::verify_estimate1(&mut ik, 2, n_max)?,
    ];
    let mut notes = Vec::new();

    let p = kernel.params;
    if p.eps < p.eps0 && p.eps < 1.0 {
        reports.push(bounds::verify_estimate2_3(&mut ik, n_max, &spec)?);
    } else {
        notes.push(format!(
            "level decay skipped: eps = {} is not below min(eps0, 1) = {}",
            p.eps,
            p.eps0.min(1.0)
        ));
    }

    let source = ik.gk.grid.origin_index();
    let dres = ik.density_p_eps(cfg.run.t, source, cfg.run.series_tol)?;
    reports.push(bounds::verify_maint(&dres, &ik.gk)?);

    let samples: Vec<EintlSample<f64>> = [4.0, 6.0, 8.0]
        .iter()
        .map(|&r| EintlSample {
            x: [0.0; 3],
            y: [r, 0.0, 0.0],
            eps: p.eps,
        })
        .collect();
    reports.push(bounds::verify_eintl(&kernel, 1, &samples, cfg.run.kappa, &spec)?);
    reports.push(bounds::verify_eintl(&kernel, 2, &samples, cfg.run.kappa, &spec)?);

    let verdict = aggregate(reports.iter().map(|r| r.verdict));
    let constants: Vec<(String, f64, String)> = reports
        .iter()
        .flat_map(|r| {
            r.fitted
                .iter()
                .map(|(k, &v)| (k.clone(), v, r.target.clone()))
        })
        .collect();
    let csv = crate::report::constants_csv(
        constants.iter().map(|(k, v, p)| (k.as_str(), *v, p.as_str())),
    );

    Ok(Outcome {
        verdict,
        report: json!({
            "command": cfg.command,
            "verdict": verdict,
            "bounds": reports.iter().map(bound_json).collect::<Vec<_>>(),
            "notes": notes,
        }),
        tables: vec![("constants.csv".into(), csv)],
    })
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = QuadSpec::default();
    let cells = cfg.sweep.cells()?;
    let rows = crate::sweep::sweep_condition_c(&cells, &cfg.run.lags, &spec)?;

    let disagreements = rows.iter().filter(|r| r.agrees == Some(false)).count();
    let inconclusive = rows
        .iter()
        .filter(|r| r.observed == crate::sweep::Observed::Inconclusive)
        .count();
    // Only a strictly-interior cell contradicting its prediction fails the
    // run; inconclusive boundary cells are expected.
    let verdict = if disagreements > 0 {
        Verdict::Fail
    } else {
        Verdict::Pass
    };

    Ok(Outcome {
        verdict,
        report: json!({
            "command": cfg.command,
            "verdict": verdict,
            "cells": rows.len(),
            "disagreements": disagreements,
            "inconclusive": inconclusive,
            "lags": cfg.run.lags,
        }),
        tables: vec![("sweep.csv".into(), crate::sweep::sweep_csv(&rows))],
    })
}
