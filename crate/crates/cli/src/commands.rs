//! The subcommands. Each writes its artifacts, then reports any violated
//! invariant as [`CliError::Invariant`].

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use embodied_core::array_model::{Displacement, Position};
use embodied_core::bounds::{bound_report, exhaustive_snapshots, optimal_snapshots, SnapshotRate};
use embodied_core::channel_sim::{estimate_errors, select_sub_codebook, SimReport};
use embodied_core::codebook::{
    greedy_packing_baseline, hexagonal_design, rate_sweep, read_codebook_csv, verify_codebook,
    Codebook, DesignReport, HexDesign, HexSizing, SweepSettings,
};
use embodied_core::csvfmt::num;
use embodied_core::par;
use embodied_core::reliability_field::ReliabilityField;
use serde::Serialize;

use crate::config::{db_to_linear, CodebookSource, RunConfig};
use crate::output::Artifacts;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Field,
    Codebook,
    Sweep,
    Bounds,
    Lstar,
    Simulate,
}

/// Runs `cmd`; on success returns the files written.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    match cmd {
        Command::Field => cmd_field(cfg),
        Command::Codebook => cmd_codebook(cfg),
        Command::Sweep => cmd_sweep(cfg),
        Command::Bounds => cmd_bounds(cfg),
        Command::Lstar => cmd_lstar(cfg),
        Command::Simulate => cmd_simulate(cfg),
    }
}

fn finish(files: Vec<PathBuf>, failures: Vec<String>) -> Result<Vec<PathBuf>, CliError> {
    if failures.is_empty() {
        Ok(files)
    } else {
        Err(CliError::Invariant(failures.join("; ")))
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

fn flag(b: bool) -> String {
    if b { "true" } else { "false" }.to_string()
}

/// Reliability field on the displacement grid and along a circle.
pub fn cmd_field(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let field = cfg.field()?;
    let scene = field.scene();
    let n = cfg.field.grid_n;
    let dys = linspace(-scene.extent_y, scene.extent_y, n);
    let dzs = linspace(-scene.extent_z, scene.extent_z, n);
    let grid = par::map_range(n * n, |k| {
        let d = Displacement::new(dys[k / n], dzs[k % n]);
        vec![
            num(d.dy),
            num(d.dz),
            num(field.bhattacharyya(d)),
            num(field.bhattacharyya_quadratic(d)),
        ]
    });

    let radius = cfg.field.polar_radius;
    let m = cfg.field.polar_points;
    let l = scene.snapshots;
    let polar: Vec<Vec<String>> = (0..m)
        .map(|k| {
            let psi = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            let d = Displacement::polar(radius, psi);
            vec![
                num(psi),
                num(d.dy),
                num(d.dz),
                num(field.bhattacharyya(d)),
                num(field.bhattacharyya_quadratic(d)),
                num(field.pairwise_error_bound(d, l)),
            ]
        })
        .collect();

    let mut out = Artifacts::new("field", cfg)?;
    out.csv(
        "field_grid.csv",
        &["dy", "dz", "b_exact", "b_quadratic"],
        &grid,
    )?;
    out.csv(
        "field_polar.csv",
        &[
            "psi_rad",
            "dy",
            "dz",
            "b_exact",
            "b_quadratic",
            "pairwise_error_bound",
        ],
        &polar,
    )?;
    finish(out.written, Vec::new())
}

/// Codebook for the configured source, plus the hexagonal design record
/// when the lattice construction was used.
fn build_codebook(
    cfg: &RunConfig,
    field: &ReliabilityField,
) -> Result<(Codebook, Option<HexDesign>), CliError> {
    match cfg.codebook.source {
        CodebookSource::Hex => {
            let design = hexagonal_design(cfg.eps, field, &cfg.hex_options())?;
            Ok((design.codebook.clone(), Some(design)))
        }
        CodebookSource::Greedy => Ok((
            greedy_packing_baseline(cfg.eps, field, cfg.codebook.greedy_step)?,
            None,
        )),
        CodebookSource::File => {
            let path = &cfg.codebook.file;
            let file = File::open(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
            let positions = read_codebook_csv(BufReader::new(file))?;
            Ok((Codebook::new(positions, field)?, None))
        }
        CodebookSource::List => {
            let positions = cfg
                .codebook
                .positions
                .iter()
                .map(|&[y, z]| Position::new(y, z))
                .collect();
            Ok((Codebook::new(positions, field)?, None))
        }
    }
}

#[derive(Serialize)]
struct Anisotropy {
    alpha_y: f64,
    alpha_z: f64,
    /// Axis with the larger curvature, i.e. the finer resolution.
    finer_axis: &'static str,
    pitch_y_m: f64,
    pitch_z_m: f64,
    /// Lattice pitch is smaller along the finer axis (equal for a square
    /// aperture).
    denser_along_finer_axis: bool,
}

#[derive(Serialize)]
struct Reverification {
    feasible: bool,
    j: usize,
    b_min: Option<f64>,
    b_threshold: Option<f64>,
    slack_nats: Option<f64>,
    /// The independent pass reproduced the design's own report.
    matches_design_report: Option<bool>,
}

#[derive(Serialize)]
struct CodebookManifest {
    source: CodebookSource,
    eps: f64,
    report: DesignReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    sizing: Option<HexSizing>,
    #[serde(skip_serializing_if = "Option::is_none")]
    whitened_spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    anisotropy: Option<Anisotropy>,
    reverification: Reverification,
}

pub fn cmd_codebook(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let field = cfg.field()?;
    let (cb, design) = build_codebook(cfg, &field)?;
    let report = match &design {
        Some(d) => d.report,
        None => verify_codebook(&cb, cfg.eps, &field)?,
    };
    // Second, independent verification of the emitted positions.
    let again = verify_codebook(
        &Codebook::new(cb.positions().to_vec(), &field)?,
        cfg.eps,
        &field,
    )?;
    let mut failures = Vec::new();
    if !again.feasible {
        failures.push(format!(
            "codebook of {} positions misses the target error {:e}",
            again.j, cfg.eps
        ));
    }

    // Only meaningful when a lattice was actually laid down.
    let anisotropy = design.as_ref().filter(|d| d.generator.is_some()).map(|d| {
        let q = field.quadratic_params();
        let [py, pz] = d.axis_pitch;
        let (finer_axis, ok) = if q.alpha_y > q.alpha_z {
            ("y", py < pz)
        } else if q.alpha_z > q.alpha_y {
            ("z", pz < py)
        } else {
            ("none", (py - pz).abs() <= 1e-12 * py.max(pz))
        };
        Anisotropy {
            alpha_y: q.alpha_y,
            alpha_z: q.alpha_z,
            finer_axis,
            pitch_y_m: py,
            pitch_z_m: pz,
            denser_along_finer_axis: ok,
        }
    });
    if let Some(a) = &anisotropy {
        if !a.denser_along_finer_axis {
            failures.push("lattice is not denser along the finer-resolution axis".into());
        }
    }

    let manifest = CodebookManifest {
        source: cfg.codebook.source,
        eps: cfg.eps,
        sizing: design.as_ref().map(|d| d.sizing),
        whitened_spacing: design.as_ref().map(|d| d.whitened_spacing),
        anisotropy,
        reverification: Reverification {
            feasible: again.feasible,
            j: again.j,
            b_min: again.b_min,
            b_threshold: again.b_threshold,
            slack_nats: again.slack_nats,
            matches_design_report: design.as_ref().map(|d| d.report == again),
        },
        report,
    };
    let mut out = Artifacts::new("codebook", cfg)?;
    out.codebook_csv("codebook.csv", &cb)?;
    out.json("codebook_manifest.json", &manifest)?;
    finish(out.written, failures)
}

/// Closed-form and exhaustive optimal snapshot counts at one SNR.
struct LstarRow {
    snr_db: f64,
    l_cont: f64,
    l_int: u32,
    rate_l_int: f64,
    best: SnapshotRate,
    rate_l1: f64,
    curve: Vec<SnapshotRate>,
}

fn lstar_rows(cfg: &RunConfig) -> Result<Vec<LstarRow>, CliError> {
    let array = cfg.array_config()?;
    let scene = cfg.scene_config()?;
    let hex = cfg.hex_options();
    let rays = cfg.rays();
    let tp = scene.pulse_duration;
    par::map_slice(&cfg.sweep.snr_db, |&db| {
        let field = ReliabilityField::new(array, scene.with_snr(db_to_linear(db)))?;
        let opt = optimal_snapshots(cfg.eps, &field, &hex)?;
        let (best, curve) = exhaustive_snapshots(cfg.eps, &field, &hex, &rays, cfg.sweep.l_max)?;
        let rate_l_int = opt
            .window
            .iter()
            .find(|r| r.snapshots == opt.l_int)
            .map_or(0.0, |r| r.rate * tp);
        Ok(LstarRow {
            snr_db: db,
            l_cont: opt.l_cont,
            l_int: opt.l_int,
            rate_l_int,
            best,
            rate_l1: curve[0].rate * tp,
            curve,
        })
    })
    .into_iter()
    .collect::<embodied_core::Result<Vec<_>>>()
    .map_err(CliError::from)
}

const LSTAR_COLUMNS: [&str; 8] = [
    "gamma0_db",
    "l_star_cont",
    "l_star_int",
    "rate_l_star_int",
    "l_star_exhaustive",
    "rate_l_star_exhaustive",
    "rate_l1",
    "optimized_ge_fixed",
];

fn lstar_table(rows: &[LstarRow], tp: f64, failures: &mut Vec<String>) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let best_rate = r.best.rate * tp;
            let ok = best_rate >= r.rate_l1;
            if !ok {
                failures.push(format!(
                    "optimized rate below the L=1 rate at {} dB",
                    r.snr_db
                ));
            }
            vec![
                num(r.snr_db),
                num(r.l_cont),
                r.l_int.to_string(),
                num(r.rate_l_int),
                r.best.snapshots.to_string(),
                num(best_rate),
                num(r.rate_l1),
                flag(ok),
            ]
        })
        .collect()
}

/// Rates and converse bounds over the SNR x L grid, plus optimal snapshot
/// counts per SNR.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.require_sweep()?;
    let array = cfg.array_config()?;
    let scene = cfg.scene_config()?;
    let mut bounds = cfg.bound_settings(false);
    bounds.with_l_star = false;
    let settings = SweepSettings {
        eps: cfg.eps,
        snr_db: cfg.sweep.snr_db.clone(),
        snapshots: cfg.sweep.snapshots.clone(),
        bounds,
    };
    let points = rate_sweep(&array, &scene, &settings)?;
    let lstar = lstar_rows(cfg)?;

    let mut failures = Vec::new();
    let nl = settings.snapshots.len();
    let rows: Vec<Vec<String>> = points
        .iter()
        .enumerate()
        .map(|(k, p)| {
            // Compare with the same L at the previous SNR in list order.
            let monotone = k < nl
                || points[k - nl].snr_db > p.snr_db
                || p.normalized_rate >= points[k - nl].normalized_rate;
            let b = &p.bounds;
            let sandwich = b.sandwich.holds();
            if !monotone {
                failures.push(format!(
                    "rate decreased with SNR at {} dB, L={}",
                    p.snr_db, b.snapshots
                ));
            }
            if !sandwich {
                failures.push(format!(
                    "sandwich violated at {} dB, L={}",
                    p.snr_db, b.snapshots
                ));
            }
            vec![
                num(p.snr_db),
                b.snapshots.to_string(),
                b.hex_j.to_string(),
                num(p.normalized_rate),
                num(b.rate_lower),
                flag(p.feasible),
                num(b.c_info_universal),
                num(b.c_geo),
                num(b.c_geo_mainlobe),
                num(b.d_nec_m),
                flag(monotone),
                flag(sandwich),
            ]
        })
        .collect();
    let lrows = lstar_table(&lstar, scene.pulse_duration, &mut failures);

    let mut out = Artifacts::new("sweep", cfg)?;
    out.csv(
        "sweep.csv",
        &[
            "gamma0_db",
            "L",
            "j_hex",
            "normalized_rate",
            "rate_bps",
            "feasible",
            "c_info_universal",
            "c_geo",
            "c_geo_mainlobe",
            "d_nec",
            "rate_monotone_in_snr",
            "sandwich_ok",
        ],
        &rows,
    )?;
    out.csv("lstar.csv", &LSTAR_COLUMNS, &lrows)?;
    finish(out.written, failures)
}

/// Achievable rate against every converse bound, including the
/// grid-restricted support bound.
pub fn cmd_bounds(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.require_sweep()?;
    let array = cfg.array_config()?;
    let scene = cfg.scene_config()?;
    let settings = cfg.bound_settings(true);
    let grid: Vec<(f64, u32)> = cfg
        .sweep
        .snr_db
        .iter()
        .flat_map(|&db| cfg.sweep.snapshots.iter().map(move |&l| (db, l)))
        .collect();
    let reports = grid
        .iter()
        .map(|&(db, l)| {
            let f =
                ReliabilityField::new(array, scene.with_snr(db_to_linear(db)).with_snapshots(l))?;
            bound_report(cfg.eps, &f, &settings)
        })
        .collect::<embodied_core::Result<Vec<_>>>()?;

    let mut failures = Vec::new();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|b| {
            if !b.sandwich.holds() {
                failures.push(format!("sandwich violated at gamma0={}, L={}", b.snr, b.snapshots));
            }
            if b.sandwich.support_ok == Some(false) {
                log::warn!(
                    "achievable rate exceeds the grid-restricted support bound at gamma0={}, L={} after refinement",
                    b.snr,
                    b.snapshots
                );
            }
            vec![
                num(b.snr),
                b.snapshots.to_string(),
                num(b.rate_lower),
                num(b.c_info_universal),
                num(b.c_info_support.as_ref().map_or(f64::NAN, |s| s.rate)),
                num(b.c_geo),
                num(b.c_geo_mainlobe),
                num(b.d_nec_m),
                num(b.l_star_continuous),
                b.l_star_integer.to_string(),
            ]
        })
        .collect();
    let mut out = Artifacts::new("bounds", cfg)?;
    out.csv(
        "bounds.csv",
        &[
            "gamma0",
            "L",
            "rate_lower",
            "c_info_universal",
            "c_info_support_grid",
            "c_geo",
            "c_geo_mainlobe",
            "d_nec",
            "l_star_cont",
            "l_star_int",
        ],
        &rows,
    )?;
    finish(out.written, failures)
}

/// Optimal snapshot counts per SNR and the full rate-vs-L curves behind them.
pub fn cmd_lstar(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    if cfg.sweep.snr_db.is_empty() {
        return Err(CliError::Validation(
            "`sweep.snr_db`: sweep grid is empty".into(),
        ));
    }
    let tp = cfg.scene.pulse_duration;
    let rows = lstar_rows(cfg)?;
    let mut failures = Vec::new();
    let table = lstar_table(&rows, tp, &mut failures);
    let curves: Vec<Vec<String>> = rows
        .iter()
        .flat_map(|r| {
            r.curve.iter().map(move |c| {
                vec![
                    num(r.snr_db),
                    c.snapshots.to_string(),
                    c.j.to_string(),
                    num(c.rate * tp),
                ]
            })
        })
        .collect();
    let mut out = Artifacts::new("lstar", cfg)?;
    out.csv("lstar.csv", &LSTAR_COLUMNS, &table)?;
    out.csv(
        "lstar_curves.csv",
        &["gamma0_db", "L", "j", "normalized_rate"],
        &curves,
    )?;
    finish(out.written, failures)
}

#[derive(Serialize)]
struct Gate {
    union_bound_holds: bool,
    pairwise_violations: usize,
    self_test: bool,
}

#[derive(Serialize)]
struct SimulationDoc<'a> {
    positions: &'a [Position],
    report: &'a SimReport,
    gate: Gate,
}

/// Monte Carlo error rates of (a sub-codebook of) the configured codebook,
/// checked against the union and pairwise bounds.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let field = cfg.field()?;
    let (cb, _) = build_codebook(cfg, &field)?;
    let keep = select_sub_codebook(&cb, cfg.simulate.max_codewords, cfg.seed, &field);
    let sub = cb.subset(&keep, &field)?;
    let report = estimate_errors(&sub, cfg.solver.trials, cfg.seed, &field)?;

    // The gate runs on a copy; self-test mode plants an impossible bound.
    let mut checked = report.clone();
    if cfg.simulate.self_test {
        checked.union_bound_prediction = -1.0;
        for p in &mut checked.pairwise {
            p.bhatt_bound = -1.0;
        }
    }
    let gate = Gate {
        union_bound_holds: checked.union_bound_holds(),
        pairwise_violations: checked.pairwise_violations().len(),
        self_test: cfg.simulate.self_test,
    };
    let mut failures = Vec::new();
    if !gate.union_bound_holds {
        failures.push(format!(
            "max error {:e} exceeds union bound {:e} + half-width {:e}",
            checked.max_error, checked.union_bound_prediction, checked.wilson_halfwidth_95
        ));
    }
    if gate.pairwise_violations > 0 {
        failures.push(format!(
            "{} pairs exceed their Bhattacharyya bound + half-width",
            gate.pairwise_violations
        ));
    }

    let pairs: Vec<Vec<String>> = report
        .pairwise
        .iter()
        .map(|p| {
            vec![
                p.i.to_string(),
                p.j.to_string(),
                num(p.empirical_rate),
                num(p.bhatt_bound),
                num(p.halfwidth),
            ]
        })
        .collect();
    let mut out = Artifacts::new("simulate", cfg)?;
    out.json(
        "sim_report.json",
        &SimulationDoc {
            positions: sub.positions(),
            report: &report,
            gate,
        },
    )?;
    out.csv(
        "pairwise.csv",
        &["i", "j", "empirical_rate", "bhatt_bound", "halfwidth"],
        &pairs,
    )?;
    finish(out.written, failures)
}
