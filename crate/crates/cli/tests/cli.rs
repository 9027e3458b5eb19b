use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use embodied_core::codebook::read_codebook_csv;

fn embodied(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embodied"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Non-comment lines of a CSV artifact.
fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

#[test]
fn field_default_grid_and_rerun_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["field", "--set", "field.grid_n=21"];
    assert!(embodied(&a, &args).status.success());
    assert!(embodied(&b, &args).status.success());

    let grid = data_lines(&a.join("field_grid.csv"));
    assert_eq!(grid[0], "dy,dz,b_exact,b_quadratic");
    assert_eq!(grid.len(), 1 + 21 * 21);
    // The origin row carries a zero field.
    let centre: Vec<f64> = grid[1 + 10 * 21 + 10]
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(&centre[..3], &[0.0, 0.0, 0.0]);

    for name in ["field_grid.csv", "field_polar.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap()
        );
    }
    let text = fs::read_to_string(a.join("field_grid.csv")).unwrap();
    assert!(text.starts_with("# embodied field\n# seed = 1\n"));
    assert!(text.contains("# m_y = 64"));
}

#[test]
fn empty_field_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = embodied(dir.path(), &["field", "--set", "field.grid_n=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("field.grid_n"));
    assert!(!dir.path().join("field_grid.csv").exists());
}

#[test]
fn unknown_keys_and_bad_values_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = embodied(dir.path(), &["field", "--set", "scene.bogus=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"));

    let o = embodied(dir.path(), &["field", "--set", "eps=0.7"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`eps`"));

    let o = embodied(dir.path(), &["field", "--set", "scene.distance=-3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scene.distance"));

    let o = embodied(dir.path(), &["field", "--set", "no_equals_sign"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn empty_sweep_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["sweep", "bounds"] {
        let o = embodied(dir.path(), &[cmd, "--set", "sweep.snapshots=[]"]);
        assert_eq!(o.status.code(), Some(1), "{cmd}");
        assert!(stderr(&o).contains("sweep.snapshots"));
    }
}

#[test]
fn config_file_is_read_and_overrides_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "seed = 9\n[field]\ngrid_n = 5\n[scene]\nsnr_db = 20.0\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = embodied(
        &out,
        &[
            "field",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "field.grid_n=7",
            "--seed",
            "11",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_lines(&out.join("field_grid.csv")).len(), 1 + 49);
    let text = fs::read_to_string(out.join("field_grid.csv")).unwrap();
    assert!(text.contains("# seed = 11"));
    assert!(text.contains("# snr_db = 20.0"));
}

#[test]
fn missing_config_file_and_unwritable_output_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = embodied(dir.path(), &["field", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(3));

    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = embodied(&blocker.join("sub"), &["field", "--set", "field.grid_n=3"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn asymmetric_codebook_is_denser_along_y_and_reimports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cb");
    let o = embodied(
        &out,
        &[
            "codebook",
            "--set",
            "array.m_z=32",
            "--set",
            "scene.snr_db=25",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("codebook_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["run"]["config"]["array"]["m_z"], 32);
    assert_eq!(manifest["anisotropy"]["finer_axis"], "y");
    assert_eq!(manifest["anisotropy"]["denser_along_finer_axis"], true);
    assert_eq!(manifest["reverification"]["feasible"], true);
    assert_eq!(manifest["reverification"]["matches_design_report"], true);
    let j = manifest["report"]["j"].as_u64().unwrap();
    assert!(j >= 2);

    let csv = out.join("codebook.csv");
    let positions =
        read_codebook_csv(std::io::BufReader::new(fs::File::open(&csv).unwrap())).unwrap();
    assert_eq!(positions.len() as u64, j);

    // Verification-only run on the exported file.
    let again = dir.path().join("verify");
    let file_arg = format!("codebook.file={}", csv.display());
    let o = embodied(
        &again,
        &[
            "codebook",
            "--set",
            "array.m_z=32",
            "--set",
            "scene.snr_db=25",
            "--set",
            "codebook.source=file",
            "--set",
            &file_arg,
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let m2: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(again.join("codebook_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m2["report"]["j"].as_u64(), Some(j));
    assert!(m2.get("anisotropy").is_none());
}

#[test]
fn infeasible_imported_codebook_fails_the_gate() {
    let dir = tempfile::tempdir().unwrap();
    let o = embodied(
        dir.path(),
        &[
            "codebook",
            "--set",
            "codebook.source=list",
            "--set",
            "codebook.positions=[[0.0,0.0],[0.001,0.0]]",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    // Artifacts are still written for inspection.
    assert!(dir.path().join("codebook_manifest.json").exists());
}

#[test]
fn empty_plane_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = embodied(dir.path(), &["codebook", "--set", "scene.extent_y=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scene.extent_y"));
}

const PAIR: [&str; 4] = [
    "--set",
    "codebook.source=list",
    "--set",
    "codebook.positions=[[0.0,0.0],[0.02,0.0]]",
];

#[test]
fn two_codeword_simulation_is_fast_and_sound() {
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let o = embodied(dir.path(), &[&["simulate"][..], &PAIR].concat());
    let secs = t.elapsed().as_secs_f64();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(secs < 10.0, "took {secs} s");
    let pairs = data_lines(&dir.path().join("pairwise.csv"));
    assert_eq!(pairs[0], "i,j,empirical_rate,bhatt_bound,halfwidth");
    assert_eq!(pairs.len(), 3);
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sim_report.json")).unwrap())
            .unwrap();
    assert_eq!(doc["report"]["trials"], 20_000);
    assert_eq!(doc["gate"]["union_bound_holds"], true);
}

#[test]
fn simulation_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = embodied(
            &out,
            &[
                &["simulate", "--seed", seed, "--set", "solver.trials=500"][..],
                &PAIR,
            ]
            .concat(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("pairwise.csv")).unwrap()
    };
    let a = run("a", "3");
    assert_eq!(a, run("b", "3"));
    assert_ne!(a, run("c", "4"));
}

#[test]
fn self_test_trips_the_soundness_gate() {
    let dir = tempfile::tempdir().unwrap();
    let o = embodied(
        dir.path(),
        &[
            &[
                "simulate",
                "--set",
                "solver.trials=500",
                "--set",
                "simulate.self_test=true",
            ][..],
            &PAIR,
        ]
        .concat(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("union bound"));
}

#[test]
fn sweep_flags_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = embodied(
        dir.path(),
        &[
            "sweep",
            "--set",
            "sweep.snr_db=[15.0, 20.0, 25.0]",
            "--set",
            "sweep.snapshots=[1, 5]",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_lines(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 1 + 6);
    for r in &rows[1..] {
        assert!(r.ends_with(",true,true"), "{r}");
    }
    let lstar = data_lines(&dir.path().join("lstar.csv"));
    assert_eq!(lstar.len(), 1 + 3);
    assert!(lstar[1..].iter().all(|r| r.ends_with(",true")));
}

#[test]
fn bounds_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = embodied(
        dir.path(),
        &[
            "bounds",
            "--set",
            "sweep.snr_db=[20.0]",
            "--set",
            "sweep.snapshots=[5]",
            "--set",
            "array.m_y=16",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_lines(&dir.path().join("bounds.csv"));
    assert_eq!(
        rows[0],
        "gamma0,L,rate_lower,c_info_universal,c_info_support_grid,c_geo,c_geo_mainlobe,d_nec,l_star_cont,l_star_int"
    );
    let v: Vec<f64> = rows[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert!((v[0] - 100.0).abs() < 1e-9);
    assert_eq!(v[1], 5.0);
    // Achievable rate under each converse.
    assert!(v[2] <= v[3] && v[2] <= v[5]);
}

#[test]
fn lstar_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let o = embodied(dir.path(), &["lstar", "--set", "sweep.snr_db=[20.0]"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curves = data_lines(&dir.path().join("lstar_curves.csv"));
    assert_eq!(curves[0], "gamma0_db,L,j,normalized_rate");
    assert!(curves.len() > 5);
}
