use std::path::Path;
use std::process::{Command, Output};

use homographic::io::{to_json_string, TrajectoryTable};
use homographic::solver::MinimaCatalog;
use serde_json::Value;

fn homographic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homographic"))
        .args(args)
        .env_remove("NBODY_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn solve_equal_masses() {
    let dir = tempfile::tempdir().unwrap();
    let out = homographic(&[
        "solve",
        "--masses",
        "1,1,1",
        "--lambda",
        "0.5",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("catalog.json")).unwrap();
    let catalog: MinimaCatalog = serde_json::from_str(&text).unwrap();
    assert!((catalog.best().unwrap().result.c_estimate - 3.0).abs() <= 1e-6);
    // JSON output reads back and re-emits to the same bytes.
    assert_eq!(to_json_string(&catalog).unwrap(), text);
}

#[test]
fn solve_two_bodies_finds_one_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = homographic(&[
        "solve",
        "--masses",
        "1,1",
        "--starts",
        "20",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        json(&dir.path().join("catalog.json"))["entries"]
            .as_array()
            .unwrap()
            .len(),
        1
    );
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&homographic(&[
            "solve",
            "--lambda",
            "0.5",
            "--out",
            path(dir.path())
        ])),
        1
    );
    assert_eq!(
        code(&homographic(&[
            "solve",
            "--masses",
            "1,-1",
            "--out",
            path(dir.path())
        ])),
        1
    );
    assert_eq!(code(&homographic(&["solve", "--bogus"])), 1);
    assert_eq!(code(&homographic(&["frobnicate"])), 1);
    assert_eq!(code(&homographic(&["--help"])), 0);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"masses": [1.0, 2.0], "starts": 3, "seed": 9}"#).unwrap();
    let a = dir.path().join("a");
    assert_eq!(
        code(&homographic(&[
            "solve",
            "--config",
            path(&config),
            "--out",
            path(&a)
        ])),
        0
    );
    let catalog = json(&a.join("catalog.json"));
    assert_eq!(catalog["n_starts"], 3);
    assert_eq!(catalog["rng_seed"], 9);

    let b = dir.path().join("b");
    let args = [
        "solve",
        "--config",
        path(&config),
        "--starts",
        "4",
        "--seed",
        "2",
        "--out",
        path(&b),
    ];
    assert_eq!(code(&homographic(&args)), 0);
    let catalog = json(&b.join("catalog.json"));
    assert_eq!(catalog["n_starts"], 4);
    assert_eq!(catalog["rng_seed"], 2);

    std::fs::write(&config, r#"{"masses": [1.0, 2.0], "unknown": 1}"#).unwrap();
    assert_eq!(
        code(&homographic(&[
            "solve",
            "--config",
            path(&config),
            "--out",
            path(&b)
        ])),
        1
    );
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, env: Option<&str>| {
        let out = dir.path().join(sub);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_homographic"));
        cmd.args([
            "solve",
            "--masses",
            "1,2,3",
            "--starts",
            "5",
            "--out",
            path(&out),
        ]);
        match env {
            Some(v) => cmd.env("NBODY_SEED", v),
            None => cmd.env_remove("NBODY_SEED"),
        };
        assert_eq!(code(&cmd.output().unwrap()), 0);
        std::fs::read(out.join("catalog.json")).unwrap()
    };
    let first = run("e1", Some("17"));
    let second = run("e2", Some("17"));
    assert_eq!(first, second);
    let catalog: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(catalog["rng_seed"], 17);
    let unseeded: Value = serde_json::from_slice(&run("e3", None)).unwrap();
    assert_eq!(unseeded["rng_seed"], 0);
}

fn trajectory(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["trajectory", "--masses", "1,2,3", "--out", path(dir)];
    args.extend_from_slice(extra);
    homographic(&args)
}

#[test]
fn circular_trajectory_has_constant_size() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&trajectory(
            dir.path(),
            &["--family", "circular", "--samples", "40"]
        )),
        0
    );
    let csv = dir.path().join("trajectory.csv");
    let table = TrajectoryTable::read_file(&csv).unwrap();
    assert_eq!(table.len(), 40);
    let g0 = table.derived[0].g;
    assert!(table.derived.iter().all(|d| (d.g - g0).abs() <= 1e-12 * g0));
    // CSV output reads back and re-emits to the same bytes.
    assert_eq!(
        table.to_csv_string().unwrap(),
        std::fs::read_to_string(&csv).unwrap()
    );
}

#[test]
fn pulsating_trajectory_stays_in_its_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = trajectory(
        dir.path(),
        &[
            "--family",
            "pulsating",
            "--eccentricity",
            "0.36",
            "--samples",
            "101",
        ],
    );
    assert_eq!(code(&out), 0);
    let profile = json(&dir.path().join("profile.json"));
    let bounds = profile["b_bounds"].as_array().unwrap();
    let (lo, hi) = (bounds[0].as_f64().unwrap(), bounds[1].as_f64().unwrap());
    let table = TrajectoryTable::read_file(&dir.path().join("trajectory.csv")).unwrap();
    for d in &table.derived {
        assert!(d.b >= lo * (1.0 - 1e-12) && d.b <= hi * (1.0 + 1e-12));
    }
    let b_min = table
        .derived
        .iter()
        .map(|d| d.b)
        .fold(f64::INFINITY, f64::min);
    assert!((b_min - lo).abs() <= 1e-12 * lo);
}

#[test]
fn trajectory_rejects_unbounded_orbits() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&trajectory(
            dir.path(),
            &["--family", "pulsating", "--omega0", "0"]
        )),
        1
    );
    assert_eq!(
        code(&trajectory(
            dir.path(),
            &["--family", "pulsating", "--eccentricity", "1.0"]
        )),
        1
    );
    assert_eq!(
        code(&trajectory(
            dir.path(),
            &["--family", "pulsating", "--omega0", "2.5"]
        )),
        1
    );
    assert_eq!(code(&trajectory(dir.path(), &["--family", "pulsating"])), 1);
}

#[test]
fn trajectory_from_a_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "solve",
        "--masses",
        "1,1,1,1",
        "--starts",
        "10",
        "--out",
        path(dir.path()),
    ];
    assert_eq!(code(&homographic(&args)), 0);
    let catalog = dir.path().join("catalog.json");
    let args = [
        "trajectory",
        "--catalog",
        path(&catalog),
        "--lambda",
        "2",
        "--out",
        path(dir.path()),
    ];
    assert_eq!(code(&homographic(&args)), 0);
    let spec = json(&dir.path().join("trajectory_spec.json"));
    assert_eq!(spec["lambda"], 2.0);
    let args = [
        "trajectory",
        "--catalog",
        path(&catalog),
        "--entry",
        "99",
        "--out",
        path(dir.path()),
    ];
    assert_eq!(code(&homographic(&args)), 1);
}

#[test]
fn integrate_lagrange_circular_orbit() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&trajectory(dir.path(), &["--samples", "5"])), 0);
    let spec = dir.path().join("trajectory_spec.json");
    let out = homographic(&[
        "integrate",
        "--spec",
        path(&spec),
        "--dt",
        "1e-4",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&dir.path().join("report.json"));
    assert!(
        report["report"]["relative_position_error"]
            .as_f64()
            .unwrap()
            <= 1e-5
    );
    assert_eq!(report["pass"], true);
    let numeric = TrajectoryTable::read_file(&dir.path().join("numeric.csv")).unwrap();
    assert!(numeric.len() > 600);
}

#[test]
fn integrate_reversibility_with_leapfrog() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&trajectory(
            dir.path(),
            &["--family", "pulsating", "--eccentricity", "0.2"]
        )),
        0
    );
    let spec = dir.path().join("trajectory_spec.json");
    let args = [
        "integrate",
        "--spec",
        path(&spec),
        "--dt",
        "1e-3",
        "--method",
        "leapfrog",
        "--reversibility",
        "--drift-tol",
        "1e-5",
        "--position-tol",
        "1e-3",
        "--out",
        path(dir.path()),
    ];
    let out = homographic(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(
        json(&dir.path().join("report.json"))["reversibility_error"]
            .as_f64()
            .unwrap()
            <= 1e-9
    );
}

#[test]
fn integrate_flags_close_encounters() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&trajectory(
            dir.path(),
            &["--family", "pulsating", "--eccentricity", "0.9995"]
        )),
        0
    );
    let spec = dir.path().join("trajectory_spec.json");
    let out = homographic(&[
        "integrate",
        "--spec",
        path(&spec),
        "--dt",
        "1e-3",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 2);
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["report"]["collided"], true);
    assert!(report["collision"].is_object());
}

#[test]
fn verify_circular_and_pulsating_csv() {
    for (family, extra) in [
        ("circular", vec![]),
        ("pulsating", vec!["--eccentricity", "0.36"]),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let mut args = vec!["--family", family, "--samples", "60"];
        args.extend(extra);
        assert_eq!(code(&trajectory(dir.path(), &args)), 0);
        let csv = dir.path().join("trajectory.csv");
        let spec = dir.path().join("trajectory_spec.json");
        let out = homographic(&[
            "verify",
            "--csv",
            path(&csv),
            "--spec",
            path(&spec),
            "--out",
            path(dir.path()),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
        let table = TrajectoryTable::read_file(&dir.path().join("verify.csv")).unwrap();
        let ratio = table.column("ratio").unwrap();
        let g = table.column("G").unwrap();
        for (r, g) in ratio.iter().zip(g) {
            assert!((r - g).abs() <= 1e-8);
            if family == "circular" {
                assert!((r - 1.0).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn verify_flags_a_non_flat_csv() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&trajectory(dir.path(), &["--embed-3d", "--samples", "10"])),
        0
    );
    let csv = dir.path().join("trajectory.csv");
    let mut table = TrajectoryTable::read_file(&csv).unwrap();
    let state = &mut table.trajectory.states[4];
    let mut coords = state.config.coords().to_vec();
    coords[2] = 0.05;
    *state = homographic::PhaseState::new(
        homographic::Configuration::new(3, coords).unwrap(),
        state.velocities().to_vec(),
    )
    .unwrap();
    let edited = dir.path().join("edited.csv");
    table.write_file(&edited).unwrap();
    let out = homographic(&[
        "verify",
        "--csv",
        path(&edited),
        "--masses",
        "1,2,3",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 2);
    let report = json(&dir.path().join("verify.json"));
    assert!(!report["violations"].as_array().unwrap().is_empty());
    assert_eq!(report["flatness"]["max_abs_z"], 0.05);
    // The untouched file passes.
    let out = homographic(&[
        "verify",
        "--csv",
        path(&csv),
        "--masses",
        "1,2,3",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let produce = |sub: &str| {
        let out = dir.path().join(sub);
        let args = [
            "trajectory",
            "--masses",
            "1,2,3",
            "--family",
            "pulsating",
            "--eccentricity",
            "-0.3",
            "--out",
            path(&out),
        ];
        assert_eq!(code(&homographic(&args)), 0);
        let spec = out.join("trajectory_spec.json");
        let args = [
            "integrate",
            "--spec",
            path(&spec),
            "--dt",
            "1e-3",
            "--out",
            path(&out),
        ];
        assert_eq!(code(&homographic(&args)), 0);
        [
            "trajectory.csv",
            "trajectory_spec.json",
            "profile.json",
            "numeric.csv",
            "report.json",
        ]
        .map(|f| std::fs::read(out.join(f)).unwrap())
    };
    assert_eq!(produce("a"), produce("b"));
}
