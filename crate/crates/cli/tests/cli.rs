use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crnosc::export::{from_json, read_boundary_csv, read_scan_csv, read_trajectory_csv};
use serde_json::Value;

fn networks(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../networks")
        .join(name)
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crnosc"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(dir: &Path, name: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(name)).unwrap();
    from_json::<Value>(&text).unwrap().data
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn analyze_fb_point_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "analyze", "--model", "fb", "--k6", "0.187", "--k8", "0.0052",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let d = json(dir.path(), "analysis.json");
    assert_eq!(d["stability"]["classification"], "stable");
    assert_eq!(d["structure"]["deficiency"], 1);
    assert!(d["detailed_balance"]["verdict"].is_string());
    assert!(stderr(&o).contains("wrote"));
}

#[test]
fn analyze_edelstein_has_no_uniqueness_flag() {
    let dir = tempfile::tempdir().unwrap();
    let file = networks("edelstein.crn");
    let o = run(dir.path(), &["analyze", "--file", file.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let d = json(dir.path(), "analysis.json");
    assert_eq!(d["structure"]["deficiency"], 1);
    assert_eq!(d["structure"]["num_linkage_classes"], 2);
    let flags: Vec<&str> = d["structure"]["flags"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap())
        .collect();
    assert!(!flags.contains(&"UniquePositiveEquilibrium"), "{flags:?}");
    assert!(d["equilibrium"].is_null());
}

#[test]
fn garbage_exits_one_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let file = networks("garbage.crn");
    let o = run(dir.path(), &["analyze", "--file", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("garbage.crn:1:"), "{err}");
    assert!(!dir.path().join("analysis.json").exists());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let zero = run(
        dir.path(),
        &[
            "hopf-scan",
            "--model",
            "fb",
            "--p1",
            "k6:0.2:0.2",
            "--p2",
            "k8:0.01:0.6",
        ],
    );
    assert_eq!(zero.status.code(), Some(2));
    let unknown = run(dir.path(), &["stability", "--model", "wh", "--p", "3"]);
    assert_eq!(unknown.status.code(), Some(2), "{}", stderr(&unknown));
    let bad_flag = run(dir.path(), &["analyze", "--no-such-flag"]);
    assert_eq!(bad_flag.status.code(), Some(2));
    let both = run(dir.path(), &["analyze", "--model", "fb", "--file", "x.crn"]);
    assert_eq!(both.status.code(), Some(2));
}

#[test]
fn focal_off_boundary_is_an_analysis_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["focal", "--model", "wh"]);
    assert_eq!(o.status.code(), Some(1));
    let root = (3.0 - 7f64.sqrt()) / 2.0;
    let o = run(
        dir.path(),
        &["focal", "--model", "wh-h", "--t", &root.to_string()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let d = json(dir.path(), "focal.json");
    assert!(d["focal_value"]["l1"].as_f64().unwrap() < 0.0);
    assert_eq!(d["criticality"], "supercritical");
}

#[test]
fn whh_scan_finds_degenerate_point_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "hopf-scan",
        "--model",
        "wh-h",
        "--fix",
        "q=1,r=2,s=1",
        "--p1",
        "t:0.05:4",
        "--p2",
        "p:4:12",
        "--res",
        "40",
    ];
    let o = run(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let d = json(dir.path(), "scan.json");
    let deg = d["degenerate_points"].as_array().unwrap();
    assert_eq!(deg.len(), 1);
    let s = 2f64.sqrt();
    assert!((deg[0]["p1"].as_f64().unwrap() - (1.0 + s)).abs() < 1e-6);
    assert!((deg[0]["p2"].as_f64().unwrap() - 3.0 * (1.0 + s)).abs() < 1e-6);

    let scan =
        read_scan_csv(&std::fs::read_to_string(dir.path().join("scan.csv")).unwrap()).unwrap();
    assert_eq!(scan.len(), 40 * 40);
    let boundary =
        read_boundary_csv(&std::fs::read_to_string(dir.path().join("boundary.csv")).unwrap())
            .unwrap();
    assert_eq!(
        boundary.len() as u64,
        d["boundary_points"].as_u64().unwrap()
    );
    let svg = std::fs::read_to_string(dir.path().join("diagram.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = run(
            dir.path(),
            &[
                "--seed",
                "9",
                "permanence",
                "--model",
                "fb-h",
                "--samples",
                "4",
                "--transient",
                "50",
                "--window",
                "50",
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let o = run(
            dir.path(),
            &[
                "hopf-scan",
                "--model",
                "fb",
                "--p1",
                "k6:0.05:0.4",
                "--p2",
                "k8:0.01:0.6",
                "--res",
                "12",
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let o = run(
            dir.path(),
            &[
                "simulate",
                "--model",
                "wh",
                "--k",
                "3.5,1,1,1,1",
                "--horizon",
                "50",
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in [
        "permanence.json",
        "scan.csv",
        "boundary.csv",
        "scan.json",
        "diagram.svg",
        "trajectory.csv",
        "simulation.json",
    ] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
    let d = json(a.path(), "permanence.json");
    assert_eq!(d["report"]["seed"], 9);
}

#[test]
fn wh_past_threshold_has_one_stable_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["cycles", "--model", "wh", "--k", "3.5,1,1,1,1"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let d = json(dir.path(), "cycles.json");
    assert_eq!(d["classification"], "unstable");
    assert_eq!(d["search"]["outcome"], "cycle");
    assert_eq!(d["search"]["stability"], "stable");
    let tr = read_trajectory_csv(&std::fs::read_to_string(dir.path().join("cycle.csv")).unwrap())
        .unwrap();
    assert_eq!(tr.species, ["X", "Y", "Z"]);
    assert!(!dir.path().join("unstable_cycle.csv").exists());
}

#[test]
fn fb_cycles_reports_both() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["cycles", "--model", "fb", "--k6", "0.187", "--k8", "0.0052"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let d = json(dir.path(), "cycles.json");
    let b = &d["bistability"];
    assert!(b["stable_cycle"]["spectral_radius"].as_f64().unwrap() < 1.0);
    assert!(b["unstable_cycle"]["spectral_radius"].as_f64().unwrap() > 1.0);
    assert!(dir.path().join("unstable_cycle.csv").exists());
}

#[test]
fn simulate_follows_classification() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "simulate",
            "--model",
            "w-h",
            "--p",
            "6",
            "--q",
            "1",
            "--r",
            "1",
            "--t0",
            "near-eq",
            "--horizon",
            "2000",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let d = json(dir.path(), "simulation.json");
    assert_eq!(d["classification"], "stable");
    assert!(d["distance_to_equilibrium"].as_f64().unwrap() < 1e-6);
    let tr =
        read_trajectory_csv(&std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap())
            .unwrap();
    assert_eq!(tr.times.len(), 2001);
    let mass = |x: &[f64]| x.iter().sum::<f64>();
    assert!((mass(&tr.states[0]) - mass(tr.states.last().unwrap())).abs() < 1e-7);
}

#[test]
fn file_network_with_rates() {
    let dir = tempfile::tempdir().unwrap();
    let rates = dir.path().join("rates.txt");
    std::fs::write(
        &rates,
        "k1 = 1\nk2 = 1\nk3 = 1\nk4 = 1\nk5 = 1\nk6 = 1\nk7 = 1\nk8 = 1\n",
    )
    .unwrap();
    let file = networks("fb.crn");
    let o = run(
        dir.path(),
        &[
            "--format",
            "csv",
            "equilibria",
            "--file",
            file.to_str().unwrap(),
            "--rates",
            rates.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with("species,newton\n"), "{out}");
    let d = json(dir.path(), "equilibria.json");
    assert!(d["newton_residual"].as_f64().unwrap() < 1e-10);
}

#[test]
fn parse_prints_canonical_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["parse", "--model", "wh"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("#! species: X, Y, Z\n"));
    assert_eq!(text.lines().count(), 6);
}
