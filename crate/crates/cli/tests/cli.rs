use std::process::{Command, Output};

fn brcomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brcomp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// First tab-separated field of a text-mode answer.
fn value(o: &Output) -> f64 {
    assert!(o.status.success(), "stderr: {}", stderr(o));
    stdout(o)
        .split('\t')
        .next()
        .unwrap()
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn delta_examples() {
    let o = brcomp(&[
        "delta",
        "--eps",
        "1",
        "--k",
        "1",
        "--eps-g",
        "0",
        "--method",
        "br-optcomp",
    ]);
    assert!(stdout(&o).starts_with("0.244918662404\t"));
    assert!(stderr(&o).is_empty());
    let o = brcomp(&[
        "delta",
        "--eps",
        "1",
        "--k",
        "4",
        "--eps-g",
        "4",
        "--method",
        "br-optcomp",
    ]);
    assert_eq!(value(&o), 0.0);
    let o = brcomp(&[
        "delta", "--eps", "1", "--k", "30", "--eps-g", "100", "--method", "mgf",
    ]);
    assert!(value(&o) <= 1.0);
}

#[test]
fn epsilon_examples() {
    let o = brcomp(&[
        "epsilon",
        "--eps",
        "0.1",
        "--k",
        "30",
        "--delta-g",
        "1e-6",
        "--method",
        "basic",
    ]);
    assert_eq!(value(&o), 3.0);
    let o = brcomp(&[
        "epsilon",
        "--eps",
        "0.01",
        "--k",
        "10000",
        "--delta-g",
        "1e-6",
        "--method",
        "optkl",
    ]);
    let v = value(&o);
    assert!((v - 2.7533).abs() < 1e-3, "{v}");
}

#[test]
fn br_optcomp_round_trip() {
    let o = brcomp(&[
        "epsilon",
        "--eps",
        "0.3",
        "--k",
        "12",
        "--delta-g",
        "1e-5",
        "--method",
        "br-optcomp",
    ]);
    let g = stdout(&o).split('\t').next().unwrap().trim().to_string();
    let o = brcomp(&[
        "delta",
        "--eps",
        "0.3",
        "--k",
        "12",
        "--eps-g",
        &g,
        "--method",
        "br-optcomp",
    ]);
    let d = value(&o);
    assert!((d - 1e-5).abs() <= 1e-8 * 1e-5, "{d}");
}

#[test]
fn eps_g_nonincreasing_in_delta_g() {
    for m in [
        "br-optcomp",
        "dp-optcomp",
        "dp-optcomp-half",
        "mgf",
        "optkl",
        "dr19",
        "drv10",
        "basic",
    ] {
        let vals: Vec<f64> = ["1e-9", "1e-6", "1e-3"]
            .iter()
            .map(|d| {
                value(&brcomp(&[
                    "epsilon",
                    "--eps",
                    "0.2",
                    "--k",
                    "20",
                    "--delta-g",
                    d,
                    "--method",
                    m,
                ]))
            })
            .collect();
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2], "{m}: {vals:?}");
    }
}

#[test]
fn curve_csv_to_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let o = brcomp(&[
        "curve",
        "--eps",
        "0.1",
        "--k-max",
        "5",
        "--delta-g",
        "1e-6",
        "--methods",
        "optkl,br-optcomp",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,method,eps,delta_g,eps_g,solver_meta"));
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 10);
    // sorted by method, then k
    assert!(rows[..5].iter().all(|r| r[1] == "br-optcomp"));
    assert_eq!(rows[0][0], "1");
    assert_eq!(rows[4][0], "5");
    for r in rows.iter().step_by(2) {
        let again = brcomp(&[
            "epsilon",
            "--eps",
            &r[2],
            "--k",
            &r[0],
            "--delta-g",
            &r[3],
            "--method",
            &r[1],
        ]);
        let printed: f64 = r[4].parse().unwrap();
        assert!((value(&again) - printed).abs() <= 1e-9, "{r:?}");
    }
}

#[test]
fn curve_single_row_matches_epsilon() {
    let o = brcomp(&[
        "curve",
        "--eps",
        "0.5",
        "--k-max",
        "1",
        "--delta-g",
        "1e-4",
        "--methods",
        "mgf",
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["method"], "mgf");
    let e = value(&brcomp(&[
        "epsilon",
        "--eps",
        "0.5",
        "--k",
        "1",
        "--delta-g",
        "1e-4",
        "--method",
        "mgf",
    ]));
    assert!((rows[0]["eps_g"].as_f64().unwrap() - e).abs() < 1e-11);
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("x.csv");
    let o = brcomp(&[
        "curve",
        "--eps",
        "0.1",
        "--k-max",
        "2",
        "--delta-g",
        "1e-6",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).is_empty());
}

#[test]
fn gap_certificates() {
    let o = brcomp(&["gap", "--eps", "1", "--k", "4", "--eps-g", "0.5"]);
    let c: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(c["strict"], true);
    let o = brcomp(&["gap", "--eps", "1", "--k", "4", "--eps-g", "3.5"]);
    let c: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(c["strict"], false);
    let o = brcomp(&["gap", "--eps", "1", "--k", "2", "--eps-g", "0"]);
    let c: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(c["strict"], true);
}

#[test]
fn refusals_exit_3() {
    let o = brcomp(&["gap", "--eps", "1", "--k", "9", "--eps-g", "0.5"]);
    assert_eq!(o.status.code(), Some(3));
    let o = brcomp(&[
        "delta",
        "--eps",
        "1",
        "--k",
        "9",
        "--eps-g",
        "0.5",
        "--method",
        "adaptive-lb",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let o = brcomp(&[
        "gap", "--eps", "1", "--k", "2", "--eps-g", "0", "--t-grid", "1",
    ]);
    assert_eq!(o.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eps.txt");
    std::fs::write(&path, "0.1\n0.2\n0.3\n0.4\n").unwrap();
    let o = brcomp(&[
        "delta",
        "--eps-file",
        path.to_str().unwrap(),
        "--eps-g",
        "0.1",
        "--method",
        "br-optcomp",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("open problem"));
}

#[test]
fn bad_input_exits_2() {
    let o = brcomp(&[
        "delta",
        "--eps",
        "-1",
        "--eps-g",
        "0",
        "--method",
        "br-optcomp",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = brcomp(&[
        "epsilon",
        "--eps",
        "1",
        "--k",
        "3",
        "--delta-g",
        "0.5",
        "--method",
        "edge-low",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unreachable"));
    let o = brcomp(&["delta", "--eps", "1", "--eps-g", "0", "--method", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn heterogeneous_eps_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eps.txt");
    std::fs::write(&path, "# budget\n0.1\n\n0.2\n0.3  # last\n").unwrap();
    let o = brcomp(&[
        "delta",
        "--eps-file",
        path.to_str().unwrap(),
        "--eps-g",
        "0.1",
        "--method",
        "dp-optcomp",
    ]);
    assert!(value(&o) > 0.0);
    let o = brcomp(&[
        "epsilon",
        "--eps-file",
        path.to_str().unwrap(),
        "--delta-g",
        "1e-6",
        "--method",
        "basic",
    ]);
    assert!((value(&o) - 0.6).abs() < 1e-12);
}

#[test]
fn validate_fast_is_deterministic() {
    let a = brcomp(&["validate", "--level", "fast", "--seed", "5"]);
    assert!(a.status.success(), "{}", stdout(&a));
    assert!(stdout(&a).lines().all(|l| l.starts_with("PASS\t")));
    let b = brcomp(&["--sequential", "validate", "--level", "fast", "--seed", "5"]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn thread_count_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_brcomp"))
        .args([
            "curve",
            "--eps",
            "0.1",
            "--k-max",
            "3",
            "--delta-g",
            "1e-6",
            "--methods",
            "br-optcomp",
        ])
        .env("BRCOMP_THREADS", "2")
        .output()
        .unwrap();
    let serial = brcomp(&[
        "--sequential",
        "curve",
        "--eps",
        "0.1",
        "--k-max",
        "3",
        "--delta-g",
        "1e-6",
        "--methods",
        "br-optcomp",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), stdout(&serial));
}
