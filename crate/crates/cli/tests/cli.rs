use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn aderdec(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aderdec"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn field(row: &[String], i: usize) -> f64 {
    row[i].parse().unwrap()
}

#[test]
fn solve_robertson_geometric() {
    let dir = tempfile::tempdir().unwrap();
    let out = aderdec(
        &[
            "solve", "--problem", "robertson", "--method", "imader", "--order", "3", "--family", "lobatto",
            "--schedule", "geometric", "--dt0", "1e-6", "--tend", "1e11", "--out", "traj.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&dir.path().join("traj.csv"));
    assert_eq!(header, ["t", "y_1", "y_2", "y_3", "y_2_x1e4"]);
    let last = rows.last().unwrap();
    assert_eq!(field(last, 0), 1e11);
    let sum: f64 = (1..=3).map(|i| field(last, i)).sum();
    assert!((sum - 1.0).abs() < 1e-10, "mass {sum}");
    assert!(field(last, 3) > 0.99);

    let meta: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(meta["command"], "solve");
    assert_eq!(meta["config"]["problem"], "robertson");
    assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(meta["mass_condition_number"].as_f64().unwrap() >= 1.0);
}

#[test]
fn solve_to_stdout_with_steps() {
    let dir = tempfile::tempdir().unwrap();
    let out = aderdec(
        &["solve", "--problem", "linear", "--method", "dec", "--order", "4", "--steps", "10"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,y_1"));
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - 0.1).abs() < 1e-15);
    assert!((last[1] - 1f64.exp()).abs() < 1e-5);
}

#[test]
fn stability_grid_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = aderdec(
        &[
            "stability", "--method", "dec", "--order", "2", "--family", "lobatto", "--re-min", "-3", "--re-max", "1",
            "--im-min", "-2", "--im-max", "2", "--nx", "41", "--ny", "41", "--out", "grid.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&dir.path().join("grid.csv"));
    assert_eq!(header, ["re", "im", "amp"]);
    assert_eq!(rows.len(), 41 * 41);
    let origin = rows
        .iter()
        .find(|r| field(r, 0) == 0.0 && field(r, 1) == 0.0)
        .expect("grid contains z = 0");
    assert!((field(origin, 2) - 1.0).abs() < 1e-12);

    let meta: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let summary = &meta["details"]["summary"];
    assert_eq!(summary["total_cells"], 41 * 41);
    let members = rows.iter().filter(|r| field(r, 2) < 1.0).count();
    assert_eq!(summary["member_cells"].as_u64().unwrap() as usize, members);
}

#[test]
fn converge_pde_advection_rates() {
    let dir = tempfile::tempdir().unwrap();
    let out = aderdec(
        &[
            "converge", "--problem", "advection", "--pde", "--method", "ader", "--order", "3", "--elements",
            "8,16,32,64", "--out", "conv.csv", "--json", "conv.json",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&dir.path().join("conv.csv"));
    assert_eq!(&header[..3], ["dt_or_dx", "error", "rate"]);
    assert_eq!(rows.len(), 4);
    assert!(rows[0][2].is_empty());
    for r in &rows[1..] {
        assert!((field(r, 2) - 3.0).abs() < 0.3, "rate {}", r[2]);
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("conv.json")).unwrap()).unwrap();
    assert_eq!(json["details"]["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn converge_ode_dt_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = aderdec(
        &[
            "converge", "--problem", "linear", "--method", "ader", "--order", "4", "--family", "legendre", "--dt",
            "0.005,0.02,0.01",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    let dts: Vec<f64> = rows.iter().map(|r| field(r, 0)).collect();
    assert_eq!(dts, [0.02, 0.01, 0.005]);
    for r in &rows[1..] {
        assert!((field(r, 2) - 4.0).abs() < 0.3);
    }
}

#[test]
fn pde_solve_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = aderdec(
        &[
            "pde-solve", "--problem", "burgers", "--method", "dec", "--order", "3", "--elements", "16", "--times",
            "0,0.05", "--out", "snaps/u.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for i in 0..2 {
        let (header, rows) = csv_rows(&dir.path().join(format!("snaps/u_{i}.csv")));
        assert_eq!(header, ["x", "u"]);
        assert_eq!(rows.len(), 16 * 3);
    }
    let meta: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(meta["details"]["snapshots"].as_array().unwrap().len(), 2);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["solve", "--problem", "nope", "--method", "dec", "--dt", "0.1"],
        &["solve", "--problem", "linear", "--method", "rk4", "--dt", "0.1"],
        &["solve", "--problem", "linear", "--method", "dec", "--family", "chebyshev", "--dt", "0.1"],
        &["solve", "--problem", "linear", "--method", "dec", "--dt", "1e-x"],
        &["solve", "--problem", "linear", "--method", "dec"],
        &["solve", "--problem", "linear", "--method", "dec", "--order", "14", "--dt", "0.1"],
        &["converge", "--problem", "advection", "--pde", "--method", "imdec", "--elements", "8,16"],
        &["converge", "--problem", "linear", "--method", "dec"],
        &["stability", "--method", "dec", "--nx", "1"],
        &["frobnicate"],
    ];
    for args in cases {
        let out = aderdec(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = aderdec(
        &[
            "solve", "--problem", "robertson", "--method", "ader", "--schedule", "geometric", "--dt0", "1e-6",
            "--out", "x.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("divergence"));
}

#[test]
fn manifest_runs_every_entry() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = serde_json::json!({
        "description": "smoke",
        "runs": [
            { "name": "lin", "figure": "t", "args": ["solve", "--problem", "linear", "--method", "dec", "--dt", "0.01", "--out", "data/lin.csv"] },
            { "name": "stab", "args": ["stability", "--method", "ader", "--order", "2", "--nx", "5", "--ny", "5", "--out", "data/stab.csv", "--summary", "data/stab.json"] },
            { "name": "rob-explicit", "expect_divergence": true, "args": ["solve", "--problem", "robertson", "--method", "dec", "--steps", "30", "--schedule", "geometric", "--ratio", "1.5", "--out", "data/rob.csv"] }
        ]
    });
    let path = dir.path().join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    let out = aderdec(&["manifest", path.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("data/lin.csv").exists());
    assert!(dir.path().join("data/stab.csv").exists());
    assert!(dir.path().join("data/stab.json").exists());
    assert!(dir.path().join("data/lin.json").exists());
    assert!(out.stdout.is_empty());

    let other = tempfile::tempdir().unwrap();
    let out = aderdec(
        &["manifest", path.to_str().unwrap(), "--out-dir", other.path().to_str().unwrap(), "--filter", "stab"],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(other.path().join("data/stab.csv").exists());
    assert!(!other.path().join("data/lin.csv").exists());
}

#[test]
fn manifest_with_bad_id_runs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = r#"{"runs":[
        {"name":"ok","args":["solve","--problem","linear","--method","dec","--dt","0.01","--out","a.csv"]},
        {"name":"bad","args":["solve","--problem","unknown","--method","dec","--dt","0.01"]}]}"#;
    let path = dir.path().join("m.json");
    fs::write(&path, manifest).unwrap();
    let out = aderdec(&["manifest", "m.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("a.csv").exists());
}

#[test]
fn repository_manifest_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments/manifest.json");
    let text = fs::read_to_string(&path).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
    let runs = manifest["runs"].as_array().unwrap();
    assert!(!runs.is_empty());
    let subcommands: Vec<&str> = runs.iter().map(|r| r["args"][0].as_str().unwrap()).collect();
    for cmd in ["solve", "converge", "stability", "pde-solve"] {
        assert!(subcommands.contains(&cmd), "manifest lacks {cmd}");
    }
    let out = aderdec(&["manifest", path.to_str().unwrap(), "--check"], Path::new("."));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
