use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fuzzyloop"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn small_grid_writes_csv_svg_and_metadata() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["strutt", "--grid", "3x3", "--out-dir", "out"]);
    let csv = fs::read_to_string(tmp.path().join("out/strutt.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "beta1,beta2,sigma,h11,h12,h21,h22,class");
    assert_eq!(lines.len(), 10);
    let meta = json(&tmp.path().join("out/strutt.meta.json"));
    assert_eq!(meta["tool"], "fuzzyloop");
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["tolerances"]["step"], 1e-4);
    assert_eq!(meta["config"]["strutt"]["grid"], serde_json::json!([3, 3]));
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
    let svg = fs::read_to_string(tmp.path().join("out/strutt.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<metadata>") && svg.contains("config_sha256"));
}

#[test]
fn outputs_do_not_depend_on_directory_or_workers() {
    let tmp = TempDir::new().unwrap();
    let args = |dir: &'static str, w: &'static str| {
        vec!["strutt", "--grid", "7x5", "--out-dir", dir, "--workers", w]
    };
    ok(tmp.path(), &args("a", "1"));
    ok(tmp.path(), &args("b", "3"));
    for f in [
        "strutt.csv",
        "strutt.meta.json",
        "strutt.svg",
        "strutt.config.toml",
    ] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn flags_override_config_and_configs_replay() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("run.toml"),
        "step = 2e-4\n[strutt]\ngrid = [4, 4]\nbeta1_range = [-2.0, 2.0]\n",
    )
    .unwrap();
    ok(
        tmp.path(),
        &[
            "--config",
            "run.toml",
            "strutt",
            "--grid",
            "3x2",
            "--format",
            "csv",
            "--out-dir",
            "one",
        ],
    );
    let csv = fs::read_to_string(tmp.path().join("one/strutt.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.lines().nth(1).unwrap().starts_with("-2,"));
    let meta = json(&tmp.path().join("one/strutt.meta.json"));
    assert_eq!(meta["tolerances"]["step"], 2e-4);

    ok(
        tmp.path(),
        &[
            "--config",
            "one/strutt.config.toml",
            "strutt",
            "--out-dir",
            "two",
        ],
    );
    for f in ["strutt.csv", "strutt.meta.json"] {
        assert_eq!(
            fs::read(tmp.path().join("one").join(f)).unwrap(),
            fs::read(tmp.path().join("two").join(f)).unwrap()
        );
    }
}

#[test]
fn squeeze_search_finds_the_lambda_four_contour() {
    let tmp = TempDir::new().unwrap();
    let base = [
        "strutt",
        "--grid",
        "31x31",
        "--beta1-range=-11,-9.5",
        "--beta2-range=-7.5,-6",
        "--find-squeeze",
        "4",
    ];
    // no pure squeeze exists, so the default residual bound finds nothing
    ok(
        tmp.path(),
        &[&base[..], &["--out-dir", "tight", "--format", "csv"]].concat(),
    );
    let tight = json(&tmp.path().join("tight/squeeze.json"));
    assert_eq!(tight["squeeze_points"].as_array().unwrap().len(), 0);

    ok(
        tmp.path(),
        &[
            &base[..],
            &[
                "--squeeze-residual",
                "25",
                "--out-dir",
                "loose",
                "--format",
                "csv",
            ],
        ]
        .concat(),
    );
    let loose = json(&tmp.path().join("loose/squeeze.json"));
    let near = loose["squeeze_points"].as_array().unwrap().iter().any(|p| {
        let (b1, b2) = (p["beta1"].as_f64().unwrap(), p["beta2"].as_f64().unwrap());
        (b1 + 10.3).hypot(b2 + 6.9) <= 0.06 && (p["lambda"].as_f64().unwrap() - 4.0).abs() <= 1e-3
    });
    assert!(near);
}

#[test]
fn trajectory_presets_and_formats() {
    let tmp = TempDir::new().unwrap();
    let out = ok(
        tmp.path(),
        &["trajectory", "--preset", "closed-loop", "--out-dir", "t"],
    );
    assert!(out.contains("endpoint-to-start distance"));
    let csv = fs::read_to_string(tmp.path().join("t/trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x,px,y,py,lz\n"));
    assert_eq!(csv.lines().count(), 602);

    ok(
        tmp.path(),
        &[
            "trajectory",
            "--preset",
            "forced-loop",
            "--samples",
            "11",
            "--format",
            "json",
            "--out-dir",
            "j",
        ],
    );
    let doc = json(&tmp.path().join("j/trajectory.json"));
    assert_eq!(doc["trajectory"]["t"].as_array().unwrap().len(), 11);
    assert_eq!(doc["trajectory"]["meta"]["force"]["kind"], "constant");
    assert_eq!(doc["metadata"]["command"], "trajectory");

    ok(
        tmp.path(),
        &[
            "trajectory",
            "--q0",
            "1,0,0,1",
            "--t1",
            "1",
            "--format",
            "svg",
            "--out-dir",
            "s",
        ],
    );
    assert!(fs::read_to_string(tmp.path().join("s/trajectory.svg"))
        .unwrap()
        .contains("<polyline"));
}

#[test]
fn design_outputs_coefficients_and_samples() {
    let tmp = TempDir::new().unwrap();
    let out = ok(
        tmp.path(),
        &[
            "design",
            "--b",
            "2",
            "--c",
            "-3",
            "--protocol",
            "two-pulse",
            "--out-dir",
            "d",
        ],
    );
    assert!(out.contains("lambda_x"));
    let doc = json(&tmp.path().join("d/design.json"));
    let a: Vec<f64> = doc["design"]["a"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for (got, want) in a.iter().zip([65.0 / 32.0, 0.0, -1.0 / 48.0, 1.0 / 96.0]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert_eq!(doc["design"]["interval"][0], -std::f64::consts::FRAC_PI_2);
    let csv = fs::read_to_string(tmp.path().join("d/design_beta.csv")).unwrap();
    assert!(csv.starts_with("t,beta\n"));
    assert!(tmp.path().join("d/design_protocol.json").exists());
}

#[test]
fn units_report_table_cylinder_and_corrections() {
    let tmp = TempDir::new().unwrap();
    let out = ok(
        tmp.path(),
        &[
            "units",
            "--T",
            "1",
            "--particle",
            "proton",
            "--cylinder",
            "20",
            "1",
            "1C",
            "--corrections",
            "n=2",
            "--out-dir",
            "u",
        ],
    );
    assert!(out.contains("1/8") && out.contains("1/192"));
    let doc = json(&tmp.path().join("u/units.json"));
    let b = doc["units"]["cylinder"]["field_gauss"].as_f64().unwrap();
    assert!((b - 1.25).abs() <= 0.01);
    let q = doc["units"]["rows"][0]["q"].as_f64().unwrap();
    assert!((q / 2.5e-2 - 1.0).abs() < 0.05);
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let tmp = TempDir::new().unwrap();
    let code = |args: &[&str]| run(tmp.path(), args).status.code().unwrap();
    assert_eq!(
        code(&["trajectory", "--t0", "1", "--t1", "1", "--out-dir", "x"]),
        2
    );
    assert_eq!(code(&["design", "--b", "0", "--out-dir", "x"]), 2);
    assert_eq!(code(&["strutt", "--grid", "3"]), 2);
    assert_eq!(code(&["nonsense"]), 2);
    assert_eq!(code(&["--config", "missing.toml", "strutt"]), 3);
    fs::write(tmp.path().join("bad.toml"), "[strutt]\ngrid = \"big\"\n").unwrap();
    assert_eq!(code(&["--config", "bad.toml", "strutt"]), 2);
    fs::write(tmp.path().join("blocker"), "").unwrap();
    assert_eq!(
        code(&["strutt", "--grid", "2x2", "--out-dir", "blocker/sub"]),
        3
    );
    assert_eq!(
        code(&[
            "trajectory",
            "--beta1",
            "1e9",
            "--beta2",
            "0",
            "--t1",
            "100",
            "--out-dir",
            "x"
        ]),
        4
    );
    let err = run(tmp.path(), &["design", "--b", "0"]).stderr;
    assert!(String::from_utf8_lossy(&err).contains("non-zero"));
}

#[test]
fn protocol_and_perturbation_reports() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["protocol", "--reverse", "--out-dir", "p"]);
    let doc = json(&tmp.path().join("p/protocol.json"));
    assert!(doc["protocol"]["return_distance"].as_f64().unwrap() < 1e-6);
    assert_eq!(
        doc["protocol"]["stage_matrices"].as_array().unwrap().len(),
        4
    );

    ok(
        tmp.path(),
        &["perturb", "--preset", "two-pulse-sin", "--out-dir", "f"],
    );
    let doc = json(&tmp.path().join("f/perturb.json"));
    let drift = &doc["perturbation"]["drift"];
    assert!(drift["drift"]
        .as_array()
        .unwrap()
        .iter()
        .all(|v| v.as_f64().unwrap().is_finite()));
    assert_eq!(doc["perturbation"]["force"]["kind"], "harmonic");
    assert!(tmp.path().join("f/perturb_trajectory.csv").exists());
}
