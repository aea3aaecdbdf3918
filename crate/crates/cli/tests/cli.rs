// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qsens_cli::io::CsvData;

const QUBIT: &str = r#"
seed = 11

[system]
kappa = 10
gate_time = 2.0
drift = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-1.0, 0.0]]]
controls = [
  [[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]],
  [[[0.0, 0.0], [0.0, -1.0]], [[0.0, 1.0], [0.0, 0.0]]],
]

[target]
gate = "x"

[synthesis]
restarts = 6
controllers = 3
target_error = 1e-6

[analysis]
sweep_points = 21
"#;

fn qsens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsens"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn setup(dir: &Path) -> PathBuf {
    let cfg = dir.join("qubit.toml");
    fs::write(&cfg, QUBIT).unwrap();
    cfg
}

fn run_ok(cfg: &Path, out: &Path, cmd: &str, extra: &[&str]) {
    let mut args = vec![
        cmd,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = qsens(&args);
    assert!(
        o.status.success(),
        "{cmd} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn column(data: &CsvData, name: &str) -> Vec<f64> {
    data.numbers(name)
        .unwrap()
        .into_iter()
        .map(|x| x.unwrap())
        .collect()
}

#[test]
fn pipeline_writes_consistent_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let out = tmp.path().join("out");
    run_ok(&cfg, &out, "synthesize", &[]);
    let manifest = CsvData::read(&out.join("controllers/manifest.csv")).unwrap();
    assert_eq!(manifest.rows.len(), 3);
    assert!(column(&manifest, "nominal_error").iter().all(|&e| e < 1e-6));

    run_ok(&cfg, &out, "analyze", &[]);
    let sens = CsvData::read(&out.join("sensitivity.csv")).unwrap();
    let bounds = CsvData::read(&out.join("bounds.csv")).unwrap();
    let (b2, b3) = (column(&bounds, "b2"), column(&bounds, "b3"));
    for l in ["H0", "H1", "H2"] {
        for (z, b) in column(&sens, &format!("zeta_{l}")).iter().zip(&b2) {
            assert!(z.abs() <= b + 1e-10);
        }
    }
    assert!(b2.iter().zip(&b3).all(|(a, b)| a <= &(b + 1e-10)));
    let worst = CsvData::read(&out.join("worst_sequence.csv")).unwrap();
    assert_eq!(worst.rows.len(), 3 * 10);

    run_ok(&cfg, &out, "certify", &["--alg1-step", "1e-3"]);
    let certs = CsvData::read(&out.join("certificates.csv")).unwrap();
    assert_eq!(certs.rows.len(), 3);
    for l in ["H0", "H1", "H2"] {
        assert!(column(&certs, &format!("analytic_error_{l}"))
            .iter()
            .all(|&e| e < 0.01));
        assert!(column(&certs, &format!("iter_error_{l}"))
            .iter()
            .all(|&e| e < 0.01));
    }
    assert!(column(&certs, "alg1_step").iter().all(|&d| d == 1e-3));
    let trace = CsvData::read(&out.join("iter_trace.csv")).unwrap();
    assert!(!trace.rows.is_empty());

    run_ok(&cfg, &out, "sweep", &[]);
    let sweep = CsvData::read(&out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.rows.len(), 3 * 3 * 21);
    assert!(column(&sweep, "delta").contains(&0.0));

    run_ok(&cfg, &out, "plot", &[]);
    for f in [
        "fig1_sensitivity.svg",
        "fig2_analytic_margin.svg",
        "fig3_iterative_margin.svg",
        "fig4_margins.svg",
    ] {
        let svg = fs::read_to_string(out.join(f)).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("1e"), "{f}");
    }
    let meta = fs::read_to_string(out.join("certify.meta.toml")).unwrap();
    assert!(meta.contains("seed = 11") && meta.contains("alg1_step = 0.001"));
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&cfg, &a, "synthesize", &["--jobs", "1"]);
    run_ok(&cfg, &b, "synthesize", &[]);
    for f in [
        "controllers/manifest.csv",
        "controllers/controller_000.txt",
        "restarts.csv",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let text = fs::read_to_string(a.join("controllers/controller_000.txt")).unwrap();
    assert!(
        text.contains("# seed: 11")
            && text.contains("# target: gate:x")
            && text.contains("# system_hash: ")
    );
}

#[test]
fn seed_flag_changes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&cfg, &a, "synthesize", &[]);
    run_ok(&cfg, &b, "synthesize", &["--seed", "12"]);
    assert_ne!(
        fs::read(a.join("controllers/controller_000.txt")).unwrap(),
        fs::read(b.join("controllers/controller_000.txt")).unwrap()
    );
}

#[test]
fn missing_config_exits_2_naming_path() {
    let o = qsens(&["analyze", "--config", "/no/such/experiment.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/experiment.toml"));
}

#[test]
fn syntax_error_exits_2_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\n[analysis]\nepsilon = = 3\n").unwrap();
    let o = qsens(&["synthesize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:3:"), "{err}");
}

#[test]
fn unreachable_target_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("hard.toml");
    let text = QUBIT.replace("restarts = 6", "restarts = 1").replace(
        "target_error = 1e-6",
        "target_error = 1e-30\nmax_iterations = 1",
    );
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("out");
    let o = qsens(&[
        "synthesize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let manifest = CsvData::read(&out.join("controllers/manifest.csv")).unwrap();
    assert!(manifest.rows.is_empty());
}

#[test]
fn corrupt_controller_exits_4_naming_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let out = tmp.path().join("out");
    run_ok(&cfg, &out, "synthesize", &[]);
    let file = out.join("controllers/controller_001.txt");
    let text = fs::read_to_string(&file).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.truncate(lines.len() - 1);
    fs::write(&file, lines.join("\n")).unwrap();
    let o = qsens(&[
        "analyze",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("controller_001.txt"));
}

#[test]
fn controller_for_other_system_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let out = tmp.path().join("out");
    run_ok(&cfg, &out, "synthesize", &[]);
    let other = tmp.path().join("other.toml");
    fs::write(&other, QUBIT.replace("gate = \"x\"", "gate = \"h\"")).unwrap();
    let o = qsens(&[
        "analyze",
        "--config",
        other.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash mismatch"));
}

#[test]
fn empty_manifest_gives_header_only_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let out = tmp.path().join("out");
    fs::create_dir_all(out.join("controllers")).unwrap();
    fs::write(
        out.join("controllers/manifest.csv"),
        "index,file,seed,restart,nominal_error,iterations,termination\n",
    )
    .unwrap();
    run_ok(&cfg, &out, "analyze", &[]);
    run_ok(&cfg, &out, "certify", &[]);
    let sens = CsvData::read(&out.join("sensitivity.csv")).unwrap();
    assert!(sens.rows.is_empty());
    assert!(sens.header.contains(&"zeta_H0".to_string()));
    run_ok(&cfg, &out, "plot", &[]);
    let svg = fs::read_to_string(out.join("fig2_analytic_margin.svg")).unwrap();
    assert!(svg.contains("class=\"y-axis\"") && !svg.contains("r=\"2.5\""));
}

#[test]
fn plot_errors_are_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(qsens(&["plot", "--out", out]).status.code(), Some(4));
    fs::write(
        tmp.path().join("certificates.csv"),
        "controller,status\n0,ok\n",
    )
    .unwrap();
    let o = qsens(&["plot", "--out", out]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("certificates.csv"));
}

#[test]
fn skipped_controllers_get_warning_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let out = tmp.path().join("out");
    run_ok(&cfg, &out, "synthesize", &[]);
    run_ok(&cfg, &out, "certify", &["--epsilon", "1e-12"]);
    let certs = CsvData::read(&out.join("certificates.csv")).unwrap();
    let status = certs.column("status").unwrap();
    assert!(certs
        .rows
        .iter()
        .all(|r| r[status] == "skipped_nominal_not_below_epsilon"));
}
