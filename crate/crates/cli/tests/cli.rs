use std::path::Path;
use std::process::{Command, Output};

fn survshape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_survshape"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path) -> (String, String) {
    let out = dir.join("s");
    let o = survshape(&[
        "synth",
        "--out",
        out.to_str().unwrap(),
        "--n",
        "80",
        "--seed",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    (
        out.join("dataset.csv").to_str().unwrap().into(),
        out.join("schema.cfg").to_str().unwrap().into(),
    )
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(survshape(&["--help"]).status.code(), Some(0));
    assert_eq!(survshape(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_2() {
    let o = survshape(&["fit", "--data", "x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: usage:"), "{}", stderr(&o));
    assert_eq!(stderr(&o).lines().count(), 1);
    assert_eq!(survshape(&["frobnicate"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[forest]\ntres = 3\n").unwrap();
    let o = survshape(&[
        "--config",
        bad.to_str().unwrap(),
        "synth",
        "--out",
        "unused",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tres"));

    let o = survshape(&["synth", "--out", "unused", "--psi", "cubic:1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = synth(dir.path());
    let out = dir.path().join("f");
    let out = out.to_str().unwrap();

    let o = survshape(&[
        "fit",
        "--data",
        &data,
        "--schema",
        "/no/such/schema.cfg",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("/no/such/schema.cfg"), "{}", stderr(&o));

    let broken = dir.path().join("broken.csv");
    std::fs::write(&broken, "x1,x2,x3,time,event\n1,2,3,oops,1\n").unwrap();
    let o = survshape(&[
        "fit",
        "--data",
        broken.to_str().unwrap(),
        "--schema",
        &schema,
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        stderr(&o).starts_with("error: data: ") && stderr(&o).contains("row 1"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn local_mode_needs_a_center() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = synth(dir.path());
    let fit_out = dir.path().join("f");
    let o = survshape(&[
        "fit",
        "--data",
        &data,
        "--schema",
        &schema,
        "--out",
        fit_out.to_str().unwrap(),
        "--trees",
        "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let forest = fit_out.join("forest.bin");
    let o = survshape(&[
        "explain",
        "--forest",
        forest.to_str().unwrap(),
        "--data",
        &data,
        "--out",
        "unused",
        "--mode",
        "local",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--row or --center"));
}

#[test]
fn flags_override_config_file_and_banner_echoes_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[synth]\nn = 30\nseed = 4\ncensoring = 0.1\n").unwrap();
    let out = dir.path().join("s");
    let o = survshape(&[
        "--config",
        cfg.to_str().unwrap(),
        "synth",
        "--out",
        out.to_str().unwrap(),
        "--n",
        "50",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(
        report.starts_with("# survshape synth\n[synth]\nn = 50\n"),
        "{report}"
    );
    assert!(report.contains("seed = 4") && report.contains("censoring = 0.1"));
    assert_eq!(String::from_utf8_lossy(&o.stdout), report);
    let rows = std::fs::read_to_string(out.join("dataset.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 51);
}

#[test]
fn refuses_to_overwrite_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, schema) = synth(dir.path());
    // A data file named like the report, in the output directory.
    let s_dir = dir.path().join("s");
    let data = s_dir.join("report.txt");
    std::fs::copy(s_dir.join("dataset.csv"), &data).unwrap();
    let o = survshape(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        &schema,
        "--out",
        s_dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("overwrite"));
}

fn report_value(report: &str, key: &str) -> f64 {
    let line = report
        .lines()
        .find(|l| l.starts_with(key))
        .unwrap_or_else(|| panic!("{key} missing: {report}"));
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn fit_finds_signal_in_synthetic_linear_data() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    let o = survshape(&[
        "synth",
        "--out",
        s.to_str().unwrap(),
        "--n",
        "400",
        "--seed",
        "3",
    ]);
    assert!(o.status.success());
    let f = dir.path().join("f");
    let o = survshape(&[
        "fit",
        "--data",
        s.join("dataset.csv").to_str().unwrap(),
        "--schema",
        s.join("schema.cfg").to_str().unwrap(),
        "--out",
        f.to_str().unwrap(),
        "--trees",
        "50",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(f.join("report.txt")).unwrap();
    let c = report_value(&report, "c_index_test");
    assert!(c > 0.6, "test C-index {c}");
    let psi = std::fs::read_to_string(s.join("psi.csv")).unwrap();
    assert!(psi.starts_with("row,psi,event_time\n"));
    assert_eq!(psi.lines().count(), 401);
}

#[test]
fn constant_forest_gives_flat_curves_and_summary_block() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("flat.csv");
    let mut csv = String::from("t,e,x,g\n");
    for i in 0..60 {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            1 + (i * 7) % 23,
            (i % 4 != 0) as u8,
            (i * 13) % 17,
            i % 2
        ));
    }
    std::fs::write(&data, csv).unwrap();
    let schema = dir.path().join("flat.cfg");
    std::fs::write(&schema, "time = t\nevent = e\nnumeric = x\nindicator = g\n").unwrap();
    let f = dir.path().join("f");
    let o = survshape(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--out",
        f.to_str().unwrap(),
        // No split can leave enough events on both sides: every tree is a single leaf.
        "--trees",
        "10",
        "--min-leaf-events",
        "1000",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let e = dir.path().join("e");
    let o = survshape(&[
        "explain",
        "--forest",
        f.join("forest.bin").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        e.to_str().unwrap(),
        "--mode",
        "global",
        "--variant",
        "shortcut",
        "--lambda",
        "0.5",
        "--mu",
        "0.25",
        "--hidden",
        "8,4",
        "--epochs",
        "300",
        "--learning-rate",
        "0.005",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(e.join("explanation.csv")).unwrap();
    let (curves, summary) = text.split_once("\n\n").unwrap();
    let contributions: Vec<f64> = curves
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(!contributions.is_empty());
    let worst = contributions.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 0.05, "curve magnitude {worst}");
    for needle in [
        "variant,,shortcut",
        "lambda,,0.5",
        "mu,,0.25",
        "c_blackbox,,",
        "c_surrogate,,",
        "alpha,x,",
    ] {
        assert!(summary.contains(needle), "missing {needle} in {summary}");
    }
    assert!(e.join("shapes.svg").exists() && e.join("model.json").exists());
}
