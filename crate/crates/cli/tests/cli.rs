use std::process::{Command, Output};

fn pcsense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcsense")).args(args).output().expect("spawn pcsense")
}

fn data_rows(out: &Output) -> Vec<Vec<String>> {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn nps_point() {
    let out = pcsense(&["curve", "--scenario", "nps", "--kappa", "0.5", "--nb", "1", "--n", "10", "--m", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 1);
    assert!((num(&rows[0][1]) * 5.0 - 40.0 / 3.0).abs() < 1e-9);
}

#[test]
fn ps_grid_rows() {
    let out = pcsense(&["curve", "--scenario", "ps", "--nb", "1", "--ns", "2", "--m", "5", "--grid", "0.05:0.95:19"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 19);
    for r in &rows {
        assert!(num(&r[1]) >= num(&r[2]) && num(&r[1]) >= num(&r[3]));
    }
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "# nb=1"));
    assert_eq!(text.lines().find(|l| !l.starts_with('#')), Some("theta,bound_per_mode,tmsv_per_mode,classical_per_mode"));
}

#[test]
fn additive_noise_point() {
    let out = pcsense(&["curve", "--scenario", "add-noise", "--gamma", "1", "--n", "3", "--m", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = data_rows(&out);
    assert!((num(&rows[0][1]) * 2.0 - 2.5).abs() < 1e-12);
    assert!((num(&rows[0][3]) * 2.0 - 1.0).abs() < 1e-12);
}

#[test]
fn curve_output_is_deterministic() {
    let args = ["curve", "--scenario", "ps", "--nb", "0.3", "--n", "4", "--m", "2", "--grid", "0.1:0.9:9"];
    assert_eq!(pcsense(&args).stdout, pcsense(&args).stdout);
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["curve", "--scenario", "ps", "--kappa", "1.5", "--nb", "1", "--n", "1", "--m", "1"][..],
        &["curve", "--scenario", "ps", "--kappa", "0.5", "--n", "1", "--m", "1"],
        &["curve", "--scenario", "add-noise", "--kappa", "0.5", "--n", "1", "--m", "1"],
        &["curve", "--scenario", "nps", "--nb", "1", "--n", "1", "--m", "1", "--grid", "0.5:0.2:4"],
        &["figures", "--fig", "7"],
        &["no-such-command"],
        &["oracle-qfi", "--probe", "squeezed", "--scenario", "ps", "--kappa", "0.5", "--nb", "1"],
    ] {
        let out = pcsense(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn help_exits_0() {
    assert_eq!(pcsense(&["--help"]).status.code(), Some(0));
}

#[test]
fn verify_exit_codes() {
    let ok = pcsense(&["verify", "cascade"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let strict = pcsense(&["verify", "bounds", "--tol", "1e-15"]);
    assert_eq!(strict.status.code(), Some(4));
    assert!(String::from_utf8(strict.stdout).unwrap().contains("FAIL"));
}

#[test]
fn oracle_vacuum_additive_noise() {
    let out = pcsense(&["oracle-qfi", "--probe", "vacuum", "--scenario", "add-noise", "--gamma", "0.8"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 1);
    assert!(num(&rows[0][4]).abs() < 1e-6);
    assert!((num(&rows[0][2]) - 1.0 / (0.8 * 1.8)).abs() < 1e-10);
}

#[test]
fn oracle_writes_file() {
    let path = std::env::temp_dir().join(format!("pcsense-cli-{}.csv", std::process::id()));
    let out = pcsense(&[
        "oracle-qfi", "--probe", "coherent", "--ns", "0.5", "--scenario", "ps", "--kappa", "0.4", "--nb", "0", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    let row: Vec<f64> = text.lines().last().unwrap().split(',').skip(1).map(num).collect();
    assert!((row[0] - 0.5 / 0.4).abs() < 1e-6);
}
