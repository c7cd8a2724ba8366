use assert_cmd::Command;
use predicates::prelude::*;

fn cmd() -> Command {
    Command::cargo_bin("fracext").unwrap()
}

#[test]
fn extend_writes_classical_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let ext = dir.path().join("u.ext");
    let csv = dir.path().join("residual.csv");
    cmd()
        .args(["extend", "--gamma", "0.5", "--modes", "1:1", "--n", "32"])
        .arg("--ext-out")
        .arg(&ext)
        .arg("--out")
        .arg(&csv)
        .assert()
        .success();
    // γ = 1/2 is the classical harmonic extension: profiles are e^{-y} cos x
    let data = fracext::io::read_extension(&ext).unwrap();
    assert_eq!(data.gamma, 0.5);
    for (iy, &y) in data.ys.iter().enumerate() {
        let field = &data.levels[0][iy];
        let grid = field.grid();
        for (i, &v) in field.values().iter().enumerate() {
            let x = grid.point(i)[0];
            assert!(
                (v - x.cos() * (-y).exp()).abs() <= 1e-8,
                "node {iy}, point {i}"
            );
        }
    }
    assert!(csv.exists());
}

#[test]
fn weight_zero_sequence_passes() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("zero.txt");
    std::fs::write(&seq, "").unwrap();
    let csv = dir.path().join("w.csv");
    cmd()
        .args(["weight", "--tau", "16"])
        .arg("--seq")
        .arg(&seq)
        .arg("--out")
        .arg(&csv)
        .assert()
        .success()
        .stdout(predicate::str::contains("overall PASS"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,h,h1,h2\n"));
    assert!(text.lines().count() > 100);
}

#[test]
fn antilocality_reports_dimension_zero() {
    let dir = tempfile::tempdir().unwrap();
    cmd()
        .args(["antilocality", "--gamma", "0.5", "--n", "64", "--window", "5"])
        .arg("--out")
        .arg(dir.path().join("a.csv"))
        .assert()
        .success()
        .stdout(predicate::str::contains("dimension 0"));
}

#[test]
fn antilocality_local_expectation_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    cmd()
        .args([
            "antilocality",
            "--gamma",
            "1.0",
            "--n",
            "64",
            "--window",
            "9",
            "--disc",
            "fd",
            "--expect",
            "zero",
        ])
        .arg("--out")
        .arg(dir.path().join("a.csv"))
        .assert()
        .code(1);
    // the same run declared honestly passes
    cmd()
        .args([
            "antilocality",
            "--gamma",
            "1.0",
            "--n",
            "64",
            "--window",
            "9",
            "--disc",
            "fd",
            "--expect",
            "positive",
        ])
        .arg("--out")
        .arg(dir.path().join("b.csv"))
        .assert()
        .success();
}

#[test]
fn unknown_subcommand_exits_two() {
    cmd().arg("nosuchthing").assert().code(2);
}

#[test]
fn wrong_magic_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.fld");
    std::fs::write(&bad, "NOPE 1 8 6.0\n0 0 0 0 0 0 0 0\n").unwrap();
    cmd()
        .arg("vanish-order")
        .arg("--input")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("v.csv"))
        .assert()
        .code(3);
}

#[test]
fn missing_output_directory_exits_four() {
    cmd()
        .args(["extend", "--gamma", "0.5"])
        .args(["--out", "/nonexistent-dir/x.csv"])
        .args(["--ext-out", "/nonexistent-dir/u.ext"])
        .assert()
        .code(4);
}

#[test]
fn same_seed_gives_byte_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        cmd()
            .args(["carleman-ratio", "--m", "0", "--taus", "16,64", "--draws", "3"])
            .arg("--out")
            .arg(path)
            .assert()
            .success();
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn plot_written_for_multi_row_output() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("w.png");
    cmd()
        .args(["weight", "--tau", "16"])
        .arg("--out")
        .arg(dir.path().join("w.csv"))
        .arg("--plot")
        .arg(&png)
        .assert()
        .success();
    assert!(png.exists());
    assert!(std::fs::metadata(&png).unwrap().len() > 0);
}

#[test]
fn single_row_plot_degrades_to_warning() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("one.png");
    cmd()
        .args(["carleman-ratio", "--m", "0", "--taus", "16", "--draws", "1"])
        .arg("--out")
        .arg(dir.path().join("one.csv"))
        .arg("--plot")
        .arg(&png)
        .assert()
        .success()
        .stderr(predicate::str::contains("plot skipped"));
    assert!(!png.exists());
}

#[test]
fn help_lists_config_keys() {
    cmd()
        .args(["weight", "--help"])
        .assert()
        .success()
        .stdout(
            predicate::str::contains("--tau")
                .and(predicate::str::contains("--nu"))
                .and(predicate::str::contains("--seq")),
        );
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "gamma = 0.5\nn = 32\n# comment\n").unwrap();
    cmd()
        .arg("extend")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("r.csv"))
        .arg("--ext-out")
        .arg(dir.path().join("u.ext"))
        .assert()
        .success();
    // explicit flags stay authoritative over config values
    cmd()
        .arg("extend")
        .arg("--config")
        .arg(&cfg)
        .args(["--gamma", "0.75"])
        .arg("--out")
        .arg(dir.path().join("r2.csv"))
        .arg("--ext-out")
        .arg(dir.path().join("u2.ext"))
        .assert()
        .success();
    let data = fracext::io::read_extension(dir.path().join("u2.ext")).unwrap();
    assert_eq!(data.gamma, 0.75);
}

#[test]
fn malformed_flag_value_exits_three() {
    cmd()
        .args(["extend", "--gamma", "not-a-number"])
        .assert()
        .code(3);
}
