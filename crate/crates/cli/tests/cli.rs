use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qstc::config::TWO_TANK_TOML;

fn qstc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qstc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn short_config(dir: &Path) -> String {
    let text = TWO_TANK_TOML
        .replace("horizon = 6.0", "horizon = 1.0")
        .replace("dt = 1e-5", "dt = 1e-4")
        .replace("points = 501", "points = 51");
    let path = dir.join("short.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn certify_prints_table_and_writes_certificate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let res = qstc(&["certify", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let stdout = String::from_utf8(res.stdout).unwrap();
    for want in [
        "2.8817",
        "1.9305",
        "0.1536",
        "0.2250",
        "0.1166",
        "1.4142",
        "[1.0000, 0.5180]",
    ] {
        assert!(stdout.contains(want), "missing {want} in\n{stdout}");
    }
    let cert = fs::read_to_string(out.join("certificate.toml")).unwrap();
    assert!(cert.starts_with("# config-sha256 "));
    let parsed = qstc_cli::read_certificate(&out.join("certificate.toml")).unwrap();
    parsed.validate().unwrap();
    assert!((parsed.r - 0.11655).abs() < 1e-12);
}

#[test]
fn infeasible_rate_exits_with_precondition_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c10.toml");
    let text = TWO_TANK_TOML
        .replace("c = 0.4", "c = 10.0")
        .replace("theta_cl = [1.0, 0.518]\n", "");
    fs::write(&cfg, text).unwrap();
    let res = qstc(&[
        "certify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(qstc_cli::EXIT_PRECONDITION));
    let stderr = String::from_utf8(res.stderr).unwrap();
    assert!(stderr.contains(qstc::certify::STAGE_CLOSED), "{stderr}");
    assert!(!tmp.path().join("certificate.toml").exists());
}

#[test]
fn io_and_config_errors_have_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    let res = qstc(&["region", "--config", missing.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(qstc_cli::EXIT_IO));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, TWO_TANK_TOML.replace("rho = 0.85", "rho = 0.5")).unwrap();
    let res = qstc(&[
        "simulate",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(qstc_cli::EXIT_PRECONDITION));
    let stderr = String::from_utf8(res.stderr).unwrap();
    assert!(stderr.contains("violated"), "{stderr}");
    assert!(!tmp.path().join("log_run.csv").exists());

    let garbled = tmp.path().join("cert.toml");
    fs::write(&garbled, "c = 0.4\n").unwrap();
    let res = qstc(&[
        "simulate",
        "--certificate",
        garbled.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(qstc_cli::EXIT_PRECONDITION));
}

#[test]
fn identical_configs_give_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path());
    let run = |dir: &str, jobs: &str| {
        let out = tmp.path().join(dir);
        let out = out.to_str().unwrap();
        for args in [
            vec!["region", "--config", &cfg, "--out", out, "--jobs", jobs],
            vec![
                "simulate", "--config", &cfg, "--out", out, "--scheme", "log", "--sweep", "3",
                "--seed", "5", "--jobs", jobs,
            ],
            vec![
                "simulate", "--config", &cfg, "--out", out, "--scheme", "zoom",
            ],
            vec!["compare", "--config", &cfg, "--out", out, "--jobs", jobs],
        ] {
            let res = qstc(&args);
            assert_eq!(
                res.status.code(),
                Some(0),
                "{}",
                String::from_utf8_lossy(&res.stderr)
            );
        }
        read_dir_sorted(&tmp.path().join(dir))
    };
    let a = run("a", "1");
    let b = run("b", "3");
    assert_eq!(a.len(), b.len());
    for ((na, fa), (nb, fb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(fa == fb, "{na} differs");
        let first = fa.split(|&c| c == b'\n').next().unwrap();
        assert!(
            first.starts_with(b"# config-sha256 ") || first.starts_with(b"<!-- config-sha256 "),
            "{na} lacks the hash header"
        );
    }
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "region.csv",
        "region.svg",
        "log_run.csv",
        "log_samples.csv",
        "log_sweep.csv",
        "zoom_samples.csv",
        "compare.csv",
        "compare.svg",
    ] {
        assert!(names.contains(&want), "missing {want}");
    }
}

#[test]
fn csv_columns_follow_the_documented_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path());
    let out = tmp.path().join("o");
    let res = qstc(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--scheme",
        "zoom",
    ]);
    assert_eq!(res.status.code(), Some(0));
    let header = |name: &str| {
        fs::read_to_string(out.join(name))
            .unwrap()
            .lines()
            .nth(1)
            .unwrap()
            .to_string()
    };
    assert_eq!(header("zoom_run.csv"), "t,x1,x2,u1");
    assert_eq!(
        header("zoom_samples.csv"),
        "k,t_k,q1,q2,tau,ell,mu,trigger_cause,truncated"
    );
    assert_eq!(header("zoom_verification.csv"), "claim,bound,margin,pass");
    let samples = fs::read_to_string(out.join("zoom_samples.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(samples.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(&rows[0][0], "0");
    assert_eq!(&rows[0][6], "1");
    assert!(rows
        .iter()
        .all(|r| ["threshold", "ball_exit", "max_time"].contains(&&r[7])));
    assert_eq!(&rows.last().unwrap()[8], "true");
}

#[test]
fn certificate_file_feeds_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path());
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(
        qstc(&["certify", "--config", &cfg, "--out", out])
            .status
            .code(),
        Some(0)
    );
    let cert = format!("{out}/certificate.toml");
    let res = qstc(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        out,
        "--certificate",
        &cert,
    ]);
    assert_eq!(res.status.code(), Some(0));
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.contains("[pass] decay"), "{stdout}");
}
