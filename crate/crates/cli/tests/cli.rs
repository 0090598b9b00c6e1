use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lasso-recovery"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixtures() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("eye.csv"), "1,0,0\n0,1,0\n0,0,1\n").unwrap();
    fs::write(d.join("y3.csv"), "2.25\n0.1\n-0.75\n").unwrap();
    fs::write(d.join("x.csv"), "a,b,c,d\n1,0,0.5,0.2\n0,1,0.5,0\n1,1,0,0.3\n0,0,1,-1\n2,0,1,0\n").unwrap();
    fs::write(d.join("y.csv"), "y\n2\n-1\n1\n0.5\n3\n").unwrap();
    fs::write(d.join("b.csv"), "1\n0\n-0.5\n0\n").unwrap();
    dir
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = fs::read(&p).unwrap();
            (PathBuf::from(p.file_name().unwrap()), bytes)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn solve_writes_coefficient_csv() {
    let dir = fixtures();
    let o = run(dir.path(), &["solve", "--design", "eye.csv", "--response", "y3.csv", "--lambda", "0.5", "--out", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("o/coefficients.csv")).unwrap();
    assert_eq!(csv, "index,value\n1,2\n2,0\n3,-0.5\n");
    let cfg = fs::read_to_string(dir.path().join("o/run_config.json")).unwrap();
    assert!(cfg.contains("\"lambda\": \"0.5\""));
    assert!(cfg.contains("\"tol\""));
}

#[test]
fn solve_prints_json_without_out() {
    let dir = fixtures();
    let o =
        run(dir.path(), &["solve", "--design", "x.csv", "--response", "y.csv", "--lambda", "0.2", "--tol", "1e-10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("\"duality_gap\""));
    assert!(text.contains("\"active_set\""));
}

#[test]
fn misspelled_flag_is_a_usage_error() {
    let dir = fixtures();
    let o = run(dir.path(), &["solve", "--design", "x.csv", "--response", "y.csv", "--lamda", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--lamda"));
}

#[test]
fn unknown_and_missing_settings_are_named() {
    let dir = fixtures();
    fs::write(dir.path().join("bad.conf"), "lamda = 2\n").unwrap();
    let o = run(
        dir.path(),
        &["solve", "--config", "bad.conf", "--design", "x.csv", "--response", "y.csv", "--lambda", "1"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`lamda`"));
    let o = run(dir.path(), &["path", "--design", "x.csv", "--response", "y.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lambda_min"));
    let o = run(dir.path(), &["solve", "--design", "x.csv", "--response", "y.csv", "--lambda=-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`lambda`"));
}

#[test]
fn flag_overrides_config_file() {
    let dir = fixtures();
    fs::write(dir.path().join("run.conf"), "# xi path run\nseed = 7\nsigma = 0.3\n").unwrap();
    let common = ["xi-path", "--design", "x.csv", "--truth", "b.csv", "--lambda", "0.5"];
    let mut a: Vec<&str> = common.to_vec();
    a.extend(["--config", "run.conf", "--seed", "9", "--out", "a"]);
    let o = run(dir.path(), &a);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = fs::read_to_string(dir.path().join("a/run_config.json")).unwrap();
    assert!(cfg.contains("\"seed\": \"9\""));
    assert!(cfg.contains("\"sigma\": \"0.3\""));

    let mut b: Vec<&str> = common.to_vec();
    b.extend(["--seed", "9", "--sigma", "0.3", "--out", "b"]);
    assert!(run(dir.path(), &b).status.success());
    let xa = fs::read(dir.path().join("a/xi_path.csv")).unwrap();
    let xb = fs::read(dir.path().join("b/xi_path.csv")).unwrap();
    assert_eq!(xa, xb);
    assert!(String::from_utf8(xa).unwrap().starts_with("xi,set_size,l1_norm,shift\n0,"));
}

#[test]
fn exit_codes_for_io_parse_and_numerical_failures() {
    let dir = fixtures();
    let o = run(dir.path(), &["solve", "--design", "missing.csv", "--response", "y.csv", "--lambda", "1"]);
    assert_eq!(o.status.code(), Some(3));
    fs::write(dir.path().join("nan.csv"), "1,NaN\n2,3\n").unwrap();
    let o = run(dir.path(), &["solve", "--design", "nan.csv", "--response", "y3.csv", "--lambda", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("non-finite"));
    let o = run(
        dir.path(),
        &[
            "solve",
            "--design",
            "x.csv",
            "--response",
            "y.csv",
            "--lambda",
            "0.01",
            "--tol",
            "1e-15",
            "--max-sweeps",
            "1",
        ],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn path_segments_and_requested_points() {
    let dir = fixtures();
    let o = run(
        dir.path(),
        &["path", "--design", "eye.csv", "--response", "y3.csv", "--lambda-min", "0", "--at", "1,0", "--out", "p"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("p/segments.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["lambda_high", "lambda_low", "event", "active_size"]);
    assert_eq!(rows.len(), 4);
    // soft thresholding of (2.25, 0.1, -0.75) enters columns at 2|y_k|
    let lows: Vec<f64> = rows[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    for (got, want) in lows.iter().zip([1.5, 0.2, 0.0]) {
        assert!((got - want).abs() <= 1e-12);
    }
    let events: Vec<&str> = rows[1..].iter().map(|r| r[2]).collect();
    assert_eq!(events, ["+1", "+3", "+2"]);
    let json = fs::read_to_string(dir.path().join("p/path.json")).unwrap();
    assert!(json.contains("\"lambda_max\": 4.5"));
}

#[test]
fn diagnose_reports_one_based_indices() {
    let dir = fixtures();
    let o = run(
        dir.path(),
        &[
            "diagnose",
            "--design",
            "x.csv",
            "--support",
            "1,3",
            "--signs",
            "+,-",
            "--sparse-eig-max",
            "2",
            "--mode",
            "exact",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("\"irrepresentable\""));
    assert!(text.contains("\"support\": [\n      1,\n      3\n    ]"));
    let o = run(dir.path(), &["diagnose", "--design", "x.csv", "--support", "9"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn two_step_reports_recovery() {
    let dir = fixtures();
    let o = run(
        dir.path(),
        &[
            "two-step",
            "--design",
            "eye.csv",
            "--response",
            "y3.csv",
            "--truth",
            "y3.csv",
            "--lambda",
            "0.5",
            "--sigma",
            "0.1",
            "--t",
            "1",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("\"cutoff\""));
    assert!(text.contains("\"thresholded_support\""));
}

#[test]
fn experiment_output_is_byte_identical_on_rerun() {
    let dir = fixtures();
    fs::write(dir.path().join("freq.conf"), "sigmas = 0.2\nreplications = 3\nlambda_points = 10\nseed = 5\n").unwrap();
    for out in ["r1", "r2"] {
        let o = run(dir.path(), &["experiment", "freq", "--config", "freq.conf", "--threads", "2", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = tree(&dir.path().join("r1"));
    let b = tree(&dir.path().join("r2"));
    let names: Vec<_> = a.iter().map(|(p, _)| p.display().to_string()).collect();
    assert_eq!(names, ["aggregate.json", "periodogram.csv", "replications.csv", "run_config.json"]);
    assert_eq!(a, b);
    let reps = String::from_utf8(a[2].1.clone()).unwrap();
    // 3 replications × (10 grid points + theory penalty), plus the header
    assert_eq!(reps.lines().count(), 1 + 3 * 11);
}

#[test]
fn experiment_rejects_unknown_scenario_key() {
    let dir = fixtures();
    fs::write(dir.path().join("s.conf"), "ns = 20\nreplicatons = 2\n").unwrap();
    let o = run(dir.path(), &["experiment", "scaling", "--config", "s.conf"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`replicatons`"));
}
