use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use streamac_cli::report::median;
use streamac_cli::BenchReport;

const BIN: &str = env!("CARGO_BIN_EXE_streamac");

fn run(args: &[&str]) -> Output {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "streamac {args:?} failed:\n{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn report(path: &Path) -> BenchReport {
    BenchReport::from_csv(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Killed(Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn eq_transform_reports_64_pairings_and_orderings_hold() {
    let dir = tempfile::tempdir().unwrap();
    let eq_csv = dir.path().join("eq.csv");
    let ge_csv = dir.path().join("ge.csv");
    run(&["bench", "crypto", "--policy", "eq:42", "--samples", "20", "--seed", "t", "--csv", p(&eq_csv)]);
    run(&["bench", "crypto", "--policy", "ge:5000000000", "--samples", "20", "--seed", "t", "--csv", p(&ge_csv)]);
    let eq = report(&eq_csv);
    let ge = report(&ge_csv);
    let pairings: Vec<Option<u32>> =
        eq.samples.iter().filter(|s| s.operation == "transform").map(|s| s.pairings).collect();
    assert_eq!(pairings.len(), 20);
    assert!(pairings.iter().all(|&p| p == Some(64)));
    assert!(ge.samples.iter().filter(|s| s.operation == "transform").all(|s| s.pairings == Some(1)));
    for op in ["setup", "keygen", "dlog_table", "encrypt", "transform", "decrypt"] {
        assert!(!eq.values(op, "eq:42").is_empty(), "{op} missing");
        assert!(eq.samples.iter().all(|s| s.backend == "transparent"));
    }
    let transform_eq = median(&eq.values("transform", "eq:42"));
    assert!(median(&eq.values("decrypt", "eq:42")) < transform_eq);
    assert!(transform_eq > median(&ge.values("transform", "ge:5000000000")));
}

#[test]
fn external_backend_is_reported_unavailable() {
    let out = Command::new(BIN).args(["bench", "crypto", "--backend", "external"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("external"));
}

#[test]
fn slow_sender_sets_the_pace() {
    const INTERVAL_US: f64 = 5000.0;
    // Sleep overshoot and scheduling stay well inside this band.
    const TOLERANCE: f64 = 0.2;
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rate.csv");
    run(&["bench", "rate", "--rate-ms", "5", "--tuples", "40", "--seed", "t", "--csv", p(&csv)]);
    let r = report(&csv);
    let gaps = r.values("inter_arrival", "ge:0");
    assert_eq!(gaps.len(), 39);
    let m = median(&gaps);
    assert!((m - INTERVAL_US).abs() / INTERVAL_US < TOLERANCE, "median inter-arrival {m}us");
}

#[test]
fn policy_matching_scales_at_most_linearly() {
    // Each step may dip by this factor through noise.
    const DIP: f64 = 0.8;
    // Allowed excess of the fitted log-log slope over 1. Small stores stay
    // cache resident and cost less per policy, which tilts the fit above 1
    // without any superlinear work; a quadratic scan would fit near 2.
    const SLOPE_TOLERANCE: f64 = 0.25;
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pol.csv");
    let counts = [10usize, 100, 1000, 10_000];
    run(&[
        "bench",
        "policies",
        "--policies",
        "10,100,1000,10000",
        "--requests",
        "300",
        "--seed",
        "t",
        "--csv",
        p(&csv),
    ]);
    let r = report(&csv);
    let medians: Vec<f64> = counts
        .iter()
        .map(|n| {
            let params = format!("n={n}");
            median(&r.samples.iter().filter(|s| s.params == params).map(|s| s.micros).collect::<Vec<_>>())
        })
        .collect();
    for w in medians.windows(2) {
        assert!(w[1] >= DIP * w[0], "not monotone: {medians:?}");
    }
    let xs: Vec<f64> = counts.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!(slope <= 1.0 + SLOPE_TOLERANCE, "fitted slope {slope:.3} for {medians:?}");
}

#[test]
fn simulate_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(
        &path,
        r#"
        seed = "cli"
        v_max = 50
        [[streams]]
        id = "s"
        window_sizes = [3]
        tuples = 30
        generator = { kind = "uniform" }
        [[policies]]
        id = "w"
        stream = "s"
        policy = "window:2,3"
        [[policies]]
        id = "t"
        stream = "s"
        policy = "gt:20"
        [[users]]
        id = "u"
        policies = ["w", "t"]
        "#,
    )
    .unwrap();
    let out = run(&["simulate", "--scenario", p(&path)]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("oracle: match (2 subscriptions)"), "{text}");
    assert!(text.contains("outputs: 18"), "{text}");
}

#[test]
fn bad_scenario_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(&path, "seed = \"x\"\nv_max = 1\nbogus = 3\n").unwrap();
    let out = Command::new(BIN).args(["simulate", "--scenario", p(&path)]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn roles_as_separate_processes() {
    let dir = tempfile::tempdir().unwrap();
    let f = |name: &str| dir.path().join(name);
    run(&[
        "keygen",
        "--stream",
        "temp",
        "--window-sizes",
        "5",
        "--vmax",
        "100",
        "--seed",
        "k",
        "--out",
        p(&f("owner.toml")),
    ]);
    run(&[
        "grant",
        "--owner",
        p(&f("owner.toml")),
        "--policy-id",
        "all",
        "--policy",
        "ge:0",
        "--user",
        "alice",
        "--user-out",
        p(&f("alice-all.toml")),
        "--cloud-out",
        p(&f("grant-all.toml")),
    ]);
    run(&[
        "grant",
        "--owner",
        p(&f("owner.toml")),
        "--policy-id",
        "avg",
        "--policy",
        "window:0,5",
        "--user",
        "alice",
        "--user-out",
        p(&f("alice-avg.toml")),
        "--cloud-out",
        p(&f("grant-avg.toml")),
    ]);

    let mut cloud = Killed(
        Command::new(BIN).args(["cloud", "run", "--listen", "127.0.0.1:0"]).stdout(Stdio::piped()).spawn().unwrap(),
    );
    let mut line = String::new();
    BufReader::new(cloud.0.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("cloud announces its address").to_string();

    // Register the stream and grants before the user subscribes.
    run(&[
        "owner",
        "run",
        "--owner",
        p(&f("owner.toml")),
        "--cloud",
        &addr,
        "--grants",
        p(&f("grant-all.toml")),
        "--grants",
        p(&f("grant-avg.toml")),
        "--tuples",
        "0",
    ]);
    let user = Command::new(BIN)
        .args(["user", "run", "--key", p(&f("alice-all.toml")), "--key", p(&f("alice-avg.toml"))])
        .args(["--cloud", &addr, "--count", "24"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    std::thread::sleep(Duration::from_millis(300));
    run(&[
        "owner",
        "run",
        "--owner",
        p(&f("owner.toml")),
        "--cloud",
        &addr,
        "--tuples",
        "20",
        "--generator",
        "constant:7",
        "--start-delay-ms",
        "500",
    ]);
    let out = user.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 24, "{text}");
    let values: Vec<&&str> = lines.iter().filter(|l| l.contains("\tvalue\t")).collect();
    assert_eq!(values.len(), 20);
    assert!(values.iter().all(|l| l.starts_with("alice\tall\t") && l.ends_with("v=7")));
    let averages: Vec<&&str> = lines.iter().filter(|l| l.contains("\taverage\t")).collect();
    assert_eq!(averages.len(), 4);
    assert!(averages.iter().all(|l| l.contains("sum=35\tcount=5\tmean=7.000")));
}
