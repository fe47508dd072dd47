use std::process::{Command, Output};

fn hgwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgwalk"))
        .args(args)
        .env_remove("HGWALK_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn kernel_two_steps_of_reflected_walk() {
    let o = hgwalk(&[
        "kernel", "--alpha", "-0.5", "--mu", "1:1", "--x", "0", "--n", "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "state,mass\n0,0.5\n2,0.5\n");
}

#[test]
fn kernel_zero_steps_is_dirac() {
    let o = hgwalk(&[
        "kernel", "--alpha", "-0.5", "--mu", "1:1", "--x", "0", "--n", "0",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "state,mass\n0,1\n");
}

#[test]
fn kernel_json_output() {
    let o = hgwalk(&[
        "kernel", "--alpha", "-0.5", "--mu", "1:1", "--x", "0", "--n", "2", "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["entries"]["0"], 0.5);
    assert_eq!(v["entries"]["2"], 0.5);
}

#[test]
fn malformed_mass_exits_with_two() {
    let o = hgwalk(&[
        "kernel", "--alpha", "-0.5", "--mu", "1:0.4", "--x", "0", "--n", "2",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn mu_and_mu_file_are_mutually_exclusive() {
    let o = hgwalk(&[
        "kernel",
        "--alpha",
        "0",
        "--mu",
        "1:1",
        "--mu-file",
        "m.csv",
        "--x",
        "0",
        "--n",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn mu_file_round_trips_kernel_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mu.csv");
    std::fs::write(&path, "state,mass\n1,0.5\n2,0.5\n").unwrap();
    let from_file = hgwalk(&[
        "kernel",
        "--alpha",
        "-0.25",
        "--mu-file",
        path.to_str().unwrap(),
        "--x",
        "1",
        "--n",
        "3",
    ]);
    let inline = hgwalk(&[
        "kernel",
        "--alpha",
        "-0.25",
        "--mu",
        "1:0.5,2:0.5",
        "--x",
        "1",
        "--n",
        "3",
    ]);
    assert_eq!(from_file.status.code(), Some(0));
    assert_eq!(from_file.stdout, inline.stdout);
}

#[test]
fn ml_moment_prints_two_over_root_pi() {
    let o = hgwalk(&["specfun", "ml-moment", "--order", "0.5", "--p", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "1.1283791671");
    let full = hgwalk(&[
        "--full-precision",
        "specfun",
        "ml-moment",
        "--order",
        "0.5",
        "--p",
        "1",
    ]);
    let v: f64 = stdout(&full).trim().parse().unwrap();
    assert!((v - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-15);
}

#[test]
fn monte_carlo_commands_require_a_seed() {
    let o = hgwalk(&[
        "simulate",
        "--alpha",
        "-0.5",
        "--mu",
        "1:1",
        "--y",
        "0",
        "--n",
        "10",
        "--replicas",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_output_does_not_depend_on_thread_count() {
    let run = |threads: &str| {
        hgwalk(&[
            "simulate",
            "--alpha",
            "-0.25",
            "--mu",
            "1:0.5,2:0.5",
            "--y",
            "0,1",
            "--n",
            "500",
            "--replicas",
            "300",
            "--seed",
            "9",
            "--threads",
            threads,
        ])
    };
    let one = run("1");
    let four = run("4");
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    assert!(stdout(&one).starts_with("replica,y,count\n"));
    assert_eq!(stdout(&one).lines().count(), 1 + 2 * 300);
}

#[test]
fn verify_llt_table_passes() {
    let o = hgwalk(&[
        "verify-llt",
        "--alpha",
        "-0.25",
        "--mu",
        "1:0.5,2:0.5",
        "--x",
        "0",
        "--y",
        "0",
        "--n",
        "64,256,1024,4096,16384",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = stdout(&o);
    assert!(out.starts_with("series,n,observed,predicted,ratio,std_error,kind\n"));
    assert!(out.lines().any(|l| l.contains(",16384,")));
}

#[test]
fn verify_llt_fails_with_exit_one_on_impossible_window() {
    let o = hgwalk(&[
        "verify-llt",
        "--alpha",
        "-0.25",
        "--mu",
        "1:0.5,2:0.5",
        "--n",
        "64,256",
        "--window",
        "0.999999,1.000001",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));
}

#[test]
fn verify_llt_periodic_rejects_aperiodic_measure() {
    let o = hgwalk(&[
        "verify-llt-periodic",
        "--alpha",
        "-0.25",
        "--mu",
        "1:0.5,2:0.5",
        "--n",
        "64,256",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_lt_reflected_walk_passes() {
    let o = hgwalk(&[
        "verify-lt",
        "--alpha",
        "-0.5",
        "--mu",
        "1:1",
        "--y",
        "0",
        "--n",
        "10000",
        "--replicas",
        "100000",
        "--seed",
        "7",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["theorem"], "local-time-limit");
    assert_eq!(v["verdict"]["pass"], true);
}

#[test]
fn verify_lt_rejects_positive_alpha() {
    let o = hgwalk(&[
        "verify-lt",
        "--alpha",
        "0.5",
        "--mu",
        "1:1",
        "--n",
        "100",
        "--replicas",
        "10",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn membership_accepts_a_gegenbauer_kernel_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    // nearest-neighbour walk at α = 0: p(x, x-1) = x/(2x+1)
    let mut text = String::new();
    for x in 0..8usize {
        let mut row = vec![0.0; 9];
        if x == 0 {
            row[1] = 1.0;
        } else {
            let down = x as f64 / (2.0 * x as f64 + 1.0);
            row[x - 1] = down;
            row[x + 1] = 1.0 - down;
        }
        text.push_str(
            &row.iter()
                .map(|v| format!("{v:e}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        text.push('\n');
    }
    std::fs::write(&path, text).unwrap();
    let o = hgwalk(&[
        "membership",
        "--input",
        path.to_str().unwrap(),
        "--lambda",
        "0.5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let wrong = hgwalk(&[
        "membership",
        "--input",
        path.to_str().unwrap(),
        "--lambda",
        "0.2",
    ]);
    assert_eq!(wrong.status.code(), Some(1), "{}", stdout(&wrong));
}

#[test]
fn help_names_the_theorems() {
    for (cmd, phrase) in [
        ("verify-llt", "Local limit theorem for aperiodic"),
        ("verify-llt-periodic", "Local limit theorem for μ = δ₁"),
        ("verify-space-llt", "Space-scaled local limit theorem"),
        ("verify-lt", "Local-time limit theorem"),
    ] {
        let o = hgwalk(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).contains(phrase), "{cmd} help lacks {phrase:?}");
    }
}

#[test]
fn simulate_summary_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let summary = dir.path().join("s.json");
    let o = hgwalk(&[
        "simulate",
        "--alpha",
        "-0.5",
        "--mu",
        "1:1",
        "--y",
        "0",
        "--n",
        "100",
        "--replicas",
        "50",
        "--seed",
        "3",
        "-o",
        out.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::read_to_string(&out)
        .unwrap()
        .starts_with("replica,y,count\n"));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert!(v.is_object());
}
