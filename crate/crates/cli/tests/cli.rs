use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn capalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capalloc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_then_oracle_on_lp_gap() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("gap.json");
    let g = capalloc(&["gen", "--family", "lp-gap", "--out", path(&inst)]);
    assert!(g.status.success());
    let o = capalloc(&["oracle", "--instance", path(&inst)]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("opt_online = 1.5"), "{out}");
    assert!(out.contains("lp = 2"), "{out}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed = 0"));
}

#[test]
fn bdm_run_mean_near_seven() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("bdm.json");
    assert!(capalloc(&["gen", "--family", "bdm", "--n", "4", "--out", path(&inst)]).status.success());
    let out = dir.path().join("run");
    let r = capalloc(&["run", "--instance", path(&inst), "--alg", "bdm", "--trials", "100000", "--seed", "3", "--out", path(&out)]);
    assert!(r.status.success());
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let row = summary.lines().last().unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    let mean: f64 = cols[2].parse().unwrap();
    let se: f64 = cols[4].parse().unwrap();
    assert!((mean - 7.0).abs() < 3.0 * se, "mean {mean} se {se}");
    assert!(!out.join("pairs.csv").exists());
}

#[test]
fn kappa_table_has_nine_rows() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("kappa.csv");
    assert!(capalloc(&["kappa-table", "--max-c", "9", "--out", path(&file)]).status.success());
    let text = fs::read_to_string(&file).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "min_c,kappa,slack");
    assert_eq!(body.len(), 10);
    // (entry, one unit in its last printed decimal)
    let printed = [
        (0.0115, 1e-4),
        (0.0126, 1e-4),
        (0.0131, 1e-4),
        (0.0133, 1e-4),
        (0.0134, 1e-4),
        (0.0135, 1e-4),
        (0.01362, 1e-5),
        (0.01367, 1e-5),
        (0.01371, 1e-5),
    ];
    for (row, (want, unit)) in body[1..].iter().zip(printed) {
        let k: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((k - want).abs() < unit, "{row}");
    }
}

#[test]
fn reruns_are_byte_identical_and_job_independent() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let o = capalloc(&[
            "run", "--family", "random", "--n", "3", "--rounds", "3", "--stochastic", "--alg", "twoproposal-sampled",
            "--trials", "5000", "--samples", "500", "--seed", "11", "--jobs", jobs, "--out", path(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(out.join("summary.csv")).unwrap(), fs::read(out.join("pairs.csv")).unwrap())
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "4");
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn output_header_block() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("oracle.csv");
    assert!(capalloc(&["oracle", "--family", "lp-gap", "--seed", "5", "--out", path(&file)]).status.success());
    let text = fs::read_to_string(&file).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# capalloc "));
    assert_eq!(lines[1], "# command: oracle");
    assert_eq!(lines[2], "# seed: 5");
    assert!(lines.contains(&"# family: lp-gap"));
    assert!(lines.contains(&"opt_online,1.5,0"));
}

#[test]
fn audit_passes_on_positive_correlation_gadget() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("audit");
    let o = capalloc(&["audit", "--family", "poscorr", "--out", path(&out)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("max_law_error = 0"));
    for f in ["summary.csv", "pairs.csv", "correlation.csv"] {
        assert!(out.join(f).exists());
    }
}

#[test]
fn lp_solution_round_trips_into_audit() {
    let dir = tempfile::tempdir().unwrap();
    let sol = dir.path().join("sol.json");
    let lpf = dir.path().join("model.lp");
    let o = capalloc(&["lp", "--family", "bdm", "--n", "4", "--out", path(&sol), "--lp-file", path(&lpf)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("lp_objective = 19"));
    assert!(fs::read_to_string(&lpf).unwrap().contains("Maximize"));
    let a = capalloc(&["audit", "--family", "bdm", "--n", "4", "--solution", path(&sol)]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    // bad input
    assert_eq!(capalloc(&["run", "--family", "lp-gap", "--alg", "nope"]).status.code(), Some(2));
    assert_eq!(capalloc(&["oracle", "--instance", "/nonexistent/x.json"]).status.code(), Some(2));
    assert_eq!(capalloc(&["oracle"]).status.code(), Some(2));
    let garbage = dir.path().join("bad.json");
    fs::write(&garbage, "{\"schema\": \"other\"}").unwrap();
    assert_eq!(capalloc(&["oracle", "--instance", path(&garbage)]).status.code(), Some(2));

    // budget
    let o = capalloc(&["oracle", "--family", "lp-gap", "--budget", "1"]);
    assert_eq!(o.status.code(), Some(3));
    let o = capalloc(&["run", "--family", "lp-gap", "--alg", "twoproposal-sampled", "--formula-samples", "--trials", "10"]);
    assert_eq!(o.status.code(), Some(3));

    // violation: a solution that overfills the lp-gap model
    let sol = dir.path().join("sol.json");
    assert!(capalloc(&["lp", "--family", "lp-gap", "--out", path(&sol)]).status.success());
    let text = fs::read_to_string(&sol).unwrap().replace("0.5", "0.9");
    fs::write(&sol, text).unwrap();
    assert_eq!(capalloc(&["audit", "--family", "lp-gap", "--solution", path(&sol)]).status.code(), Some(4));
}
