use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gpardsel::kernelmath::DesignMatrix;
use gpardsel::model::Family;
use gpardsel::simlab::{generate, SimDesign, SimTag};
use gpardsel_cli::ingest::{read_table, write_csv};
use gpardsel_cli::{ingest_csv, FitOutput, IngestError, SelectOutput, StudyOutput};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gpardsel"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sim_csv(dir: &TempDir, tag: SimTag, n: usize, seed: u64) -> PathBuf {
    let data = generate(&SimDesign::with_n(tag, n, seed)).unwrap();
    let names: Vec<String> = (1..=data.x.ncols()).map(|k| format!("x{k}")).collect();
    let p = dir.path().join(format!("{tag}-{n}-{seed}.csv"));
    write_csv(&p, &names, &data.x, Some(("y", &data.y))).unwrap();
    p
}

#[test]
fn ingest_reads_features_in_header_order() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "a.csv", "x1,y,x2\n1,0,2\n3,1,4\n5,1,6\n");
    let (x, y, names) = ingest_csv(&p, "y", Some(Family::Bernoulli)).unwrap();
    assert_eq!((x.nrows(), x.ncols()), (3, 2));
    assert_eq!(y, vec![0.0, 1.0, 1.0]);
    assert_eq!(names, vec!["x1", "x2"]);
    assert_eq!(x.row(2), vec![5.0, 6.0]);
}

#[test]
fn ingest_errors() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "a.csv", "x1,x2,y\n1,2,0\n3,4,2\n");
    assert!(matches!(
        ingest_csv(&p, "y", Some(Family::Bernoulli)),
        Err(IngestError::DomainMismatch(_))
    ));
    assert!(matches!(
        ingest_csv(&p, "label", None),
        Err(IngestError::MissingColumn(c)) if c == "label"
    ));
    let q = write(&dir, "b.csv", "x1,x2,y\n1,2,0\n3,NaN,1\n");
    match ingest_csv(&q, "y", None) {
        Err(IngestError::ParseError { row, col, name, .. }) => {
            assert_eq!((row, col, name.as_str()), (2, 2, "x2"));
        }
        other => panic!("{other:?}"),
    }
    let r = write(&dir, "c.csv", "x1,y\n1,0\nabc,1\n");
    assert!(matches!(
        ingest_csv(&r, "y", None),
        Err(IngestError::ParseError { row: 2, col: 1, .. })
    ));
}

#[test]
fn csv_round_trip_keeps_full_precision() {
    let dir = TempDir::new().unwrap();
    let rows = vec![
        vec![0.1 + 0.2, -1.0 / 3.0, 1e-300],
        vec![std::f64::consts::PI * 1e12, 2.0_f64.sqrt(), -7.25e-9],
    ];
    let x = DesignMatrix::from_rows(&rows).unwrap();
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let p = dir.path().join("x.csv");
    write_csv(&p, &names, &x, None).unwrap();
    let t = read_table(&p).unwrap();
    assert_eq!(t.header, names);
    for (got, want) in t.rows.iter().flatten().zip(rows.iter().flatten()) {
        assert!(((got - want) / want).abs() < 1e-15);
    }
}

#[test]
fn select_finds_the_active_feature_of_example_one() {
    let dir = TempDir::new().unwrap();
    let data = sim_csv(&dir, SimTag::Ex1, 100, 4);
    let out = dir.path().join("report.json");
    let bp = dir.path().join("box.json");
    let o = run(&[
        "select",
        "--data",
        s(&data),
        "--family",
        "bernoulli",
        "--tau",
        "4",
        "-M",
        "20",
        "--q",
        "60",
        "--algorithm",
        "pca",
        "--out",
        s(&out),
        "--boxplot",
        s(&bp),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let line = stdout.lines().find(|l| l.starts_with("q=60")).unwrap();
    let active = line.split("active=[").nth(1).unwrap().trim_end_matches(']');
    assert!(active.split(',').any(|f| f == "x1"), "{line}");
    let report: SelectOutput = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.report.schema_version, 1);
    assert!(report.report.active_indices["60"].contains(&1));
    assert_eq!(report.run_config.seed, 0);
    assert_eq!(report.standardization.means.len(), 71);
    let boxplot: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&bp).unwrap()).unwrap();
    assert_eq!(boxplot["features"].as_array().unwrap().len(), 71);
    assert_eq!(boxplot["meta"]["M"], 20);
    assert_eq!(boxplot["meta"]["algorithm"], "pca");
}

#[test]
fn single_iteration_is_rejected() {
    let dir = TempDir::new().unwrap();
    let data = sim_csv(&dir, SimTag::Ex1, 30, 1);
    let o = run(&["select", "--data", s(&data), "--family", "bernoulli", "-M", "1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("M must be at least 2"));
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let data = sim_csv(&dir, SimTag::GaussEx3, 40, 2);
    let cfg = write(
        &dir,
        "run.toml",
        &format!(
            "data = \"{}\"\nfamily = \"gaussian\"\nm = 4\nmax_iters = 40\nseed = 11\n",
            s(&data)
        ),
    );
    let mut reports = Vec::new();
    for (i, threads) in ["1", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("r{i}.json"));
        let bp = dir.path().join(format!("b{i}.json"));
        let o = bin()
            .args(["select", "--config", s(&cfg), "--out", s(&out), "--boxplot", s(&bp)])
            .env("GPARDSEL_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let text = std::fs::read_to_string(&out).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        // output paths differ between the runs; everything else must not
        let mut v = v;
        v["run_config"]["out"] = "".into();
        v["run_config"]["boxplot"] = "".into();
        reports.push(v.to_string());
        assert_eq!(v["run_config"]["seed"], 11);
        assert_eq!(v["run_config"]["m"], 4);
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);

    let a = dir.path().join("same.json");
    let b = dir.path().join("same_box.json");
    let first = run(&["select", "--config", s(&cfg), "--out", s(&a), "--boxplot", s(&b)]);
    assert_eq!(code(&first), 0);
    let bytes = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let second = run(&["select", "--config", s(&cfg), "--out", s(&a), "--boxplot", s(&b)]);
    assert_eq!(code(&second), 0);
    assert_eq!(bytes, (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap()));
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let data = sim_csv(&dir, SimTag::GaussEx3, 30, 3);
    let cfg = write(
        &dir,
        "run.toml",
        &format!(
            "data = \"{}\"\nfamily = \"gaussian\"\nm = 3\nmax_iters = 20\ntau = 9\n",
            s(&data)
        ),
    );
    let out = dir.path().join("r.json");
    let bp = dir.path().join("b.json");
    let o = run(&[
        "select",
        "--config",
        s(&cfg),
        "--tau",
        "0.5",
        "--out",
        s(&out),
        "--boxplot",
        s(&bp),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["run_config"]["tau"], 0.5);
    assert_eq!(v["config"]["tau"], 0.5);
    assert_eq!(v["run_config"]["max_iters"], 20);

    let bad = write(&dir, "bad.toml", "family = \"gaussian\"\nwhatever = 1\n");
    let o = run(&["select", "--config", s(&bad), "--data", s(&data)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_ci_profile_smoke() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("study.csv");
    let json = dir.path().join("study.json");
    let o = run(&[
        "simulate",
        "--design",
        "ex2",
        "--profile",
        "ci",
        "--reps",
        "1",
        "-M",
        "3",
        "--max-iters",
        "15",
        "--algorithms",
        "random",
        "--taus",
        "2",
        "--q",
        "80",
        "--out-csv",
        s(&csv),
        "--out-json",
        s(&json),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows[0], "feature");
    for k in 1..=6 {
        assert_eq!(rows[k], format!("x{k}"));
    }
    assert_eq!(*rows.last().unwrap(), "inactive_aggregate");
    let study: StudyOutput = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(study.result.design.n, 250);
    assert_eq!(study.result.reps, 1);
    assert_eq!(study.run_config.m, 3);
}

#[test]
fn simulate_rejects_unknown_design() {
    let o = run(&["simulate", "--design", "ex9"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ex9"));
}

#[test]
fn prior_grid_gives_one_column_per_rate() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("study.csv");
    let json = dir.path().join("study.json");
    let o = run(&[
        "simulate",
        "--design",
        "ex2",
        "--n",
        "40",
        "--reps",
        "1",
        "-M",
        "2",
        "--max-iters",
        "5",
        "--algorithms",
        "random",
        "--taus",
        "0,1,2,4,10",
        "--q",
        "80",
        "--out-csv",
        s(&csv),
        "--out-json",
        s(&json),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(
        header[1..],
        [
            "random/tau=0/q=80",
            "random/tau=1/q=80",
            "random/tau=2/q=80",
            "random/tau=4/q=80",
            "random/tau=10/q=80"
        ]
    );
}

fn regression_fixture(dir: &TempDir) -> PathBuf {
    let mut text = String::from("x1,x2,x3,y\n");
    for i in 0..40 {
        let t = i as f64 / 39.0;
        let x1 = -2.0 + 4.0 * t;
        let x2 = ((i * 17) % 40) as f64 / 10.0;
        let x3 = ((i * 23) % 40) as f64 / 7.0;
        text.push_str(&format!("{x1},{x2},{x3},{x1}\n"));
    }
    write(dir, "train.csv", &text)
}

#[test]
fn fit_ranks_the_generating_feature_first_and_predicts() {
    let dir = TempDir::new().unwrap();
    let train = regression_fixture(&dir);
    let test = write(&dir, "test.csv", "x1,x2,x3\n0.5,1,1\n-1,2,3\n");
    let out = dir.path().join("fit.json");
    let preds = dir.path().join("pred.csv");
    let o = run(&[
        "fit",
        "--train",
        s(&train),
        "--test",
        s(&test),
        "--family",
        "gaussian",
        "--tau",
        "1",
        "--out",
        s(&out),
        "--predictions",
        s(&preds),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let fit: FitOutput = serde_json::from_str(&text).unwrap();
    let ell2 = &fit.fit.hp_hat.ell2;
    assert!(ell2[0] > ell2[1] && ell2[0] > ell2[2], "{ell2:?}");
    assert_eq!(fit.feature_names, vec!["x1", "x2", "x3"]);
    let again = serde_json::to_string_pretty(&fit).unwrap() + "\n";
    assert_eq!(again, text);
    let pred = read_table(&preds).unwrap();
    assert_eq!(pred.header, vec!["row", "latent_mean", "response"]);
    assert!((pred.rows[0][1] - 0.5).abs() < 0.1, "{:?}", pred.rows);
    assert!((pred.rows[1][1] + 1.0).abs() < 0.1, "{:?}", pred.rows);
}

#[test]
fn fit_rejects_mismatched_test_columns() {
    let dir = TempDir::new().unwrap();
    let train = regression_fixture(&dir);
    let test = write(&dir, "test.csv", "x1,x3,x2\n0.5,1,1\n");
    let o = run(&["fit", "--train", s(&train), "--test", s(&test), "--family", "gaussian"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn data_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "a.csv", "x1,x2,y\n1,2,0\n3,4,2\n5,1,1\n");
    let o = run(&["select", "--data", s(&p), "--family", "bernoulli"]);
    assert_eq!(code(&o), 2);
    let nan = write(&dir, "n.csv", "x1,y\n1,0\nNaN,1\n");
    let o = run(&["fit", "--train", s(&nan), "--family", "bernoulli"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2, column 1"));
    let o = run(&[
        "select",
        "--data",
        s(&dir.path().join("missing.csv")),
        "--family",
        "gaussian",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn report_summarizes_each_output_kind() {
    let dir = TempDir::new().unwrap();
    let data = sim_csv(&dir, SimTag::GaussEx3, 30, 5);
    let out = dir.path().join("r.json");
    let bp = dir.path().join("b.json");
    let o = run(&[
        "select",
        "--data",
        s(&data),
        "--family",
        "gaussian",
        "-M",
        "3",
        "--max-iters",
        "10",
        "--out",
        s(&out),
        "--boxplot",
        s(&bp),
    ]);
    assert_eq!(code(&o), 0);
    let bp2 = dir.path().join("b2.json");
    let o = run(&["report", "--input", s(&out), "--boxplot", s(&bp2)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("feature,median,active_q60,active_q80,active_q90"));
    assert_eq!(std::fs::read(&bp).unwrap(), std::fs::read(&bp2).unwrap());
    let junk = write(&dir, "j.json", "{\"a\": 1}");
    assert_eq!(code(&run(&["report", "--input", s(&junk)])), 2);
}

#[test]
fn generate_writes_a_readable_design() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("ex1.csv");
    let o = run(&["generate", "--design", "ex1", "--seed", "3", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let (x, y, names) = ingest_csv(&out, "y", Some(Family::Bernoulli)).unwrap();
    assert_eq!((x.nrows(), x.ncols(), y.len()), (100, 71, 100));
    assert_eq!(names[70], "x71");
    let direct = generate(&SimDesign::paper(SimTag::Ex1, 3)).unwrap();
    assert_eq!(direct.x.as_mat(), x.as_mat());
    assert_eq!(direct.y, y);
}

#[test]
fn numerical_failures_map_to_exit_three() {
    use gpardsel::Error;
    use gpardsel_cli::{CliError, EXIT_INPUT, EXIT_NUMERICAL};
    for e in [
        Error::NotPositiveDefinite { jitter: 1e-2 },
        Error::NewtonDivergence { iters: 100 },
        Error::AllRestartsFailed("x".into()),
        Error::TooManyFailedFits { failed: 3, total: 4 },
    ] {
        assert_eq!(CliError::from(e).code, EXIT_NUMERICAL);
    }
    assert_eq!(CliError::from(Error::EmptyInput).code, EXIT_INPUT);
    assert_eq!(CliError::from(Error::DomainMismatch("y".into())).code, EXIT_INPUT);
}

#[test]
fn extreme_counts_finish_without_claiming_convergence() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("x1,x2,y\n");
    for i in 0..20u32 {
        text.push_str(&format!("{},{},{}\n", i % 7, (i * 3) % 11, 10u64.pow(i % 16)));
    }
    let train = write(&dir, "counts.csv", &text);
    let out = dir.path().join("fit.json");
    let o = run(&[
        "fit",
        "--train",
        s(&train),
        "--family",
        "poisson",
        "--max-iters",
        "50",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fit: FitOutput = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(fit.fit.objective.is_finite());
    if fit.fit.converged {
        assert!(fit.fit.grad_norm_final <= 1e-5);
    }
}
