use std::fs;
use std::path::Path;
use std::process::Command;

use nalgebra::{DMatrix, DVector};
use randproj::io::write_matrix;
use randproj::matrices::make_toy;
use randproj_cli::commands::{cmd_bounds, cmd_reproduce, cmd_solve, cmd_trials, cmd_verify, Figure, Status};
use randproj_cli::spec::{ExperimentSpec, Generator, GridSpec, OmegaChoice, SystemSource};
use randproj_cli::CliError;
use randproj::{Method, SweepMode};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_randproj"))
}

/// Parses a CSV written by the CLI into its metadata map, header and rows.
fn read_table(text: &str) -> (Vec<(String, String)>, Vec<String>, Vec<Vec<String>>) {
    let mut meta = Vec::new();
    let mut lines = text.lines();
    let header = loop {
        let line = lines.next().expect("header line");
        match line.strip_prefix("# ") {
            Some(m) => {
                let (k, v) = m.split_once(": ").expect("key: value");
                meta.push((k.to_string(), v.to_string()));
            }
            None => break line.split(',').map(String::from).collect::<Vec<_>>(),
        }
    };
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (meta, header, rows)
}

fn meta_f64(meta: &[(String, String)], key: &str) -> f64 {
    meta.iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("missing {key}")).1.parse().unwrap()
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let idx = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"));
    rows.iter().map(|r| r[idx].parse().unwrap()).collect()
}

/// Scalar C-bound straight from `(mu1, mu2, xi)` with the quadratic formula.
fn scalar_c(mu1: f64, mu2: f64, xi: f64, w: f64) -> f64 {
    let g = 0.5 * (mu1 + mu2) * (1.0 - xi / mu1);
    let (a, b, c) = (mu1 + mu2 - w * g, -w * (g * xi).sqrt(), 2.0 * mu1 - w * xi);
    let lam = 0.5 * ((a + c) - ((a - c).powi(2) + 4.0 * b * b).sqrt());
    1.0 - w * lam
}

fn generated(generator: Generator, m: Option<usize>, n: usize, kappa: f64) -> ExperimentSpec {
    ExperimentSpec::new("test", SystemSource::Generated { generator, m, n, kappa })
}

fn file_spec(dir: &Path, name: &str, a: &DMatrix<f64>, method: Method) -> ExperimentSpec {
    let path = dir.join(name);
    write_matrix(&path, a).unwrap();
    let mut spec = ExperimentSpec::new("test", SystemSource::File { matrix: path, rhs: None });
    spec.method = Some(method);
    spec
}

#[test]
fn bounds_hilbert4_matches_scalar_oracle() {
    let out = bin()
        .args(["bounds", "--gen", "hilbert", "--n", "4", "--method", "gauss-seidel", "--grid", "0:2:81"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let (meta, header, rows) = read_table(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 81);
    assert_eq!(header, ["omega", "b_bound", "c_bound", "rho"]);

    // numpy reference values for the normalized 4x4 Hilbert matrix.
    let (mu1, mu2, xi) = (meta_f64(&meta, "mu1"), meta_f64(&meta, "mu2"), meta_f64(&meta, "xi"));
    assert!((mu1 - 0.00012076617861891027).abs() < 1e-15);
    assert!((mu2 - 0.006401618338134346).abs() < 1e-15);
    assert!((xi - 2.6827375260103347e-08).abs() < 1e-18);
    assert!((meta_f64(&meta, "omega_star") - 1.89978).abs() < 2e-5);

    let omegas = column(&header, &rows, "omega");
    let b = column(&header, &rows, "b_bound");
    let c = column(&header, &rows, "c_bound");
    let rho = column(&header, &rows, "rho");
    for k in 0..81 {
        let w = omegas[k];
        assert!(c[k] <= b[k], "row {k}");
        assert!(rho[k] <= c[k] + 1e-10, "row {k}");
        assert!((b[k] - (1.0 - w * (2.0 - w) * mu1)).abs() < 1e-14);
        assert!((c[k] - scalar_c(mu1, mu2, xi, w)).abs() < 1e-12);
    }
    let at_one = omegas.iter().position(|&w| w == 1.0).unwrap();
    assert!((c[at_one] - 0.9997585234294246).abs() < 1e-13);
    assert!((b[at_one] - 0.9998792338213811).abs() < 1e-13);
}

#[test]
fn ill_conditioned_random_pushes_omega_up() {
    let mut spec = generated(Generator::Random, Some(50), 50, 61705.3);
    spec.grid = GridSpec { start: 1.0, stop: 1.0, count: 1 };
    let s = cmd_bounds(&spec, &mut Vec::new()).unwrap();
    assert!(s.omega_star > 1.3, "omega_star = {}", s.omega_star);
    assert!(s.rho_at_omega_star.unwrap() < s.rho_at_one.unwrap());
}

#[test]
fn identity_input_gives_equal_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = file_spec(dir.path(), "eye.mtx", &DMatrix::identity(4, 4), Method::Kaczmarz);
    spec.out = Some(dir.path().join("out"));
    cmd_bounds(&spec, &mut Vec::new()).unwrap();
    let text = fs::read_to_string(dir.path().join("out/bounds.csv")).unwrap();
    let (_, header, rows) = read_table(&text);
    assert_eq!(rows.len(), 81);
    let (bi, ci) = (1, 2);
    assert_eq!((header[bi].as_str(), header[ci].as_str()), ("b_bound", "c_bound"));
    for r in &rows {
        assert_eq!(r[bi], r[ci]);
    }
}

#[test]
fn blocks_and_csv_input() {
    let dir = tempfile::tempdir().unwrap();
    let toy = make_toy().unwrap();
    let mut spec = file_spec(dir.path(), "toy.csv", toy.a(), Method::GaussSeidel);
    spec.blocks = Some(2);
    spec.grid = GridSpec { start: 0.0, stop: 2.0, count: 21 };
    let s = cmd_bounds(&spec, &mut Vec::new()).unwrap();
    assert!(s.omega_star >= 1.0 && s.omega_star < 2.0);
    assert!(s.rho_at_omega_star.unwrap() <= s.c_at_omega_star + 1e-10);
}

#[test]
fn toy_campaign_orders_curves() {
    let dir = tempfile::tempdir().unwrap();
    let toy = make_toy().unwrap();
    let mut spec = file_spec(dir.path(), "toy.mtx", toy.a(), Method::GaussSeidel);
    spec.trials = 150;
    spec.iters = 1000;
    spec.seed = 11;
    spec.out = Some(dir.path().join("out"));
    let runs = cmd_trials(&spec, &[OmegaChoice::Value(1.0), OmegaChoice::Optimal], 1, &mut Vec::new()).unwrap();
    assert!(runs[1].omega > 1.0);
    assert!(runs[1].final_mean < runs[0].final_mean);

    let text = fs::read_to_string(dir.path().join("out/summary_w1.csv")).unwrap();
    let (_, header, rows) = read_table(&text);
    assert_eq!(rows.len(), 1001);
    let its = column(&header, &rows, "iteration");
    let mean = column(&header, &rows, "mean_sq_error");
    let b = column(&header, &rows, "b_bound");
    for k in 0..rows.len() {
        if its[k] > 10.0 {
            assert!(mean[k] < b[k], "iteration {}", its[k]);
        }
    }
    let traj = fs::read_to_string(dir.path().join("out/trajectories_wopt.csv")).unwrap();
    let (_, header, rows) = read_table(&traj);
    assert_eq!(header, ["trial", "iteration", "sq_error"]);
    assert_eq!(rows.len(), 150 * 1001);
}

#[test]
fn single_trial_zero_iterations() {
    let mut spec = generated(Generator::Hilbert, None, 3, 1.0);
    spec.iters = 0;
    let mut buf = Vec::new();
    let runs = cmd_trials(&spec, &[OmegaChoice::Value(1.0)], 1, &mut buf).unwrap();
    let (_, header, rows) = read_table(&String::from_utf8(buf).unwrap());
    assert_eq!(rows.len(), 1);
    let e0 = column(&header, &rows, "mean_sq_error")[0];
    assert_eq!(e0, runs[0].initial_mean);
    assert!(e0 > 0.0);
}

#[test]
fn verify_hilbert3_passes() {
    let mut buf = Vec::new();
    let report = cmd_verify(&generated(Generator::Hilbert, None, 3, 1.0), &mut buf).unwrap();
    assert!(report.failed().is_empty(), "{:?}", report.failed());
    assert!(report.checks.iter().all(|c| c.status != Status::Warn));
    let out = bin().args(["verify", "--gen", "hilbert", "--n", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn verify_block_diagonal_warns_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = DMatrix::zeros(4, 4);
    a.view_mut((0, 0), (2, 2)).copy_from(&DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]));
    a.view_mut((2, 2), (2, 2)).copy_from(&DMatrix::from_row_slice(2, 2, &[1.0, -0.3, -0.3, 3.0]));
    let mut spec = file_spec(dir.path(), "blocks.mtx", &a, Method::GaussSeidel);
    spec.out = Some(dir.path().join("out"));
    let report = cmd_verify(&spec, &mut Vec::new()).unwrap();
    assert!(!report.irreducible);
    assert_eq!(report.get("irreducible").unwrap().status, Status::Warn);
    assert!(report.failed().is_empty(), "{:?}", report.failed());
    assert!(fs::read_to_string(dir.path().join("out/verify.csv")).unwrap().contains("check,value,threshold,status"));
}

#[test]
fn verify_identity_eclipse_is_equality() {
    let dir = tempfile::tempdir().unwrap();
    let spec = file_spec(dir.path(), "eye.csv", &DMatrix::identity(3, 3), Method::Kaczmarz);
    let report = cmd_verify(&spec, &mut Vec::new()).unwrap();
    assert!(report.failed().is_empty(), "{:?}", report.failed());
    assert!(report.get("eclipse_max_difference").unwrap().value < 1e-14);
}

#[test]
fn verify_cap_is_input_error() {
    let out = bin().args(["verify", "--gen", "parter", "--n", "65"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reduce n"));
}

#[test]
fn reproduce_fig6_hilbert() {
    let dir = tempfile::tempdir().unwrap();
    let summary = cmd_reproduce(Figure::Fig6Hilbert, dir.path(), &mut Vec::new()).unwrap();
    assert_eq!(summary.files.len(), 3);
    for n in [2, 3, 4] {
        let text = fs::read_to_string(dir.path().join(format!("fig6_hilbert_n{n}.csv"))).unwrap();
        let (meta, header, rows) = read_table(&text);
        let (mu1, mu2, xi) = (meta_f64(&meta, "mu1"), meta_f64(&meta, "mu2"), meta_f64(&meta, "xi"));
        let omegas = column(&header, &rows, "omega");
        let b = column(&header, &rows, "b_bound");
        let c = column(&header, &rows, "c_bound");
        let rho = column(&header, &rows, "rho");
        let mut strict = false;
        for k in 0..rows.len() {
            assert!(rho[k] <= c[k] + 1e-10 && c[k] <= b[k] + 1e-10);
            assert!((c[k] - scalar_c(mu1, mu2, xi, omegas[k])).abs() < 1e-12);
            strict |= omegas[k] > 1.0 && omegas[k] < 2.0 && c[k] < b[k];
        }
        assert!(strict, "n = {n}");
        assert!(meta_f64(&meta, "omega_star") > 1.0);
        assert!(meta_f64(&meta, "rho_at_omega_star") < meta_f64(&meta, "rho_at_1"));
    }
}

#[test]
fn reproduce_fig2_orders_curves() {
    let dir = tempfile::tempdir().unwrap();
    let summary = cmd_reproduce(Figure::Fig2, dir.path(), &mut Vec::new()).unwrap();
    assert_eq!(summary.campaigns.len(), 2);
    let (base, tuned) = (&summary.campaigns[0], &summary.campaigns[1]);
    assert!(tuned.final_mean < base.final_mean);
    // Empirical rate below the C-bound, which is below the B-bound.
    for c in &summary.campaigns {
        let rate = c.empirical_rate.unwrap();
        assert!(rate <= c.c_bound && c.c_bound <= c.b_bound, "{c:?}");
    }
    let text = fs::read_to_string(dir.path().join("fig2_summary.csv")).unwrap();
    let (_, header, rows) = read_table(&text);
    assert_eq!(header.len(), 7);
    assert_eq!(rows.len(), 1001);
}

#[test]
fn reproduce_fig5_left_improves_rate() {
    let dir = tempfile::tempdir().unwrap();
    let summary = cmd_reproduce(Figure::Fig5Left, dir.path(), &mut Vec::new()).unwrap();
    let s = &summary.curves[0];
    assert!(s.omega_star > 1.0);
    assert!(s.rho_at_omega_star.unwrap() < s.rho_at_one.unwrap());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = bin()
            .args(["trials", "--gen", "random", "--m", "8", "--n", "4", "--kappa", "30", "--trials", "20"])
            .args(["--iters", "200", "--omega", "1,opt", "--seed", "5", "--threads", "1", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        let status = bin()
            .args(["bounds", "--gen", "parter", "--n", "6", "--grid", "0:2:11", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["summary_w1.csv", "summary_wopt.csv", "trajectories_w1.csv", "trajectories_wopt.csv", "bounds.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn input_errors_exit_2() {
    for args in [
        vec!["bounds", "--gen", "hilbert", "--n", "4", "--grid", "0:3:10"],
        vec!["bounds", "--gen", "hilbert"],
        vec!["bounds", "--matrix", "/nonexistent/a.csv"],
        vec!["bounds", "--gen", "parter", "--n", "4", "--method", "gauss-seidel"],
        vec!["trials", "--gen", "hilbert", "--n", "3", "--omega", "2.5"],
        vec!["reproduce", "fig9"],
        vec!["solve", "--gen", "hilbert", "--n", "3", "--threads", "0"],
    ] {
        let out = bin().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    assert_eq!(CliError::Verification("x".into()).exit_code(), 1);
}

#[test]
fn solve_recovers_solution() {
    let dir = tempfile::tempdir().unwrap();
    let a = DMatrix::from_row_slice(4, 3, &[1.0, 0.2, 0.0, 0.1, 1.0, 0.3, 0.0, 0.4, 1.0, 1.0, 1.0, 1.0]);
    let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    write_matrix(&dir.path().join("a.mtx"), &a).unwrap();
    write_matrix(&dir.path().join("b.csv"), &DMatrix::from_column_slice(4, 1, (&a * &x).as_slice())).unwrap();
    let mut spec = ExperimentSpec::new(
        "solve",
        SystemSource::File { matrix: dir.path().join("a.mtx"), rhs: Some(dir.path().join("b.csv")) },
    );
    spec.iters = 2000;
    spec.out = Some(dir.path().join("out"));
    let s = cmd_solve(&spec, OmegaChoice::Optimal, SweepMode::Randomized, 10, &mut Vec::new()).unwrap();
    for (got, want) in s.x.iter().zip(x.iter()) {
        assert!((got - want).abs() < 1e-8);
    }
    assert!(s.relative_residual < 1e-8);
    let (_, header, rows) = read_table(&fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap());
    assert_eq!(header, ["trial", "iteration", "sq_error"]);
    assert_eq!(rows.len(), 201);

    let mut spec = generated(Generator::Hilbert, None, 3, 1.0);
    spec.iters = 3000;
    let s = cmd_solve(&spec, OmegaChoice::Value(1.5), SweepMode::CyclicForward, 1, &mut Vec::new()).unwrap();
    assert!(s.final_sq_error < 1e-12);
}
