//! The subcommands as library functions.
//!
//! Each command builds its tables, writes them under `--out` when given (or
//! to the supplied writer otherwise) and returns a summary for the caller.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use randproj::bounds::{omega_grid, xi_closed_form, xi_generic};
use randproj::io::write_trajectories;
use randproj::matrices::{default_irreducibility_tol, make_toy, TOY_KAPPA, TOY_SEED};
use randproj::solver::mean_trajectory;
use randproj::superop::DEFAULT_DIM_CAP;
use randproj::{
    b_bound, c_bound, estimate_rate, ingredients, irreducible, make_hilbert, make_parter, make_random, optimal_omega,
    Ingredients, LinearSystem, SolveConfig, SuperOperators, SweepMode, TrialRecord, TrialRunner,
};

use crate::output::{num, Table};
use crate::spec::{ExperimentSpec, GridSpec, OmegaChoice, Prepared};
use crate::CliError;

/// Slack allowed when checking `rho <= C <= B` on emitted rows.
pub const SANDWICH_TOL: f64 = 1e-10;
/// Pinned seed of every `reproduce` campaign.
pub const FIGURE_SEED: u64 = 2024;

fn resolve_omega(choice: OmegaChoice, ing: &Ingredients) -> f64 {
    match choice {
        OmegaChoice::Value(w) => w,
        OmegaChoice::Optimal => optimal_omega(ing).0,
    }
}

fn dense_ok(n: usize) -> bool {
    n * n <= DEFAULT_DIM_CAP
}

/// Ingredients and the optimal relaxation for one prepared problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsSummary {
    pub label: String,
    pub mu1: f64,
    pub mu2: f64,
    pub xi: f64,
    pub omega_star: f64,
    pub c_at_omega_star: f64,
    /// `rho(1)` and `rho(w*)` when the superoperator fits the cap.
    pub rho_at_one: Option<f64>,
    pub rho_at_omega_star: Option<f64>,
    /// Some `w` in `(1, 2)` on the grid has `C(w) < B(w)` strictly.
    pub c_strictly_below_b: bool,
    pub rows: usize,
}

/// Builds the `omega, b_bound, c_bound[, rho]` table and refuses to emit it
/// if any row breaks `rho <= C <= B`.
fn curve_table(label: &str, prep: &Prepared, grid: &[f64]) -> Result<(Table, BoundsSummary), CliError> {
    let ing = ingredients(&prep.ens)?;
    let (omega_star, c_at_omega_star) = optimal_omega(&ing);
    let n = prep.ens.n();
    let so = if dense_ok(n) { Some(SuperOperators::new(&prep.ens)?) } else { None };
    let rho: Option<Vec<f64>> = so.as_ref().map(|so| grid.par_iter().map(|&w| so.lam_max_symmetric(w)).collect());

    let mut table = Table::new(if so.is_some() { &["omega", "b_bound", "c_bound", "rho"] } else { &["omega", "b_bound", "c_bound"] });
    let mut strict = false;
    for (k, &w) in grid.iter().enumerate() {
        let b = b_bound(&ing, w)?;
        let c = c_bound(&ing, w)?;
        if c > b + SANDWICH_TOL {
            return Err(CliError::Verification(format!("{label}: C({w}) = {c} exceeds B({w}) = {b}")));
        }
        strict |= w > 1.0 && w < 2.0 && c < b - SANDWICH_TOL;
        let mut row = vec![num(w), num(b), num(c)];
        if let Some(r) = &rho {
            if r[k] > c + SANDWICH_TOL {
                return Err(CliError::Verification(format!("{label}: rho({w}) = {} exceeds C({w}) = {c}", r[k])));
            }
            row.push(num(r[k]));
        }
        table.row(row);
    }
    let rho_at_one = so.as_ref().map(|so| so.lam_max_symmetric(1.0));
    let rho_at_omega_star = so.as_ref().map(|so| so.lam_max_symmetric(omega_star));
    table
        .meta("system", label)
        .meta("method", prep.sys.method())
        .meta("mu1", num(ing.mu1))
        .meta("mu2", num(ing.mu2))
        .meta("xi", num(ing.xi))
        .meta("omega_star", num(omega_star))
        .meta("c_bound_at_omega_star", num(c_at_omega_star));
    if let (Some(r1), Some(rs)) = (rho_at_one, rho_at_omega_star) {
        table.meta("rho_at_1", num(r1)).meta("rho_at_omega_star", num(rs));
    } else {
        table.meta("rho", format!("omitted, n^2 = {} exceeds {DEFAULT_DIM_CAP}", n * n));
    }
    let summary = BoundsSummary {
        label: label.into(),
        mu1: ing.mu1,
        mu2: ing.mu2,
        xi: ing.xi,
        omega_star,
        c_at_omega_star,
        rho_at_one,
        rho_at_omega_star,
        c_strictly_below_b: strict,
        rows: grid.len(),
    };
    Ok((table, summary))
}

fn base_meta(table: &mut Table, command: &str, spec: &ExperimentSpec) {
    table.meta("command", command).meta("seed", spec.seed);
    if let Some(b) = spec.blocks {
        table.meta("blocks", b);
    }
}

fn print_summary(w: &mut dyn Write, s: &BoundsSummary) -> Result<(), CliError> {
    writeln!(w, "system: {}", s.label)?;
    writeln!(w, "mu1 = {}, mu2 = {}, xi = {}", num(s.mu1), num(s.mu2), num(s.xi))?;
    writeln!(w, "omega_star = {}, C(omega_star) = {}", num(s.omega_star), num(s.c_at_omega_star))?;
    if let (Some(r1), Some(rs)) = (s.rho_at_one, s.rho_at_omega_star) {
        writeln!(w, "rho(1) = {}, rho(omega_star) = {}", num(r1), num(rs))?;
    }
    Ok(())
}

pub fn cmd_bounds(spec: &ExperimentSpec, stdout: &mut dyn Write) -> Result<BoundsSummary, CliError> {
    let prep = spec.prepare()?;
    let (mut table, summary) = curve_table(&spec.describe_source(), &prep, &spec.grid.points())?;
    base_meta(&mut table, "bounds", spec);
    table.meta("grid", spec.grid);
    match &spec.out {
        Some(dir) => {
            table.save(dir, "bounds.csv")?;
            print_summary(stdout, &summary)?;
        }
        None => table.write_to(stdout)?,
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialsSummary {
    pub omega: f64,
    pub tag: String,
    pub initial_mean: f64,
    pub final_mean: f64,
    pub b_bound: f64,
    pub c_bound: f64,
    /// Fitted per-iteration rate of the mean over the last 90% of the run.
    pub empirical_rate: Option<f64>,
}

/// Mean trajectory against `e0 B^k` and `e0 C^k`.
fn summary_table(records: &[TrialRecord], b: f64, c: f64) -> Table {
    let mean = mean_trajectory(records);
    let e0 = mean.first().copied().unwrap_or(0.0);
    let mut table = Table::new(&["iteration", "mean_sq_error", "b_bound", "c_bound"]);
    for (it, m) in records[0].iterations().zip(mean.iter()) {
        table.row(vec![it.to_string(), num(*m), num(e0 * b.powi(it as i32)), num(e0 * c.powi(it as i32))]);
    }
    table
}

fn save_trajectories(dir: &Path, name: &str, meta: &Table, records: &[TrialRecord]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    meta.write_meta(&mut w)?;
    write_trajectories(&mut w, records)?;
    w.flush()?;
    Ok(())
}

/// Trial counts shared by a campaign.
#[derive(Debug, Clone, Copy)]
struct Campaign {
    trials: usize,
    iters: usize,
    seed: u64,
    record_every: usize,
}

fn run_campaign(
    runner: &TrialRunner,
    ing: &Ingredients,
    omega: f64,
    plan: Campaign,
) -> Result<(Vec<TrialRecord>, TrialsSummary), CliError> {
    let cfg = SolveConfig::new(omega, plan.iters, plan.seed)?.record_every(plan.record_every);
    let records = runner.run_trials(&cfg, plan.trials)?;
    let mean = mean_trajectory(&records);
    let window = (plan.iters / 10, plan.iters);
    let empirical_rate = estimate_rate(&records, window).ok().map(|e| e.rate());
    let summary = TrialsSummary {
        omega,
        tag: String::new(),
        initial_mean: mean[0],
        final_mean: *mean.last().expect("initial error recorded"),
        b_bound: b_bound(ing, omega)?,
        c_bound: c_bound(ing, omega)?,
        empirical_rate,
    };
    Ok((records, summary))
}

pub fn cmd_trials(
    spec: &ExperimentSpec,
    omegas: &[OmegaChoice],
    record_every: usize,
    stdout: &mut dyn Write,
) -> Result<Vec<TrialsSummary>, CliError> {
    if record_every == 0 {
        return Err(CliError::Input("--record-every must be at least 1".into()));
    }
    let prep = spec.prepare()?;
    let ing = ingredients(&prep.ens)?;
    let runner = TrialRunner::new(&prep.sys, &prep.ens)?;
    let mut out = Vec::new();
    for choice in omegas {
        let omega = resolve_omega(*choice, &ing);
        let plan = Campaign { trials: spec.trials, iters: spec.iters, seed: spec.seed, record_every };
        let (records, mut summary) = run_campaign(&runner, &ing, omega, plan)?;
        summary.tag = choice.tag();
        let mut table = summary_table(&records, summary.b_bound, summary.c_bound);
        base_meta(&mut table, "trials", spec);
        table
            .meta("system", spec.describe_source())
            .meta("method", prep.sys.method())
            .meta("omega", num(omega))
            .meta("trials", spec.trials)
            .meta("iters", spec.iters)
            .meta("record_every", record_every);
        match &spec.out {
            Some(dir) => {
                table.save(dir, &format!("summary_w{}.csv", summary.tag))?;
                save_trajectories(dir, &format!("trajectories_w{}.csv", summary.tag), &table, &records)?;
                writeln!(
                    stdout,
                    "omega = {}: mean sq error {} -> {} after {} iterations; B = {}, C = {}{}",
                    num(omega),
                    num(summary.initial_mean),
                    num(summary.final_mean),
                    spec.iters,
                    num(summary.b_bound),
                    num(summary.c_bound),
                    summary.empirical_rate.map(|r| format!(", empirical rate {}", num(r))).unwrap_or_default()
                )?;
            }
            None => table.write_to(&mut *stdout)?,
        }
        out.push(summary);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Warn,
    Info,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Warn => "warn",
            Status::Info => "info",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub irreducible: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.status == Status::Fail).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &'static str, value: f64, threshold: f64, ok: bool) -> Check {
    Check { name, value, threshold, status: if ok { Status::Pass } else { Status::Fail } }
}

/// A failing check that only warns for reducible ensembles.
fn soft_check(name: &'static str, value: f64, threshold: f64, ok: bool, irreducible: bool) -> Check {
    let status = match (ok, irreducible) {
        (true, _) => Status::Pass,
        (false, true) => Status::Fail,
        (false, false) => Status::Warn,
    };
    Check { name, value, threshold, status }
}

pub fn verify_prepared(prep: &Prepared, grid: &[f64]) -> Result<VerifyReport, CliError> {
    let n = prep.ens.n();
    if !dense_ok(n) {
        return Err(CliError::Input(format!(
            "n = {n} needs a {0}x{0} superoperator, above the cap of {DEFAULT_DIM_CAP}; reduce n to at most 64",
            n * n
        )));
    }
    let ing = ingredients(&prep.ens)?;
    let so = SuperOperators::new(&prep.ens)?;
    let irr = irreducible(&prep.ens, default_irreducibility_tol(n));
    let mut checks = Vec::new();

    let bracket = (ing.mu1 * ing.mu1 - ing.xi).max(ing.xi - ing.mu1);
    checks.push(check("xi_bracket", bracket, 1e-12, bracket <= 1e-12));
    if prep.ens.items().iter().all(|it| it.rank() == 1) {
        let d = (xi_generic(&prep.ens, &ing.u1) - xi_closed_form(&prep.ns, &ing.u1, ing.mu1)).abs();
        checks.push(check("xi_closed_form", d, 1e-10, d <= 1e-10));
    }

    let loewner = so.check_loewner();
    checks.push(check("loewner_psd", loewner.lambda_min, -1e-10, loewner.psd(1e-10)));
    checks.push(soft_check("loewner_alignment", loewner.alignment, 1.0 - 1e-6, loewner.aligned(1e-6), irr));

    let der = so.derivative_checks(ing.xi);
    checks.push(check("derivative_at_0", der.deviation_at_0(), 1e-4, der.deviation_at_0() <= 1e-4));
    checks.push(check("derivative_at_2", der.deviation_at_2(), 1e-4, der.deviation_at_2() <= 1e-4));

    let eclipse = so.check_eclipse(&ing, grid);
    let worst = eclipse.points.iter().map(|p| p.surrogate_gap - p.exact_gap).fold(f64::NEG_INFINITY, f64::max);
    checks.push(check("eclipse", worst, SANDWICH_TOL, eclipse.all_pass(SANDWICH_TOL)));
    checks.push(Check { name: "eclipse_max_difference", value: eclipse.max_abs_difference(), threshold: 0.0, status: Status::Info });

    let identity = grid.par_iter().map(|&w| so.identity_deviation(w)).reduce(|| 0.0, f64::max);
    checks.push(check("lam_max_identity", identity, 1e-10, identity <= 1e-10));

    let ts: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let dom = so.check_overrelax_dominance(&ts);
    let margin = dom.points.iter().map(|&(_, under, over)| under - over).fold(f64::INFINITY, f64::min);
    checks.push(check("overrelax_dominance", margin, -1e-12, dom.all_pass(1e-12)));

    let (w_star, c_star) = optimal_omega(&ing);
    let c_one = c_bound(&ing, 1.0)?;
    checks.push(check("omega_star", w_star, 1.0, (1.0..2.0).contains(&w_star) && c_star <= c_one));

    let mut sandwich = f64::NEG_INFINITY;
    for &w in grid {
        let r = so.lam_max_symmetric(w);
        sandwich = sandwich.max(r - c_bound(&ing, w)?).max(c_bound(&ing, w)? - b_bound(&ing, w)?);
    }
    checks.push(check("bound_sandwich", sandwich, SANDWICH_TOL, sandwich <= SANDWICH_TOL));

    checks.push(Check {
        name: "irreducible",
        value: if irr { 1.0 } else { 0.0 },
        threshold: 1.0,
        status: if irr { Status::Pass } else { Status::Warn },
    });
    let top = so.rho(1.0);
    checks.push(soft_check("rho_eigvec_psd", top.psd_defect, -1e-8, top.psd_defect >= -1e-8, irr));
    checks.push(soft_check("rho_simple", top.lam_max - top.second, 0.0, top.simple, irr));
    Ok(VerifyReport { irreducible: irr, checks })
}

pub fn cmd_verify(spec: &ExperimentSpec, stdout: &mut dyn Write) -> Result<VerifyReport, CliError> {
    let prep = spec.prepare()?;
    let report = verify_prepared(&prep, &spec.grid.points())?;
    writeln!(stdout, "system: {}", spec.describe_source())?;
    for c in &report.checks {
        writeln!(stdout, "{:<5} {:<24} value={} threshold={}", c.status.as_str().to_uppercase(), c.name, num(c.value), num(c.threshold))?;
    }
    if !report.irreducible {
        writeln!(stdout, "note: the ensemble is reducible, so top-eigenvector uniqueness checks only warn")?;
    }
    if let Some(dir) = &spec.out {
        let mut table = Table::new(&["check", "value", "threshold", "status"]);
        base_meta(&mut table, "verify", spec);
        table.meta("system", spec.describe_source()).meta("grid", spec.grid);
        for c in &report.checks {
            table.row(vec![c.name.into(), num(c.value), num(c.threshold), c.status.as_str().into()]);
        }
        table.save(dir, "verify.csv")?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    Fig2,
    #[value(name = "fig5-left")]
    Fig5Left,
    #[value(name = "fig5-right")]
    Fig5Right,
    #[value(name = "fig6-hilbert")]
    Fig6Hilbert,
    #[value(name = "fig6-parter")]
    Fig6Parter,
}

impl Figure {
    pub fn id(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig5Left => "fig5-left",
            Figure::Fig5Right => "fig5-right",
            Figure::Fig6Hilbert => "fig6-hilbert",
            Figure::Fig6Parter => "fig6-parter",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproduceSummary {
    pub figure: Figure,
    pub curves: Vec<BoundsSummary>,
    /// Fig. 2 only: the `w = 1` and `w = w*` campaigns.
    pub campaigns: Vec<TrialsSummary>,
    pub files: Vec<PathBuf>,
}

fn prepared(sys: LinearSystem) -> Result<Prepared, CliError> {
    let ns = randproj::normalize(&sys)?;
    let ens = randproj::ensemble_from_system(&ns)?;
    Ok(Prepared { sys, ns, ens })
}

fn figure_curve(
    figure: Figure,
    label: String,
    file: String,
    sys: LinearSystem,
    out: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<BoundsSummary, CliError> {
    let prep = prepared(sys)?;
    let grid = GridSpec::default();
    let (mut table, summary) = curve_table(&label, &prep, &omega_grid(grid.start, grid.stop, grid.count))?;
    table.meta("command", "reproduce").meta("figure", figure.id()).meta("seed", FIGURE_SEED).meta("grid", grid);
    table.save(out, &file)?;
    files.push(out.join(file));
    Ok(summary)
}

/// Figure 2: pinned toy problem, curves plus 150 x 1000 trial campaigns at
/// `w = 1` and `w = w*`.
fn figure2(out: &Path, files: &mut Vec<PathBuf>) -> Result<(Vec<BoundsSummary>, Vec<TrialsSummary>), CliError> {
    let label = format!("toy spd n=5 kappa={TOY_KAPPA} seed={TOY_SEED}");
    let curve = figure_curve(Figure::Fig2, label.clone(), "fig2_curves.csv".into(), make_toy()?, out, files)?;
    let prep = prepared(make_toy()?)?;
    let ing = ingredients(&prep.ens)?;
    let runner = TrialRunner::new(&prep.sys, &prep.ens)?;
    let plan = Campaign { trials: 150, iters: 1000, seed: FIGURE_SEED, record_every: 1 };

    let mut campaigns = Vec::new();
    let mut means = Vec::new();
    for (tag, omega) in [("1", 1.0), ("opt", curve.omega_star)] {
        let (records, mut summary) = run_campaign(&runner, &ing, omega, plan)?;
        summary.tag = tag.into();
        let mut meta = Table::new(&[]);
        meta.meta("command", "reproduce")
            .meta("figure", "fig2")
            .meta("system", &label)
            .meta("omega", num(omega))
            .meta("trials", plan.trials)
            .meta("iters", plan.iters)
            .meta("seed", FIGURE_SEED);
        let name = format!("fig2_trajectories_w{tag}.csv");
        save_trajectories(out, &name, &meta, &records)?;
        files.push(out.join(name));
        means.push(mean_trajectory(&records));
        campaigns.push(summary);
    }

    let e0 = means[0][0];
    let (b1, c1) = (campaigns[0].b_bound, campaigns[0].c_bound);
    let (bs, cs) = (campaigns[1].b_bound, campaigns[1].c_bound);
    let mut table =
        Table::new(&["iteration", "mean_w1", "mean_wopt", "b_bound_w1", "c_bound_w1", "b_bound_wopt", "c_bound_wopt"]);
    table
        .meta("command", "reproduce")
        .meta("figure", "fig2")
        .meta("system", &label)
        .meta("omega_star", num(curve.omega_star))
        .meta("trials", plan.trials)
        .meta("iters", plan.iters)
        .meta("seed", FIGURE_SEED);
    for k in 0..means[0].len() {
        let p = k as i32;
        table.row(vec![
            k.to_string(),
            num(means[0][k]),
            num(means[1][k]),
            num(e0 * b1.powi(p)),
            num(e0 * c1.powi(p)),
            num(e0 * bs.powi(p)),
            num(e0 * cs.powi(p)),
        ]);
    }
    table.save(out, "fig2_summary.csv")?;
    files.push(out.join("fig2_summary.csv"));
    Ok((vec![curve], campaigns))
}

pub fn cmd_reproduce(figure: Figure, out: &Path, stdout: &mut dyn Write) -> Result<ReproduceSummary, CliError> {
    let mut files = Vec::new();
    let mut campaigns = Vec::new();
    let curves = match figure {
        Figure::Fig2 => {
            let (curves, c) = figure2(out, &mut files)?;
            campaigns = c;
            curves
        }
        Figure::Fig5Left | Figure::Fig5Right => {
            let (m, kappa, file) = match figure {
                Figure::Fig5Left => (50, 61705.3, "fig5_left.csv"),
                _ => (75, 110.2, "fig5_right.csv"),
            };
            let sys = make_random(m, 50, kappa, FIGURE_SEED)?;
            let label = format!("random m={m} n=50 kappa={kappa} seed={FIGURE_SEED}");
            vec![figure_curve(figure, label, file.into(), sys, out, &mut files)?]
        }
        Figure::Fig6Hilbert => [2, 3, 4]
            .iter()
            .map(|&n| {
                let sys = make_hilbert(n, FIGURE_SEED)?;
                figure_curve(figure, format!("hilbert n={n}"), format!("fig6_hilbert_n{n}.csv"), sys, out, &mut files)
            })
            .collect::<Result<_, _>>()?,
        Figure::Fig6Parter => [5, 20, 50]
            .iter()
            .map(|&n| {
                let sys = make_parter(n, FIGURE_SEED)?;
                figure_curve(figure, format!("parter n={n}"), format!("fig6_parter_n{n}.csv"), sys, out, &mut files)
            })
            .collect::<Result<_, _>>()?,
    };
    for c in &curves {
        print_summary(stdout, c)?;
    }
    for c in &campaigns {
        writeln!(
            stdout,
            "omega = {}: mean sq error at iteration 1000 = {}, empirical rate {}, C = {}, B = {}",
            num(c.omega),
            num(c.final_mean),
            c.empirical_rate.map(num).unwrap_or_else(|| "n/a".into()),
            num(c.c_bound),
            num(c.b_bound)
        )?;
    }
    for f in &files {
        writeln!(stdout, "wrote {}", f.display())?;
    }
    Ok(ReproduceSummary { figure, curves, campaigns, files })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSummary {
    pub omega: f64,
    pub x: Vec<f64>,
    pub final_sq_error: f64,
    pub relative_residual: f64,
}

pub fn cmd_solve(
    spec: &ExperimentSpec,
    omega: OmegaChoice,
    mode: SweepMode,
    record_every: usize,
    stdout: &mut dyn Write,
) -> Result<SolveSummary, CliError> {
    if record_every == 0 {
        return Err(CliError::Input("--record-every must be at least 1".into()));
    }
    let prep = spec.prepare()?;
    let w = match omega {
        OmegaChoice::Value(w) => w,
        OmegaChoice::Optimal => optimal_omega(&ingredients(&prep.ens)?).0,
    };
    let runner = TrialRunner::new(&prep.sys, &prep.ens)?;
    let cfg = SolveConfig::new(w, spec.iters, spec.seed)?.record_every(record_every).mode(mode);
    let (record, x) = runner.run_with_iterate(&cfg)?;
    let b = prep.sys.b();
    let residual = (prep.sys.a() * &x - b).norm() / b.norm().max(f64::MIN_POSITIVE);
    let summary = SolveSummary {
        omega: w,
        x: x.iter().copied().collect(),
        final_sq_error: *record.sq_errors.last().expect("initial error recorded"),
        relative_residual: residual,
    };

    let mut table = Table::new(&["index", "x"]);
    base_meta(&mut table, "solve", spec);
    table
        .meta("system", spec.describe_source())
        .meta("method", prep.sys.method())
        .meta("omega", num(w))
        .meta("mode", if mode == SweepMode::Randomized { "randomized" } else { "cyclic" })
        .meta("iters", spec.iters)
        .meta("final_sq_error", num(summary.final_sq_error))
        .meta("relative_residual", num(residual));
    for (i, v) in x.iter().enumerate() {
        table.row(vec![i.to_string(), num(*v)]);
    }
    match &spec.out {
        Some(dir) => {
            table.save(dir, "solution.csv")?;
            save_trajectories(dir, "trajectory.csv", &table, std::slice::from_ref(&record))?;
            writeln!(
                stdout,
                "omega = {}: squared error {} after {} iterations, relative residual {}",
                num(w),
                num(summary.final_sq_error),
                spec.iters,
                num(residual)
            )?;
        }
        None => table.write_to(stdout)?,
    }
    Ok(summary)
}
