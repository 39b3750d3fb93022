//! Command execution and report writing.
//!
//! Reports carry no timestamps, so identical config and seed give
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use obstacle_core::mc::{estimate_exit_time, estimate_u, McConfig};
use obstacle_core::operators::weighted_admissibility_report;
use obstacle_core::solvers::{
    lcp_oracle_one_sided, lcp_oracle_two_sided, solve_obstacle, SolveMethod,
};
use obstacle_core::verify::{verify_solution, EnvelopeOptions, VerifyOptions};
use obstacle_core::{
    AssembledOperator, Atom, Check, Grid, MeasureData, ObstacleProblem, ObstacleSolution,
    OperatorSpec, SolverOptions,
};
use serde::Serialize;

use crate::config::{Command, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub command: Command,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Overrides `solver.tol_cont`.
    pub tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// All checks requested by the command passed.
    pub passed: bool,
    pub files: Vec<PathBuf>,
    /// Human-readable summary for stdout.
    pub summary: String,
}

/// Nodewise tolerance of the sweep monotonicity check.
pub const SWEEP_MONOTONE_TOL: f64 = 1e-8;

pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    fs::create_dir_all(&opts.out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", opts.out_dir.display())))?;
    let mut solver = cfg.solver.clone();
    if let Some(tol) = opts.tol {
        solver.tol_cont = tol;
    }
    match opts.command {
        Command::Solve => solve_cmd(cfg, opts, &solver),
        Command::Verify => verify_cmd(cfg, opts, &solver),
        Command::Sweep => sweep_cmd(cfg, opts, &solver),
        Command::McCheck => mc_cmd(cfg, opts, &solver),
        Command::Refine => refine_cmd(cfg, opts),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn num(v: f64) -> String {
    v.to_string()
}

fn method_name(m: SolveMethod) -> &'static str {
    match m {
        SolveMethod::Semilinear => "semilinear",
        SolveMethod::PenaltyContinuation => "penalty_continuation",
        SolveMethod::SequentialTwoSided => "sequential_two_sided",
        SolveMethod::ProjectedGaussSeidel => "projected_gauss_seidel",
    }
}

#[derive(Serialize)]
struct Diagnostics {
    command: &'static str,
    operator: &'static str,
    alpha: f64,
    n: usize,
    h: f64,
    method: &'static str,
    iterations: usize,
    continuation_steps: usize,
    final_penalty: Option<f64>,
    residual_norm: f64,
    residual_scale: f64,
    u_min: f64,
    u_max: f64,
    active_lower: usize,
    active_upper: usize,
    nu_plus_mass: f64,
    nu_minus_mass: f64,
    nu_discrepancy: f64,
    ill_conditioned: bool,
    /// Sup norm of `R(|f(., 0)| + |mu|)`.
    data_potential_sup: f64,
}

fn diagnostics(
    command: Command,
    prob: &ObstacleProblem,
    sol: &ObstacleSolution,
) -> Result<Diagnostics, CliError> {
    let grid = prob.op.grid();
    let abs_mu = MeasureData {
        density: prob.mu.density.abs() + prob.f.g().abs(),
        atoms: prob
            .mu
            .atoms
            .iter()
            .map(|a| Atom::new(a.position, a.weight.abs()))
            .collect(),
    };
    let last = sol.penalty_trace.last();
    Ok(Diagnostics {
        command: command.name(),
        operator: prob.op.spec().name(),
        alpha: prob.op.spec().alpha(),
        n: prob.n(),
        h: grid.h(),
        method: method_name(sol.method),
        iterations: sol.iterations,
        continuation_steps: sol.penalty_trace.len(),
        final_penalty: last.and_then(|s| s.upper_penalty.or(s.lower_penalty)),
        residual_norm: sol.residual_norm,
        residual_scale: sol.residual_scale,
        u_min: sol.u.min(),
        u_max: sol.u.max(),
        active_lower: sol.active_lower.len(),
        active_upper: sol.active_upper.len(),
        nu_plus_mass: sol.nu.plus.total_variation(grid),
        nu_minus_mass: sol.nu.minus.total_variation(grid),
        nu_discrepancy: sol.nu_discrepancy,
        ill_conditioned: sol.ill_conditioned,
        data_potential_sup: prob.op.potential(&abs_mu)?.amax(),
    })
}

fn write_solution_csv(
    path: &Path,
    prob: &ObstacleProblem,
    sol: &ObstacleSolution,
) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["x", "u", "h1", "h2", "nu"])?;
    let nu = sol.nu_density();
    for (i, &x) in prob.op.grid().nodes().iter().enumerate() {
        let h1 = prob.lower.as_ref().map_or(f64::NEG_INFINITY, |v| v[i]);
        let h2 = prob.upper.as_ref().map_or(f64::INFINITY, |v| v[i]);
        w.write_record([num(x), num(sol.u[i]), num(h1), num(h2), num(nu[i])])?;
    }
    w.flush()?;
    Ok(())
}

fn solve_cmd(
    cfg: &RunConfig,
    opts: &RunOptions,
    solver: &SolverOptions,
) -> Result<RunOutcome, CliError> {
    let prob = cfg.problem()?;
    let sol = solve_obstacle(&prob, solver)?;
    let csv_path = opts.out_dir.join("solution.csv");
    let json_path = opts.out_dir.join("diagnostics.json");
    write_solution_csv(&csv_path, &prob, &sol)?;
    let diag = diagnostics(Command::Solve, &prob, &sol)?;
    write_json(&json_path, &diag)?;
    let summary = format!(
        "solve: {} n={} method={} |u|_inf={:.6e} contacts={}/{} residual={:.3e}\n",
        diag.operator,
        diag.n,
        diag.method,
        sol.u.amax(),
        diag.active_lower,
        diag.active_upper,
        diag.residual_norm
    );
    Ok(RunOutcome {
        passed: true,
        files: vec![csv_path, json_path],
        summary,
    })
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    command: &'static str,
    operator: &'static str,
    n: usize,
    method: &'static str,
    seed: u64,
    all_passed: bool,
    n_checks: usize,
    n_failed: usize,
    checks: &'a [Check],
}

fn verify_cmd(
    cfg: &RunConfig,
    opts: &RunOptions,
    solver: &SolverOptions,
) -> Result<RunOutcome, CliError> {
    let prob = cfg.problem()?;
    let sol = solve_obstacle(&prob, solver)?;
    let v = &cfg.verify;
    let vopts = VerifyOptions {
        complementarity_rel: v.complementarity_rel,
        norm_tol: v.norm_tol,
        energy_tol: v.energy_tol,
        lewy_stampacchia_tol: v.lewy_stampacchia_tol,
        envelope: EnvelopeOptions {
            samples: v.envelope_samples,
            seed: opts.seed,
            tol: v.envelope_tol,
            identity_tol: v.identity_tol,
        },
        ..VerifyOptions::default()
    };
    let mut report = verify_solution(&sol, &prob, &vopts, solver)?;
    if v.oracle && (prob.lower.is_some() || prob.upper.is_some()) {
        let oracle = if prob.upper.is_some() {
            lcp_oracle_two_sided(&prob, solver)?
        } else {
            lcp_oracle_one_sided(&prob, solver)?
        };
        report.push(Check::new(
            "oracle_agreement",
            (&sol.u - &oracle.u).amax(),
            0.0,
            v.oracle_tol,
        ));
    }
    let failed = report.failures().count();
    let out = VerifyOutput {
        command: "verify",
        operator: prob.op.spec().name(),
        n: prob.n(),
        method: method_name(sol.method),
        seed: opts.seed,
        all_passed: report.all_passed(),
        n_checks: report.checks.len(),
        n_failed: failed,
        checks: &report.checks,
    };
    let path = opts.out_dir.join("verification.json");
    write_json(&path, &out)?;
    let mut summary = String::new();
    for c in &report.checks {
        let _ = writeln!(
            summary,
            "{} {}: lhs={:.6e} rhs={:.6e} tol={:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.lhs,
            c.rhs,
            c.tolerance
        );
    }
    let _ = writeln!(
        summary,
        "verify: {}/{} checks passed",
        report.checks.len() - failed,
        report.checks.len()
    );
    Ok(RunOutcome {
        passed: out.all_passed,
        files: vec![path],
        summary,
    })
}

fn sweep_cmd(
    cfg: &RunConfig,
    opts: &RunOptions,
    solver: &SolverOptions,
) -> Result<RunOutcome, CliError> {
    let prob = cfg.problem()?;
    if prob.lower.is_none() && prob.upper.is_none() {
        return Err(CliError::Precondition(
            "sweep needs at least one finite barrier".into(),
        ));
    }
    let two_sided = prob.upper.is_some();
    let solver = SolverOptions {
        keep_iterates: true,
        ..solver.clone()
    };
    let sol = solve_obstacle(&prob, &solver)?;
    let path = opts.out_dir.join("sweep.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["n", "sup_error", "min_step", "max_step"])?;
    let mut monotone = true;
    for (j, u) in sol.iterates.iter().enumerate() {
        let pen = if j == 0 {
            0.0
        } else {
            let s = &sol.penalty_trace[j - 1];
            s.upper_penalty.or(s.lower_penalty).unwrap_or(0.0)
        };
        let (min_step, max_step) = if j == 0 {
            (String::new(), String::new())
        } else {
            let d = u - &sol.iterates[j - 1];
            if two_sided {
                monotone &= d.max() <= SWEEP_MONOTONE_TOL;
            } else {
                monotone &= d.min() >= -SWEEP_MONOTONE_TOL;
            }
            (num(d.min()), num(d.max()))
        };
        w.write_record([num(pen), num((u - &sol.u).amax()), min_step, max_step])?;
    }
    w.flush()?;
    let summary = format!(
        "sweep: {} steps, {} {}\n",
        sol.penalty_trace.len(),
        if two_sided {
            "nonincreasing in k:"
        } else {
            "nondecreasing in n:"
        },
        monotone
    );
    Ok(RunOutcome {
        passed: monotone,
        files: vec![path],
        summary,
    })
}

#[derive(Serialize)]
struct McOutput {
    command: &'static str,
    x0: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
    use_exit_correction: bool,
    estimate: f64,
    half_width_95: f64,
    std_dev: f64,
    mean_exit_time: f64,
    u_x0: f64,
    error: f64,
    calibration_constant: f64,
    discretization_bound: f64,
    bound: f64,
    passed: bool,
}

/// `C = max(|est - (b-a)²/8|, half-width) / h` from the unit source at the midpoint.
pub fn calibrate(grid: &Grid, template: &McConfig) -> Result<f64, CliError> {
    let mid = 0.5 * (grid.a() + grid.b());
    let cfg = McConfig {
        x0: mid,
        ..template.clone()
    };
    let est = estimate_exit_time(grid, &cfg)?;
    let exact = 0.125 * (grid.b() - grid.a()).powi(2);
    Ok((est.estimate - exact).abs().max(est.half_width_95) / grid.h())
}

fn mc_cmd(
    cfg: &RunConfig,
    opts: &RunOptions,
    solver: &SolverOptions,
) -> Result<RunOutcome, CliError> {
    let prob = cfg.problem()?;
    let grid = prob.op.grid().clone();
    let m = &cfg.mc;
    let x0 = m.x0.unwrap_or(0.5 * (grid.a() + grid.b()));
    let mc = McConfig {
        x0,
        n_paths: m.n_paths,
        dt: m.dt.unwrap_or(0.25 * grid.h() * grid.h()),
        seed: opts.seed,
        use_exit_correction: m.use_exit_correction,
    };
    mc.validate(&grid)?;
    let sol = solve_obstacle(&prob, solver)?;
    let est = estimate_u(&prob, &sol, &mc)?;
    let c = match m.calibration {
        Some(c) => c,
        None => calibrate(
            &grid,
            &McConfig {
                seed: opts.seed.wrapping_add(1),
                ..mc.clone()
            },
        )?,
    };
    let u_x0 = grid.interpolate_zero_bc(sol.u.as_slice(), x0);
    let error = (est.estimate - u_x0).abs();
    let discretization_bound = 3.0 * c * grid.h();
    let bound = est.half_width_95.max(discretization_bound);
    let out = McOutput {
        command: "mc-check",
        x0,
        n_paths: mc.n_paths,
        dt: mc.dt,
        seed: mc.seed,
        use_exit_correction: mc.use_exit_correction,
        estimate: est.estimate,
        half_width_95: est.half_width_95,
        std_dev: est.std_dev,
        mean_exit_time: est.mean_exit_time,
        u_x0,
        error,
        calibration_constant: c,
        discretization_bound,
        bound,
        passed: error <= bound,
    };
    let path = opts.out_dir.join("mc.json");
    write_json(&path, &out)?;
    let summary = format!(
        "mc-check: estimate={:.6e} u(x0)={:.6e} error={:.3e} bound={:.3e} {}\n",
        out.estimate,
        out.u_x0,
        out.error,
        out.bound,
        if out.passed { "PASS" } else { "FAIL" }
    );
    Ok(RunOutcome {
        passed: out.passed,
        files: vec![path],
        summary,
    })
}

/// One row of the refinement table.
#[derive(Debug, Clone, Serialize)]
pub struct RefineRow {
    pub operator: String,
    pub alpha: f64,
    pub n: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Relative change of `min_ratio` from the previous size.
    pub min_change: Option<f64>,
    pub max_change: Option<f64>,
    pub weighted_norm: f64,
}

pub fn refine_rows(cfg: &RunConfig) -> Result<Vec<RefineRow>, CliError> {
    let mut rows: Vec<RefineRow> = Vec::new();
    for &n in &cfg.refine.sizes {
        let mut sized = cfg.clone();
        sized.grid.n = n;
        let grid = sized.grid()?;
        let spec = sized.operator_spec(&grid)?;
        if matches!(spec, OperatorSpec::KillingPerturbed { .. }) {
            return Err(CliError::Precondition(
                "refine needs an operator without killing".into(),
            ));
        }
        let op = AssembledOperator::assemble(spec, &grid)?;
        let mu = sized.problem()?.mu;
        let rep = weighted_admissibility_report(&op, &mu)?;
        let change = |new: f64, old: f64| ((new - old) / old).abs();
        let prev = rows.last();
        rows.push(RefineRow {
            min_change: prev.map(|p| change(rep.min_ratio, p.min_ratio)),
            max_change: prev.map(|p| change(rep.max_ratio, p.max_ratio)),
            operator: rep.operator,
            alpha: rep.alpha,
            n,
            min_ratio: rep.min_ratio,
            max_ratio: rep.max_ratio,
            weighted_norm: rep.weighted_norm,
        });
    }
    Ok(rows)
}

fn refine_cmd(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let rows = refine_rows(cfg)?;
    let tol = cfg.refine.band_tol;
    let passed = rows
        .iter()
        .all(|r| r.min_change.is_none_or(|c| c < tol) && r.max_change.is_none_or(|c| c < tol));
    let path = opts.out_dir.join("refine.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "operator",
        "alpha",
        "n",
        "min_ratio",
        "max_ratio",
        "min_change",
        "max_change",
        "weighted_norm",
    ])?;
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut summary = format!(
        "{:<22} {:>5} {:>5} {:>12} {:>12} {:>10} {:>10}\n",
        "operator", "alpha", "n", "min_ratio", "max_ratio", "d_min", "d_max"
    );
    for r in &rows {
        w.write_record([
            r.operator.clone(),
            num(r.alpha),
            r.n.to_string(),
            num(r.min_ratio),
            num(r.max_ratio),
            opt(r.min_change),
            opt(r.max_change),
            num(r.weighted_norm),
        ])?;
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |c| format!("{:.2}%", 100.0 * c));
        let _ = writeln!(
            summary,
            "{:<22} {:>5} {:>5} {:>12.6} {:>12.6} {:>10} {:>10}",
            r.operator,
            r.alpha,
            r.n,
            r.min_ratio,
            r.max_ratio,
            pct(r.min_change),
            pct(r.max_change)
        );
    }
    w.flush()?;
    let _ = writeln!(
        summary,
        "refine: band stable within {:.0}%: {passed}",
        100.0 * tol
    );
    Ok(RunOutcome {
        passed,
        files: vec![path],
        summary,
    })
}
