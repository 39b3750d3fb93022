//! Checkers for the structural properties of solved obstacle problems.
//!
//! Every checker returns [`Check`] values carrying both sides of the
//! inequality it tests, so reports stay auditable. A check passes iff
//! `lhs <= rhs + tolerance`; nodewise checks report the worst node.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::MeasureData;
use crate::solvers::{solve_semilinear, ObstacleProblem, ObstacleSolution, SolverOptions};
use crate::NodeVector;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    /// Worst node for nodewise checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: lhs <= rhs + tolerance,
            lhs,
            rhs,
            tolerance,
            node: None,
            detail: String::new(),
        }
    }

    /// Worst node of `left_i <= right_i + tol`. Empty vectors pass trivially.
    pub fn nodewise(
        name: impl Into<String>,
        left: &NodeVector,
        right: &NodeVector,
        tolerance: f64,
    ) -> Self {
        let worst =
            (0..left.len()).max_by(|&i, &j| (left[i] - right[i]).total_cmp(&(left[j] - right[j])));
        match worst {
            Some(i) => Self {
                node: Some(i),
                ..Self::new(name, left[i], right[i], tolerance)
            },
            None => Self::new(name, 0.0, 0.0, tolerance),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    /// Slack `rhs - lhs`.
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = Check>) {
        self.checks.extend(checks);
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn tv(prob: &ObstacleProblem, v: &NodeVector) -> f64 {
    prob.op.grid().norm_l1(v).expect("node vector length")
}

/// Reference scale `(1 + |nu|) (1 + |u|_inf)` for the complementarity pairings.
pub fn complementarity_scale(sol: &ObstacleSolution, prob: &ObstacleProblem) -> f64 {
    (1.0 + sol.nu.total_variation(prob.op.grid())) * (1.0 + sol.u.amax())
}

/// `sum m (u - h1) nu+` and `sum m (h2 - u) nu-` both at most `eps` in absolute value.
pub fn check_complementarity(sol: &ObstacleSolution, prob: &ObstacleProblem, eps: f64) -> Check {
    let grid = prob.op.grid();
    let lower = prob.lower.as_ref().map_or(0.0, |h1| {
        grid.pairing(&(&sol.u - h1), &sol.nu.plus.density)
            .expect("lengths")
    });
    let upper = prob.upper.as_ref().map_or(0.0, |h2| {
        grid.pairing(&(h2 - &sol.u), &sol.nu.minus.density)
            .expect("lengths")
    });
    Check::new("complementarity", lower.abs().max(upper.abs()), 0.0, eps)
        .with_detail(format!("lower pairing {lower:e}, upper pairing {upper:e}"))
}

fn barrier_ordered(
    first: Option<&NodeVector>,
    second: Option<&NodeVector>,
    lower: bool,
    tol: f64,
) -> bool {
    match (first, second) {
        (Some(a), Some(b)) => a.iter().zip(b.iter()).all(|(x, y)| *x <= y + tol),
        (None, None) => true,
        // -inf <= anything, anything <= +inf.
        (None, Some(_)) => lower,
        (Some(_), None) => !lower,
    }
}

fn barriers_equal(a: Option<&NodeVector>, b: Option<&NodeVector>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x == y,
        (None, None) => true,
        _ => false,
    }
}

/// Compares two solutions without checking the data ordering: `u1 <= u2`
/// nodewise and, when `equal_barriers`, `nu1 >= nu2` as lumped densities.
pub fn compare_solutions(
    sol1: &ObstacleSolution,
    sol2: &ObstacleSolution,
    equal_barriers: bool,
    tol: f64,
) -> Check {
    let u_check = Check::nodewise("comparison", &sol1.u, &sol2.u, tol);
    if !equal_barriers {
        return u_check.with_detail("u1 <= u2");
    }
    let nu_check = Check::nodewise("comparison", &sol2.nu_density(), &sol1.nu_density(), tol);
    let detail = format!(
        "u1 <= u2 worst gap {:e}; nu1 >= nu2 worst gap {:e}",
        u_check.lhs - u_check.rhs,
        nu_check.lhs - nu_check.rhs
    );
    let worst = if nu_check.lhs - nu_check.rhs > u_check.lhs - u_check.rhs {
        nu_check
    } else {
        u_check
    };
    Check {
        passed: worst.passed,
        ..worst
    }
    .with_detail(detail)
}

/// Comparison principle for ordered data.
///
/// Requires `lump(mu1) <= lump(mu2)`, ordered barriers, and either
/// `f1(., u2) <= f2(., u2)` or `f1(., u1) <= f2(., u1)`.
pub fn check_comparison(
    sol1: &ObstacleSolution,
    sol2: &ObstacleSolution,
    prob1: &ObstacleProblem,
    prob2: &ObstacleProblem,
    tol: f64,
) -> Result<Check> {
    if prob1.n() != prob2.n() {
        return Err(Error::Precondition(
            "problems live on different grids".into(),
        ));
    }
    let order_tol = 1e-12;
    let (r1, r2) = (prob1.rho(), prob2.rho());
    if r1
        .iter()
        .zip(r2.iter())
        .any(|(a, b)| *a > b + order_tol * (1.0 + b.abs()))
    {
        return Err(Error::Precondition(
            "data not ordered: need mu1 <= mu2 nodewise".into(),
        ));
    }
    if !barrier_ordered(prob1.lower.as_ref(), prob2.lower.as_ref(), true, order_tol)
        || !barrier_ordered(prob1.upper.as_ref(), prob2.upper.as_ref(), false, order_tol)
    {
        return Err(Error::Precondition(
            "barriers not ordered: need h1 <= h1' and h2 <= h2'".into(),
        ));
    }
    let cross = |u: &NodeVector| {
        let a = prob1.f.eval(u).expect("length");
        let b = prob2.f.eval(u).expect("length");
        a.iter()
            .zip(b.iter())
            .all(|(x, y)| *x <= y + order_tol * (1.0 + y.abs()))
    };
    if !cross(&sol2.u) && !cross(&sol1.u) {
        return Err(Error::Precondition(
            "nonlinearities not ordered: need f1(u2) <= f2(u2) or f1(u1) <= f2(u1)".into(),
        ));
    }
    let equal = barriers_equal(prob1.lower.as_ref(), prob2.lower.as_ref())
        && barriers_equal(prob1.upper.as_ref(), prob2.upper.as_ref());
    Ok(compare_solutions(sol1, sol2, equal, tol))
}

struct NormTerms {
    mu: f64,
    f0: f64,
    lambda_plus: f64,
    lambda_minus: f64,
    fv_plus: f64,
    fv_minus: f64,
}

fn norm_terms(prob: &ObstacleProblem, v: &NodeVector) -> NormTerms {
    let grid = prob.op.grid();
    let lambda = prob.op.apply(v);
    let fv = prob.f.eval(v).expect("length");
    NormTerms {
        mu: prob.mu.total_variation(grid),
        f0: tv(prob, prob.f.g()),
        lambda_plus: tv(prob, &lambda.map(|x| x.max(0.0))),
        lambda_minus: tv(prob, &lambda.map(|x| (-x).max(0.0))),
        fv_plus: tv(prob, &fv.map(|x| x.max(0.0))),
        fv_minus: tv(prob, &fv.map(|x| (-x).max(0.0))),
    }
}

/// `|nu| <= 2 (|mu| + |f0| + |lambda+| + |f_v^-|)` with `lambda = A v`.
pub fn check_norm_bound_one_sided(
    sol: &ObstacleSolution,
    prob: &ObstacleProblem,
    tol: f64,
) -> Result<Check> {
    let v = prob.separating_v.as_ref().ok_or_else(|| {
        Error::Precondition("norm bound needs a separating function v (H5)".into())
    })?;
    if let Some(h1) = &prob.lower {
        if v.iter()
            .zip(h1.iter())
            .any(|(a, b)| *a < b - 1e-12 * (1.0 + b.abs()))
        {
            return Err(Error::Precondition(
                "separating v must satisfy v >= h1 (H5)".into(),
            ));
        }
    }
    let t = norm_terms(prob, v);
    let lhs = sol.nu.total_variation(prob.op.grid());
    let rhs = 2.0 * (t.mu + t.f0 + t.lambda_plus + t.fv_minus);
    Ok(Check::new("norm_bound_one_sided", lhs, rhs, tol))
}

/// `|nu+| <= 3 (|mu| + |f0| + |lambda+| + |f_v^-|)` and
/// `|nu-| <= 3 (|mu| + |f0| + |lambda-| + |f_v^+|)`.
pub fn check_norm_bound_two_sided(
    sol: &ObstacleSolution,
    prob: &ObstacleProblem,
    tol: f64,
) -> Result<Vec<Check>> {
    let v = prob.separating_v.as_ref().ok_or_else(|| {
        Error::Precondition("norm bounds need a separating function v (H6)".into())
    })?;
    let below = prob.lower.as_ref().is_some_and(|h1| {
        v.iter()
            .zip(h1.iter())
            .any(|(a, b)| *a < b - 1e-12 * (1.0 + b.abs()))
    });
    let above = prob.upper.as_ref().is_some_and(|h2| {
        v.iter()
            .zip(h2.iter())
            .any(|(a, b)| *a > b + 1e-12 * (1.0 + b.abs()))
    });
    if below || above {
        return Err(Error::Precondition(
            "separating v must satisfy h1 <= v <= h2 (H6)".into(),
        ));
    }
    let t = norm_terms(prob, v);
    let grid = prob.op.grid();
    Ok(vec![
        Check::new(
            "norm_bound_two_sided_plus",
            sol.nu.plus.total_variation(grid),
            3.0 * (t.mu + t.f0 + t.lambda_plus + t.fv_minus),
            tol,
        ),
        Check::new(
            "norm_bound_two_sided_minus",
            sol.nu.minus.total_variation(grid),
            3.0 * (t.mu + t.f0 + t.lambda_minus + t.fv_plus),
            tol,
        ),
    ])
}

/// `T_k(y) = min(max(-k, y), k)`.
pub fn truncate(u: &NodeVector, k: f64) -> NodeVector {
    u.map(|y| y.max(-k).min(k))
}

/// `sum m (A T_k u)(T_k u) <= 2k (|mu| + |nu| + |f0|)`.
pub fn check_energy_truncation(
    sol: &ObstacleSolution,
    prob: &ObstacleProblem,
    k: f64,
    tol: f64,
) -> Check {
    let grid = prob.op.grid();
    let t = truncate(&sol.u, k);
    let energy = prob.op.energy(&t);
    let rhs = 2.0
        * k
        * (prob.mu.total_variation(grid) + sol.nu.total_variation(grid) + tv(prob, prob.f.g()));
    Check::new(format!("energy_truncation_k={k:.6e}"), energy, rhs, tol)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeOptions {
    pub samples: usize,
    pub seed: u64,
    /// Tolerance for `u <= v` and for `v >= h1`.
    pub tol: f64,
    /// Tolerance for reproducing `u` with `lambda = nu+`.
    pub identity_tol: f64,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self {
            samples: 200,
            seed: 0,
            tol: 1e-6,
            identity_tol: 1e-8,
        }
    }
}

/// Random nonnegative measure: one or two uniform densities on random
/// subintervals plus 0-3 atoms, levels and weights in `[0, cap]`.
pub fn sample_nonnegative_measure(
    prob: &ObstacleProblem,
    cap: f64,
    rng: &mut impl Rng,
) -> MeasureData {
    let grid = prob.op.grid();
    let (a, b) = (grid.a(), grid.b());
    let mut lambda = MeasureData::zero(grid.len());
    for _ in 0..rng.random_range(1..=2usize) {
        let (s, t) = (rng.random_range(a..b), rng.random_range(a..b));
        let (lo, hi) = (s.min(t), s.max(t));
        let level = rng.random_range(0.0..=cap);
        for (i, &x) in grid.nodes().iter().enumerate() {
            if x >= lo && x <= hi {
                lambda.density[i] += level;
            }
        }
    }
    for _ in 0..rng.random_range(0..=3usize) {
        let mut p = rng.random_range(a..b);
        if p <= a {
            p = 0.5 * (a + b);
        }
        lambda = lambda.with_atom(p, rng.random_range(0.0..=cap));
    }
    lambda
}

/// Minimal-supersolution property: every `v = solve_semilinear(mu - nu- + lambda)`
/// with `lambda >= 0` and `v >= h1` lies above `u`; `lambda = nu+` gives back `u`.
pub fn check_envelope(
    sol: &ObstacleSolution,
    prob: &ObstacleProblem,
    env: &EnvelopeOptions,
    solver: &SolverOptions,
) -> Result<Vec<Check>> {
    let grid = prob.op.grid();
    let n = prob.n();
    let base = prob.mu.add(&sol.nu.minus.negate());
    let own = solve_semilinear(&prob.op, &prob.f, &base.add(&sol.nu.plus), solver)?;
    let identity = Check::new(
        "envelope_membership",
        (&own - &sol.u).amax(),
        0.0,
        env.identity_tol,
    );

    let cap = 2.0 * prob.mu.total_variation(grid) + 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(env.seed);
    let mut admissible = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_node = None;
    for s in 0..env.samples {
        let mut lambda = sample_nonnegative_measure(prob, cap, &mut rng);
        if s % 2 == 1 {
            let factor = rng.random_range(0.5..1.5);
            lambda = lambda.add(&sol.nu.plus.scale(factor));
        }
        let v = solve_semilinear(&prob.op, &prob.f, &base.add(&lambda), solver)?;
        let above = prob
            .lower
            .as_ref()
            .is_none_or(|h1| (0..n).all(|i| v[i] >= h1[i] - env.tol));
        if !above {
            continue;
        }
        admissible += 1;
        for i in 0..n {
            let gap = sol.u[i] - v[i];
            if gap > worst {
                worst = gap;
                worst_node = Some(i);
            }
        }
    }
    let skipped = env.samples - admissible;
    let minimal = if admissible == 0 {
        Check::new("envelope_minimality", 0.0, 0.0, env.tol)
    } else {
        Check {
            node: worst_node,
            ..Check::new("envelope_minimality", worst, 0.0, env.tol)
        }
    }
    .with_detail(format!(
        "{} samples, {admissible} admissible, {skipped} skipped",
        env.samples
    ));
    Ok(vec![identity, minimal])
}

/// `nu+ <= 1_{u = h1} (f(., h1) + mu - A h1)^-` nodewise.
pub fn check_lewy_stampacchia(
    sol: &ObstacleSolution,
    prob: &ObstacleProblem,
    tol: f64,
) -> Result<Check> {
    let h1 = prob
        .lower
        .as_ref()
        .ok_or_else(|| Error::Precondition("Lewy-Stampacchia check needs a finite h1".into()))?;
    let s = prob.f.eval(h1)? + prob.rho() - prob.op.apply(h1);
    let mut bound = NodeVector::zeros(prob.n());
    for &i in &sol.active_lower {
        bound[i] = (-s[i]).max(0.0);
    }
    Ok(Check::nodewise(
        "lewy_stampacchia",
        &sol.nu.plus.density,
        &bound,
        tol,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOptions {
    /// Complementarity tolerance relative to [`complementarity_scale`].
    pub complementarity_rel: f64,
    pub norm_tol: f64,
    pub energy_tol: f64,
    /// Truncation levels as fractions of `|u|_inf`.
    pub energy_fractions: Vec<f64>,
    pub lewy_stampacchia_tol: f64,
    pub envelope: EnvelopeOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            complementarity_rel: 1e-6,
            norm_tol: 1e-8,
            energy_tol: 1e-8,
            energy_fractions: (1..=10).map(|j| 0.1 * j as f64).collect(),
            lewy_stampacchia_tol: 1e-6,
            envelope: EnvelopeOptions::default(),
        }
    }
}

/// Runs every single-instance check that applies to the problem. Without a
/// user-supplied separating function the solution itself is used as `v`.
pub fn verify_solution(
    sol: &ObstacleSolution,
    prob: &ObstacleProblem,
    opts: &VerifyOptions,
    solver: &SolverOptions,
) -> Result<VerificationReport> {
    let mut report = VerificationReport::default();
    report.push(check_complementarity(
        sol,
        prob,
        opts.complementarity_rel * complementarity_scale(sol, prob),
    ));
    let with_v = if prob.separating_v.is_some() {
        prob.clone()
    } else {
        prob.clone().with_separating_v(sol.u.clone())?
    };
    if prob.upper.is_none() {
        report.push(check_norm_bound_one_sided(sol, &with_v, opts.norm_tol)?);
    } else {
        report.extend(check_norm_bound_two_sided(sol, &with_v, opts.norm_tol)?);
    }
    let umax = sol.u.amax();
    for frac in &opts.energy_fractions {
        report.push(check_energy_truncation(
            sol,
            prob,
            frac * umax,
            opts.energy_tol,
        ));
    }
    report.extend(check_envelope(sol, prob, &opts.envelope, solver)?);
    if prob.lower.is_some() {
        report.push(check_lewy_stampacchia(
            sol,
            prob,
            opts.lewy_stampacchia_tol,
        )?);
    }
    Ok(report)
}
