//! Semilinear, penalized and obstacle solvers.
//!
//! The penalized equations
//!
//! ```text
//! A u = f(u) + rho_mu + n (h1 - u)^+ - k (u - h2)^+
//! ```
//!
//! are solved by damped semismooth Newton. Obstacle problems are solved by
//! penalty continuation `n_j = n0 * growth^j` (one barrier) or by the
//! sequential scheme over the upper penalty `k` with an exact lower-obstacle
//! solve at every step (two barriers). Once continuation has converged, the
//! limit is computed exactly on the contact set identified by the last
//! iterate (a primal-dual active-set finish), and the reaction measure is read
//! off the residual. The projected Gauss-Seidel oracle is independent of all
//! of this and serves as ground truth in tests.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, LU};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::measures::{MeasureData, SignedDecomposition};
use crate::nonlinearity::Nonlinearity;
use crate::operators::AssembledOperator;
use crate::NodeVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Newton residual tolerance, relative to the size of the equation terms.
    pub tol_newton: f64,
    pub max_newton: usize,
    pub max_halvings: usize,
    pub max_picard: usize,
    /// First penalty parameter of the continuation.
    pub n0: f64,
    /// Penalty growth factor between continuation steps.
    pub growth: f64,
    /// Largest continuation step index.
    pub j_max: usize,
    /// Continuation stops once the sup-norm increment is below
    /// `tol_cont * (1 + |u|_inf)`.
    pub tol_cont: f64,
    /// Contact tolerance `eps_c = contact_rel * (1 + |h|_inf)`.
    pub contact_rel: f64,
    pub max_active_set: usize,
    /// Natural-residual tolerance of projected Gauss-Seidel, relative to `1 + |u|_inf`.
    pub pgs_tol: f64,
    pub pgs_max_sweeps: usize,
    /// Store every continuation iterate in the solution.
    pub keep_iterates: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_newton: 1e-10,
            max_newton: 100,
            max_halvings: 30,
            max_picard: 500,
            n0: 1.0,
            growth: 2.0,
            j_max: 40,
            tol_cont: 1e-6,
            contact_rel: 1e-6,
            max_active_set: 200,
            pgs_tol: 1e-12,
            pgs_max_sweeps: 2_000_000,
            keep_iterates: false,
        }
    }
}

/// `-Lu = f(x, u) + mu + nu` with `h1 <= u <= h2`. A missing barrier stands
/// for `-inf` (lower) or `+inf` (upper).
#[derive(Debug, Clone)]
pub struct ObstacleProblem {
    pub op: Arc<AssembledOperator>,
    pub f: Nonlinearity,
    pub mu: MeasureData,
    pub lower: Option<NodeVector>,
    pub upper: Option<NodeVector>,
    /// Separating function `v` used by the norm bounds (`lambda = A v`).
    pub separating_v: Option<NodeVector>,
}

impl ObstacleProblem {
    pub fn new(
        op: Arc<AssembledOperator>,
        f: Nonlinearity,
        mu: MeasureData,
        lower: Option<NodeVector>,
        upper: Option<NodeVector>,
    ) -> Result<Self> {
        let p = Self {
            op,
            f,
            mu,
            lower,
            upper,
            separating_v: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_separating_v(mut self, v: NodeVector) -> Result<Self> {
        check_len(self.n(), v.len())?;
        self.separating_v = Some(v);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.op.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        check_len(n, self.f.len())?;
        self.mu.validate(self.op.grid())?;
        if let Some(h1) = &self.lower {
            check_len(n, h1.len())?;
        }
        if let Some(h2) = &self.upper {
            check_len(n, h2.len())?;
        }
        if let (Some(h1), Some(h2)) = (&self.lower, &self.upper) {
            if let Some(i) = (0..n).find(|&i| h1[i] > h2[i]) {
                return Err(Error::Precondition(format!(
                    "barriers cross at node {i}: h1 = {} > h2 = {}, no v with h1 <= v <= h2 (H6)",
                    h1[i], h2[i]
                )));
            }
        }
        for (name, b) in [("h1", &self.lower), ("h2", &self.upper)] {
            if b.as_ref().is_some_and(|v| v.iter().any(|x| x.is_nan())) {
                return Err(Error::Precondition(format!("{name} has NaN entries")));
            }
        }
        Ok(())
    }

    /// Lumped density of `mu`.
    pub fn rho(&self) -> NodeVector {
        self.mu
            .lump(self.op.grid())
            .expect("validated at construction")
    }

    /// `A u - f(u) - rho_mu`, the density of the reaction measure when `u` solves.
    pub fn reaction_density(&self, u: &NodeVector) -> NodeVector {
        self.op.apply(u) - self.f.eval(u).expect("length checked") - self.rho()
    }

    /// Contact tolerance `contact_rel * (1 + |h|_inf)` over the finite barriers.
    pub fn contact_tolerance(&self, contact_rel: f64) -> f64 {
        let hmax = [&self.lower, &self.upper]
            .iter()
            .filter_map(|b| b.as_ref().map(|v| v.amax()))
            .fold(0.0, f64::max);
        contact_rel * (1.0 + hmax)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PenaltyStep {
    /// Lower penalty `n` of the step (one-sided continuation).
    pub lower_penalty: Option<f64>,
    /// Upper penalty `k` of the step (sequential two-sided scheme).
    pub upper_penalty: Option<f64>,
    /// Sup-norm distance to the previous iterate.
    pub increment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Semilinear,
    PenaltyContinuation,
    SequentialTwoSided,
    ProjectedGaussSeidel,
}

#[derive(Debug, Clone)]
pub struct ObstacleSolution {
    pub u: NodeVector,
    /// Reaction measure as node densities (no atoms).
    pub nu: SignedDecomposition,
    pub active_lower: Vec<usize>,
    pub active_upper: Vec<usize>,
    pub penalty_trace: Vec<PenaltyStep>,
    /// `|A u - f(u) - rho_mu - (nu+ - nu-)|_inf`.
    pub residual_norm: f64,
    /// Size of the equation terms the residual is measured against.
    pub residual_scale: f64,
    pub iterations: usize,
    pub method: SolveMethod,
    /// Last continuation iterate before the active-set finish.
    pub penalty_u: Option<NodeVector>,
    /// Signed reaction density recovered from the penalty terms of the last iterate.
    pub penalty_nu: Option<NodeVector>,
    /// `|A^{-1}(nu_penalty - nu)|_inf`, the potential-level discrepancy.
    pub nu_discrepancy: f64,
    /// Discrepancy above `10 * tol_cont * (1 + |u|_inf)`.
    pub ill_conditioned: bool,
    /// Continuation iterates (only with `keep_iterates`).
    pub iterates: Vec<NodeVector>,
}

impl ObstacleSolution {
    /// Signed reaction density `nu+ - nu-`.
    pub fn nu_density(&self) -> NodeVector {
        self.nu.signed_density()
    }
}

// ---------------------------------------------------------------------------
// Nonlinear systems

#[derive(Clone, Copy)]
struct Penalty<'a> {
    barrier: &'a NodeVector,
    weight: f64,
}

struct System<'a> {
    a: &'a DMatrix<f64>,
    f: &'a Nonlinearity,
    rho: &'a NodeVector,
    lower: Option<Penalty<'a>>,
    upper: Option<Penalty<'a>>,
    /// Replaces `f(u)` by a fixed vector (and `f'` by zero) for Picard sweeps.
    frozen: Option<&'a NodeVector>,
}

impl<'a> System<'a> {
    fn new(a: &'a DMatrix<f64>, f: &'a Nonlinearity, rho: &'a NodeVector) -> Self {
        Self {
            a,
            f,
            rho,
            lower: None,
            upper: None,
            frozen: None,
        }
    }

    fn lower(mut self, barrier: &'a NodeVector, weight: f64) -> Self {
        self.lower = Some(Penalty { barrier, weight });
        self
    }

    fn upper(mut self, barrier: &'a NodeVector, weight: f64) -> Self {
        self.upper = Some(Penalty { barrier, weight });
        self
    }

    fn upper_opt(self, p: Option<(&'a NodeVector, f64)>) -> Self {
        match p {
            Some((b, w)) => self.upper(b, w),
            None => self,
        }
    }

    fn f_at(&self, i: usize, y: f64) -> f64 {
        match self.frozen {
            Some(v) => v[i],
            None => self.f.eval_at(i, y),
        }
    }

    fn df_at(&self, i: usize, y: f64) -> f64 {
        match self.frozen {
            Some(_) => 0.0,
            None => self.f.derivative_at(i, y),
        }
    }

    fn penalty_terms(&self, i: usize, y: f64) -> f64 {
        let mut t = 0.0;
        if let Some(p) = self.lower {
            t += p.weight * (p.barrier[i] - y).max(0.0);
        }
        if let Some(p) = self.upper {
            t -= p.weight * (y - p.barrier[i]).max(0.0);
        }
        t
    }

    /// Residual and the size of the terms it balances.
    fn residual(&self, u: &NodeVector) -> (NodeVector, f64) {
        let au = self.a * u;
        let mut scale = 1.0f64;
        let r = NodeVector::from_iterator(
            u.len(),
            (0..u.len()).map(|i| {
                let fi = self.f_at(i, u[i]);
                let pi = self.penalty_terms(i, u[i]);
                scale = scale
                    .max(au[i].abs())
                    .max(fi.abs() + self.rho[i].abs() + pi.abs());
                au[i] - fi - self.rho[i] - pi
            }),
        );
        (r, scale)
    }

    fn jacobian(&self, u: &NodeVector) -> DMatrix<f64> {
        let mut j = self.a.clone();
        for i in 0..u.len() {
            let mut d = -self.df_at(i, u[i]);
            if let Some(p) = self.lower {
                if u[i] < p.barrier[i] {
                    d += p.weight;
                }
            }
            if let Some(p) = self.upper {
                if u[i] > p.barrier[i] {
                    d += p.weight;
                }
            }
            j[(i, i)] += d;
        }
        j
    }
}

fn linear_solve(j: DMatrix<f64>, rhs: &NodeVector) -> Result<NodeVector> {
    if let Some(ch) = Cholesky::new(j.clone()) {
        return Ok(ch.solve(rhs));
    }
    LU::new(j)
        .solve(rhs)
        .ok_or_else(|| Error::Singular("Newton Jacobian".into()))
}

fn masked(mut r: NodeVector, fixed: &[Option<f64>]) -> NodeVector {
    for (i, fx) in fixed.iter().enumerate() {
        if fx.is_some() {
            r[i] = 0.0;
        }
    }
    r
}

struct Newton {
    u: NodeVector,
    iterations: usize,
}

fn newton_core(
    sys: &System<'_>,
    u0: &NodeVector,
    fixed: &[Option<f64>],
    opts: &SolverOptions,
) -> std::result::Result<Newton, (NodeVector, usize, f64)> {
    let n = u0.len();
    let mut u = u0.clone();
    for (i, fx) in fixed.iter().enumerate() {
        if let Some(v) = fx {
            u[i] = *v;
        }
    }
    let (r0, mut scale) = sys.residual(&u);
    let mut r = masked(r0, fixed);
    for it in 0..opts.max_newton {
        if r.amax() <= opts.tol_newton * scale {
            return Ok(Newton { u, iterations: it });
        }
        let mut jac = sys.jacobian(&u);
        for (i, fx) in fixed.iter().enumerate() {
            if fx.is_some() {
                for k in 0..n {
                    jac[(i, k)] = 0.0;
                    jac[(k, i)] = 0.0;
                }
                jac[(i, i)] = 1.0;
            }
        }
        let step = match linear_solve(jac, &-&r) {
            Ok(s) => s,
            Err(_) => return Err((u, it, r.amax())),
        };
        if step.amax() <= 4.0 * f64::EPSILON * (1.0 + u.amax()) {
            // Step below round-off: the residual floor has been reached.
            return Ok(Newton {
                u,
                iterations: it + 1,
            });
        }
        let norm0 = r.norm();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial = &u + &step * t;
            let (rt, st) = sys.residual(&trial);
            let rt = masked(rt, fixed);
            if rt.norm() <= (1.0 - 1e-4 * t) * norm0 || rt.amax() <= opts.tol_newton * st {
                u = trial;
                r = rt;
                scale = st;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err((u, it + 1, r.amax()));
        }
    }
    if r.amax() <= opts.tol_newton * scale {
        Ok(Newton {
            u,
            iterations: opts.max_newton,
        })
    } else {
        Err((u, opts.max_newton, r.amax()))
    }
}

/// Damped semismooth Newton with a Picard fallback (nonlinearity lagged,
/// piecewise-linear penalized problem solved by Newton at every sweep).
fn newton(
    sys: &System<'_>,
    u0: &NodeVector,
    fixed: &[Option<f64>],
    opts: &SolverOptions,
    context: &str,
) -> Result<Newton> {
    let (u_fail, iters, _) = match newton_core(sys, u0, fixed, opts) {
        Ok(out) => return Ok(out),
        Err(e) => e,
    };
    let mut u = u_fail;
    let mut total = iters;
    for _ in 0..opts.max_picard {
        let fu = NodeVector::from_iterator(u.len(), (0..u.len()).map(|i| sys.f.eval_at(i, u[i])));
        let frozen = System {
            a: sys.a,
            f: sys.f,
            rho: sys.rho,
            lower: sys.lower,
            upper: sys.upper,
            frozen: Some(&fu),
        };
        let next = newton_core(&frozen, &u, fixed, opts).map_err(|(_, it, res)| {
            Error::NonConvergence {
                context: format!("{context} (Picard inner solve)"),
                iterations: total + it,
                residual: res,
            }
        })?;
        total += next.iterations + 1;
        let change = (&next.u - &u).amax();
        u = next.u;
        if change <= 1e-14 * (1.0 + u.amax()) {
            let (r, scale) = sys.residual(&u);
            let r = masked(r, fixed);
            if r.amax() <= opts.tol_newton * scale * 10.0 {
                return Ok(Newton {
                    u,
                    iterations: total,
                });
            }
        }
    }
    let (r, _) = sys.residual(&u);
    Err(Error::NonConvergence {
        context: format!(
            "{context}: Newton and Picard both failed; check that f is nonincreasing in u (H1)"
        ),
        iterations: total,
        residual: masked(r, fixed).amax(),
    })
}

fn check_penalty(name: &str, w: f64) -> Result<()> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "{name} penalty must be finite and > 0, got {w}"
        )))
    }
}

fn check_common(op: &AssembledOperator, f: &Nonlinearity, mu: &MeasureData) -> Result<NodeVector> {
    check_len(op.len(), f.len())?;
    mu.lump(op.grid())
}

// ---------------------------------------------------------------------------
// Penalized equations

/// Solves `A u = f(u) + rho_mu`.
pub fn solve_semilinear(
    op: &AssembledOperator,
    f: &Nonlinearity,
    mu: &MeasureData,
    opts: &SolverOptions,
) -> Result<NodeVector> {
    let rho = check_common(op, f, mu)?;
    semilinear_from(op, f, &rho, &NodeVector::zeros(op.len()), opts)
}

fn semilinear_from(
    op: &AssembledOperator,
    f: &Nonlinearity,
    rho: &NodeVector,
    u0: &NodeVector,
    opts: &SolverOptions,
) -> Result<NodeVector> {
    let sys = System::new(op.matrix(), f, rho);
    Ok(newton(&sys, u0, &vec![None; op.len()], opts, "semilinear equation")?.u)
}

/// Solves `A u = f(u) + rho_mu + n (h1 - u)^+`.
pub fn solve_penalized_one_sided(
    op: &AssembledOperator,
    f: &Nonlinearity,
    mu: &MeasureData,
    h1: &NodeVector,
    n_pen: f64,
    opts: &SolverOptions,
) -> Result<NodeVector> {
    let rho = check_common(op, f, mu)?;
    check_len(op.len(), h1.len())?;
    check_penalty("lower", n_pen)?;
    let sys = System::new(op.matrix(), f, &rho).lower(h1, n_pen);
    Ok(newton(
        &sys,
        &NodeVector::zeros(op.len()),
        &vec![None; op.len()],
        opts,
        "penalized equation",
    )?
    .u)
}

/// Solves `A u = f(u) + rho_mu + n (h1 - u)^+ - k (u - h2)^+`.
#[allow(clippy::too_many_arguments)]
pub fn solve_two_sided_doubly_penalized(
    op: &AssembledOperator,
    f: &Nonlinearity,
    mu: &MeasureData,
    h1: &NodeVector,
    h2: &NodeVector,
    n_pen: f64,
    k_pen: f64,
    opts: &SolverOptions,
) -> Result<NodeVector> {
    let rho = check_common(op, f, mu)?;
    check_len(op.len(), h1.len())?;
    check_len(op.len(), h2.len())?;
    if (0..op.len()).any(|i| h1[i] > h2[i]) {
        return Err(Error::Precondition("barriers must satisfy h1 <= h2".into()));
    }
    check_penalty("lower", n_pen)?;
    check_penalty("upper", k_pen)?;
    let sys = System::new(op.matrix(), f, &rho)
        .lower(h1, n_pen)
        .upper(h2, k_pen);
    Ok(newton(
        &sys,
        &NodeVector::zeros(op.len()),
        &vec![None; op.len()],
        opts,
        "doubly penalized equation",
    )?
    .u)
}

// ---------------------------------------------------------------------------
// Exact complementarity solve on identified contact sets

#[derive(Clone, Copy, PartialEq, Eq)]
enum NodeState {
    Free,
    Lower,
    Upper,
    Pinned,
}

/// Primal-dual active-set iteration for
/// `h1 <= u <= h2`, `r(u) >= 0` where `u = h1`, `r(u) <= 0` where `u = h2`,
/// `r(u) = 0` elsewhere, with `r(u) = A u - f(u) - rho + k (u - h2k)^+` for an
/// optional extra upper penalty.
#[allow(clippy::too_many_arguments)]
fn active_set_solve(
    op: &AssembledOperator,
    f: &Nonlinearity,
    rho: &NodeVector,
    lower: Option<&NodeVector>,
    upper: Option<&NodeVector>,
    extra_upper: Option<(&NodeVector, f64)>,
    u0: &NodeVector,
    opts: &SolverOptions,
) -> Result<Newton> {
    let n = op.len();
    let lo = |i: usize| lower.map_or(f64::NEG_INFINITY, |h| h[i]);
    let hi = |i: usize| upper.map_or(f64::INFINITY, |h| h[i]);
    let hscale = 1.0 + lower.map_or(0.0, |h| h.amax()) + upper.map_or(0.0, |h| h.amax());
    let add_tol = 1e-13 * hscale;
    let mut state: Vec<NodeState> = (0..n)
        .map(|i| {
            if lo(i) >= hi(i) {
                NodeState::Pinned
            } else if u0[i] <= lo(i) {
                NodeState::Lower
            } else if u0[i] >= hi(i) {
                NodeState::Upper
            } else {
                NodeState::Free
            }
        })
        .collect();
    let sys = System::new(op.matrix(), f, rho).upper_opt(extra_upper);
    let mut u = u0.clone();
    let mut total = 0;
    let mut seen: Vec<Vec<NodeState>> = Vec::new();
    for _ in 0..opts.max_active_set {
        let fixed: Vec<Option<f64>> = state
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                NodeState::Free => None,
                NodeState::Lower | NodeState::Pinned => Some(lo(i)),
                NodeState::Upper => Some(hi(i)),
            })
            .collect();
        let out = newton(&sys, &u, &fixed, opts, "active-set reduced system")?;
        total += out.iterations;
        u = out.u;
        let (r, scale) = sys.residual(&u);
        let release_tol = 1e-12 * scale;
        let next: Vec<NodeState> = (0..n)
            .map(|i| match state[i] {
                NodeState::Pinned => NodeState::Pinned,
                NodeState::Lower if r[i] < -release_tol => NodeState::Free,
                NodeState::Upper if r[i] > release_tol => NodeState::Free,
                NodeState::Free if u[i] < lo(i) - add_tol => NodeState::Lower,
                NodeState::Free if u[i] > hi(i) + add_tol => NodeState::Upper,
                s => s,
            })
            .collect();
        if next == state {
            return Ok(Newton {
                u,
                iterations: total,
            });
        }
        if seen.contains(&next) {
            break;
        }
        seen.push(std::mem::replace(&mut state, next));
    }
    Err(Error::NonConvergence {
        context: "active-set iteration did not settle".into(),
        iterations: total,
        residual: f64::NAN,
    })
}

fn build_solution(
    prob: &ObstacleProblem,
    u: NodeVector,
    method: SolveMethod,
    iterations: usize,
    opts: &SolverOptions,
) -> ObstacleSolution {
    let n = prob.n();
    let eps_c = prob.contact_tolerance(opts.contact_rel);
    let active_lower: Vec<usize> = match &prob.lower {
        Some(h1) => (0..n).filter(|&i| u[i] - h1[i] <= eps_c).collect(),
        None => Vec::new(),
    };
    let active_upper: Vec<usize> = match &prob.upper {
        Some(h2) => (0..n).filter(|&i| h2[i] - u[i] <= eps_c).collect(),
        None => Vec::new(),
    };
    let r = prob.reaction_density(&u);
    let fu = prob.f.eval(&u).expect("length checked");
    let rho = prob.rho();
    let residual_scale = (0..n)
        .map(|i| fu[i].abs() + rho[i].abs() + r[i].abs())
        .fold(1.0, f64::max);
    let mut plus = NodeVector::zeros(n);
    let mut minus = NodeVector::zeros(n);
    for &i in &active_lower {
        plus[i] = r[i].max(0.0);
    }
    for &i in &active_upper {
        minus[i] = (-r[i]).max(0.0);
    }
    let residual_norm = (&r - (&plus - &minus)).amax();
    ObstacleSolution {
        u,
        nu: SignedDecomposition {
            plus: MeasureData::from_density(plus),
            minus: MeasureData::from_density(minus),
        },
        active_lower,
        active_upper,
        penalty_trace: Vec::new(),
        residual_norm,
        residual_scale,
        iterations,
        method,
        penalty_u: None,
        penalty_nu: None,
        nu_discrepancy: 0.0,
        ill_conditioned: false,
        iterates: Vec::new(),
    }
}

fn attach_penalty_data(
    sol: &mut ObstacleSolution,
    prob: &ObstacleProblem,
    penalty_u: NodeVector,
    penalty_nu: NodeVector,
    opts: &SolverOptions,
) {
    let diff = &penalty_nu - sol.nu_density();
    sol.nu_discrepancy = prob.op.solve(&diff).amax();
    sol.ill_conditioned = sol.nu_discrepancy > 10.0 * opts.tol_cont * (1.0 + sol.u.amax());
    sol.penalty_u = Some(penalty_u);
    sol.penalty_nu = Some(penalty_nu);
}

/// Continuation stopping rule: small increment that is no longer growing.
fn continuation_done(inc: f64, prev: Option<f64>, u: &NodeVector, opts: &SolverOptions) -> bool {
    inc == 0.0 || (inc < opts.tol_cont * (1.0 + u.amax()) && prev.is_some_and(|p| inc <= p))
}

// ---------------------------------------------------------------------------
// Obstacle problems

/// One lower barrier, solved by penalty continuation `n_j = n0 * growth^j`.
pub fn solve_obstacle_one_sided(
    prob: &ObstacleProblem,
    opts: &SolverOptions,
) -> Result<ObstacleSolution> {
    prob.validate()?;
    let h1 = prob.lower.as_ref().ok_or_else(|| {
        Error::Precondition("one-sided solve needs a finite lower barrier h1".into())
    })?;
    if prob.upper.is_some() {
        return Err(Error::Precondition(
            "one-sided solve expects h2 = +inf; use solve_obstacle_two_sided".into(),
        ));
    }
    let op = prob.op.as_ref();
    let rho = prob.rho();
    let zero = NodeVector::zeros(prob.n());
    let mut prev = semilinear_from(op, &prob.f, &rho, &zero, opts)?;
    let mut iterates = Vec::new();
    if opts.keep_iterates {
        iterates.push(prev.clone());
    }
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut prev_inc = None;
    let mut converged = None;
    for j in 0..=opts.j_max {
        let pen = opts.n0 * opts.growth.powi(j as i32);
        let sys = System::new(op.matrix(), &prob.f, &rho).lower(h1, pen);
        let out = newton(
            &sys,
            &prev,
            &vec![None; prob.n()],
            opts,
            "penalized equation",
        )?;
        iterations += out.iterations;
        let inc = (&out.u - &prev).amax();
        trace.push(PenaltyStep {
            lower_penalty: Some(pen),
            upper_penalty: None,
            increment: inc,
        });
        if opts.keep_iterates {
            iterates.push(out.u.clone());
        }
        let done = continuation_done(inc, prev_inc, &out.u, opts);
        prev = out.u;
        prev_inc = Some(inc);
        if done {
            converged = Some(pen);
            break;
        }
    }
    let Some(pen) = converged else {
        return Err(Error::ContinuationStalled {
            context:
                "one-sided penalty continuation; no admissible separating v at this scale (H5)"
                    .into(),
            steps: trace.len(),
            increment: prev_inc.unwrap_or(f64::NAN),
        });
    };
    let penalty_nu = (h1 - &prev).map(|d| pen * d.max(0.0));
    let finish = active_set_solve(op, &prob.f, &rho, Some(h1), None, None, &prev, opts)?;
    iterations += finish.iterations;
    let mut sol = build_solution(
        prob,
        finish.u,
        SolveMethod::PenaltyContinuation,
        iterations,
        opts,
    );
    sol.penalty_trace = trace;
    sol.iterates = iterates;
    attach_penalty_data(&mut sol, prob, prev, penalty_nu, opts);
    Ok(sol)
}

/// Two barriers, solved by the sequential scheme: for `k_j = n0 * growth^j`
/// solve the lower-obstacle problem with the extra term `-k (u - h2)^+`
/// exactly; the iterates decrease to the solution.
pub fn solve_obstacle_two_sided(
    prob: &ObstacleProblem,
    opts: &SolverOptions,
) -> Result<ObstacleSolution> {
    prob.validate()?;
    let Some(h2) = prob.upper.as_ref() else {
        return match prob.lower {
            Some(_) => solve_obstacle_one_sided(prob, opts),
            None => solve_unconstrained(prob, opts),
        };
    };
    let op = prob.op.as_ref();
    let rho = prob.rho();
    let h1 = prob.lower.as_ref();
    let inner = |k: Option<f64>, start: &NodeVector| -> Result<Newton> {
        let extra = k.map(|k| (h2, k));
        match h1 {
            Some(h1) => active_set_solve(op, &prob.f, &rho, Some(h1), None, extra, start, opts),
            None => {
                let sys = System::new(op.matrix(), &prob.f, &rho).upper_opt(extra);
                newton(
                    &sys,
                    start,
                    &vec![None; prob.n()],
                    opts,
                    "upper-penalized equation",
                )
            }
        }
    };
    let mut iterations = 0;
    let mut prev = match &prob.lower {
        Some(_) => {
            let lower_only = ObstacleProblem {
                upper: None,
                separating_v: None,
                ..prob.clone()
            };
            let s = solve_obstacle_one_sided(&lower_only, opts)?;
            iterations += s.iterations;
            s.u
        }
        None => semilinear_from(op, &prob.f, &rho, &NodeVector::zeros(prob.n()), opts)?,
    };
    let mut iterates = Vec::new();
    if opts.keep_iterates {
        iterates.push(prev.clone());
    }
    let mut trace = Vec::new();
    let mut prev_dec = None;
    let mut converged = None;
    for j in 0..=opts.j_max {
        let k = opts.n0 * opts.growth.powi(j as i32);
        let out = inner(Some(k), &prev)?;
        iterations += out.iterations;
        let dec = (&prev - &out.u).amax();
        trace.push(PenaltyStep {
            lower_penalty: None,
            upper_penalty: Some(k),
            increment: dec,
        });
        if opts.keep_iterates {
            iterates.push(out.u.clone());
        }
        let done = continuation_done(dec, prev_dec, &out.u, opts);
        prev = out.u;
        prev_dec = Some(dec);
        if done {
            converged = Some(k);
            break;
        }
    }
    let Some(k) = converged else {
        return Err(Error::ContinuationStalled {
            context: "sequential two-sided scheme; barriers not separable by an admissible v at this scale (H6)"
                .into(),
            steps: trace.len(),
            increment: prev_dec.unwrap_or(f64::NAN),
        });
    };
    // alpha_k: lower reaction of the last step; upper penalty density k (u - h2)^+.
    let upper_pen = (&prev - h2).map(|d| k * d.max(0.0));
    let mut alpha = prob.reaction_density(&prev) + &upper_pen;
    if let Some(h1) = h1 {
        for i in 0..prob.n() {
            if prev[i] > h1[i] {
                alpha[i] = 0.0;
            }
        }
    } else {
        alpha.fill(0.0);
    }
    let penalty_nu = alpha.map(|a| a.max(0.0)) - upper_pen;
    let finish = active_set_solve(op, &prob.f, &rho, h1, Some(h2), None, &prev, opts)?;
    iterations += finish.iterations;
    let mut sol = build_solution(
        prob,
        finish.u,
        SolveMethod::SequentialTwoSided,
        iterations,
        opts,
    );
    sol.penalty_trace = trace;
    sol.iterates = iterates;
    attach_penalty_data(&mut sol, prob, prev, penalty_nu, opts);
    Ok(sol)
}

fn solve_unconstrained(prob: &ObstacleProblem, opts: &SolverOptions) -> Result<ObstacleSolution> {
    let rho = prob.rho();
    let u = semilinear_from(&prob.op, &prob.f, &rho, &NodeVector::zeros(prob.n()), opts)?;
    Ok(build_solution(prob, u, SolveMethod::Semilinear, 0, opts))
}

/// Dispatches on the finite barriers.
pub fn solve_obstacle(prob: &ObstacleProblem, opts: &SolverOptions) -> Result<ObstacleSolution> {
    match (&prob.lower, &prob.upper) {
        (None, None) => solve_unconstrained(prob, opts),
        (Some(_), None) => solve_obstacle_one_sided(prob, opts),
        _ => solve_obstacle_two_sided(prob, opts),
    }
}

// ---------------------------------------------------------------------------
// Projected Gauss-Seidel oracle

/// Root of the strictly increasing `phi(t) = d t - f(x_i, t) - b`, with
/// `phi' >= d > 0`.
fn scalar_root(f: &Nonlinearity, i: usize, d: f64, b: f64, t0: f64) -> f64 {
    let phi = |t: f64| d * t - f.eval_at(i, t) - b;
    let p0 = phi(t0);
    if p0 == 0.0 {
        return t0;
    }
    // phi' >= d brackets the root within |phi(t0)| / d of t0.
    let (mut lo, mut hi) = if p0 < 0.0 {
        (t0, t0 - p0 / d)
    } else {
        (t0 - p0 / d, t0)
    };
    let mut t = t0 - p0 / (d - f.derivative_at(i, t0));
    for _ in 0..100 {
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
        let p = phi(t);
        if p == 0.0 {
            return t;
        }
        if p < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + t.abs()) {
            break;
        }
        t -= p / (d - f.derivative_at(i, t));
    }
    t
}

fn projected_gauss_seidel(
    prob: &ObstacleProblem,
    opts: &SolverOptions,
) -> Result<(NodeVector, usize)> {
    let n = prob.n();
    let a = prob.op.matrix();
    let rho = prob.rho();
    let lo = |i: usize| prob.lower.as_ref().map_or(f64::NEG_INFINITY, |h| h[i]);
    let hi = |i: usize| prob.upper.as_ref().map_or(f64::INFINITY, |h| h[i]);
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && a[(i, j)] != 0.0)
                .map(|j| (j, a[(i, j)]))
                .collect()
        })
        .collect();
    let mut u = NodeVector::from_iterator(n, (0..n).map(|i| 0.0f64.clamp(lo(i), hi(i))));
    let check_every = 10;
    for sweep in 1..=opts.pgs_max_sweeps {
        for i in 0..n {
            let off: f64 = rows[i].iter().map(|&(j, aij)| aij * u[j]).sum();
            let t = scalar_root(&prob.f, i, a[(i, i)], rho[i] - off, u[i]);
            u[i] = t.max(lo(i)).min(hi(i));
        }
        if sweep % check_every == 0 {
            let r = prob.reaction_density(&u);
            let natural = (0..n)
                .map(|i| (u[i] - (u[i] - r[i] / a[(i, i)]).max(lo(i)).min(hi(i))).abs())
                .fold(0.0, f64::max);
            if natural <= opts.pgs_tol * (1.0 + u.amax()) {
                return Ok((u, sweep));
            }
        }
    }
    Err(Error::NonConvergence {
        context: "projected Gauss-Seidel exceeded max sweeps".into(),
        iterations: opts.pgs_max_sweeps,
        residual: f64::NAN,
    })
}

/// Projected Gauss-Seidel for the one-sided complementarity system.
pub fn lcp_oracle_one_sided(
    prob: &ObstacleProblem,
    opts: &SolverOptions,
) -> Result<ObstacleSolution> {
    prob.validate()?;
    if prob.lower.is_none() || prob.upper.is_some() {
        return Err(Error::Precondition(
            "one-sided oracle needs h1 finite and h2 = +inf".into(),
        ));
    }
    let (u, sweeps) = projected_gauss_seidel(prob, opts)?;
    Ok(build_solution(
        prob,
        u,
        SolveMethod::ProjectedGaussSeidel,
        sweeps,
        opts,
    ))
}

/// Projected Gauss-Seidel with clamping to `[h1, h2]`.
pub fn lcp_oracle_two_sided(
    prob: &ObstacleProblem,
    opts: &SolverOptions,
) -> Result<ObstacleSolution> {
    prob.validate()?;
    if prob.lower.is_none() || prob.upper.is_none() {
        return Err(Error::Precondition(
            "two-sided oracle needs both barriers finite".into(),
        ));
    }
    let (u, sweeps) = projected_gauss_seidel(prob, opts)?;
    Ok(build_solution(
        prob,
        u,
        SolveMethod::ProjectedGaussSeidel,
        sweeps,
        opts,
    ))
}

#[cfg(test)]
mod tests;
