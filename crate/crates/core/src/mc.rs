//! Monte Carlo evaluation of the Feynman–Kac representation for the
//! Dirichlet Laplacian.
//!
//! Paths follow `dX = sqrt(2) dW`, whose generator is `d²/dx²`, and are
//! killed on leaving `(a, b)`. Each path accumulates
//! `∫ f(X, u(X)) + g_mu(X) + g_nu(X) dt` with left-point Euler sums. Atoms
//! enter through their lumped densities.
//!
//! Path `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`, so
//! results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::solvers::{ObstacleProblem, ObstacleSolution};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct McConfig {
    pub x0: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Brownian-bridge kill probability between steps.
    pub use_exit_correction: bool,
}

impl McConfig {
    /// `dt = h²/4`, exit correction on.
    pub fn for_grid(grid: &Grid, x0: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            x0,
            n_paths,
            dt: grid.h() * grid.h() / 4.0,
            seed,
            use_exit_correction: true,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.x0 > grid.a() && self.x0 < grid.b()) {
            return Err(Error::InvalidMcConfig(format!(
                "x0 = {} outside ({}, {})",
                self.x0,
                grid.a(),
                grid.b()
            )));
        }
        if self.n_paths < 100 {
            return Err(Error::InvalidMcConfig(format!(
                "n_paths = {} < 100",
                self.n_paths
            )));
        }
        let h = grid.h();
        if !(self.dt > 0.0 && self.dt <= 0.5 * h * h) {
            return Err(Error::InvalidMcConfig(format!(
                "dt = {:e} must lie in (0, h²/2 = {:e}]",
                self.dt,
                0.5 * h * h
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub half_width_95: f64,
    pub std_dev: f64,
    pub n_paths: usize,
    pub mean_exit_time: f64,
    pub mean_steps: f64,
}

struct PathOutcome {
    value: f64,
    steps: u64,
}

fn run_path(
    grid: &Grid,
    cfg: &McConfig,
    path: u64,
    source: &(impl Fn(f64) -> f64 + Sync),
) -> PathOutcome {
    let (a, b) = (grid.a(), grid.b());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path);
    let sd = (2.0 * cfg.dt).sqrt();
    let mut x = cfg.x0;
    let mut acc = 0.0;
    let mut steps = 0u64;
    loop {
        acc += source(x) * cfg.dt;
        steps += 1;
        let z: f64 = rng.sample(StandardNormal);
        let next = x + sd * z;
        if next <= a || next >= b {
            break;
        }
        if cfg.use_exit_correction {
            // P(bridge touches the wall) = exp(-d d' / dt) for diffusion 2.
            let p = (-(x - a) * (next - a) / cfg.dt).exp() + (-(b - x) * (b - next) / cfg.dt).exp();
            if rng.random::<f64>() < p {
                break;
            }
        }
        x = next;
    }
    PathOutcome { value: acc, steps }
}

/// Estimates `E_x0 ∫_0^ζ source(X_t) dt` for the killed diffusion.
pub fn estimate_functional(
    grid: &Grid,
    cfg: &McConfig,
    source: impl Fn(f64) -> f64 + Sync,
) -> Result<McEstimate> {
    cfg.validate(grid)?;
    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| run_path(grid, cfg, p, &source))
        .collect();
    let n = outcomes.len() as f64;
    let mean = outcomes.iter().map(|o| o.value).sum::<f64>() / n;
    let var = outcomes
        .iter()
        .map(|o| (o.value - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let mean_steps = outcomes.iter().map(|o| o.steps as f64).sum::<f64>() / n;
    let std_dev = var.sqrt();
    Ok(McEstimate {
        estimate: mean,
        half_width_95: Z95 * std_dev / n.sqrt(),
        std_dev,
        n_paths: cfg.n_paths,
        mean_exit_time: mean_steps * cfg.dt,
        mean_steps,
    })
}

/// Mean exit time from `(a, b)` started at `x0`.
pub fn estimate_exit_time(grid: &Grid, cfg: &McConfig) -> Result<McEstimate> {
    estimate_functional(grid, cfg, |_| 1.0)
}

/// Feynman–Kac estimate of `u(x0)` from the solved pair `(u, nu)`.
pub fn estimate_u(
    prob: &ObstacleProblem,
    sol: &ObstacleSolution,
    cfg: &McConfig,
) -> Result<McEstimate> {
    if !prob.op.spec().is_laplacian() {
        return Err(Error::Precondition(format!(
            "Monte Carlo check needs the Dirichlet Laplacian, got {}",
            prob.op.spec().name()
        )));
    }
    if sol.u.len() != prob.n() {
        return Err(Error::LengthMismatch {
            expected: prob.n(),
            got: sol.u.len(),
        });
    }
    let grid = prob.op.grid();
    let u = sol.u.as_slice().to_vec();
    let g = prob.f.g().as_slice().to_vec();
    let density: Vec<f64> = (prob.rho() + sol.nu_density()).iter().copied().collect();
    let f = &prob.f;
    estimate_functional(grid, cfg, |x| {
        let ux = grid.interpolate_zero_bc(&u, x);
        grid.interpolate_const_ext(&g, x) + f.phi(ux) + grid.interpolate_const_ext(&density, x)
    })
}
