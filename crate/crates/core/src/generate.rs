//! Seeded random problem instances for randomized testing.
//!
//! The generator draws smooth data from a small trigonometric family so the
//! instances stay well scaled on any grid:
//!
//! - `mu`: density `c0 + c1 sin(k1 pi t) + c2 cos(k2 pi t)` on the unit
//!   coordinate `t`, plus up to `max_atoms` atoms;
//! - `f`: affine (slope in `[0, 3]`) or saturating, with
//!   `g = d0 + d1 sin(2 pi t)`;
//! - `h1 = e0 + e1 sin(pi t) + e2 sin(3 pi t)`;
//! - `h2 = h1 + w0 + w1 (1 + sin(2 pi t + phase))` when two-sided.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::Grid;
use crate::measures::MeasureData;
use crate::nonlinearity::{Nonlinearity, Reaction};
use crate::operators::{AssembledOperator, OperatorSpec};
use crate::solvers::ObstacleProblem;
use crate::NodeVector;

#[derive(Debug, Clone)]
pub struct GeneratorOptions {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub operator: OperatorSpec,
    pub two_sided: bool,
    pub max_atoms: usize,
}

impl GeneratorOptions {
    pub fn new(n: usize, operator: OperatorSpec, two_sided: bool) -> Self {
        Self {
            a: 0.0,
            b: 1.0,
            n,
            operator,
            two_sided,
            max_atoms: 3,
        }
    }
}

/// Operators of the default randomized battery, cycled by instance index:
/// the Laplacian and spectral fractional powers `alpha = 0.5, 1, 1.5`.
pub fn default_operators() -> [OperatorSpec; 4] {
    [
        OperatorSpec::DirichletLaplacian,
        OperatorSpec::SpectralFractional { alpha: 0.5 },
        OperatorSpec::SpectralFractional { alpha: 1.0 },
        OperatorSpec::SpectralFractional { alpha: 1.5 },
    ]
}

/// Random problem with a freshly assembled operator.
pub fn random_problem(opts: &GeneratorOptions, seed: u64) -> Result<ObstacleProblem> {
    let grid = Grid::new(opts.a, opts.b, opts.n)?;
    let op = Arc::new(AssembledOperator::assemble(opts.operator.clone(), &grid)?);
    random_problem_on(op, opts, seed)
}

/// Random problem on an already assembled operator.
pub fn random_problem_on(
    op: Arc<AssembledOperator>,
    opts: &GeneratorOptions,
    seed: u64,
) -> Result<ObstacleProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = op.grid().clone();
    let (a, len) = (grid.a(), grid.b() - grid.a());
    let unit = |x: f64| (x - a) / len;
    let n = grid.len();

    let (c0, c1, c2) = (
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
    );
    let (k1, k2) = (
        rng.random_range(1..=3) as f64,
        rng.random_range(1..=3) as f64,
    );
    let density = grid.sample(|x| {
        let t = unit(x);
        c0 + c1 * (k1 * PI * t).sin() + c2 * (k2 * PI * t).cos()
    });
    let mut mu = MeasureData::from_density(density);
    for _ in 0..rng.random_range(0..=opts.max_atoms) {
        let p = a + len * rng.random_range(0.05..0.95);
        mu = mu.with_atom(p, rng.random_range(-1.5..1.5));
    }

    let (d0, d1) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let g = grid.sample(|x| d0 + d1 * (2.0 * PI * unit(x)).sin());
    let reaction = if rng.random_bool(0.5) {
        Reaction::Affine {
            slope: rng.random_range(0.0..3.0),
        }
    } else {
        Reaction::Saturating
    };
    let f = Nonlinearity::new(reaction, g)?;

    let (e0, e1, e2) = (
        rng.random_range(-0.15..0.05),
        rng.random_range(-0.1..0.1),
        rng.random_range(-0.03..0.03),
    );
    let h1 = grid.sample(|x| {
        let t = unit(x);
        e0 + e1 * (PI * t).sin() + e2 * (3.0 * PI * t).sin()
    });
    let h2 = if opts.two_sided {
        let (w0, w1, phase) = (
            rng.random_range(0.03..0.1),
            rng.random_range(0.0..0.1),
            rng.random_range(0.0..2.0 * PI),
        );
        let gap = grid.sample(|x| w0 + w1 * (1.0 + (2.0 * PI * unit(x) + phase).sin()));
        Some(&h1 + gap)
    } else {
        None
    };
    debug_assert_eq!(h1.len(), n);
    ObstacleProblem::new(op, f, mu, Some(h1), h2)
}

/// Data-ordered companion of `prob`: `mu2 >= mu`, `g2 >= g` and, unless
/// `equal_barriers`, raised barriers `h1' >= h1`, `h2' >= h2`.
pub fn ordered_companion(
    prob: &ObstacleProblem,
    seed: u64,
    equal_barriers: bool,
) -> Result<ObstacleProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0a0d);
    let grid = prob.op.grid().clone();
    let (a, len) = (grid.a(), grid.b() - grid.a());
    let bump = |rng: &mut ChaCha8Rng, scale: f64| -> NodeVector {
        let (c, w) = (rng.random_range(0.2..0.8), rng.random_range(0.1..0.3));
        let amp = rng.random_range(0.0..scale);
        grid.sample(|x| {
            let t = (x - a) / len;
            amp * (-((t - c) / w).powi(2)).exp()
        })
    };
    let mut mu = prob.mu.add(&MeasureData::from_density(bump(&mut rng, 3.0)));
    if rng.random_bool(0.5) {
        mu = mu.with_atom(
            a + len * rng.random_range(0.1..0.9),
            rng.random_range(0.0..1.0),
        );
    }
    let g = prob.f.g() + bump(&mut rng, 1.0);
    let (lower, upper) = if equal_barriers {
        (prob.lower.clone(), prob.upper.clone())
    } else {
        let raise = bump(&mut rng, 0.05);
        let lower = prob.lower.as_ref().map(|h| h + &raise);
        let upper = prob
            .upper
            .as_ref()
            .map(|h| h + &raise + bump(&mut rng, 0.05));
        (lower, upper)
    };
    ObstacleProblem::new(prob.op.clone(), prob.f.with_g(g), mu, lower, upper)
}
