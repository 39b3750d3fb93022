//! TOML run configuration and its translation into core problem data.

use std::path::PathBuf;
use std::sync::Arc;

use obstacle_core::nonlinearity::Reaction;
use obstacle_core::{
    AssembledOperator, Atom, Grid, MeasureData, NodeVector, Nonlinearity, ObstacleProblem,
    OperatorSpec, SolverOptions,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::expr::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Verify,
    Sweep,
    McCheck,
    Refine,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Verify => "verify",
            Self::Sweep => "sweep",
            Self::McCheck => "mc-check",
            Self::Refine => "refine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Used when no subcommand is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub f: FConfig,
    #[serde(default)]
    pub mu: MeasureConfig,
    #[serde(default)]
    pub barriers: BarrierConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub refine: RefineConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub a: f64,
    #[serde(default = "one")]
    pub b: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    #[default]
    DirichletLaplacian,
    SpectralFractional {
        alpha: f64,
    },
    RestrictedFractional {
        alpha: f64,
    },
    KillingPerturbed {
        base: Box<OperatorConfig>,
        killing: MeasureConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReactionConfig {
    /// `f(x, y) = g(x)`.
    #[default]
    Zero,
    Affine {
        slope: f64,
    },
    Saturating,
    Power {
        exponent: u32,
    },
    Table {
        knots: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FConfig {
    /// `f(x, 0)`.
    #[serde(default = "zero_expr")]
    pub g: String,
    #[serde(default)]
    pub reaction: ReactionConfig,
}

impl Default for FConfig {
    fn default() -> Self {
        Self {
            g: zero_expr(),
            reaction: ReactionConfig::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    /// Density with respect to Lebesgue measure.
    #[serde(default = "zero_expr")]
    pub density: String,
    #[serde(default)]
    pub atoms: Vec<Atom>,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            density: zero_expr(),
            atoms: Vec::new(),
        }
    }
}

/// Missing barriers are `-inf` (h1) and `+inf` (h2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separating_v: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub complementarity_rel: f64,
    pub norm_tol: f64,
    pub energy_tol: f64,
    pub lewy_stampacchia_tol: f64,
    pub envelope_samples: usize,
    pub envelope_tol: f64,
    pub identity_tol: f64,
    /// Also solve with projected Gauss-Seidel and compare.
    pub oracle: bool,
    pub oracle_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            complementarity_rel: 1e-6,
            norm_tol: 1e-8,
            energy_tol: 1e-8,
            lewy_stampacchia_tol: 1e-6,
            envelope_samples: 200,
            envelope_tol: 1e-6,
            identity_tol: 1e-8,
            oracle: false,
            oracle_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    /// Defaults to the midpoint of the domain.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    pub n_paths: usize,
    /// Defaults to `h²/4`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub use_exit_correction: bool,
    /// Discretization constant `C` of the acceptance bound `3 C h`.
    /// Calibrated on `-u'' = 1` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<f64>,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            x0: None,
            n_paths: 100_000,
            dt: None,
            use_exit_correction: true,
            calibration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub sizes: Vec<usize>,
    /// Largest relative change of the band endpoints between successive sizes.
    pub band_tol: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            sizes: vec![63, 127, 255],
            band_tol: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn zero_expr() -> String {
    "0".into()
}

fn parse_expr(field: &str, text: &str) -> Result<Expr, CliError> {
    Expr::parse(text).map_err(|e| CliError::Parse(format!("{field}: {e}")))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.check_expressions()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every expression field parses.
    pub fn check_expressions(&self) -> Result<(), CliError> {
        parse_expr("f.g", &self.f.g)?;
        parse_expr("mu.density", &self.mu.density)?;
        let mut op = &self.operator;
        while let OperatorConfig::KillingPerturbed { base, killing } = op {
            parse_expr("operator.killing.density", &killing.density)?;
            op = base;
        }
        for (name, e) in [
            ("barriers.h1", &self.barriers.h1),
            ("barriers.h2", &self.barriers.h2),
            ("barriers.separating_v", &self.barriers.separating_v),
        ] {
            if let Some(text) = e {
                parse_expr(name, text)?;
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(self.grid.a, self.grid.b, self.grid.n)?)
    }

    pub fn operator_spec(&self, grid: &Grid) -> Result<OperatorSpec, CliError> {
        operator_spec(&self.operator, grid)
    }

    pub fn nonlinearity(&self, grid: &Grid) -> Result<Nonlinearity, CliError> {
        let g = sample(grid, "f.g", &self.f.g)?;
        let f = match &self.f.reaction {
            ReactionConfig::Zero => Nonlinearity::constant(g),
            ReactionConfig::Affine { slope } => {
                Nonlinearity::new(Reaction::Affine { slope: *slope }, g)?
            }
            ReactionConfig::Saturating => Nonlinearity::new(Reaction::Saturating, g)?,
            ReactionConfig::Power { exponent } => Nonlinearity::new(
                Reaction::Power {
                    exponent: *exponent,
                },
                g,
            )?,
            ReactionConfig::Table { knots } => Nonlinearity::new(
                Reaction::Table {
                    knots: knots.clone(),
                },
                g,
            )?,
        };
        if let ReactionConfig::Table { knots } = &self.f.reaction {
            let mut samples: Vec<f64> = knots.iter().map(|k| k.0).collect();
            let (lo, hi) = (samples[0] - 1.0, samples[samples.len() - 1] + 1.0);
            samples.extend((0..=64).map(|j| lo + (hi - lo) * j as f64 / 64.0));
            if !f.monotonicity_audit(&samples) {
                return Err(CliError::Precondition(
                    "(H1) violated: table reaction is not nonincreasing in y".into(),
                ));
            }
        }
        Ok(f)
    }

    pub fn problem(&self) -> Result<ObstacleProblem, CliError> {
        let grid = self.grid()?;
        let spec = self.operator_spec(&grid)?;
        let op = Arc::new(AssembledOperator::assemble(spec, &grid)?);
        let f = self.nonlinearity(&grid)?;
        let mu = measure(&grid, "mu", &self.mu)?;
        let b = &self.barriers;
        let h1 =
            b.h1.as_deref()
                .map(|t| sample(&grid, "barriers.h1", t))
                .transpose()?;
        let h2 =
            b.h2.as_deref()
                .map(|t| sample(&grid, "barriers.h2", t))
                .transpose()?;
        let mut prob = ObstacleProblem::new(op, f, mu, h1, h2)?;
        if let Some(t) = b.separating_v.as_deref() {
            prob = prob.with_separating_v(sample(&grid, "barriers.separating_v", t)?)?;
        }
        Ok(prob)
    }
}

fn sample(grid: &Grid, field: &str, text: &str) -> Result<NodeVector, CliError> {
    let e = parse_expr(field, text)?;
    let v = grid.sample(|x| e.eval(x));
    if let Some(i) = v.iter().position(|y| !y.is_finite()) {
        return Err(CliError::Parse(format!(
            "{field}: `{text}` is not finite at x = {}",
            grid.nodes()[i]
        )));
    }
    Ok(v)
}

fn measure(grid: &Grid, field: &str, m: &MeasureConfig) -> Result<MeasureData, CliError> {
    let density = sample(grid, &format!("{field}.density"), &m.density)?;
    let mut out = MeasureData::from_density(density);
    out.atoms = m.atoms.clone();
    out.validate(grid)?;
    Ok(out)
}

fn operator_spec(cfg: &OperatorConfig, grid: &Grid) -> Result<OperatorSpec, CliError> {
    let spec = match cfg {
        OperatorConfig::DirichletLaplacian => OperatorSpec::DirichletLaplacian,
        OperatorConfig::SpectralFractional { alpha } => {
            OperatorSpec::SpectralFractional { alpha: *alpha }
        }
        OperatorConfig::RestrictedFractional { alpha } => {
            OperatorSpec::RestrictedFractional { alpha: *alpha }
        }
        OperatorConfig::KillingPerturbed { base, killing } => OperatorSpec::killing(
            operator_spec(base, grid)?,
            measure(grid, "operator.killing", killing)?,
        ),
    };
    spec.validate()?;
    Ok(spec)
}
