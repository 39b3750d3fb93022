//! Reaction terms `f(x, y) = g(x) + phi(y)` that are continuous and
//! nonincreasing in `y`.

use crate::error::{check_len, Error, Result};
use crate::NodeVector;

#[derive(Debug, Clone, PartialEq)]
pub enum Reaction {
    /// `phi(y) = -slope * y`, `slope >= 0`.
    Affine { slope: f64 },
    /// `phi(y) = -atan(y)`.
    Saturating,
    /// `phi(y) = -sign(y) |y|^p` for odd `p >= 1`.
    Power { exponent: u32 },
    /// Piecewise-linear `phi` through `(y, value)` knots, shifted so that
    /// `phi(0) = 0`, extended linearly beyond the end knots.
    Table { knots: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    reaction: Reaction,
    /// `f(x_i, 0)`.
    g: NodeVector,
}

impl Nonlinearity {
    pub fn new(reaction: Reaction, g: NodeVector) -> Result<Self> {
        match &reaction {
            Reaction::Affine { slope } if !(slope.is_finite() && *slope >= 0.0) => {
                return Err(Error::InvalidNonlinearity(format!(
                    "affine slope must be finite and >= 0, got {slope}"
                )));
            }
            Reaction::Power { exponent } if exponent % 2 == 0 => {
                return Err(Error::InvalidNonlinearity(format!(
                    "power exponent must be odd and >= 1, got {exponent}"
                )));
            }
            Reaction::Table { knots } => {
                if knots.len() < 2 {
                    return Err(Error::InvalidNonlinearity(
                        "table needs at least two knots".into(),
                    ));
                }
                if knots
                    .windows(2)
                    .any(|w| w[0].0.partial_cmp(&w[1].0) != Some(std::cmp::Ordering::Less))
                {
                    return Err(Error::InvalidNonlinearity(
                        "table abscissae must be strictly increasing".into(),
                    ));
                }
                if knots.iter().any(|(y, v)| !y.is_finite() || !v.is_finite()) {
                    return Err(Error::InvalidNonlinearity(
                        "table entries must be finite".into(),
                    ));
                }
            }
            _ => {}
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidNonlinearity(
                "g has non-finite entries".into(),
            ));
        }
        Ok(Self { reaction, g })
    }

    /// `f(x, y) = g(x)`.
    pub fn constant(g: NodeVector) -> Self {
        Self {
            reaction: Reaction::Affine { slope: 0.0 },
            g,
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::constant(NodeVector::zeros(n))
    }

    pub fn affine(g: NodeVector, slope: f64) -> Result<Self> {
        Self::new(Reaction::Affine { slope }, g)
    }

    pub fn reaction(&self) -> &Reaction {
        &self.reaction
    }

    pub fn g(&self) -> &NodeVector {
        &self.g
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// Reaction part `f(x, y) - g(x)`, zero at `y = 0`.
    pub fn phi(&self, y: f64) -> f64 {
        match &self.reaction {
            Reaction::Affine { slope } => -slope * y,
            Reaction::Saturating => -y.atan(),
            Reaction::Power { exponent } => -y.signum() * y.abs().powi(*exponent as i32),
            Reaction::Table { knots } => table_interp(knots, y) - table_interp(knots, 0.0),
        }
    }

    fn dphi(&self, y: f64) -> f64 {
        match &self.reaction {
            Reaction::Affine { slope } => -slope,
            Reaction::Saturating => -1.0 / (1.0 + y * y),
            Reaction::Power { exponent } => {
                let p = *exponent as i32;
                -(p as f64) * y.abs().powi(p - 1)
            }
            Reaction::Table { .. } => {
                let step = 1e-6 * (1.0 + y.abs());
                (self.phi(y + step) - self.phi(y - step)) / (2.0 * step)
            }
        }
    }

    /// `f(x_i, y)`.
    pub fn eval_at(&self, i: usize, y: f64) -> f64 {
        self.g[i] + self.phi(y)
    }

    /// `d/dy f(x_i, y)`.
    pub fn derivative_at(&self, _i: usize, y: f64) -> f64 {
        self.dphi(y)
    }

    /// Nodewise `f(x_i, u_i)`.
    pub fn eval(&self, u: &NodeVector) -> Result<NodeVector> {
        check_len(self.g.len(), u.len())?;
        Ok(NodeVector::from_iterator(
            u.len(),
            u.iter().enumerate().map(|(i, &y)| self.eval_at(i, y)),
        ))
    }

    pub fn derivative(&self, u: &NodeVector) -> NodeVector {
        NodeVector::from_iterator(
            u.len(),
            u.iter().enumerate().map(|(i, &y)| self.derivative_at(i, y)),
        )
    }

    /// A copy with `g` replaced.
    pub fn with_g(&self, g: NodeVector) -> Self {
        Self {
            reaction: self.reaction.clone(),
            g,
        }
    }

    /// True iff `(f(x,y) - f(x,y')) (y - y') <= 0` at every node for every
    /// pair of samples.
    pub fn monotonicity_audit(&self, samples: &[f64]) -> bool {
        if samples.len() < 2 {
            return true;
        }
        (0..self.g.len()).all(|i| {
            samples.iter().enumerate().all(|(k, &y)| {
                samples[k + 1..]
                    .iter()
                    .all(|&yp| (self.eval_at(i, y) - self.eval_at(i, yp)) * (y - yp) <= 0.0)
            })
        })
    }
}

fn table_interp(knots: &[(f64, f64)], y: f64) -> f64 {
    let last = knots.len() - 1;
    let seg = if y <= knots[0].0 {
        0
    } else if y >= knots[last].0 {
        last - 1
    } else {
        knots.partition_point(|k| k.0 <= y) - 1
    };
    let (y0, v0) = knots[seg];
    let (y1, v1) = knots[seg + 1];
    v0 + (v1 - v0) * (y - y0) / (y1 - y0)
}
