//! Uniform interior grid on an open interval with zero exterior condition.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::NodeVector;

/// Interior nodes `x_i = a + i h`, `i = 1..=n`, with lumped masses `m_i = h`
/// and boundary distance `delta_i = min(x_i - a, b - x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    a: f64,
    b: f64,
    n: usize,
    h: f64,
    nodes: Vec<f64>,
    mass: Vec<f64>,
    delta: Vec<f64>,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "endpoints must be finite, got ({a}, {b})"
            )));
        }
        if b <= a {
            return Err(Error::InvalidGrid(format!(
                "need b > a, got a = {a}, b = {b}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidGrid("need at least one interior node".into()));
        }
        let h = (b - a) / (n + 1) as f64;
        let nodes: Vec<f64> = (1..=n).map(|i| a + i as f64 * h).collect();
        // Index-based distance keeps delta exactly symmetric.
        let delta = (1..=n).map(|i| i.min(n + 1 - i) as f64 * h).collect();
        Ok(Self {
            a,
            b,
            n,
            h,
            nodes,
            mass: vec![h; n],
            delta,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// The grid obtained by inserting a node in every cell (`n -> 2n + 1`).
    pub fn refine(&self) -> Self {
        Self::new(self.a, self.b, 2 * self.n + 1).expect("refinement of a valid grid is valid")
    }

    /// Evaluates a function of `x` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> NodeVector {
        NodeVector::from_iterator(self.n, self.nodes.iter().map(|&x| f(x)))
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }

    /// Discrete `L^1(m)` norm `sum_i m_i |v_i|`.
    pub fn norm_l1(&self, v: &NodeVector) -> Result<f64> {
        check_len(self.n, v.len())?;
        Ok(self
            .mass
            .iter()
            .zip(v.iter())
            .map(|(m, x)| m * x.abs())
            .sum())
    }

    /// Discrete pairing `sum_i m_i v_i w_i`.
    pub fn pairing(&self, v: &NodeVector, w: &NodeVector) -> Result<f64> {
        check_len(self.n, v.len())?;
        check_len(self.n, w.len())?;
        Ok(self
            .mass
            .iter()
            .zip(v.iter().zip(w.iter()))
            .map(|(m, (x, y))| m * x * y)
            .sum())
    }

    /// Piecewise-linear interpolation of node values with zero boundary values.
    pub fn interpolate_zero_bc(&self, values: &[f64], x: f64) -> f64 {
        if x <= self.a || x >= self.b {
            return 0.0;
        }
        let s = (x - self.a) / self.h;
        let cell = (s.floor() as usize).min(self.n);
        let t = s - cell as f64;
        let left = if cell == 0 { 0.0 } else { values[cell - 1] };
        let right = if cell >= self.n { 0.0 } else { values[cell] };
        (1.0 - t) * left + t * right
    }

    /// Piecewise-linear interpolation of node values, extended by the nearest
    /// node value on the two boundary cells.
    pub fn interpolate_const_ext(&self, values: &[f64], x: f64) -> f64 {
        let s = (x - self.a) / self.h;
        if s <= 1.0 {
            return values[0];
        }
        if s >= self.n as f64 {
            return values[self.n - 1];
        }
        let cell = s.floor() as usize;
        let t = s - cell as f64;
        (1.0 - t) * values[cell - 1] + t * values[cell]
    }
}
