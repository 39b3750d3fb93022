//! Discrete Dirichlet operators `A ~ -L` acting on node vectors.
//!
//! The discrete equation `-Lu = rho` (with `rho` a density with respect to the
//! lumped mass) reads `A u = rho`. Every operator here is a symmetric
//! M-matrix: positive definite, nonpositive off-diagonal, nonnegative row
//! sums. These are the properties the comparison and maximum principles of
//! the solvers rely on.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measures::MeasureData;
use crate::NodeVector;

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    /// `tridiag(-1, 2, -1) / h^2`.
    DirichletLaplacian,
    /// `(A_lap)^{alpha/2}` through the eigendecomposition of the Laplacian.
    SpectralFractional { alpha: f64 },
    /// Fractional centred difference for the integral fractional Laplacian
    /// with zero exterior data: `A_ij = g_{|i-j|} / h^alpha`.
    RestrictedFractional { alpha: f64 },
    /// `A_base + diag(rho_killing)`.
    KillingPerturbed {
        base: Box<OperatorSpec>,
        killing: MeasureData,
    },
}

impl OperatorSpec {
    pub fn killing(base: OperatorSpec, killing: MeasureData) -> Self {
        Self::KillingPerturbed {
            base: Box::new(base),
            killing,
        }
    }

    /// Stable exponent of the operator (2 for the Laplacian and its killing
    /// perturbations).
    pub fn alpha(&self) -> f64 {
        match self {
            Self::DirichletLaplacian => 2.0,
            Self::SpectralFractional { alpha } | Self::RestrictedFractional { alpha } => *alpha,
            Self::KillingPerturbed { base, .. } => base.alpha(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::DirichletLaplacian => "dirichlet_laplacian",
            Self::SpectralFractional { .. } => "spectral_fractional",
            Self::RestrictedFractional { .. } => "restricted_fractional",
            Self::KillingPerturbed { .. } => "killing_perturbed",
        }
    }

    pub fn is_laplacian(&self) -> bool {
        match self {
            Self::DirichletLaplacian => true,
            Self::SpectralFractional { alpha } | Self::RestrictedFractional { alpha } => {
                *alpha == 2.0
            }
            Self::KillingPerturbed { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::DirichletLaplacian => Ok(()),
            Self::SpectralFractional { alpha } | Self::RestrictedFractional { alpha } => {
                if alpha.is_finite() && *alpha > 0.0 && *alpha <= 2.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidOperator(format!(
                        "alpha must lie in (0, 2], got {alpha}"
                    )))
                }
            }
            Self::KillingPerturbed { base, killing } => {
                base.validate()?;
                if killing.is_nonnegative() {
                    Ok(())
                } else {
                    Err(Error::NegativeMeasure("killing measure".into()))
                }
            }
        }
    }
}

/// An operator assembled on a grid together with its spectral data and a
/// Cholesky factorization for potential solves.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    spec: OperatorSpec,
    grid: Grid,
    matrix: DMatrix<f64>,
    eigvals: NodeVector,
    eigvecs: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

pub fn laplacian_matrix(grid: &Grid) -> DMatrix<f64> {
    let n = grid.len();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * inv_h2
        } else if i.abs_diff(j) == 1 {
            -inv_h2
        } else {
            0.0
        }
    })
}

/// Coefficients `g_k`, `k = 0..n`, of the fractional centred difference.
///
/// `g_0 = Gamma(alpha + 1) / Gamma(alpha/2 + 1)^2` and
/// `g_k = g_{k-1} (k - 1 - alpha/2) / (k + alpha/2)`. For `alpha = 2` this is
/// `(2, -1, 0, 0, ...)`.
pub fn fractional_centered_coefficients(alpha: f64, n: usize) -> Vec<f64> {
    let half = 0.5 * alpha;
    let lg = statrs::function::gamma::ln_gamma;
    let mut g = Vec::with_capacity(n);
    g.push((lg(alpha + 1.0) - 2.0 * lg(half + 1.0)).exp());
    for k in 1..n {
        let kf = k as f64;
        let prev = g[k - 1];
        g.push(prev * (kf - 1.0 - half) / (kf + half));
    }
    g
}

fn spectral_power(base: &DMatrix<f64>, power: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(base.clone());
    let scaled = eig.eigenvalues.map(|l| l.powf(power));
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&scaled) * q.transpose();
    symmetrize(&mut out);
    out
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn assemble_matrix(spec: &OperatorSpec, grid: &Grid) -> Result<DMatrix<f64>> {
    Ok(match spec {
        OperatorSpec::DirichletLaplacian => laplacian_matrix(grid),
        OperatorSpec::SpectralFractional { alpha } => {
            spectral_power(&laplacian_matrix(grid), 0.5 * alpha)
        }
        OperatorSpec::RestrictedFractional { alpha } => {
            let n = grid.len();
            let g = fractional_centered_coefficients(*alpha, n);
            let scale = grid.h().powf(-alpha);
            DMatrix::from_fn(n, n, |i, j| g[i.abs_diff(j)] * scale)
        }
        OperatorSpec::KillingPerturbed { base, killing } => {
            let mut m = assemble_matrix(base, grid)?;
            let rho = killing.lump(grid)?;
            for i in 0..grid.len() {
                m[(i, i)] += rho[i];
            }
            m
        }
    })
}

impl AssembledOperator {
    pub fn assemble(spec: OperatorSpec, grid: &Grid) -> Result<Self> {
        spec.validate()?;
        let matrix = assemble_matrix(&spec, grid)?;
        let eig = SymmetricEigen::new(matrix.clone());
        let mut order: Vec<usize> = (0..grid.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigvals =
            NodeVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
        if eigvals[0] <= 0.0 {
            return Err(Error::InvalidOperator(format!(
                "operator is not positive definite (smallest eigenvalue {:e})",
                eigvals[0]
            )));
        }
        // m-orthonormal: V^T diag(m) V = I with m_i = h.
        let inv_sqrt_h = 1.0 / grid.h().sqrt();
        let eigvecs = DMatrix::from_fn(grid.len(), grid.len(), |r, c| {
            eig.eigenvectors[(r, order[c])] * inv_sqrt_h
        });
        let chol = Cholesky::new(matrix.clone()).ok_or_else(|| {
            Error::Singular("Cholesky factorization of the operator failed".into())
        })?;
        Ok(Self {
            spec,
            grid: grid.clone(),
            matrix,
            eigvals,
            eigvecs,
            chol,
        })
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Eigenvalues in ascending order.
    pub fn eigvals(&self) -> &NodeVector {
        &self.eigvals
    }

    /// Eigenvectors (columns, matching [`Self::eigvals`]), orthonormal in the
    /// mass-weighted inner product.
    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn apply(&self, u: &NodeVector) -> NodeVector {
        &self.matrix * u
    }

    /// Solves `A u = rho`.
    pub fn solve(&self, rho: &NodeVector) -> NodeVector {
        self.chol.solve(rho)
    }

    /// Potential `(-L)^{-1} mu` of a measure.
    pub fn potential(&self, mu: &MeasureData) -> Result<NodeVector> {
        let rho = mu.lump(&self.grid)?;
        Ok(self.solve(&rho))
    }

    /// Smallest entry of `A^{-1}`; nonnegative for an inverse-positive operator.
    pub fn inverse_min_entry(&self) -> f64 {
        let inv = self.chol.inverse();
        inv.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Discrete energy `sum_i m_i (A v)_i v_i`.
    pub fn energy(&self, v: &NodeVector) -> f64 {
        self.grid.h() * v.dot(&(&self.matrix * v))
    }
}

/// Solves `(A_base + diag(rho)) z = rho` for a nonnegative killing measure and
/// reports whether `0 <= z <= 1` holds up to `tol`.
pub fn check_killing_contraction(
    base: &AssembledOperator,
    mu: &MeasureData,
    tol: f64,
) -> Result<(NodeVector, bool)> {
    if !mu.is_nonnegative() {
        return Err(Error::NegativeMeasure("killing measure".into()));
    }
    let rho = mu.lump(base.grid())?;
    let mut m = base.matrix().clone();
    for i in 0..rho.len() {
        m[(i, i)] += rho[i];
    }
    let z = Cholesky::new(m)
        .ok_or_else(|| Error::Singular("killing-perturbed operator".into()))?
        .solve(&rho);
    let ok = z.iter().all(|&zi| zi >= -tol && zi <= 1.0 + tol);
    Ok((z, ok))
}

/// Ratio of the unit-source potential to `delta^{alpha/2}`.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub operator: String,
    pub alpha: f64,
    pub n: usize,
    pub ratio: Vec<f64>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `int delta^{alpha/2} d|mu|`.
    pub weighted_norm: f64,
}

pub fn weighted_admissibility_report(
    op: &AssembledOperator,
    mu: &MeasureData,
) -> Result<AdmissibilityReport> {
    if matches!(op.spec(), OperatorSpec::KillingPerturbed { .. }) {
        return Err(Error::InvalidOperator(
            "admissibility report needs an unperturbed operator".into(),
        ));
    }
    let grid = op.grid();
    mu.validate(grid)?;
    let s = 0.5 * op.spec().alpha();
    let r1 = op.solve(&NodeVector::from_element(grid.len(), 1.0));
    let ratio: Vec<f64> = r1
        .iter()
        .zip(grid.delta())
        .map(|(r, d)| r / d.powf(s))
        .collect();
    let min_ratio = ratio.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dist = |x: f64| (x - grid.a()).min(grid.b() - x);
    let weighted_norm = grid
        .mass()
        .iter()
        .zip(mu.density.iter().zip(grid.delta()))
        .map(|(m, (d, del))| m * d.abs() * del.powf(s))
        .sum::<f64>()
        + mu.atoms
            .iter()
            .map(|a| a.weight.abs() * dist(a.position).powf(s))
            .sum::<f64>();
    Ok(AdmissibilityReport {
        operator: op.spec().name().to_string(),
        alpha: op.spec().alpha(),
        n: grid.len(),
        ratio,
        min_ratio,
        max_ratio,
        weighted_norm,
    })
}

/// Admissibility reports on `(a, b)` for growing node counts.
pub fn admissibility_refinement(
    spec: &OperatorSpec,
    a: f64,
    b: f64,
    sizes: &[usize],
) -> Result<Vec<AdmissibilityReport>> {
    sizes
        .iter()
        .map(|&n| {
            let grid = Grid::new(a, b, n)?;
            let op = AssembledOperator::assemble(spec.clone(), &grid)?;
            weighted_admissibility_report(&op, &MeasureData::zero(n))
        })
        .collect()
}
