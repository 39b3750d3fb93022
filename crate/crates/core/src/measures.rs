//! Finite signed measures on the grid: a density with respect to the lumped
//! mass plus a list of point atoms.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::NodeVector;

/// A point mass `weight * delta_position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: f64,
    pub weight: f64,
}

impl Atom {
    pub fn new(position: f64, weight: f64) -> Self {
        Self { position, weight }
    }
}

/// `mu = density * m + sum_k weight_k delta_{position_k}`.
///
/// The density is expressed with respect to the lumped masses, so the cell
/// around node `i` carries `density_i * m_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureData {
    pub density: NodeVector,
    pub atoms: Vec<Atom>,
}

impl MeasureData {
    pub fn zero(n: usize) -> Self {
        Self {
            density: NodeVector::zeros(n),
            atoms: Vec::new(),
        }
    }

    pub fn from_density(density: NodeVector) -> Self {
        Self {
            density,
            atoms: Vec::new(),
        }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self::from_density(NodeVector::from_element(n, value))
    }

    /// A single atom with zero density.
    pub fn dirac(n: usize, position: f64, weight: f64) -> Self {
        Self::zero(n).with_atom(position, weight)
    }

    pub fn with_atom(mut self, position: f64, weight: f64) -> Self {
        self.atoms.push(Atom::new(position, weight));
        self
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    /// Checks the density length and that atoms sit strictly inside the domain.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        check_len(grid.len(), self.density.len())?;
        for atom in &self.atoms {
            if !grid.contains(atom.position) {
                return Err(Error::AtomOutsideDomain {
                    position: atom.position,
                    a: grid.a(),
                    b: grid.b(),
                });
            }
            if !atom.weight.is_finite() {
                return Err(Error::Precondition(format!(
                    "atom at {} has non-finite weight",
                    atom.position
                )));
            }
        }
        if self.density.iter().any(|d| !d.is_finite()) {
            return Err(Error::Precondition("density has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.density.iter().all(|&d| d >= 0.0) && self.atoms.iter().all(|a| a.weight >= 0.0)
    }

    pub fn negate(&self) -> Self {
        Self {
            density: -&self.density,
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom::new(a.position, -a.weight))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        Self {
            density: &self.density + &other.density,
            atoms,
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            density: &self.density * factor,
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom::new(a.position, a.weight * factor))
                .collect(),
        }
    }

    /// Atoms at identical positions merged, zero weights dropped, order of
    /// first appearance kept.
    pub fn merged_atoms(&self) -> Vec<Atom> {
        let mut out: Vec<Atom> = Vec::with_capacity(self.atoms.len());
        for atom in &self.atoms {
            match out.iter_mut().find(|a| a.position == atom.position) {
                Some(existing) => existing.weight += atom.weight,
                None => out.push(*atom),
            }
        }
        out.retain(|a| a.weight != 0.0);
        out
    }

    /// `sum_i m_i |density_i| + sum_k |weight_k|`, after merging coincident atoms.
    pub fn total_variation(&self, grid: &Grid) -> f64 {
        let dens: f64 = grid
            .mass()
            .iter()
            .zip(self.density.iter())
            .map(|(m, d)| m * d.abs())
            .sum();
        dens + self
            .merged_atoms()
            .iter()
            .map(|a| a.weight.abs())
            .sum::<f64>()
    }

    /// Signed total mass `sum_i m_i density_i + sum_k weight_k`.
    pub fn total_mass(&self, grid: &Grid) -> f64 {
        let dens: f64 = grid
            .mass()
            .iter()
            .zip(self.density.iter())
            .map(|(m, d)| m * d)
            .sum();
        dens + self.atoms.iter().map(|a| a.weight).sum::<f64>()
    }

    /// Positive and negative parts.
    pub fn jordan_decompose(&self) -> SignedDecomposition {
        let atoms = self.merged_atoms();
        let plus = MeasureData {
            density: self.density.map(|d| d.max(0.0)),
            atoms: atoms.iter().filter(|a| a.weight > 0.0).copied().collect(),
        };
        let minus = MeasureData {
            density: self.density.map(|d| (-d).max(0.0)),
            atoms: atoms
                .iter()
                .filter(|a| a.weight < 0.0)
                .map(|a| Atom::new(a.position, -a.weight))
                .collect(),
        };
        SignedDecomposition { plus, minus }
    }

    /// Node density `rho` with `sum_i m_i rho_i` equal to the signed total mass.
    ///
    /// An atom between two interior nodes is split linearly between them; an
    /// atom in a boundary cell goes entirely to the single interior neighbour.
    pub fn lump(&self, grid: &Grid) -> Result<NodeVector> {
        self.validate(grid)?;
        let n = grid.len();
        let mut rho = self.density.clone();
        let mass = grid.mass();
        for atom in &self.atoms {
            let s = (atom.position - grid.a()) / grid.h();
            // Node j (1-based) sits at s = j.
            let left = s.floor() as usize;
            let t = s - left as f64;
            if left == 0 {
                rho[0] += atom.weight / mass[0];
            } else if left >= n {
                rho[n - 1] += atom.weight / mass[n - 1];
            } else if t == 0.0 {
                rho[left - 1] += atom.weight / mass[left - 1];
            } else {
                rho[left - 1] += (1.0 - t) * atom.weight / mass[left - 1];
                rho[left] += t * atom.weight / mass[left];
            }
        }
        Ok(rho)
    }
}

/// Jordan decomposition `mu = plus - minus` into nonnegative, mutually
/// singular parts.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedDecomposition {
    pub plus: MeasureData,
    pub minus: MeasureData,
}

impl SignedDecomposition {
    pub fn zero(n: usize) -> Self {
        Self {
            plus: MeasureData::zero(n),
            minus: MeasureData::zero(n),
        }
    }

    /// Node-level decomposition of a lumped density.
    pub fn from_density(rho: &NodeVector) -> Self {
        MeasureData::from_density(rho.clone()).jordan_decompose()
    }

    /// Density of `plus - minus` (both parts must be atom-free).
    pub fn signed_density(&self) -> NodeVector {
        &self.plus.density - &self.minus.density
    }

    pub fn total_variation(&self, grid: &Grid) -> f64 {
        self.plus.total_variation(grid) + self.minus.total_variation(grid)
    }

    pub fn recombine(&self) -> MeasureData {
        self.plus.add(&self.minus.negate())
    }
}
