//! Finite-support joint distributions of `(x, y)` with exact risk sums.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gibbs::{ExpertTable, Outcome};
use crate::losses::LossSpec;
use crate::rng::unit_f64;

/// Tolerance on the total mass of a distribution.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub cell: u64,
    pub y: f64,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Atom>", into = "Vec<Atom>")]
pub struct DiscreteDistribution {
    atoms: Vec<Atom>,
}

impl TryFrom<Vec<Atom>> for DiscreteDistribution {
    type Error = Error;
    fn try_from(atoms: Vec<Atom>) -> Result<Self> {
        Self::new(atoms)
    }
}

impl From<DiscreteDistribution> for Vec<Atom> {
    fn from(d: DiscreteDistribution) -> Self {
        d.atoms
    }
}

impl DiscreteDistribution {
    /// Atoms with positive mass summing to one within [`MASS_TOL`]; zero-mass
    /// atoms are dropped.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.iter().any(|a| a.prob.is_nan() || a.y.is_nan()) {
            return Err(Error::NaN("distribution atoms"));
        }
        if atoms.iter().any(|a| a.prob < 0.0) {
            return Err(invalid("prob", "negative mass"));
        }
        let atoms: Vec<Atom> = atoms.into_iter().filter(|a| a.prob > 0.0).collect();
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(invalid("prob", alloc::format!("total mass {total} differs from 1")));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).sum()
    }

    /// Marginal mass of every cell, ordered by cell id.
    pub fn marginal(&self) -> BTreeMap<u64, f64> {
        let mut m = BTreeMap::new();
        for a in &self.atoms {
            *m.entry(a.cell).or_insert(0.0) += a.prob;
        }
        m
    }

    /// `E ℓ(Y, f(X))`.
    pub fn risk(&self, loss: &LossSpec, f: impl Fn(u64) -> f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| {
                let v = loss.value(a.y, f(a.cell));
                if v == f64::INFINITY {
                    f64::INFINITY
                } else {
                    a.prob * v
                }
            })
            .sum()
    }

    /// Risk of every expert of the table. Cells outside the table are an error.
    pub fn expert_risks(&self, loss: &LossSpec, experts: &ExpertTable) -> Result<Vec<f64>> {
        let idx: Vec<usize> = self
            .atoms
            .iter()
            .map(|a| experts.cell_index(a.cell))
            .collect::<Result<_>>()?;
        Ok((0..experts.num_experts())
            .map(|j| {
                self.atoms
                    .iter()
                    .zip(&idx)
                    .map(|(a, &k)| {
                        let v = loss.value(a.y, experts.prediction(j, k));
                        if v == f64::INFINITY {
                            f64::INFINITY
                        } else {
                            a.prob * v
                        }
                    })
                    .sum()
            })
            .collect())
    }

    /// Risk of the prediction vector `preds[k]` on `experts.cells()[k]`.
    pub fn table_risk(&self, loss: &LossSpec, experts: &ExpertTable, preds: &[f64]) -> Result<f64> {
        let mut r = 0.0;
        for a in &self.atoms {
            let v = loss.value(a.y, preds[experts.cell_index(a.cell)?]);
            r += if v == f64::INFINITY { f64::INFINITY } else { a.prob * v };
        }
        Ok(r)
    }

    /// Smallest risk over all functions of `x`, for distributions whose
    /// conditional law of `Y` takes at most two values per cell.
    pub fn bayes_risk_two_point(&self, loss: &LossSpec) -> Result<f64> {
        let mut per_cell: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
        for a in &self.atoms {
            let e = per_cell.entry(a.cell).or_default();
            match e.iter_mut().find(|(y, _)| *y == a.y) {
                Some(slot) => slot.1 += a.prob,
                None => e.push((a.y, a.prob)),
            }
        }
        let mut r = 0.0;
        for outs in per_cell.values() {
            match outs.as_slice() {
                [_] => {}
                [(y1, m1), (y2, m2)] => {
                    let mass = m1 + m2;
                    r += mass * loss.phi(m1 / mass, *y1, *y2)?;
                }
                _ => return Err(Error::Unsupported("more than two outputs in a cell")),
            }
        }
        Ok(r)
    }

    /// Draws one observation.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Outcome {
        let u = unit_f64(rng);
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += a.prob;
            if u < acc {
                return Outcome::new(a.cell, a.y);
            }
        }
        let last = self.atoms[self.atoms.len() - 1];
        Outcome::new(last.cell, last.y)
    }

    pub fn sample_n<R: RngCore + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Outcome> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}
