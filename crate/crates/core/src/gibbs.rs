//! Finite expert sets and log-domain distributions over them.
//!
//! An [`ExpertTable`] stores every expert as its vector of predictions on a
//! finite set of input cells. A [`LogWeights`] is a normalized probability
//! vector over the experts kept as log-masses, so that Gibbs updates with
//! large cumulative losses never underflow.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::losses::LossSpec;
use crate::math::{exp, ext_float, ln, log_sum_exp};
use crate::rng::unit_f64;

/// Tolerance on `|logsumexp(logw)|` accepted by [`LogWeights::new`].
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// One observation `z = (x, y)` with `x` given by its cell identifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub cell: u64,
    pub y: f64,
}

impl Outcome {
    pub const fn new(cell: u64, y: f64) -> Self {
        Self { cell, y }
    }
}

/// Predictions of `d` experts on `K` input cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExpertTableRepr", into = "ExpertTableRepr")]
pub struct ExpertTable {
    cells: Vec<u64>,
    predictions: Vec<Vec<f64>>,
    index: BTreeMap<u64, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpertTableRepr {
    cells: Vec<u64>,
    predictions: Vec<Vec<f64>>,
}

impl TryFrom<ExpertTableRepr> for ExpertTable {
    type Error = Error;
    fn try_from(r: ExpertTableRepr) -> Result<Self> {
        ExpertTable::new(r.cells, r.predictions)
    }
}

impl From<ExpertTable> for ExpertTableRepr {
    fn from(t: ExpertTable) -> Self {
        ExpertTableRepr {
            cells: t.cells,
            predictions: t.predictions,
        }
    }
}

impl ExpertTable {
    /// `predictions[j][k]` is expert `j`'s prediction on `cells[k]`.
    pub fn new(cells: Vec<u64>, predictions: Vec<Vec<f64>>) -> Result<Self> {
        if cells.is_empty() {
            return Err(invalid("cells", "need at least one cell"));
        }
        if predictions.is_empty() {
            return Err(invalid("predictions", "need at least one expert"));
        }
        let mut index = BTreeMap::new();
        for (k, &c) in cells.iter().enumerate() {
            if index.insert(c, k).is_some() {
                return Err(invalid("cells", alloc::format!("duplicate cell id {c}")));
            }
        }
        for row in &predictions {
            if row.len() != cells.len() {
                return Err(Error::LengthMismatch(row.len(), cells.len()));
            }
            if row.iter().any(|v| v.is_nan()) {
                return Err(Error::NaN("expert predictions"));
            }
        }
        Ok(Self {
            cells,
            predictions,
            index,
        })
    }

    /// Tabulates callable experts `f(j, cell)` for `j < d` on the given cells.
    pub fn from_fn(cells: Vec<u64>, d: usize, mut f: impl FnMut(usize, u64) -> f64) -> Result<Self> {
        let predictions = (0..d)
            .map(|j| cells.iter().map(|&c| f(j, c)).collect())
            .collect();
        Self::new(cells, predictions)
    }

    /// Experts that predict a constant on a single cell `0`.
    pub fn constants(values: &[f64]) -> Result<Self> {
        Self::new(alloc::vec![0], values.iter().map(|&v| alloc::vec![v]).collect())
    }

    pub fn num_experts(&self) -> usize {
        self.predictions.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[u64] {
        &self.cells
    }

    pub fn predictions(&self) -> &[Vec<f64>] {
        &self.predictions
    }

    /// Prediction of expert `j` on the cell at position `k`.
    #[inline]
    pub fn prediction(&self, j: usize, k: usize) -> f64 {
        self.predictions[j][k]
    }

    /// Position of a cell identifier.
    pub fn cell_index(&self, cell: u64) -> Result<usize> {
        self.index.get(&cell).copied().ok_or(Error::UnknownCell(cell))
    }

    /// Checks that every prediction lies in the loss's prediction range.
    pub fn check_range(&self, loss: &LossSpec) -> Result<()> {
        let range = loss.prediction_range();
        if self.predictions.iter().flatten().all(|&v| range.contains(v)) {
            Ok(())
        } else {
            Err(invalid("predictions", "outside the loss's prediction range"))
        }
    }
}

/// Normalized distribution over experts stored as log-masses; `-inf` means
/// zero mass.
#[derive(Clone, Debug, PartialEq)]
pub struct LogWeights {
    logw: Vec<f64>,
}

impl Serialize for LogWeights {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        ext_float::vec::serialize(&self.logw, s)
    }
}

impl<'de> Deserialize<'de> for LogWeights {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let raw = ext_float::vec::deserialize(d)?;
        LogWeights::new(raw).map_err(serde::de::Error::custom)
    }
}

impl LogWeights {
    /// Accepts a log-mass vector that is already normalized within
    /// [`NORMALIZATION_TOL`], renormalizing it when the residual is visible.
    pub fn new(logw: Vec<f64>) -> Result<Self> {
        let z = Self::check_entries(&logw)?;
        if z.abs() > NORMALIZATION_TOL {
            return Err(invalid("logw", "log-masses are not normalized"));
        }
        if z.abs() <= 1e-14 {
            return Ok(Self { logw });
        }
        Ok(Self::normalized(logw))
    }

    /// Normalizes arbitrary log-masses.
    pub fn from_unnormalized(logw: Vec<f64>) -> Result<Self> {
        Self::check_entries(&logw)?;
        Ok(Self::normalized(logw))
    }

    /// Normalizes nonnegative masses.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(invalid("probs", "masses must be nonnegative numbers"));
        }
        Self::from_unnormalized(probs.iter().map(|&p| ln(p)).collect())
    }

    pub fn uniform(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d", "need at least one expert"));
        }
        Ok(Self {
            logw: alloc::vec![-ln(d as f64); d],
        })
    }

    pub fn dirac(d: usize, j: usize) -> Result<Self> {
        if j >= d {
            return Err(invalid("j", "index out of range"));
        }
        let mut logw = alloc::vec![f64::NEG_INFINITY; d];
        logw[j] = 0.0;
        Ok(Self { logw })
    }

    fn check_entries(logw: &[f64]) -> Result<f64> {
        if logw.is_empty() {
            return Err(invalid("logw", "need at least one expert"));
        }
        if logw.iter().any(|v| v.is_nan()) {
            return Err(Error::NaN("log weights"));
        }
        if logw.contains(&f64::INFINITY) {
            return Err(invalid("logw", "+inf log-mass"));
        }
        let z = log_sum_exp(logw);
        if z == f64::NEG_INFINITY {
            return Err(Error::DegeneratePosterior);
        }
        Ok(z)
    }

    /// Subtracts the maximum first and the log of the residual sum second,
    /// so the result keeps full precision even when the raw values are huge.
    /// Callers guarantee at least one finite entry.
    fn normalized(mut logw: Vec<f64>) -> Self {
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in &mut logw {
            *v -= max;
        }
        let z = log_sum_exp(&logw);
        for v in &mut logw {
            *v -= z;
        }
        Self { logw }
    }

    pub fn len(&self) -> usize {
        self.logw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logw.is_empty()
    }

    pub fn log_masses(&self) -> &[f64] {
        &self.logw
    }

    #[inline]
    pub fn prob(&self, j: usize) -> f64 {
        exp(self.logw[j])
    }

    pub fn probs(&self) -> Vec<f64> {
        self.logw.iter().map(|&v| exp(v)).collect()
    }

    /// `E_ρ h` with `0 * inf = 0`.
    pub fn expectation(&self, h: &[f64]) -> f64 {
        self.logw
            .iter()
            .zip(h)
            .filter(|(lw, _)| **lw != f64::NEG_INFINITY)
            .map(|(&lw, &v)| exp(lw) * v)
            .sum()
    }

    /// Index of the largest mass (first on ties).
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (j, &v) in self.logw.iter().enumerate() {
            if v > self.logw[best] {
                best = j;
            }
        }
        best
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.logw
    }
}

fn check_h(h: &[f64], d: usize) -> Result<()> {
    if h.len() != d {
        return Err(Error::LengthMismatch(h.len(), d));
    }
    if h.iter().any(|v| v.is_nan()) {
        return Err(Error::NaN("gibbs_posterior h"));
    }
    Ok(())
}

/// Unnormalized `log π(g) - λ h(g)`, with `+inf` losses giving zero mass and
/// `λ = 0` ignoring `h` entirely.
fn tilted(prior: &LogWeights, h: &[f64], lambda: f64) -> Vec<f64> {
    prior
        .logw
        .iter()
        .zip(h)
        .map(|(&lp, &v)| {
            if lambda == 0.0 || lp == f64::NEG_INFINITY {
                lp
            } else if v == f64::INFINITY {
                f64::NEG_INFINITY
            } else {
                lp - lambda * v
            }
        })
        .collect()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_nan() {
        return Err(Error::NaN("lambda"));
    }
    if lambda < 0.0 || lambda == f64::INFINITY {
        return Err(invalid("lambda", "must be finite and nonnegative"));
    }
    Ok(())
}

/// Gibbs distribution `π_{-λh}`: `dπ_{-λh}/dπ ∝ exp(-λ h)`.
pub fn gibbs_posterior(prior: &LogWeights, h: &[f64], lambda: f64) -> Result<LogWeights> {
    check_lambda(lambda)?;
    check_h(h, prior.len())?;
    let t = tilted(prior, h, lambda);
    if t.iter().all(|&v| v == f64::NEG_INFINITY) {
        return Err(Error::DegeneratePosterior);
    }
    Ok(LogWeights::normalized(t))
}

/// `log E_{g∼π} exp(-λ h(g))`.
pub fn log_partition(prior: &LogWeights, h: &[f64], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_h(h, prior.len())?;
    Ok(log_sum_exp(&tilted(prior, h, lambda)))
}

/// `K(ρ, π) = E_ρ log(ρ/π)`, `+inf` when ρ charges a π-null expert.
pub fn kl_divergence(rho: &LogWeights, pi: &LogWeights) -> Result<f64> {
    if rho.len() != pi.len() {
        return Err(Error::LengthMismatch(rho.len(), pi.len()));
    }
    let mut kl = 0.0;
    for (&r, &p) in rho.logw.iter().zip(&pi.logw) {
        if r == f64::NEG_INFINITY {
            continue;
        }
        if p == f64::NEG_INFINITY {
            return Ok(f64::INFINITY);
        }
        kl += exp(r) * (r - p);
    }
    Ok(kl.max(0.0))
}

/// `E_ρ h + K(ρ, π)`, the functional minimized by the Gibbs distribution.
pub fn variational_objective(rho: &LogWeights, pi: &LogWeights, h: &[f64]) -> Result<f64> {
    check_h(h, pi.len())?;
    let kl = kl_divergence(rho, pi)?;
    Ok(rho.expectation(h) + kl)
}

/// `[E_ρ h + K(ρ, π)] - [-log E_π exp(-h)]` for an arbitrary ρ. Nonnegative,
/// and zero exactly at `ρ = π_{-h}`.
pub fn variational_gap(rho: &LogWeights, pi: &LogWeights, h: &[f64]) -> Result<f64> {
    let lhs = variational_objective(rho, pi, h)?;
    let z = log_partition(pi, h, 1.0)?;
    if z == f64::NEG_INFINITY {
        return Err(Error::DegeneratePosterior);
    }
    Ok(lhs + z)
}

/// Gap of the duality formula evaluated at the Gibbs distribution `π_{-h}`.
pub fn duality_gap(pi: &LogWeights, h: &[f64]) -> Result<f64> {
    let rho = gibbs_posterior(pi, h, 1.0)?;
    variational_gap(&rho, pi, h)
}

/// Draws an expert index from `ρ`.
pub fn sample<R: RngCore + ?Sized>(rho: &LogWeights, rng: &mut R) -> usize {
    let u = unit_f64(rng);
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &lw) in rho.logw.iter().enumerate() {
        if lw == f64::NEG_INFINITY {
            continue;
        }
        acc += exp(lw);
        last = j;
        if u < acc {
            return j;
        }
    }
    last
}

/// `E_{g∼ρ} g(x)` on the cell with identifier `cell`.
pub fn mixture_predict(rho: &LogWeights, experts: &ExpertTable, cell: u64) -> Result<f64> {
    if rho.len() != experts.num_experts() {
        return Err(Error::LengthMismatch(rho.len(), experts.num_experts()));
    }
    let k = experts.cell_index(cell)?;
    Ok(mixture_at(rho, experts, k))
}

/// Mixture prediction on the cell at position `k`.
pub fn mixture_at(rho: &LogWeights, experts: &ExpertTable, k: usize) -> f64 {
    let mut s = 0.0;
    for (j, &lw) in rho.logw.iter().enumerate() {
        if lw != f64::NEG_INFINITY {
            s += exp(lw) * experts.prediction(j, k);
        }
    }
    let col = experts.predictions.iter().map(|r| r[k]);
    let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    s.clamp(lo, hi)
}
