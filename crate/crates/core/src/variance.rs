//! Variance functions `δ_λ(z, g, g')` and a numeric checker for the variance
//! inequality
//!
//! ```text
//! E_{g'∼π̂(ρ)} log E_{g∼ρ} exp(λ [L(z, g') - L(z, g) - δ_λ(z, g, g')]) ≤ 0.
//! ```
//!
//! The map `π̂` is selected by [`PiHat`]: the identity, the Dirac mass at the
//! mixture `E_ρ g`, or a substitution prediction found by grid search.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::aggregators::{algorithm_b_substitution, SubstitutionGrid};
use crate::error::{invalid, Error, Result};
use crate::gibbs::{mixture_at, ExpertTable, LogWeights, Outcome};
use crate::losses::{power_span, LossSpec};
use crate::math::{abs, exp, log_sum_exp, powf};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VarianceKind {
    Zero,
    /// `λ (L(z,g) - L(z,g'))² / 2`.
    Bernstein,
    /// `λ span² / 8` for losses confined to an interval of width `span`.
    HoeffdingConst { span: f64 },
    /// Truncation term for unbounded outputs: zero when `|y| ≤ big_b`,
    /// otherwise `min_ζ [ζΔ(y) + (1-ζ)² λ Δ(y)² / 2]` with `Δ` the span of
    /// `ℓ(y, ·)` over `[-b, b]`.
    HeavyTail { b: f64, big_b: f64 },
}

/// The map `ρ ↦ π̂(ρ)` paired with a variance function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiHat {
    Identity,
    DiracMixture,
    Substitution,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VarianceFnRepr", into = "VarianceFnRepr")]
pub struct VarianceFn {
    pub kind: VarianceKind,
    pub pi_hat: PiHat,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VarianceFnRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    span: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(default, rename = "B", skip_serializing_if = "Option::is_none")]
    big_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pi_hat: Option<PiHat>,
}

impl TryFrom<VarianceFnRepr> for VarianceFn {
    type Error = Error;

    fn try_from(r: VarianceFnRepr) -> Result<Self> {
        let kind = match r.kind.as_str() {
            "zero" => VarianceKind::Zero,
            "bernstein" => VarianceKind::Bernstein,
            "hoeffding_const" => VarianceKind::HoeffdingConst {
                span: r.span.ok_or_else(|| invalid("span", "hoeffding_const requires span"))?,
            },
            "heavy_tail" => VarianceKind::HeavyTail {
                b: r.b.ok_or_else(|| invalid("b", "heavy_tail requires b"))?,
                big_b: r.big_b.ok_or_else(|| invalid("B", "heavy_tail requires B"))?,
            },
            other => {
                return Err(invalid("kind", alloc::format!("unknown variance function `{other}`")))
            }
        };
        let pi_hat = r.pi_hat.unwrap_or(match kind {
            VarianceKind::Zero | VarianceKind::HeavyTail { .. } => PiHat::DiracMixture,
            _ => PiHat::Identity,
        });
        VarianceFn::new(kind, pi_hat)
    }
}

impl From<VarianceFn> for VarianceFnRepr {
    fn from(v: VarianceFn) -> Self {
        let (kind, span, b, big_b) = match v.kind {
            VarianceKind::Zero => ("zero", None, None, None),
            VarianceKind::Bernstein => ("bernstein", None, None, None),
            VarianceKind::HoeffdingConst { span } => ("hoeffding_const", Some(span), None, None),
            VarianceKind::HeavyTail { b, big_b } => ("heavy_tail", None, Some(b), Some(big_b)),
        };
        VarianceFnRepr {
            kind: kind.into(),
            span,
            b,
            big_b,
            pi_hat: Some(v.pi_hat),
        }
    }
}

impl VarianceFn {
    pub fn new(kind: VarianceKind, pi_hat: PiHat) -> Result<Self> {
        match kind {
            VarianceKind::HoeffdingConst { span } if !(span > 0.0 && span.is_finite()) => {
                return Err(invalid("span", "must be positive"));
            }
            VarianceKind::HeavyTail { b, big_b } if !(b > 0.0 && b <= big_b && big_b.is_finite()) => {
                return Err(invalid("b", "heavy_tail requires 0 < b <= B"));
            }
            VarianceKind::Zero if pi_hat == PiHat::Identity => {
                return Err(invalid("pi_hat", "zero variance needs dirac_mixture or substitution"));
            }
            _ => {}
        }
        Ok(Self { kind, pi_hat })
    }

    pub fn zero() -> Self {
        Self {
            kind: VarianceKind::Zero,
            pi_hat: PiHat::DiracMixture,
        }
    }

    pub fn bernstein() -> Self {
        Self {
            kind: VarianceKind::Bernstein,
            pi_hat: PiHat::Identity,
        }
    }

    pub fn hoeffding(span: f64) -> Result<Self> {
        Self::new(VarianceKind::HoeffdingConst { span }, PiHat::Identity)
    }

    pub fn heavy_tail(b: f64, big_b: f64) -> Result<Self> {
        Self::new(VarianceKind::HeavyTail { b, big_b }, PiHat::DiracMixture)
    }

    /// Whether `δ` ignores `g` and `g'`, in which case SeqRand reduces to the
    /// plain exponentially weighted average.
    pub fn is_expert_independent(&self) -> bool {
        !matches!(self.kind, VarianceKind::Bernstein)
    }

    /// Configuration-time admissibility of `(loss, λ)` for this function.
    pub fn check_admissible(&self, loss: &LossSpec, lambda: f64) -> Result<()> {
        check_lambda(lambda)?;
        match self.kind {
            VarianceKind::Zero => {
                let eta = loss
                    .mixability_eta_max()
                    .ok_or_else(|| invalid("variance_fn", "zero variance needs a mixable loss on bounded outputs"))?;
                if lambda > eta {
                    return Err(invalid(
                        "lambda",
                        alloc::format!("zero variance needs lambda <= {eta} for this loss"),
                    ));
                }
            }
            VarianceKind::HeavyTail { .. }
                if loss.kind().exponent().is_none() => {
                    return Err(invalid("variance_fn", "heavy_tail needs a power loss"));
                }
            _ => {}
        }
        if self.pi_hat == PiHat::Substitution && !loss.output_range().is_bounded() {
            return Err(invalid("pi_hat", "substitution needs bounded outputs"));
        }
        if self.pi_hat == PiHat::DiracMixture && !loss.is_convex() {
            return Err(invalid("pi_hat", "dirac_mixture needs a convex loss"));
        }
        Ok(())
    }

    /// `δ_λ(z, g, g')` given `L(z, g)`, `L(z, g')` and the raw output `y`.
    pub fn delta(&self, lambda: f64, loss: &LossSpec, y: f64, loss_g: f64, loss_gprime: f64) -> Result<f64> {
        check_lambda(lambda)?;
        if y.is_nan() || loss_g.is_nan() || loss_gprime.is_nan() {
            return Err(Error::NaN("delta"));
        }
        let q = loss.kind().exponent();
        if matches!(self.kind, VarianceKind::HeavyTail { .. }) && q.is_none() {
            return Err(Error::Unsupported("heavy_tail needs a power loss"));
        }
        Ok(self.value(lambda, q.unwrap_or(1.0), y, loss_g, loss_gprime))
    }

    /// Unchecked `δ`; `q` is the loss exponent, used only by `HeavyTail`.
    #[inline]
    pub(crate) fn value(&self, lambda: f64, q: f64, y: f64, loss_g: f64, loss_gprime: f64) -> f64 {
        match self.kind {
            VarianceKind::Zero => 0.0,
            VarianceKind::Bernstein => {
                if loss_g.is_infinite() || loss_gprime.is_infinite() {
                    return if loss_g == loss_gprime { 0.0 } else { f64::INFINITY };
                }
                let d = loss_g - loss_gprime;
                lambda * d * d / 2.0
            }
            VarianceKind::HoeffdingConst { span } => lambda * span * span / 8.0,
            VarianceKind::HeavyTail { b, big_b } => heavy_tail_delta(lambda, q, b, big_b, y),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_nan() {
        return Err(Error::NaN("lambda"));
    }
    if !(lambda > 0.0) || lambda.is_infinite() {
        return Err(invalid("lambda", "must be positive and finite"));
    }
    Ok(())
}

/// The truncated heavy-tail term as a function of `y` alone.
pub fn heavy_tail_delta(lambda: f64, q: f64, b: f64, big_b: f64, y: f64) -> f64 {
    if abs(y) <= big_b {
        return 0.0;
    }
    let span = power_span(q, y, b);
    if lambda * span < 1.0 {
        lambda * span * span / 2.0
    } else {
        span - 1.0 / (2.0 * lambda)
    }
}

/// Largest rate `λ_0 = (q-1) / (q (B+b)^q)` making `y' ↦ exp(-λ_0 |y-y'|^q)`
/// concave on `[-b, b]` for every `|y| ≤ B`.
pub fn heavy_tail_lambda0(q: f64, b: f64, big_b: f64) -> f64 {
    (q - 1.0) / (q * powf(big_b + b, q))
}

/// Truncation level `B = ((q-1)/(qλ))^{1/q} - b`, the largest `B` with
/// `λ ≤ λ_0(B)`.
pub fn heavy_tail_threshold(q: f64, lambda: f64, b: f64) -> f64 {
    powf((q - 1.0) / (q * lambda), 1.0 / q) - b
}

/// Result of [`verify_variance_inequality`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceCheck {
    /// Largest left-hand side over the samples.
    pub max: f64,
    /// Index of the sample attaining it.
    pub worst: usize,
}

/// Evaluates the variance inequality's left-hand side at every sample `z`
/// and returns the maximum. Values `≤ 0` (up to rounding) certify that the
/// configuration satisfies the inequality for this `ρ` at those samples.
pub fn verify_variance_inequality(
    loss: &LossSpec,
    lambda: f64,
    vf: &VarianceFn,
    experts: &ExpertTable,
    rho: &LogWeights,
    z_samples: &[Outcome],
) -> Result<VarianceCheck> {
    let q = loss.kind().exponent().unwrap_or(1.0);
    verify_with_delta(loss, lambda, vf.pi_hat, experts, rho, z_samples, |y, lg, lgp| {
        vf.value(lambda, q, y, lg, lgp)
    })
}

/// Variant of [`verify_variance_inequality`] taking `δ(y, L(z,g), L(z,g'))`
/// as a closure.
pub fn verify_with_delta(
    loss: &LossSpec,
    lambda: f64,
    pi_hat: PiHat,
    experts: &ExpertTable,
    rho: &LogWeights,
    z_samples: &[Outcome],
    delta: impl Fn(f64, f64, f64) -> f64,
) -> Result<VarianceCheck> {
    check_lambda(lambda)?;
    if rho.len() != experts.num_experts() {
        return Err(Error::LengthMismatch(rho.len(), experts.num_experts()));
    }
    if z_samples.is_empty() {
        return Err(invalid("z_samples", "need at least one sample"));
    }
    let d = experts.num_experts();
    let logw = rho.log_masses();
    let mut best = VarianceCheck {
        max: f64::NEG_INFINITY,
        worst: 0,
    };
    let mut terms = Vec::with_capacity(d);
    let mut substitutes: Vec<Option<f64>> = alloc::vec![None; experts.num_cells()];
    for (s, z) in z_samples.iter().enumerate() {
        if z.y.is_nan() {
            return Err(Error::NaN("z_samples"));
        }
        let k = experts.cell_index(z.cell)?;
        let losses: Vec<f64> = (0..d).map(|j| loss.value(z.y, experts.prediction(j, k))).collect();
        let inner = |lgp: f64, terms: &mut Vec<f64>| {
            terms.clear();
            for j in 0..d {
                let lg = losses[j];
                let e = if logw[j] == f64::NEG_INFINITY || lg == f64::INFINITY {
                    f64::NEG_INFINITY
                } else {
                    let dl = delta(z.y, lg, lgp);
                    if dl == f64::INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        logw[j] + lambda * (lgp - lg - dl)
                    }
                };
                terms.push(e);
            }
            log_sum_exp(terms)
        };
        let value = match pi_hat {
            PiHat::Identity => {
                // A +inf term signals a violation and wins over -inf ones.
                let mut acc = 0.0;
                let mut any_neg_inf = false;
                for jp in 0..d {
                    if logw[jp] == f64::NEG_INFINITY {
                        continue;
                    }
                    let v = inner(losses[jp], &mut terms);
                    if v == f64::INFINITY {
                        acc = f64::INFINITY;
                        break;
                    }
                    if v == f64::NEG_INFINITY {
                        any_neg_inf = true;
                    } else {
                        acc += exp(logw[jp]) * v;
                    }
                }
                if any_neg_inf && acc != f64::INFINITY {
                    f64::NEG_INFINITY
                } else {
                    acc
                }
            }
            PiHat::DiracMixture => {
                let m = mixture_at(rho, experts, k);
                inner(loss.value(z.y, m), &mut terms)
            }
            PiHat::Substitution => {
                let sub = match substitutes[k] {
                    Some(v) => v,
                    None => {
                        let grid = SubstitutionGrid::default();
                        let y_grid = grid.output_grid(loss)?;
                        let v = algorithm_b_substitution(loss, rho, experts, lambda, z.cell, &y_grid, grid.tolerance)?
                            .ok_or(Error::SubstitutionFailed(s))?;
                        substitutes[k] = Some(v);
                        v
                    }
                };
                inner(loss.value(z.y, sub), &mut terms)
            }
        };
        if value > best.max || s == 0 {
            best = VarianceCheck { max: value, worst: s };
        }
    }
    Ok(best)
}

/// `(1/λ) log E_ρ exp(-λ L(z, g))` at one sample, the quantity a substitution
/// prediction has to beat.
pub(crate) fn log_mix_loss(loss: &LossSpec, lambda: f64, experts: &ExpertTable, rho: &LogWeights, k: usize, y: f64) -> f64 {
    let logw = rho.log_masses();
    let mut terms = Vec::with_capacity(logw.len());
    for (j, &lw) in logw.iter().enumerate() {
        let l = loss.value(y, experts.prediction(j, k));
        terms.push(if lw == f64::NEG_INFINITY || l == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            lw - lambda * l
        });
    }
    log_sum_exp(&terms) / lambda
}
