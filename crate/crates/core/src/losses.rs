//! Loss families and the constant-prediction risk functions built on them.
//!
//! A [`LossSpec`] couples a loss kind with its output range and the range the
//! predictions live in. Besides pointwise evaluation it provides
//!
//! * the largest learning rate for which exponential weighting with a
//!   substitution prediction loses nothing (`mixability_eta_max`),
//! * `phi(p)`, the risk of the best constant prediction when the output takes
//!   the value `h1` with probability `p` and `h2` otherwise, together with its
//!   minimizer and, for L_q losses, its second derivative,
//! * the span `Δ(y)` of `ℓ(y, ·)` over a bounded prediction interval.

use alloc::string::String;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::{abs, bernoulli_entropy, grid, ln, powf};

/// Closed interval `[lo, hi]`. Infinite endpoints mean unbounded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn symmetric(b: f64) -> Self {
        Self { lo: -b, hi: b }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn half_width(&self) -> f64 {
        (self.hi - self.lo) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    Square,
    /// `|y - y'|^q` with `q > 1`.
    Lq { q: f64 },
    Absolute,
    /// Bernoulli Kullback-Leibler divergence `K(y, y')`.
    Entropy,
    ZeroOne,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Square => "square",
            LossKind::Lq { .. } => "lq",
            LossKind::Absolute => "absolute",
            LossKind::Entropy => "entropy",
            LossKind::ZeroOne => "zero_one",
        }
    }

    /// Exponent of the power loss family, if this is one.
    pub fn exponent(&self) -> Option<f64> {
        match *self {
            LossKind::Square => Some(2.0),
            LossKind::Lq { q } => Some(q),
            LossKind::Absolute => Some(1.0),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LossSpecRepr", into = "LossSpecRepr")]
pub struct LossSpec {
    kind: LossKind,
    output: Interval,
    prediction: Interval,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossSpecRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
}

impl TryFrom<LossSpecRepr> for LossSpec {
    type Error = Error;

    fn try_from(r: LossSpecRepr) -> Result<Self> {
        let kind = match r.kind.as_str() {
            "square" => LossKind::Square,
            "lq" => LossKind::Lq {
                q: r.q.ok_or_else(|| invalid("q", "lq loss requires q"))?,
            },
            "absolute" => LossKind::Absolute,
            "entropy" => LossKind::Entropy,
            "zero_one" => LossKind::ZeroOne,
            other => return Err(invalid("kind", alloc::format!("unknown loss kind `{other}`"))),
        };
        if r.q.is_some() && !matches!(kind, LossKind::Lq { .. }) {
            return Err(invalid("q", "only lq losses take q"));
        }
        let output = match kind {
            LossKind::Entropy | LossKind::ZeroOne => Interval::new(
                r.y_lo.unwrap_or(0.0),
                r.y_hi.unwrap_or(1.0),
            ),
            _ => Interval::new(
                r.y_lo.unwrap_or(f64::NEG_INFINITY),
                r.y_hi.unwrap_or(f64::INFINITY),
            ),
        };
        let prediction = match r.b {
            Some(b) => Interval::symmetric(b),
            None => output,
        };
        LossSpec::new(kind, output, prediction)
    }
}

impl From<LossSpec> for LossSpecRepr {
    fn from(l: LossSpec) -> Self {
        let finite = |x: f64| x.is_finite().then_some(x);
        let b = (l.prediction != l.output && l.prediction.lo == -l.prediction.hi)
            .then_some(l.prediction.hi);
        LossSpecRepr {
            kind: l.kind.name().into(),
            q: match l.kind {
                LossKind::Lq { q } => Some(q),
                _ => None,
            },
            y_lo: finite(l.output.lo),
            y_hi: finite(l.output.hi),
            b,
        }
    }
}

impl LossSpec {
    pub fn new(kind: LossKind, output: Interval, prediction: Interval) -> Result<Self> {
        if output.lo.is_nan() || output.hi.is_nan() || output.lo > output.hi {
            return Err(invalid("output_range", "must be an ordered interval"));
        }
        if prediction.lo.is_nan() || prediction.hi.is_nan() || prediction.lo > prediction.hi {
            return Err(invalid("prediction_range", "must be an ordered interval"));
        }
        match kind {
            LossKind::Lq { q } if !(q > 1.0) || !q.is_finite() => {
                return Err(invalid("q", "lq requires q > 1 (use `absolute` for q = 1)"));
            }
            LossKind::Entropy => {
                if output.lo < 0.0 || output.hi > 1.0 {
                    return Err(invalid("output_range", "entropy outputs must lie in [0, 1]"));
                }
                if prediction.lo < 0.0 || prediction.hi > 1.0 {
                    return Err(invalid("prediction_range", "entropy predictions must lie in [0, 1]"));
                }
            }
            LossKind::ZeroOne
                if output != Interval::new(0.0, 1.0) => {
                    return Err(invalid("output_range", "zero_one labels are encoded as {0, 1}"));
                }
            _ => {}
        }
        Ok(Self {
            kind,
            output,
            prediction,
        })
    }

    /// Square loss with outputs and predictions in `[-b, b]`.
    pub fn square(b: f64) -> Result<Self> {
        Self::new(LossKind::Square, Interval::symmetric(b), Interval::symmetric(b))
    }

    /// L_q loss with outputs and predictions in `[-b, b]`.
    pub fn lq(q: f64, b: f64) -> Result<Self> {
        Self::new(LossKind::Lq { q }, Interval::symmetric(b), Interval::symmetric(b))
    }

    pub fn absolute(b: f64) -> Result<Self> {
        Self::new(LossKind::Absolute, Interval::symmetric(b), Interval::symmetric(b))
    }

    pub fn entropy() -> Self {
        Self {
            kind: LossKind::Entropy,
            output: Interval::new(0.0, 1.0),
            prediction: Interval::new(0.0, 1.0),
        }
    }

    pub fn zero_one() -> Self {
        Self {
            kind: LossKind::ZeroOne,
            output: Interval::new(0.0, 1.0),
            prediction: Interval::new(0.0, 1.0),
        }
    }

    /// Power loss `|y - y'|^q` on unbounded outputs with predictions in `[-b, b]`.
    pub fn unbounded_power(q: f64, b: f64) -> Result<Self> {
        let kind = if q == 1.0 {
            LossKind::Absolute
        } else if q == 2.0 {
            LossKind::Square
        } else {
            LossKind::Lq { q }
        };
        Self::new(
            kind,
            Interval::new(f64::NEG_INFINITY, f64::INFINITY),
            Interval::symmetric(b),
        )
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn output_range(&self) -> Interval {
        self.output
    }

    pub fn prediction_range(&self) -> Interval {
        self.prediction
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self.kind, LossKind::ZeroOne)
    }

    /// `ℓ(y, ŷ)`, rejecting NaN inputs. May return `+inf` for the entropy loss.
    pub fn eval(&self, y_true: f64, y_pred: f64) -> Result<f64> {
        if y_true.is_nan() || y_pred.is_nan() {
            return Err(Error::NaN("eval_loss"));
        }
        Ok(self.value(y_true, y_pred))
    }

    /// Unchecked `ℓ(y, ŷ)` for hot loops.
    #[inline]
    pub fn value(&self, y: f64, yhat: f64) -> f64 {
        match self.kind {
            LossKind::Square => {
                let d = y - yhat;
                d * d
            }
            LossKind::Lq { q } => powf(abs(y - yhat), q),
            LossKind::Absolute => abs(y - yhat),
            LossKind::ZeroOne => {
                if y == yhat {
                    0.0
                } else {
                    1.0
                }
            }
            LossKind::Entropy => entropy_loss(y, yhat),
        }
    }

    /// Largest `η` for which the exponentially weighted mixture admits a
    /// substitution prediction with constant one; `None` when no such `η`
    /// exists (absolute and 0-1 losses) or the output range is unbounded.
    pub fn mixability_eta_max(&self) -> Option<f64> {
        match self.kind {
            LossKind::Entropy => Some(1.0),
            LossKind::Square => {
                let b = self.bounded_half_width()?;
                Some(1.0 / (2.0 * b * b))
            }
            LossKind::Lq { q } => {
                let b = self.bounded_half_width()?;
                Some((q - 1.0) / (q * powf(b, q)) * f64::min(1.0, powf(2.0, 2.0 - q)))
            }
            LossKind::Absolute | LossKind::ZeroOne => None,
        }
    }

    fn bounded_half_width(&self) -> Option<f64> {
        self.output.is_bounded().then(|| self.output.half_width())
    }

    /// Risk of the constant prediction `y` when `P(Y = h1) = p = 1 - P(Y = h2)`.
    pub fn phi_p(&self, p: f64, h1: f64, h2: f64, y: f64) -> f64 {
        weighted(p, self.value(h1, y)) + weighted(1.0 - p, self.value(h2, y))
    }

    /// Risk of the best constant prediction, `inf_y φ_p(y)`.
    pub fn phi(&self, p: f64, h1: f64, h2: f64) -> Result<f64> {
        self.check_two_point(p, h1, h2)?;
        Ok(self.phi_unchecked(p, h1, h2))
    }

    pub(crate) fn phi_unchecked(&self, p: f64, h1: f64, h2: f64) -> f64 {
        let span = abs(h2 - h1);
        match self.kind {
            LossKind::Square => p * (1.0 - p) * span * span,
            LossKind::Lq { q } => {
                let r = 1.0 / (q - 1.0);
                let d = powf(p, r) + powf(1.0 - p, r);
                p * (1.0 - p) * powf(span, q) / powf(d, q - 1.0)
            }
            LossKind::Absolute => f64::min(p, 1.0 - p) * span,
            LossKind::ZeroOne => f64::min(p, 1.0 - p),
            LossKind::Entropy => {
                let v = bernoulli_entropy(p * h1 + (1.0 - p) * h2)
                    - p * bernoulli_entropy(h1)
                    - (1.0 - p) * bernoulli_entropy(h2);
                v.max(0.0)
            }
        }
    }

    /// `argmin_y φ_p(y)`; ties resolve to `h1`.
    pub fn best_constant(&self, p: f64, h1: f64, h2: f64) -> Result<f64> {
        self.check_two_point(p, h1, h2)?;
        Ok(self.best_constant_unchecked(p, h1, h2))
    }

    pub(crate) fn best_constant_unchecked(&self, p: f64, h1: f64, h2: f64) -> f64 {
        match self.kind.exponent() {
            Some(q) if q > 1.0 => {
                let r = 1.0 / (q - 1.0);
                let a = powf(p, r);
                let b = powf(1.0 - p, r);
                (a * h1 + b * h2) / (a + b)
            }
            _ => match self.kind {
                LossKind::Entropy => p * h1 + (1.0 - p) * h2,
                _ => {
                    if p >= 0.5 {
                        h1
                    } else {
                        h2
                    }
                }
            },
        }
    }

    /// Second derivative of `phi` in `p` for power losses with `q > 1`.
    pub fn phi_second_derivative(&self, p: f64, h1: f64, h2: f64) -> Result<f64> {
        let q = match self.kind.exponent() {
            Some(q) if q > 1.0 => q,
            _ => return Err(Error::Unsupported("phi'' is only closed-form for L_q losses")),
        };
        if p.is_nan() || h1.is_nan() || h2.is_nan() {
            return Err(Error::NaN("phi_second_derivative"));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("p", "must lie in the open interval (0, 1)"));
        }
        if h1 == h2 {
            return Err(invalid("h", "h1 and h2 must differ"));
        }
        Ok(lq_phi_second_derivative(q, p, abs(h2 - h1)))
    }

    /// `Δ(y) = sup_{|α|,|β| ≤ b} ℓ(y, α) - ℓ(y, β)` for power losses.
    pub fn loss_span_delta(&self, y: f64, b: f64) -> Result<f64> {
        let q = self
            .kind
            .exponent()
            .ok_or(Error::Unsupported("loss span is defined for power losses"))?;
        if !(b > 0.0) {
            return Err(invalid("b", "must be positive"));
        }
        if y.is_nan() {
            return Err(Error::NaN("loss_span_delta"));
        }
        Ok(power_span(q, y, b))
    }

    fn check_two_point(&self, p: f64, h1: f64, h2: f64) -> Result<()> {
        if p.is_nan() || h1.is_nan() || h2.is_nan() {
            return Err(Error::NaN("phi"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("p", "must lie in [0, 1]"));
        }
        if h1 == h2 {
            return Err(invalid("h", "h1 and h2 must differ"));
        }
        if matches!(self.kind, LossKind::Entropy) && !(self.output.contains(h1) && self.output.contains(h2)) {
            return Err(invalid("h", "entropy outputs must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// `w * v` with `0 * inf = 0`.
#[inline]
fn weighted(w: f64, v: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * v
    }
}

fn entropy_loss(y: f64, yhat: f64) -> f64 {
    let a = if y == 0.0 {
        0.0
    } else if yhat == 0.0 {
        f64::INFINITY
    } else {
        y * ln(y / yhat)
    };
    let b = if y == 1.0 {
        0.0
    } else if yhat == 1.0 {
        f64::INFINITY
    } else {
        (1.0 - y) * ln((1.0 - y) / (1.0 - yhat))
    };
    (a + b).max(0.0)
}

pub(crate) fn power_span(q: f64, y: f64, b: f64) -> f64 {
    let ay = abs(y);
    let hi = powf(ay + b, q);
    let lo = if ay <= b { 0.0 } else { powf(ay - b, q) };
    hi - lo
}

pub(crate) fn lq_phi_second_derivative(q: f64, p: f64, span: f64) -> f64 {
    let r = 1.0 / (q - 1.0);
    let d = powf(p, r) + powf(1.0 - p, r);
    -(q / (q - 1.0)) * powf(p * (1.0 - p), (2.0 - q) / (q - 1.0)) * powf(span, q) / powf(d, q + 1.0)
}

/// Grid minimum over `t ∈ (0, 1)` of the reduced one-dimensional form of the
/// L_q mixability condition on `[-B, B]`:
/// `(q - 1) / (q (2B)^q) * 1 / (t (1 - t) [t^{q-1} + (1 - t)^{q-1}])`.
pub fn numeric_eta_infimum(q: f64, half_width: f64, grid_size: usize) -> Result<f64> {
    if !(q > 1.0) {
        return Err(invalid("q", "must exceed 1"));
    }
    if !(half_width > 0.0) {
        return Err(invalid("B", "must be positive"));
    }
    if grid_size < 2 {
        return Err(invalid("grid_size", "need at least 2 grid points"));
    }
    let scale = (q - 1.0) / (q * powf(2.0 * half_width, q));
    let best = grid(0.0, 1.0, grid_size, true)
        .into_iter()
        .map(|t| 1.0 / (t * (1.0 - t) * (powf(t, q - 1.0) + powf(1.0 - t, q - 1.0))))
        .fold(f64::INFINITY, f64::min);
    Ok(scale * best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eval_examples() {
        assert_eq!(LossSpec::square(1.0).unwrap().eval(1.0, 0.0).unwrap(), 1.0);
        assert!(close(LossSpec::lq(3.0, 2.0).unwrap().eval(2.0, 0.0).unwrap(), 8.0, 1e-12));
        assert_eq!(LossSpec::entropy().eval(0.5, 0.5).unwrap(), 0.0);
        assert_eq!(LossSpec::entropy().eval(1.0, 0.0).unwrap(), f64::INFINITY);
        assert_eq!(LossSpec::entropy().eval(0.0, 0.0).unwrap(), 0.0);
        assert!(LossSpec::square(1.0).unwrap().eval(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn entropy_zero_only_at_equality() {
        let l = LossSpec::entropy();
        for &(y, yh) in &[(0.2, 0.3), (0.9, 0.1), (0.0, 0.5), (1.0, 0.999)] {
            assert!(l.eval(y, yh).unwrap() > 0.0);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(LossSpec::lq(1.0, 1.0).is_err());
        assert!(LossSpec::new(LossKind::Entropy, Interval::new(-1.0, 1.0), Interval::new(0.0, 1.0)).is_err());
    }

    #[test]
    fn mixability_table() {
        assert_eq!(LossSpec::square(1.0).unwrap().mixability_eta_max(), Some(0.5));
        assert_eq!(LossSpec::entropy().mixability_eta_max(), Some(1.0));
        let lq3 = LossSpec::lq(3.0, 1.0).unwrap().mixability_eta_max().unwrap();
        assert!(close(lq3, 1.0 / 3.0, 1e-15));
        assert_eq!(LossSpec::absolute(1.0).unwrap().mixability_eta_max(), None);
        assert_eq!(LossSpec::zero_one().mixability_eta_max(), None);
    }

    #[test]
    fn numeric_infimum_examples() {
        assert!(close(numeric_eta_infimum(2.0, 1.0, 10_000).unwrap(), 0.5, 1e-3));
        let closed = LossSpec::lq(1.5, 1.0).unwrap().mixability_eta_max().unwrap();
        assert!(close(closed, 1.0 / 3.0, 1e-15));
        let num = numeric_eta_infimum(1.5, 1.0, 10_000).unwrap();
        assert!(((num - closed) / closed).abs() < 1e-3);
        assert!(numeric_eta_infimum(3.0, 1.0, 10_000).unwrap() >= 1.0 / 3.0);
        assert!(numeric_eta_infimum(2.0, 1.0, 1).is_err());
    }

    #[test]
    fn numeric_infimum_scale_invariance() {
        for &q in &[1.5, 2.0, 3.0] {
            let base = numeric_eta_infimum(q, 1.0, 2001).unwrap();
            for &b in &[0.5, 2.0] {
                let v = numeric_eta_infimum(q, b, 2001).unwrap() * powf(b, q);
                assert!(((v - base) / base).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn phi_examples() {
        let b: f64 = 1.7;
        for &q in &[1.5, 2.0, 3.0] {
            let l = LossSpec::lq(q, b).unwrap();
            assert!(close(l.phi(0.5, -b, b).unwrap(), powf(b, q), 1e-12));
        }
        assert!(close(LossSpec::zero_one().phi(0.3, 0.0, 1.0).unwrap(), 0.3, 1e-15));
        assert!(close(
            LossSpec::entropy().phi(0.5, 0.0, 1.0).unwrap(),
            core::f64::consts::LN_2,
            1e-15
        ));
        assert!(LossSpec::zero_one().phi(1.5, 0.0, 1.0).is_err());
        assert!(LossSpec::zero_one().phi(0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn phi_second_derivative_examples() {
        let l = LossSpec::square(1.0).unwrap();
        assert!(close(l.phi_second_derivative(0.5, -1.0, 1.0).unwrap(), -8.0, 1e-12));
        assert!(close(l.phi_second_derivative(0.25, -1.0, 1.0).unwrap(), -8.0, 1e-12));
        assert!(l.phi_second_derivative(0.0, -1.0, 1.0).is_err());
        assert!(LossSpec::zero_one().phi_second_derivative(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn phi_second_derivative_matches_finite_differences() {
        let h = 1e-4;
        for &q in &[1.5, 2.0, 3.0] {
            let l = LossSpec::lq(q, 1.0).unwrap();
            for &p in &[0.2, 0.35, 0.5, 0.8] {
                let fd = (l.phi(p + h, -1.0, 1.0).unwrap() - 2.0 * l.phi(p, -1.0, 1.0).unwrap()
                    + l.phi(p - h, -1.0, 1.0).unwrap())
                    / (h * h);
                let exact = l.phi_second_derivative(p, -1.0, 1.0).unwrap();
                assert!(((fd - exact) / exact).abs() < 1e-4, "q={q} p={p} fd={fd} exact={exact}");
            }
        }
    }

    #[test]
    fn best_constant_examples() {
        let sq = LossSpec::square(1.0).unwrap();
        let y = sq.best_constant(0.75, -1.0, 1.0).unwrap();
        assert!(close(y, -0.5, 1e-15));
        assert!(close(sq.phi_p(0.75, -1.0, 1.0, y), 0.75, 1e-12));
        assert!(close(sq.phi(0.75, -1.0, 1.0).unwrap(), 0.75, 1e-12));
        let l3 = LossSpec::lq(3.0, 2.0).unwrap();
        assert!(close(l3.best_constant(0.5, -2.0, 2.0).unwrap(), 0.0, 1e-15));
        assert!(close(LossSpec::entropy().best_constant(0.5, 0.0, 1.0).unwrap(), 0.5, 1e-15));
        assert_eq!(LossSpec::zero_one().best_constant(0.5, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(LossSpec::zero_one().best_constant(0.4, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(LossSpec::absolute(1.0).unwrap().best_constant(0.6, -1.0, 1.0).unwrap(), -1.0);
    }

    #[test]
    fn entropy_best_constant_matches_numeric_minimizer() {
        let l = LossSpec::entropy();
        let ys = grid(0.0, 1.0, 9999, true);
        let argmin = ys
            .iter()
            .copied()
            .min_by(|a, b| l.phi_p(0.5, 0.0, 1.0, *a).partial_cmp(&l.phi_p(0.5, 0.0, 1.0, *b)).unwrap())
            .unwrap();
        assert!(close(argmin, 0.5, 1e-4));
    }

    #[test]
    fn best_constant_attains_phi() {
        let losses = [
            LossSpec::square(1.0).unwrap(),
            LossSpec::lq(1.5, 1.0).unwrap(),
            LossSpec::lq(3.0, 1.0).unwrap(),
            LossSpec::absolute(1.0).unwrap(),
            LossSpec::entropy(),
            LossSpec::zero_one(),
        ];
        for l in &losses {
            let (h1, h2) = if l.output_range().lo == 0.0 { (0.0, 1.0) } else { (-1.0, 0.6) };
            for &p in &[0.0, 0.1, 0.5, 0.77, 1.0] {
                let y = l.best_constant(p, h1, h2).unwrap();
                let v = l.phi_p(p, h1, h2, y);
                assert!(close(v, l.phi(p, h1, h2).unwrap(), 1e-10), "{:?} p={p}", l.kind());
            }
        }
    }

    #[test]
    fn span_examples() {
        let l2 = LossSpec::lq(2.0, 5.0).unwrap();
        assert!(close(l2.loss_span_delta(3.0, 1.0).unwrap(), 12.0, 1e-12));
        assert!(close(l2.loss_span_delta(0.0, 1.0).unwrap(), 1.0, 1e-12));
        let abs_l = LossSpec::absolute(5.0).unwrap();
        assert!(close(abs_l.loss_span_delta(3.0, 1.0).unwrap(), 2.0, 1e-12));
        assert!(LossSpec::entropy().loss_span_delta(0.5, 1.0).is_err());
    }

    #[test]
    fn span_matches_brute_force() {
        let l = LossSpec::lq(2.5, 10.0).unwrap();
        let alphas = grid(-1.0, 1.0, 2001, false);
        for &y in &[-3.0, -0.4, 0.0, 0.9, 1.0, 4.2] {
            let vals: Vec<f64> = alphas.iter().map(|&a| l.value(y, a)).collect();
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(close(l.loss_span_delta(y, 1.0).unwrap(), hi - lo, 1e-9), "y={y}");
        }
    }

    #[test]
    fn phi_vanishes_at_point_masses() {
        for l in [LossSpec::lq(1.5, 1.0).unwrap(), LossSpec::absolute(1.0).unwrap(), LossSpec::zero_one()] {
            let (h1, h2) = if l.output_range().lo == 0.0 { (0.0, 1.0) } else { (-1.0, 1.0) };
            assert_eq!(l.phi(0.0, h1, h2).unwrap(), 0.0);
            assert_eq!(l.phi(1.0, h1, h2).unwrap(), 0.0);
        }
    }

    #[test]
    fn json_shape() {
        let l: LossSpec = serde_json::from_str(r#"{"kind":"lq","q":3,"y_lo":-1,"y_hi":1}"#).unwrap();
        assert_eq!(l.kind(), LossKind::Lq { q: 3.0 });
        assert_eq!(l.prediction_range(), Interval::symmetric(1.0));
        let s = serde_json::to_string(&l).unwrap();
        let back: LossSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, l);
        let heavy: LossSpec = serde_json::from_str(r#"{"kind":"square","b":1}"#).unwrap();
        assert!(!heavy.output_range().is_bounded());
        assert_eq!(serde_json::from_str::<LossSpec>(&serde_json::to_string(&heavy).unwrap()).unwrap(), heavy);
        assert!(serde_json::from_str::<LossSpec>(r#"{"kind":"hinge"}"#).is_err());
        assert!(serde_json::from_str::<LossSpec>(r#"{"kind":"lq","q":0.5,"y_lo":-1,"y_hi":1}"#).is_err());
        assert!(serde_json::from_str::<LossSpec>(r#"{"kind":"square","y_lo":-1,"y_hi":1,"bogus":1}"#).is_err());
    }
}
