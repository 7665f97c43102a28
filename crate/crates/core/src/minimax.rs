//! Hypercubes of distributions and the lower bounds they induce.
//!
//! A hypercube indexes `2^m` distributions by sign vectors: cells `X_1..X_m`
//! each have mass `w`, cell `X_0` carries the remaining `1 - m w`, and on cell
//! `j` the output is `h1` with probability `p_{σ_j}` and `h2` otherwise. Every
//! estimator has expected excess risk at least the `ψ̃`-similarity between the
//! two `n`-sample laws obtained by flipping one coordinate, which
//! [`product_similarity`] evaluates exactly and [`assouad_bound_closed`]
//! bounds from below in closed form.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::distribution::{Atom, DiscreteDistribution};
use crate::error::{invalid, Error, Result};
use crate::gibbs::ExpertTable;
use crate::losses::LossSpec;
use crate::math::{exp, floor, ln, ln_binomial, powf, sqrt, xlny};

/// Largest sample size accepted by the exact similarity sums.
pub const MAX_EXACT_N: u64 = 1000;

/// Likelihood ratios beyond `e^LOG_RATIO_CAP` are capped; the `Q`-mass of
/// such outcomes is below `e^-LOG_RATIO_CAP`.
const LOG_RATIO_CAP: f64 = 700.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HypercubeRepr", into = "HypercubeRepr")]
pub struct Hypercube {
    m: u64,
    w: f64,
    p_plus: f64,
    p_minus: f64,
    h1: f64,
    h2: f64,
    loss: LossSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HypercubeRepr {
    m: u64,
    w: f64,
    p_plus: f64,
    p_minus: f64,
    h1: f64,
    h2: f64,
    loss: LossSpec,
}

impl TryFrom<HypercubeRepr> for Hypercube {
    type Error = Error;
    fn try_from(r: HypercubeRepr) -> Result<Self> {
        Hypercube::new(r.m, r.w, r.p_plus, r.p_minus, r.h1, r.h2, r.loss)
    }
}

impl From<Hypercube> for HypercubeRepr {
    fn from(h: Hypercube) -> Self {
        HypercubeRepr { m: h.m, w: h.w, p_plus: h.p_plus, p_minus: h.p_minus, h1: h.h1, h2: h.h2, loss: h.loss }
    }
}

impl Hypercube {
    pub fn new(m: u64, w: f64, p_plus: f64, p_minus: f64, h1: f64, h2: f64, loss: LossSpec) -> Result<Self> {
        if [w, p_plus, p_minus, h1, h2].iter().any(|v| v.is_nan()) {
            return Err(Error::NaN("hypercube parameters"));
        }
        if m == 0 {
            return Err(invalid("m", "must be positive"));
        }
        if !(w > 0.0) || m as f64 * w > 1.0 + 1e-12 {
            return Err(invalid("w", "must lie in (0, 1/m]"));
        }
        if !(0.0 <= p_minus && p_minus < p_plus && p_plus <= 1.0) {
            return Err(invalid("p", "need 0 <= p_minus < p_plus <= 1"));
        }
        if h1 == h2 || !h1.is_finite() || !h2.is_finite() {
            return Err(invalid("h", "h1 and h2 must be distinct finite values"));
        }
        // Validates the outputs against the loss once, so later calls can skip it.
        loss.phi(0.5, h1, h2)?;
        Ok(Self { m, w, p_plus, p_minus, h1, h2, loss })
    }

    /// The symmetric hypercube with `p_± = (1 ± √d_II) / 2`.
    pub fn symmetric(m: u64, w: f64, d_ii: f64, h1: f64, h2: f64, loss: LossSpec) -> Result<Self> {
        if !(d_ii > 0.0 && d_ii <= 1.0) {
            return Err(invalid("d_II", "must lie in (0, 1]"));
        }
        let xi = sqrt(d_ii);
        Self::new(m, w, (1.0 + xi) / 2.0, (1.0 - xi) / 2.0, h1, h2, loss)
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    pub fn h1(&self) -> f64 {
        self.h1
    }

    pub fn h2(&self) -> f64 {
        self.h2
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    pub fn x0_mass(&self) -> f64 {
        (1.0 - self.m as f64 * self.w).max(0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        (self.p_plus - (1.0 - self.p_minus)).abs() <= 1e-12
    }

    pub fn is_deterministic(&self) -> bool {
        self.p_plus == 1.0 && self.p_minus == 0.0
    }

    fn phi(&self, p: f64) -> f64 {
        self.loss.phi_unchecked(p, self.h1, self.h2)
    }

    /// Concavity defect of `φ` between `p_-` and `p_+` at weight `α`.
    pub fn psi(&self, alpha: f64) -> f64 {
        let (pp, pm) = (self.p_plus, self.p_minus);
        let v = self.phi(alpha * pp + (1.0 - alpha) * pm) - alpha * self.phi(pp) - (1.0 - alpha) * self.phi(pm);
        v.max(0.0)
    }

    pub fn d_i(&self) -> f64 {
        self.psi(0.5)
    }

    pub fn d_ii(&self) -> f64 {
        let (pp, pm) = (self.p_plus, self.p_minus);
        let v = sqrt(pp * (1.0 - pm)) - sqrt((1.0 - pp) * pm);
        (v * v).clamp(0.0, 1.0)
    }

    /// `ψ̃(u) = (m w / 2)(u + 1) ψ(u / (u + 1))`.
    pub fn psi_tilde(&self, u: f64) -> f64 {
        if !(u > 0.0) {
            return 0.0;
        }
        let alpha = if u.is_finite() { u / (u + 1.0) } else { 1.0 };
        let scale = self.m as f64 * self.w / 2.0;
        scale * (u + 1.0) * self.psi(alpha)
    }
}

/// `f(u) = min(u, 1)`, the similarity giving `1 - TV`.
pub fn wedge(u: f64) -> f64 {
    u.min(1.0)
}

/// `f(u) = √u`, the Hellinger affinity.
pub fn hellinger(u: f64) -> f64 {
    sqrt(u)
}

fn check_p(p_plus: f64, p_minus: f64) -> Result<()> {
    if p_plus.is_nan() || p_minus.is_nan() {
        return Err(Error::NaN("similarity parameters"));
    }
    if !((0.0..=1.0).contains(&p_plus) && (0.0..=1.0).contains(&p_minus)) {
        return Err(invalid("p", "must lie in [0, 1]"));
    }
    Ok(())
}

/// `S_f(Q_+^{⊗k}, Q_-^{⊗k})` for Bernoulli laws `Q_±(h1) = p_±`, summed over
/// the number `j` of `h1` outcomes. Outcomes without `Q_-` mass are skipped.
pub fn two_point_similarity<F: Fn(f64) -> f64>(f: F, p_plus: f64, p_minus: f64, k: u64) -> Result<f64> {
    check_p(p_plus, p_minus)?;
    if k > MAX_EXACT_N {
        return Err(invalid("k", "exact sums are limited to 1000 draws"));
    }
    Ok(two_point_unchecked(&f, p_plus, p_minus, k))
}

fn two_point_unchecked<F: Fn(f64) -> f64>(f: &F, p_plus: f64, p_minus: f64, k: u64) -> f64 {
    let mut total = 0.0;
    for j in 0..=k {
        let (jf, rf) = (j as f64, (k - j) as f64);
        let log_q = ln_binomial(k, j) + xlny(jf, p_minus) + xlny(rf, 1.0 - p_minus);
        let q = exp(log_q);
        if q == 0.0 {
            continue;
        }
        let log_ratio = xlny(jf, p_plus) + xlny(rf, 1.0 - p_plus) - xlny(jf, p_minus) - xlny(rf, 1.0 - p_minus);
        total += q * f(exp(log_ratio.min(LOG_RATIO_CAP)));
    }
    total
}

/// `S_f(P_[+]^{⊗n}, P_[-]^{⊗n})` where `P_[±]` is the law of one sample
/// conditionally on the sign of a single coordinate.
pub fn product_similarity<F: Fn(f64) -> f64>(f: F, hc: &Hypercube, n: u64) -> Result<f64> {
    if n > MAX_EXACT_N {
        return Err(invalid("n", "exact sums are limited to 1000 draws"));
    }
    let w = hc.w;
    let mut total = 0.0;
    for k in 0..=n {
        let log_b = ln_binomial(n, k) + xlny(k as f64, w) + xlny((n - k) as f64, 1.0 - w);
        let b = exp(log_b);
        if b == 0.0 {
            continue;
        }
        total += b * two_point_unchecked(&f, hc.p_plus, hc.p_minus, k);
    }
    Ok(total)
}

/// Exact lower bound on the minimax excess risk: `S_ψ̃` of the product laws.
pub fn exact_lower_bound(hc: &Hypercube, n: u64) -> Result<f64> {
    product_similarity(|u| hc.psi_tilde(u), hc, n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    /// `m w d_I (1 - √(1 - (1 - d_II)^{n w}))`.
    Tight,
    /// `m w d_I (1 - √(n w d_II))`.
    Weak,
    /// `m w d_I (1 - w)^n`, only for `p_+ = 1`, `p_- = 0`.
    Deterministic,
}

pub fn assouad_bound_closed(hc: &Hypercube, n: u64, variant: ClosedForm) -> Result<f64> {
    let scale = hc.m as f64 * hc.w * hc.d_i();
    let nf = n as f64;
    let v = match variant {
        ClosedForm::Tight => {
            let inner = 1.0 - powf(1.0 - hc.d_ii(), nf * hc.w);
            scale * (1.0 - sqrt(inner.max(0.0)))
        }
        ClosedForm::Weak => scale * (1.0 - sqrt(nf * hc.w * hc.d_ii())),
        ClosedForm::Deterministic => {
            if !hc.is_deterministic() {
                return Err(invalid("variant", "the deterministic form needs p_plus = 1 and p_minus = 0"));
            }
            scale * powf(1.0 - hc.w, nf)
        }
    };
    Ok(v.max(0.0))
}

/// The closed form suited to the hypercube: deterministic when it applies,
/// tight otherwise.
pub fn best_closed_bound(hc: &Hypercube, n: u64) -> f64 {
    let variant = if hc.is_deterministic() { ClosedForm::Deterministic } else { ClosedForm::Tight };
    assouad_bound_closed(hc, n, variant).unwrap_or(0.0)
}

/// Cell ids `0, 1, ..., m` with `0` playing `X_0`.
pub fn default_cells(m: u64) -> Vec<u64> {
    (0..=m).collect()
}

/// Joint law of the vertex `σ` (`true` = `+`). `cells[0]` is `X_0`,
/// `cells[j]` is `X_j`.
pub fn hypercube_vertex_distribution(hc: &Hypercube, sigma: &[bool], cells: &[u64]) -> Result<DiscreteDistribution> {
    let m = hc.m as usize;
    if sigma.len() != m {
        return Err(Error::LengthMismatch(m, sigma.len()));
    }
    if cells.len() != m + 1 {
        return Err(Error::LengthMismatch(m + 1, cells.len()));
    }
    let mut atoms = Vec::with_capacity(2 * m + 2);
    let mut push = |cell: u64, mass: f64, p: f64| {
        atoms.push(Atom { cell, y: hc.h1, prob: mass * p });
        atoms.push(Atom { cell, y: hc.h2, prob: mass * (1.0 - p) });
    };
    push(cells[0], hc.x0_mass(), hc.p_minus);
    for (j, &s) in sigma.iter().enumerate() {
        push(cells[j + 1], hc.w, if s { hc.p_plus } else { hc.p_minus });
    }
    DiscreteDistribution::new(atoms)
}

/// Signs of vertex number `index`: bit `j` set means `σ_{j+1} = -`.
pub fn vertex_signs(m: u64, index: u64) -> Vec<bool> {
    (0..m).map(|j| index >> j & 1 == 0).collect()
}

/// The Bayes predictors of all `2^m` vertices, on cells `0..=m`, padded to
/// `d` experts with copies of the all-`+` predictor. Expert `i` is the
/// predictor of [`vertex_signs`]`(m, i)`.
pub fn pattern_expert_set(hc: &Hypercube, d: usize) -> Result<ExpertTable> {
    if hc.m >= 63 || (1usize << hc.m) > d {
        return Err(invalid("d", "needs at least 2^m experts"));
    }
    let plus = hc.loss.best_constant_unchecked(hc.p_plus, hc.h1, hc.h2);
    let minus = hc.loss.best_constant_unchecked(hc.p_minus, hc.h1, hc.h2);
    let patterns = 1usize << hc.m;
    ExpertTable::from_fn(default_cells(hc.m), d, |i, cell| {
        let i = if i < patterns { i } else { 0 };
        if cell == 0 || (i >> (cell - 1)) & 1 == 1 {
            minus
        } else {
            plus
        }
    })
}

/// Grid supremum over distinct `(y1, y2)` of `φ_{y1,y2}(1/2)`.
pub fn no_consistency_bound(loss: &LossSpec, h_grid: &[f64]) -> Result<f64> {
    Ok(no_consistency_pair(loss, h_grid)?.map_or(0.0, |(v, _, _)| v))
}

fn no_consistency_pair(loss: &LossSpec, h_grid: &[f64]) -> Result<Option<(f64, f64, f64)>> {
    let mut best: Option<(f64, f64, f64)> = None;
    for (i, &y1) in h_grid.iter().enumerate() {
        for &y2 in &h_grid[i + 1..] {
            if y1 == y2 {
                continue;
            }
            let v = loss.phi(0.5, y1, y2)?;
            if best.is_none_or(|(b, _, _)| v > b) {
                best = Some((v, y1, y2));
            }
        }
    }
    Ok(best)
}

/// `⌊log₂ d⌋`.
pub fn log2_floor(d: u64) -> u64 {
    if d == 0 {
        0
    } else {
        u64::from(63 - d.leading_zeros())
    }
}

/// Lower-bound settings with their hypercube construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "setting", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    /// `L_q` loss (absolute for `q = 1`) with outputs in `[-B, B]` and `q`
    /// close to one.
    BoundedLq { q: f64, big_b: f64, g_size: u64, n: u64 },
    /// `L_q` loss on `[-B, B]`, fast rate `log|G| / n`.
    BoundedLqFast { q: f64, big_b: f64, g_size: u64, n: u64 },
    /// Absolute loss, predictions in `[-b, b]`, unbounded outputs.
    AbsoluteUnbounded { b: f64, g_size: u64, n: u64 },
    /// `L_q` loss under a moment condition `E|Y|^s <= A`, using a
    /// non-symmetric hypercube with `p_- = 0`; `c` is the free constant of
    /// `B = c p^{-1/(q-1)}`.
    HeavyTailAsymmetric { q: f64, s: f64, b: f64, a: f64, c: f64, g_size: u64, n: u64 },
    /// As above with a symmetric hypercube and `B = c d_II^{-1/2}`.
    HeavyTailSymmetric { q: f64, s: f64, b: f64, a: f64, c: f64, g_size: u64, n: u64 },
    /// Entropy loss on `[0, 1]`.
    Entropy { g_size: u64, n: u64 },
    /// Zero-one loss, VC dimension `v`, best expert with zero risk.
    ClassificationRealizable { v: u64, n: u64 },
    /// Zero-one loss with best risk `l ∈ (0, 1/2]`.
    ClassificationNoisy { v: u64, n: u64, l: f64 },
    /// Zero-one loss with the noise level chosen adversarially.
    ClassificationAgnostic { v: u64, n: u64 },
    /// Hypercubes with `⌊nα⌋` cells, showing that no estimator is uniformly
    /// consistent over all distributions when `|G|` is unrestricted.
    NoConsistency { loss: LossSpec, alpha: f64, n: u64, h_grid: Vec<f64> },
}

/// A preset's hypercube, the theorem's stated bound and the hypercube's own
/// closed-form bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresetBound {
    pub setting: &'static str,
    pub hypercube: Hypercube,
    pub n: u64,
    pub theorem_bound: Option<f64>,
    pub closed_value: f64,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::BoundedLq { .. } => "bounded_lq",
            Preset::BoundedLqFast { .. } => "bounded_lq_fast",
            Preset::AbsoluteUnbounded { .. } => "absolute_unbounded",
            Preset::HeavyTailAsymmetric { .. } => "heavy_tail_asymmetric",
            Preset::HeavyTailSymmetric { .. } => "heavy_tail_symmetric",
            Preset::Entropy { .. } => "entropy",
            Preset::ClassificationRealizable { .. } => "classification_realizable",
            Preset::ClassificationNoisy { .. } => "classification_noisy",
            Preset::ClassificationAgnostic { .. } => "classification_agnostic",
            Preset::NoConsistency { .. } => "no_consistency",
        }
    }

    pub fn n(&self) -> u64 {
        match *self {
            Preset::BoundedLq { n, .. }
            | Preset::BoundedLqFast { n, .. }
            | Preset::AbsoluteUnbounded { n, .. }
            | Preset::HeavyTailAsymmetric { n, .. }
            | Preset::HeavyTailSymmetric { n, .. }
            | Preset::Entropy { n, .. }
            | Preset::ClassificationRealizable { n, .. }
            | Preset::ClassificationNoisy { n, .. }
            | Preset::ClassificationAgnostic { n, .. }
            | Preset::NoConsistency { n, .. } => n,
        }
    }

    pub fn build(&self) -> Result<PresetBound> {
        let n = self.n();
        if n == 0 {
            return Err(invalid("n", "must be positive"));
        }
        let nf = n as f64;
        let (hypercube, theorem_bound) = match self {
            &Preset::BoundedLq { q, big_b, g_size, n } => bounded_lq(q, big_b, g_size, n)?,
            &Preset::BoundedLqFast { q, big_b, g_size, .. } => {
                if !(q > 1.0) {
                    return Err(invalid("q", "must exceed 1"));
                }
                let m = dimension(g_size)?;
                let mf = m as f64;
                let w = (1.0 / (nf + 1.0)).min(1.0 / mf);
                let hc = Hypercube::new(m, w, 1.0, 0.0, -big_b, big_b, LossSpec::lq(q, big_b)?)?;
                let c = (q / (90.0 * (q - 1.0))).max(exp(-1.0));
                (hc, Some(c * powf(big_b, q) * (mf / (nf + 1.0)).min(1.0)))
            }
            &Preset::AbsoluteUnbounded { b, g_size, .. } => {
                let m = dimension(g_size)?;
                let mf = m as f64;
                let d = (mf / (4.0 * nf)).min(1.0);
                let loss = LossSpec::unbounded_power(1.0, b)?;
                let hc = Hypercube::symmetric(m, 1.0 / mf, d, -b, b, loss)?;
                (hc, Some((b / 4.0 * sqrt(mf / nf)).min(0.25)))
            }
            &Preset::HeavyTailAsymmetric { q, s, b, a, c, g_size, .. } => {
                check_heavy(q, s, b, a, c)?;
                let m = dimension(g_size)?;
                let mf = m as f64;
                let big_b = powf(4.0 * nf * a / mf, 1.0 / s);
                let p = powf(c / big_b, q - 1.0);
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::Constraint("p = (c / B)^(q-1) must lie in (0, 1]"));
                }
                let w = 1.0 / (4.0 * nf * p);
                if mf * w > 1.0 + 1e-12 {
                    return Err(Error::Constraint("m w <= 1"));
                }
                let r = 1.0 / (q - 1.0);
                if big_b > (powf(p, r) + powf(1.0 - p, r)) / powf(p, r) * b {
                    return Err(Error::Constraint("B <= b (p^r + (1-p)^r) / p^r"));
                }
                let hc = Hypercube::new(m, w, p, 0.0, big_b, 0.0, LossSpec::unbounded_power(q, b)?)?;
                (hc, None)
            }
            &Preset::HeavyTailSymmetric { q, s, b, a, c, g_size, .. } => {
                check_heavy(q, s, b, a, c)?;
                let m = dimension(g_size)?;
                let mf = m as f64;
                let d = powf(mf * powf(c, s) / (4.0 * nf * a), 2.0 / (s + 2.0));
                if !(d > 0.0 && d <= 1.0) {
                    return Err(Error::Constraint("d_II <= 1"));
                }
                let w = 1.0 / (4.0 * nf * d);
                if mf * w > 1.0 + 1e-12 {
                    return Err(Error::Constraint("m w <= 1"));
                }
                let big_b = c / sqrt(d);
                let r = 1.0 / (q - 1.0);
                let (hi, lo) = (powf(1.0 + sqrt(d), r), powf(1.0 - sqrt(d), r));
                if big_b > (hi + lo) / (hi - lo) * b {
                    return Err(Error::Constraint(
                        "B <= b ([1+√d_II]^r + [1-√d_II]^r) / ([1+√d_II]^r - [1-√d_II]^r)",
                    ));
                }
                let hc = Hypercube::symmetric(m, w, d, -big_b, big_b, LossSpec::unbounded_power(q, b)?)?;
                (hc, None)
            }
            &Preset::Entropy { g_size, .. } => {
                let m = dimension(g_size)?;
                let mf = m as f64;
                let w = (1.0 / (nf + 1.0)).min(1.0 / mf);
                let hc = Hypercube::new(m, w, 1.0, 0.0, 0.0, 1.0, LossSpec::entropy())?;
                (hc, Some(exp(-1.0) * ln(2.0) * (mf / (nf + 1.0)).min(1.0)))
            }
            &Preset::ClassificationRealizable { v, n } => {
                check_vc(v)?;
                let vf = v as f64;
                let zo = LossSpec::zero_one();
                if n + 2 >= v {
                    let hc = Hypercube::new(v - 1, 1.0 / (nf + 1.0), 1.0, 0.0, 0.0, 1.0, zo)?;
                    (hc, Some(realizable_bound(v, n)))
                } else {
                    let hc = Hypercube::new(v, 1.0 / vf, 1.0, 0.0, 0.0, 1.0, zo)?;
                    (hc, Some(realizable_bound(v, n)))
                }
            }
            &Preset::ClassificationNoisy { v, n, l } => {
                check_vc(v)?;
                if !(l > 0.0 && l <= 0.5) {
                    return Err(invalid("l", "must lie in (0, 1/2]"));
                }
                let vf = v as f64;
                let g = (1.0 - 2.0 * l) * (1.0 - 2.0 * l);
                let candidates = [
                    (v - 1, 2.0 * l / (vf - 1.0), (vf - 1.0) / (8.0 * nf * l)),
                    (v - 1, 4.0 / (9.0 * nf * g), g),
                    (v, 1.0 / vf, g),
                ];
                let hc = candidates
                    .iter()
                    .filter_map(|&(m, w, d)| Hypercube::symmetric(m, w, d, 0.0, 1.0, LossSpec::zero_one()).ok())
                    .map(|hc| (best_closed_bound(&hc, n), hc))
                    .fold(None, |acc: Option<(f64, Hypercube)>, (v, hc)| match acc {
                        Some((b, _)) if b >= v => acc,
                        _ => Some((v, hc)),
                    })
                    .map(|(_, hc)| hc)
                    .ok_or(Error::Constraint("no admissible hypercube for this noise level"))?;
                (hc, Some(noisy_bound(v, n, l)))
            }
            &Preset::ClassificationAgnostic { v, n } => {
                check_vc(v)?;
                let vf = v as f64;
                let gap = 0.5 * sqrt(vf / nf);
                if gap > 1.0 {
                    return Err(Error::Constraint("v <= 4 n"));
                }
                let hc = Hypercube::symmetric(v, 1.0 / vf, gap * gap, 0.0, 1.0, LossSpec::zero_one())?;
                (hc, Some(agnostic_bound(v, n)))
            }
            Preset::NoConsistency { loss, alpha, h_grid, .. } => {
                let m = floor(nf * alpha);
                if !(m >= 1.0) {
                    return Err(invalid("alpha", "n alpha must be at least 1"));
                }
                let (v, y1, y2) = no_consistency_pair(loss, h_grid)?
                    .ok_or(invalid("h_grid", "needs two distinct values"))?;
                let hc = Hypercube::new(m as u64, 1.0 / m, 1.0, 0.0, y1, y2, *loss)?;
                (hc, Some(v))
            }
        };
        let closed_value = best_closed_bound(&hypercube, n);
        Ok(PresetBound { setting: self.name(), hypercube, n, theorem_bound, closed_value })
    }
}

fn dimension(g_size: u64) -> Result<u64> {
    if g_size < 2 {
        return Err(invalid("g_size", "needs at least two experts"));
    }
    Ok(log2_floor(g_size))
}

fn check_vc(v: u64) -> Result<()> {
    if v < 2 {
        return Err(invalid("v", "VC dimension must be at least 2"));
    }
    Ok(())
}

fn check_heavy(q: f64, s: f64, b: f64, a: f64, c: f64) -> Result<()> {
    if !(q > 1.0) {
        return Err(invalid("q", "must exceed 1"));
    }
    if !(s >= q) {
        return Err(invalid("s", "must be at least q"));
    }
    if !(b > 0.0 && a > 0.0 && c > 0.0) {
        return Err(invalid("b, a, c", "must be positive"));
    }
    Ok(())
}

fn bounded_lq(q: f64, big_b: f64, g_size: u64, n: u64) -> Result<(Hypercube, Option<f64>)> {
    let m = dimension(g_size)?;
    let (mf, nf) = (m as f64, n as f64);
    let d = (mf / (4.0 * nf)).min(1.0);
    let cq = if q == 1.0 {
        0.25
    } else if q > 1.0 && q <= 1.0 + sqrt(d) {
        q / 40.0
    } else {
        return Err(Error::Constraint("1 <= q <= 1 + sqrt(m / 4n) ∧ 1"));
    };
    let loss = if q == 1.0 { LossSpec::absolute(big_b)? } else { LossSpec::lq(q, big_b)? };
    let hc = Hypercube::symmetric(m, 1.0 / mf, d, -big_b, big_b, loss)?;
    let scale = cq * powf(big_b, q);
    // |G| < 2^{4n+1} exactly when ⌊log₂|G|⌋ <= 4n.
    let bound = if m <= 4 * n { scale * sqrt(mf / nf) } else { 2.0 * scale };
    Ok((hc, Some(bound)))
}

/// Stated bound for zero-one loss when the best expert has zero risk.
pub fn realizable_bound(v: u64, n: u64) -> f64 {
    let (vf, nf) = (v as f64, n as f64);
    if n + 2 >= v {
        (vf - 1.0) / (2.0 * exp(1.0) * (nf + 1.0))
    } else {
        0.5 * powf(1.0 - 1.0 / vf, nf)
    }
}

/// Stated bound for zero-one loss when the best expert has risk `l`.
pub fn noisy_bound(v: u64, n: u64, l: f64) -> f64 {
    let (vf, nf) = (v as f64, n as f64);
    let g = (1.0 - 2.0 * l) * (1.0 - 2.0 * l);
    if g * nf / vf >= 4.0 / 9.0 {
        sqrt(l * (vf - 1.0) / (32.0 * nf)).max(2.0 * (vf - 1.0) / (27.0 * nf))
    } else {
        (1.0 - 2.0 * l) / 6.0
    }
}

/// Stated bound for zero-one loss with adversarial noise.
pub fn agnostic_bound(v: u64, n: u64) -> f64 {
    sqrt(v as f64 / n as f64) / 8.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossKind;
    use proptest::prelude::*;

    fn zo(pp: f64, pm: f64) -> Hypercube {
        Hypercube::new(1, 1.0, pp, pm, 0.0, 1.0, LossSpec::zero_one()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn d_ii_values() {
        assert_eq!(zo(1.0, 0.0).d_ii(), 1.0);
        assert!(close(zo(0.75, 0.25).d_ii(), 0.25, 1e-15));
        for i in 1..20 {
            let xi = i as f64 / 20.0;
            let hc = Hypercube::new(1, 1.0, (1.0 + xi) / 2.0, (1.0 - xi) / 2.0, 0.0, 1.0, LossSpec::zero_one()).unwrap();
            assert!(close(hc.d_ii(), xi * xi, 1e-14));
            assert!(hc.is_symmetric());
        }
    }

    #[test]
    fn d_i_values() {
        for i in 1..10 {
            let xi = i as f64 / 10.0;
            let hc = Hypercube::symmetric(3, 0.2, xi * xi, 0.0, 1.0, LossSpec::zero_one()).unwrap();
            assert!(close(hc.d_i(), xi / 2.0, 1e-14));
            let abs = Hypercube::symmetric(3, 0.2, xi * xi, -2.0, 2.0, LossSpec::absolute(2.0).unwrap()).unwrap();
            assert!(close(abs.d_i(), 2.0 * xi, 1e-13));
        }
        let ent = Hypercube::new(1, 0.5, 1.0, 0.0, 0.0, 1.0, LossSpec::entropy()).unwrap();
        assert!(close(ent.d_i(), core::f64::consts::LN_2, 1e-15));
    }

    #[test]
    fn psi_tilde_values() {
        let hc = zo(0.75, 0.25);
        assert_eq!(hc.psi_tilde(0.0), 0.0);
        assert!(close(hc.psi_tilde(1.0), hc.d_i(), 1e-15));
        assert!(close(hc.psi_tilde(3.0), 0.25, 1e-15));
        assert!(close(hc.psi_tilde(1.0 / 3.0), 1.0 / 12.0, 1e-15));
    }

    #[test]
    fn two_point_examples() {
        assert!(close(two_point_similarity(wedge, 0.75, 0.25, 1).unwrap(), 0.5, 1e-15));
        let h = two_point_similarity(hellinger, 0.75, 0.25, 1).unwrap();
        assert!(close(h, 3f64.sqrt() / 2.0, 1e-15));
        assert!(close(h * h, 1.0 - zo(0.75, 0.25).d_ii(), 1e-15));
        assert_eq!(two_point_similarity(|_| 7.0, 0.3, 0.1, 0).unwrap(), 7.0);
        assert!(two_point_similarity(wedge, 0.5, 0.1, 1001).is_err());
    }

    #[test]
    fn wedge_matches_min_sum() {
        let (pp, pm) = (0.7, 0.2);
        for k in 0..15u64 {
            let direct: f64 = (0..=k)
                .map(|j| {
                    let c = exp(ln_binomial(k, j));
                    let a = powf(pp, j as f64) * powf(1.0 - pp, (k - j) as f64);
                    let b = powf(pm, j as f64) * powf(1.0 - pm, (k - j) as f64);
                    c * a.min(b)
                })
                .sum();
            assert!(close(two_point_similarity(wedge, pp, pm, k).unwrap(), direct, 1e-13));
        }
    }

    #[test]
    fn product_examples() {
        let hc = zo(0.75, 0.25);
        assert!(close(exact_lower_bound(&hc, 1).unwrap(), 0.125, 1e-15));
        assert!(close(assouad_bound_closed(&hc, 1, ClosedForm::Tight).unwrap(), 0.125, 1e-15));
        assert_eq!(product_similarity(|_| 3.0, &hc, 0).unwrap(), 3.0);
        let det = Hypercube::new(4, 0.1, 1.0, 0.0, -1.0, 1.0, LossSpec::square(1.0).unwrap()).unwrap();
        for n in [1u64, 5, 30] {
            let want = 0.4 * det.d_i() * powf(0.9, n as f64);
            assert!(close(exact_lower_bound(&det, n).unwrap(), want, 1e-14));
            assert!(close(assouad_bound_closed(&det, n, ClosedForm::Deterministic).unwrap(), want, 1e-14));
        }
    }

    #[test]
    fn closed_form_edges() {
        let hc = Hypercube::symmetric(2, 0.5, 0.25, 0.0, 1.0, LossSpec::zero_one()).unwrap();
        assert_eq!(assouad_bound_closed(&hc, 8, ClosedForm::Weak).unwrap(), 0.0);
        assert!(assouad_bound_closed(&hc, 8, ClosedForm::Deterministic).is_err());
    }

    #[test]
    fn entropy_preset() {
        let r = Preset::Entropy { g_size: 16, n: 15 }.build().unwrap();
        let want = exp(-1.0) * core::f64::consts::LN_2 * 0.25;
        assert!(close(r.theorem_bound.unwrap(), want, 1e-15));
        assert!(r.closed_value >= want);
        assert_eq!(r.hypercube.m(), 4);
    }

    #[test]
    fn agnostic_preset() {
        let r = Preset::ClassificationAgnostic { v: 4, n: 64 }.build().unwrap();
        assert!(close(r.theorem_bound.unwrap(), 1.0 / 32.0, 1e-15));
        assert!(r.closed_value >= 1.0 / 32.0);
    }

    #[test]
    fn bounded_lq_preset() {
        let r = Preset::BoundedLq { q: 1.0, big_b: 1.0, g_size: 16, n: 16 }.build().unwrap();
        assert_eq!(r.hypercube.m(), 4);
        assert!(close(r.hypercube.d_ii(), 1.0 / 16.0, 1e-15));
        assert!(r.closed_value >= r.theorem_bound.unwrap() - 1e-12);
        assert!(matches!(
            Preset::BoundedLq { q: 3.0, big_b: 1.0, g_size: 16, n: 16 }.build(),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn fast_and_classification_presets_dominate_statements() {
        let presets = [
            Preset::BoundedLqFast { q: 2.0, big_b: 1.5, g_size: 64, n: 40 },
            Preset::BoundedLqFast { q: 1.5, big_b: 1.0, g_size: 1 << 20, n: 5 },
            Preset::AbsoluteUnbounded { b: 1.0, g_size: 8, n: 30 },
            Preset::ClassificationRealizable { v: 5, n: 20 },
            Preset::ClassificationRealizable { v: 10, n: 3 },
            Preset::ClassificationNoisy { v: 6, n: 100, l: 0.1 },
            Preset::ClassificationNoisy { v: 6, n: 5, l: 0.45 },
        ];
        for p in presets {
            let r = p.build().unwrap();
            let stated = r.theorem_bound.unwrap();
            assert!(r.closed_value >= stated - 1e-12, "{}: {} < {}", r.setting, r.closed_value, stated);
        }
    }

    #[test]
    fn heavy_tail_presets_check_constraints() {
        let ok = Preset::HeavyTailSymmetric { q: 2.0, s: 4.0, b: 1.0, a: 1.0, c: 0.5, g_size: 16, n: 200 }
            .build()
            .unwrap();
        assert!(ok.theorem_bound.is_none());
        assert!(ok.closed_value > 0.0);
        let bad = Preset::HeavyTailSymmetric { q: 2.0, s: 4.0, b: 0.01, a: 1.0, c: 5.0, g_size: 16, n: 200 }.build();
        assert!(matches!(bad, Err(Error::Constraint(_))));
        let asym = Preset::HeavyTailAsymmetric { q: 2.0, s: 2.5, b: 1.0, a: 1.0, c: 0.5, g_size: 16, n: 200 }
            .build()
            .unwrap();
        assert_eq!(asym.hypercube.p_minus(), 0.0);
        assert!(asym.closed_value > 0.0);
    }

    #[test]
    fn no_consistency_values() {
        let g = crate::math::grid(-1.0, 1.0, 21, false);
        assert_eq!(no_consistency_bound(&LossSpec::zero_one(), &[0.0, 1.0]).unwrap(), 0.5);
        let sq = LossSpec::lq(3.0, 1.0).unwrap();
        assert!(close(no_consistency_bound(&sq, &g).unwrap(), 1.0, 1e-12));
        assert_eq!(no_consistency_bound(&sq, &[0.3]).unwrap(), 0.0);
        let r = Preset::NoConsistency { loss: LossSpec::zero_one(), alpha: 2.0, n: 50, h_grid: alloc::vec![0.0, 1.0] }
            .build()
            .unwrap();
        assert_eq!(r.hypercube.m(), 100);
        assert!(r.closed_value > 0.5 * 0.6);
    }

    #[test]
    fn vertex_distributions() {
        let hc = Hypercube::symmetric(2, 0.5, 0.36, 0.0, 1.0, LossSpec::zero_one()).unwrap();
        let d = hypercube_vertex_distribution(&hc, &[true, true], &default_cells(2)).unwrap();
        for cell in [1u64, 2] {
            let p1: f64 = d.atoms().iter().filter(|a| a.cell == cell && a.y == 0.0).map(|a| a.prob).sum();
            assert!(close(p1 / 0.5, hc.p_plus(), 1e-15));
        }
        let hc = Hypercube::symmetric(3, 0.2, 0.5, -1.0, 1.0, LossSpec::square(1.0).unwrap()).unwrap();
        let reference = hypercube_vertex_distribution(&hc, &vertex_signs(3, 0), &default_cells(3)).unwrap().marginal();
        for i in 0..8 {
            let d = hypercube_vertex_distribution(&hc, &vertex_signs(3, i), &default_cells(3)).unwrap();
            assert!(close(d.total_mass(), 1.0, 1e-12));
            for (c, m) in d.marginal() {
                assert!(close(m, reference[&c], 1e-15));
            }
        }
        assert!(hypercube_vertex_distribution(&hc, &[true], &default_cells(3)).is_err());
    }

    #[test]
    fn pattern_experts_hold_every_bayes_predictor() {
        let losses = [LossSpec::zero_one(), LossSpec::square(1.0).unwrap(), LossSpec::lq(1.5, 1.0).unwrap()];
        for loss in losses {
            let (h1, h2) = if matches!(loss.kind(), LossKind::ZeroOne) { (0.0, 1.0) } else { (-1.0, 1.0) };
            for m in 1..=6u64 {
                let hc = Hypercube::symmetric(m, 1.0 / (m as f64 + 1.0), 0.3, h1, h2, loss).unwrap();
                let d = (1usize << m) + 3;
                let table = pattern_expert_set(&hc, d).unwrap();
                assert_eq!(table.num_experts(), d);
                for i in 0..(1u64 << m) {
                    let dist = hypercube_vertex_distribution(&hc, &vertex_signs(m, i), &default_cells(m)).unwrap();
                    let risks = dist.expert_risks(&loss, &table).unwrap();
                    let best = risks.iter().copied().fold(f64::INFINITY, f64::min);
                    let bayes = dist.bayes_risk_two_point(&loss).unwrap();
                    assert!(close(best, bayes, 1e-12));
                    assert!(close(risks[i as usize], bayes, 1e-12));
                    let unpadded = risks[..1 << m].iter().copied().fold(f64::INFINITY, f64::min);
                    assert_eq!(best, unpadded);
                }
            }
        }
        let hc = Hypercube::symmetric(1, 0.5, 0.25, 0.0, 1.0, LossSpec::zero_one()).unwrap();
        let t = pattern_expert_set(&hc, 2).unwrap();
        assert_eq!(t.prediction(0, 1), 0.0);
        assert_eq!(t.prediction(1, 1), 1.0);
        assert!(pattern_expert_set(&hc, 1).is_err());
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn d_i_matches_quadrature() {
        for &q in &[1.3, 1.5, 2.0, 3.0] {
            for &(pp, pm) in &[(0.8, 0.2), (0.6, 0.1), (0.95, 0.5), (0.9, 0.05)] {
                let loss = LossSpec::lq(q, 2.0).unwrap();
                let hc = Hypercube::new(2, 0.3, pp, pm, -2.0, 1.0, loss).unwrap();
                let integrand = |t: f64| {
                    let p = pm + (pp - pm) * t;
                    t.min(1.0 - t) * loss.phi_second_derivative(p, -2.0, 1.0).unwrap().abs()
                };
                let quad = (pp - pm) * (pp - pm) / 2.0
                    * (simpson(integrand, 0.0, 0.5, 2000) + simpson(integrand, 0.5, 1.0, 2000));
                assert!(close(hc.d_i(), quad, 1e-4), "q={q} p=({pp},{pm}): {} vs {quad}", hc.d_i());
            }
        }
    }

    fn arb_hc() -> impl Strategy<Value = Hypercube> {
        (1u64..6, 0.05f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0usize..3).prop_filter_map(
            "p_minus < p_plus",
            |(m, wfrac, a, b, l)| {
                let (pm, pp) = if a < b { (a, b) } else { (b, a) };
                if pp - pm < 1e-3 {
                    return None;
                }
                let loss = [LossSpec::zero_one(), LossSpec::square(1.0).unwrap(), LossSpec::absolute(1.0).unwrap()][l];
                let (h1, h2) = if l == 0 { (0.0, 1.0) } else { (-1.0, 1.0) };
                Hypercube::new(m, wfrac / m as f64, pp, pm, h1, h2, loss).ok()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn psi_tilde_dominates_linear_floor(hc in arb_hc(), u in 0.0f64..20.0) {
            let floor = u.min(1.0) * hc.m() as f64 * hc.w() * hc.d_i();
            prop_assert!(hc.psi_tilde(u) >= floor - 1e-12);
        }

        #[test]
        fn jensen_cap(hc in arb_hc(), n in 0u64..60) {
            let cap = hc.m() as f64 * hc.w() * hc.d_i();
            prop_assert!(exact_lower_bound(&hc, n).unwrap() <= cap + 1e-12);
        }

        #[test]
        fn wedge_sandwich(hc in arb_hc(), n in 0u64..=50) {
            let exact = product_similarity(wedge, &hc, n).unwrap();
            let nw = n as f64 * hc.w();
            let mid = 1.0 - sqrt((1.0 - powf(1.0 - hc.d_ii(), nw)).max(0.0));
            let low = 1.0 - sqrt(nw * hc.d_ii());
            prop_assert!(exact >= mid - 1e-12);
            prop_assert!(exact >= low - 1e-12);
            // The middle step uses `1 - (1 - d)^x <= x d`, true only for `x >= 1`.
            if nw >= 1.0 {
                prop_assert!(mid >= low - 1e-12);
            }
        }

        #[test]
        fn two_point_wedge_floor(pp in 0.0f64..1.0, pm in 0.0f64..1.0, k in 0u64..=20) {
            let (pm, pp) = if pm < pp { (pm, pp) } else { (pp, pm) };
            let hc = zo(pp.max(pm + 1e-6).min(1.0), pm);
            let d = hc.d_ii();
            let v = two_point_similarity(wedge, hc.p_plus(), hc.p_minus(), k).unwrap();
            prop_assert!(v >= 1.0 - sqrt((1.0 - powf(1.0 - d, k as f64)).max(0.0)) - 1e-12);
        }

        #[test]
        fn hellinger_tensorizes(pp in 0.0f64..=1.0, pm in 0.0f64..=1.0, k in 0u64..40) {
            let one = two_point_similarity(hellinger, pp, pm, 1).unwrap();
            let many = two_point_similarity(hellinger, pp, pm, k).unwrap();
            prop_assert!((many - powf(one, k as f64)).abs() <= 1e-12);
        }

        #[test]
        fn tight_closed_form_is_below_exact(hc in arb_hc(), n in 0u64..80) {
            let exact = exact_lower_bound(&hc, n).unwrap();
            let tight = assouad_bound_closed(&hc, n, ClosedForm::Tight).unwrap();
            prop_assert!(tight <= exact + 1e-9);
        }
    }
}
