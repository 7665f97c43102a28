//! Aggregation estimators over a finite expert table.
//!
//! * [`seqrand_fit`] / [`seqrand_predict`]: sequential randomization. The
//!   cumulative score `S_i(g) = S_{i-1}(g) + L(Z_i, g) + δ_λ(Z_i, g, ĝ_{i-1})`
//!   drives the Gibbs weights `π_{-λS_i}`, whose `π̂` image `ρ̂_i` yields the
//!   next function `ĝ_i`. Prediction draws one of `ĝ_0..ĝ_n` uniformly or
//!   averages their means.
//! * [`online_seqrand`]: the same recursion used to predict `Z_i` with
//!   `ĝ_{i-1}` before updating.
//! * [`progressive_mixture`]: Cesàro average of the exponentially weighted
//!   mixtures.
//! * [`algorithm_b_substitution`]: a grid-searched substitution prediction
//!   that dominates the exponentially weighted mixture loss.
//! * [`gibbs_erm`]: one Gibbs update on the full cumulative loss.
//! * [`upper_bound_value`]: closed-form excess risk guarantees.

use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gibbs::{gibbs_posterior, log_partition, mixture_at, sample, ExpertTable, LogWeights, Outcome};
use crate::losses::{LossKind, LossSpec};
use crate::math::{ext_float, grid, ln, log_sum_exp, powf, sqrt};
use crate::rng::uniform_index;
use crate::variance::{log_mix_loss, PiHat, VarianceFn};

/// How the fitted sequence `ĝ_0..ĝ_n` turns into one prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// Predict with `ĝ_I`, `I` uniform on `{0, .., n}`.
    UniformDraw,
    /// Predict with the average of the `n + 1` mixtures.
    CesaroMean,
}

/// Grids used by the substitution search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstitutionGrid {
    /// Candidate predictions, spread over the prediction range.
    pub candidates: usize,
    /// Outputs `y` at which the substitution inequality is checked.
    pub outputs: usize,
    /// Slack allowed in the substitution inequality.
    pub tolerance: f64,
}

impl Default for SubstitutionGrid {
    fn default() -> Self {
        Self {
            candidates: 201,
            outputs: 201,
            tolerance: 1e-9,
        }
    }
}

impl SubstitutionGrid {
    /// Output values to check: `{0, 1}` for labels, a closed grid otherwise.
    pub fn output_grid(&self, loss: &LossSpec) -> Result<Vec<f64>> {
        if matches!(loss.kind(), LossKind::ZeroOne) {
            return Ok(alloc::vec![0.0, 1.0]);
        }
        let r = loss.output_range();
        if !r.is_bounded() {
            return Err(invalid("output_range", "substitution needs bounded outputs"));
        }
        if self.outputs == 0 {
            return Err(invalid("outputs", "empty output grid"));
        }
        Ok(grid(r.lo, r.hi, self.outputs, false))
    }

    fn candidate_grid(&self, loss: &LossSpec) -> Vec<f64> {
        if matches!(loss.kind(), LossKind::ZeroOne) {
            return alloc::vec![0.0, 1.0];
        }
        let r = loss.prediction_range();
        if r.is_bounded() {
            grid(r.lo, r.hi, self.candidates, false)
        } else {
            Vec::new()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub lambda: f64,
    pub prior: LogWeights,
    pub variance_fn: VarianceFn,
    pub output_mode: OutputMode,
    #[serde(default)]
    pub substitution: SubstitutionGrid,
}

impl EstimatorConfig {
    pub fn new(lambda: f64, prior: LogWeights, variance_fn: VarianceFn, output_mode: OutputMode) -> Self {
        Self {
            lambda,
            prior,
            variance_fn,
            output_mode,
            substitution: SubstitutionGrid::default(),
        }
    }

    pub fn validate(&self, loss: &LossSpec, experts: &ExpertTable) -> Result<()> {
        if self.prior.len() != experts.num_experts() {
            return Err(Error::LengthMismatch(self.prior.len(), experts.num_experts()));
        }
        experts.check_range(loss)?;
        self.variance_fn.check_admissible(loss, self.lambda)
    }
}

/// The function `ĝ_i` produced at step `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Draw {
    /// An expert drawn from `ρ̂_i`.
    Expert { index: usize },
    /// The mixture `E_{g∼π_{-λS_i}} g`, which need not belong to the table.
    Mixture,
    /// A substitution prediction, one value per cell.
    Substitution { predictions: Vec<f64> },
}

/// Artifact of [`seqrand_fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedAggregate {
    /// `S_i(g)` for `i = 0..n`, one row per step.
    #[serde(with = "ext_float::matrix")]
    pub s_table: Vec<Vec<f64>>,
    /// Gibbs weights `π_{-λS_i}`, `i = 0..n`; `ρ̂_i` is their `π̂` image.
    pub posterior_trajectory: Vec<LogWeights>,
    /// `ĝ_0..ĝ_n`.
    pub drawn: Vec<Draw>,
    /// `log E_π exp(-λ S_i)`, `i = 0..n`, maintained incrementally.
    #[serde(with = "ext_float::vec")]
    pub log_partitions: Vec<f64>,
}

impl FittedAggregate {
    /// Number of observations the fit consumed.
    pub fn n(&self) -> usize {
        self.drawn.len() - 1
    }

    /// Predictions of `ĝ_i` on every cell, one row per step.
    pub fn draw_predictions(&self, experts: &ExpertTable) -> Vec<Vec<f64>> {
        (0..self.drawn.len())
            .map(|i| (0..experts.num_cells()).map(|k| self.draw_at(experts, i, k)).collect())
            .collect()
    }

    /// `ĝ_i` on the cell at position `k`.
    pub fn draw_at(&self, experts: &ExpertTable, i: usize, k: usize) -> f64 {
        match &self.drawn[i] {
            Draw::Expert { index } => experts.prediction(*index, k),
            Draw::Mixture => mixture_at(&self.posterior_trajectory[i], experts, k),
            Draw::Substitution { predictions } => predictions[k],
        }
    }

    /// Mean of `ρ̂_i` on the cell at position `k`.
    fn mean_at(&self, experts: &ExpertTable, i: usize, k: usize) -> f64 {
        match &self.drawn[i] {
            Draw::Substitution { predictions } => predictions[k],
            _ => mixture_at(&self.posterior_trajectory[i], experts, k),
        }
    }

    /// Deterministic Cesàro prediction on every cell.
    pub fn cesaro_predictions(&self, experts: &ExpertTable) -> Vec<f64> {
        let m = self.drawn.len() as f64;
        (0..experts.num_cells())
            .map(|k| {
                let mut s = 0.0;
                for i in 0..self.drawn.len() {
                    s += self.mean_at(experts, i, k);
                }
                s / m
            })
            .collect()
    }

    /// Largest gap between the stored log-partitions and a from-scratch
    /// recomputation from `s_table`.
    pub fn telescoping_error(&self, prior: &LogWeights, lambda: f64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (row, &stored) in self.s_table.iter().zip(&self.log_partitions) {
            let fresh = log_partition(prior, row, lambda)?;
            worst = worst.max((fresh - stored).abs());
        }
        Ok(worst)
    }
}

/// Per-step state of the sequential recursion.
struct Engine<'a> {
    loss: &'a LossSpec,
    config: &'a EstimatorConfig,
    experts: &'a ExpertTable,
    q: f64,
    /// `S_i(g)`.
    s: Vec<f64>,
    /// `Σ_i(g)`, the cumulative loss without `δ`.
    sigma: Vec<f64>,
    /// `Σ_i δ_λ(Z_i, g, ĝ_{i-1})`.
    delta_sum: Vec<f64>,
    weights: LogWeights,
    draw: Draw,
    log_z: f64,
    step: usize,
    losses: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn start<R: RngCore + ?Sized>(
        loss: &'a LossSpec,
        config: &'a EstimatorConfig,
        experts: &'a ExpertTable,
        rng: &mut R,
    ) -> Result<Self> {
        let d = experts.num_experts();
        let weights = config.prior.clone();
        let mut e = Self {
            loss,
            config,
            experts,
            q: loss.kind().exponent().unwrap_or(1.0),
            s: alloc::vec![0.0; d],
            sigma: alloc::vec![0.0; d],
            delta_sum: alloc::vec![0.0; d],
            weights,
            draw: Draw::Mixture,
            log_z: 0.0,
            step: 0,
            losses: alloc::vec![0.0; d],
        };
        e.draw = e.realize(rng)?;
        Ok(e)
    }

    fn realize<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<Draw> {
        Ok(match self.config.variance_fn.pi_hat {
            PiHat::Identity => Draw::Expert {
                index: sample(&self.weights, rng),
            },
            PiHat::DiracMixture => Draw::Mixture,
            PiHat::Substitution => {
                let y_grid = self.config.substitution.output_grid(self.loss)?;
                let mut predictions = Vec::with_capacity(self.experts.num_cells());
                for &cell in self.experts.cells() {
                    let y = substitution_search(
                        self.loss,
                        &self.weights,
                        self.experts,
                        self.config.lambda,
                        self.experts.cell_index(cell)?,
                        &y_grid,
                        &self.config.substitution.candidate_grid(self.loss),
                        self.config.substitution.tolerance,
                    )?
                    .ok_or(Error::SubstitutionFailed(self.step))?;
                    predictions.push(y);
                }
                Draw::Substitution { predictions }
            }
        })
    }

    /// Prediction of the current `ĝ` on the cell at position `k`.
    fn current_prediction(&self, k: usize) -> f64 {
        match &self.draw {
            Draw::Expert { index } => self.experts.prediction(*index, k),
            Draw::Mixture => mixture_at(&self.weights, self.experts, k),
            Draw::Substitution { predictions } => predictions[k],
        }
    }

    /// Consumes `z`, returning the loss of the outgoing `ĝ` on it.
    fn update<R: RngCore + ?Sized>(&mut self, z: &Outcome, rng: &mut R) -> Result<f64> {
        if z.y.is_nan() {
            return Err(Error::NaN("outcome"));
        }
        self.step += 1;
        let k = self.experts.cell_index(z.cell)?;
        let prev_loss = self.loss.value(z.y, self.current_prediction(k));
        let lambda = self.config.lambda;
        let vf = &self.config.variance_fn;
        let mut incr = core::mem::take(&mut self.losses);
        for (j, inc) in incr.iter_mut().enumerate() {
            let l = self.loss.value(z.y, self.experts.prediction(j, k));
            let dl = vf.value(lambda, self.q, z.y, l, prev_loss);
            self.sigma[j] += l;
            self.delta_sum[j] += dl;
            let v = l + dl;
            self.s[j] += v;
            *inc = v;
        }
        // log Z_i - log Z_{i-1} = log E_{π_{-λS_{i-1}}} exp(-λ (S_i - S_{i-1})).
        let steps: Vec<f64> = self
            .weights
            .log_masses()
            .iter()
            .zip(&incr)
            .map(|(&lw, &v)| {
                if lw == f64::NEG_INFINITY || v == f64::INFINITY {
                    f64::NEG_INFINITY
                } else {
                    lw - lambda * v
                }
            })
            .collect();
        self.log_z += log_sum_exp(&steps);
        self.losses = incr;
        // When δ does not depend on the experts it shifts every S_i(g) by the
        // same amount, so the weights are computed from Σ_i directly.
        let score = if vf.is_expert_independent() { &self.sigma } else { &self.s };
        self.weights = gibbs_posterior(&self.config.prior, score, lambda).map_err(|e| match e {
            Error::DegeneratePosterior => Error::DegenerateAtStep(self.step),
            other => other,
        })?;
        self.draw = self.realize(rng)?;
        Ok(prev_loss)
    }
}

/// Runs the sequential randomization recursion over `data`.
pub fn seqrand_fit<R: RngCore + ?Sized>(
    config: &EstimatorConfig,
    loss: &LossSpec,
    experts: &ExpertTable,
    data: &[Outcome],
    rng: &mut R,
) -> Result<FittedAggregate> {
    config.validate(loss, experts)?;
    let mut e = Engine::start(loss, config, experts, rng)?;
    let mut fit = FittedAggregate {
        s_table: alloc::vec![e.s.clone()],
        posterior_trajectory: alloc::vec![e.weights.clone()],
        drawn: alloc::vec![e.draw.clone()],
        log_partitions: alloc::vec![0.0],
    };
    for z in data {
        e.update(z, rng)?;
        fit.s_table.push(e.s.clone());
        fit.posterior_trajectory.push(e.weights.clone());
        fit.drawn.push(e.draw.clone());
        fit.log_partitions.push(e.log_z);
    }
    Ok(fit)
}

/// One prediction of the fitted aggregate on `cell`.
pub fn seqrand_predict<R: RngCore + ?Sized>(
    fitted: &FittedAggregate,
    config: &EstimatorConfig,
    experts: &ExpertTable,
    cell: u64,
    rng: &mut R,
) -> Result<f64> {
    let k = experts.cell_index(cell)?;
    Ok(match config.output_mode {
        OutputMode::UniformDraw => {
            let i = uniform_index(rng, fitted.drawn.len());
            fitted.draw_at(experts, i, k)
        }
        OutputMode::CesaroMean => {
            let m = fitted.drawn.len() as f64;
            let mut s = 0.0;
            for i in 0..fitted.drawn.len() {
                s += fitted.mean_at(experts, i, k);
            }
            s / m
        }
    })
}

/// Result of [`online_seqrand`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineRun {
    /// Prediction of `ĝ_{i-1}` on `Z_i`.
    pub predictions: Vec<f64>,
    /// `L(Z_i, ĝ_{i-1})`.
    #[serde(with = "ext_float::vec")]
    pub losses: Vec<f64>,
    /// `Σ_i L(Z_i, ĝ_{i-1})`.
    pub cumulative_loss: f64,
    /// `Σ_i L(Z_i, g)` for every expert.
    #[serde(with = "ext_float::vec")]
    pub expert_losses: Vec<f64>,
    /// `Σ_i δ_λ(Z_i, g, ĝ_{i-1})` for every expert.
    #[serde(with = "ext_float::vec")]
    pub expert_deltas: Vec<f64>,
    /// `min_g {Σ L + Σ δ + log(1/π(g)) / λ}` for this run.
    pub audit_rhs: f64,
}

/// `min_g {loss_g + delta_g + log(1/π(g)) / λ}`; with a uniform prior the
/// penalty is `log|G| / λ`.
pub fn online_audit_rhs(expert_losses: &[f64], expert_deltas: &[f64], prior: &LogWeights, lambda: f64) -> f64 {
    expert_losses
        .iter()
        .zip(expert_deltas)
        .zip(prior.log_masses())
        .map(|((&l, &d), &lp)| l + d - lp / lambda)
        .fold(f64::INFINITY, f64::min)
}

/// Predicts every `Z_i` with `ĝ_{i-1}` and then updates.
pub fn online_seqrand<R: RngCore + ?Sized>(
    config: &EstimatorConfig,
    loss: &LossSpec,
    experts: &ExpertTable,
    stream: &[Outcome],
    rng: &mut R,
) -> Result<OnlineRun> {
    config.validate(loss, experts)?;
    let mut e = Engine::start(loss, config, experts, rng)?;
    let mut predictions = Vec::with_capacity(stream.len());
    let mut losses = Vec::with_capacity(stream.len());
    for z in stream {
        predictions.push(e.current_prediction(experts.cell_index(z.cell)?));
        losses.push(e.update(z, rng)?);
    }
    let cumulative_loss = losses.iter().sum();
    let audit_rhs = online_audit_rhs(&e.sigma, &e.delta_sum, &config.prior, config.lambda);
    Ok(OnlineRun {
        predictions,
        losses,
        cumulative_loss,
        expert_losses: e.sigma,
        expert_deltas: e.delta_sum,
        audit_rhs,
    })
}

/// Cell-wise average of the `n + 1` mixtures `E_{g∼π_{-λΣ_i}} g`.
pub fn progressive_mixture(
    loss: &LossSpec,
    lambda: f64,
    prior: &LogWeights,
    experts: &ExpertTable,
    data: &[Outcome],
) -> Result<Vec<f64>> {
    if prior.len() != experts.num_experts() {
        return Err(Error::LengthMismatch(prior.len(), experts.num_experts()));
    }
    let kc = experts.num_cells();
    let mut sigma = alloc::vec![0.0; experts.num_experts()];
    let mut sums: Vec<f64> = (0..kc).map(|k| mixture_at(prior, experts, k)).collect();
    for (i, z) in data.iter().enumerate() {
        let k = experts.cell_index(z.cell)?;
        for (j, s) in sigma.iter_mut().enumerate() {
            *s += loss.value(z.y, experts.prediction(j, k));
        }
        let w = gibbs_posterior(prior, &sigma, lambda).map_err(|e| match e {
            Error::DegeneratePosterior => Error::DegenerateAtStep(i + 1),
            other => other,
        })?;
        for (k, s) in sums.iter_mut().enumerate() {
            *s += mixture_at(&w, experts, k);
        }
    }
    let m = (data.len() + 1) as f64;
    Ok(sums.into_iter().map(|s| s / m).collect())
}

/// Gibbs weights `π_{-λΣ_n}` on the full sample.
pub fn gibbs_erm(
    loss: &LossSpec,
    lambda: f64,
    prior: &LogWeights,
    experts: &ExpertTable,
    data: &[Outcome],
) -> Result<LogWeights> {
    gibbs_posterior(prior, &cumulative_losses(loss, experts, data)?, lambda)
}

/// `Σ_n(g) = Σ_i L(Z_i, g)` for every expert.
pub fn cumulative_losses(loss: &LossSpec, experts: &ExpertTable, data: &[Outcome]) -> Result<Vec<f64>> {
    let mut sigma = alloc::vec![0.0; experts.num_experts()];
    for z in data {
        if z.y.is_nan() {
            return Err(Error::NaN("outcome"));
        }
        let k = experts.cell_index(z.cell)?;
        for (j, s) in sigma.iter_mut().enumerate() {
            *s += loss.value(z.y, experts.prediction(j, k));
        }
    }
    Ok(sigma)
}

/// Grid search for `y*` with `ℓ(y, y*) ≤ -(1/λ) log E_ρ exp(-λ ℓ(y, g(x)))`
/// at every `y` of `y_grid` (up to `tolerance`). Candidates are the mixture
/// mean, the experts' own predictions and `y_grid` itself, restricted to the
/// prediction range; the candidate with the most slack wins. `None` means
/// the search failed.
pub fn algorithm_b_substitution(
    loss: &LossSpec,
    rho: &LogWeights,
    experts: &ExpertTable,
    lambda: f64,
    cell: u64,
    y_grid: &[f64],
    tolerance: f64,
) -> Result<Option<f64>> {
    let k = experts.cell_index(cell)?;
    substitution_search(loss, rho, experts, lambda, k, y_grid, y_grid, tolerance)
}

#[allow(clippy::too_many_arguments)]
fn substitution_search(
    loss: &LossSpec,
    rho: &LogWeights,
    experts: &ExpertTable,
    lambda: f64,
    k: usize,
    y_grid: &[f64],
    extra_candidates: &[f64],
    tolerance: f64,
) -> Result<Option<f64>> {
    if y_grid.is_empty() {
        return Err(invalid("y_grid", "empty grid"));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda", "must be positive and finite"));
    }
    if rho.len() != experts.num_experts() {
        return Err(Error::LengthMismatch(rho.len(), experts.num_experts()));
    }
    let targets: Vec<f64> = y_grid
        .iter()
        .map(|&y| log_mix_loss(loss, lambda, experts, rho, k, y))
        .collect();
    let range = loss.prediction_range();
    let mut candidates = Vec::with_capacity(1 + experts.num_experts() + extra_candidates.len());
    if loss.is_convex() {
        candidates.push(mixture_at(rho, experts, k));
    }
    let out = loss.output_range();
    if matches!(loss.kind(), LossKind::Square) && out.is_bounded() && out.lo == -out.hi {
        // Equalizes the slack at both ends of [-B, B]: (B + c)² - (B - c)² = m(-B) - m(B).
        let b = out.hi;
        let m_lo = -log_mix_loss(loss, lambda, experts, rho, k, -b);
        let m_hi = -log_mix_loss(loss, lambda, experts, rho, k, b);
        candidates.push(((m_lo - m_hi) / (4.0 * b)).clamp(-b, b));
    }
    candidates.extend((0..experts.num_experts()).map(|j| experts.prediction(j, k)));
    candidates.extend(extra_candidates.iter().copied().filter(|&c| range.contains(c)));
    let mut best: Option<(f64, f64)> = None;
    for &c in &candidates {
        let mut worst = f64::NEG_INFINITY;
        for (&y, &t) in y_grid.iter().zip(&targets) {
            let v = loss.value(y, c);
            // `t = -inf` means every expert has infinite loss at `y`.
            let margin = if t == f64::NEG_INFINITY { f64::NEG_INFINITY } else { v + t };
            worst = worst.max(margin);
        }
        if best.is_none_or(|(_, w)| worst < w) {
            best = Some((c, worst));
        }
    }
    Ok(best.and_then(|(c, w)| (w <= tolerance).then_some(c)))
}

/// Closed-form expected excess risk guarantees, named by setting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "setting", rename_all = "snake_case", deny_unknown_fields)]
pub enum UpperBound {
    /// `min_G R + log|G| / (λ (n+1))` for a valid variance inequality with
    /// `δ ≡ 0` and uniform prior.
    ExpWeights { min_risk: f64, g_size: f64, lambda: f64, n: f64 },
    /// `2 B² log|G| / (n+1)`: square loss, mixture of experts at `λ = 1/(2B²)`.
    SquareMixture { big_b: f64, g_size: f64, n: f64 },
    /// `span √(log|G| / (2(n+1)))`: bounded losses with the constant
    /// Hoeffding variance term.
    Hoeffding { span: f64, g_size: f64, n: f64 },
    /// `2b √(2 log|G| / (n+1))`: absolute loss with second moments bounded
    /// by `b²`.
    AbsoluteBernstein { b: f64, g_size: f64, n: f64 },
    /// `q (1 ∧ 2^{q-2}) B^q / (q-1) · log 2 · log₂|G| / n`: L_q loss on
    /// `[-B, B]`.
    LqMixable { q: f64, big_b: f64, g_size: f64, n: f64 },
    /// `log|G| / n`: entropy loss.
    Entropy { g_size: f64, n: f64 },
    /// `min_G R + 4c log|G| / (n+1)`: Bernstein variance term under the
    /// margin condition with exponent one.
    BernsteinMargin { min_risk: f64, c: f64, g_size: f64, n: f64 },
}

impl UpperBound {
    pub fn name(&self) -> &'static str {
        match self {
            UpperBound::ExpWeights { .. } => "exp_weights",
            UpperBound::SquareMixture { .. } => "square_mixture",
            UpperBound::Hoeffding { .. } => "hoeffding",
            UpperBound::AbsoluteBernstein { .. } => "absolute_bernstein",
            UpperBound::LqMixable { .. } => "lq_mixable",
            UpperBound::Entropy { .. } => "entropy",
            UpperBound::BernsteinMargin { .. } => "bernstein_margin",
        }
    }
}

/// Evaluates an [`UpperBound`].
pub fn upper_bound_value(setting: &UpperBound) -> Result<f64> {
    let check_g = |g: f64| {
        if g >= 1.0 && g.is_finite() {
            Ok(ln(g))
        } else {
            Err(invalid("g_size", "must be at least 1"))
        }
    };
    let check_pos = |name: &'static str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(invalid(name, "must be positive"))
        }
    };
    let check_n = |n: f64| {
        if n >= 0.0 && n.is_finite() {
            Ok(n)
        } else {
            Err(invalid("n", "must be nonnegative"))
        }
    };
    Ok(match *setting {
        UpperBound::ExpWeights { min_risk, g_size, lambda, n } => {
            min_risk + check_g(g_size)? / (check_pos("lambda", lambda)? * (check_n(n)? + 1.0))
        }
        UpperBound::SquareMixture { big_b, g_size, n } => {
            2.0 * big_b * big_b * check_g(g_size)? / (check_n(n)? + 1.0)
        }
        UpperBound::Hoeffding { span, g_size, n } => {
            check_pos("span", span)? * sqrt(check_g(g_size)? / (2.0 * (check_n(n)? + 1.0)))
        }
        UpperBound::AbsoluteBernstein { b, g_size, n } => {
            2.0 * check_pos("b", b)? * sqrt(2.0 * check_g(g_size)? / (check_n(n)? + 1.0))
        }
        UpperBound::LqMixable { q, big_b, g_size, n } => {
            if !(q > 1.0) {
                return Err(invalid("q", "must exceed 1"));
            }
            let lg = check_g(g_size)?;
            q * f64::min(1.0, powf(2.0, q - 2.0)) * powf(check_pos("B", big_b)?, q) / (q - 1.0) * lg
                / check_pos("n", n)?
        }
        UpperBound::Entropy { g_size, n } => check_g(g_size)? / check_pos("n", n)?,
        UpperBound::BernsteinMargin { min_risk, c, g_size, n } => {
            min_risk + 4.0 * check_pos("c", c)? * check_g(g_size)? / (check_n(n)? + 1.0)
        }
    })
}

/// `λ = √(8 log|G| / (span² (n+1)))`, the rate matched to the Hoeffding term.
pub fn lambda_hoeffding(span: f64, g_size: usize, n: usize) -> f64 {
    sqrt(8.0 * ln(g_size as f64) / (span * span * (n as f64 + 1.0)))
}

/// `λ = √(log|G| / (2b² (n+1)))`, the rate matched to the absolute-loss
/// Bernstein bound.
pub fn lambda_absolute(b: f64, g_size: usize, n: usize) -> f64 {
    sqrt(ln(g_size as f64) / (2.0 * b * b * (n as f64 + 1.0)))
}

/// `λ = C₁ (log|G|/n)^κ` with `κ = (q-1)/s` when `q ≤ s < 2q-2` and
/// `κ = q/(s+2)` when `s ≥ 2q-2`.
pub fn lambda_heavy_tail(c1: f64, q: f64, s: f64, g_size: usize, n: usize) -> f64 {
    let kappa = if s < 2.0 * q - 2.0 { (q - 1.0) / s } else { q / (s + 2.0) };
    c1 * powf(ln(g_size as f64) / n as f64, kappa)
}

/// Rate exponent `γ` in `excess ≍ (log|G|/n)^γ` for the heavy-tail estimator.
pub fn heavy_tail_rate_exponent(q: f64, s: f64) -> f64 {
    if s <= 2.0 * q - 2.0 {
        1.0 - (q - 1.0) / s
    } else {
        1.0 - q / (s + 2.0)
    }
}
