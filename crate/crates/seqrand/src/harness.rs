//! Monte-Carlo evaluation of aggregation procedures.
//!
//! Every trial `t` of an experiment draws its sample and its internal
//! randomization from ChaCha8 stream `base + t` under the master seed, so the
//! statistics do not depend on how rayon schedules the trials. Risks are
//! computed exactly (finite distributions, or closed form for the square loss
//! under the heavy-tail generator) and the final uniform draw over the `n + 1`
//! intermediate functions is averaged out rather than sampled.

use std::sync::OnceLock;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use seqrand_core::aggregators::{
    cumulative_losses, gibbs_erm, lambda_absolute, lambda_heavy_tail, lambda_hoeffding, progressive_mixture, seqrand_fit,
    EstimatorConfig, OutputMode,
};
use seqrand_core::distribution::DiscreteDistribution;
use seqrand_core::gibbs::{mixture_at, ExpertTable, LogWeights, Outcome};
use seqrand_core::minimax::{
    best_closed_bound, default_cells, hypercube_vertex_distribution, vertex_signs, Hypercube,
};
use seqrand_core::rng::{stream_rng, unit_f64};
use seqrand_core::variance::{heavy_tail_threshold, VarianceFn};
use seqrand_core::{LossKind, LossSpec};

use crate::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Draws used by the heavy-tail moment self-check and by risk quadrature.
pub const QUADRATURE_DRAWS: usize = 1_000_000;

/// Seed of the fixed quadrature sample, independent of any master seed.
const QUADRATURE_SEED: u64 = 0x5eed_0f9a;

/// Summary of a Monte-Carlo experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub master_seed: u64,
}

impl MCResult {
    pub fn from_samples(samples: &[f64], master_seed: u64) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::Config("at least two trials are needed".into()));
        }
        let mean = pairwise_sum(samples) / n as f64;
        let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&sq) / (n - 1) as f64;
        Ok(Self { mean, stderr: (var / n as f64).sqrt(), trials: n, master_seed })
    }
}

/// Pairwise (cascade) summation: error `O(log n)` ulps and a fixed
/// association order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// A law of `(x, y)` with exact (or fixed-quadrature) risk evaluation.
pub trait DataSource: Sync {
    fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Outcome>;

    /// Risk of the predictor with value `preds[k]` on `experts.cells()[k]`.
    fn risk(&self, loss: &LossSpec, experts: &ExpertTable, preds: &[f64]) -> Result<f64>;

    fn expert_risks(&self, loss: &LossSpec, experts: &ExpertTable) -> Result<Vec<f64>> {
        (0..experts.num_experts())
            .map(|j| {
                let preds: Vec<f64> = (0..experts.num_cells()).map(|k| experts.prediction(j, k)).collect();
                self.risk(loss, experts, &preds)
            })
            .collect()
    }
}

impl DataSource for DiscreteDistribution {
    fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Outcome> {
        self.sample_n(rng, n)
    }

    fn risk(&self, loss: &LossSpec, experts: &ExpertTable, preds: &[f64]) -> Result<f64> {
        exact_risk(self, loss, experts, preds)
    }

    fn expert_risks(&self, loss: &LossSpec, experts: &ExpertTable) -> Result<Vec<f64>> {
        Ok(DiscreteDistribution::expert_risks(self, loss, experts)?)
    }
}

/// `Σ mass · ℓ(y, preds[cell])` over the support.
pub fn exact_risk(dist: &DiscreteDistribution, loss: &LossSpec, experts: &ExpertTable, preds: &[f64]) -> Result<f64> {
    if preds.len() != experts.num_cells() {
        return Err(Error::Core(seqrand_core::Error::LengthMismatch(preds.len(), experts.num_cells())));
    }
    Ok(dist.table_risk(loss, experts, preds)?)
}

/// `Y = g̃(X) + ε` with `X` uniform on the table's cells, `g̃` one column of
/// the table and `ε` symmetric Pareto noise with tail index `s + 0.1`, scaled
/// so that `E|Y|^s <= A`.
#[derive(Debug)]
pub struct HeavyTailGenerator {
    cells: Vec<u64>,
    regression: Vec<f64>,
    s: f64,
    a: f64,
    alpha: f64,
    scale: f64,
    quadrature: OnceLock<Vec<f64>>,
}

impl HeavyTailGenerator {
    pub const TAIL_EXCESS: f64 = 0.1;

    /// `regression` is the index of the expert playing `g̃`. Runs the
    /// moment self-check before returning.
    pub fn new(experts: &ExpertTable, regression: usize, s: f64, a: f64) -> Result<Self> {
        if regression >= experts.num_experts() {
            return Err(Error::Config(format!("regression expert {regression} is not in the table")));
        }
        if !(s > 0.0 && a > 0.0) {
            return Err(Error::Config("heavy_tail needs s > 0 and A > 0".into()));
        }
        let target: Vec<f64> = (0..experts.num_cells()).map(|k| experts.prediction(regression, k)).collect();
        let sup = target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let room = a.powf(1.0 / s) - sup;
        if !(room > 0.0) {
            return Err(Error::Config(format!("A^(1/s) = {} must exceed sup|g| = {sup}", a.powf(1.0 / s))));
        }
        let alpha = s + Self::TAIL_EXCESS;
        // E|ε|^s = scale^s α / (α - s); Minkowski then gives ‖Y‖_s <= sup|g| + room.
        let scale = room / (alpha / (alpha - s)).powf(1.0 / s);
        let generator = Self {
            cells: experts.cells().to_vec(),
            regression: target,
            s,
            a,
            alpha,
            scale,
            quadrature: OnceLock::new(),
        };
        let moment = generator.empirical_moment(QUADRATURE_DRAWS);
        let cap = a * (1.0 + 5.0 / (QUADRATURE_DRAWS as f64).sqrt());
        if moment > cap {
            return Err(Error::Violation(format!("heavy-tail self-check: E|Y|^s estimate {moment} exceeds {cap}")));
        }
        Ok(generator)
    }

    pub fn tail_index(&self) -> f64 {
        self.alpha
    }

    pub fn noise_scale(&self) -> f64 {
        self.scale
    }

    pub fn moment_budget(&self) -> f64 {
        self.a
    }

    /// `E ε²`, finite when the tail index exceeds 2.
    pub fn noise_variance(&self) -> f64 {
        if self.alpha > 2.0 {
            self.scale * self.scale * self.alpha / (self.alpha - 2.0)
        } else {
            f64::INFINITY
        }
    }

    fn noise(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u = 1.0 - unit_f64(rng);
        let mag = self.scale * u.powf(-1.0 / self.alpha);
        if unit_f64(rng) < 0.5 {
            -mag
        } else {
            mag
        }
    }

    /// Sample mean of `|Y|^s` over `draws` draws from the quadrature stream.
    pub fn empirical_moment(&self, draws: usize) -> f64 {
        let mut rng = stream_rng(QUADRATURE_SEED, 1);
        let v: Vec<f64> = self.sample(&mut rng, draws).iter().map(|o| o.y.abs().powf(self.s)).collect();
        pairwise_sum(&v) / draws as f64
    }

    fn quadrature_noise(&self) -> &[f64] {
        self.quadrature.get_or_init(|| {
            let mut rng = stream_rng(QUADRATURE_SEED, 0);
            (0..QUADRATURE_DRAWS).map(|_| self.noise(&mut rng)).collect()
        })
    }
}

impl DataSource for HeavyTailGenerator {
    fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Outcome> {
        (0..n)
            .map(|_| {
                let k = seqrand_core::rng::uniform_index(rng, self.cells.len());
                Outcome::new(self.cells[k], self.regression[k] + self.noise(rng))
            })
            .collect()
    }

    fn risk(&self, loss: &LossSpec, experts: &ExpertTable, preds: &[f64]) -> Result<f64> {
        if experts.cells() != self.cells.as_slice() || preds.len() != self.cells.len() {
            return Err(Error::Config("predictor cells differ from the generator's cells".into()));
        }
        let mu = 1.0 / self.cells.len() as f64;
        if matches!(loss.kind(), LossKind::Square) {
            let bias: f64 = self.regression.iter().zip(preds).map(|(g, f)| (g - f) * (g - f)).sum();
            return Ok(mu * bias + self.noise_variance());
        }
        let noise = self.quadrature_noise();
        let mut total = 0.0;
        for (g, f) in self.regression.iter().zip(preds) {
            let v: Vec<f64> = noise.iter().map(|e| loss.value(g + e, *f)).collect();
            total += mu * pairwise_sum(&v) / noise.len() as f64;
        }
        Ok(total)
    }
}

/// Temperature given explicitly or by a tuning rule evaluated at `(|G|, n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Fixed(f64),
    Rule(LambdaRule),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaRule {
    /// `√(8 log|G| / (span² (n+1)))`.
    Hoeffding { span: f64 },
    /// `√(log|G| / (2 b² (n+1)))`.
    Absolute { b: f64 },
}

impl LambdaSpec {
    pub fn resolve(&self, g_size: usize, n: usize) -> f64 {
        match *self {
            LambdaSpec::Fixed(l) => l,
            LambdaSpec::Rule(LambdaRule::Hoeffding { span }) => lambda_hoeffding(span, g_size, n),
            LambdaSpec::Rule(LambdaRule::Absolute { b }) => lambda_absolute(b, g_size, n),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GibbsOutput {
    /// A function drawn from the posterior (risk averaged over the draw).
    #[default]
    Draw,
    /// The posterior-mean predictor.
    Mean,
}

fn default_output_mode() -> OutputMode {
    OutputMode::UniformDraw
}

/// An estimator as named in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Seqrand {
        lambda: LambdaSpec,
        variance_fn: VarianceFn,
        #[serde(default = "default_output_mode")]
        output_mode: OutputMode,
    },
    /// SeqRand with the truncated heavy-tail variance term, `λ = c1
    /// (log|G|/n)^κ` and truncation level set from `λ`.
    HeavyTailSeqrand {
        c1: f64,
        s: f64,
        b: f64,
        #[serde(default = "default_output_mode")]
        output_mode: OutputMode,
    },
    GibbsErm {
        lambda: LambdaSpec,
        #[serde(default)]
        output: GibbsOutput,
    },
    ProgressiveMixture {
        lambda: LambdaSpec,
    },
    Erm,
}

impl EstimatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorSpec::Seqrand { .. } => "seqrand",
            EstimatorSpec::HeavyTailSeqrand { .. } => "heavy_tail_seqrand",
            EstimatorSpec::GibbsErm { .. } => "gibbs_erm",
            EstimatorSpec::ProgressiveMixture { .. } => "progressive_mixture",
            EstimatorSpec::Erm => "erm",
        }
    }

    /// Binds tuning rules to `(|G|, n)` and validates against the loss.
    pub fn resolve(&self, loss: &LossSpec, experts: &ExpertTable, n: usize) -> Result<Estimator> {
        let d = experts.num_experts();
        let prior = LogWeights::uniform(d)?;
        let est = match self {
            EstimatorSpec::Seqrand { lambda, variance_fn, output_mode } => {
                let config = EstimatorConfig::new(lambda.resolve(d, n), prior, *variance_fn, *output_mode);
                config.validate(loss, experts)?;
                Estimator::Seqrand(config)
            }
            &EstimatorSpec::HeavyTailSeqrand { c1, s, b, output_mode } => {
                let q = loss
                    .kind()
                    .exponent()
                    .filter(|&q| q > 1.0)
                    .ok_or_else(|| Error::Config("heavy_tail_seqrand needs an L_q loss with q > 1".into()))?;
                let lambda = lambda_heavy_tail(c1, q, s, d.max(2), n.max(1));
                let big_b = heavy_tail_threshold(q, lambda, b);
                if !(big_b >= b) {
                    return Err(Error::Config(format!(
                        "heavy_tail_seqrand: truncation level {big_b} is below b = {b}; lower c1"
                    )));
                }
                let config = EstimatorConfig::new(lambda, prior, VarianceFn::heavy_tail(b, big_b)?, output_mode);
                config.validate(loss, experts)?;
                Estimator::Seqrand(config)
            }
            EstimatorSpec::GibbsErm { lambda, output } => {
                Estimator::GibbsErm { lambda: lambda.resolve(d, n), prior, output: *output }
            }
            EstimatorSpec::ProgressiveMixture { lambda } => {
                Estimator::ProgressiveMixture { lambda: lambda.resolve(d, n), prior }
            }
            EstimatorSpec::Erm => Estimator::Erm,
        };
        Ok(est)
    }
}

/// An estimator with every parameter bound.
#[derive(Clone, Debug, PartialEq)]
pub enum Estimator {
    Seqrand(EstimatorConfig),
    GibbsErm { lambda: f64, prior: LogWeights, output: GibbsOutput },
    ProgressiveMixture { lambda: f64, prior: LogWeights },
    Erm,
}

fn mixture_predictions(rho: &LogWeights, experts: &ExpertTable) -> Vec<f64> {
    (0..experts.num_cells()).map(|k| mixture_at(rho, experts, k)).collect()
}

/// Risk of the estimator's output on `data`, averaged over its final
/// randomization.
pub fn estimator_risk<S: DataSource + ?Sized>(
    est: &Estimator,
    source: &S,
    loss: &LossSpec,
    experts: &ExpertTable,
    expert_risks: &[f64],
    data: &[Outcome],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    Ok(match est {
        Estimator::Seqrand(config) => {
            let fit = seqrand_fit(config, loss, experts, data, rng)?;
            match config.output_mode {
                OutputMode::CesaroMean => source.risk(loss, experts, &fit.cesaro_predictions(experts))?,
                OutputMode::UniformDraw => {
                    let mut slots = Vec::with_capacity(fit.drawn.len());
                    for i in 0..fit.drawn.len() {
                        slots.push(match &fit.drawn[i] {
                            seqrand_core::aggregators::Draw::Expert { index } => expert_risks[*index],
                            _ => {
                                let preds: Vec<f64> =
                                    (0..experts.num_cells()).map(|k| fit.draw_at(experts, i, k)).collect();
                                source.risk(loss, experts, &preds)?
                            }
                        });
                    }
                    pairwise_sum(&slots) / slots.len() as f64
                }
            }
        }
        Estimator::GibbsErm { lambda, prior, output } => {
            let rho = gibbs_erm(loss, *lambda, prior, experts, data)?;
            match output {
                GibbsOutput::Draw => rho.expectation(expert_risks),
                GibbsOutput::Mean => source.risk(loss, experts, &mixture_predictions(&rho, experts))?,
            }
        }
        Estimator::ProgressiveMixture { lambda, prior } => {
            let preds = progressive_mixture(loss, *lambda, prior, experts, data)?;
            source.risk(loss, experts, &preds)?
        }
        Estimator::Erm => {
            let sigma = cumulative_losses(loss, experts, data)?;
            let best = sigma
                .iter()
                .enumerate()
                .fold(0, |b, (j, &s)| if s < sigma[b] { j } else { b });
            expert_risks[best]
        }
    })
}

/// Stream of trial `trial` within block `block` (vertex or curve point).
pub fn trial_stream(block: u64, trial: u64) -> u64 {
    (block << 32) | trial
}

/// `E R(ĝ) - min_G R(g)` by Monte Carlo over `trials` samples of size `n`.
#[allow(clippy::too_many_arguments)]
pub fn excess_risk_mc<S: DataSource + ?Sized>(
    source: &S,
    loss: &LossSpec,
    experts: &ExpertTable,
    estimator: &EstimatorSpec,
    n: usize,
    trials: usize,
    master_seed: u64,
) -> Result<MCResult> {
    excess_risk_mc_block(source, loss, experts, estimator, n, trials, master_seed, 0)
}

#[allow(clippy::too_many_arguments)]
pub fn excess_risk_mc_block<S: DataSource + ?Sized>(
    source: &S,
    loss: &LossSpec,
    experts: &ExpertTable,
    estimator: &EstimatorSpec,
    n: usize,
    trials: usize,
    master_seed: u64,
    block: u64,
) -> Result<MCResult> {
    if trials < 2 {
        return Err(Error::Config("at least two trials are needed".into()));
    }
    let est = estimator.resolve(loss, experts, n)?;
    let risks = source.expert_risks(loss, experts)?;
    let best = risks.iter().copied().fold(f64::INFINITY, f64::min);
    let samples = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(master_seed, trial_stream(block, t));
            let data = source.sample(&mut rng, n);
            Ok(estimator_risk(&est, source, loss, experts, &risks, &data, &mut rng)? - best)
        })
        .collect::<Result<Vec<f64>>>()?;
    MCResult::from_samples(&samples, master_seed)
}

/// Per-vertex excess risks of one estimator over a hypercube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorResult {
    pub estimator: String,
    pub per_vertex: Vec<MCResult>,
    /// Vertex with the largest mean excess risk.
    pub argmax: usize,
    pub max: MCResult,
    /// `m w d_I (1 - w)^n` or the tight closed form.
    pub bound: f64,
    /// `max >= bound - 3 stderr`.
    pub flag: bool,
}

/// Largest vertex count [`minimax_floor_mc`] enumerates.
pub const MAX_FLOOR_DIM: u64 = 8;

/// Runs every estimator on every vertex of `hc`; the worst vertex must sit
/// above the closed-form lower bound.
pub fn minimax_floor_mc(
    hc: &Hypercube,
    experts: &ExpertTable,
    estimators: &[EstimatorSpec],
    n: usize,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<FloorResult>> {
    if hc.m() > MAX_FLOOR_DIM {
        return Err(Error::Config(format!("hypercube dimension {} exceeds {MAX_FLOOR_DIM}", hc.m())));
    }
    let loss = hc.loss();
    let bound = best_closed_bound(hc, n as u64);
    let cells = default_cells(hc.m());
    let vertices: Vec<DiscreteDistribution> = (0..1u64 << hc.m())
        .map(|v| hypercube_vertex_distribution(hc, &vertex_signs(hc.m(), v), &cells))
        .collect::<std::result::Result<_, _>>()?;
    estimators
        .iter()
        .map(|est| {
            let per_vertex = vertices
                .iter()
                .enumerate()
                .map(|(v, dist)| excess_risk_mc_block(dist, loss, experts, est, n, trials, master_seed, v as u64))
                .collect::<Result<Vec<_>>>()?;
            let argmax = per_vertex
                .iter()
                .enumerate()
                .fold(0, |b, (i, r)| if r.mean > per_vertex[b].mean { i } else { b });
            let max = per_vertex[argmax];
            Ok(FloorResult {
                estimator: est.name().to_string(),
                argmax,
                max,
                bound,
                flag: max.mean >= bound - 3.0 * max.stderr,
                per_vertex,
            })
        })
        .collect()
}

/// Least-squares fit of `log excess = log C + v log(log|G| / n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub exponent: f64,
    pub constant: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    /// Points dropped for a nonpositive excess.
    pub dropped: usize,
}

pub fn rate_fit(curve: &[(usize, f64)], g_size: usize) -> Result<RateFit> {
    if g_size < 2 {
        return Err(Error::Config("rate_fit needs |G| >= 2".into()));
    }
    let lg = (g_size as f64).ln();
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|&&(n, e)| n > 0 && e > 0.0 && e.is_finite())
        .map(|&(n, e)| ((lg / n as f64).ln(), e.ln()))
        .collect();
    let dropped = curve.len() - pts.len();
    if pts.len() < 4 {
        return Err(Error::Config(format!("rate_fit needs 4 usable points, got {}", pts.len())));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("rate_fit needs at least two distinct n".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(RateFit { exponent: slope, constant: intercept.exp(), residual: (rss / k).sqrt(), dropped })
}

/// Experts `j = 0..2^m` on cells `0..m` predicting `±amplitude`, with bit
/// `k` of `j` set meaning `-amplitude` on cell `k`.
pub fn sign_pattern_experts(m: u32, amplitude: f64) -> Result<ExpertTable> {
    if m == 0 || m > 20 {
        return Err(Error::Config("sign patterns need 1 <= m <= 20".into()));
    }
    Ok(ExpertTable::from_fn((0..u64::from(m)).collect(), 1 << m, |j, cell| {
        if (j >> cell) & 1 == 1 {
            -amplitude
        } else {
            amplitude
        }
    })?)
}

/// Expected batch uniform-draw risk and `1/(n+1)` times the expected online
/// cumulative loss on `n + 1` points, both by exhaustive enumeration of
/// every sample path. Needs an expert-independent variance term, so that
/// the posterior path does not depend on the internal draws.
pub fn online_batch_identity(
    dist: &DiscreteDistribution,
    loss: &LossSpec,
    experts: &ExpertTable,
    config: &EstimatorConfig,
    n: usize,
) -> Result<(f64, f64)> {
    if !config.variance_fn.is_expert_independent() {
        return Err(Error::Config("exhaustive identity needs an expert-independent variance term".into()));
    }
    let atoms = dist.atoms();
    if (atoms.len() as f64).powi(n as i32 + 1) > 1e7 {
        return Err(Error::Config("support too large for exhaustive enumeration".into()));
    }
    let risks = DiscreteDistribution::expert_risks(dist, loss, experts)?;
    let mut batch = 0.0;
    let mut online = 0.0;
    let mut path = vec![0usize; n + 1];
    let total = atoms.len().pow(n as u32 + 1);
    // The internal generator is never consulted for the slot risks below, which
    // use the posterior path directly.
    let mut rng = stream_rng(0, 0);
    for code in 0..total {
        let mut c = code;
        let mut prob = 1.0;
        for slot in path.iter_mut() {
            *slot = c % atoms.len();
            c /= atoms.len();
            prob *= atoms[*slot].prob;
        }
        let data: Vec<Outcome> = path.iter().map(|&i| Outcome::new(atoms[i].cell, atoms[i].y)).collect();
        let fit = seqrand_fit(config, loss, experts, &data, &mut rng)?;
        let slot_risk = |i: usize| -> Result<f64> {
            let w = &fit.posterior_trajectory[i];
            Ok(match config.variance_fn.pi_hat {
                seqrand_core::variance::PiHat::Identity => w.expectation(&risks),
                _ => {
                    let preds: Vec<f64> = (0..experts.num_cells()).map(|k| fit.draw_at(experts, i, k)).collect();
                    dist.table_risk(loss, experts, &preds)?
                }
            })
        };
        let slot_loss = |i: usize, z: &Outcome| -> Result<f64> {
            let k = experts.cell_index(z.cell)?;
            let w = &fit.posterior_trajectory[i];
            Ok(match config.variance_fn.pi_hat {
                seqrand_core::variance::PiHat::Identity => {
                    let l: Vec<f64> = (0..experts.num_experts()).map(|j| loss.value(z.y, experts.prediction(j, k))).collect();
                    w.expectation(&l)
                }
                _ => loss.value(z.y, fit.draw_at(experts, i, k)),
            })
        };
        // Batch estimator trained on the first n points.
        let mut b = 0.0;
        for i in 0..=n {
            b += slot_risk(i)?;
        }
        batch += prob * b / (n + 1) as f64;
        let mut o = 0.0;
        for (i, z) in data.iter().enumerate() {
            o += slot_loss(i, z)?;
        }
        online += prob * o / (n + 1) as f64;
    }
    Ok((batch, online))
}

#[cfg(test)]
mod tests {
    use super::*;
    use seqrand_core::distribution::Atom;
    use seqrand_core::minimax::pattern_expert_set;

    fn two_point(p: f64) -> DiscreteDistribution {
        DiscreteDistribution::new(vec![Atom { cell: 0, y: -1.0, prob: p }, Atom { cell: 0, y: 1.0, prob: 1.0 - p }])
            .unwrap()
    }

    #[test]
    fn exact_risk_of_constants() {
        let sq = LossSpec::square(1.0).unwrap();
        let dist = two_point(0.75);
        let experts = ExpertTable::constants(&[0.0]).unwrap();
        assert!((exact_risk(&dist, &sq, &experts, &[0.0]).unwrap() - 1.0).abs() < 1e-15);
        // Conditional mean is -1/2; its risk is the conditional variance 3/4.
        assert!((exact_risk(&dist, &sq, &experts, &[-0.5]).unwrap() - 0.75).abs() < 1e-15);
        assert!(exact_risk(&dist, &sq, &experts, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn single_expert_has_no_excess() {
        let sq = LossSpec::square(1.0).unwrap();
        let experts = ExpertTable::constants(&[0.3]).unwrap();
        let est = EstimatorSpec::Seqrand {
            lambda: LambdaSpec::Fixed(0.5),
            variance_fn: VarianceFn::zero(),
            output_mode: OutputMode::UniformDraw,
        };
        let r = excess_risk_mc(&two_point(0.4), &sq, &experts, &est, 20, 50, 1).unwrap();
        assert!(r.mean.abs() < 1e-12 && r.stderr < 1e-12);
    }

    #[test]
    fn excess_is_nonnegative_and_reproducible() {
        let hc = Hypercube::symmetric(2, 0.25, 0.5, -1.0, 1.0, LossSpec::square(1.0).unwrap()).unwrap();
        let experts = pattern_expert_set(&hc, 4).unwrap();
        let dist = hypercube_vertex_distribution(&hc, &vertex_signs(2, 1), &default_cells(2)).unwrap();
        let est = EstimatorSpec::ProgressiveMixture { lambda: LambdaSpec::Fixed(0.5) };
        let a = excess_risk_mc(&dist, hc.loss(), &experts, &est, 10, 64, 9).unwrap();
        let b = excess_risk_mc(&dist, hc.loss(), &experts, &est, 10, 64, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.mean > 0.0);
        let c = excess_risk_mc(&dist, hc.loss(), &experts, &est, 10, 64, 10).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn prior_only_at_n_zero() {
        // With no data the uniform draw is a uniform expert.
        let sq = LossSpec::square(1.0).unwrap();
        let experts = ExpertTable::constants(&[-1.0, 1.0]).unwrap();
        let dist = two_point(1.0 - 1e-300);
        let est = EstimatorSpec::GibbsErm { lambda: LambdaSpec::Fixed(1.0), output: GibbsOutput::Draw };
        let r = excess_risk_mc(&dist, &sq, &experts, &est, 0, 4, 0).unwrap();
        assert!((r.mean - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn mc_result_needs_two_trials() {
        assert!(MCResult::from_samples(&[1.0], 0).is_err());
        let r = MCResult::from_samples(&[1.0, 3.0], 7).unwrap();
        assert_eq!((r.mean, r.stderr, r.master_seed), (2.0, 1.0, 7));
    }

    #[test]
    fn rate_fit_recovers_power_laws() {
        let curve: Vec<(usize, f64)> =
            [16usize, 32, 64, 128, 256].iter().map(|&n| (n, 3.0 * ((8f64).ln() / n as f64).powf(0.7))).collect();
        let fit = rate_fit(&curve, 8).unwrap();
        assert!((fit.exponent - 0.7).abs() < 1e-6);
        assert!((fit.constant - 3.0).abs() < 1e-6);
        let flat: Vec<(usize, f64)> = [16usize, 32, 64, 128].iter().map(|&n| (n, 0.2)).collect();
        assert!(rate_fit(&flat, 8).unwrap().exponent.abs() < 1e-9);
        let mut short = curve.clone();
        short.truncate(3);
        assert!(rate_fit(&short, 8).is_err());
        let mut bad = curve;
        bad[0].1 = 0.0;
        assert_eq!(rate_fit(&bad, 8).unwrap().dropped, 1);
    }

    #[test]
    fn online_batch_identity_small_cases() {
        let sq = LossSpec::square(1.0).unwrap();
        let experts = ExpertTable::constants(&[-0.5, 0.7]).unwrap();
        let dist = two_point(0.3);
        let configs = [
            EstimatorConfig::new(0.5, LogWeights::uniform(2).unwrap(), VarianceFn::zero(), OutputMode::UniformDraw),
            EstimatorConfig::new(
                0.4,
                LogWeights::uniform(2).unwrap(),
                VarianceFn::hoeffding(4.0).unwrap(),
                OutputMode::UniformDraw,
            ),
        ];
        for config in &configs {
            for n in 0..=4 {
                let (b, o) = online_batch_identity(&dist, &sq, &experts, config, n).unwrap();
                assert!((b - o).abs() < 1e-12, "n={n}: {b} vs {o}");
            }
        }
        let bern =
            EstimatorConfig::new(0.5, LogWeights::uniform(2).unwrap(), VarianceFn::bernstein(), OutputMode::UniformDraw);
        assert!(online_batch_identity(&dist, &sq, &experts, &bern, 2).is_err());
    }

    #[test]
    fn heavy_tail_generator_budget() {
        let experts = sign_pattern_experts(2, 0.5).unwrap();
        let g = HeavyTailGenerator::new(&experts, 0, 2.0, 4.0).unwrap();
        assert!((g.tail_index() - 2.1).abs() < 1e-15);
        assert!(g.empirical_moment(100_000) <= 4.0);
        assert!(HeavyTailGenerator::new(&experts, 0, 2.0, 0.2).is_err());
        assert!(HeavyTailGenerator::new(&experts, 9, 2.0, 4.0).is_err());
    }

    #[test]
    fn heavy_tail_threshold_must_cover_b() {
        let loss = LossSpec::unbounded_power(2.0, 1.0).unwrap();
        let experts = sign_pattern_experts(3, 0.5).unwrap();
        let spec = EstimatorSpec::HeavyTailSeqrand { c1: 5.0, s: 2.0, b: 1.0, output_mode: OutputMode::UniformDraw };
        assert!(spec.resolve(&loss, &experts, 128).is_err());
        let spec = EstimatorSpec::HeavyTailSeqrand { c1: 0.5, s: 2.0, b: 1.0, output_mode: OutputMode::UniformDraw };
        assert!(spec.resolve(&loss, &experts, 128).is_ok());
    }

    proptest::proptest! {
        #[test]
        fn rate_fit_recovers_any_power_law(c in 0.01f64..10.0, v in 0.05f64..1.5) {
            let curve: Vec<(usize, f64)> =
                [10usize, 40, 160, 640, 2560].iter().map(|&n| (n, c * ((4f64).ln() / n as f64).powf(v))).collect();
            let fit = rate_fit(&curve, 4).unwrap();
            proptest::prop_assert!((fit.exponent - v).abs() < 1e-9);
            proptest::prop_assert!(fit.residual < 1e-9);
        }

        #[test]
        fn mc_mean_lies_within_samples(xs in proptest::collection::vec(-1e3f64..1e3, 2..200)) {
            let r = MCResult::from_samples(&xs, 0).unwrap();
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            proptest::prop_assert!(r.mean >= lo - 1e-9 && r.mean <= hi + 1e-9);
            proptest::prop_assert!(r.stderr >= 0.0);
        }
    }

    #[test]
    fn estimator_specs_parse() {
        let s: EstimatorSpec = serde_json::from_str(
            r#"{"estimator":"seqrand","lambda":{"rule":"hoeffding","span":1},"variance_fn":{"kind":"hoeffding_const","span":1}}"#,
        )
        .unwrap();
        assert_eq!(s.name(), "seqrand");
        let g: EstimatorSpec = serde_json::from_str(r#"{"estimator":"gibbs_erm","lambda":1,"output":"mean"}"#).unwrap();
        assert_eq!(g, EstimatorSpec::GibbsErm { lambda: LambdaSpec::Fixed(1.0), output: GibbsOutput::Mean });
        assert!(serde_json::from_str::<EstimatorSpec>(r#"{"estimator":"boosting"}"#).is_err());
    }
}
