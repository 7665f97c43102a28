//! Experiment configs and the tables computed from them.
//!
//! Every table renders as CSV (a `# seqrand <version> master_seed=<seed>`
//! comment line, a header row, then data) or as a JSON document carrying the
//! same fields.

use serde::{Deserialize, Serialize};

use seqrand_core::aggregators::{upper_bound_value, UpperBound};
use seqrand_core::distribution::{Atom, DiscreteDistribution};
use seqrand_core::gibbs::{ExpertTable, LogWeights, Outcome};
use seqrand_core::losses::numeric_eta_infimum;
use seqrand_core::minimax::{
    assouad_bound_closed, best_closed_bound, default_cells, exact_lower_bound, hypercube_vertex_distribution,
    pattern_expert_set, vertex_signs, ClosedForm, Hypercube, Preset, MAX_EXACT_N,
};
use seqrand_core::variance::{verify_variance_inequality, PiHat, VarianceFn, VarianceKind};
use seqrand_core::{LossKind, LossSpec};

use crate::harness::{
    excess_risk_mc_block, sign_pattern_experts, DataSource, EstimatorSpec, HeavyTailGenerator, LambdaRule,
    LambdaSpec, MCResult, MAX_FLOOR_DIM,
};
use crate::{Error, VERSION};

pub type Result<T> = std::result::Result<T, Error>;

/// A rendered table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Num(f64),
    Missing,
}

impl Cell {
    fn opt(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }

    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) if x.is_nan() => "nan".into(),
            Cell::Num(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Num(x) => x.to_string(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Text(s) => s.clone().into(),
            Cell::Int(i) => (*i).into(),
            Cell::Num(x) if x.is_finite() => (*x).into(),
            Cell::Num(_) => self.csv().into(),
            Cell::Missing => serde_json::Value::Null,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl Table {
    pub fn render(&self, format: Format, master_seed: Option<u64>) -> Result<String> {
        let seed = master_seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::csv))?;
                }
                let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
                    .expect("csv output is UTF-8");
                Ok(format!("# seqrand {VERSION} master_seed={seed}\n{body}"))
            }
            Format::Json => {
                let rows: Vec<serde_json::Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let obj: serde_json::Map<String, serde_json::Value> =
                            self.columns.iter().zip(r).map(|(c, v)| (c.to_string(), v.json())).collect();
                        serde_json::Value::Object(obj)
                    })
                    .collect();
                let doc = serde_json::json!({
                    "seqrand_version": VERSION,
                    "master_seed": master_seed,
                    "columns": self.columns,
                    "rows": rows,
                });
                Ok(serde_json::to_string_pretty(&doc)? + "\n")
            }
        }
    }
}

// ---------------------------------------------------------------- mixability

fn default_grid() -> usize {
    20_001
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixabilityConfig {
    pub losses: Vec<LossSpec>,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
}

/// Short name of a loss, `lq<q>` for the general power losses.
pub fn loss_label(loss: &LossSpec) -> String {
    match loss.kind() {
        LossKind::Lq { q } => format!("lq{q}"),
        k => k.name().to_string(),
    }
}

pub fn mixability_table(cfg: &MixabilityConfig) -> Result<Table> {
    if cfg.losses.is_empty() {
        return Err(Error::Config("no losses given".into()));
    }
    let mut rows = Vec::new();
    for loss in &cfg.losses {
        let closed = loss.mixability_eta_max();
        let numeric = match loss.kind() {
            LossKind::Lq { q } if loss.output_range().is_bounded() => {
                Some(numeric_eta_infimum(q, loss.output_range().half_width(), cfg.grid_size)?)
            }
            _ => None,
        };
        rows.push(vec![
            Cell::Text(loss_label(loss)),
            closed.map_or(Cell::Text("none".into()), Cell::Num),
            numeric.map_or(Cell::Text("n/a".into()), Cell::Num),
        ]);
    }
    Ok(Table { columns: vec!["loss", "eta_max", "numeric"], rows })
}

// ------------------------------------------------------------ variance check

fn default_tolerance() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceCase {
    pub name: String,
    pub loss: LossSpec,
    pub lambda: f64,
    pub variance_fn: VarianceFn,
    pub experts: ExpertTable,
    /// Probability vectors over the experts.
    pub rhos: Vec<Vec<f64>>,
    pub samples: Vec<Outcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceCheckConfig {
    pub cases: Vec<VarianceCase>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

/// The table and the located violations, if any.
pub fn variance_table(cfg: &VarianceCheckConfig) -> Result<(Table, Vec<String>)> {
    if cfg.cases.is_empty() {
        return Err(Error::Config("no cases given".into()));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for case in &cfg.cases {
        if case.samples.is_empty() {
            return Err(Error::Config(format!("case `{}` has no samples", case.name)));
        }
        if case.rhos.is_empty() {
            return Err(Error::Config(format!("case `{}` has no rho", case.name)));
        }
        case.experts.check_range(&case.loss)?;
        for (i, probs) in case.rhos.iter().enumerate() {
            let rho = LogWeights::from_probs(probs)?;
            let r = verify_variance_inequality(&case.loss, case.lambda, &case.variance_fn, &case.experts, &rho, &case.samples)?;
            let z = case.samples[r.worst];
            let pass = r.max <= cfg.tolerance;
            if !pass {
                failures.push(format!(
                    "case `{}` rho #{i}: value {} at z = (cell {}, y {})",
                    case.name, r.max, z.cell, z.y
                ));
            }
            rows.push(vec![
                Cell::Text(case.name.clone()),
                Cell::Int(i as u64),
                Cell::Num(r.max),
                Cell::Int(z.cell),
                Cell::Num(z.y),
                Cell::Text(if pass { "pass" } else { "fail" }.into()),
            ]);
        }
    }
    let table = Table { columns: vec!["case", "rho_index", "max", "worst_cell", "worst_y", "status"], rows };
    Ok((table, failures))
}

// --------------------------------------------------------------- lower bound

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypercubeCase {
    pub setting: String,
    pub hypercube: Hypercube,
    pub n: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundConfig {
    #[serde(default)]
    pub presets: Vec<Preset>,
    #[serde(default)]
    pub hypercubes: Vec<HypercubeCase>,
}

pub const LOWER_BOUND_COLUMNS: [&str; 13] = [
    "setting",
    "m",
    "w",
    "p_plus",
    "p_minus",
    "d_I",
    "d_II",
    "n",
    "exact_similarity",
    "closed_814",
    "weak_814",
    "det_815",
    "theorem_bound",
];

fn hypercube_row(setting: &str, hc: &Hypercube, n: u64, theorem: Option<f64>) -> Result<Vec<Cell>> {
    let exact = if n <= MAX_EXACT_N { Some(exact_lower_bound(hc, n)?) } else { None };
    let det = hc.is_deterministic().then(|| assouad_bound_closed(hc, n, ClosedForm::Deterministic)).transpose()?;
    Ok(vec![
        Cell::Text(setting.to_string()),
        Cell::Int(hc.m()),
        Cell::Num(hc.w()),
        Cell::Num(hc.p_plus()),
        Cell::Num(hc.p_minus()),
        Cell::Num(hc.d_i()),
        Cell::Num(hc.d_ii()),
        Cell::Int(n),
        Cell::opt(exact),
        Cell::Num(assouad_bound_closed(hc, n, ClosedForm::Tight)?),
        Cell::Num(assouad_bound_closed(hc, n, ClosedForm::Weak)?),
        Cell::opt(det),
        Cell::opt(theorem),
    ])
}

pub fn lower_bound_table(cfg: &LowerBoundConfig) -> Result<Table> {
    if cfg.presets.is_empty() && cfg.hypercubes.is_empty() {
        return Err(Error::Config("no presets or hypercubes given".into()));
    }
    let mut rows = Vec::new();
    for p in &cfg.presets {
        let b = p.build()?;
        rows.push(hypercube_row(b.setting, &b.hypercube, b.n, b.theorem_bound)?);
    }
    for c in &cfg.hypercubes {
        rows.push(hypercube_row(&c.setting, &c.hypercube, c.n, None)?);
    }
    Ok(Table { columns: LOWER_BOUND_COLUMNS.to_vec(), rows })
}

// ----------------------------------------------------------------------- run

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Vertices of a hypercube, given directly or by preset; the reported
    /// empirical excess is the worst vertex.
    Hypercube {
        #[serde(default)]
        hypercube: Option<Hypercube>,
        #[serde(default)]
        preset: Option<Preset>,
        /// Vertex indices to run; all `2^m` by default.
        #[serde(default)]
        vertices: Option<Vec<u64>>,
    },
    Distribution { atoms: Vec<Atom> },
    /// Heavy-tail regression around expert `regression`.
    HeavyTail { s: f64, a: f64, regression: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExpertSpec {
    /// The hypercube's vertex-wise Bayes predictors, padded to `d`.
    Pattern { d: usize },
    Table { cells: Vec<u64>, predictions: Vec<Vec<f64>> },
    /// `2^m` experts predicting `±amplitude` on cells `0..m`.
    SignPatterns { m: u32, amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub setting: String,
    /// Required unless the data come from a hypercube, which carries its loss.
    #[serde(default)]
    pub loss: Option<LossSpec>,
    pub data: DataSpec,
    pub experts: ExpertSpec,
    pub estimator: EstimatorSpec,
    pub ns: Vec<usize>,
    pub trials: usize,
    /// Excess-risk guarantee to compare with; its `n` is replaced per row and
    /// any `min_risk` by zero.
    #[serde(default)]
    pub upper: Option<UpperBound>,
}

pub const BOUND_REPORT_COLUMNS: [&str; 8] =
    ["setting", "n", "lower_exact", "lower_closed", "empirical", "empirical_stderr", "upper", "status"];

/// One row of [`bound_report`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub setting: String,
    pub n: usize,
    pub lower_exact: Option<f64>,
    pub lower_closed: Option<f64>,
    pub empirical: f64,
    pub empirical_stderr: f64,
    pub upper: Option<f64>,
    pub status: RowStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    /// Every applicable inequality holds.
    Ok,
    /// A lower or matched upper inequality fails.
    Violated,
    /// The upper bound does not apply to this estimator; not checked.
    Unmatched,
}

impl RowStatus {
    fn name(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Violated => "violated",
            RowStatus::Unmatched => "unmatched",
        }
    }
}

/// The guarantee evaluated at sample size `n` as an excess-risk bound.
pub fn upper_at(u: &UpperBound, n: usize) -> UpperBound {
    let nf = n as f64;
    match *u {
        UpperBound::ExpWeights { g_size, lambda, .. } => UpperBound::ExpWeights { min_risk: 0.0, g_size, lambda, n: nf },
        UpperBound::SquareMixture { big_b, g_size, .. } => UpperBound::SquareMixture { big_b, g_size, n: nf },
        UpperBound::Hoeffding { span, g_size, .. } => UpperBound::Hoeffding { span, g_size, n: nf },
        UpperBound::AbsoluteBernstein { b, g_size, .. } => UpperBound::AbsoluteBernstein { b, g_size, n: nf },
        UpperBound::LqMixable { q, big_b, g_size, .. } => UpperBound::LqMixable { q, big_b, g_size, n: nf },
        UpperBound::Entropy { g_size, .. } => UpperBound::Entropy { g_size, n: nf },
        UpperBound::BernsteinMargin { c, g_size, .. } => UpperBound::BernsteinMargin { min_risk: 0.0, c, g_size, n: nf },
    }
}

fn fixed_lambda(l: &LambdaSpec) -> Option<f64> {
    match l {
        LambdaSpec::Fixed(v) => Some(*v),
        LambdaSpec::Rule(_) => None,
    }
}

/// Whether `upper` is a guarantee proved for `est` under `loss`.
pub fn pairing_matched(est: &EstimatorSpec, upper: &UpperBound, loss: &LossSpec) -> bool {
    // Mixture-type procedures with δ = 0: progressive mixture, or SeqRand
    // with the zero variance term.
    let mixture_lambda = match est {
        EstimatorSpec::ProgressiveMixture { lambda } => fixed_lambda(lambda),
        EstimatorSpec::Seqrand { lambda, variance_fn, .. } if variance_fn.kind == VarianceKind::Zero => {
            fixed_lambda(lambda)
        }
        _ => None,
    };
    let tol = 1e-12;
    match *upper {
        UpperBound::ExpWeights { g_size, lambda, .. } => {
            mixture_lambda.is_some_and(|l| (l - lambda).abs() <= tol)
                && g_size.is_finite()
                && loss.mixability_eta_max().is_some_and(|eta| lambda <= eta + tol)
        }
        UpperBound::SquareMixture { big_b, .. } => {
            matches!(loss.kind(), LossKind::Square)
                && mixture_lambda.is_some_and(|l| (l - 1.0 / (2.0 * big_b * big_b)).abs() <= tol)
        }
        UpperBound::LqMixable { .. } => {
            mixture_lambda.is_some_and(|l| loss.mixability_eta_max().is_some_and(|eta| l <= eta + tol))
        }
        UpperBound::Entropy { .. } => {
            matches!(loss.kind(), LossKind::Entropy) && mixture_lambda.is_some_and(|l| (l - 1.0).abs() <= tol)
        }
        UpperBound::Hoeffding { span, .. } => matches!(
            est,
            EstimatorSpec::Seqrand {
                lambda: LambdaSpec::Rule(LambdaRule::Hoeffding { span: s }),
                variance_fn: VarianceFn { kind: VarianceKind::HoeffdingConst { span: s2 }, pi_hat: PiHat::Identity },
                ..
            } if *s == span && *s2 == span
        ),
        UpperBound::AbsoluteBernstein { b, .. } => {
            matches!(loss.kind(), LossKind::Absolute)
                && matches!(
                    est,
                    EstimatorSpec::Seqrand {
                        lambda: LambdaSpec::Rule(LambdaRule::Absolute { b: b2 }),
                        variance_fn: VarianceFn { kind: VarianceKind::Bernstein, pi_hat: PiHat::Identity },
                        ..
                    } if *b2 == b
                )
        }
        UpperBound::BernsteinMargin { .. } => matches!(
            est,
            EstimatorSpec::Seqrand {
                variance_fn: VarianceFn { kind: VarianceKind::Bernstein, pi_hat: PiHat::Identity },
                ..
            }
        ),
    }
}

enum Source {
    Vertices { hc: Hypercube, dists: Vec<DiscreteDistribution>, ids: Vec<u64> },
    Finite(DiscreteDistribution),
    HeavyTail(HeavyTailGenerator),
}

fn build_experts(spec: &ExpertSpec, hc: Option<&Hypercube>) -> Result<ExpertTable> {
    Ok(match spec {
        ExpertSpec::Pattern { d } => {
            let hc = hc.ok_or_else(|| Error::Config("pattern experts need hypercube data".into()))?;
            pattern_expert_set(hc, *d)?
        }
        ExpertSpec::Table { cells, predictions } => ExpertTable::new(cells.clone(), predictions.clone())?,
        ExpertSpec::SignPatterns { m, amplitude } => sign_pattern_experts(*m, *amplitude)?,
    })
}

/// Runs the configured experiment at every `n` and compares with the
/// available bounds.
pub fn bound_report(cfg: &RunConfig, master_seed: u64) -> Result<Vec<BoundRow>> {
    if cfg.ns.is_empty() {
        return Err(Error::Config("`ns` is empty".into()));
    }
    if cfg.trials < 2 {
        return Err(Error::Config("`trials` must be at least 2".into()));
    }
    let hc = match &cfg.data {
        DataSpec::Hypercube { hypercube, preset, .. } => Some(match (hypercube, preset) {
            (Some(h), None) => h.clone(),
            (None, Some(p)) => p.build()?.hypercube,
            _ => return Err(Error::Config("hypercube data need exactly one of `hypercube` and `preset`".into())),
        }),
        _ => None,
    };
    let loss = match (&hc, &cfg.loss) {
        (Some(h), Some(l)) if l != h.loss() => {
            return Err(Error::Config("`loss` differs from the hypercube's loss".into()));
        }
        (Some(h), _) => *h.loss(),
        (None, Some(l)) => *l,
        (None, None) => return Err(Error::Config("`loss` is required".into())),
    };
    let experts = build_experts(&cfg.experts, hc.as_ref())?;
    let source = match (&cfg.data, hc) {
        (DataSpec::Hypercube { vertices, .. }, Some(hc)) => {
            let ids = match vertices {
                Some(v) => v.clone(),
                None if hc.m() > MAX_FLOOR_DIM => {
                    return Err(Error::Config(format!(
                        "m = {} gives too many vertices to enumerate; list `vertices`",
                        hc.m()
                    )));
                }
                None => (0..1u64 << hc.m()).collect(),
            };
            if ids.is_empty() || ids.iter().any(|&v| hc.m() < 64 && v >> hc.m() != 0) {
                return Err(Error::Config("vertex indices must lie in 0..2^m".into()));
            }
            let cells = default_cells(hc.m());
            let dists = ids
                .iter()
                .map(|&v| hypercube_vertex_distribution(&hc, &vertex_signs(hc.m(), v), &cells))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Source::Vertices { hc, dists, ids }
        }
        (DataSpec::Distribution { atoms }, _) => Source::Finite(DiscreteDistribution::new(atoms.clone())?),
        (DataSpec::HeavyTail { s, a, regression }, _) => {
            Source::HeavyTail(HeavyTailGenerator::new(&experts, *regression, *s, *a)?)
        }
        (DataSpec::Hypercube { .. }, None) => unreachable!("hypercube resolved above"),
    };
    if !matches!(source, Source::HeavyTail(_)) {
        experts.check_range(&loss)?;
    }
    let lower_valid = matches!(cfg.experts, ExpertSpec::Pattern { .. });
    let matched = cfg.upper.as_ref().map(|u| pairing_matched(&cfg.estimator, u, &loss));

    let mut rows = Vec::with_capacity(cfg.ns.len());
    for (row, &n) in cfg.ns.iter().enumerate() {
        // Stream blocks: row r, vertex v -> block (r << 16) | v.
        let block = (row as u64) << 16;
        let empirical: MCResult = match &source {
            Source::Vertices { dists, ids, .. } => {
                let mut worst: Option<MCResult> = None;
                for (d, &v) in dists.iter().zip(ids) {
                    let r = run_block(d, &loss, &experts, cfg, n, master_seed, block | v)?;
                    if worst.is_none_or(|w| r.mean > w.mean) {
                        worst = Some(r);
                    }
                }
                worst.expect("at least one vertex")
            }
            Source::Finite(d) => run_block(d, &loss, &experts, cfg, n, master_seed, block)?,
            Source::HeavyTail(g) => run_block(g, &loss, &experts, cfg, n, master_seed, block)?,
        };
        let (lower_exact, lower_closed) = match (&source, lower_valid) {
            (Source::Vertices { hc, .. }, true) => {
                let exact = if n as u64 <= MAX_EXACT_N { Some(exact_lower_bound(hc, n as u64)?) } else { None };
                (exact, Some(best_closed_bound(hc, n as u64)))
            }
            _ => (None, None),
        };
        let upper = cfg.upper.as_ref().map(|u| upper_bound_value(&upper_at(u, n))).transpose()?;
        let slack = 3.0 * empirical.stderr;
        let mut ok = true;
        if let (Some(c), Some(e)) = (lower_closed, lower_exact) {
            ok &= c <= e + 1e-12;
        }
        if let Some(l) = lower_exact.or(lower_closed) {
            ok &= l <= empirical.mean + slack;
        }
        let status = match (upper, matched) {
            (Some(u), Some(true)) => {
                ok &= empirical.mean <= u + slack;
                if ok {
                    RowStatus::Ok
                } else {
                    RowStatus::Violated
                }
            }
            (Some(_), _) if ok => RowStatus::Unmatched,
            _ if ok => RowStatus::Ok,
            _ => RowStatus::Violated,
        };
        rows.push(BoundRow {
            setting: cfg.setting.clone(),
            n,
            lower_exact,
            lower_closed,
            empirical: empirical.mean,
            empirical_stderr: empirical.stderr,
            upper,
            status,
        });
    }
    Ok(rows)
}

fn run_block<S: DataSource>(
    source: &S,
    loss: &LossSpec,
    experts: &ExpertTable,
    cfg: &RunConfig,
    n: usize,
    master_seed: u64,
    block: u64,
) -> Result<MCResult> {
    excess_risk_mc_block(source, loss, experts, &cfg.estimator, n, cfg.trials, master_seed, block)
}

pub fn bound_table(rows: &[BoundRow]) -> Table {
    Table {
        columns: BOUND_REPORT_COLUMNS.to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Text(r.setting.clone()),
                    Cell::Int(r.n as u64),
                    Cell::opt(r.lower_exact),
                    Cell::opt(r.lower_closed),
                    Cell::Num(r.empirical),
                    Cell::Num(r.empirical_stderr),
                    Cell::opt(r.upper),
                    Cell::Text(r.status.name().into()),
                ]
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(c: &Cell) -> f64 {
        match c {
            Cell::Num(x) => *x,
            other => panic!("not a number: {other:?}"),
        }
    }

    #[test]
    fn csv_and_json_rendering() {
        let t = Table {
            columns: vec!["a", "b", "c"],
            rows: vec![vec![Cell::Text("x,y".into()), Cell::Num(f64::INFINITY), Cell::Missing]],
        };
        let csv = t.render(Format::Csv, Some(5)).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), format!("# seqrand {VERSION} master_seed=5"));
        assert_eq!(lines.next().unwrap(), "a,b,c");
        assert_eq!(lines.next().unwrap(), "\"x,y\",inf,");
        let json: serde_json::Value = serde_json::from_str(&t.render(Format::Json, None).unwrap()).unwrap();
        assert_eq!(json["master_seed"], serde_json::Value::Null);
        assert_eq!(json["rows"][0]["b"], "inf");
        assert_eq!(json["rows"][0]["c"], serde_json::Value::Null);
    }

    #[test]
    fn mixability_rows() {
        let cfg: MixabilityConfig = serde_json::from_str(
            r#"{"losses":[{"kind":"square","y_lo":-1,"y_hi":1},{"kind":"absolute","y_lo":-1,"y_hi":1},{"kind":"lq","q":3,"y_lo":-1,"y_hi":1},{"kind":"lq","q":2,"y_lo":-1,"y_hi":1}],"grid_size":4001}"#,
        )
        .unwrap();
        let t = mixability_table(&cfg).unwrap();
        assert_eq!(t.rows[0][0], Cell::Text("square".into()));
        assert!((num(&t.rows[0][1]) - 0.5).abs() < 1e-15);
        assert_eq!(t.rows[1][1], Cell::Text("none".into()));
        assert_eq!(t.rows[2][0], Cell::Text("lq3".into()));
        assert!(num(&t.rows[2][2]) >= 1.0 / 3.0 - 1e-12);
        assert_eq!(t.rows[3][0], Cell::Text("lq2".into()));
        assert!((num(&t.rows[3][1]) - 0.5).abs() < 1e-12);
        assert!((num(&t.rows[3][2]) - 0.5).abs() < 1e-3);
        assert!(mixability_table(&MixabilityConfig { losses: vec![], grid_size: 10 }).is_err());
    }

    #[test]
    fn lower_bound_rows() {
        let cfg: LowerBoundConfig =
            serde_json::from_str(r#"{"presets":[{"setting":"classification_agnostic","v":4,"n":64}]}"#).unwrap();
        let t = lower_bound_table(&cfg).unwrap();
        assert_eq!(t.columns.len(), 13);
        let row = &t.rows[0];
        assert!((num(&row[12]) - 1.0 / 32.0).abs() < 1e-15);
        // Closed forms never exceed the exact similarity bound.
        assert!(num(&row[9]) <= num(&row[8]) + 1e-12);
        assert!(num(&row[10]) <= num(&row[9]) + 1e-12);
        assert!(lower_bound_table(&LowerBoundConfig { presets: vec![], hypercubes: vec![] }).is_err());
    }

    #[test]
    fn variance_check_locates_violation() {
        let sq = LossSpec::square(1.0).unwrap();
        let case = |lambda: f64| VarianceCase {
            name: format!("square_{lambda}"),
            loss: sq,
            lambda,
            variance_fn: VarianceFn::zero(),
            experts: ExpertTable::constants(&[-1.0, 1.0]).unwrap(),
            rhos: vec![vec![0.5, 0.5]],
            samples: (0..=20).map(|i| Outcome::new(0, -1.0 + i as f64 / 10.0)).collect(),
        };
        let (t, fails) = variance_table(&VarianceCheckConfig { cases: vec![case(0.125)], tolerance: 1e-10 }).unwrap();
        assert!(fails.is_empty());
        assert_eq!(t.rows[0][5], Cell::Text("pass".into()));
        let (t, fails) = variance_table(&VarianceCheckConfig { cases: vec![case(1.0)], tolerance: 1e-10 }).unwrap();
        assert_eq!(fails.len(), 1);
        assert!(num(&t.rows[0][4]).abs() == 1.0);
        let mut empty = case(0.125);
        empty.samples.clear();
        assert!(variance_table(&VarianceCheckConfig { cases: vec![empty], tolerance: 1e-10 }).is_err());
    }

    #[test]
    fn pairings() {
        let sq = LossSpec::square(1.0).unwrap();
        let pm = EstimatorSpec::ProgressiveMixture { lambda: LambdaSpec::Fixed(0.5) };
        let up = UpperBound::SquareMixture { big_b: 1.0, g_size: 10.0, n: 100.0 };
        assert!(pairing_matched(&pm, &up, &sq));
        let pm2 = EstimatorSpec::ProgressiveMixture { lambda: LambdaSpec::Fixed(2.0) };
        assert!(!pairing_matched(&pm2, &up, &sq));
        let hoeff = EstimatorSpec::Seqrand {
            lambda: LambdaSpec::Rule(LambdaRule::Hoeffding { span: 1.0 }),
            variance_fn: VarianceFn::hoeffding(1.0).unwrap(),
            output_mode: seqrand_core::aggregators::OutputMode::UniformDraw,
        };
        let hb = UpperBound::Hoeffding { span: 1.0, g_size: 16.0, n: 31.0 };
        assert!(pairing_matched(&hoeff, &hb, &LossSpec::zero_one()));
        assert!(!pairing_matched(&pm, &hb, &LossSpec::zero_one()));
    }

    #[test]
    fn bound_report_on_small_hypercube() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{
                "setting": "square_mixture",
                "data": {"source": "hypercube", "hypercube": {"m": 2, "w": 0.25, "p_plus": 1, "p_minus": 0,
                          "h1": -1, "h2": 1, "loss": {"kind": "square", "y_lo": -1, "y_hi": 1}}},
                "experts": {"kind": "pattern", "d": 4},
                "estimator": {"estimator": "progressive_mixture", "lambda": 0.5},
                "ns": [4, 8],
                "trials": 200,
                "upper": {"setting": "square_mixture", "big_b": 1, "g_size": 4, "n": 1}
            }"#,
        )
        .unwrap();
        let rows = bound_report(&cfg, 3).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.status, RowStatus::Ok);
            assert!(r.lower_closed.unwrap() <= r.lower_exact.unwrap() + 1e-12);
            assert!(r.upper.unwrap() > r.empirical);
        }
        assert_eq!(bound_table(&rows).rows[0].len(), BOUND_REPORT_COLUMNS.len());
        let mut bad = cfg.clone();
        bad.ns.clear();
        assert!(bound_report(&bad, 3).is_err());
    }
}
