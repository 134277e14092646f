use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use ibp_core::buffet::{Buffet, FeatureMatrix, MatrixModel, MatrixPrior};
use ibp_core::multivar::{MultiBuffetState, SbdPrior, SbdProcess};
use ibp_core::posterior::{self, Explosivity, Method};
use ibp_core::verify::{run_suite, Suite};
use ibp_core::{IbpError, LevyDensity, Rate, Support};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Direction, Format, MethodArg, RunConfig};

pub const DEFAULT_BUDGET: u64 = 100_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
const LAPLACE_PROBES: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// What a command produced: the exit code plus documents for stdout and stderr.
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome { code: 0, stdout, stderr: String::new() }
    }
}

fn to_json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn rate_json(r: Rate) -> Value {
    match r {
        Rate::Finite(v) => json!(v),
        Rate::Infinite => json!("infinite"),
    }
}

fn json_only(cfg: &RunConfig, command: &str) -> Result<(), IbpError> {
    match cfg.format.unwrap_or_default() {
        Format::Json => Ok(()),
        Format::Csv => Err(IbpError::Config(format!("csv output is only available for `sample`, not `{command}`"))),
    }
}

fn seed_of(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or(0)
}

fn required_prior(cfg: &RunConfig) -> Result<MatrixPrior, IbpError> {
    cfg.prior.clone().ok_or_else(|| IbpError::Config("a prior is required (--prior or `prior` in the config)".into()))
}

fn load_matrix(cfg: &RunConfig) -> anyhow::Result<FeatureMatrix> {
    let path: &PathBuf =
        cfg.input.as_ref().ok_or_else(|| IbpError::Config("an input matrix is required (--in)".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| IbpError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut m: FeatureMatrix = serde_json::from_str(&text)
        .map_err(|e| IbpError::Validation(format!("{} is not a feature matrix: {e}", path.display())))?;
    // A declared model replaces the stored one, so its mismatches surface below.
    if let Some(p) = &cfg.prior {
        m.prior = p.clone();
    }
    if let Some(s) = cfg.score {
        m.model = s.resolve(cfg.q, &m.prior)?;
    }
    let problems = m.problems();
    if !problems.is_empty() {
        let list: Vec<String> = problems.iter().map(|p| format!("  - {p}")).collect();
        return Err(IbpError::Validation(format!(
            "{} does not fit the declared model:\n{}",
            path.display(),
            list.join("\n")
        ))
        .into());
    }
    Ok(m)
}

#[derive(Serialize)]
struct SampleSummary {
    prior: MatrixPrior,
    model: MatrixModel,
    seed: u64,
    customers: u64,
    dishes: usize,
    total_score: u64,
    new_dishes_per_customer: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    explosivity: Option<Explosivity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

pub fn sample(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let prior = required_prior(cfg)?;
    let score = cfg.score.ok_or_else(|| IbpError::Config("a score model is required (--score)".into()))?;
    let model = score.resolve(cfg.q, &prior)?;
    let customers = cfg.customers.ok_or_else(|| IbpError::Config("--customers is required".into()))?;
    let seed = seed_of(cfg);
    let mut per_customer = Vec::with_capacity(customers as usize);
    let (matrix, total_score, explosivity) = match (&prior, &model) {
        (MatrixPrior::Levy(levy), MatrixModel::Score(s)) => {
            let explosivity = posterior::explosivity_check(levy, *s)?;
            if let Explosivity::Infinite { reason } = &explosivity {
                if !cfg.allow_explosive.unwrap_or(false) {
                    return Err(IbpError::Explosive(format!(
                        "{reason}; dishes would receive unboundedly large scores. \
                         Pass --allow-explosive to sample anyway"
                    ))
                    .into());
                }
            }
            let mut st = Buffet::new(levy.clone(), *s)?.start(seed);
            for _ in 0..customers {
                per_customer.push(st.step()?.new_dishes);
            }
            (FeatureMatrix::from_state(&st), st.total_score(), Some(explosivity))
        }
        (MatrixPrior::Sbd(p), MatrixModel::Multinomial { .. }) => {
            let mut st = MultiBuffetState::new(Arc::new(SbdProcess { prior: p.clone() }), seed);
            for _ in 0..customers {
                per_customer.push(st.step()?);
            }
            let total = st.dishes().iter().map(|d| d.total()).sum();
            (FeatureMatrix::from_multi_state(&st, p)?, total, None)
        }
        (MatrixPrior::Levy(_), MatrixModel::Multinomial { .. }) => {
            return Err(IbpError::Config("multinomial scores need an sbd prior".into()).into())
        }
        (MatrixPrior::Sbd(_), MatrixModel::Score(s)) => {
            return Err(IbpError::Config(format!("an sbd prior needs multinomial scores, got {s}")).into())
        }
    };
    let doc = match cfg.format.unwrap_or_default() {
        Format::Json => to_json(&matrix)?,
        Format::Csv => matrix.to_csv(),
    };
    let summary = SampleSummary {
        prior,
        model,
        seed,
        customers,
        dishes: matrix.num_dishes(),
        total_score,
        new_dishes_per_customer: per_customer,
        explosivity,
        out: cfg.out.clone(),
    };
    Ok(match &cfg.out {
        Some(path) => {
            write_file(path, &doc)?;
            Outcome::ok(to_json(&summary)?)
        }
        None => Outcome { code: 0, stdout: doc, stderr: to_json(&summary)? },
    })
}

#[derive(Serialize)]
struct LogprobReport {
    customers: u64,
    dishes: usize,
    method: MethodArg,
    include_atoms: bool,
    /// Log-probability of the matrix with dishes held as labeled columns.
    log_marginal: f64,
    /// Log-probability of the unordered score pattern.
    log_pattern_probability: f64,
}

pub fn logprob(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    json_only(cfg, "logprob")?;
    let matrix = load_matrix(cfg)?;
    if let MatrixModel::Multinomial { .. } = matrix.model {
        return Err(IbpError::Config("logprob evaluates scalar score models only".into()).into());
    }
    let st = matrix.to_state()?;
    let method = cfg.method.unwrap_or_default();
    let m = match method {
        MethodArg::Auto => Method::Auto,
        MethodArg::Closed => Method::Closed,
        MethodArg::Quadrature => Method::Quadrature,
    };
    let include_atoms = cfg.include_atoms.unwrap_or(false);
    let mut labeled = posterior::log_marginal_with(&st, m)?;
    if include_atoms {
        let atoms: Vec<f64> = st.dishes().iter().map(|d| d.atom).collect();
        labeled += posterior::atom_log_density(&atoms);
    }
    let report = LogprobReport {
        customers: st.customers(),
        dishes: st.num_dishes(),
        method,
        include_atoms,
        log_marginal: labeled,
        log_pattern_probability: labeled - st.pattern().ln_multiplicity(),
    };
    emit(cfg, &report)
}

fn emit<T: Serialize>(cfg: &RunConfig, doc: &T) -> anyhow::Result<Outcome> {
    let text = to_json(doc)?;
    match &cfg.out {
        Some(path) => {
            write_file(path, &text)?;
            Ok(Outcome::ok(String::new()))
        }
        None => Ok(Outcome::ok(text)),
    }
}

pub fn posterior(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    json_only(cfg, "posterior")?;
    let matrix = load_matrix(cfg)?;
    let report = match &matrix.prior {
        MatrixPrior::Levy(_) => univariate_posterior(&matrix)?,
        MatrixPrior::Sbd(p) => sbd_posterior(&matrix, p)?,
    };
    emit(cfg, &report)
}

fn univariate_posterior(matrix: &FeatureMatrix) -> anyhow::Result<Value> {
    let st = matrix.to_state()?;
    let summary = posterior::posterior_of(&st)?;
    let mut dishes = Vec::with_capacity(st.num_dishes());
    for (i, d) in st.dishes().iter().enumerate() {
        let pred = posterior::predictive_existing(&summary, i)?;
        dishes.push(json!({
            "atom": d.atom,
            "total_score": d.count,
            "jump": summary.jump_laws[i].descriptor(),
            "take_probability": pred.take_probability(),
        }));
    }
    Ok(json!({
        "customers": st.customers(),
        "prior": matrix.prior,
        "model": matrix.model,
        "tilted": {
            "order": st.customers(),
            "prior": summary.tilted.closed_form(),
            "new_dish_rate": rate_json(summary.new_dish_rate),
        },
        "explosivity": posterior::explosivity_check(st.prior(), st.score_model())?,
        "dishes": dishes,
    }))
}

fn sbd_posterior(matrix: &FeatureMatrix, prior: &SbdPrior) -> anyhow::Result<Value> {
    let st = matrix.to_multi_state()?;
    let order = st.customers();
    let mut dishes = Vec::with_capacity(st.dishes().len());
    for d in st.dishes() {
        let jump = prior.jump_sampler(&d.counts, order)?;
        let takes = prior.take_probabilities(&d.counts, order)?;
        dishes.push(json!({
            "atom": d.atom,
            "counts": d.counts,
            "jump": {
                "law": "sbd",
                "sum_a": jump.sum_a,
                "sum_b": jump.sum_b,
                "direction": jump.direction,
                "mean": jump.mean(),
            },
            "take_probability": takes.iter().sum::<f64>(),
            "take_probabilities": takes,
        }));
    }
    Ok(json!({
        "customers": order,
        "prior": matrix.prior,
        "model": matrix.model,
        "tilted": {
            "order": order,
            "prior": MatrixPrior::Sbd(prior.tilted(order)),
            "new_dish_rate": prior.new_dish_rate(order),
        },
        "dishes": dishes,
    }))
}

pub fn verify(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    json_only(cfg, "verify")?;
    let suite: Suite = cfg.suite.as_deref().unwrap_or("all").parse()?;
    let report = run_suite(suite, seed_of(cfg), cfg.budget.unwrap_or(DEFAULT_BUDGET))?;
    let mut out = emit(cfg, &report)?;
    out.stderr = report.table();
    out.code = if report.pass { 0 } else { 1 };
    Ok(out)
}

#[derive(Serialize)]
struct LaplaceProbe {
    lambda: f64,
    input: f64,
    output: f64,
    rel_error: f64,
}

#[derive(Serialize)]
struct TransformReport {
    input: LevyDensity,
    direction: Direction,
    output: LevyDensity,
    round_trip: bool,
    tolerance: f64,
    laplace: Vec<LaplaceProbe>,
    pass: bool,
}

pub fn transform(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    json_only(cfg, "transform")?;
    let levy = match required_prior(cfg)? {
        MatrixPrior::Levy(l) => l,
        MatrixPrior::Sbd(_) => return Err(IbpError::Config("only univariate Lévy densities can be transformed".into()).into()),
    };
    let direction = cfg.direction.ok_or_else(|| IbpError::Config("--direction is required".into()))?;
    let (need, name) = match direction {
        Direction::ToHalfline => (Support::UnitInterval, "(0, 1)"),
        Direction::ToUnit => (Support::PositiveHalfLine, "(0, ∞)"),
    };
    if levy.support() != need {
        return Err(IbpError::Validation(format!(
            "{levy} does not live on {name}, so it cannot be transformed {}",
            if direction == Direction::ToHalfline { "to the half-line" } else { "to the unit interval" }
        ))
        .into());
    }
    let tolerance = cfg.tolerance.unwrap_or(DEFAULT_TOLERANCE);
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(IbpError::Config(format!("tolerance must be positive, got {tolerance}")).into());
    }
    let output = levy.transform();
    let round_trip = output.transform() == levy;
    let mut laplace = Vec::with_capacity(LAPLACE_PROBES.len());
    for lambda in LAPLACE_PROBES {
        let a = levy.laplace_exponent(lambda)?;
        let b = output.laplace_exponent(lambda)?;
        laplace.push(LaplaceProbe { lambda, input: a, output: b, rel_error: ((a - b) / a).abs() });
    }
    let pass = round_trip && laplace.iter().all(|p| p.rel_error <= tolerance);
    let report = TransformReport { input: levy, direction, output, round_trip, tolerance, laplace, pass };
    let mut out = emit(cfg, &report)?;
    if !pass {
        out.code = 4;
        out.stderr = "transform check failed: the two sides disagree beyond the tolerance\n".into();
    }
    Ok(out)
}

/// Parse helper shared by the flag layer.
pub fn score_flag(text: &str) -> Result<crate::minilang::ScoreArg, String> {
    crate::minilang::parse_score(text).map_err(|e| e.to_string())
}

pub fn prior_flag(text: &str) -> Result<MatrixPrior, String> {
    crate::minilang::parse_prior(text).map_err(|e| e.to_string())
}
