//! Posterior structure given an observed allocation: the tilted intensity of
//! unseen dishes, per-dish jump laws, predictive score laws, the pattern
//! log-likelihood and the explosivity diagnostic.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::buffet::table::InverseCdf;
use crate::buffet::BuffetState;
use crate::draw;
use crate::error::{IbpError, Result};
use crate::levy::{self, measure_integral, Family, LevyDensity, Rate, TiltedLevy};
use crate::quad::{self, Point, QuadOptions, Support};
use crate::scores::ScoreModel;
use crate::special::{beta_fn, gamma, ln_beta, ln_gamma, ln_nb_coeff};

/// Posterior law of an observed dish's weight `J` given its total score `c`.
#[derive(Clone, Debug)]
pub enum JumpLaw {
    Beta { a: f64, b: f64 },
    /// Shape and rate.
    Gamma { shape: f64, rate: f64 },
    Numeric(Arc<NumericJump>),
}

/// A jump law known only through its unnormalized density
/// `ρ_M(s) Π_i h(a_i|s)`, tabulated for sampling.
#[derive(Debug)]
pub struct NumericJump {
    tilted: TiltedLevy,
    count: u64,
    shift: f64,
    mass: f64,
    table: InverseCdf,
}

/// Serializable summary of a [`JumpLaw`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum JumpDescriptor {
    Beta { a: f64, b: f64, mean: f64 },
    Gamma { shape: f64, rate: f64, mean: f64 },
    Numeric { count: u64, mean: f64 },
}

/// `ln[ρ(s)(1−π(s))^M Π_i h(a_i|s)]` up to a constant in `s`.
fn ln_jump_weight(t: &TiltedLevy, count: u64, p: Point) -> f64 {
    let rho = t.base().density_at(p);
    if !(rho > 0.0) {
        return f64::NEG_INFINITY;
    }
    let c = count as f64;
    let mut v = rho.ln() + t.order() as f64 * t.score().ln_zero_mass(p) + c * p.s.ln();
    if let ScoreModel::Bernoulli = t.score() {
        v -= c * p.ln_sc();
    }
    v
}

/// Rough maximum of `ln(weight · ds/du)` over the real coordinate, used to
/// keep the exponentiated integrand in floating-point range.
fn log_scale<F: Fn(Point) -> f64>(support: Support, lnw: F) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut u = -quad::U_LIMIT;
    while u <= quad::U_LIMIT {
        let (p, j) = support.from_real(u);
        if p.s > 0.0 && p.s.is_finite() && (support == Support::PositiveHalfLine || p.sc > 0.0) {
            let v = lnw(p) + j.ln();
            if v.is_finite() && v > best {
                best = v;
            }
        }
        u += 0.25;
    }
    best
}

/// `(ln ∫ w, shift)` for the jump weight of a dish with total `count`.
fn ln_weight_integral(t: &TiltedLevy, count: u64) -> Result<(f64, f64)> {
    let lnw = |p: Point| ln_jump_weight(t, count, p);
    let shift = log_scale(t.support(), lnw);
    if !shift.is_finite() {
        return Err(IbpError::Quadrature(format!("jump weight vanishes everywhere for count {count}")));
    }
    let r = measure_integral(t.support(), |p| (lnw(p) - shift).exp(), !t.base().is_named())?;
    match r {
        Rate::Finite(v) if v > 0.0 => Ok((v.ln() + shift, shift)),
        Rate::Finite(v) => Err(IbpError::Quadrature(format!("jump weight integral {v} for count {count}"))),
        Rate::Infinite => Err(IbpError::Explosive(format!(
            "the posterior weight of a dish with total score {count} is improper"
        ))),
    }
}

impl NumericJump {
    fn new(tilted: TiltedLevy, count: u64) -> Result<Self> {
        let (ln_mass, shift) = ln_weight_integral(&tilted, count)?;
        let t2 = tilted.clone();
        let table = InverseCdf::build(tilted.support(), move |p| (ln_jump_weight(&t2, count, p) - shift).exp())?;
        Ok(NumericJump { tilted, count, shift, mass: (ln_mass - shift).exp(), table })
    }

    fn density_at(&self, p: Point) -> f64 {
        (ln_jump_weight(&self.tilted, self.count, p) - self.shift).exp() / self.mass
    }
}

impl JumpLaw {
    pub fn support(&self) -> Support {
        match self {
            JumpLaw::Beta { .. } => Support::UnitInterval,
            JumpLaw::Gamma { .. } => Support::PositiveHalfLine,
            JumpLaw::Numeric(n) => n.tilted.support(),
        }
    }

    pub(crate) fn density_at(&self, p: Point) -> f64 {
        match self {
            JumpLaw::Beta { a, b } => ((a - 1.0) * p.s.ln() + (b - 1.0) * p.ln_sc() - ln_beta(*a, *b)).exp(),
            JumpLaw::Gamma { shape, rate } => {
                (shape * rate.ln() + (shape - 1.0) * p.s.ln() - rate * p.s - ln_gamma(*shape)).exp()
            }
            JumpLaw::Numeric(n) => n.density_at(p),
        }
    }

    /// Normalized density of `J`.
    pub fn density(&self, s: f64) -> Result<f64> {
        if !self.support().contains(s) {
            return Err(IbpError::Domain(format!("s={s} outside {:?}", self.support())));
        }
        Ok(self.density_at(Point::new(s)))
    }

    pub fn mean(&self) -> f64 {
        match self {
            JumpLaw::Beta { a, b } => a / (a + b),
            JumpLaw::Gamma { shape, rate } => shape / rate,
            JumpLaw::Numeric(_) => self.expect(|p| p.s),
        }
    }

    /// `E[g(J)]` by quadrature.
    pub fn expect<G: Fn(Point) -> f64>(&self, g: G) -> f64 {
        quad::integrate_support(self.support(), |p| g(p) * self.density_at(p), QuadOptions::rel(1e-11))
            .map(|e| e.value)
            .unwrap_or(f64::NAN)
    }

    pub(crate) fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            JumpLaw::Beta { a, b } => draw::beta_point(*a, *b, rng),
            JumpLaw::Gamma { shape, rate } => loop {
                let x = draw::gamma(*shape, *rate, rng);
                if x > 0.0 {
                    break Point::new(x);
                }
            },
            JumpLaw::Numeric(n) => n.table.sample(rng),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_point(rng).s
    }

    pub fn descriptor(&self) -> JumpDescriptor {
        match self {
            JumpLaw::Beta { a, b } => JumpDescriptor::Beta { a: *a, b: *b, mean: self.mean() },
            JumpLaw::Gamma { shape, rate } => JumpDescriptor::Gamma { shape: *shape, rate: *rate, mean: self.mean() },
            JumpLaw::Numeric(n) => JumpDescriptor::Numeric { count: n.count, mean: self.mean() },
        }
    }
}

/// Posterior law of the weight of a dish with total score `count` after
/// `order` customers.
pub fn jump_law(prior: &LevyDensity, score: ScoreModel, count: u64, order: u64) -> Result<JumpLaw> {
    if count == 0 {
        return Err(IbpError::Domain("jump laws exist only for dishes with a nonzero score".into()));
    }
    let tilted = TiltedLevy::new(prior.clone(), score, order)?;
    let c = count as f64;
    Ok(match (tilted.family(), score) {
        (Some(Family::Beta { alpha, beta, .. }), ScoreModel::Bernoulli) => {
            JumpLaw::Beta { a: c - alpha, b: beta + alpha - c }
        }
        (Some(Family::Beta { alpha, beta, .. }), ScoreModel::NegativeBinomial { .. }) => {
            JumpLaw::Beta { a: c - alpha, b: beta + alpha }
        }
        (Some(Family::Tempered { alpha, beta, .. }), ScoreModel::Poisson { .. }) if beta > 0.0 => {
            JumpLaw::Gamma { shape: c - alpha, rate: beta }
        }
        _ => JumpLaw::Numeric(Arc::new(NumericJump::new(tilted, count)?)),
    })
    .and_then(|law| match law {
        JumpLaw::Beta { a, b } if !(a > 0.0 && b > 0.0) => Err(IbpError::Validation(format!(
            "total score {count} is impossible after {order} Bernoulli customers"
        ))),
        other => Ok(other),
    })
}

/// Predictive law of the next customer's score on an existing dish.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Predictive {
    Bernoulli { p: f64 },
    /// `P(a) = C(a+r−1, a) p^a (1−p)^r`.
    NegativeBinomial { r: f64, p: f64 },
    /// Negative binomial with shape `r` and a `Beta(a, b)` success probability.
    BetaNegativeBinomial { r: f64, a: f64, b: f64 },
    /// Numerically integrated mixture; `pmf_head[k]` is `P(A = k)`.
    Numeric { pmf_head: Vec<f64> },
}

impl Predictive {
    pub fn pmf(&self, k: u64) -> f64 {
        let kf = k as f64;
        match self {
            Predictive::Bernoulli { p } => match k {
                0 => 1.0 - p,
                1 => *p,
                _ => 0.0,
            },
            Predictive::NegativeBinomial { r, p } => {
                (ln_nb_coeff(k, *r) + if k > 0 { kf * p.ln() } else { 0.0 } + r * (-p).ln_1p()).exp()
            }
            Predictive::BetaNegativeBinomial { r, a, b } => {
                (ln_nb_coeff(k, *r) + ln_beta(a + kf, b + r) - ln_beta(*a, *b)).exp()
            }
            Predictive::Numeric { pmf_head } => pmf_head.get(k as usize).copied().unwrap_or(0.0),
        }
    }

    /// `P(A ≠ 0)`.
    pub fn take_probability(&self) -> f64 {
        match self {
            Predictive::Bernoulli { p } => *p,
            Predictive::NegativeBinomial { r, p } => -(r * (-p).ln_1p()).exp_m1(),
            Predictive::BetaNegativeBinomial { r, a, b } => 1.0 - (ln_beta(*a, b + r) - ln_beta(*a, *b)).exp(),
            Predictive::Numeric { pmf_head } => 1.0 - pmf_head[0],
        }
    }
}

/// Mix `G_A(·|J)` over a jump law.
pub fn predictive_from(law: &JumpLaw, score: ScoreModel) -> Predictive {
    match (law, score) {
        (JumpLaw::Beta { a, b }, ScoreModel::Bernoulli) => Predictive::Bernoulli { p: a / (a + b) },
        (JumpLaw::Gamma { shape, rate }, ScoreModel::Poisson { b }) => {
            Predictive::NegativeBinomial { r: *shape, p: b / (rate + b) }
        }
        (JumpLaw::Beta { a, b }, ScoreModel::NegativeBinomial { r }) => {
            Predictive::BetaNegativeBinomial { r, a: *a, b: *b }
        }
        (JumpLaw::Numeric(_), ScoreModel::Bernoulli) => Predictive::Bernoulli { p: law.mean() },
        _ => {
            let mut pmf_head = Vec::new();
            let mut acc = 0.0;
            for k in 0..10_000u64 {
                let pk = law.expect(|p| score.ln_pmf_at(k, p).exp());
                pmf_head.push(pk);
                acc += pk;
                if 1.0 - acc < 1e-12 || (k > 0 && pk < 1e-16) {
                    break;
                }
            }
            Predictive::Numeric { pmf_head }
        }
    }
}

#[derive(Clone, Debug)]
pub struct PosteriorSummary {
    pub tilted: TiltedLevy,
    pub new_dish_rate: Rate,
    pub atoms: Vec<f64>,
    pub dish_counts: Vec<u64>,
    pub jump_laws: Vec<Arc<JumpLaw>>,
}

pub fn posterior_of(state: &BuffetState) -> Result<PosteriorSummary> {
    let order = state.customers();
    let tilted = TiltedLevy::new(state.prior().clone(), state.score_model(), order)?;
    let jump_laws = state
        .dishes()
        .iter()
        .map(|d| state.buffet().jump_law(d.count, order))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSummary {
        new_dish_rate: tilted.new_dish_rate()?,
        tilted,
        atoms: state.dishes().iter().map(|d| d.atom).collect(),
        dish_counts: state.dishes().iter().map(|d| d.count).collect(),
        jump_laws,
    })
}

pub fn predictive_existing(summary: &PosteriorSummary, dish: usize) -> Result<Predictive> {
    let law = summary.jump_laws.get(dish).ok_or_else(|| {
        IbpError::Domain(format!("dish index {dish} out of range (K = {})", summary.jump_laws.len()))
    })?;
    Ok(predictive_from(law, summary.tilted.score()))
}

/// How to evaluate the pattern log-likelihood.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Closed forms where available, quadrature otherwise.
    Auto,
    Closed,
    Quadrature,
}

fn closed_dish_term(prior: &LevyDensity, score: ScoreModel, order: u64, scores: &[u64]) -> Option<f64> {
    let c: u64 = scores.iter().sum();
    let cf = c as f64;
    let m = order as f64;
    let fam = prior.family()?;
    Some(match (fam, score) {
        (Family::Beta { theta, alpha, beta }, ScoreModel::Bernoulli) => {
            theta.ln() + ln_beta(cf - alpha, m - cf + beta + alpha)
        }
        (Family::Beta { theta, alpha, beta }, ScoreModel::NegativeBinomial { r }) => {
            theta.ln() + ln_beta(cf - alpha, r * m + beta + alpha) + score.ln_h_constant(scores)
        }
        (Family::Tempered { scale, alpha, beta }, ScoreModel::Poisson { b }) => {
            scale.ln() + ln_gamma(cf - alpha) + (alpha - cf) * (beta + b * m).ln() + score.ln_h_constant(scores)
        }
        _ => return None,
    })
}

/// `ln P(pattern)` with dishes held as labeled: `−Ψ(f_M) + Σ_ℓ ln ∫ ρ Π_i G(a_{iℓ}|s) ds`.
/// Each entry of `dishes` lists the nonzero scores of one dish.
pub fn log_marginal_of(
    prior: &LevyDensity,
    score: ScoreModel,
    customers: u64,
    dishes: &[Vec<u64>],
    method: Method,
) -> Result<f64> {
    TiltedLevy::new(prior.clone(), score, 0)?;
    if customers == 0 {
        return if dishes.is_empty() {
            Ok(0.0)
        } else {
            Err(IbpError::Validation("dishes recorded without customers".into()))
        };
    }
    let psi = match method {
        Method::Quadrature => levy::exponent_psi_quadrature(prior, score, customers)?,
        Method::Closed => levy::exponent_psi_closed(prior, score, customers)
            .ok_or_else(|| IbpError::Config(format!("no closed-form exponent for {prior} with {score} scores")))?,
        Method::Auto => levy::exponent_psi(prior, score, customers)?,
    };
    let mut total = -psi;
    let tilted = TiltedLevy::new(prior.clone(), score, customers)?;
    for scores in dishes {
        if scores.contains(&0) || scores.is_empty() {
            return Err(IbpError::Validation("each dish must list only its nonzero scores".into()));
        }
        let closed = if method == Method::Quadrature { None } else { closed_dish_term(prior, score, customers, scores) };
        let term = match (closed, method) {
            (Some(v), _) => v,
            (None, Method::Closed) => {
                return Err(IbpError::Config(format!("no closed-form dish integral for {prior} with {score} scores")))
            }
            (None, _) => {
                let c: u64 = scores.iter().sum();
                ln_weight_integral(&tilted, c)?.0 + score.ln_h_constant(scores)
            }
        };
        total += term;
    }
    Ok(total)
}

pub fn log_marginal(state: &BuffetState) -> Result<f64> {
    log_marginal_with(state, Method::Auto)
}

pub fn log_marginal_with(state: &BuffetState, method: Method) -> Result<f64> {
    let dishes: Vec<Vec<u64>> = state.dishes().iter().map(|d| d.nonzero_scores()).collect();
    log_marginal_of(state.prior(), state.score_model(), state.customers(), &dishes, method)
}

/// Log-probability of the unordered score pattern: the labeled log-marginal
/// minus the log of the number of labelings of identical columns.
pub fn log_pattern_probability(state: &BuffetState) -> Result<f64> {
    Ok(log_marginal(state)? - state.pattern().ln_multiplicity())
}

/// `Σ_ℓ ln B₀'(atom)` for the uniform base measure on `[0, 1)`.
pub fn atom_log_density(atoms: &[f64]) -> f64 {
    if atoms.iter().all(|a| (0.0..1.0).contains(a)) {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Finite or infinite expected total score `E[Z(Ω)]` of one customer.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Explosivity {
    Finite { expected_total_score: f64 },
    Infinite { reason: String },
}

impl Explosivity {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Explosivity::Infinite { .. })
    }
}

/// `∫₀¹ s^{−α}(1−s)^{β+α−1} ds`.
fn first_moment(alpha: f64, beta: f64) -> f64 {
    if alpha == 0.0 {
        1.0 / beta
    } else {
        beta_fn(1.0 - alpha, beta + alpha)
    }
}

/// `E[Z(Ω)] = ∫ E[A|s] ρ(s) ds`.
pub fn explosivity_check(prior: &LevyDensity, score: ScoreModel) -> Result<Explosivity> {
    TiltedLevy::new(prior.clone(), score, 0)?;
    let infinite = |why: String| Explosivity::Infinite { reason: why };
    let closed = match (prior.family(), score) {
        (Some(Family::Beta { theta, alpha, beta }), ScoreModel::Bernoulli) => {
            Some(Explosivity::Finite { expected_total_score: theta * first_moment(alpha, beta) })
        }
        (Some(Family::Beta { theta, alpha, beta }), ScoreModel::Poisson { b }) => {
            Some(Explosivity::Finite { expected_total_score: b * theta * first_moment(alpha, beta) })
        }
        (Some(Family::Beta { theta, alpha, beta }), ScoreModel::NegativeBinomial { r }) => Some(if beta + alpha > 1.0 {
            let mass = if alpha == 0.0 { 1.0 / (beta - 1.0) } else { beta_fn(1.0 - alpha, beta + alpha - 1.0) };
            Explosivity::Finite { expected_total_score: r * theta * mass }
        } else {
            infinite(format!(
                "{prior} with {score} scores has β+α = {} ≤ 1: each dish's mean score s/(1−s) is not \
                 integrable against ρ near s = 1, so the expected total score E[Z(Ω)] is infinite",
                beta + alpha
            ))
        }),
        (Some(Family::Tempered { scale, alpha, beta }), ScoreModel::Poisson { b }) => Some(if beta > 0.0 {
            Explosivity::Finite { expected_total_score: b * scale * gamma(1.0 - alpha) * beta.powf(alpha - 1.0) }
        } else {
            infinite(format!(
                "{prior} has no exponential tempering: ∫ s ρ(s) ds diverges at infinity, so the expected \
                 total score E[Z(Ω)] is infinite although the number of dishes is finite"
            ))
        }),
        _ => None,
    };
    if let Some(e) = closed {
        return Ok(e);
    }
    Ok(match expected_total_score_quadrature(prior, score)? {
        Rate::Finite(v) => Explosivity::Finite { expected_total_score: v },
        Rate::Infinite => infinite(format!(
            "∫ E[A|s] ρ(s) ds diverges numerically for {prior} with {score} scores: the expected total score is infinite"
        )),
    })
}

pub fn expected_total_score_quadrature(prior: &LevyDensity, score: ScoreModel) -> Result<Rate> {
    let mean = move |p: Point| match score {
        ScoreModel::Bernoulli => p.s,
        ScoreModel::Poisson { b } => b * p.s,
        ScoreModel::NegativeBinomial { r } => r * p.s / p.sc,
    };
    prior.integrate_against(&mean, matches!(score, ScoreModel::NegativeBinomial { .. }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffet::{Buffet, DishRecord};
    use approx::assert_relative_eq;

    #[test]
    fn conjugate_jump_laws() {
        let sb = LevyDensity::stable_beta(1.0, 0.0, 1.0).unwrap();
        let j = jump_law(&sb, ScoreModel::Bernoulli, 2, 3).unwrap();
        assert!(matches!(j, JumpLaw::Beta { a, b } if a == 2.0 && b == 2.0));
        assert_relative_eq!(j.mean(), 0.5);
        let g = LevyDensity::gamma_process(1.0, 1.0).unwrap();
        let j = jump_law(&g, ScoreModel::poisson(1.0).unwrap(), 4, 3).unwrap();
        assert!(matches!(j, JumpLaw::Gamma { shape, rate } if shape == 4.0 && rate == 4.0));
        assert_relative_eq!(j.mean(), 1.0);
    }

    #[test]
    fn numeric_jump_normalizes_and_matches_closed_mean() {
        let b = LevyDensity::custom("beta11", Support::UnitInterval, |s| 1.0 / s).unwrap();
        let j = jump_law(&b, ScoreModel::Bernoulli, 2, 3).unwrap();
        assert!(matches!(j, JumpLaw::Numeric(_)));
        assert_relative_eq!(j.expect(|_| 1.0), 1.0, max_relative = 1e-8);
        assert_relative_eq!(j.mean(), 0.5, max_relative = 1e-8);
    }

    #[test]
    fn gamma_poisson_predictive() {
        let g = LevyDensity::gamma_process(1.0, 1.0).unwrap();
        let j = jump_law(&g, ScoreModel::poisson(1.0).unwrap(), 1, 1).unwrap();
        let p = predictive_from(&j, ScoreModel::poisson(1.0).unwrap());
        assert_relative_eq!(p.pmf(0), 2.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn worked_log_marginal() {
        let g = LevyDensity::gamma_process(1.0, 1.0).unwrap();
        let p1 = ScoreModel::poisson(1.0).unwrap();
        let expect = -(2f64.ln()) + (1.0f64 / 8.0).ln();
        let closed = log_marginal_of(&g, p1, 1, &[vec![2]], Method::Closed).unwrap();
        let quad = log_marginal_of(&g, p1, 1, &[vec![2]], Method::Quadrature).unwrap();
        assert_relative_eq!(closed, expect, max_relative = 1e-14);
        assert_relative_eq!(quad, expect, max_relative = 1e-9);
        let buffet = Buffet::new(g, p1).unwrap();
        let st = BuffetState::from_parts(&buffet, 0, 1, vec![DishRecord::new(0.25, vec![(1, 2)]).unwrap()]).unwrap();
        assert_relative_eq!(log_marginal(&st).unwrap(), expect, max_relative = 1e-14);
        assert_eq!(log_marginal(&buffet.start(0)).unwrap(), 0.0);
    }

    #[test]
    fn explosivity_examples() {
        let nb1 = ScoreModel::negative_binomial(1.0).unwrap();
        let nb2 = ScoreModel::negative_binomial(2.0).unwrap();
        let half = LevyDensity::beta_process(1.0, 0.5).unwrap();
        assert!(explosivity_check(&half, nb1).unwrap().is_infinite());
        let two = LevyDensity::beta_process(1.0, 2.0).unwrap();
        assert_eq!(explosivity_check(&two, nb2).unwrap(), Explosivity::Finite { expected_total_score: 2.0 });
        let one = LevyDensity::beta_process(1.0, 1.0).unwrap();
        assert_eq!(
            explosivity_check(&one, ScoreModel::Bernoulli).unwrap(),
            Explosivity::Finite { expected_total_score: 1.0 }
        );
        assert!(expected_total_score_quadrature(&half, nb1).unwrap().is_infinite());
    }
}
