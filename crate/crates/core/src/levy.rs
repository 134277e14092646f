//! Homogeneous Lévy densities, their tilts `ρ_M = (1 − π_A)^M ρ`, exponents,
//! cumulants and the `(0,1) ↔ (0,∞)` transform pair.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, IbpError, Result};
use crate::quad::{self, Divergence, Point, QuadFailure, QuadOptions, Support};
use crate::scores::ScoreModel;
use crate::special::{beta_fn, digamma, gamma, ln_beta, ln_gamma, ln_gamma_ratio};

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied density together with its declared support.
#[derive(Clone)]
pub struct CustomDensity {
    pub name: String,
    pub support: Support,
    f: DensityFn,
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Custom({:?}, {:?})", self.name, self.support)
    }
}

#[derive(Clone, Debug)]
pub enum LevyKind {
    BetaProcess { theta: f64, beta: f64 },
    StableBeta { theta: f64, alpha: f64, beta: f64 },
    GammaProcess { theta: f64, beta: f64 },
    StablePositive { alpha: f64 },
    GeneralizedGamma { alpha: f64, beta: f64 },
    Custom(CustomDensity),
    /// The image of another density under the support transform.
    Transformed(Box<LevyDensity>),
}

/// Parametric shapes with closed-form integrals:
/// `Beta`: `θ s^{−α−1}(1−s)^{β+α−1}` on `(0,1)`;
/// `Tempered`: `c s^{−α−1} e^{−βs}` on `(0,∞)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    Beta { theta: f64, alpha: f64, beta: f64 },
    Tempered { scale: f64, alpha: f64, beta: f64 },
}

/// A Lévy intensity `ρ(s)`. Construct through the validating constructors.
#[derive(Clone, Debug)]
pub struct LevyDensity {
    kind: LevyKind,
    /// Multiplicative constant of the named kinds, cached.
    norm: f64,
}

impl PartialEq for LevyDensity {
    fn eq(&self, o: &Self) -> bool {
        use LevyKind::*;
        match (&self.kind, &o.kind) {
            (BetaProcess { theta: a, beta: b }, BetaProcess { theta: c, beta: d }) => a == c && b == d,
            (StableBeta { theta: a, alpha: b, beta: c }, StableBeta { theta: d, alpha: e, beta: f }) => {
                a == d && b == e && c == f
            }
            (GammaProcess { theta: a, beta: b }, GammaProcess { theta: c, beta: d }) => a == c && b == d,
            (StablePositive { alpha: a }, StablePositive { alpha: b }) => a == b,
            (GeneralizedGamma { alpha: a, beta: b }, GeneralizedGamma { alpha: c, beta: d }) => a == c && b == d,
            (Custom(a), Custom(b)) => Arc::ptr_eq(&a.f, &b.f) && a.support == b.support,
            (Transformed(a), Transformed(b)) => a == b,
            _ => false,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    ensure(v > 0.0 && v.is_finite(), || format!("{name} must be positive and finite, got {v}"))
}

fn stable_index(v: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero { (0.0..1.0).contains(&v) } else { v > 0.0 && v < 1.0 };
    ensure(ok, || format!("alpha must lie in {}0,1), got {v}", if allow_zero { "[" } else { "(" }))
}

impl LevyDensity {
    pub fn beta_process(theta: f64, beta: f64) -> Result<Self> {
        positive("theta", theta)?;
        positive("beta", beta)?;
        Ok(LevyDensity { kind: LevyKind::BetaProcess { theta, beta }, norm: theta })
    }

    pub fn stable_beta(theta: f64, alpha: f64, beta: f64) -> Result<Self> {
        positive("theta", theta)?;
        stable_index(alpha, true)?;
        ensure(beta.is_finite() && beta + alpha > 0.0, || {
            format!("stable-beta requires beta > -alpha, got alpha={alpha}, beta={beta}")
        })?;
        Ok(LevyDensity { kind: LevyKind::StableBeta { theta, alpha, beta }, norm: theta })
    }

    pub fn gamma_process(theta: f64, beta: f64) -> Result<Self> {
        positive("theta", theta)?;
        positive("beta", beta)?;
        Ok(LevyDensity { kind: LevyKind::GammaProcess { theta, beta }, norm: theta })
    }

    pub fn stable_positive(alpha: f64) -> Result<Self> {
        stable_index(alpha, false)?;
        Ok(LevyDensity { kind: LevyKind::StablePositive { alpha }, norm: alpha / gamma(1.0 - alpha) })
    }

    pub fn generalized_gamma(alpha: f64, beta: f64) -> Result<Self> {
        stable_index(alpha, false)?;
        ensure(beta >= 0.0 && beta.is_finite(), || format!("beta must be nonnegative and finite, got {beta}"))?;
        Ok(LevyDensity { kind: LevyKind::GeneralizedGamma { alpha, beta }, norm: alpha / gamma(1.0 - alpha) })
    }

    /// Wrap a user density. `∫ min(s,1) ρ(s) ds < ∞` is verified numerically.
    pub fn custom<F>(name: impl Into<String>, support: Support, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let c = CustomDensity { name: name.into(), support, f: Arc::new(f) };
        let d = LevyDensity { kind: LevyKind::Custom(c), norm: 1.0 };
        let probe = |p: Point| p.s.min(1.0) * d.density_at(p);
        match measure_integral(support, probe, true)? {
            Rate::Finite(v) if v.is_finite() && v >= 0.0 => Ok(d),
            _ => Err(IbpError::Config(
                "custom density is not a Lévy density: ∫ min(s,1) ρ(s) ds diverges".into(),
            )),
        }
    }

    pub fn kind(&self) -> &LevyKind {
        &self.kind
    }

    pub fn support(&self) -> Support {
        match &self.kind {
            LevyKind::BetaProcess { .. } | LevyKind::StableBeta { .. } => Support::UnitInterval,
            LevyKind::GammaProcess { .. } | LevyKind::StablePositive { .. } | LevyKind::GeneralizedGamma { .. } => {
                Support::PositiveHalfLine
            }
            LevyKind::Custom(c) => c.support,
            LevyKind::Transformed(inner) => inner.support().other(),
        }
    }

    pub fn is_named(&self) -> bool {
        !matches!(self.kind, LevyKind::Custom(_) | LevyKind::Transformed(_))
    }

    pub fn family(&self) -> Option<Family> {
        Some(match self.kind {
            LevyKind::BetaProcess { theta, beta } => Family::Beta { theta, alpha: 0.0, beta },
            LevyKind::StableBeta { theta, alpha, beta } => Family::Beta { theta, alpha, beta },
            LevyKind::GammaProcess { theta, beta } => Family::Tempered { scale: theta, alpha: 0.0, beta },
            LevyKind::StablePositive { alpha } => Family::Tempered { scale: self.norm, alpha, beta: 0.0 },
            LevyKind::GeneralizedGamma { alpha, beta } => Family::Tempered { scale: self.norm, alpha, beta },
            _ => return None,
        })
    }

    pub(crate) fn density_at(&self, p: Point) -> f64 {
        let (s, sc) = (p.s, p.sc);
        match &self.kind {
            LevyKind::BetaProcess { beta, .. } => {
                if *beta == 1.0 {
                    self.norm / s
                } else {
                    self.norm * sc.powf(beta - 1.0) / s
                }
            }
            LevyKind::StableBeta { alpha, beta, .. } => self.norm * s.powf(-alpha - 1.0) * sc.powf(beta + alpha - 1.0),
            LevyKind::GammaProcess { beta, .. } => self.norm * (-beta * s).exp() / s,
            LevyKind::StablePositive { alpha } => self.norm * s.powf(-alpha - 1.0),
            LevyKind::GeneralizedGamma { alpha, beta } => self.norm * s.powf(-alpha - 1.0) * (-beta * s).exp(),
            LevyKind::Custom(c) => (c.f)(s),
            LevyKind::Transformed(inner) => match inner.support() {
                // τ₀₁(u) = (1−u)⁻¹ τ∞(−ln(1−u))
                Support::PositiveHalfLine => {
                    let y = -p.ln_sc();
                    inner.density_at(Point::new(y)) / sc
                }
                // τ∞(y) = e^{−y} τ₀₁(1 − e^{−y})
                Support::UnitInterval => {
                    let e = (-s).exp();
                    e * inner.density_at(Point::with_complement(-(-s).exp_m1(), e))
                }
            },
        }
    }

    /// `ρ(s)` for `s` strictly inside the support.
    pub fn eval_density(&self, s: f64) -> Result<f64> {
        if !self.support().contains(s) {
            return Err(IbpError::Domain(format!("s={s} outside the open support {:?}", self.support())));
        }
        Ok(self.density_at(Point::new(s)))
    }

    /// The paired density on the other support.
    pub fn transform(&self) -> LevyDensity {
        if let LevyKind::Transformed(inner) = &self.kind {
            return (**inner).clone();
        }
        LevyDensity { kind: LevyKind::Transformed(Box::new(self.clone())), norm: 1.0 }
    }

    /// `∫ (1 − (1−s)^λ) ρ(s) ds` on `(0,1)` or `∫ (1 − e^{−λs}) ρ(s) ds` on
    /// `(0,∞)`; both sides of the transform pair give the same value.
    pub fn laplace_exponent(&self, lambda: f64) -> Result<f64> {
        if let Some(v) = self.laplace_exponent_closed(lambda) {
            return Ok(v);
        }
        self.laplace_exponent_quadrature(lambda)
    }

    pub fn laplace_exponent_closed(&self, lambda: f64) -> Option<f64> {
        match self.family()? {
            Family::Beta { theta, alpha, beta } => Some(unit_exponent(theta, alpha, beta, lambda)),
            Family::Tempered { scale, alpha, beta } => Some(tempered_exponent(scale, alpha, beta, lambda)),
        }
    }

    pub fn laplace_exponent_quadrature(&self, lambda: f64) -> Result<f64> {
        let sup = self.support();
        let r = self.integrate_against(&|p| match sup {
            Support::UnitInterval => -(lambda * p.ln_sc()).exp_m1(),
            Support::PositiveHalfLine => -(-lambda * p.s).exp_m1(),
        }, false)?;
        r.finite().ok_or_else(|| IbpError::Explosive(format!("Laplace exponent at λ={lambda} diverges")))
    }

    /// `∫ g(s) ρ(s) ds`. A transformed density is integrated on its inner
    /// support after the change of variables, where its tails decay
    /// exponentially in the quadrature coordinate.
    pub(crate) fn integrate_against(&self, g: &dyn Fn(Point) -> f64, probe: bool) -> Result<Rate> {
        match &self.kind {
            LevyKind::Transformed(inner) => {
                let from = inner.support();
                inner.integrate_against(&|q| g(pull_back(from, q)), probe)
            }
            _ => measure_integral(
                self.support(),
                |p| {
                    let rho = self.density_at(p);
                    if rho == 0.0 {
                        0.0
                    } else {
                        g(p) * rho
                    }
                },
                probe || !self.is_named(),
            ),
        }
    }

    /// `φ = ∫ π_A ρ` for the untilted density.
    pub fn new_dish_rate(&self, score: ScoreModel) -> Result<Rate> {
        TiltedLevy::new(self.clone(), score, 0)?.new_dish_rate()
    }

    fn to_repr(&self) -> Result<LevyRepr> {
        let mut params = BTreeMap::new();
        let (kind, inner) = match &self.kind {
            LevyKind::BetaProcess { theta, beta } => {
                params.insert("theta".into(), *theta);
                params.insert("beta".into(), *beta);
                ("beta_process", None)
            }
            LevyKind::StableBeta { theta, alpha, beta } => {
                params.insert("theta".into(), *theta);
                params.insert("alpha".into(), *alpha);
                params.insert("beta".into(), *beta);
                ("stable_beta", None)
            }
            LevyKind::GammaProcess { theta, beta } => {
                params.insert("theta".into(), *theta);
                params.insert("beta".into(), *beta);
                ("gamma_process", None)
            }
            LevyKind::StablePositive { alpha } => {
                params.insert("alpha".into(), *alpha);
                ("stable_positive", None)
            }
            LevyKind::GeneralizedGamma { alpha, beta } => {
                params.insert("alpha".into(), *alpha);
                params.insert("beta".into(), *beta);
                ("generalized_gamma", None)
            }
            LevyKind::Custom(c) => {
                return Err(IbpError::Config(format!("custom density {:?} has no serialized form", c.name)))
            }
            LevyKind::Transformed(inner) => ("transformed", Some(Box::new(inner.to_repr()?))),
        };
        Ok(LevyRepr { kind: kind.into(), params, support: Some(self.support()), inner })
    }

    fn from_repr(r: LevyRepr) -> Result<Self> {
        let get = |k: &str| {
            r.params.get(k).copied().ok_or_else(|| IbpError::Config(format!("{} requires parameter `{k}`", r.kind)))
        };
        let allowed: &[&str] = match r.kind.as_str() {
            "beta_process" | "gamma_process" => &["theta", "beta"],
            "stable_beta" => &["theta", "alpha", "beta"],
            "stable_positive" => &["alpha"],
            "generalized_gamma" => &["alpha", "beta"],
            "transformed" => &[],
            other => return Err(IbpError::Config(format!("unknown Lévy density kind `{other}`"))),
        };
        if let Some(k) = r.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(IbpError::Config(format!("{} does not take parameter `{k}`", r.kind)));
        }
        let d = match r.kind.as_str() {
            "beta_process" => LevyDensity::beta_process(get("theta")?, get("beta")?)?,
            "stable_beta" => LevyDensity::stable_beta(get("theta")?, get("alpha")?, get("beta")?)?,
            "gamma_process" => LevyDensity::gamma_process(get("theta")?, get("beta")?)?,
            "stable_positive" => LevyDensity::stable_positive(get("alpha")?)?,
            "generalized_gamma" => LevyDensity::generalized_gamma(get("alpha")?, get("beta")?)?,
            _ => {
                let inner = r.inner.ok_or_else(|| IbpError::Config("transformed density requires `inner`".into()))?;
                LevyDensity::from_repr(*inner)?.transform()
            }
        };
        if let Some(s) = r.support {
            ensure(s == d.support(), || format!("declared support {s:?} does not match {:?}", d.support()))?;
        }
        Ok(d)
    }
}

impl fmt::Display for LevyDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LevyKind::BetaProcess { theta, beta } => write!(f, "beta:theta={theta},beta={beta}"),
            LevyKind::StableBeta { theta, alpha, beta } => {
                write!(f, "stable-beta:theta={theta},alpha={alpha},beta={beta}")
            }
            LevyKind::GammaProcess { theta, beta } => write!(f, "gamma:theta={theta},beta={beta}"),
            LevyKind::StablePositive { alpha } => write!(f, "stable:alpha={alpha}"),
            LevyKind::GeneralizedGamma { alpha, beta } => write!(f, "gg:alpha={alpha},beta={beta}"),
            LevyKind::Custom(c) => write!(f, "custom:{}", c.name),
            LevyKind::Transformed(inner) => write!(f, "transformed({inner})"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevyRepr {
    kind: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support: Option<Support>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inner: Option<Box<LevyRepr>>,
}

impl Serialize for LevyDensity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_repr().map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LevyDensity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        LevyDensity::from_repr(LevyRepr::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// A rate or mass that may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rate {
    Finite(f64),
    Infinite,
}

impl Rate {
    pub fn finite(self) -> Option<f64> {
        match self {
            Rate::Finite(v) => Some(v),
            Rate::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Rate::Infinite)
    }
}

impl Serialize for Rate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Rate::Finite(v) => s.serialize_f64(*v),
            Rate::Infinite => s.serialize_str("infinite"),
        }
    }
}

/// Image of a point of the inner support under the transform pair.
fn pull_back(inner: Support, q: Point) -> Point {
    match inner {
        // u = 1 − e^{−y}
        Support::PositiveHalfLine => Point::with_complement(-(-q.s).exp_m1(), (-q.s).exp()),
        // y = −ln(1 − u)
        Support::UnitInterval => Point::new(-q.ln_sc()),
    }
}

/// Integrate a nonnegative integrand over the support. For opaque (custom or
/// transformed) densities the divergence probe runs first, since mapped
/// quadrature silently drops overflowing tails; for named kinds a failure to
/// converge is classified by the probe afterwards.
pub(crate) fn measure_integral<F: Fn(Point) -> f64>(support: Support, f: F, opaque: bool) -> Result<Rate> {
    measure_integral_opts(support, f, opaque, QuadOptions::default())
}

pub(crate) fn measure_integral_opts<F: Fn(Point) -> f64>(
    support: Support,
    f: F,
    opaque: bool,
    opts: QuadOptions,
) -> Result<Rate> {
    if opaque && quad::probe_divergence(support, &f) == Divergence::Divergent {
        return Ok(Rate::Infinite);
    }
    match quad::integrate_support(support, &f, opts) {
        Ok(e) => Ok(Rate::Finite(e.value)),
        Err(QuadFailure::NoConvergence(e)) => match quad::probe_divergence(support, &f) {
            Divergence::Divergent => Ok(Rate::Infinite),
            Divergence::Convergent => Err(QuadFailure::NoConvergence(e).into()),
        },
        Err(other) => Err(other.into()),
    }
}

/// `θ ∫₀¹ (1 − (1−s)^λ) s^{−α−1}(1−s)^{β+α−1} ds`.
pub fn unit_exponent(theta: f64, alpha: f64, beta: f64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if lambda.fract() == 0.0 && lambda <= 1.0e4 {
        // Σ_{k<λ} θ B(1−α, β+α+k), by the ratio recurrence of consecutive terms.
        let mut t = theta * ln_beta(1.0 - alpha, beta + alpha).exp();
        let mut sum = 0.0;
        for k in 0..lambda as u64 {
            sum += t;
            let kf = k as f64;
            t *= (beta + kf + alpha) / (beta + kf + 1.0);
        }
        return sum;
    }
    if alpha == 0.0 {
        theta * (digamma(beta + lambda) - digamma(beta))
    } else {
        theta * gamma(1.0 - alpha) / alpha
            * (shifted_gamma_ratio(beta + lambda, alpha) - shifted_gamma_ratio(beta, alpha))
    }
}

/// `Γ(x + a) / Γ(x)` for `x > −a`, where `x` may lie in `(−1, 0]`.
fn shifted_gamma_ratio(x: f64, a: f64) -> f64 {
    if x > 0.0 {
        ln_gamma_ratio(x, a).exp()
    } else {
        x * (ln_gamma(x + a) - ln_gamma(x + 1.0)).exp()
    }
}

/// `c ∫₀^∞ (1 − e^{−λs}) s^{−α−1} e^{−βs} ds`.
pub fn tempered_exponent(scale: f64, alpha: f64, beta: f64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if alpha == 0.0 {
        scale * (lambda / beta).ln_1p()
    } else {
        let diff = if beta == 0.0 {
            lambda.powf(alpha)
        } else {
            beta.powf(alpha) * (alpha * (lambda / beta).ln_1p()).exp_m1()
        };
        scale * gamma(1.0 - alpha) / alpha * diff
    }
}

impl Family {
    /// The family after tilting by `order` customers of `score`, when closed.
    pub fn tilted(self, score: ScoreModel, order: u64) -> Option<Family> {
        if order == 0 {
            return Some(self);
        }
        let m = order as f64;
        match (self, score) {
            (Family::Beta { theta, alpha, beta }, ScoreModel::Bernoulli) => {
                Some(Family::Beta { theta, alpha, beta: beta + m })
            }
            (Family::Beta { theta, alpha, beta }, ScoreModel::NegativeBinomial { r }) => {
                Some(Family::Beta { theta, alpha, beta: beta + r * m })
            }
            (Family::Tempered { scale, alpha, beta }, ScoreModel::Poisson { b }) => {
                Some(Family::Tempered { scale, alpha, beta: beta + b * m })
            }
            _ => None,
        }
    }

    /// `∫ π_A ρ` in closed form, when the score model and family pair up.
    pub fn new_dish_rate(self, score: ScoreModel) -> Option<f64> {
        match (self, score) {
            (Family::Beta { theta, alpha, beta }, ScoreModel::Bernoulli) => {
                Some(theta * beta_fn(1.0 - alpha, beta + alpha))
            }
            (Family::Beta { theta, alpha, beta }, ScoreModel::NegativeBinomial { r }) => {
                Some(unit_exponent(theta, alpha, beta, r))
            }
            (Family::Tempered { scale, alpha, beta }, ScoreModel::Poisson { b }) => {
                Some(tempered_exponent(scale, alpha, beta, b))
            }
            _ => None,
        }
    }

    /// `Ψ(f_M) = ∫ (1 − (1−π_A)^M) ρ` in closed form.
    pub fn exponent(self, score: ScoreModel, order: u64) -> Option<f64> {
        let m = order as f64;
        match (self, score) {
            (Family::Beta { theta, alpha, beta }, ScoreModel::Bernoulli) => Some(unit_exponent(theta, alpha, beta, m)),
            (Family::Beta { theta, alpha, beta }, ScoreModel::NegativeBinomial { r }) => {
                Some(unit_exponent(theta, alpha, beta, r * m))
            }
            (Family::Tempered { scale, alpha, beta }, ScoreModel::Poisson { b }) => {
                Some(tempered_exponent(scale, alpha, beta, b * m))
            }
            _ => None,
        }
    }

    /// Rebuild the named density, preferring the kind of `like`.
    fn to_named(self, like: &LevyKind) -> LevyDensity {
        let built = match self {
            Family::Beta { theta, alpha, beta } => {
                if alpha == 0.0 && matches!(like, LevyKind::BetaProcess { .. }) {
                    LevyDensity::beta_process(theta, beta)
                } else {
                    LevyDensity::stable_beta(theta, alpha, beta)
                }
            }
            Family::Tempered { scale, alpha, beta } => {
                if alpha == 0.0 {
                    LevyDensity::gamma_process(scale, beta)
                } else if beta == 0.0 {
                    LevyDensity::stable_positive(alpha)
                } else {
                    LevyDensity::generalized_gamma(alpha, beta)
                }
            }
        };
        built.expect("tilting preserves parameter constraints")
    }
}

/// `ρ_M(s) = (1 − π_A(s))^M ρ(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TiltedLevy {
    base: LevyDensity,
    score: ScoreModel,
    order: u64,
}

impl TiltedLevy {
    pub fn new(base: LevyDensity, score: ScoreModel, order: u64) -> Result<Self> {
        if !score.accepts(base.support()) {
            return Err(IbpError::Config(format!(
                "{score} scores need weights in (0,1) but {base} lives on {:?}",
                base.support()
            )));
        }
        Ok(TiltedLevy { base, score, order })
    }

    pub fn base(&self) -> &LevyDensity {
        &self.base
    }

    pub fn score(&self) -> ScoreModel {
        self.score
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn support(&self) -> Support {
        self.base.support()
    }

    /// Tilt further by `extra` customers.
    pub fn tilt(&self, extra: u64) -> TiltedLevy {
        TiltedLevy { order: self.order + extra, ..self.clone() }
    }

    pub(crate) fn density_at(&self, p: Point) -> f64 {
        let rho = self.base.density_at(p);
        if self.order == 0 || rho == 0.0 {
            return rho;
        }
        rho * (self.order as f64 * self.score.ln_zero_mass(p)).exp()
    }

    pub fn eval_density(&self, s: f64) -> Result<f64> {
        if !self.support().contains(s) {
            return Err(IbpError::Domain(format!("s={s} outside the open support {:?}", self.support())));
        }
        Ok(self.density_at(Point::new(s)))
    }

    pub fn family(&self) -> Option<Family> {
        self.base.family()?.tilted(self.score, self.order)
    }

    /// The tilted density as a named kind with shifted parameters, when the
    /// pair is conjugate.
    pub fn closed_form(&self) -> Option<LevyDensity> {
        if self.order == 0 {
            return Some(self.base.clone()).filter(|b| b.is_named());
        }
        Some(self.family()?.to_named(&self.base.kind))
    }

    pub(crate) fn nonzero_density_at(&self, p: Point) -> f64 {
        let lq = self.score.ln_zero_mass(p);
        let rho = self.base.density_at(p);
        if rho == 0.0 {
            return 0.0;
        }
        -lq.exp_m1() * (self.order as f64 * lq).exp() * rho
    }

    /// `φ = ∫ π_A ρ_M = Ψ(f_{M+1}) − Ψ(f_M)`, possibly infinite.
    pub fn new_dish_rate(&self) -> Result<Rate> {
        match self.new_dish_rate_closed() {
            Some(v) => Ok(Rate::Finite(v)),
            None => self.new_dish_rate_quadrature(),
        }
    }

    pub fn new_dish_rate_closed(&self) -> Option<f64> {
        self.family()?.new_dish_rate(self.score)
    }

    pub fn new_dish_rate_quadrature(&self) -> Result<Rate> {
        let (score, m) = (self.score, self.order as f64);
        self.base.integrate_against(&|p| {
            let lq = score.ln_zero_mass(p);
            -lq.exp_m1() * (m * lq).exp()
        }, false)
    }
}

pub fn tilt(levy: &LevyDensity, score: ScoreModel, order: u64) -> Result<TiltedLevy> {
    TiltedLevy::new(levy.clone(), score, order)
}

pub fn new_dish_rate(tilted: &TiltedLevy) -> Result<Rate> {
    tilted.new_dish_rate()
}

pub fn transform_levy(levy: &LevyDensity) -> LevyDensity {
    levy.transform()
}

/// `Ψ(f_M) = ∫ (1 − (1−π_A(s))^M) ρ(s) ds`.
pub fn exponent_psi(levy: &LevyDensity, score: ScoreModel, order: u64) -> Result<f64> {
    TiltedLevy::new(levy.clone(), score, 0)?;
    if let Some(v) = exponent_psi_closed(levy, score, order) {
        return Ok(v);
    }
    exponent_psi_quadrature(levy, score, order)
}

pub fn exponent_psi_closed(levy: &LevyDensity, score: ScoreModel, order: u64) -> Option<f64> {
    levy.family()?.exponent(score, order)
}

pub fn exponent_psi_quadrature(levy: &LevyDensity, score: ScoreModel, order: u64) -> Result<f64> {
    if order == 0 {
        return Ok(0.0);
    }
    let m = order as f64;
    let r = levy.integrate_against(&|p| -(m * score.ln_zero_mass(p)).exp_m1(), false)?;
    r.finite().ok_or_else(|| {
        IbpError::Explosive(format!(
            "Ψ(f_{order}) diverges for {levy} with {score} scores: infinitely many dishes would be sampled"
        ))
    })
}

/// `κ_j = ∫ s^j e^{−ts} ρ(s) ds`.
pub fn cumulant_kappa(levy: &LevyDensity, j: u32, tilt_rate: f64) -> Result<f64> {
    if j == 0 {
        return Err(IbpError::Domain("cumulant order must be at least 1".into()));
    }
    if !(tilt_rate >= 0.0) {
        return Err(IbpError::Domain(format!("tilt rate must be nonnegative, got {tilt_rate}")));
    }
    match (levy.family(), tilt_rate == 0.0) {
        (Some(Family::Tempered { scale, alpha, beta }), _) => {
            let rate = beta + tilt_rate;
            if rate == 0.0 {
                return Err(IbpError::Explosive(format!("κ_{j} of {levy} diverges without exponential tilting")));
            }
            let jf = j as f64;
            Ok(scale * gamma(jf - alpha) * rate.powf(alpha - jf))
        }
        (Some(Family::Beta { theta, alpha, beta }), true) => Ok(theta * beta_fn(j as f64 - alpha, beta + alpha)),
        _ => cumulant_kappa_quadrature(levy, j, tilt_rate),
    }
}

pub fn cumulant_kappa_quadrature(levy: &LevyDensity, j: u32, tilt_rate: f64) -> Result<f64> {
    let r = levy.integrate_against(&|p| (j as f64 * p.s.ln() - tilt_rate * p.s).exp(), false)?;
    r.finite().ok_or_else(|| IbpError::Explosive(format!("κ_{j} of {levy} diverges")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bernoulli() -> ScoreModel {
        ScoreModel::Bernoulli
    }

    #[test]
    fn density_values() {
        let b = LevyDensity::beta_process(1.0, 1.0).unwrap();
        assert_relative_eq!(b.eval_density(0.5).unwrap(), 2.0);
        let g = LevyDensity::gamma_process(1.0, 1.0).unwrap();
        assert_relative_eq!(g.eval_density(1.0).unwrap(), (-1.0f64).exp(), max_relative = 1e-15);
        assert!(b.eval_density(1.0).is_err());
        assert!(g.eval_density(-0.1).is_err());
        let sb = LevyDensity::stable_beta(2.0, 0.0, 1.0).unwrap();
        let bp = LevyDensity::beta_process(2.0, 1.0).unwrap();
        for s in [0.01, 0.3, 0.77] {
            assert_eq!(sb.eval_density(s).unwrap(), bp.eval_density(s).unwrap());
        }
    }

    #[test]
    fn zero_tilt_is_identity() {
        let b = LevyDensity::beta_process(1.0, 1.0).unwrap();
        let t = tilt(&b, bernoulli(), 0).unwrap();
        assert_relative_eq!(t.eval_density(0.3).unwrap(), 10.0 / 3.0, max_relative = 1e-15);
        assert_eq!(t.closed_form().unwrap(), b);
    }

    #[test]
    fn conjugate_tilts() {
        let g = LevyDensity::gamma_process(2.0, 1.0).unwrap();
        let t = tilt(&g, ScoreModel::poisson(1.0).unwrap(), 3).unwrap();
        assert_eq!(t.closed_form().unwrap(), LevyDensity::gamma_process(2.0, 4.0).unwrap());
        let sb = LevyDensity::stable_beta(1.0, 0.5, 0.5).unwrap();
        let t = tilt(&sb, bernoulli(), 2).unwrap();
        assert_eq!(t.closed_form().unwrap(), LevyDensity::stable_beta(1.0, 0.5, 2.5).unwrap());
        let st = LevyDensity::stable_positive(0.5).unwrap();
        let t = tilt(&st, ScoreModel::poisson(2.0).unwrap(), 1).unwrap();
        assert_eq!(t.closed_form().unwrap(), LevyDensity::generalized_gamma(0.5, 2.0).unwrap());
    }

    #[test]
    fn incompatible_support_rejected() {
        let g = LevyDensity::gamma_process(1.0, 1.0).unwrap();
        assert!(matches!(tilt(&g, bernoulli(), 1), Err(IbpError::Config(_))));
        let b = LevyDensity::beta_process(1.0, 1.0).unwrap();
        assert!(tilt(&b, ScoreModel::poisson(1.0).unwrap(), 1).is_ok());
    }

    #[test]
    fn exponent_examples() {
        let b = LevyDensity::beta_process(1.0, 1.0).unwrap();
        let h10: f64 = (1..=10).map(|k| 1.0 / k as f64).sum();
        assert_relative_eq!(exponent_psi(&b, bernoulli(), 10).unwrap(), h10, max_relative = 1e-14);
        let g = LevyDensity::gamma_process(2.0, 1.0).unwrap();
        let p1 = ScoreModel::poisson(1.0).unwrap();
        assert_relative_eq!(exponent_psi(&g, p1, 1).unwrap(), 2.0 * 2f64.ln(), max_relative = 1e-14);
        let gg = LevyDensity::generalized_gamma(0.5, 1.0).unwrap();
        // (β + bM)^α − β^α at β=1, b=1, M=3.
        assert_relative_eq!(exponent_psi(&gg, p1, 3).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(exponent_psi_quadrature(&gg, p1, 3).unwrap(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn new_dish_rate_examples() {
        let b = LevyDensity::beta_process(1.0, 1.0).unwrap();
        assert_relative_eq!(b.new_dish_rate(bernoulli()).unwrap().finite().unwrap(), 1.0, max_relative = 1e-14);
        let g = LevyDensity::gamma_process(1.0, 1.0).unwrap();
        let p1 = ScoreModel::poisson(1.0).unwrap();
        assert_relative_eq!(g.new_dish_rate(p1).unwrap().finite().unwrap(), 2f64.ln(), max_relative = 1e-14);
        let b5 = LevyDensity::beta_process(1.0, 0.5).unwrap();
        let nb = ScoreModel::negative_binomial(1.0).unwrap();
        let phi = b5.new_dish_rate(nb).unwrap().finite().unwrap();
        // r ∫ p (1-p)^{r-1} ρ = θ/β with r=1: 1/0.5
        assert_relative_eq!(phi, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn cumulant_examples() {
        let g = LevyDensity::gamma_process(1.0, 1.0).unwrap();
        assert_relative_eq!(cumulant_kappa(&g, 1, 0.0).unwrap(), 1.0, max_relative = 1e-14);
        let st = LevyDensity::generalized_gamma(0.5, 0.0).unwrap();
        assert_relative_eq!(cumulant_kappa(&st, 1, 1.0).unwrap(), 0.5, max_relative = 1e-14);
        assert_relative_eq!(cumulant_kappa_quadrature(&st, 1, 1.0).unwrap(), 0.5, max_relative = 1e-9);
        let g2 = LevyDensity::gamma_process(2.0, 1.0).unwrap();
        assert_relative_eq!(cumulant_kappa(&g2, 2, 1.0).unwrap(), 0.5, max_relative = 1e-14);
        assert!(matches!(cumulant_kappa(&st, 1, 0.0), Err(IbpError::Explosive(_))));
    }

    #[test]
    fn transform_examples() {
        let g = LevyDensity::gamma_process(1.0, 1.0).unwrap();
        let t = transform_levy(&g);
        assert_eq!(t.support(), Support::UnitInterval);
        assert_relative_eq!(t.eval_density(1.0 - (-1.0f64).exp()).unwrap(), 1.0, max_relative = 1e-14);
        let b = LevyDensity::beta_process(1.0, 2.0).unwrap();
        let half = b.transform();
        assert_eq!(half.transform(), b);
        for k in 1..100 {
            let s = k as f64 / 100.0;
            let y = -(-s).ln_1p();
            let back = half.eval_density(y).unwrap() / (1.0 - s);
            assert_relative_eq!(back, b.eval_density(s).unwrap(), max_relative = 1e-10);
        }
        for lam in [1.0, 2.0, 3.0] {
            let lhs = b.laplace_exponent_quadrature(lam).unwrap();
            let rhs = half.laplace_exponent(lam).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
        }
    }

    #[test]
    fn custom_densities() {
        let c = LevyDensity::custom("beta11", Support::UnitInterval, |s| 1.0 / s).unwrap();
        assert_relative_eq!(c.new_dish_rate(bernoulli()).unwrap().finite().unwrap(), 1.0, max_relative = 1e-9);
        assert!(LevyDensity::custom("bad", Support::UnitInterval, |s| s.powi(-2)).is_err());
        assert!(serde_json::to_string(&c).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let d = LevyDensity::stable_beta(1.5, 0.25, 2.0).unwrap().transform();
        let js = serde_json::to_string(&d).unwrap();
        let back: LevyDensity = serde_json::from_str(&js).unwrap();
        assert_eq!(back, d);
        let bad = r#"{"kind":"beta_process","params":{"theta":1,"beta":-1}}"#;
        assert!(serde_json::from_str::<LevyDensity>(bad).is_err());
        let extra = r#"{"kind":"beta_process","params":{"theta":1,"beta":1,"alpha":0.5}}"#;
        assert!(serde_json::from_str::<LevyDensity>(extra).is_err());
    }
}
