//! Samplers for the latent-weight/score pair `(H, X)` of a new dish.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::buffet::table::InverseCdf;
use crate::draw;
use crate::error::{IbpError, Result};
use crate::levy::{Family, Rate, TiltedLevy};
use crate::quad::{self, Point, QuadOptions};
use crate::scores::ScoreModel;
use crate::special::{beta_fn, ln_beta, ln_gamma, ln_gamma_ratio, ln_nb_coeff};

/// Scores beyond this bound are reported as a resource error.
pub const SCORE_LIMIT: u64 = 1 << 62;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    SibuyaGamma,
    GenGammaPair,
    LogarithmicGamma,
    BernoulliBeta,
    NbBeta,
    GenericQuadrature,
}

/// Which conditional decomposition to sample through.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairRoute {
    /// The sampler's preferred route.
    Default,
    /// `H` from its marginal, then `X | H` from the truncated score law.
    HThenX,
    /// `X` from its marginal, then `H | X`.
    XThenH,
}

#[derive(Clone, Debug)]
enum Form {
    SibuyaGamma { alpha: f64, b: f64 },
    GenGamma { alpha: f64, zeta: f64, b: f64, psi: f64 },
    Logarithmic { zeta: f64, b: f64 },
    BernoulliBeta { alpha: f64, beta: f64 },
    NbBeta { alpha: f64, beta: f64, r: f64, mixture: Option<Vec<f64>> },
    Generic,
}

#[derive(Clone, Debug)]
pub struct PairSampler {
    tilted: TiltedLevy,
    rate: f64,
    form: Form,
    table: Option<Arc<InverseCdf>>,
}

/// `(ζ + b)^α − ζ^α`.
fn gg_psi(alpha: f64, zeta: f64, b: f64) -> f64 {
    if zeta == 0.0 {
        b.powf(alpha)
    } else {
        zeta.powf(alpha) * (alpha * (b / zeta).ln_1p()).exp_m1()
    }
}

fn too_large(what: &str) -> IbpError {
    IbpError::Resource(format!("{what} score exceeds {SCORE_LIMIT}; the draw is not representable"))
}

/// Sibuya(α) by inversion of `P(X > j) = Γ(j+1−α)/(Γ(1−α) j!)`; `None` when
/// the draw exceeds [`SCORE_LIMIT`].
fn sibuya_raw<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Option<u64> {
    let v = draw::uniform_pos(rng);
    let mut surv = 1.0 - alpha;
    let mut j = 1u64;
    while j < 1024 {
        if surv <= v {
            return Some(j);
        }
        surv *= (j as f64 + 1.0 - alpha) / (j as f64 + 1.0);
        j += 1;
    }
    let lnv = v.ln();
    let ln_surv = |j: u64| ln_gamma_ratio(j as f64 + 1.0, -alpha) - ln_gamma(1.0 - alpha);
    let mut lo = j; // surv(lo) > v
    if ln_surv(lo) <= lnv {
        return Some(lo);
    }
    let mut hi = lo * 2;
    while ln_surv(hi) > lnv {
        lo = hi;
        hi = hi.checked_mul(2)?;
        if hi > SCORE_LIMIT {
            return None;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ln_surv(mid) > lnv {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

pub fn sample_sibuya<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<u64> {
    sibuya_raw(alpha, rng).ok_or_else(|| too_large("Sibuya"))
}

pub fn sibuya_pmf(alpha: f64, j: u64) -> f64 {
    if j == 0 {
        return 0.0;
    }
    if j < 1024 {
        // P(j) = P(j−1) (j−1−α)/j, exact in floating point for small j.
        return (2..=j).fold(alpha, |p, k| p * (k as f64 - 1.0 - alpha) / k as f64);
    }
    let jf = j as f64;
    (alpha.ln() + ln_gamma_ratio(1.0 - alpha, jf - 1.0) - ln_gamma(jf + 1.0)).exp()
}

/// Logarithmic(p): `P(X = j) = −p^j / (j ln(1−p))`, by Kemp's algorithm.
pub fn sample_logarithmic<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<u64> {
    let r = (-p).ln_1p();
    loop {
        let v: f64 = rng.random();
        if v >= p {
            return Ok(1);
        }
        let u: f64 = rng.random();
        let q = -(r * u).exp_m1();
        if v <= q * q {
            let x = (1.0 + v.ln() / q.ln()).floor();
            if !(x >= 1.0) || v == 0.0 {
                continue;
            }
            if x > SCORE_LIMIT as f64 {
                return Err(too_large("Logarithmic"));
            }
            return Ok(x as u64);
        }
        return Ok(if v >= q { 1 } else { 2 });
    }
}

pub fn logarithmic_pmf(p: f64, j: u64) -> f64 {
    if j == 0 {
        return 0.0;
    }
    let jf = j as f64;
    -(jf * p.ln()).exp() / (jf * (-p).ln_1p())
}

impl PairSampler {
    /// Build the sampler for new dishes drawn from `π_A ρ_M`.
    pub fn new(tilted: &TiltedLevy) -> Result<Self> {
        let rate = match tilted.new_dish_rate()? {
            Rate::Finite(v) => v,
            Rate::Infinite => {
                return Err(IbpError::Explosive(format!(
                    "the new-dish rate ∫ π_A ρ_M is infinite for {} with {} scores after {} customers: \
                     customer {} would sample infinitely many dishes",
                    tilted.base(),
                    tilted.score(),
                    tilted.order(),
                    tilted.order() + 1
                )))
            }
        };
        let form = match (tilted.family(), tilted.score()) {
            (Some(Family::Tempered { alpha, beta, .. }), ScoreModel::Poisson { b }) => {
                if alpha == 0.0 {
                    Form::Logarithmic { zeta: beta, b }
                } else if beta == 0.0 {
                    Form::SibuyaGamma { alpha, b }
                } else {
                    Form::GenGamma { alpha, zeta: beta, b, psi: gg_psi(alpha, beta, b) }
                }
            }
            (Some(Family::Beta { alpha, beta, .. }), ScoreModel::Bernoulli) => Form::BernoulliBeta { alpha, beta },
            (Some(Family::Beta { alpha, beta, .. }), ScoreModel::NegativeBinomial { r }) => {
                let mixture = (r.fract() == 0.0 && r <= 64.0).then(|| {
                    (0..r as u64).map(|k| beta_fn(1.0 - alpha, beta + alpha + k as f64)).collect::<Vec<_>>()
                });
                Form::NbBeta { alpha, beta, r, mixture }
            }
            _ => Form::Generic,
        };
        let needs_table = match &form {
            Form::Generic => true,
            Form::NbBeta { mixture, .. } => mixture.is_none(),
            _ => false,
        };
        let table = if needs_table && rate > 0.0 {
            let t = tilted.clone();
            Some(Arc::new(InverseCdf::build(t.support(), move |p| t.nonzero_density_at(p))?))
        } else {
            None
        };
        Ok(PairSampler { tilted: tilted.clone(), rate, form, table })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn tilted(&self) -> &TiltedLevy {
        &self.tilted
    }

    pub fn closed_form(&self) -> ClosedForm {
        match self.form {
            Form::SibuyaGamma { .. } => ClosedForm::SibuyaGamma,
            Form::GenGamma { .. } => ClosedForm::GenGammaPair,
            Form::Logarithmic { .. } => ClosedForm::LogarithmicGamma,
            Form::BernoulliBeta { .. } => ClosedForm::BernoulliBeta,
            Form::NbBeta { .. } => ClosedForm::NbBeta,
            Form::Generic => ClosedForm::GenericQuadrature,
        }
    }

    /// Whether `route` is available for this sampler.
    pub fn supports(&self, route: PairRoute) -> bool {
        match route {
            PairRoute::Default => true,
            PairRoute::HThenX => !matches!(self.form, Form::SibuyaGamma { .. } | Form::GenGamma { .. } | Form::Logarithmic { .. })
                || self.tempered_h_mixture().is_some(),
            PairRoute::XThenH => !matches!(self.form, Form::Generic),
        }
    }

    fn tempered_h_mixture(&self) -> Option<(f64, f64, f64)> {
        match self.form {
            Form::SibuyaGamma { alpha, b } => Some((alpha, 0.0, b)),
            Form::GenGamma { alpha, zeta, b, .. } => Some((alpha, zeta, b)),
            Form::Logarithmic { zeta, b } => Some((0.0, zeta, b)),
            _ => None,
        }
    }

    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, u64)> {
        self.sample_point(rng).map(|(p, x)| (p.s, x))
    }

    pub fn sample_pair_via<R: Rng + ?Sized>(&self, route: PairRoute, rng: &mut R) -> Result<(f64, u64)> {
        self.sample_point_via(route, rng).map(|(p, x)| (p.s, x))
    }

    pub(crate) fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Point, u64)> {
        self.sample_point_via(PairRoute::Default, rng)
    }

    pub(crate) fn sample_point_via<R: Rng + ?Sized>(&self, route: PairRoute, rng: &mut R) -> Result<(Point, u64)> {
        if !self.supports(route) {
            return Err(IbpError::Config(format!("{route:?} sampling is unavailable for {:?}", self.closed_form())));
        }
        let score = self.tilted.score();
        match (&self.form, route) {
            (Form::SibuyaGamma { alpha, b }, PairRoute::Default | PairRoute::XThenH) => {
                let x = sample_sibuya(*alpha, rng)?;
                Ok((Point::new(draw::gamma(x as f64 - alpha, *b, rng)), x))
            }
            (Form::GenGamma { alpha, zeta, b, psi }, PairRoute::Default | PairRoute::XThenH) => {
                let x = self.gen_gamma_x(*alpha, *zeta, *b, *psi, rng)?;
                Ok((Point::new(draw::gamma(x as f64 - alpha, b + zeta, rng)), x))
            }
            (Form::Logarithmic { zeta, b }, PairRoute::Default | PairRoute::XThenH) => {
                let x = sample_logarithmic(b / (b + zeta), rng)?;
                Ok((Point::new(draw::gamma(x as f64, b + zeta, rng)), x))
            }
            (Form::SibuyaGamma { .. } | Form::GenGamma { .. } | Form::Logarithmic { .. }, _) => {
                let (alpha, zeta, b) = self.tempered_h_mixture().expect("tempered form");
                // π ρ_M = ∫₀^b c s^{−α} e^{−(ζ+t)s} dt: a Gamma(1−α, ζ+t) mixture
                // over t with density ∝ (ζ+t)^{α−1}.
                let u = draw::uniform_pos(rng);
                let t = if alpha == 0.0 {
                    zeta * ((u * (b / zeta).ln_1p()).exp_m1())
                } else {
                    (zeta.powf(alpha) + u * gg_psi(alpha, zeta, b)).powf(1.0 / alpha) - zeta
                };
                let h = loop {
                    let h = draw::gamma(1.0 - alpha, zeta + t, rng);
                    if h > 0.0 {
                        break h;
                    }
                };
                let p = Point::new(h);
                Ok((p, score.sample_nonzero_at(p, rng)?))
            }
            (Form::BernoulliBeta { alpha, beta }, _) => Ok((draw::beta_point(1.0 - alpha, beta + alpha, rng), 1)),
            (Form::NbBeta { alpha, beta, r, .. }, PairRoute::XThenH) => {
                let c = r + beta + alpha;
                let x = self.nb_direct_x(*alpha, *beta, *r, rng)?;
                Ok((draw::beta_point(x as f64 - alpha, c, rng), x))
            }
            (Form::NbBeta { alpha, beta, mixture: Some(w), .. }, _) => {
                let k = draw::categorical(w, rng);
                let p = draw::beta_point(1.0 - alpha, beta + alpha + k as f64, rng);
                Ok((p, score.sample_nonzero_at(p, rng)?))
            }
            (Form::NbBeta { .. } | Form::Generic, _) => {
                let p = self.table.as_ref().expect("table built for tabulated forms").sample(rng);
                Ok((p, score.sample_nonzero_at(p, rng)?))
            }
        }
    }

    fn gen_gamma_x<R: Rng + ?Sized>(&self, alpha: f64, zeta: f64, b: f64, psi: f64, rng: &mut R) -> Result<u64> {
        let q = b / (b + zeta);
        if q >= 0.5 {
            // P(j) ∝ Sibuya(j) q^j: accept a Sibuya proposal with probability q^{j−1}.
            loop {
                match sibuya_raw(alpha, rng) {
                    Some(j) => {
                        if rng.random::<f64>() < ((j - 1) as f64 * q.ln()).exp() {
                            return Ok(j);
                        }
                    }
                    None => continue,
                }
            }
        }
        let mut pj = alpha * b * (b + zeta).powf(alpha - 1.0) / psi;
        let u: f64 = rng.random();
        let mut cdf = pj;
        let mut j = 1u64;
        while cdf <= u {
            pj *= q * (j as f64 - alpha) / (j as f64 + 1.0);
            cdf += pj;
            j += 1;
            if pj == 0.0 && cdf <= u {
                // Round-off left a sliver of mass uncovered; the tail beyond is negligible.
                return Ok(j);
            }
        }
        Ok(j)
    }

    fn nb_direct_x<R: Rng + ?Sized>(&self, alpha: f64, beta: f64, r: f64, rng: &mut R) -> Result<u64> {
        let c = r + beta + alpha;
        let mut pj = self.nb_x_pmf(alpha, beta, r, 1);
        let u: f64 = rng.random();
        let mut cdf = pj;
        let mut j = 1u64;
        while cdf <= u {
            let jf = j as f64;
            pj *= (jf + r) * (jf - alpha) / ((jf + 1.0) * (jf - alpha + c));
            cdf += pj;
            j += 1;
            if j > crate::scores::INVERSION_CAP {
                return Err(IbpError::Resource(format!(
                    "negative-binomial score inversion exceeded {} steps",
                    crate::scores::INVERSION_CAP
                )));
            }
        }
        Ok(j)
    }

    fn nb_x_pmf(&self, alpha: f64, beta: f64, r: f64, j: u64) -> f64 {
        let theta = match self.tilted.family() {
            Some(Family::Beta { theta, .. }) => theta,
            _ => unreachable!("NB pair sampler over a beta family"),
        };
        let c = r + beta + alpha;
        (ln_nb_coeff(j, r) + theta.ln() + ln_beta(j as f64 - alpha, c)).exp() / self.rate
    }

    /// Closed-form marginal pmf of `X`, where one exists.
    pub fn x_pmf(&self, j: u64) -> Option<f64> {
        if j == 0 {
            return Some(0.0);
        }
        match self.form {
            Form::SibuyaGamma { alpha, .. } => Some(sibuya_pmf(alpha, j)),
            Form::GenGamma { alpha, zeta, b, psi } => {
                let q = b / (b + zeta);
                Some(sibuya_pmf(alpha, j) * (j as f64 * q.ln() + alpha * (b + zeta).ln()).exp() / psi)
            }
            Form::Logarithmic { zeta, b } => Some(logarithmic_pmf(b / (b + zeta), j)),
            Form::BernoulliBeta { .. } => Some(if j == 1 { 1.0 } else { 0.0 }),
            Form::NbBeta { alpha, beta, r, .. } => Some(self.nb_x_pmf(alpha, beta, r, j)),
            Form::Generic => None,
        }
    }

    /// `P(X = j) = ∫ G_A(j|s) ρ_M(s) ds / φ` by quadrature.
    pub fn x_pmf_quadrature(&self, j: u64) -> Result<f64> {
        let t = &self.tilted;
        let score = t.score();
        let e = quad::integrate_support(
            t.support(),
            |p| {
                let rho = t.density_at(p);
                if rho == 0.0 {
                    0.0
                } else {
                    score.ln_pmf_at(j, p).exp() * rho
                }
            },
            QuadOptions::rel(1e-11),
        )?;
        Ok(e.value / self.rate)
    }

    /// Normalized marginal density of `H`: `π_A(s) ρ_M(s) / φ`.
    pub fn h_density(&self, s: f64) -> Result<f64> {
        self.tilted.eval_density(s)?;
        Ok(self.tilted.nonzero_density_at(Point::new(s)) / self.rate)
    }

    /// Marginal CDF of `H` by quadrature.
    pub fn h_cdf(&self, s: f64) -> Result<f64> {
        let t = &self.tilted;
        let p = Point::new(s);
        let e = quad::integrate_support_between(
            t.support(),
            f64::NEG_INFINITY,
            t.support().to_real(p),
            |p| t.nonzero_density_at(p),
            QuadOptions::rel(1e-11),
        )?;
        Ok(e.value / self.rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{tilt, LevyDensity};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn sibuya_and_logarithmic_values() {
        assert_relative_eq!(sibuya_pmf(0.5, 1), 0.5, max_relative = 1e-14);
        assert_relative_eq!(sibuya_pmf(0.5, 2), 0.125, max_relative = 1e-14);
        assert_relative_eq!(logarithmic_pmf(0.5, 1), 1.0 / (2.0 * 2f64.ln()), max_relative = 1e-14);
        let mean: f64 = (1..2000).map(|j| j as f64 * logarithmic_pmf(0.5, j)).sum();
        assert_relative_eq!(mean, 1.0 / 2f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn closed_form_tags() {
        let p1 = ScoreModel::poisson(1.0).unwrap();
        let cases = [
            (LevyDensity::stable_positive(0.5).unwrap(), p1, 0, ClosedForm::SibuyaGamma),
            (LevyDensity::stable_positive(0.5).unwrap(), p1, 1, ClosedForm::GenGammaPair),
            (LevyDensity::gamma_process(1.0, 1.0).unwrap(), p1, 0, ClosedForm::LogarithmicGamma),
            (LevyDensity::beta_process(1.0, 1.0).unwrap(), ScoreModel::Bernoulli, 3, ClosedForm::BernoulliBeta),
            (LevyDensity::beta_process(1.0, 2.0).unwrap(), ScoreModel::negative_binomial(2.0).unwrap(), 1, ClosedForm::NbBeta),
            (LevyDensity::beta_process(1.0, 1.0).unwrap(), p1, 1, ClosedForm::GenericQuadrature),
        ];
        for (prior, score, m, tag) in cases {
            let s = PairSampler::new(&tilt(&prior, score, m).unwrap()).unwrap();
            assert_eq!(s.closed_form(), tag);
        }
    }

    #[test]
    fn closed_pmfs_match_quadrature() {
        let p1 = ScoreModel::poisson(1.0).unwrap();
        let nb = ScoreModel::negative_binomial(2.0).unwrap();
        let cases = [
            (LevyDensity::stable_positive(0.5).unwrap(), p1, 2),
            (LevyDensity::generalized_gamma(0.3, 2.0).unwrap(), p1, 0),
            (LevyDensity::gamma_process(2.0, 1.0).unwrap(), p1, 1),
            (LevyDensity::stable_beta(1.0, 0.25, 1.5).unwrap(), nb, 2),
        ];
        for (prior, score, m) in cases {
            let s = PairSampler::new(&tilt(&prior, score, m).unwrap()).unwrap();
            for j in 1..8 {
                assert_relative_eq!(s.x_pmf(j).unwrap(), s.x_pmf_quadrature(j).unwrap(), max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn routes_agree_on_mean_score() {
        let p1 = ScoreModel::poisson(1.0).unwrap();
        let s = PairSampler::new(&tilt(&LevyDensity::generalized_gamma(0.5, 1.0).unwrap(), p1, 1).unwrap()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 40_000;
        let m1: f64 = (0..n).map(|_| s.sample_pair_via(PairRoute::XThenH, &mut rng).unwrap().1 as f64).sum::<f64>() / n as f64;
        let m2: f64 = (0..n).map(|_| s.sample_pair_via(PairRoute::HThenX, &mut rng).unwrap().1 as f64).sum::<f64>() / n as f64;
        let exact: f64 = (1..4000).map(|j| j as f64 * s.x_pmf(j).unwrap()).sum();
        assert!((m1 - exact).abs() < 0.05 * exact, "{m1} vs {exact}");
        assert!((m2 - exact).abs() < 0.05 * exact, "{m2} vs {exact}");
    }
}
