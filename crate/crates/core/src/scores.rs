//! Univariate integer score models `G_A(·|s)`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::draw;
use crate::error::{IbpError, Result};
use crate::quad::{Point, Support};
use crate::special::{ln_factorial, ln_nb_coeff};

/// Iteration cap of the sequential inversion in [`ScoreModel::sample_nonzero_score`].
pub const INVERSION_CAP: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreModel {
    Bernoulli,
    Poisson { b: f64 },
    NegativeBinomial { r: f64 },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawScore {
    Bernoulli,
    Poisson { b: f64 },
    #[serde(alias = "nb", alias = "neg_binomial")]
    NegativeBinomial { r: f64 },
}

impl<'de> Deserialize<'de> for ScoreModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawScore::deserialize(d)?;
        let m = match raw {
            RawScore::Bernoulli => Ok(ScoreModel::Bernoulli),
            RawScore::Poisson { b } => ScoreModel::poisson(b),
            RawScore::NegativeBinomial { r } => ScoreModel::negative_binomial(r),
        };
        m.map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for ScoreModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreModel::Bernoulli => write!(f, "bernoulli"),
            ScoreModel::Poisson { b } => write!(f, "poisson:b={b}"),
            ScoreModel::NegativeBinomial { r } => write!(f, "nb:r={r}"),
        }
    }
}

impl ScoreModel {
    pub fn poisson(b: f64) -> Result<Self> {
        if b > 0.0 && b.is_finite() {
            Ok(ScoreModel::Poisson { b })
        } else {
            Err(IbpError::Config(format!("Poisson score scale b must be positive and finite, got {b}")))
        }
    }

    pub fn negative_binomial(r: f64) -> Result<Self> {
        if r > 0.0 && r.is_finite() {
            Ok(ScoreModel::NegativeBinomial { r })
        } else {
            Err(IbpError::Config(format!("negative-binomial shape r must be positive and finite, got {r}")))
        }
    }

    /// Whether the model's weight parameter may range over `support`.
    pub fn accepts(&self, support: Support) -> bool {
        match self {
            ScoreModel::Poisson { .. } => true,
            _ => support == Support::UnitInterval,
        }
    }

    pub fn natural_support(&self) -> Support {
        match self {
            ScoreModel::Poisson { .. } => Support::PositiveHalfLine,
            _ => Support::UnitInterval,
        }
    }

    pub(crate) fn check(&self, s: f64) -> Result<Point> {
        if self.natural_support().contains(s) {
            Ok(Point::new(s))
        } else {
            Err(IbpError::Domain(format!("weight {s} outside the open support of the {self} score model")))
        }
    }

    /// `ln P(A = 0 | s)`.
    pub fn ln_zero_mass(&self, p: Point) -> f64 {
        match *self {
            ScoreModel::Bernoulli => p.ln_sc(),
            ScoreModel::Poisson { b } => -b * p.s,
            ScoreModel::NegativeBinomial { r } => r * p.ln_sc(),
        }
    }

    pub(crate) fn pi_at(&self, p: Point) -> f64 {
        match self {
            ScoreModel::Bernoulli => p.s,
            _ => -self.ln_zero_mass(p).exp_m1(),
        }
    }

    /// `π_A(s) = P(A ≠ 0 | s)`.
    pub fn pi_nonzero(&self, s: f64) -> Result<f64> {
        Ok(self.pi_at(self.check(s)?))
    }

    pub fn ln_pmf_at(&self, a: u64, p: Point) -> f64 {
        if a == 0 {
            return self.ln_zero_mass(p);
        }
        let af = a as f64;
        match *self {
            ScoreModel::Bernoulli => {
                if a == 1 {
                    p.s.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            ScoreModel::Poisson { b } => af * (b * p.s).ln() - b * p.s - ln_factorial(a),
            ScoreModel::NegativeBinomial { r } => ln_nb_coeff(a, r) + af * p.s.ln() + r * p.ln_sc(),
        }
    }

    /// `G_A(a | s)`.
    pub fn pmf(&self, a: u64, s: f64) -> Result<f64> {
        Ok(self.ln_pmf_at(a, self.check(s)?).exp())
    }

    pub(crate) fn log_h_at(&self, a: u64, p: Point) -> f64 {
        if a == 0 {
            return 0.0;
        }
        let af = a as f64;
        match *self {
            ScoreModel::Bernoulli => {
                if a == 1 {
                    p.s.ln() - p.ln_sc()
                } else {
                    f64::NEG_INFINITY
                }
            }
            ScoreModel::Poisson { b } => af * (b * p.s).ln() - ln_factorial(a),
            ScoreModel::NegativeBinomial { r } => ln_nb_coeff(a, r) + af * p.s.ln(),
        }
    }

    /// `ln h = I{a≠0}·ln[G_A(a|s)/(1 − π_A(s))]`.
    pub fn log_h_factor(&self, a: u64, s: f64) -> Result<f64> {
        Ok(self.log_h_at(a, self.check(s)?))
    }

    /// The part of `Σ_i ln h(a_i|s)` that does not depend on `s`; the rest is
    /// `c·ln s` (Poisson, NB) or `c·ln(s/(1−s))` (Bernoulli).
    pub fn ln_h_constant(&self, scores: &[u64]) -> f64 {
        match *self {
            ScoreModel::Bernoulli => 0.0,
            ScoreModel::Poisson { b } => {
                let c: u64 = scores.iter().sum();
                c as f64 * b.ln() - scores.iter().map(|&a| ln_factorial(a)).sum::<f64>()
            }
            ScoreModel::NegativeBinomial { r } => scores.iter().map(|&a| ln_nb_coeff(a, r)).sum(),
        }
    }

    pub fn mean(&self, s: f64) -> Result<f64> {
        let p = self.check(s)?;
        Ok(match *self {
            ScoreModel::Bernoulli => p.s,
            ScoreModel::Poisson { b } => b * p.s,
            ScoreModel::NegativeBinomial { r } => r * p.s / p.sc,
        })
    }

    /// Largest admissible score (`1` for Bernoulli).
    pub fn max_score(&self) -> u64 {
        match self {
            ScoreModel::Bernoulli => 1,
            _ => u64::MAX,
        }
    }

    pub(crate) fn sample_at<R: Rng + ?Sized>(&self, p: Point, rng: &mut R) -> u64 {
        match *self {
            ScoreModel::Bernoulli => u64::from(rng.random::<f64>() < p.s),
            ScoreModel::Poisson { b } => draw::poisson(b * p.s, rng),
            ScoreModel::NegativeBinomial { r } => {
                let lam = draw::gamma(r, p.sc / p.s, rng);
                draw::poisson(lam, rng)
            }
        }
    }

    /// Draw from `G_A(·|s)`.
    pub fn sample_score<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> Result<u64> {
        Ok(self.sample_at(self.check(s)?, rng))
    }

    /// Draw from `G_A(·|s)` conditioned on a nonzero outcome: sequential
    /// inversion when `π_A(s) < 1/2`, rejection otherwise (expected fewer
    /// than two proposals).
    pub(crate) fn sample_nonzero_at<R: Rng + ?Sized>(&self, p: Point, rng: &mut R) -> Result<u64> {
        let pi = self.pi_at(p);
        if let ScoreModel::Bernoulli = self {
            return Ok(1);
        }
        if pi >= 0.5 {
            loop {
                let a = self.sample_at(p, rng);
                if a > 0 {
                    return Ok(a);
                }
            }
        }
        // P(1 | A ≠ 0) and the ratio P(j+1)/P(j).
        let (mut pj, step): (f64, Box<dyn Fn(f64) -> f64>) = match *self {
            ScoreModel::Poisson { b } => {
                let lam = b * p.s;
                ((lam.ln() - lam - pi.ln()).exp(), Box::new(move |j| lam / (j + 1.0)))
            }
            ScoreModel::NegativeBinomial { r } => {
                let s = p.s;
                ((r.ln() + s.ln() + r * p.ln_sc() - pi.ln()).exp(), Box::new(move |j| s * (j + r) / (j + 1.0)))
            }
            ScoreModel::Bernoulli => unreachable!(),
        };
        let u = rng.random::<f64>();
        let mut cdf = pj;
        let mut j = 1u64;
        while cdf <= u {
            pj *= step(j as f64);
            cdf += pj;
            j += 1;
            if j > INVERSION_CAP || pj == 0.0 && cdf <= u {
                return Err(IbpError::Resource(format!(
                    "truncated {self} inversion at s={} exceeded {INVERSION_CAP} steps",
                    p.s
                )));
            }
        }
        Ok(j)
    }

    pub fn sample_nonzero_score<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> Result<u64> {
        self.sample_nonzero_at(self.check(s)?, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pi_values() {
        assert_relative_eq!(ScoreModel::Bernoulli.pi_nonzero(0.3).unwrap(), 0.3);
        let p = ScoreModel::poisson(1.0).unwrap();
        assert_relative_eq!(p.pi_nonzero(2f64.ln()).unwrap(), 0.5, max_relative = 1e-15);
        let nb = ScoreModel::negative_binomial(2.0).unwrap();
        assert_relative_eq!(nb.pi_nonzero(0.5).unwrap(), 0.75, max_relative = 1e-15);
        assert!(ScoreModel::Bernoulli.pi_nonzero(1.0).is_err());
        assert!(ScoreModel::Bernoulli.pi_nonzero(0.0).is_err());
        assert!(p.pi_nonzero(0.0).is_err());
    }

    #[test]
    fn h_factor_values() {
        assert_eq!(ScoreModel::Bernoulli.log_h_factor(0, 0.4).unwrap(), 0.0);
        assert_relative_eq!(ScoreModel::Bernoulli.log_h_factor(1, 0.25).unwrap(), (1.0f64 / 3.0).ln(), max_relative = 1e-14);
        let p = ScoreModel::poisson(2.0).unwrap();
        assert_relative_eq!(p.log_h_factor(3, 0.5).unwrap(), (1.0f64 / 6.0).ln(), max_relative = 1e-14);
    }

    #[test]
    fn pmf_sums_to_one_and_complements_pi() {
        let models = [ScoreModel::Bernoulli, ScoreModel::poisson(1.7).unwrap(), ScoreModel::negative_binomial(2.5).unwrap()];
        for m in models {
            for s in [0.01, 0.2, 0.5, 0.9] {
                let mut total = 0.0;
                for a in 0..2000 {
                    total += m.pmf(a, s).unwrap();
                }
                assert_relative_eq!(total, 1.0, epsilon = 1e-12);
                assert_relative_eq!(m.pmf(0, s).unwrap() + m.pi_nonzero(s).unwrap(), 1.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn nonzero_poisson_and_geometric() {
        let p = ScoreModel::poisson(1.0).unwrap();
        let s = 2f64.ln();
        let p1 = p.pmf(1, s).unwrap() / p.pi_nonzero(s).unwrap();
        assert_relative_eq!(p1, 2f64.ln(), max_relative = 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nb = ScoreModel::negative_binomial(1.0).unwrap();
        let n = 50_000;
        let ones = (0..n).filter(|_| nb.sample_nonzero_score(0.5, &mut rng).unwrap() == 1).count();
        let f = ones as f64 / n as f64;
        assert!((f - 0.5).abs() < 4.0 * (0.25f64 / n as f64).sqrt());
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let m = ScoreModel::negative_binomial(2.0).unwrap();
        let js = serde_json::to_string(&m).unwrap();
        assert_eq!(js, r#"{"kind":"negative_binomial","r":2.0}"#);
        assert_eq!(serde_json::from_str::<ScoreModel>(&js).unwrap(), m);
        assert!(serde_json::from_str::<ScoreModel>(r#"{"kind":"poisson","b":-1}"#).is_err());
    }
}
