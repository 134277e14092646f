//! Stable-Beta-Dirichlet prior with multinomial (single-condiment) scores.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::draw;
use crate::error::{ensure, IbpError, Result};
use crate::levy::{LevyDensity, Rate};
use crate::multivar::{MultiDishRecord, MultiProcess};
use crate::quad::{self, Point, QuadOptions, Support};
use crate::special::{ln_beta, ln_gamma, ln_gamma_ratio};

/// `ρ_q(p) = θ Γ(Σγ)/ΠΓ(γ_j) · p_·^{−α−Σγ} (1−p_·)^{β+α−1} Π p_j^{γ_j−1}` on
/// `{p_j > 0, p_· = Σ p_j < 1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSbd")]
pub struct SbdPrior {
    theta: f64,
    alpha: f64,
    beta: f64,
    gamma: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSbd {
    theta: f64,
    alpha: f64,
    beta: f64,
    gamma: Vec<f64>,
}

impl TryFrom<RawSbd> for SbdPrior {
    type Error = IbpError;
    fn try_from(r: RawSbd) -> Result<Self> {
        SbdPrior::new(r.theta, r.alpha, r.beta, r.gamma)
    }
}

impl SbdPrior {
    pub fn new(theta: f64, alpha: f64, beta: f64, gamma: Vec<f64>) -> Result<Self> {
        LevyDensity::stable_beta(theta, alpha, beta)?;
        ensure(!gamma.is_empty(), || "gamma needs at least one condiment".into())?;
        ensure(gamma.iter().all(|g| *g > 0.0 && g.is_finite()), || format!("gamma entries must be positive, got {gamma:?}"))?;
        Ok(SbdPrior { theta, alpha, beta, gamma })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn q(&self) -> usize {
        self.gamma.len()
    }

    fn gamma_sum(&self) -> f64 {
        self.gamma.iter().sum()
    }

    /// Law of the total `μ_· = Σ_j μ_j`.
    pub fn aggregate(&self) -> LevyDensity {
        LevyDensity::stable_beta(self.theta, self.alpha, self.beta).expect("validated at construction")
    }

    /// Prior of the dishes not yet seen after `order` customers.
    pub fn tilted(&self, order: u64) -> SbdPrior {
        SbdPrior { beta: self.beta + order as f64, ..self.clone() }
    }

    /// `ρ_q(p)`.
    pub fn density(&self, p: &[f64]) -> Result<f64> {
        if p.len() != self.q() {
            return Err(IbpError::Domain(format!("expected {} coordinates, got {}", self.q(), p.len())));
        }
        let s: f64 = p.iter().sum();
        if p.iter().any(|&x| x <= 0.0) || s >= 1.0 {
            return Err(IbpError::Domain(format!("{p:?} outside the open simplex")));
        }
        let gs = self.gamma_sum();
        let ln_norm = self.theta.ln() + ln_gamma(gs) - self.gamma.iter().map(|&g| ln_gamma(g)).sum::<f64>();
        let ln_v = ln_norm + (-self.alpha - gs) * s.ln() + (self.beta + self.alpha - 1.0) * (-s).ln_1p()
            + p.iter().zip(&self.gamma).map(|(x, g)| (g - 1.0) * x.ln()).sum::<f64>();
        Ok(ln_v.exp())
    }

    /// `ρ_q(s·w)` for a direction `w` on the simplex, with `s` carried as a
    /// point so that `1 − s` keeps full precision.
    fn density_on_slice(&self, sp: Point, w: &[f64]) -> f64 {
        if w.iter().any(|&x| x <= 0.0) || sp.s <= 0.0 || sp.sc <= 0.0 {
            return 0.0;
        }
        let gs = self.gamma_sum();
        let ln_s = sp.s.ln();
        let ln_norm = self.theta.ln() + ln_gamma(gs) - self.gamma.iter().map(|&g| ln_gamma(g)).sum::<f64>();
        (ln_norm + (-self.alpha - gs) * ln_s + (self.beta + self.alpha - 1.0) * sp.ln_sc()
            + w.iter().zip(&self.gamma).map(|(x, g)| (g - 1.0) * (ln_s + x.ln())).sum::<f64>())
        .exp()
    }

    /// `∫ ρ_q` over the slice `{p_· = s}` by nested quadrature over the
    /// direction simplex, for `q ≤ 3`; it should equal the aggregate density.
    pub fn aggregate_density_by_quadrature(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < 1.0) {
            return Err(IbpError::Domain(format!("s={s} outside (0, 1)")));
        }
        self.slice_integral(Point::new(s))
    }

    fn slice_integral(&self, sp: Point) -> Result<f64> {
        let opts = QuadOptions::rel(1e-12);
        // The slice measure in coordinates (p_1, …, p_{q−1}) is s^{q−1} dw.
        let v = match self.q() {
            1 => return Ok(self.density_on_slice(sp, &[1.0])),
            2 => quad::integrate_support(Support::UnitInterval, |w: Point| self.density_on_slice(sp, &[w.s, w.sc]), opts)?.value * sp.s,
            3 => {
                let outer = |w1: Point| -> f64 {
                    let rest = w1.sc;
                    quad::integrate_support(
                        Support::UnitInterval,
                        |v: Point| self.density_on_slice(sp, &[w1.s, rest * v.s, rest * v.sc]) * rest,
                        opts,
                    )
                    .map(|e| e.value)
                    .unwrap_or(f64::NAN)
                };
                quad::integrate_support(Support::UnitInterval, outer, opts)?.value * sp.s * sp.s
            }
            q => return Err(IbpError::Config(format!("slice quadrature implemented for q ≤ 3, got {q}"))),
        };
        Ok(v)
    }

    /// `φ = θ Γ(1−α) Γ(M+β+α) / Γ(M+β+1)`.
    pub fn new_dish_rate(&self, order: u64) -> f64 {
        let x = order as f64 + self.beta;
        self.theta * (ln_gamma(1.0 - self.alpha) + ln_gamma_ratio(x + 1.0, self.alpha - 1.0)).exp()
    }

    /// `∫ p_· (1 − p_·)^M ρ_q(p) dp` by nested quadrature over `(p_·, direction)`.
    pub fn new_dish_rate_quadrature(&self, order: u64) -> Result<f64> {
        let m = order as f64;
        let opts = QuadOptions::rel(1e-11);
        let e = quad::integrate_support(
            Support::UnitInterval,
            |sp: Point| {
                let slice = self.slice_integral(sp).unwrap_or(f64::NAN);
                sp.s * (m * sp.ln_sc()).exp() * slice
            },
            opts,
        )?;
        Ok(e.value)
    }

    /// `r_j = (c_j + γ_j)/(c + Σγ) · (c − α)/(M + β)`: probability that
    /// customer `M+1` takes the dish with condiment `j`.
    pub fn take_probabilities(&self, counts: &[u64], order: u64) -> Result<Vec<f64>> {
        let c = self.check_counts(counts, order)?;
        let gs = self.gamma_sum();
        let take = (c - self.alpha) / (order as f64 + self.beta);
        Ok(counts.iter().zip(&self.gamma).map(|(&cj, g)| (cj as f64 + g) / (c + gs) * take).collect())
    }

    fn check_counts(&self, counts: &[u64], order: u64) -> Result<f64> {
        if counts.len() != self.q() {
            return Err(IbpError::Domain(format!("expected {} condiment counts, got {}", self.q(), counts.len())));
        }
        let c: u64 = counts.iter().sum();
        if c == 0 || c > order {
            return Err(IbpError::Domain(format!("total count {c} must lie in 1..={order}")));
        }
        Ok(c as f64)
    }

    /// Posterior law of an observed dish's jump vector.
    pub fn jump_sampler(&self, counts: &[u64], order: u64) -> Result<SbdJumpSampler> {
        let c = self.check_counts(counts, order)?;
        Ok(SbdJumpSampler {
            sum_a: c - self.alpha,
            sum_b: order as f64 + self.beta + self.alpha - c,
            direction: counts.iter().zip(&self.gamma).map(|(&cj, g)| cj as f64 + g).collect(),
        })
    }

    pub fn pair_sampler(&self, order: u64) -> SbdPairSampler {
        SbdPairSampler {
            rate: self.new_dish_rate(order),
            sum_a: 1.0 - self.alpha,
            sum_b: order as f64 + self.beta + self.alpha,
            gamma: self.gamma.clone(),
        }
    }
}

pub fn mv_jump_sampler(prior: &SbdPrior, counts: &[u64], order: u64) -> Result<SbdJumpSampler> {
    prior.jump_sampler(counts, order)
}

/// `J = S · D` with `S ~ Beta(c−α, M+β+α−c)` independent of `D ~ Dirichlet(c_j+γ_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SbdJumpSampler {
    pub sum_a: f64,
    pub sum_b: f64,
    pub direction: Vec<f64>,
}

impl SbdJumpSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let s = draw::beta_point(self.sum_a, self.sum_b, rng).s;
        let d = if self.direction.len() == 1 { vec![1.0] } else { draw::dirichlet(&self.direction, rng) };
        d.into_iter().map(|x| s * x).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let es = self.sum_a / (self.sum_a + self.sum_b);
        let t: f64 = self.direction.iter().sum();
        self.direction.iter().map(|d| es * d / t).collect()
    }

    /// `ln` of the density of the sum at `s`.
    pub fn sum_log_density(&self, s: f64) -> f64 {
        (self.sum_a - 1.0) * s.ln() + (self.sum_b - 1.0) * (-s).ln_1p() - ln_beta(self.sum_a, self.sum_b)
    }
}

/// New-dish pairs: `H_· ~ Beta(1−α, M+β+α)`, direction `~ Dirichlet(γ)`,
/// and `X` one-hot with `P(j) = γ_j/Σγ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SbdPairSampler {
    pub rate: f64,
    pub sum_a: f64,
    pub sum_b: f64,
    pub gamma: Vec<f64>,
}

impl SbdPairSampler {
    /// `(H vector, condiment index)` with condiments numbered from 0.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, usize) {
        let s = draw::beta_point(self.sum_a, self.sum_b, rng).s;
        let d = if self.gamma.len() == 1 { vec![1.0] } else { draw::dirichlet(&self.gamma, rng) };
        let h: Vec<f64> = d.into_iter().map(|x| s * x).collect();
        // X | H is multinomial with cell probabilities H_j / H_·.
        let j = draw::categorical(&h, rng);
        (h, j)
    }
}

/// The multinomial buffet under a stable-Beta-Dirichlet prior.
#[derive(Clone, Debug, PartialEq)]
pub struct SbdProcess {
    pub prior: SbdPrior,
}

fn one_hot(q: usize, j: usize) -> Vec<u64> {
    let mut v = vec![0; q];
    v[j] = 1;
    v
}

impl MultiProcess for SbdProcess {
    fn score_len(&self) -> usize {
        self.prior.q()
    }

    fn new_dish_rate(&self, order: u64) -> Result<Rate> {
        Ok(Rate::Finite(self.prior.new_dish_rate(order)))
    }

    fn sample_new(&self, _order: u64, rng: &mut dyn RngCore) -> Result<Vec<u64>> {
        Ok(one_hot(self.prior.q(), draw::categorical(&self.prior.gamma, rng)))
    }

    fn sample_existing(&self, dish: &MultiDishRecord, order: u64, rng: &mut dyn RngCore) -> Result<Vec<u64>> {
        let r = self.prior.take_probabilities(&dish.counts, order)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, rj) in r.iter().enumerate() {
            acc += rj;
            if u < acc {
                return Ok(one_hot(self.prior.q(), j));
            }
        }
        Ok(vec![0; self.prior.q()])
    }
}
