//! General multivariate path: a finite jump measure `P` with a sampler and a
//! vector score model. Posterior jumps are drawn by rejection against `P`.

use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::draw;
use crate::error::{ensure, IbpError, Result};
use crate::levy::Rate;
use crate::multivar::{MultiDishRecord, MultiProcess};

const REJECTION_CAP: u64 = 10_000_000;

/// Vector score law `G(x | s)`.
pub trait MultiScoreModel: Send + Sync {
    /// Length of the jump vector `s`.
    fn dim(&self) -> usize;
    /// Length of a score vector `x`.
    fn score_len(&self) -> usize;
    fn pmf(&self, x: &[u64], s: &[f64]) -> f64;
    /// `π(s) = 1 − G(0 | s)`.
    fn pi_nonzero(&self, s: &[f64]) -> f64;
    fn sample(&self, s: &[f64], rng: &mut dyn RngCore) -> Vec<u64>;

    fn sample_nonzero(&self, s: &[f64], rng: &mut dyn RngCore) -> Result<Vec<u64>> {
        for _ in 0..REJECTION_CAP {
            let x = self.sample(s, rng);
            if x.iter().any(|&v| v > 0) {
                return Ok(x);
            }
        }
        Err(IbpError::Resource(format!("no nonzero score after {REJECTION_CAP} draws")))
    }

    /// `ln h(x | s) = ln G(x | s) − ln G(0 | s)`.
    fn log_h_factor(&self, x: &[u64], s: &[f64]) -> f64 {
        if x.iter().all(|&v| v == 0) {
            0.0
        } else {
            self.pmf(x, s).ln() - (-self.pi_nonzero(s)).ln_1p()
        }
    }
}

/// Finite jump measure `P` on the jump-vector space.
pub trait FiniteJumpMeasure: Send + Sync {
    fn dim(&self) -> usize;
    fn total_mass(&self) -> f64;
    /// A draw from `P / P(total)`.
    fn sample_jump(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// One condiment per dish: `G(e_j | s) = s_j`, `G(0 | s) = 1 − Σ s_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Multinomial {
    pub q: usize,
}

impl MultiScoreModel for Multinomial {
    fn dim(&self) -> usize {
        self.q
    }

    fn score_len(&self) -> usize {
        self.q
    }

    fn pmf(&self, x: &[u64], s: &[f64]) -> f64 {
        match x.iter().sum::<u64>() {
            0 => 1.0 - s.iter().sum::<f64>(),
            1 => x.iter().zip(s).find(|(v, _)| **v == 1).map_or(0.0, |(_, p)| *p),
            _ => 0.0,
        }
    }

    fn pi_nonzero(&self, s: &[f64]) -> f64 {
        s.iter().sum()
    }

    fn sample(&self, s: &[f64], rng: &mut dyn RngCore) -> Vec<u64> {
        let mut x = vec![0; self.q];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, p) in s.iter().enumerate() {
            acc += p;
            if u < acc {
                x[j] = 1;
                break;
            }
        }
        x
    }

    fn sample_nonzero(&self, s: &[f64], rng: &mut dyn RngCore) -> Result<Vec<u64>> {
        let mut x = vec![0; self.q];
        x[draw::categorical(s, rng)] = 1;
        Ok(x)
    }
}

type RateFn = dyn Fn(u64) -> Result<Rate> + Send + Sync;

/// Buffet driven by a finite jump measure. The new-dish rate
/// `φ_M = ∫ π(s)(1 − π(s))^M P(ds)` is supplied by the caller.
#[derive(Clone)]
pub struct GeneralMultiProcess {
    measure: Arc<dyn FiniteJumpMeasure>,
    score: Arc<dyn MultiScoreModel>,
    rate: Arc<RateFn>,
}

impl GeneralMultiProcess {
    pub fn new<F>(measure: Arc<dyn FiniteJumpMeasure>, score: Arc<dyn MultiScoreModel>, rate: F) -> Result<Self>
    where
        F: Fn(u64) -> Result<Rate> + Send + Sync + 'static,
    {
        ensure(measure.dim() == score.dim(), || {
            format!("jump measure has dimension {} but the score model expects {}", measure.dim(), score.dim())
        })?;
        Ok(GeneralMultiProcess { measure, score, rate: Arc::new(rate) })
    }

    pub fn measure(&self) -> &dyn FiniteJumpMeasure {
        self.measure.as_ref()
    }

    pub fn score(&self) -> &dyn MultiScoreModel {
        self.score.as_ref()
    }

    /// Monte Carlo estimate of `φ_M`, for checking a supplied rate.
    pub fn rate_monte_carlo(&self, order: u64, draws: u64, rng: &mut dyn RngCore) -> f64 {
        let mut acc = 0.0;
        for _ in 0..draws {
            let s = self.measure.sample_jump(rng);
            let p = self.score.pi_nonzero(&s);
            acc += p * (1.0 - p).powi(order as i32);
        }
        self.measure.total_mass() * acc / draws as f64
    }

    fn sample_jump_weighted(&self, weight: impl Fn(&[f64]) -> f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        for _ in 0..REJECTION_CAP {
            let s = self.measure.sample_jump(rng);
            let u: f64 = rng.random();
            if u < weight(&s) {
                return Ok(s);
            }
        }
        Err(IbpError::Resource(format!("rejection sampler exceeded {REJECTION_CAP} proposals")))
    }

    /// Posterior jump of an observed dish given all `order` rows.
    pub fn sample_posterior_jump(&self, dish: &MultiDishRecord, order: u64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let zero = vec![0; self.score.score_len()];
        self.sample_jump_weighted(
            |s| {
                let mut w = self.score.pmf(&zero, s).powi((order - dish.scores.len() as u64) as i32);
                for (_, x) in &dish.scores {
                    w *= self.score.pmf(x, s);
                }
                w
            },
            rng,
        )
    }

    pub fn pair_sampler(&self, order: u64) -> Result<GeneralPairSampler> {
        Ok(GeneralPairSampler { process: self.clone(), order, rate: (self.rate)(order)? })
    }
}

impl MultiProcess for GeneralMultiProcess {
    fn score_len(&self) -> usize {
        self.score.score_len()
    }

    fn new_dish_rate(&self, order: u64) -> Result<Rate> {
        (self.rate)(order)
    }

    fn sample_new(&self, order: u64, rng: &mut dyn RngCore) -> Result<Vec<u64>> {
        let s = self.sample_jump_weighted(|s| new_weight(self.score.as_ref(), s, order), rng)?;
        self.score.sample_nonzero(&s, rng)
    }

    fn sample_existing(&self, dish: &MultiDishRecord, order: u64, rng: &mut dyn RngCore) -> Result<Vec<u64>> {
        let s = self.sample_posterior_jump(dish, order, rng)?;
        Ok(self.score.sample(&s, rng))
    }
}

fn new_weight(score: &dyn MultiScoreModel, s: &[f64], order: u64) -> f64 {
    let p = score.pi_nonzero(s);
    p * (1.0 - p).powi(order as i32)
}

/// Draws `(H, X)` for new dishes of customer `order + 1`.
#[derive(Clone)]
pub struct GeneralPairSampler {
    process: GeneralMultiProcess,
    order: u64,
    rate: Rate,
}

impl GeneralPairSampler {
    pub fn rate(&self) -> Rate {
        self.rate
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Result<(Vec<f64>, Vec<u64>)> {
        let score = self.process.score.as_ref();
        let h = self.process.sample_jump_weighted(|s| new_weight(score, s, self.order), rng)?;
        let x = score.sample_nonzero(&h, rng)?;
        Ok((h, x))
    }
}

pub fn mv_pair_sampler(process: &GeneralMultiProcess, order: u64) -> Result<GeneralPairSampler> {
    process.pair_sampler(order)
}
