//! Two binary features per dish, with a Dirichlet jump measure over the
//! cells `(p11, p10, p01, p00)`.

use rand::{Rng, RngCore};

use crate::draw;
use crate::error::{ensure, Result};
use crate::levy::Rate;
use crate::multivar::general::{FiniteJumpMeasure, GeneralMultiProcess, MultiScoreModel};
use crate::special::ln_beta;

use std::sync::Arc;

/// `G(a1, a2 | p) = p11^{a1 a2} p10^{a1(1−a2)} p01^{(1−a1)a2} p00^{(1−a1)(1−a2)}`
/// with the jump vector `s = (p11, p10, p01)` and `p00 = 1 − Σ s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct BivariateBernoulli;

impl MultiScoreModel for BivariateBernoulli {
    fn dim(&self) -> usize {
        3
    }

    fn score_len(&self) -> usize {
        2
    }

    fn pmf(&self, x: &[u64], s: &[f64]) -> f64 {
        match (x[0], x[1]) {
            (0, 0) => 1.0 - s.iter().sum::<f64>(),
            (1, 1) => s[0],
            (1, 0) => s[1],
            (0, 1) => s[2],
            _ => 0.0,
        }
    }

    fn pi_nonzero(&self, s: &[f64]) -> f64 {
        s.iter().sum()
    }

    fn sample(&self, s: &[f64], rng: &mut dyn RngCore) -> Vec<u64> {
        let u: f64 = rng.random();
        if u < s[0] {
            vec![1, 1]
        } else if u < s[0] + s[1] {
            vec![1, 0]
        } else if u < s[0] + s[1] + s[2] {
            vec![0, 1]
        } else {
            vec![0, 0]
        }
    }

    fn sample_nonzero(&self, s: &[f64], rng: &mut dyn RngCore) -> Result<Vec<u64>> {
        Ok(match draw::categorical(s, rng) {
            0 => vec![1, 1],
            1 => vec![1, 0],
            _ => vec![0, 1],
        })
    }
}

/// `mass · Dirichlet(a)` over all cells; `sample_jump` returns every cell
/// except the last, which is the all-zero cell.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletJumpMeasure {
    mass: f64,
    alpha: Vec<f64>,
}

impl DirichletJumpMeasure {
    pub fn new(mass: f64, alpha: Vec<f64>) -> Result<Self> {
        ensure(mass > 0.0 && mass.is_finite(), || format!("mass must be positive, got {mass}"))?;
        ensure(alpha.len() >= 2, || "Dirichlet needs at least two cells".into())?;
        ensure(alpha.iter().all(|a| *a > 0.0 && a.is_finite()), || format!("Dirichlet parameters must be positive, got {alpha:?}"))?;
        Ok(DirichletJumpMeasure { mass, alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `∫ (1 − p_0)(p_0)^M` under the measure, where `p_0` is the last cell:
    /// `mass · B(a_0 + M, A + 1) / B(a_0, A)` with `A` the sum of the other cells.
    pub fn zero_cell_rate(&self, order: u64) -> f64 {
        let a0 = *self.alpha.last().expect("at least two cells");
        let rest: f64 = self.alpha[..self.alpha.len() - 1].iter().sum();
        self.mass * (ln_beta(a0 + order as f64, rest + 1.0) - ln_beta(a0, rest)).exp()
    }
}

impl FiniteJumpMeasure for DirichletJumpMeasure {
    fn dim(&self) -> usize {
        self.alpha.len() - 1
    }

    fn total_mass(&self) -> f64 {
        self.mass
    }

    fn sample_jump(&self, mut rng: &mut dyn RngCore) -> Vec<f64> {
        let mut d = draw::dirichlet(&self.alpha, &mut rng);
        d.pop();
        d
    }
}

/// A validated point `(p11, p10, p01)` of the bivariate Bernoulli kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BivariateCell {
    jump: [f64; 3],
}

impl BivariateCell {
    pub fn jump(&self) -> &[f64] {
        &self.jump
    }

    pub fn kernel(&self) -> BivariateBernoulli {
        BivariateBernoulli
    }

    pub fn pmf(&self, a1: u64, a2: u64) -> f64 {
        BivariateBernoulli.pmf(&[a1, a2], &self.jump)
    }

    pub fn pi_nonzero(&self) -> f64 {
        BivariateBernoulli.pi_nonzero(&self.jump)
    }

    /// `P(A1 = 1) = p10 + p11`.
    pub fn first_marginal(&self) -> f64 {
        self.jump[0] + self.jump[1]
    }

    /// `P(A2 = 1) = p01 + p11`.
    pub fn second_marginal(&self) -> f64 {
        self.jump[0] + self.jump[2]
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<u64> {
        BivariateBernoulli.sample(&self.jump, rng)
    }

    pub fn sample_nonzero(&self, rng: &mut dyn RngCore) -> Vec<u64> {
        BivariateBernoulli.sample_nonzero(&self.jump, rng).expect("closed-form draw")
    }
}

/// Validates `(p11, p10, p01)` on the open simplex and excludes the all-zero
/// point, which has no nonzero draws.
pub fn bivariate_bernoulli_model(p11: f64, p10: f64, p01: f64) -> Result<BivariateCell> {
    let jump = [p11, p10, p01];
    ensure(jump.iter().all(|p| (0.0..1.0).contains(p)), || format!("cell probabilities must lie in [0, 1), got {jump:?}"))?;
    let total: f64 = jump.iter().sum();
    ensure(total < 1.0, || format!("p11 + p10 + p01 must be below 1, got {total}"))?;
    ensure(total > 0.0, || "all-zero cell probabilities give a degenerate score model".into())?;
    Ok(BivariateCell { jump })
}

/// Bivariate Bernoulli buffet with jump measure `mass · Dirichlet(a11, a10, a01, a00)`.
pub fn bivariate_bernoulli_process(mass: f64, a11: f64, a10: f64, a01: f64, a00: f64) -> Result<GeneralMultiProcess> {
    let measure = DirichletJumpMeasure::new(mass, vec![a11, a10, a01, a00])?;
    let m2 = measure.clone();
    GeneralMultiProcess::new(Arc::new(measure), Arc::new(BivariateBernoulli), move |order| {
        Ok(Rate::Finite(m2.zero_cell_rate(order)))
    })
}
