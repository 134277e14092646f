//! Multivariate buffets: dishes carry vector scores (condiments). The
//! stable-Beta-Dirichlet prior with multinomial scores has closed forms; other
//! jump measures are plugged in as finite measures with a sampler.

pub mod bivariate;
pub mod general;
pub mod sbd;

use std::collections::HashSet;
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::draw;
use crate::error::{IbpError, Result};
use crate::levy::Rate;
use crate::rng::SeedLineage;

pub use bivariate::{bivariate_bernoulli_model, bivariate_bernoulli_process, BivariateBernoulli, BivariateCell, DirichletJumpMeasure};
pub use general::{mv_pair_sampler, FiniteJumpMeasure, GeneralMultiProcess, GeneralPairSampler, MultiScoreModel, Multinomial};
pub use sbd::{mv_jump_sampler, SbdJumpSampler, SbdPairSampler, SbdPrior, SbdProcess};

const NEW_DISHES: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct MultiDishRecord {
    pub atom: f64,
    /// `(customer, score vector)` for customers with a nonzero vector.
    pub scores: Vec<(u64, Vec<u64>)>,
    /// Per-coordinate totals `c_j`.
    pub counts: Vec<u64>,
}

impl MultiDishRecord {
    pub fn new(atom: f64, len: usize, scores: Vec<(u64, Vec<u64>)>) -> Result<Self> {
        if !(0.0..1.0).contains(&atom) {
            return Err(IbpError::Validation(format!("atom {atom} outside [0, 1)")));
        }
        if scores.is_empty() || scores.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(IbpError::Validation(format!("dish at atom {atom}: customers must be nonempty and increasing")));
        }
        let mut counts = vec![0u64; len];
        for (c, v) in &scores {
            if v.len() != len || v.iter().all(|&x| x == 0) {
                return Err(IbpError::Validation(format!("dish at atom {atom}: bad score vector {v:?} for customer {c}")));
            }
            for (k, x) in v.iter().enumerate() {
                counts[k] += x;
            }
        }
        Ok(MultiDishRecord { atom, scores, counts })
    }

    /// `c = Σ_j c_j`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn score_of(&self, customer: u64) -> Option<&[u64]> {
        self.scores.iter().find(|(c, _)| *c == customer).map(|(_, v)| v.as_slice())
    }
}

/// A multivariate prior/score pair that can drive the sequential process.
pub trait MultiProcess: Send + Sync {
    /// Length of each customer's score vector.
    fn score_len(&self) -> usize;
    /// Rate of new dishes for customer `order + 1`.
    fn new_dish_rate(&self, order: u64) -> Result<Rate>;
    /// Nonzero score vector of a new dish for customer `order + 1`.
    fn sample_new(&self, order: u64, rng: &mut dyn RngCore) -> Result<Vec<u64>>;
    /// Score vector (possibly zero) of customer `order + 1` on an existing dish.
    fn sample_existing(&self, dish: &MultiDishRecord, order: u64, rng: &mut dyn RngCore) -> Result<Vec<u64>>;
}

#[derive(Clone)]
pub struct MultiBuffetState {
    process: Arc<dyn MultiProcess>,
    seed: u64,
    lineage: SeedLineage,
    customers: u64,
    dishes: Vec<MultiDishRecord>,
    atoms: HashSet<u64>,
}

impl std::fmt::Debug for MultiBuffetState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiBuffetState")
            .field("seed", &self.seed)
            .field("customers", &self.customers)
            .field("dishes", &self.dishes)
            .finish()
    }
}

impl MultiBuffetState {
    pub fn new(process: Arc<dyn MultiProcess>, seed: u64) -> Self {
        MultiBuffetState { process, seed, lineage: SeedLineage::new(seed), customers: 0, dishes: Vec::new(), atoms: HashSet::new() }
    }

    pub fn from_parts(process: Arc<dyn MultiProcess>, seed: u64, customers: u64, dishes: Vec<MultiDishRecord>) -> Result<Self> {
        let mut atoms = HashSet::new();
        for d in &dishes {
            if !atoms.insert(d.atom.to_bits()) {
                return Err(IbpError::Validation(format!("duplicate atom {}", d.atom)));
            }
            if d.counts.len() != process.score_len() {
                return Err(IbpError::Validation(format!("atom {}: score vectors must have length {}", d.atom, process.score_len())));
            }
            if let Some((c, _)) = d.scores.iter().find(|(c, _)| *c == 0 || *c > customers) {
                return Err(IbpError::Validation(format!("atom {}: customer {c} outside 1..={customers}", d.atom)));
            }
        }
        Ok(MultiBuffetState { process, seed, lineage: SeedLineage::new(seed), customers, dishes, atoms })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn customers(&self) -> u64 {
        self.customers
    }

    pub fn dishes(&self) -> &[MultiDishRecord] {
        &self.dishes
    }

    pub fn score_len(&self) -> usize {
        self.process.score_len()
    }

    /// Draw customer `M + 1`; returns the number of new dishes.
    pub fn step(&mut self) -> Result<u64> {
        let order = self.customers;
        let customer = order + 1;
        let node = self.lineage.child(customer);
        let rate = match self.process.new_dish_rate(order)? {
            Rate::Finite(r) => r,
            Rate::Infinite => {
                return Err(IbpError::Explosive(format!(
                    "new-dish rate is infinite for customer {customer}: infinitely many dishes would be sampled"
                )))
            }
        };
        for dish in &mut self.dishes {
            let mut rng = node.child(dish.atom.to_bits()).stream();
            let v = self.process.sample_existing(dish, order, &mut rng)?;
            if v.iter().any(|&x| x > 0) {
                for (k, x) in v.iter().enumerate() {
                    dish.counts[k] += x;
                }
                dish.scores.push((customer, v));
            }
        }
        let mut rng = node.child(NEW_DISHES).stream();
        let k = draw::poisson(rate, &mut rng);
        for _ in 0..k {
            let atom = loop {
                let a: f64 = rng.random();
                if self.atoms.insert(a.to_bits()) {
                    break a;
                }
            };
            let v = self.process.sample_new(order, &mut rng)?;
            let counts = v.clone();
            self.dishes.push(MultiDishRecord { atom, scores: vec![(customer, v)], counts });
        }
        self.customers = customer;
        Ok(k)
    }
}

pub fn mv_sample_next_customer(state: &mut MultiBuffetState) -> Result<u64> {
    state.step()
}
