//! The sequential generative process: customer 1 samples a Poisson number of
//! dishes, customer `M+1` revisits each existing dish through its posterior
//! jump law and samples fresh dishes from the tilted intensity.

pub mod matrix;
pub mod pair;
pub mod pattern;
pub mod table;

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use rand::Rng;

use crate::draw;
use crate::error::{IbpError, Result};
use crate::levy::{LevyDensity, TiltedLevy};
use crate::posterior::{jump_law, JumpLaw};
use crate::rng::SeedLineage;
use crate::scores::ScoreModel;

pub use matrix::{FeatureMatrix, MatrixDish, MatrixModel, MatrixPrior};
pub use pair::{ClosedForm, PairRoute, PairSampler};
pub use pattern::Pattern;

/// Key of the per-customer stream that draws new dishes; existing dishes use
/// the bit pattern of their atom, which never equals this value.
const NEW_DISHES: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct DishRecord {
    /// Feature label in `[0, 1)`.
    pub atom: f64,
    /// `(customer, score)` for the customers with a nonzero score, customers
    /// numbered from 1 in increasing order.
    pub scores: Vec<(u64, u64)>,
    /// Sum of the scores.
    pub count: u64,
}

impl DishRecord {
    pub fn new(atom: f64, scores: Vec<(u64, u64)>) -> Result<Self> {
        if !(0.0..1.0).contains(&atom) {
            return Err(IbpError::Validation(format!("atom {atom} outside [0, 1)")));
        }
        if scores.is_empty() {
            return Err(IbpError::Validation(format!("dish at atom {atom} has no nonzero score")));
        }
        if scores.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(IbpError::Validation(format!("dish at atom {atom}: customer indices not increasing")));
        }
        if let Some((c, _)) = scores.iter().find(|(_, a)| *a == 0) {
            return Err(IbpError::Validation(format!("dish at atom {atom}: zero score recorded for customer {c}")));
        }
        let count = scores.iter().try_fold(0u64, |acc, (_, a)| acc.checked_add(*a));
        let count = count.ok_or_else(|| IbpError::Resource(format!("dish at atom {atom}: score total overflows")))?;
        Ok(DishRecord { atom, scores, count })
    }

    pub fn score_of(&self, customer: u64) -> u64 {
        self.scores.iter().find(|(c, _)| *c == customer).map_or(0, |(_, a)| *a)
    }

    pub fn nonzero_scores(&self) -> Vec<u64> {
        self.scores.iter().map(|(_, a)| *a).collect()
    }
}

#[derive(Default, Debug)]
struct Cache {
    pairs: HashMap<u64, Arc<PairSampler>>,
    jumps: HashMap<(u64, u64), Arc<JumpLaw>>,
}

/// A prior/score pair with memoized pair samplers and jump laws, shared by
/// every state started from it.
#[derive(Clone, Debug)]
pub struct Buffet {
    prior: LevyDensity,
    score: ScoreModel,
    cache: Arc<Mutex<Cache>>,
}

impl Buffet {
    pub fn new(prior: LevyDensity, score: ScoreModel) -> Result<Self> {
        TiltedLevy::new(prior.clone(), score, 0)?;
        Ok(Buffet { prior, score, cache: Arc::default() })
    }

    pub fn prior(&self) -> &LevyDensity {
        &self.prior
    }

    pub fn score(&self) -> ScoreModel {
        self.score
    }

    /// The sampler for new dishes of customer `order + 1`.
    pub fn pair_sampler(&self, order: u64) -> Result<Arc<PairSampler>> {
        if let Some(p) = self.cache.lock().expect("cache lock").pairs.get(&order) {
            return Ok(p.clone());
        }
        let s = Arc::new(PairSampler::new(&TiltedLevy::new(self.prior.clone(), self.score, order)?)?);
        self.cache.lock().expect("cache lock").pairs.insert(order, s.clone());
        Ok(s)
    }

    /// Posterior law of the weight of a dish with total score `count` after
    /// `order` customers.
    pub fn jump_law(&self, count: u64, order: u64) -> Result<Arc<JumpLaw>> {
        if let Some(j) = self.cache.lock().expect("cache lock").jumps.get(&(count, order)) {
            return Ok(j.clone());
        }
        let j = Arc::new(jump_law(&self.prior, self.score, count, order)?);
        self.cache.lock().expect("cache lock").jumps.insert((count, order), j.clone());
        Ok(j)
    }

    pub fn start(&self, seed: u64) -> BuffetState {
        BuffetState {
            buffet: self.clone(),
            seed,
            lineage: SeedLineage::new(seed),
            customers: 0,
            dishes: Vec::new(),
            atoms: HashSet::new(),
        }
    }

    /// Run `customers` steps from the empty state.
    pub fn simulate(&self, seed: u64, customers: u64) -> Result<BuffetState> {
        let mut st = self.start(seed);
        for _ in 0..customers {
            st.step()?;
        }
        Ok(st)
    }
}

/// What one customer did.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct CustomerDraw {
    pub customer: u64,
    pub new_dishes: u64,
    pub new_score: u64,
    pub revisited: u64,
    pub revisit_score: u64,
}

/// An observed feature allocation plus the seed lineage that continues it.
#[derive(Clone, Debug)]
pub struct BuffetState {
    buffet: Buffet,
    seed: u64,
    lineage: SeedLineage,
    customers: u64,
    dishes: Vec<DishRecord>,
    atoms: HashSet<u64>,
}

impl BuffetState {
    /// Assemble a state from observed data, validating it against the model.
    pub fn from_parts(buffet: &Buffet, seed: u64, customers: u64, dishes: Vec<DishRecord>) -> Result<Self> {
        let mut problems = Vec::new();
        let mut atoms = HashSet::new();
        for d in &dishes {
            if !atoms.insert(d.atom.to_bits()) {
                problems.push(format!("duplicate atom {}", d.atom));
            }
            for &(c, a) in &d.scores {
                if c == 0 || c > customers {
                    problems.push(format!("atom {}: customer {c} outside 1..={customers}", d.atom));
                }
                if a > buffet.score.max_score() {
                    problems.push(format!("atom {}: customer {c} has score {a} but {} allows at most {}", d.atom, buffet.score, buffet.score.max_score()));
                }
            }
        }
        if !problems.is_empty() {
            return Err(IbpError::Validation(problems.join("; ")));
        }
        Ok(BuffetState { buffet: buffet.clone(), seed, lineage: SeedLineage::new(seed), customers, dishes, atoms })
    }

    pub fn buffet(&self) -> &Buffet {
        &self.buffet
    }

    pub fn prior(&self) -> &LevyDensity {
        &self.buffet.prior
    }

    pub fn score_model(&self) -> ScoreModel {
        self.buffet.score
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn customers(&self) -> u64 {
        self.customers
    }

    pub fn dishes(&self) -> &[DishRecord] {
        &self.dishes
    }

    pub fn num_dishes(&self) -> usize {
        self.dishes.len()
    }

    pub fn total_score(&self) -> u64 {
        self.dishes.iter().map(|d| d.count).sum()
    }

    /// Number of nonzero entries in a customer's row.
    pub fn row_support(&self, customer: u64) -> usize {
        self.dishes.iter().filter(|d| d.score_of(customer) > 0).count()
    }

    pub fn row_total(&self, customer: u64) -> u64 {
        self.dishes.iter().map(|d| d.score_of(customer)).sum()
    }

    /// Draw customer `M + 1`.
    pub fn step(&mut self) -> Result<CustomerDraw> {
        let order = self.customers;
        let customer = order + 1;
        let score = self.buffet.score;
        let mut out = CustomerDraw { customer, ..Default::default() };
        let customer_node = self.lineage.child(customer);
        // The new-dish sampler is built first so that an explosive
        // configuration fails before any state changes.
        let sampler = self.buffet.pair_sampler(order)?;
        for dish in &mut self.dishes {
            let law = self.buffet.jump_law(dish.count, order)?;
            let mut rng = customer_node.child(dish.atom.to_bits()).stream();
            let j = law.sample_point(&mut rng);
            let a = score.sample_at(j, &mut rng);
            if a > 0 {
                dish.scores.push((customer, a));
                dish.count = dish.count.checked_add(a).ok_or_else(|| IbpError::Resource("dish score total overflows".into()))?;
                out.revisited += 1;
                out.revisit_score += a;
            }
        }
        let mut rng = customer_node.child(NEW_DISHES).stream();
        let k = draw::poisson(sampler.rate(), &mut rng);
        for _ in 0..k {
            let atom = loop {
                let a: f64 = rng.random();
                if self.atoms.insert(a.to_bits()) {
                    break a;
                }
            };
            let (_, x) = sampler.sample_point(&mut rng)?;
            self.dishes.push(DishRecord { atom, scores: vec![(customer, x)], count: x });
            out.new_dishes += 1;
            out.new_score += x;
        }
        self.customers = customer;
        Ok(out)
    }

    pub fn pattern(&self) -> Pattern {
        Pattern::from_state(self)
    }
}

/// Start a buffet and draw its first customer.
pub fn sample_first_customer(prior: &LevyDensity, score: ScoreModel, seed: u64) -> Result<BuffetState> {
    let mut st = Buffet::new(prior.clone(), score)?.start(seed);
    st.step()?;
    Ok(st)
}

pub fn sample_next_customer(state: &mut BuffetState) -> Result<CustomerDraw> {
    state.step()
}
