//! On-disk feature matrices: JSON documents and a long-form CSV export.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::buffet::{Buffet, BuffetState, DishRecord};
use crate::error::IbpError;

type Result<T, E = IbpError> = std::result::Result<T, E>;
use crate::levy::LevyDensity;
use crate::multivar::{MultiBuffetState, MultiDishRecord, SbdPrior, SbdProcess};
use crate::scores::ScoreModel;

/// Score model of a matrix: a scalar model, or one condiment per dish.
#[derive(Clone, Debug, PartialEq)]
pub enum MatrixModel {
    Score(ScoreModel),
    Multinomial { q: usize },
}

/// Prior of a matrix.
#[derive(Clone, Debug)]
pub enum MatrixPrior {
    Levy(LevyDensity),
    Sbd(SbdPrior),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultinomialRepr {
    kind: String,
    q: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SbdRepr {
    kind: String,
    theta: f64,
    alpha: f64,
    beta: f64,
    gamma: Vec<f64>,
}

fn kind_of<E: serde::de::Error>(v: &Value) -> Result<String, E> {
    v.get("kind").and_then(Value::as_str).map(str::to_string).ok_or_else(|| E::custom("missing string field `kind`"))
}

impl Serialize for MatrixModel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MatrixModel::Score(m) => m.serialize(s),
            MatrixModel::Multinomial { q } => MultinomialRepr { kind: "multinomial".into(), q: *q }.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for MatrixModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        if kind_of::<D::Error>(&v)? == "multinomial" {
            let r: MultinomialRepr = serde_json::from_value(v).map_err(D::Error::custom)?;
            if r.q == 0 {
                return Err(D::Error::custom("multinomial model needs q ≥ 1"));
            }
            Ok(MatrixModel::Multinomial { q: r.q })
        } else {
            serde_json::from_value(v).map(MatrixModel::Score).map_err(D::Error::custom)
        }
    }
}

impl Serialize for MatrixPrior {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MatrixPrior::Levy(l) => l.serialize(s),
            MatrixPrior::Sbd(p) => SbdRepr {
                kind: "sbd".into(),
                theta: p.theta(),
                alpha: p.alpha(),
                beta: p.beta(),
                gamma: p.gamma().to_vec(),
            }
            .serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for MatrixPrior {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        if kind_of::<D::Error>(&v)? == "sbd" {
            let r: SbdRepr = serde_json::from_value(v).map_err(D::Error::custom)?;
            SbdPrior::new(r.theta, r.alpha, r.beta, r.gamma).map(MatrixPrior::Sbd).map_err(D::Error::custom)
        } else {
            serde_json::from_value(v).map(MatrixPrior::Levy).map_err(D::Error::custom)
        }
    }
}

/// A score for a univariate model, or the condiment index (from 1) for a
/// multinomial one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDish {
    pub atom: f64,
    /// Customer number to entry; only nonzero entries are stored.
    pub scores: BTreeMap<u64, u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMatrix {
    pub customers: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    pub model: MatrixModel,
    pub prior: MatrixPrior,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub dishes: Vec<MatrixDish>,
}

fn sort_dishes(dishes: &mut [MatrixDish]) {
    dishes.sort_by(|a, b| {
        let fa = a.scores.keys().next();
        let fb = b.scores.keys().next();
        fa.cmp(&fb).then(a.atom.total_cmp(&b.atom))
    });
}

impl FeatureMatrix {
    pub fn from_state(state: &BuffetState) -> Self {
        let mut dishes: Vec<MatrixDish> = state
            .dishes()
            .iter()
            .map(|d| MatrixDish { atom: d.atom, scores: d.scores.iter().copied().collect() })
            .collect();
        sort_dishes(&mut dishes);
        FeatureMatrix {
            customers: state.customers(),
            q: None,
            model: MatrixModel::Score(state.score_model()),
            prior: MatrixPrior::Levy(state.prior().clone()),
            seed: Some(state.seed()),
            dishes,
        }
    }

    /// A multinomial buffet drawn under `prior`.
    pub fn from_multi_state(state: &MultiBuffetState, prior: &SbdPrior) -> Result<Self> {
        if state.score_len() != prior.q() {
            return Err(IbpError::Validation(format!("state has {} condiments, prior has {}", state.score_len(), prior.q())));
        }
        let mut dishes = Vec::with_capacity(state.dishes().len());
        for d in state.dishes() {
            let mut scores = BTreeMap::new();
            for (c, v) in &d.scores {
                let j = one_hot_index(v).ok_or_else(|| {
                    IbpError::Validation(format!("customer {c} at atom {} has a non-multinomial score {v:?}", d.atom))
                })?;
                scores.insert(*c, j as u64 + 1);
            }
            dishes.push(MatrixDish { atom: d.atom, scores });
        }
        sort_dishes(&mut dishes);
        Ok(FeatureMatrix {
            customers: state.customers(),
            q: Some(prior.q()),
            model: MatrixModel::Multinomial { q: prior.q() },
            prior: MatrixPrior::Sbd(prior.clone()),
            seed: Some(state.seed()),
            dishes,
        })
    }

    pub fn num_dishes(&self) -> usize {
        self.dishes.len()
    }

    /// Every problem found, one per line.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let max = match (&self.model, &self.prior) {
            (MatrixModel::Score(score), MatrixPrior::Levy(prior)) => {
                if !score.accepts(prior.support()) {
                    out.push(format!("{score} scores need a prior on {:?}, got {prior}", score.natural_support()));
                }
                if let Some(q) = self.q {
                    out.push(format!("q = {q} given for a univariate model"));
                }
                score.max_score()
            }
            (MatrixModel::Multinomial { q }, MatrixPrior::Sbd(prior)) => {
                if *q != prior.q() {
                    out.push(format!("multinomial q = {q} disagrees with the prior's {} condiments", prior.q()));
                }
                if self.q.is_some_and(|x| x != *q) {
                    out.push(format!("q = {} disagrees with the model's q = {q}", self.q.unwrap_or(0)));
                }
                *q as u64
            }
            (MatrixModel::Score(_), MatrixPrior::Sbd(_)) => {
                out.push("a scalar score model needs a univariate prior, got an sbd prior".into());
                u64::MAX
            }
            (MatrixModel::Multinomial { .. }, MatrixPrior::Levy(_)) => {
                out.push("a multinomial model needs an sbd prior".into());
                u64::MAX
            }
        };
        let mut seen = std::collections::HashSet::new();
        for (k, d) in self.dishes.iter().enumerate() {
            if !(0.0..1.0).contains(&d.atom) {
                out.push(format!("dish {k}: atom {} outside [0, 1)", d.atom));
            }
            if !seen.insert(d.atom.to_bits()) {
                out.push(format!("dish {k}: duplicate atom {}", d.atom));
            }
            if d.scores.is_empty() {
                out.push(format!("dish {k}: no customer took it"));
            }
            for (&c, &v) in &d.scores {
                if c == 0 || c > self.customers {
                    out.push(format!("dish {k}: customer {c} outside 1..={}", self.customers));
                }
                if v == 0 {
                    out.push(format!("dish {k}: customer {c} has a stored zero"));
                }
                if v > max {
                    out.push(format!("dish {k}: customer {c} has entry {v} above the maximum {max}"));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(IbpError::Validation(p.join("\n")))
        }
    }

    /// Rebuild a univariate state. Customers without dishes are allowed.
    pub fn to_state(&self) -> Result<BuffetState> {
        self.validate()?;
        let (prior, score) = match (&self.prior, &self.model) {
            (MatrixPrior::Levy(prior), MatrixModel::Score(score)) => (prior.clone(), *score),
            _ => return Err(IbpError::Validation("matrix holds a multinomial model".into())),
        };
        let buffet = Buffet::new(prior, score).map_err(|e| IbpError::Validation(e.to_string()))?;
        let dishes = self
            .dishes
            .iter()
            .map(|d| DishRecord::new(d.atom, d.scores.iter().map(|(&c, &v)| (c, v)).collect()))
            .collect::<Result<Vec<_>>>()?;
        BuffetState::from_parts(&buffet, self.seed.unwrap_or(0), self.customers, dishes)
    }

    pub fn to_multi_state(&self) -> Result<MultiBuffetState> {
        self.validate()?;
        let prior = match &self.prior {
            MatrixPrior::Sbd(prior) => prior.clone(),
            MatrixPrior::Levy(_) => return Err(IbpError::Validation("matrix holds a univariate model".into())),
        };
        let q = prior.q();
        let dishes = self
            .dishes
            .iter()
            .map(|d| {
                let scores = d
                    .scores
                    .iter()
                    .map(|(&c, &j)| {
                        let mut v = vec![0; q];
                        v[j as usize - 1] = 1;
                        (c, v)
                    })
                    .collect();
                MultiDishRecord::new(d.atom, q, scores)
            })
            .collect::<Result<Vec<_>>>()?;
        MultiBuffetState::from_parts(Arc::new(SbdProcess { prior }), self.seed.unwrap_or(0), self.customers, dishes)
    }

    /// Long form with header `customer,dish,atom,score`; dishes are numbered
    /// from 0 in export order. Multinomial entries hold the condiment index.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("customer,dish,atom,score\n");
        let mut rows: Vec<(u64, usize, f64, u64)> = Vec::new();
        for (k, d) in self.dishes.iter().enumerate() {
            rows.extend(d.scores.iter().map(|(&c, &v)| (c, k, d.atom, v)));
        }
        rows.sort_by_key(|r| (r.0, r.1));
        for (c, k, a, v) in rows {
            out.push_str(&format!("{c},{k},{a},{v}\n"));
        }
        out
    }
}

fn one_hot_index(v: &[u64]) -> Option<usize> {
    let mut idx = None;
    for (j, &x) in v.iter().enumerate() {
        match (x, idx) {
            (0, _) => {}
            (1, None) => idx = Some(j),
            _ => return None,
        }
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_ordering() {
        let buffet = Buffet::new(LevyDensity::beta_process(2.0, 1.0).unwrap(), ScoreModel::Bernoulli).unwrap();
        let st = buffet.simulate(7, 6).unwrap();
        let m = FeatureMatrix::from_state(&st);
        let firsts: Vec<u64> = m.dishes.iter().map(|d| *d.scores.keys().next().unwrap()).collect();
        assert!(firsts.windows(2).all(|w| w[0] <= w[1]));
        let text = serde_json::to_string(&m).unwrap();
        let back: FeatureMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back.dishes, m.dishes);
        let st2 = back.to_state().unwrap();
        assert_eq!(st2.total_score(), st.total_score());
        assert!(m.to_csv().starts_with("customer,dish,atom,score\n"));
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut m = FeatureMatrix {
            customers: 2,
            q: None,
            model: MatrixModel::Score(ScoreModel::Bernoulli),
            prior: MatrixPrior::Levy(LevyDensity::beta_process(1.0, 1.0).unwrap()),
            seed: None,
            dishes: vec![MatrixDish { atom: 0.5, scores: [(1, 2), (3, 1)].into_iter().collect() }],
        };
        let p = m.problems();
        assert_eq!(p.len(), 2, "{p:?}");
        m.dishes.clear();
        assert!(m.validate().is_ok());
    }
}
