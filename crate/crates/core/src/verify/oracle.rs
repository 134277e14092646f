//! Brute-force reference: simulate the completely random measure directly,
//! keeping the jumps above a truncation level, then score every customer
//! independently. Shares no code with the sequential samplers beyond the
//! density and the score law.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::buffet::{Buffet, Pattern};
use crate::draw;
use crate::error::{IbpError, Result};
use crate::levy::LevyDensity;
use crate::quad::{self, gk21, Point, QuadOptions, Support, U_LIMIT};
use crate::rng::SeedLineage;
use crate::scores::ScoreModel;

/// Largest expected jump count per replicate.
pub const MAX_EXPECTED_JUMPS: f64 = 1e6;

/// Cached tail mass `T(u) = ∫_{s(u)}^{∞} ρ` on a grid in the real coordinate
/// of the support.
#[derive(Clone, Debug)]
pub struct TailTable {
    support: Support,
    prior: LevyDensity,
    knots: Vec<f64>,
    tail: Vec<f64>,
}

impl TailTable {
    pub fn build(prior: &LevyDensity, eps: f64) -> Result<Self> {
        let support = prior.support();
        if !(eps > 0.0) || (support == Support::UnitInterval && eps >= 1.0) {
            return Err(IbpError::Config(format!("truncation level {eps} outside the support")));
        }
        let u0 = match support {
            Support::UnitInterval => (eps / (1.0 - eps)).ln(),
            Support::PositiveHalfLine => eps.ln(),
        };
        let mut knots = vec![u0];
        let mut u = u0;
        while u < U_LIMIT {
            u += if u.abs() < 50.0 { 0.125 } else { 1.0 };
            knots.push(u.min(U_LIMIT));
        }
        let g = |u: f64| integrand(prior, support, u);
        let opts = QuadOptions::rel(1e-12);
        let panels: Vec<f64> = knots
            .par_windows(2)
            .map(|w| match quad::integrate(g, w[0], w[1], opts) {
                Ok(e) | Err(quad::QuadFailure::NoConvergence(e)) => Ok(e.value),
                Err(e) => Err(IbpError::from(e)),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut tail = vec![0.0; knots.len()];
        for i in (0..panels.len()).rev() {
            tail[i] = tail[i + 1] + panels[i];
        }
        if !tail[0].is_finite() {
            return Err(IbpError::Config(format!("tail mass above {eps} is not finite")));
        }
        Ok(TailTable { support, prior: prior.clone(), knots, tail })
    }

    /// `∫_{s ≥ ε} ρ`.
    pub fn total(&self) -> f64 {
        self.tail[0]
    }

    fn tail_at(&self, k: usize, u: f64) -> f64 {
        let mut g = |x: f64| integrand(&self.prior, self.support, x);
        self.tail[k] - gk21(&mut g, self.knots[k], u).value
    }

    /// Jump size with tail mass `v`, for `0 < v ≤ total`.
    pub fn invert(&self, v: f64) -> Point {
        // Tail masses decrease along the grid: find T(u_k) ≥ v > T(u_{k+1}).
        let k = self.tail.partition_point(|&t| t >= v).saturating_sub(1).min(self.knots.len() - 2);
        let (mut lo, mut hi) = (self.knots[k], self.knots[k + 1]);
        let (tl, th) = (self.tail[k], self.tail[k + 1]);
        let mut u = if tl > th { lo + (tl - v) / (tl - th) * (hi - lo) } else { lo };
        for _ in 0..60 {
            let f = self.tail_at(k, u) - v;
            if f > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let d = integrand(&self.prior, self.support, u);
            let next = u + f / d;
            u = if d > 0.0 && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if (hi - lo).abs() < 1e-13 * (1.0 + u.abs()) || f.abs() <= 1e-14 * v {
                break;
            }
        }
        self.support.from_real(u).0
    }
}

fn integrand(prior: &LevyDensity, support: Support, u: f64) -> f64 {
    let (p, j) = support.from_real(u);
    if p.s <= 0.0 || !p.s.is_finite() || (support == Support::UnitInterval && p.sc <= 0.0) {
        return 0.0;
    }
    let v = prior.density_at(p) * j;
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Empirical law of unordered score patterns.
#[derive(Clone, Debug, Default)]
pub struct PatternLaw {
    pub customers: u64,
    pub samples: u64,
    pub counts: BTreeMap<Pattern, u64>,
}

impl PatternLaw {
    pub fn frequency(&self, p: &Pattern) -> f64 {
        self.counts.get(p).copied().unwrap_or(0) as f64 / self.samples as f64
    }

    /// Total-variation distance over the patterns accepted by `keep`.
    pub fn total_variation(&self, other: &PatternLaw, keep: impl Fn(&Pattern) -> bool) -> f64 {
        let mut keys: Vec<&Pattern> = self.counts.keys().chain(other.counts.keys()).filter(|p| keep(p)).collect();
        keys.sort();
        keys.dedup();
        0.5 * keys.iter().map(|p| (self.frequency(p) - other.frequency(p)).abs()).sum::<f64>()
    }

    fn merge(mut self, other: PatternLaw) -> PatternLaw {
        self.samples += other.samples;
        for (k, v) in other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
        self
    }
}

#[derive(Clone, Debug)]
pub struct OracleRun {
    pub law: PatternLaw,
    pub truncation: f64,
    /// `∫_{s ≥ ε} ρ`, the expected number of simulated jumps.
    pub expected_jumps: f64,
    /// Upper bound `M ∫_0^ε π ρ` on the expected number of dishes lost to truncation.
    pub bias_bound: f64,
}

/// Simulate `replicates` independent matrices of `customers` rows from the
/// truncated measure.
pub fn truncated_crm_oracle(
    prior: &LevyDensity,
    score: ScoreModel,
    customers: u64,
    eps: f64,
    seed: u64,
    replicates: u64,
) -> Result<OracleRun> {
    if !score.accepts(prior.support()) {
        return Err(IbpError::Config(format!("{score} scores need a prior on {:?}", score.natural_support())));
    }
    let table = TailTable::build(prior, eps)?;
    let total = table.total();
    if total > MAX_EXPECTED_JUMPS {
        return Err(IbpError::Resource(format!(
            "truncation at {eps} leaves {total:.3e} expected jumps per replicate; raise epsilon"
        )));
    }
    let support = prior.support();
    let u_eps = support.to_real(Point::new(eps));
    let bias = quad::integrate_support_between(
        support,
        -U_LIMIT,
        u_eps,
        |p| score.pi_at(p) * prior.density_at(p),
        QuadOptions::rel(1e-10),
    )?
    .value
        * customers as f64;

    let lineage = SeedLineage::new(seed);
    let law = (0..replicates)
        .into_par_iter()
        .fold(
            || PatternLaw { customers, ..Default::default() },
            |mut law, rep| {
                let mut rng = lineage.child(rep).stream();
                let n = draw::poisson(total, &mut rng);
                let mut columns = Vec::new();
                for _ in 0..n {
                    let v = total * (1.0 - rng.random::<f64>());
                    let p = table.invert(v);
                    let col: Vec<u64> = (0..customers).map(|_| score.sample_at(p, &mut rng)).collect();
                    if col.iter().any(|&a| a > 0) {
                        columns.push(col);
                    }
                }
                law.samples += 1;
                *law.counts.entry(Pattern::from_columns(customers, columns)).or_insert(0) += 1;
                law
            },
        )
        .reduce(|| PatternLaw { customers, ..Default::default() }, PatternLaw::merge);
    Ok(OracleRun { law, truncation: eps, expected_jumps: total, bias_bound: bias })
}

/// Empirical pattern law of the sequential sampler.
pub fn sequential_pattern_law(buffet: &Buffet, customers: u64, seed: u64, replicates: u64) -> Result<PatternLaw> {
    let lineage = SeedLineage::new(seed);
    (0..replicates)
        .into_par_iter()
        .map(|rep| buffet.simulate(lineage.child(rep).seed(), customers).map(|st| st.pattern()))
        .try_fold(
            || PatternLaw { customers, ..Default::default() },
            |mut law, p| {
                let p = p?;
                law.samples += 1;
                *law.counts.entry(p).or_insert(0) += 1;
                Ok::<_, IbpError>(law)
            },
        )
        .try_reduce(|| PatternLaw { customers, ..Default::default() }, |a, b| Ok(a.merge(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tail_mass_and_inversion() {
        let prior = LevyDensity::beta_process(1.0, 1.0).unwrap();
        let t = TailTable::build(&prior, 1e-3).unwrap();
        // ∫_ε^1 s^{-1} ds = −ln ε.
        assert_relative_eq!(t.total(), -(1e-3f64).ln(), max_relative = 1e-10);
        for s in [2e-3f64, 0.1, 0.5, 0.99] {
            let v = -s.ln();
            assert_relative_eq!(t.invert(v).s, s, max_relative = 1e-9);
        }
    }

    #[test]
    fn half_line_tail() {
        let prior = LevyDensity::gamma_process(2.0, 1.0).unwrap();
        let t = TailTable::build(&prior, 0.5).unwrap();
        // θ E1(0.5) with E1(0.5) = 0.5597735947761608.
        assert_relative_eq!(t.total(), 2.0 * 0.5597735947761608, max_relative = 1e-9);
    }

    #[test]
    fn too_small_truncation_is_a_resource_error() {
        let prior = LevyDensity::stable_beta(1.0, 0.9, 1.0).unwrap();
        let e = truncated_crm_oracle(&prior, ScoreModel::Bernoulli, 1, 1e-12, 1, 1).unwrap_err();
        assert!(matches!(e, IbpError::Resource(_)));
    }
}
