//! Individual checks. Each returns records; p-value thresholds are assigned
//! when a report is assembled.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::buffet::pair::{logarithmic_pmf, sample_logarithmic, sample_sibuya, sibuya_pmf};
use crate::buffet::{Buffet, PairSampler, Pattern};
use crate::error::{IbpError, Result};
use crate::levy::{self, LevyDensity, TiltedLevy};
use crate::multivar::{MultiBuffetState, SbdPrior, SbdProcess};
use crate::posterior::{self, Explosivity, Method};
use crate::rng::SeedLineage;
use crate::scores::ScoreModel;
use crate::special::{beta_cdf, ln_factorial, ln_gamma};
use crate::verify::oracle::{sequential_pattern_law, truncated_crm_oracle};
use crate::verify::stats::{self, ChiSquare, Ks};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Passes when the p-value is at least the threshold.
    PValue,
    /// Passes when `|got − want| / |want|` is at most the threshold.
    RelError,
    /// Passes when `|got − want|` is at most the threshold.
    AbsError,
    /// Passes when `|z|` is at most the threshold.
    Sigma,
    /// Passes when the asserted property holds.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub measure: Measure,
    /// Test statistic, or the computed value for error checks.
    pub statistic: f64,
    /// p-value, error, or `|z|`.
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    fn base(name: impl Into<String>, measure: Measure, statistic: f64, value: f64, threshold: f64, pass: bool) -> Self {
        CheckRecord {
            name: name.into(),
            measure,
            statistic,
            value,
            threshold,
            pass,
            seed: None,
            sample_size: None,
            note: None,
        }
    }

    pub fn p_value(name: impl Into<String>, statistic: f64, p: f64, n: u64, seed: u64) -> Self {
        let mut r = Self::base(name, Measure::PValue, statistic, p, stats::SIGNIFICANCE, p >= stats::SIGNIFICANCE);
        r.seed = Some(seed);
        r.sample_size = Some(n);
        r
    }

    pub fn chi_square(name: impl Into<String>, c: &ChiSquare, n: u64, seed: u64) -> Self {
        let mut r = Self::p_value(name, c.statistic, c.p_value, n, seed);
        r.note = Some(format!("{} bins, {} dof", c.bins, c.dof));
        r
    }

    pub fn ks(name: impl Into<String>, k: &Ks, n: u64, seed: u64) -> Self {
        Self::p_value(name, k.statistic, k.p_value, n, seed)
    }

    pub fn rel_error(name: impl Into<String>, got: f64, want: f64, tol: f64) -> Self {
        let e = if got == want { 0.0 } else { ((got - want) / want).abs() };
        let mut r = Self::base(name, Measure::RelError, got, e, tol, e <= tol);
        r.note = Some(format!("reference {want:e}"));
        r
    }

    pub fn abs_error(name: impl Into<String>, got: f64, want: f64, tol: f64) -> Self {
        let e = (got - want).abs();
        let mut r = Self::base(name, Measure::AbsError, got, e, tol, e <= tol);
        r.note = Some(format!("reference {want:e}"));
        r
    }

    /// `|est − want| / se ≤ 3`.
    pub fn sigma(name: impl Into<String>, est: f64, want: f64, se: f64, n: u64, seed: u64) -> Self {
        let z = if se > 0.0 { ((est - want) / se).abs() } else if est == want { 0.0 } else { f64::INFINITY };
        let mut r = Self::base(name, Measure::Sigma, est, z, 3.0, z <= 3.0);
        r.seed = Some(seed);
        r.sample_size = Some(n);
        r.note = Some(format!("reference {want:e}, se {se:e}"));
        r
    }

    pub fn exact(name: impl Into<String>, ok: bool, note: impl Into<String>) -> Self {
        let mut r = Self::base(name, Measure::Exact, f64::from(u8::from(ok)), f64::from(u8::from(ok)), 1.0, ok);
        r.note = Some(note.into());
        r
    }

    /// A check that could not run.
    pub fn failed(name: impl Into<String>, err: &IbpError) -> Self {
        let mut r = Self::base(name, Measure::Exact, f64::NAN, f64::NAN, 1.0, false);
        r.note = Some(err.to_string());
        r
    }
}

/// Apply the Bonferroni threshold to every p-value record.
pub fn finalize(records: &mut [CheckRecord]) {
    let n = records.iter().filter(|r| r.measure == Measure::PValue).count();
    let t = stats::bonferroni(n);
    for r in records.iter_mut().filter(|r| r.measure == Measure::PValue) {
        r.threshold = t;
        r.pass = r.value >= t;
    }
}

fn poisson_pmf(lambda: f64, k: u64) -> f64 {
    (k as f64 * lambda.ln() - lambda - ln_factorial(k)).exp()
}

fn probs_until(mut f: impl FnMut(u64) -> f64, from: u64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut acc = 0.0;
    let mut k = from;
    while acc < 1.0 - 1e-12 && k < 100_000 {
        let p = f(k);
        out.push(p);
        acc += p;
        k += 1;
        if p < 1e-300 && k > from + 10 {
            break;
        }
    }
    out
}

/// `P(k) = Γ(k+θ)/(k! Γ(θ)) q^k (1−q)^θ`.
fn nb_pmf(theta: f64, q: f64, k: u64) -> f64 {
    let kf = k as f64;
    (ln_gamma(kf + theta) - ln_gamma(theta) - ln_factorial(k) + kf * q.ln() + theta * (-q).ln_1p()).exp()
}

fn harmonic(n: u64) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}

/// Bernoulli scores under `BetaProcess(θ=1, β=1)`: customer `i` samples
/// Poisson(1/i) new dishes, and ten customers sample Poisson(H₁₀) dishes.
pub fn ibp_new_dish_counts(seed: u64, runs: u64) -> Result<Vec<CheckRecord>> {
    let buffet = Buffet::new(LevyDensity::beta_process(1.0, 1.0)?, ScoreModel::Bernoulli)?;
    let lineage = SeedLineage::new(seed);
    let watch = [1u64, 2, 5, 10];
    let rows = (0..runs)
        .into_par_iter()
        .map(|rep| {
            let mut st = buffet.start(lineage.child(rep).seed());
            let mut counts = [0u64; 4];
            for i in 1..=10u64 {
                let d = st.step()?;
                if let Some(k) = watch.iter().position(|&w| w == i) {
                    counts[k] = d.new_dishes;
                }
            }
            Ok((counts, st.num_dishes() as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (k, &i) in watch.iter().enumerate() {
        let lambda = 1.0 / i as f64;
        let h = stats::histogram(rows.iter().map(|r| r.0[k]));
        let c = stats::chi_square_gof(&h, &probs_until(|j| poisson_pmf(lambda, j), 0));
        out.push(CheckRecord::chi_square(format!("customer {i} new dishes ~ Poisson(1/{i})"), &c, runs, seed));
    }
    let h10 = harmonic(10);
    let h = stats::histogram(rows.iter().map(|r| r.1));
    let c = stats::chi_square_gof(&h, &probs_until(|j| poisson_pmf(h10, j), 0));
    out.push(CheckRecord::chi_square(format!("dishes after 10 customers ~ Poisson({h10:.4})"), &c, runs, seed));
    Ok(out)
}

/// Named prior/score pairs with closed-form exponents.
pub fn named_pairs() -> Result<Vec<(LevyDensity, ScoreModel)>> {
    let bern = ScoreModel::Bernoulli;
    let nb = ScoreModel::negative_binomial(1.5)?;
    let nb1 = ScoreModel::negative_binomial(1.0)?;
    let pois = ScoreModel::poisson(0.7)?;
    Ok(vec![
        (LevyDensity::beta_process(1.5, 2.0)?, bern),
        (LevyDensity::beta_process(1.0, 0.5)?, bern),
        (LevyDensity::beta_process(1.5, 2.0)?, nb),
        (LevyDensity::stable_beta(1.0, 0.4, 1.0)?, bern),
        (LevyDensity::stable_beta(2.0, 0.7, -0.3)?, bern),
        (LevyDensity::stable_beta(1.0, 0.4, 1.0)?, nb1),
        (LevyDensity::gamma_process(2.0, 1.0)?, pois),
        (LevyDensity::stable_positive(0.5)?, pois),
        (LevyDensity::generalized_gamma(0.3, 2.0)?, pois),
    ])
}

/// `Ψ(f_M)` closed form against quadrature, `M = 1..=20`.
pub fn closed_form_exponents() -> Result<Vec<CheckRecord>> {
    named_pairs()?
        .into_par_iter()
        .map(|(prior, score)| {
            let mut worst = (0.0f64, 0u64, 0.0, 0.0);
            for m in 1..=20u64 {
                let closed = levy::exponent_psi_closed(&prior, score, m)
                    .ok_or_else(|| IbpError::Config(format!("no closed form for {prior} with {score}")))?;
                let quad = levy::exponent_psi_quadrature(&prior, score, m)?;
                let e = ((closed - quad) / quad).abs();
                if e >= worst.0 {
                    worst = (e, m, closed, quad);
                }
            }
            let mut r = CheckRecord::rel_error(format!("Ψ closed vs quadrature, {prior} / {score}"), worst.2, worst.3, 1e-6);
            r.note = Some(format!("worst at M = {}, reference {:e}", worst.1, worst.3));
            Ok(r)
        })
        .collect()
}

/// Gamma process `θ = 2, β = 1` with Poisson(b = 1) scores: the fresh part of
/// customer `M+1` is NB with success parameter `b/(1+b(M+1))`.
pub fn gamma_poisson_totals(seed: u64, draws: u64) -> Result<Vec<CheckRecord>> {
    let (theta, b) = (2.0, 1.0);
    let buffet = Buffet::new(LevyDensity::gamma_process(theta, 1.0)?, ScoreModel::poisson(b)?)?;
    let mut out = Vec::new();
    for (k, m) in [0u64, 1, 3].into_iter().enumerate() {
        let lineage = SeedLineage::new(seed).child(k as u64);
        let totals = (0..draws)
            .into_par_iter()
            .map(|rep| {
                let mut st = buffet.start(lineage.child(rep).seed());
                for _ in 0..m {
                    st.step()?;
                }
                Ok(st.step()?.new_score)
            })
            .collect::<Result<Vec<_>>>()?;
        let q = b / (1.0 + b * (m + 1) as f64);
        let c = stats::chi_square_gof(&stats::histogram(totals), &probs_until(|j| nb_pmf(theta, q, j), 0));
        let name = if m == 0 {
            "Z₁(Ω) ~ NB(2, 1/2)".to_string()
        } else {
            format!("fresh total of customer {} ~ NB(2, {q:.4})", m + 1)
        };
        out.push(CheckRecord::chi_square(name, &c, draws, seed));
    }
    Ok(out)
}

fn empirical_pmf_check(name: String, xs: Vec<u64>, pmf: impl Fn(u64) -> f64, seed: u64) -> CheckRecord {
    let n = xs.len() as u64;
    let c = stats::chi_square_gof(&stats::histogram(xs), &probs_until(pmf, 0));
    CheckRecord::chi_square(name, &c, n, seed)
}

/// Sibuya and logarithmic laws, and the score marginals of the pair samplers.
pub fn pair_pmfs(seed: u64, draws: u64) -> Result<Vec<CheckRecord>> {
    let mut out = vec![
        CheckRecord::abs_error("Sibuya(0.5) P(X=1)", sibuya_pmf(0.5, 1), 0.5, 1e-15),
        CheckRecord::abs_error("Sibuya(0.5) P(X=2)", sibuya_pmf(0.5, 2), 0.125, 1e-15),
        CheckRecord::abs_error("Logarithmic(1/2) P(X=1)", logarithmic_pmf(0.5, 1), 1.0 / (2.0 * std::f64::consts::LN_2), 1e-12),
    ];
    let lineage = SeedLineage::new(seed);
    let sib = (0..draws)
        .into_par_iter()
        .map(|i| sample_sibuya(0.5, &mut lineage.path(&[0, i]).stream()))
        .collect::<Result<Vec<_>>>()?;
    out.push(empirical_pmf_check("Sibuya(0.5) draws".into(), sib, |j| sibuya_pmf(0.5, j), seed));
    let lg = (0..draws)
        .into_par_iter()
        .map(|i| sample_logarithmic(0.5, &mut lineage.path(&[1, i]).stream()))
        .collect::<Result<Vec<_>>>()?;
    out.push(empirical_pmf_check("Logarithmic(1/2) draws".into(), lg, |j| logarithmic_pmf(0.5, j), seed));

    let cases: Vec<(LevyDensity, ScoreModel, u64)> = vec![
        (LevyDensity::gamma_process(1.0, 1.0)?, ScoreModel::poisson(1.0)?, 0),
        (LevyDensity::stable_positive(0.5)?, ScoreModel::poisson(1.0)?, 1),
        (LevyDensity::generalized_gamma(0.3, 2.0)?, ScoreModel::poisson(0.7)?, 2),
        (LevyDensity::beta_process(1.0, 2.0)?, ScoreModel::negative_binomial(2.0)?, 1),
        (LevyDensity::stable_beta(1.0, 0.3, 2.0)?, ScoreModel::negative_binomial(1.5)?, 0),
    ];
    for (k, (prior, score, m)) in cases.into_iter().enumerate() {
        let ps = PairSampler::new(&TiltedLevy::new(prior.clone(), score, m)?)?;
        let xs = (0..draws)
            .into_par_iter()
            .map(|i| ps.sample_pair(&mut lineage.path(&[2, k as u64, i]).stream()).map(|p| p.1))
            .collect::<Result<Vec<_>>>()?;
        let name = format!("pair X marginal, {prior} / {score}, M = {m}");
        out.push(empirical_pmf_check(name, xs, |j| ps.x_pmf(j).unwrap_or(f64::NAN), seed));
    }

    let (alpha, beta, m) = (0.4, 1.0, 2u64);
    let ps = PairSampler::new(&TiltedLevy::new(LevyDensity::stable_beta(1.0, alpha, beta)?, ScoreModel::Bernoulli, m)?)?;
    let hs = (0..draws)
        .into_par_iter()
        .map(|i| ps.sample_pair(&mut lineage.path(&[3, i]).stream()).map(|p| p.0))
        .collect::<Result<Vec<_>>>()?;
    let (a, b) = (1.0 - alpha, m as f64 + beta + alpha);
    let ks = stats::ks_one_sample(&hs, |s| beta_cdf(a, b, s));
    out.push(CheckRecord::ks(format!("pair H ~ Beta({a}, {b}), stable-beta / Bernoulli"), &ks, draws, seed));
    Ok(out)
}

/// Forward simulation of `StableBeta(θ=5, α=0.4, β=1)` with Bernoulli scores:
/// customer 4 takes a dish of popularity `c` with probability `(c−α)/(3+β)`.
pub fn take_probability(seed: u64, target: u64) -> Result<Vec<CheckRecord>> {
    let (theta, alpha, beta) = (5.0, 0.4, 1.0);
    let buffet = Buffet::new(LevyDensity::stable_beta(theta, alpha, beta)?, ScoreModel::Bernoulli)?;
    let lineage = SeedLineage::new(seed);
    const BATCH: u64 = 20_000;
    let mut tally = [[0u64; 2]; 3];
    let mut batch = 0u64;
    while tally.iter().any(|t| t[0] + t[1] < target) {
        if batch > 10_000 {
            return Err(IbpError::Resource("take-probability simulation did not reach its target".into()));
        }
        let part = (batch * BATCH..(batch + 1) * BATCH)
            .into_par_iter()
            .map(|rep| {
                let mut st = buffet.start(lineage.child(rep).seed());
                for _ in 0..3 {
                    st.step()?;
                }
                let before: Vec<u64> = st.dishes().iter().map(|d| d.count).collect();
                st.step()?;
                let mut t = [[0u64; 2]; 3];
                for (d, &c) in st.dishes().iter().zip(&before) {
                    let taken = d.score_of(4) > 0;
                    t[c as usize - 1][usize::from(taken)] += 1;
                }
                Ok::<_, IbpError>(t)
            })
            .try_reduce(|| [[0u64; 2]; 3], |mut a, b| {
                for c in 0..3 {
                    a[c][0] += b[c][0];
                    a[c][1] += b[c][1];
                }
                Ok(a)
            })?;
        for c in 0..3 {
            tally[c][0] += part[c][0];
            tally[c][1] += part[c][1];
        }
        batch += 1;
    }
    Ok((0..3)
        .map(|k| {
            let c = (k + 1) as f64;
            let n = tally[k][0] + tally[k][1];
            let r = (c - alpha) / (3.0 + beta);
            let est = tally[k][1] as f64 / n as f64;
            let se = (r * (1.0 - r) / n as f64).sqrt();
            CheckRecord::sigma(format!("take frequency at M = 3, c = {}", k + 1), est, r, se, n, seed)
        })
        .collect())
}

/// Every pattern of `customers` rows with at most `max_dishes` columns and
/// entries at most `max_score`.
pub fn small_patterns(customers: u64, max_dishes: usize, max_score: u64) -> Vec<Pattern> {
    let mut cols: Vec<Vec<u64>> = vec![vec![]];
    for _ in 0..customers {
        cols = cols
            .into_iter()
            .flat_map(|c| {
                (0..=max_score).map(move |v| {
                    let mut c = c.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }
    cols.retain(|c| c.iter().any(|&v| v > 0));
    let mut out = vec![Pattern::from_columns(customers, Vec::<Vec<u64>>::new())];
    let mut level: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..max_dishes {
        level = level
            .into_iter()
            .flat_map(|idx| {
                let start = idx.last().copied().unwrap_or(0);
                (start..cols.len()).map(move |j| {
                    let mut v = idx.clone();
                    v.push(j);
                    v
                })
            })
            .collect();
        out.extend(level.iter().map(|idx| Pattern::from_columns(customers, idx.iter().map(|&j| cols[j].clone()))));
    }
    out
}

/// `P(pattern) = exp(log-marginal) / (labelings of identical columns)`.
pub fn pattern_probability(prior: &LevyDensity, score: ScoreModel, pattern: &Pattern, method: Method) -> Result<f64> {
    let dishes: Vec<Vec<u64>> =
        pattern.columns().iter().map(|c| c.iter().copied().filter(|&v| v > 0).collect()).collect();
    let lm = posterior::log_marginal_of(prior, score, pattern.customers(), &dishes, method)?;
    Ok((lm - pattern.ln_multiplicity()).exp())
}

/// Exact pattern probabilities against sequential-sampler frequencies, two
/// customers, at most two dishes, scores at most two.
pub fn marginal_coherence(seed: u64, sims: u64) -> Result<Vec<CheckRecord>> {
    let models = [
        (LevyDensity::beta_process(1.0, 1.0)?, ScoreModel::Bernoulli),
        (LevyDensity::gamma_process(1.0, 1.0)?, ScoreModel::poisson(1.0)?),
    ];
    let mut out = Vec::new();
    for (k, (prior, score)) in models.into_iter().enumerate() {
        let buffet = Buffet::new(prior.clone(), score)?;
        let s = SeedLineage::new(seed).child(k as u64).seed();
        let law = sequential_pattern_law(&buffet, 2, s, sims)?;
        for p in small_patterns(2, 2, score.max_score().min(2)) {
            let want = pattern_probability(&prior, score, &p, Method::Auto)?;
            let est = law.frequency(&p);
            let se = (want * (1.0 - want) / sims as f64).sqrt();
            out.push(CheckRecord::sigma(format!("{prior} / {score}: pattern {:?}", p.columns()), est, want, se, sims, seed));
        }
    }
    Ok(out)
}

/// Log-marginal closed form against quadrature on simulated matrices.
pub fn log_marginal_paths(seed: u64) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for (k, (prior, score)) in named_pairs()?.into_iter().enumerate() {
        let st = Buffet::new(prior.clone(), score)?.simulate(SeedLineage::new(seed).child(k as u64).seed(), 4)?;
        let closed = posterior::log_marginal_with(&st, Method::Closed)?;
        let quad = posterior::log_marginal_with(&st, Method::Quadrature)?;
        out.push(CheckRecord::rel_error(format!("log-marginal closed vs quadrature, {prior} / {score}"), closed, quad, 1e-6));
    }
    let prior = LevyDensity::gamma_process(1.0, 1.0)?;
    let lm = posterior::log_marginal_of(&prior, ScoreModel::poisson(1.0)?, 1, &[vec![2]], Method::Quadrature)?;
    out.push(CheckRecord::rel_error("Gamma–Poisson worked example", lm, -(2.0f64).ln() + (0.125f64).ln(), 1e-9));
    Ok(out)
}

/// `NB(r) + BetaProcess`: infinite expected total score iff `β ≤ 1`.
pub fn explosivity() -> Result<Vec<CheckRecord>> {
    let (theta, r) = (2.0, 1.5);
    let score = ScoreModel::negative_binomial(r)?;
    let mut out = Vec::new();
    for beta in [0.5, 1.0, 1.5, 2.0, 3.5] {
        let prior = LevyDensity::beta_process(theta, beta)?;
        let e = posterior::explosivity_check(&prior, score)?;
        let flagged = e.is_infinite();
        out.push(CheckRecord::exact(
            format!("{prior} / {score} flagged infinite: {flagged}"),
            flagged == (beta <= 1.0),
            "infinite iff β ≤ 1",
        ));
        if let Explosivity::Finite { expected_total_score } = e {
            let q = posterior::expected_total_score_quadrature(&prior, score)?
                .finite()
                .ok_or_else(|| IbpError::Quadrature("finite branch diverged under quadrature".into()))?;
            out.push(CheckRecord::rel_error(format!("E[Z(Ω)] = θr/(β−1), β = {beta}"), expected_total_score, q, 1e-9));
            out.push(CheckRecord::rel_error(
                format!("E[Z(Ω)] formula, β = {beta}"),
                expected_total_score,
                theta * r / (beta - 1.0),
                1e-12,
            ));
        }
    }
    let stable = posterior::explosivity_check(&LevyDensity::stable_positive(0.5)?, ScoreModel::poisson(1.0)?)?;
    out.push(CheckRecord::exact("stable / Poisson flagged infinite", stable.is_infinite(), "no tempering"));
    Ok(out)
}

/// Truncated-measure oracle against the sequential sampler, Bernoulli scores
/// under `BetaProcess(1, 1)`, two customers, patterns of at most three dishes.
pub fn oracle_equivalence(seed: u64, samples: u64, eps: f64) -> Result<Vec<CheckRecord>> {
    let prior = LevyDensity::beta_process(1.0, 1.0)?;
    let score = ScoreModel::Bernoulli;
    let lineage = SeedLineage::new(seed);
    let oracle = truncated_crm_oracle(&prior, score, 2, eps, lineage.child(0).seed(), samples)?;
    let seq = sequential_pattern_law(&Buffet::new(prior, score)?, 2, lineage.child(1).seed(), samples)?;
    let tv = oracle.law.total_variation(&seq, |p| p.num_dishes() <= 3);
    let mut r = CheckRecord::abs_error("oracle vs sequential, total variation (≤ 3 dishes)", tv, 0.0, 0.01);
    r.seed = Some(seed);
    r.sample_size = Some(samples);
    r.note = Some(format!("ε = {eps:e}, truncation bias bound {:.3e}", oracle.bias_bound));
    let p0 = oracle.law.frequency(&Pattern::from_columns(2, Vec::<Vec<u64>>::new()));
    let want = (-levy::exponent_psi(&LevyDensity::beta_process(1.0, 1.0)?, score, 2)?).exp();
    let se = (want * (1.0 - want) / samples as f64).sqrt();
    Ok(vec![r, CheckRecord::sigma("oracle P(no dishes) = e^{−Ψ(f₂)}", p0, want, se, samples, seed)])
}

/// Stable-beta-Dirichlet multinomial buffet against the univariate
/// stable-beta Bernoulli buffet.
pub fn multivar_collapse(seed: u64, runs: u64) -> Result<Vec<CheckRecord>> {
    let (theta, alpha, beta) = (2.0, 0.3, 1.0);
    let gamma = vec![1.0, 2.0, 0.5];
    let prior = SbdPrior::new(theta, alpha, beta, gamma.clone())?;
    let process: Arc<SbdProcess> = Arc::new(SbdProcess { prior: prior.clone() });
    let uni = Buffet::new(prior.aggregate(), ScoreModel::Bernoulli)?;
    const M: u64 = 4;
    let lineage = SeedLineage::new(seed);

    // (dish count after M+1, popularity histogram after M, take tallies, new-dish condiments)
    type Tally = (u64, BTreeMap<u64, u64>, [[u64; 2]; M as usize], Vec<u64>);
    let multi = (0..runs)
        .into_par_iter()
        .map(|rep| -> Result<Tally> {
            let mut st = MultiBuffetState::new(process.clone(), lineage.path(&[0, rep]).seed());
            for _ in 0..M {
                st.step()?;
            }
            let before: Vec<u64> = st.dishes().iter().map(|d| d.total()).collect();
            let mut pop = BTreeMap::new();
            for &c in &before {
                *pop.entry(c).or_insert(0) += 1;
            }
            st.step()?;
            let mut take = [[0u64; 2]; M as usize];
            for (d, &c) in st.dishes().iter().zip(&before) {
                take[c as usize - 1][usize::from(d.score_of(M + 1).is_some())] += 1;
            }
            let mut cond = vec![0u64; gamma.len()];
            for d in &st.dishes()[before.len()..] {
                let j = d.counts.iter().position(|&x| x > 0).unwrap_or(0);
                cond[j] += 1;
            }
            Ok((st.dishes().len() as u64, pop, take, cond))
        })
        .collect::<Result<Vec<_>>>()?;
    let univ = (0..runs)
        .into_par_iter()
        .map(|rep| -> Result<Tally> {
            let mut st = uni.start(lineage.path(&[1, rep]).seed());
            for _ in 0..M {
                st.step()?;
            }
            let before: Vec<u64> = st.dishes().iter().map(|d| d.count).collect();
            let mut pop = BTreeMap::new();
            for &c in &before {
                *pop.entry(c).or_insert(0) += 1;
            }
            st.step()?;
            let mut take = [[0u64; 2]; M as usize];
            for (d, &c) in st.dishes().iter().zip(&before) {
                take[c as usize - 1][usize::from(d.score_of(M + 1) > 0)] += 1;
            }
            Ok((st.num_dishes() as u64, pop, take, Vec::new()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    let counts = |v: &[Tally]| stats::histogram(v.iter().map(|t| t.0));
    let c = stats::chi_square_homogeneity(&counts(&multi), &counts(&univ));
    out.push(CheckRecord::chi_square(format!("dish count after {} customers, multinomial vs univariate", M + 1), &c, runs, seed));
    let pop = |v: &[Tally]| {
        let mut h = vec![0u64; M as usize + 1];
        for t in v {
            for (&c, &n) in &t.1 {
                h[c as usize] += n;
            }
        }
        h
    };
    let c = stats::chi_square_homogeneity(&pop(&multi), &pop(&univ));
    out.push(CheckRecord::chi_square(format!("dish popularity after {M} customers"), &c, runs, seed));
    for k in 0..M as usize {
        let sum = |v: &[Tally]| v.iter().fold([0u64; 2], |a, t| [a[0] + t.2[k][0], a[1] + t.2[k][1]]);
        let (a, b) = (sum(&multi), sum(&univ));
        let c = stats::chi_square_homogeneity(&a, &b);
        out.push(CheckRecord::chi_square(format!("take frequency at c = {}, multinomial vs univariate", k + 1), &c, a[0] + a[1], seed));
        let n = a[0] + a[1];
        if n > 0 {
            let r: f64 = prior.take_probabilities(&{
                let mut v = vec![0u64; gamma.len()];
                v[0] = k as u64 + 1;
                v
            }, M)?.iter().sum();
            let want = (k as f64 + 1.0 - alpha) / (M as f64 + beta);
            out.push(CheckRecord::rel_error(format!("Σ_j r_j = (c−α)/(M+β), c = {}", k + 1), r, want, 1e-14));
        }
    }
    let mut cond = vec![0u64; gamma.len()];
    for t in &multi {
        for (j, x) in t.3.iter().enumerate() {
            cond[j] += x;
        }
    }
    let gs: f64 = gamma.iter().sum();
    let probs: Vec<f64> = gamma.iter().map(|g| g / gs).collect();
    let c = stats::chi_square_gof(&cond, &probs);
    out.push(CheckRecord::chi_square("new-dish condiment ~ γ/Σγ", &c, cond.iter().sum(), seed));

    let p2 = SbdPrior::new(theta, alpha, beta, vec![1.0, 2.0])?;
    for m in [0u64, 1, 3, 10] {
        let q = p2.new_dish_rate_quadrature(m)?;
        out.push(CheckRecord::rel_error(format!("SBD new-dish rate vs quadrature, M = {m}"), p2.new_dish_rate(m), q, 1e-9));
    }
    for s in [0.05, 0.5, 0.9] {
        let agg = prior.aggregate().eval_density(s)?;
        out.push(CheckRecord::rel_error(
            format!("SBD slice integral at s = {s} equals the stable-beta density"),
            prior.aggregate_density_by_quadrature(s)?,
            agg,
            1e-6,
        ));
    }

    let ps = prior.pair_sampler(2);
    let n = runs.min(100_000);
    let hs: Vec<f64> =
        (0..n).into_par_iter().map(|i| ps.sample(&mut lineage.path(&[2, i]).stream()).0.iter().sum()).collect();
    let ks = stats::ks_one_sample(&hs, |s| beta_cdf(ps.sum_a, ps.sum_b, s));
    out.push(CheckRecord::ks("SBD pair H_· ~ Beta(1−α, M+β+α)", &ks, n, seed));

    let js = prior.jump_sampler(&[1, 1, 0], 2)?;
    let draws: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| js.sample(&mut lineage.path(&[3, i]).stream())).collect();
    let r = prior.take_probabilities(&[1, 1, 0], 2)?;
    for j in 0..gamma.len() {
        let xs: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        let (mean, se) = stats::mean_and_se(&xs);
        out.push(CheckRecord::sigma(format!("SBD jump mean E[J_{}] = r_{}", j + 1, j + 1), mean, r[j], se, n, seed));
    }
    let sums: Vec<f64> = draws.iter().map(|d| d.iter().sum()).collect();
    let dirs: Vec<f64> = draws.iter().zip(&sums).map(|(d, s)| d[0] / s).collect();
    let corr = correlation(&sums, &dirs);
    out.push(CheckRecord::sigma("SBD jump sum and direction uncorrelated", corr, 0.0, 1.0 / (n as f64).sqrt(), n, seed));
    Ok(out)
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, _) = stats::mean_and_se(x);
    let (my, _) = stats::mean_and_se(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// `ρ(s)` recovered from its transform `other` by the inverse change of
/// variables, evaluated numerically rather than by unwrapping.
fn composed_density(other: &LevyDensity, support: crate::quad::Support, s: f64) -> f64 {
    use crate::quad::{Point, Support};
    match support {
        // y = −ln(1 − s), dy/ds = 1/(1 − s)
        Support::UnitInterval => other.density_at(Point::new(-(-s).ln_1p())) / (1.0 - s),
        // u = 1 − e^{−s}, du/ds = e^{−s}
        Support::PositiveHalfLine => {
            let tail = (-s).exp();
            other.density_at(Point::with_complement(-(-s).exp_m1(), tail)) * tail
        }
    }
}

/// Double transform is the identity on grids; the Laplace exponent agrees on
/// both sides of the pair.
pub fn transform_round_trip() -> Result<Vec<CheckRecord>> {
    let priors = vec![
        LevyDensity::beta_process(1.5, 2.0)?,
        LevyDensity::stable_beta(1.0, 0.4, 0.8)?,
        LevyDensity::gamma_process(2.0, 1.0)?,
        LevyDensity::stable_positive(0.5)?,
        LevyDensity::generalized_gamma(0.3, 2.0)?,
    ];
    priors
        .into_par_iter()
        .map(|prior| {
            let mut out = Vec::new();
            let other = prior.transform();
            let grid: Vec<f64> = match prior.support() {
                crate::quad::Support::UnitInterval => (1..200).map(|i| i as f64 / 200.0).chain([1e-8, 1e-4, 0.9999]).collect(),
                crate::quad::Support::PositiveHalfLine => (1..200).map(|i| i as f64 / 20.0).chain([1e-8, 1e-4, 30.0]).collect(),
            };
            let mut worst = (0.0f64, 0.0, 0.0, 0.0);
            for s in grid {
                let (a, b) = (composed_density(&other, prior.support(), s), prior.eval_density(s)?);
                let e = ((a - b) / b).abs();
                if e >= worst.0 {
                    worst = (e, s, a, b);
                }
            }
            let mut r = CheckRecord::rel_error(format!("double transform of {prior}"), worst.2, worst.3, 1e-10);
            r.note = Some(format!("worst at s = {}", worst.1));
            out.push(r);
            for lambda in [1.0, 2.0, 3.0] {
                let closed = prior.laplace_exponent_closed(lambda).ok_or_else(|| IbpError::Config("named prior".into()))?;
                let q = other.laplace_exponent_quadrature(lambda)?;
                out.push(CheckRecord::rel_error(format!("exponent at λ = {lambda} on both sides, {prior}"), q, closed, 1e-8));
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<_>>>>()
        .map(|v| v.into_iter().flatten().collect())
}
