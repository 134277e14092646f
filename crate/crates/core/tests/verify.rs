use ibp_core::buffet::{Buffet, Pattern};
use ibp_core::levy::exponent_psi;
use ibp_core::verify::{run_suite, truncated_crm_oracle, Suite};
use ibp_core::{IbpError, LevyDensity, ScoreModel};

fn harmonic(n: u64) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}

fn mean_dishes(law: &ibp_core::verify::PatternLaw) -> (f64, f64) {
    let n = law.samples as f64;
    let m1 = law.counts.iter().map(|(p, c)| p.num_dishes() as f64 * *c as f64).sum::<f64>() / n;
    let m2 = law.counts.iter().map(|(p, c)| (p.num_dishes() as f64).powi(2) * *c as f64).sum::<f64>() / n;
    (m1, ((m2 - m1 * m1) / n).sqrt())
}

#[test]
fn oracle_mean_dish_count() {
    let prior = LevyDensity::beta_process(1.0, 1.0).unwrap();
    let run = truncated_crm_oracle(&prior, ScoreModel::Bernoulli, 3, 1e-4, 17, 100_000).unwrap();
    let (mean, se) = mean_dishes(&run.law);
    assert!(run.bias_bound > 0.0 && run.bias_bound < 4e-4);
    assert!((mean - harmonic(3)).abs() < 3.0 * se + run.bias_bound, "mean {mean}");
}

#[test]
fn oracle_matches_sequential_empty_probability() {
    let prior = LevyDensity::beta_process(1.0, 1.0).unwrap();
    let n = 100_000;
    let run = truncated_crm_oracle(&prior, ScoreModel::Bernoulli, 1, 1e-5, 5, n).unwrap();
    let p0 = run.law.frequency(&Pattern::from_columns(1, Vec::<Vec<u64>>::new()));
    let want = (-exponent_psi(&prior, ScoreModel::Bernoulli, 1).unwrap()).exp();
    assert!((p0 - want).abs() < 3.0 * (want * (1.0 - want) / n as f64).sqrt(), "{p0} vs {want}");
}

#[test]
fn coarse_truncation_undercounts_within_bound() {
    let prior = LevyDensity::beta_process(1.0, 1.0).unwrap();
    let run = truncated_crm_oracle(&prior, ScoreModel::Bernoulli, 2, 0.5, 6, 50_000).unwrap();
    let (mean, se) = mean_dishes(&run.law);
    let exact = harmonic(2);
    assert!(mean < exact);
    assert!(exact - mean < run.bias_bound + 3.0 * se);
    // Σ over two customers of ∫₀^½ s · s^{-1} ds.
    assert!((run.bias_bound - 1.0).abs() < 1e-9);
}

#[test]
fn oracle_rejects_intractable_truncation() {
    let prior = LevyDensity::stable_positive(0.8).unwrap();
    let err = truncated_crm_oracle(&prior, ScoreModel::poisson(1.0).unwrap(), 1, 1e-20, 1, 1).unwrap_err();
    assert!(matches!(err, IbpError::Resource(_)));
}

#[test]
fn sequential_and_oracle_agree_on_small_patterns() {
    let prior = LevyDensity::beta_process(1.0, 1.0).unwrap();
    let oracle = truncated_crm_oracle(&prior, ScoreModel::Bernoulli, 2, 1e-5, 1, 50_000).unwrap();
    let buffet = Buffet::new(prior, ScoreModel::Bernoulli).unwrap();
    let seq = ibp_core::verify::oracle::sequential_pattern_law(&buffet, 2, 2, 50_000).unwrap();
    assert!(oracle.law.total_variation(&seq, |p| p.num_dishes() <= 3) < 0.015);
}

#[test]
fn suites_pass_and_are_reproducible() {
    for suite in [Suite::GammaPoissonTotals, Suite::LevyClosedForms, Suite::Explosivity] {
        let a = run_suite(suite, 42, 100_000).unwrap();
        assert!(a.pass, "{}", a.table());
        let b = run_suite(suite, 42, 100_000).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

#[test]
fn explosivity_suite_contents() {
    let r = run_suite(Suite::Explosivity, 1, 1).unwrap();
    let finite = r.checks.iter().find(|c| c.name.contains("β = 2")).unwrap();
    assert!(finite.pass);
    assert!(r.checks.iter().any(|c| c.name.contains("beta:theta=2,beta=0.5") && c.name.contains("true")));
}

#[test]
fn unknown_suite() {
    assert!(matches!("levy".parse::<Suite>(), Err(IbpError::UnknownSuite(_))));
}
