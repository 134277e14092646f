use std::sync::Arc;

use approx::assert_relative_eq;
use ibp_core::buffet::FeatureMatrix;
use ibp_core::multivar::{
    bivariate_bernoulli_model, bivariate_bernoulli_process, mv_jump_sampler, mv_pair_sampler, mv_sample_next_customer,
    MultiBuffetState, MultiProcess, MultiScoreModel, Multinomial, SbdPrior, SbdProcess,
};
use ibp_core::special::ln_gamma;
use ibp_core::{IbpError, ScoreModel, SeedLineage};

#[test]
fn sbd_unit_rate_and_fair_condiment() {
    let p = SbdPrior::new(1.0, 0.0, 1.0, vec![1.0, 1.0]).unwrap();
    assert_relative_eq!(p.new_dish_rate(0), 1.0, max_relative = 1e-15);
    assert_relative_eq!(p.new_dish_rate_quadrature(0).unwrap(), 1.0, max_relative = 1e-9);
    let ps = p.pair_sampler(0);
    let mut rng = SeedLineage::new(3).stream();
    let n = 200_000;
    let ones = (0..n).filter(|_| ps.sample(&mut rng).1 == 0).count() as f64;
    let se = (0.25 / n as f64).sqrt();
    assert!((ones / n as f64 - 0.5).abs() < 3.0 * se);
}

#[test]
fn take_probability_example() {
    let p = SbdPrior::new(1.0, 0.0, 1.0, vec![1.0, 1.0]).unwrap();
    let r = p.take_probabilities(&[2, 0], 3).unwrap();
    let take: f64 = r.iter().sum();
    assert_relative_eq!(take, 0.5, max_relative = 1e-15);
    assert_relative_eq!(r[0] / take, 0.75, max_relative = 1e-15);
}

#[test]
fn aggregate_take_matches_univariate() {
    let p = SbdPrior::new(2.0, 0.35, 0.7, vec![0.4, 1.0, 2.5]).unwrap();
    for (counts, m) in [(vec![1, 0, 0], 1u64), (vec![0, 2, 1], 5), (vec![3, 3, 3], 9)] {
        let c: u64 = counts.iter().sum();
        let r: f64 = p.take_probabilities(&counts, m).unwrap().iter().sum();
        assert_relative_eq!(r, (c as f64 - 0.35) / (m as f64 + 0.7), max_relative = 1e-14);
    }
}

#[test]
fn jump_sampler_example() {
    let p = SbdPrior::new(1.0, 0.0, 1.0, vec![1.0, 1.0]).unwrap();
    let j = mv_jump_sampler(&p, &[1, 1], 2).unwrap();
    assert_eq!((j.sum_a, j.sum_b), (2.0, 1.0));
    assert_eq!(j.direction, vec![2.0, 2.0]);
    let n = 1_000_000;
    let mut rng = SeedLineage::new(9).stream();
    let xs: Vec<f64> = (0..n).map(|_| j.sample(&mut rng)[0]).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    assert!((mean - 1.0 / 3.0).abs() < 3.0 * (var / n as f64).sqrt(), "mean {mean}");
}

#[test]
fn single_condiment_is_univariate() {
    let p = SbdPrior::new(1.0, 0.2, 1.0, vec![3.0]).unwrap();
    let j = p.jump_sampler(&[2], 4).unwrap();
    let mut rng = SeedLineage::new(1).stream();
    let v = j.sample(&mut rng);
    assert_eq!(v.len(), 1);
    assert_eq!((j.sum_a, j.sum_b), (1.8, 4.0 + 1.0 + 0.2 - 2.0));
    let (h, x) = p.pair_sampler(3).sample(&mut rng);
    assert_eq!(x, 0);
    assert!(h[0] > 0.0 && h[0] < 1.0);
}

#[test]
fn pair_condiment_probabilities() {
    let p = SbdPrior::new(1.0, 0.5, 0.5, vec![2.0, 1.0]).unwrap();
    let ps = p.pair_sampler(0);
    assert_eq!((ps.sum_a, ps.sum_b), (0.5, 1.0));
    let mut rng = SeedLineage::new(5).stream();
    let n = 300_000;
    let first = (0..n).filter(|_| ps.sample(&mut rng).1 == 0).count() as f64 / n as f64;
    let se = (2.0 / 9.0 / n as f64).sqrt();
    assert!((first - 2.0 / 3.0).abs() < 3.0 * se, "{first}");
}

#[test]
fn tilted_parameters() {
    let p = SbdPrior::new(1.5, 0.3, 0.8, vec![1.0, 2.0]).unwrap();
    let t = p.tilted(7);
    assert_eq!(t.alpha(), 0.3);
    assert_eq!(t.beta() + t.alpha(), 7.0 + 0.8 + 0.3);
    assert_eq!(t.gamma(), p.gamma());
    assert_eq!(t.theta(), 1.5);
    assert_relative_eq!(t.new_dish_rate(0), p.new_dish_rate(7), max_relative = 1e-14);
}

#[test]
fn rate_formula() {
    let p = SbdPrior::new(2.0, 0.4, 1.5, vec![1.0, 1.0]).unwrap();
    for m in [0u64, 2, 30] {
        let x = m as f64 + 1.5;
        let want = 2.0 * (ln_gamma(0.6) + ln_gamma(x + 0.4) - ln_gamma(x + 1.0)).exp();
        assert_relative_eq!(p.new_dish_rate(m), want, max_relative = 1e-12);
    }
}

#[test]
fn bad_priors_rejected() {
    assert!(SbdPrior::new(1.0, 1.0, 1.0, vec![1.0]).is_err());
    assert!(SbdPrior::new(1.0, 0.5, -0.6, vec![1.0]).is_err());
    assert!(SbdPrior::new(1.0, 0.5, 1.0, vec![]).is_err());
    assert!(SbdPrior::new(1.0, 0.5, 1.0, vec![1.0, 0.0]).is_err());
}

#[test]
fn multinomial_h_factor_reduces_to_bernoulli() {
    let m = Multinomial { q: 1 };
    for s in [0.01, 0.4, 0.93] {
        assert_relative_eq!(
            m.log_h_factor(&[1], &[s]),
            ScoreModel::Bernoulli.log_h_factor(1, s).unwrap(),
            max_relative = 1e-14
        );
        assert_eq!(m.log_h_factor(&[0], &[s]), 0.0);
    }
}

#[test]
fn bivariate_examples() {
    assert!(matches!(bivariate_bernoulli_model(0.0, 0.0, 0.0), Err(IbpError::Config(_))));
    assert!(matches!(bivariate_bernoulli_model(0.5, 0.3, 0.2), Err(IbpError::Config(_))));
    let c = bivariate_bernoulli_model(0.25, 0.25, 0.25).unwrap();
    assert_eq!(c.pmf(0, 0), 0.25);
    assert_eq!(c.first_marginal(), 0.5);
    let mut rng = SeedLineage::new(2).stream();
    let n = 120_000;
    let mut tally = [0u64; 3];
    for _ in 0..n {
        match c.sample_nonzero(&mut rng).as_slice() {
            [1, 1] => tally[0] += 1,
            [1, 0] => tally[1] += 1,
            [0, 1] => tally[2] += 1,
            other => panic!("zero or invalid draw {other:?}"),
        }
    }
    let se = (2.0 / 9.0 / n as f64).sqrt();
    for t in tally {
        assert!((t as f64 / n as f64 - 1.0 / 3.0).abs() < 3.0 * se);
    }
}

#[test]
fn general_path_runs_and_is_deterministic() {
    let process = Arc::new(bivariate_bernoulli_process(2.0, 0.5, 0.5, 0.5, 4.0).unwrap());
    let run = |seed| {
        let mut st = MultiBuffetState::new(process.clone(), seed);
        for _ in 0..6 {
            mv_sample_next_customer(&mut st).unwrap();
        }
        st.dishes().to_vec()
    };
    let a = run(11);
    assert_eq!(a, run(11));
    for d in &a {
        assert!(d.scores.iter().all(|(_, v)| v.len() == 2 && v.iter().any(|&x| x > 0)));
    }
    let ps = mv_pair_sampler(&process, 3).unwrap();
    let mut rng = SeedLineage::new(4).stream();
    let (h, x) = ps.sample(&mut rng).unwrap();
    assert_eq!(h.len(), 3);
    assert!(x.iter().any(|&v| v > 0));
    assert_relative_eq!(ps.rate().finite().unwrap(), process.new_dish_rate(3).unwrap().finite().unwrap());
}

#[test]
fn multinomial_matrix_round_trip() {
    let prior = SbdPrior::new(3.0, 0.2, 1.0, vec![1.0, 2.0, 3.0]).unwrap();
    let mut st = MultiBuffetState::new(Arc::new(SbdProcess { prior: prior.clone() }), 8);
    for _ in 0..5 {
        st.step().unwrap();
    }
    let m = FeatureMatrix::from_multi_state(&st, &prior).unwrap();
    assert_eq!(m.q, Some(3));
    let text = serde_json::to_string(&m).unwrap();
    let back: FeatureMatrix = serde_json::from_str(&text).unwrap();
    assert!(back.dishes.iter().all(|d| d.scores.values().all(|&j| (1..=3).contains(&j))));
    let st2 = back.to_multi_state().unwrap();
    assert_eq!(st2.dishes().len(), st.dishes().len());
    let total = |s: &MultiBuffetState| s.dishes().iter().map(|d| d.total()).sum::<u64>();
    assert_eq!(total(&st2), total(&st));
}
