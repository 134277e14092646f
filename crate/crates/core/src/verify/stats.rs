//! Goodness-of-fit statistics used by the suites and the acceptance tests.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Single-test significance level.
pub const SIGNIFICANCE: f64 = 0.001;

/// Per-test threshold for `n` tests so that a suite fails by chance with
/// probability below 1%.
pub fn bonferroni(n: usize) -> f64 {
    SIGNIFICANCE.min(0.01 / n.max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

fn chi_square_p(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64).map(|d| d.sf(statistic)).unwrap_or(f64::NAN)
}

/// Merge adjacent cells left to right until each merged cell has expected
/// count at least 5; a short last run joins its predecessor.
fn merge_bins(expected: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<std::ops::Range<usize>> = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for (i, e) in expected.iter().enumerate() {
        acc += e;
        if acc >= 5.0 {
            out.push(start..i + 1);
            start = i + 1;
            acc = 0.0;
        }
    }
    if start < expected.len() {
        match out.last_mut() {
            Some(last) => last.end = expected.len(),
            None => out.push(0..expected.len()),
        }
    }
    out
}

/// Pearson χ² of `observed` counts against cell probabilities `probs`. Mass
/// missing from `probs` forms a tail cell holding every observation beyond
/// the last listed cell.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> ChiSquare {
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let k = probs.len();
    let mut obs: Vec<f64> = (0..k).map(|i| observed.get(i).copied().unwrap_or(0) as f64).collect();
    let mut exp: Vec<f64> = probs.iter().map(|p| p * nf).collect();
    let tail_p = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    let tail_obs: u64 = observed.iter().skip(k).sum();
    if tail_p * nf > 1e-9 || tail_obs > 0 {
        obs.push(tail_obs as f64);
        exp.push(tail_p * nf);
    }
    let bins = merge_bins(&exp);
    let mut stat = 0.0;
    for r in &bins {
        let o: f64 = obs[r.clone()].iter().sum();
        let e: f64 = exp[r.clone()].iter().sum();
        if e > 0.0 {
            stat += (o - e) * (o - e) / e;
        } else if o > 0.0 {
            stat = f64::INFINITY;
        }
    }
    let dof = bins.len().saturating_sub(1);
    ChiSquare { statistic: stat, dof, p_value: chi_square_p(stat, dof), bins: bins.len() }
}

/// χ² test that two count vectors come from the same distribution.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> ChiSquare {
    let k = a.len().max(b.len());
    let get = |v: &[u64], i: usize| v.get(i).copied().unwrap_or(0) as f64;
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let n = na + nb;
    let pooled: Vec<f64> = (0..k).map(|i| get(a, i) + get(b, i)).collect();
    // Merge on the smaller sample's expected counts.
    let scale = na.min(nb) / n;
    let bins = merge_bins(&pooled.iter().map(|x| x * scale).collect::<Vec<_>>());
    let mut stat = 0.0;
    for r in &bins {
        let oa: f64 = r.clone().map(|i| get(a, i)).sum();
        let ob: f64 = r.clone().map(|i| get(b, i)).sum();
        let t = oa + ob;
        for (o, nn) in [(oa, na), (ob, nb)] {
            let e = t * nn / n;
            if e > 0.0 {
                stat += (o - e) * (o - e) / e;
            }
        }
    }
    let dof = bins.len().saturating_sub(1);
    ChiSquare { statistic: stat, dof, p_value: chi_square_p(stat, dof), bins: bins.len() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ks {
    pub statistic: f64,
    pub effective_n: f64,
    pub p_value: f64,
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=8).map(|j| (-((2 * j - 1) as f64).powi(2) * c).exp()).sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        let s: f64 = (1..=100)
            .map(|j| {
                let jf = j as f64;
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * jf * jf * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let sq = ne.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Ks {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, v) in x.iter().enumerate() {
        let f = cdf(*v);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ks { statistic: d, effective_n: n, p_value: ks_p(d, n) }
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Ks {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    Ks { statistic: d, effective_n: ne, p_value: ks_p(d, ne) }
}

/// Sample mean and standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Largest value with its own histogram cell; larger values share the last.
pub const HISTOGRAM_CAP: u64 = 1 << 20;

/// Count occurrences of each value into a histogram. Values of at least
/// [`HISTOGRAM_CAP`] are counted in cell `HISTOGRAM_CAP`.
pub fn histogram(values: impl IntoIterator<Item = u64>) -> Vec<u64> {
    let mut h = Vec::new();
    for v in values {
        let v = v.min(HISTOGRAM_CAP) as usize;
        if v >= h.len() {
            h.resize(v + 1, 0);
        }
        h[v] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kolmogorov_branches_agree() {
        // Both series are valid near the switch point.
        let a = kolmogorov_sf(1.18 - 1e-12);
        let b = kolmogorov_sf(1.18 + 1e-12);
        assert_relative_eq!(a, b, max_relative = 1e-8);
        assert_relative_eq!(kolmogorov_sf(1.3580986), 0.05, max_relative = 1e-4);
    }

    #[test]
    fn chi_square_exact_fit() {
        let c = chi_square_gof(&[25, 25, 25, 25], &[0.25; 4]);
        assert_eq!(c.statistic, 0.0);
        assert_eq!(c.dof, 3);
        assert_relative_eq!(c.p_value, 1.0);
    }

    #[test]
    fn merging_respects_minimum_expectation() {
        let bins = merge_bins(&[1.0, 1.0, 4.0, 10.0, 2.0]);
        assert_eq!(bins, vec![0..3, 3..5]);
    }

    #[test]
    fn bonferroni_threshold() {
        assert_eq!(bonferroni(5), 0.001);
        assert_eq!(bonferroni(20), 0.0005);
    }
}
