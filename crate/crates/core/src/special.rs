//! Thin numerically careful wrappers over `statrs` special functions.

pub use statrs::function::beta::ln_beta;
pub use statrs::function::gamma::{digamma, gamma, ln_gamma};

/// `ln Γ(x + a) − ln Γ(x)` without the cancellation that the direct
/// difference suffers for large `x`.
pub fn ln_gamma_ratio(x: f64, a: f64) -> f64 {
    if x < 1.0e3 || (x + a) < 1.0e3 {
        return ln_gamma(x + a) - ln_gamma(x);
    }
    let y = x + a;
    let l = (a / x).ln_1p();
    let lead = a * x.ln() + (y - 0.5) * l - a;
    let corr = (1.0 / y - 1.0 / x) / 12.0 - (1.0 / (y * y * y) - 1.0 / (x * x * x)) / 360.0;
    lead + corr
}

/// `Γ(x + a) / Γ(x)` for positive arguments.
pub fn gamma_ratio(x: f64, a: f64) -> f64 {
    ln_gamma_ratio(x, a).exp()
}

/// `B(a, b)` evaluated through logarithms.
pub fn beta_fn(a: f64, b: f64) -> f64 {
    ln_beta(a, b).exp()
}

/// `ln C(a + r − 1, a)` for real `r > 0` and integer `a ≥ 0`.
pub fn ln_nb_coeff(a: u64, r: f64) -> f64 {
    if a == 0 {
        return 0.0;
    }
    let af = a as f64;
    ln_gamma_ratio(r, af) - ln_factorial(a)
}

pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_cdf(shape: f64, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        statrs::function::gamma::gamma_lr(shape, rate * x)
    }
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_cdf(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        statrs::function::beta::beta_reg(a, b, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_ratio_matches_direct_and_asymptotic() {
        for &x in &[0.75, 3.0, 999.0, 1.0e3, 5.0e4, 1.0e12] {
            for &a in &[-0.5, 0.25, 1.0, 2.5] {
                let r = ln_gamma_ratio(x, a);
                if x < 1.0e5 {
                    assert_relative_eq!(r, ln_gamma(x + a) - ln_gamma(x), max_relative = 1e-9, epsilon = 1e-10);
                }
                assert!(r.is_finite());
            }
        }
        // Γ(x+1)/Γ(x) = x exactly, also deep in the asymptotic branch.
        assert_relative_eq!(gamma_ratio(1.0e12, 1.0), 1.0e12, max_relative = 1e-12);
        assert_relative_eq!(gamma_ratio(7.5e6, 1.0), 7.5e6, max_relative = 1e-12);
    }

    #[test]
    fn nb_coefficient() {
        // C(3 + 2 - 1, 3) = C(4, 3) = 4
        assert_relative_eq!(ln_nb_coeff(3, 2.0).exp(), 4.0, max_relative = 1e-12);
        assert_eq!(ln_nb_coeff(0, 0.7), 0.0);
    }
}
