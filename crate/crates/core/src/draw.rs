//! Elementary variates on top of `rand_distr`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::quad::Point;

/// Uniform on `(0, 1]`.
pub fn uniform_pos<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

pub fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let d = Poisson::new(lambda).expect("finite positive Poisson mean");
    d.sample(rng) as u64
}

pub fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let d = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
    d.sample(rng)
}

/// Beta variate as a ratio of gammas, returning both `s` and `1 − s` to full
/// relative precision.
pub fn beta_point<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Point {
    let ga = Gamma::new(a, 1.0).expect("positive beta parameter");
    let gb = Gamma::new(b, 1.0).expect("positive beta parameter");
    loop {
        let x: f64 = ga.sample(rng);
        let y: f64 = gb.sample(rng);
        let t = x + y;
        if x > 0.0 && y > 0.0 && t.is_finite() {
            return Point::with_complement(x / t, y / t);
        }
    }
}

/// Dirichlet variate via normalized gammas.
pub fn dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = alpha.iter().map(|&a| gamma(a, 1.0, rng)).collect();
        let t: f64 = g.iter().sum();
        if t > 0.0 && t.is_finite() {
            return g.into_iter().map(|x| x / t).collect();
        }
    }
}

/// Index drawn with probability proportional to `weights`.
pub fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut v = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if v < w {
            return i;
        }
        v -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
