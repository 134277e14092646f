//! Inverse-CDF tables for one-dimensional densities without closed-form
//! samplers. The density is integrated in the compactified coordinate of
//! [`crate::quad`], split into panels carrying Kronrod masses, and inverted
//! through a cubic Hermite CDF inside each panel.

use rand::Rng;

use crate::error::{IbpError, Result};
use crate::quad::{self, gk21, Point, QuadOptions, Support};

const MAX_PANELS: usize = 40_000;
const INITIAL_PANELS: usize = 64;
/// Per-panel CDF accuracy relative to the total mass.
const CDF_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct InverseCdf {
    support: Support,
    /// Panel edges in the compactified coordinate.
    edges: Vec<f64>,
    /// Mapped density at the edges.
    dens: Vec<f64>,
    /// Cumulative mass at the left edge of each panel (length = panels + 1).
    cum: Vec<f64>,
}

impl InverseCdf {
    /// Tabulate `f` (an unnormalized density in the support's natural
    /// coordinate).
    pub fn build<F: Fn(Point) -> f64>(support: Support, f: F) -> Result<Self> {
        let g = |x: f64| quad::mapped(support, &f, x);
        let total = quad::integrate_support(support, &f, QuadOptions::rel(1e-11))?.value;
        if !(total > 0.0 && total.is_finite()) {
            return Err(IbpError::Quadrature(format!("cannot tabulate a density with mass {total}")));
        }
        let mut gm = |x: f64| g(x);
        let mut panels: Vec<(f64, f64, f64)> = Vec::new(); // (a, b, mass)
        let mut stack: Vec<(f64, f64, u32)> = (0..INITIAL_PANELS)
            .rev()
            .map(|i| {
                let a = -1.0 + 2.0 * i as f64 / INITIAL_PANELS as f64;
                let b = -1.0 + 2.0 * (i + 1) as f64 / INITIAL_PANELS as f64;
                (a, b, 0)
            })
            .collect();
        while let Some((a, b, depth)) = stack.pop() {
            let p = gk21(&mut gm, a, b);
            if !p.value.is_finite() {
                return Err(IbpError::Quadrature(format!("density not finite on panel [{a}, {b}]")));
            }
            let mid = 0.5 * (a + b);
            let ok_err = p.err <= CDF_TOL * total * 1e-3;
            let ok_mass = p.value <= total / 1024.0;
            let ok_shape = ok_err && ok_mass && {
                let (ga, gb) = (g(a), g(b));
                let h = b - a;
                let hermite_mid = 0.5 * p.value + h * (ga - gb) / 8.0;
                let left = gk21(&mut gm, a, mid).value;
                (hermite_mid - left).abs() <= CDF_TOL * total
            };
            if ok_shape || depth >= 60 || !(mid > a && mid < b) {
                panels.push((a, b, p.value.max(0.0)));
            } else {
                if panels.len() + stack.len() > MAX_PANELS {
                    return Err(IbpError::Resource("inverse-CDF table exceeded its panel budget".into()));
                }
                stack.push((mid, b, depth + 1));
                stack.push((a, mid, depth + 1));
            }
        }
        let mut edges = Vec::with_capacity(panels.len() + 1);
        let mut cum = Vec::with_capacity(panels.len() + 1);
        let mut acc = 0.0;
        edges.push(panels[0].0);
        cum.push(0.0);
        for &(_, b, m) in &panels {
            acc += m;
            edges.push(b);
            cum.push(acc);
        }
        let dens = edges.iter().map(|&x| g(x)).collect();
        Ok(InverseCdf { support, edges, dens, cum })
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().expect("table has panels")
    }

    pub fn panels(&self) -> usize {
        self.edges.len() - 1
    }

    fn hermite(&self, i: usize, t: f64) -> f64 {
        let h = self.edges[i + 1] - self.edges[i];
        let m = self.cum[i + 1] - self.cum[i];
        let (t2, t3) = (t * t, t * t * t);
        m * (3.0 * t2 - 2.0 * t3) + h * self.dens[i] * (t - 2.0 * t2 + t3) + h * self.dens[i + 1] * (t3 - t2)
    }

    /// Normalized CDF at a support point.
    pub fn cdf(&self, p: Point) -> f64 {
        let x = quad::u_to_x(self.support.to_real(p));
        if x <= self.edges[0] {
            return 0.0;
        }
        let i = self.edges.partition_point(|&e| e <= x).saturating_sub(1);
        if i >= self.panels() {
            return 1.0;
        }
        let t = (x - self.edges[i]) / (self.edges[i + 1] - self.edges[i]);
        ((self.cum[i] + self.hermite(i, t)) / self.total()).clamp(0.0, 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        loop {
            let v = rng.random::<f64>() * self.total();
            let i = self.cum.partition_point(|&c| c <= v).saturating_sub(1).min(self.panels() - 1);
            let target = v - self.cum[i];
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..55 {
                let mid = 0.5 * (lo + hi);
                if self.hermite(i, mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let x = self.edges[i] + 0.5 * (lo + hi) * (self.edges[i + 1] - self.edges[i]);
            let (u, _) = quad::x_to_u(x);
            if !u.is_finite() || u.abs() > quad::U_LIMIT {
                continue;
            }
            let (p, _) = self.support.from_real(u);
            if p.s > 0.0 && p.s.is_finite() && (self.support == Support::PositiveHalfLine || p.sc > 0.0) {
                return p;
            }
        }
    }
}
