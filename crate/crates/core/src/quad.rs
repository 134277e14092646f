//! Adaptive Gauss–Kronrod quadrature (10-point Gauss, 21-point Kronrod) and
//! the coordinate maps used to integrate over `(0, 1)` and `(0, ∞)`.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::IbpError;

/// Support of a Lévy density or jump variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    UnitInterval,
    PositiveHalfLine,
}

/// A point of the support together with its complement `1 − s`, computed
/// independently so that integrands keep full precision as `s → 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub s: f64,
    pub sc: f64,
}

impl Point {
    pub fn new(s: f64) -> Self {
        Point { s, sc: 1.0 - s }
    }

    pub fn with_complement(s: f64, sc: f64) -> Self {
        Point { s, sc }
    }

    /// `ln(1 − s)`.
    pub fn ln_sc(&self) -> f64 {
        if self.s < 0.5 {
            (-self.s).ln_1p()
        } else {
            self.sc.ln()
        }
    }
}

impl Support {
    pub fn contains(self, s: f64) -> bool {
        match self {
            Support::UnitInterval => s > 0.0 && s < 1.0,
            Support::PositiveHalfLine => s > 0.0 && s.is_finite(),
        }
    }

    pub fn other(self) -> Support {
        match self {
            Support::UnitInterval => Support::PositiveHalfLine,
            Support::PositiveHalfLine => Support::UnitInterval,
        }
    }

    /// Map `u ∈ ℝ` into the support: logistic for `(0,1)`, exponential for
    /// `(0,∞)`. Returns the point and `ds/du`.
    pub fn from_real(self, u: f64) -> (Point, f64) {
        match self {
            Support::UnitInterval => {
                let s = 1.0 / (1.0 + (-u).exp());
                let sc = 1.0 / (1.0 + u.exp());
                (Point { s, sc }, s * sc)
            }
            Support::PositiveHalfLine => {
                let s = u.exp();
                (Point { s, sc: 1.0 - s }, s)
            }
        }
    }

    /// Inverse of [`Support::from_real`].
    pub fn to_real(self, p: Point) -> f64 {
        match self {
            Support::UnitInterval => p.s.ln() - p.sc.ln(),
            Support::PositiveHalfLine => p.s.ln(),
        }
    }
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_977_211_636,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// One 21-point Kronrod panel with the QUADPACK error heuristic.
#[derive(Clone, Copy, Debug)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
    pub value: f64,
    pub err: f64,
}

pub fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = WGK[10] * fc;
    let mut resg = 0.0;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = resk * half;
    resabs *= half.abs();
    resasc *= half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Panel { a, b, value, err }
}

/// Tolerances for the adaptive integrator.
#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { rel_tol: 1e-10, abs_tol: 1e-300, max_panels: 4000 }
    }
}

impl QuadOptions {
    pub fn rel(rel_tol: f64) -> Self {
        QuadOptions { rel_tol, ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub abs_err: f64,
    pub panels: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QuadFailure {
    /// Panel budget exhausted before the error target was met.
    NoConvergence(Estimate),
    /// The integrand returned NaN or ±∞ at an interior point.
    NonFinite { at: f64 },
}

impl From<QuadFailure> for IbpError {
    fn from(f: QuadFailure) -> Self {
        match f {
            QuadFailure::NoConvergence(e) => IbpError::Quadrature(format!(
                "estimate {:e} with error {:e} after {} panels",
                e.value, e.abs_err, e.panels
            )),
            QuadFailure::NonFinite { at } => {
                IbpError::Quadrature(format!("integrand not finite at {at:e}"))
            }
        }
    }
}

struct ByErr(Panel);

impl PartialEq for ByErr {
    fn eq(&self, o: &Self) -> bool {
        self.0.err == o.0.err
    }
}
impl Eq for ByErr {}
impl PartialOrd for ByErr {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for ByErr {
    fn cmp(&self, o: &Self) -> Ordering {
        self.0.err.total_cmp(&o.0.err)
    }
}

/// Integrate `f` over the finite interval `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<Estimate, QuadFailure> {
    let bad: Cell<Option<f64>> = Cell::new(None);
    let mut g = |x: f64| {
        let v = f(x);
        if !v.is_finite() && bad.get().is_none() {
            bad.set(Some(x));
        }
        v
    };
    let first = gk21(&mut g, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(ByErr(first));
    let mut frozen: Vec<Panel> = Vec::new();
    let mut panels = 1usize;
    let (mut value, mut err) = (first.value, first.err);
    loop {
        if let Some(at) = bad.get() {
            return Err(QuadFailure::NonFinite { at });
        }
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if err <= target || panels >= opts.max_panels || heap.is_empty() {
            // Re-sum to shed the drift of the running totals.
            let (v, e) = heap
                .iter()
                .map(|p| &p.0)
                .chain(frozen.iter())
                .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.err));
            let est = Estimate { value: v, abs_err: e, panels };
            if e <= opts.abs_tol.max(opts.rel_tol * v.abs()) {
                return Ok(est);
            }
            if panels >= opts.max_panels || heap.is_empty() {
                return Err(QuadFailure::NoConvergence(est));
            }
            value = v;
            err = e;
        }
        let worst = heap.pop().expect("heap checked non-empty").0;
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b)
            || (worst.b - worst.a) <= 1e3 * f64::EPSILON * worst.a.abs().max(worst.b.abs())
        {
            frozen.push(worst);
            continue;
        }
        let left = gk21(&mut g, worst.a, mid);
        let right = gk21(&mut g, mid, worst.b);
        value += left.value + right.value - worst.value;
        err += left.err + right.err - worst.err;
        heap.push(ByErr(left));
        heap.push(ByErr(right));
        panels += 1;
    }
}

/// Map `x ∈ (−1, 1)` onto the real line.
#[inline]
pub fn x_to_u(x: f64) -> (f64, f64) {
    let d = 1.0 - x.abs();
    (x / d, 1.0 / (d * d))
}

#[inline]
pub fn u_to_x(u: f64) -> f64 {
    if u.is_infinite() {
        u.signum()
    } else {
        u / (1.0 + u.abs())
    }
}

/// Largest `|u|` at which mapped integrands are evaluated; beyond it the
/// point itself is no longer representable and the integrand counts as zero.
pub const U_LIMIT: f64 = 700.0;

/// Evaluate an integrand written in the support's natural coordinate in the
/// compactified coordinate `x`. Non-finite values at unrepresentable points
/// are treated as zero.
pub fn mapped<F: Fn(Point) -> f64>(support: Support, f: &F, x: f64) -> f64 {
    let (u, dudx) = x_to_u(x);
    if !u.is_finite() || u.abs() > U_LIMIT {
        return 0.0;
    }
    let (p, dsdu) = support.from_real(u);
    if p.s <= 0.0 || p.sc <= 0.0 && support == Support::UnitInterval || !p.s.is_finite() {
        return 0.0;
    }
    let v = f(p) * dsdu * dudx;
    // Far in the tails an integrable integrand is the product of an overflowing
    // power and a vanishing factor; its true contribution is negligible.
    if !v.is_finite() && u.abs() > U_OVERFLOW {
        return 0.0;
    }
    v
}

/// `|u|` beyond which power factors `s^{−α−1}` may overflow for `α < 1`.
const U_OVERFLOW: f64 = 300.0;

/// Integrate `f(s) ds` over the whole support.
pub fn integrate_support<F: Fn(Point) -> f64>(
    support: Support,
    f: F,
    opts: QuadOptions,
) -> Result<Estimate, QuadFailure> {
    integrate_support_between(support, f64::NEG_INFINITY, f64::INFINITY, f, opts)
}

/// Integrate `f(s) ds` over the support points whose real coordinate lies in
/// `[u_lo, u_hi]` (see [`Support::from_real`]).
pub fn integrate_support_between<F: Fn(Point) -> f64>(
    support: Support,
    u_lo: f64,
    u_hi: f64,
    f: F,
    opts: QuadOptions,
) -> Result<Estimate, QuadFailure> {
    let (a, b) = (u_to_x(u_lo), u_to_x(u_hi));
    if a >= b {
        return Ok(Estimate { value: 0.0, abs_err: 0.0, panels: 0 });
    }
    // Splitting at 0 keeps the kink of |x| off a Kronrod node.
    if a < 0.0 && b > 0.0 {
        let l = integrate(|x| mapped(support, &f, x), a, 0.0, opts)?;
        let r = integrate(|x| mapped(support, &f, x), 0.0, b, opts)?;
        Ok(Estimate { value: l.value + r.value, abs_err: l.abs_err + r.abs_err, panels: l.panels + r.panels })
    } else {
        integrate(|x| mapped(support, &f, x), a, b, opts)
    }
}

/// Verdict of the doubling-window divergence probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Divergence {
    Convergent,
    Divergent,
}

/// Heuristic divergence test for `∫ f(s) ds` over the support: integrate over
/// `|u| ≤ L` for `L = 64, 128, 256` and inspect how the increments shrink.
/// Integrands whose mass escapes more slowly than about `e^{−0.03|u|}` are
/// reported divergent, and integrands whose divergence only sets in beyond
/// `|u| = 256` (weights below `e^{−256}`) are reported convergent.
pub fn probe_divergence<F: Fn(Point) -> f64>(support: Support, f: F) -> Divergence {
    let opts = QuadOptions { rel_tol: 1e-8, abs_tol: 1e-300, max_panels: 2000 };
    let mut vals = Vec::new();
    for l in [64.0, 128.0, 256.0] {
        let g = |u: f64| {
            let (p, j) = support.from_real(u);
            if p.s <= 0.0 || !p.s.is_finite() || (support == Support::UnitInterval && p.sc <= 0.0) {
                return 0.0;
            }
            f(p) * j
        };
        match integrate(g, -l, l, opts) {
            Ok(e) | Err(QuadFailure::NoConvergence(e)) => vals.push(e.value),
            Err(QuadFailure::NonFinite { .. }) => return Divergence::Divergent,
        }
    }
    let (i1, i2, i3) = (vals[0], vals[1], vals[2]);
    let d2 = i3 - i2;
    let d1 = i2 - i1;
    if !i3.is_finite() || (d2 > 1e-4 * i3.abs() && d2 > 0.5 * d1) {
        Divergence::Divergent
    } else {
        Divergence::Convergent
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_exact() {
        let e = integrate(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, QuadOptions::default()).unwrap();
        assert_relative_eq!(e.value, 4.0 - 4.0 + 2.0, max_relative = 1e-14);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫₀¹ x^{-1/2} dx = 2
        let e = integrate_support(Support::UnitInterval, |p| p.s.powf(-0.5), QuadOptions::default()).unwrap();
        assert_relative_eq!(e.value, 2.0, max_relative = 1e-10);
    }

    #[test]
    fn half_line_tail() {
        // ∫₀^∞ s^{-1/2} e^{-s} ds = Γ(1/2)
        let e = integrate_support(Support::PositiveHalfLine, |p| p.s.powf(-0.5) * (-p.s).exp(), QuadOptions::default())
            .unwrap();
        assert_relative_eq!(e.value, std::f64::consts::PI.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn complement_precision_near_one() {
        // ∫₀¹ (1-s)^{-0.9} ds = 10
        let e = integrate_support(Support::UnitInterval, |p| p.sc.powf(-0.9), QuadOptions::default()).unwrap();
        assert_relative_eq!(e.value, 10.0, max_relative = 1e-9);
    }

    #[test]
    fn divergence_probe() {
        assert_eq!(probe_divergence(Support::UnitInterval, |p| 1.0 / p.s), Divergence::Divergent);
        assert_eq!(probe_divergence(Support::UnitInterval, |p| p.s.powf(-0.5)), Divergence::Convergent);
        assert_eq!(probe_divergence(Support::PositiveHalfLine, |p| 1.0 / (1.0 + p.s)), Divergence::Divergent);
        assert_eq!(
            probe_divergence(Support::PositiveHalfLine, |p| (-p.s).exp() * p.s.powf(-0.5)),
            Divergence::Convergent
        );
    }

    #[test]
    fn real_coordinate_roundtrip() {
        for s in [1e-12, 0.3, 0.5, 0.999_999] {
            let (p, _) = Support::UnitInterval.from_real(Support::UnitInterval.to_real(Point::new(s)));
            assert_relative_eq!(p.s, s, max_relative = 1e-9);
        }
    }
}
