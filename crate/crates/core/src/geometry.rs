//! Ball integrals of the weight, the volume function `h_x(r)` and its
//! inverse, and sampled certification of the Muckenhoupt, doubling and
//! two-sided envelope conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fit::least_squares;
use crate::quadrature::{integrate, integrate_power_singular, Tolerance};
use crate::weight::{unit_ball_volume, unit_sphere_area, Weight, WeightKind};

/// Quadrature tolerances for ball integrals.
pub const RTOL_1D: f64 = 1e-9;
pub const RTOL_ND: f64 = 1e-6;

fn tolerance(dim: usize) -> Tolerance {
    // asking the adaptive rule for a little more than the advertised accuracy
    // keeps the reported error estimate under the contract
    if dim == 1 {
        Tolerance::relative(RTOL_1D * 1e-2)
    } else {
        Tolerance::relative(RTOL_ND * 1e-2)
    }
}

/// `∫_{x-r}^{x+r} |y|^gamma dy`, evaluated without cancellation for `r << |x|`.
pub fn interval_power_integral(x: f64, r: f64, gamma: f64) -> f64 {
    let g1 = gamma + 1.0;
    let ax = x.abs();
    if r >= ax {
        // interval contains the origin
        ((r + ax).powf(g1) + (r - ax).powf(g1)) / g1
    } else {
        let u = r / ax;
        let a = g1 * u.ln_1p();
        let b = g1 * (-u).ln_1p();
        ax.powf(g1) * b.exp() * (a - b).exp_m1() / g1
    }
}

/// `∫_{B_r(x)} ρ(y)^power dy` with `ρ = |y_1|` (axis) or `|y|` (radial).
pub fn ball_power_integral(kind: WeightKind, dim: usize, x: &[f64], r: f64, power: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidInput(format!("radius must be positive, got {r}")));
    }
    if x.len() != dim {
        return Err(Error::InvalidInput(format!(
            "point has {} coordinates, expected {dim}",
            x.len()
        )));
    }
    let n = dim as f64;
    let integrable = match kind {
        WeightKind::AxisPower => power > -1.0,
        WeightKind::RadialPower => power > -n,
    };
    if !integrable || dim == 0 {
        return Err(Error::InadmissibleWeight(format!(
            "|.|^{power} is not locally integrable for the {kind} family in dimension {dim}"
        )));
    }
    let tol = tolerance(dim);
    match (kind, dim) {
        (_, 1) => Ok(interval_power_integral(x[0], r, power)),
        (WeightKind::AxisPower, _) => {
            // slice along y_1: cross sections are (N-1)-balls of radius r cos(theta)
            let x1 = x[0];
            let cross = unit_ball_volume(dim - 1);
            let cos_n = |theta: f64| theta.cos().powi(dim as i32);
            let u0 = -x1 / r;
            let est = if u0 > -1.0 && u0 < 1.0 {
                // x1 + r sin(theta) = 2 r cos(theta0 + d/2) sin(d/2), d = theta - theta0
                let theta0 = u0.asin();
                let f = |theta: f64, d: f64| {
                    (2.0 * r * (theta0 + 0.5 * d).cos() * (0.5 * d).sin()).abs().powf(power) * cos_n(theta)
                };
                integrate_power_singular(f, -PI / 2.0, PI / 2.0, theta0, power, tol)?
            } else {
                let f = |theta: f64| (x1 + r * theta.sin()).abs().powf(power) * cos_n(theta);
                integrate(f, -PI / 2.0, PI / 2.0, tol)?
            };
            Ok(cross * r.powi(dim as i32) * est.value)
        }
        (WeightKind::RadialPower, _) => {
            let d = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let area = unit_sphere_area(dim);
            let full = |rho: f64| area * rho.powf(power + n) / (power + n);
            if d == 0.0 {
                return Ok(full(r));
            }
            let mut total = 0.0;
            if r > d {
                total += full(r - d);
            }
            if r == d {
                let f = |rho: f64, _| {
                    if rho <= 0.0 {
                        return 0.0;
                    }
                    let c = (rho / (2.0 * d)).clamp(-1.0, 1.0);
                    area * rho.powf(power + n - 1.0) * cap_fraction(dim, c.acos())
                };
                total += integrate_power_singular(f, 0.0, 2.0 * d, 0.0, power + n - 1.0, tol)?.value;
                return Ok(total);
            }
            // rho = m + k sin(phi) over [|r - d|, r + d]; with a = r - (rho - d) and
            // b = r + (rho - d) the cap half-angle is 2 asin(sqrt(a b / (4 rho d))),
            // and both factors are formed without cancellation
            let (m, k) = if r < d { (d, r) } else { (r, d) };
            let f = |phi: f64| {
                let s = phi.sin();
                let rho = m + k * s;
                let (a, b) = if r < d {
                    (r * (1.0 - s), r * (1.0 + s))
                } else {
                    (d * (1.0 - s), 2.0 * r - d * (1.0 - s))
                };
                let half = (a * b / (4.0 * rho * d)).max(0.0).sqrt().min(1.0);
                let theta = 2.0 * half.asin();
                area * rho.powf(power + n - 1.0) * cap_fraction(dim, theta) * k * phi.cos()
            };
            let est = integrate(f, -PI / 2.0, PI / 2.0, tol)?;
            total += est.value;
            Ok(total)
        }
    }
}

/// Fraction of the unit sphere `S^{n-1}` within angle `theta` of a pole.
fn cap_fraction(n: usize, theta: f64) -> f64 {
    match n {
        2 => theta / PI,
        3 => 0.5 * (1.0 - theta.cos()),
        _ => {
            let s2 = theta.sin().powi(2);
            let half = 0.5 * statrs::function::beta::beta_reg((n as f64 - 1.0) / 2.0, 0.5, s2);
            if theta <= PI / 2.0 {
                half
            } else {
                1.0 - half
            }
        }
    }
}

/// `∫_{B_r(x)} w^{-N/2} dy`.
pub fn dual_measure(w: &Weight, x: &[f64], r: f64) -> Result<f64> {
    ball_power_integral(w.kind, w.dim, x, r, -w.exponent * w.dim as f64 / 2.0)
}

/// The weight-adapted volume function `h_x(r) = (∫_{B_r(x)} w^{-N/2})^{2/N}`.
pub fn h(w: &Weight, x: &[f64], r: f64) -> Result<f64> {
    Ok(dual_measure(w, x, r)?.powf(2.0 / w.dim as f64))
}

/// Relative tolerance of [`h_inverse`].
pub const H_INVERSE_RTOL: f64 = 1e-10;

/// Inverse of `r ↦ h_x(r)` by geometric bracketing around `t^{1/(2-a)}` and bisection.
pub fn h_inverse(w: &Weight, x: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("h_inverse needs t > 0, got {t}")));
    }
    let guess = t.powf(1.0 / w.diffusion_order());
    let mut k = 8.0;
    let (mut lo, mut hi);
    loop {
        lo = guess / k;
        hi = guess * k;
        if h(w, x, lo)? <= t && h(w, x, hi)? >= t {
            break;
        }
        k *= 2.0;
        if k > 1e150 {
            return Err(Error::InvalidInput(format!("no bracket found for h_inverse({t})")));
        }
    }
    for _ in 0..400 {
        let mid = (lo * hi).sqrt();
        let v = h(w, x, mid)?;
        if (v - t).abs() <= H_INVERSE_RTOL * t {
            return Ok(mid);
        }
        if v < t {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// A ball `B_r(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Deterministic ball sampler: centers at log-spaced distances from the
/// singular set (plus centers on it), radii log-spaced over several decades.
#[derive(Debug, Clone)]
pub struct BallSampler {
    pub seed: u64,
    pub centers: usize,
    pub radii: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Distances from the singular set are drawn log-uniformly from
    /// `[r_min, d_max]`, and one center per sample set lies on it.
    pub d_max: f64,
}

impl Default for BallSampler {
    fn default() -> Self {
        Self {
            seed: 7,
            centers: 12,
            radii: 13,
            r_min: 1e-3,
            r_max: 1e3,
            d_max: 1e3,
        }
    }
}

impl BallSampler {
    pub fn densified(&self, factor: usize) -> Self {
        Self {
            centers: self.centers * factor,
            radii: self.radii * factor,
            ..self.clone()
        }
    }

    pub fn sample(&self, w: &Weight) -> Vec<Ball> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.centers * self.radii);
        let radii: Vec<f64> = log_space(self.r_min, self.r_max, self.radii.max(2));
        for c in 0..self.centers.max(1) {
            let dist = if c == 0 {
                0.0
            } else {
                let lo = self.r_min.ln();
                let hi = self.d_max.ln();
                (lo + (hi - lo) * rng.gen::<f64>()).exp()
            };
            let center = point_at_distance(w, dist, &mut rng);
            for &r in &radii {
                out.push(Ball {
                    center: center.clone(),
                    radius: r,
                });
            }
        }
        out
    }
}

fn point_at_distance(w: &Weight, dist: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = w.dim;
    match w.kind {
        WeightKind::AxisPower => {
            let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            x[0] = if rng.gen::<bool>() { dist } else { -dist };
            x
        }
        WeightKind::RadialPower => {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            for a in v.iter_mut() {
                *a *= dist / norm;
            }
            if n == 1 {
                v[0] = if rng.gen::<bool>() { dist } else { -dist };
            }
            v
        }
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Supremum over the sampled balls of the Muckenhoupt `A_p` product
/// `(avg_B w) (avg_B w^{-1/(p-1)})^{p-1}`.
pub fn muckenhoupt_constant(w: &Weight, p_class: f64, sampler: &BallSampler) -> Result<f64> {
    if !(p_class > 1.0) {
        return Err(Error::InvalidInput(format!("A_p class needs p > 1, got {p_class}")));
    }
    let dual = -w.exponent / (p_class - 1.0);
    let mut sup: f64 = 0.0;
    for ball in sampler.sample(w) {
        let vol = unit_ball_volume(w.dim) * ball.radius.powi(w.dim as i32);
        let avg_w = ball_power_integral(w.kind, w.dim, &ball.center, ball.radius, w.exponent)? / vol;
        let avg_d = ball_power_integral(w.kind, w.dim, &ball.center, ball.radius, dual)? / vol;
        sup = sup.max(avg_w * avg_d.powf(p_class - 1.0));
    }
    Ok(sup)
}

/// One row of a check report, as emitted in JSON.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub weight: Weight,
    pub samples: usize,
    pub fitted_constants: BTreeMap<String, f64>,
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Fitted local doubling order for one `(x, R)` sample.
#[derive(Debug, Clone, Serialize)]
pub struct DoublingSample {
    pub center: Vec<f64>,
    pub radius: f64,
    /// `true` when the center lies on the singular set.
    pub anchored: bool,
    pub ratios: Vec<f64>,
    pub order: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DoublingReport {
    pub weight: Weight,
    pub s_values: Vec<f64>,
    pub samples: Vec<DoublingSample>,
    pub min_order: f64,
    pub max_order: f64,
    /// Range of fitted orders over samples centered on the singular set.
    pub anchored_min: f64,
    pub anchored_max: f64,
    /// `1 - alpha/2`.
    pub expected_order: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl DoublingReport {
    pub fn to_check(&self) -> CheckReport {
        let mut c = BTreeMap::new();
        c.insert("mu_min".into(), self.min_order);
        c.insert("mu_max".into(), self.max_order);
        c.insert("mu_anchored_min".into(), self.anchored_min);
        c.insert("mu_anchored_max".into(), self.anchored_max);
        c.insert("mu_expected".into(), self.expected_order);
        let worst = (self.anchored_min - self.expected_order)
            .abs()
            .max((self.anchored_max - self.expected_order).abs());
        CheckReport {
            check: "doubling".into(),
            weight: self.weight,
            samples: self.samples.len(),
            fitted_constants: c,
            worst_ratio: worst,
            pass: self.pass,
        }
    }
}

/// Doubling / reverse-doubling order of `w^{-N/2}`.
///
/// For every sampled ball the ratios `∫_{B_{sR}} w^{-N/2} / ∫_{B_R} w^{-N/2}`
/// are fitted against `s^{μN}` in log space. Balls centered on the singular
/// set must give `μ = 1 - alpha/2` within `tolerance`. Off-axis balls only
/// need a finite positive order: while a growing ball swallows the singular
/// set its local order can overshoot both `1 - alpha/2` and `1`.
pub fn doubling_report(w: &Weight, s_values: &[f64], sampler: &BallSampler, tolerance: f64) -> Result<DoublingReport> {
    if s_values.len() < 2 || s_values.iter().any(|&s| !(1.0..=100.0).contains(&s)) {
        return Err(Error::InvalidInput(
            "s values must be at least two numbers in [1, 100]".into(),
        ));
    }
    let n = w.dim as f64;
    let expected = 1.0 - w.exponent / 2.0;
    let log_s: Vec<f64> = s_values.iter().map(|s| s.ln()).collect();
    let mut samples = Vec::new();
    for ball in sampler.sample(w) {
        let base = dual_measure(w, &ball.center, ball.radius)?;
        let mut ratios = Vec::with_capacity(s_values.len());
        for &s in s_values {
            ratios.push(dual_measure(w, &ball.center, s * ball.radius)? / base);
        }
        let log_r: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
        let fit = least_squares(&log_s, &log_r);
        let anchored = w.singular_distance(&ball.center) == 0.0;
        samples.push(DoublingSample {
            center: ball.center,
            radius: ball.radius,
            anchored,
            ratios,
            order: fit.slope / n,
        });
    }
    let orders = |anch: bool| samples.iter().filter(move |s| !anch || s.anchored).map(|s| s.order);
    let min_order = orders(false).fold(f64::INFINITY, f64::min);
    let max_order = orders(false).fold(f64::NEG_INFINITY, f64::max);
    let anchored_min = orders(true).fold(f64::INFINITY, f64::min);
    let anchored_max = orders(true).fold(f64::NEG_INFINITY, f64::max);
    let pass = anchored_min.is_finite()
        && (anchored_min - expected).abs() <= tolerance
        && (anchored_max - expected).abs() <= tolerance
        && min_order > 0.0
        && max_order.is_finite();
    Ok(DoublingReport {
        weight: *w,
        s_values: s_values.to_vec(),
        samples,
        min_order,
        max_order,
        anchored_min,
        anchored_max,
        expected_order: expected,
        tolerance,
        pass,
    })
}

/// Which side of `r = |x_1|` an envelope piece applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RadiusRange {
    All,
    /// `0 < r <= |x_1|`
    Inner,
    /// `r >= |x_1|`
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Upper,
    Lower,
}

/// One piece `coefficient * r^power` (times `|x_1|^{-a}` for power 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopePiece {
    pub range: RadiusRange,
    pub coefficient: f64,
    pub power: f64,
}

/// Piecewise power envelope bounding `h_x(r)` from one side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HEnvelope {
    pub regime: Regime,
    pub pieces: Vec<EnvelopePiece>,
}

impl HEnvelope {
    pub fn evaluate(&self, a: f64, x1: f64, r: f64) -> f64 {
        let x1 = x1.abs();
        for p in &self.pieces {
            let applies = match p.range {
                RadiusRange::All => true,
                RadiusRange::Inner => r <= x1,
                RadiusRange::Outer => r >= x1,
            };
            if applies {
                return shape(p.power, a, x1, r) * p.coefficient;
            }
        }
        f64::NAN
    }
}

fn shape(power: f64, a: f64, x1: f64, r: f64) -> f64 {
    if power == 2.0 && a != 0.0 {
        r * r * x1.powf(-a)
    } else {
        r.powf(power)
    }
}

/// Two-sided envelope fit of `h_x(r)` for the axis weight.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub weight: Weight,
    pub samples: usize,
    pub upper: HEnvelope,
    pub lower: HEnvelope,
    /// `max / min` of `h_x(r) / m_x(r)` with the two-regime profile
    /// `m_x(r) = r^2 |x_1|^{-a}` (`r <= |x_1|`), `r^{2-a}` (`r >= |x_1|`).
    pub worst_ratio: f64,
    pub pass: bool,
}

impl EnvelopeReport {
    pub fn to_check(&self) -> CheckReport {
        let mut c = BTreeMap::new();
        for (name, env) in [("upper", &self.upper), ("lower", &self.lower)] {
            for (k, p) in env.pieces.iter().enumerate() {
                c.insert(format!("{name}_{k}_power_{}", p.power), p.coefficient);
            }
        }
        CheckReport {
            check: "lemma21_envelope".into(),
            weight: self.weight,
            samples: self.samples,
            fitted_constants: c,
            worst_ratio: self.worst_ratio,
            pass: self.pass,
        }
    }
}

/// Largest admissible spread of the two-regime profile fit before the
/// envelope shape is declared wrong.
pub const ENVELOPE_SPREAD_LIMIT: f64 = 1e3;

/// Fits the smallest upper and largest lower constants for the piecewise
/// envelopes of `h_x(r)` (axis weight, `a ∈ (-1, 1)`) over the sample.
pub fn verify_lemma21(w: &Weight, sample: &[(Vec<f64>, f64)]) -> Result<EnvelopeReport> {
    if w.kind != WeightKind::AxisPower || !(w.exponent > -1.0 && w.exponent < 1.0) {
        return Err(Error::InadmissibleWeight(
            "envelope check needs the axis weight with a ∈ (-1, 1)".into(),
        ));
    }
    if sample.is_empty() {
        return Err(Error::InvalidInput("empty envelope sample".into()));
    }
    let a = w.exponent;
    let two_a = 2.0 - a;
    // pieces as (range, power): the coefficient is fitted below
    type Shape = Vec<(RadiusRange, f64)>;
    let (upper_shape, lower_shape): (Shape, Shape) = if a >= 0.0 {
        (
            vec![(RadiusRange::All, two_a)],
            vec![(RadiusRange::Inner, 2.0), (RadiusRange::Outer, two_a)],
        )
    } else {
        (
            vec![(RadiusRange::Inner, 2.0), (RadiusRange::Outer, two_a)],
            vec![(RadiusRange::All, two_a)],
        )
    };
    let values: Vec<(f64, f64, f64)> = sample
        .iter()
        .map(|(x, r)| Ok((x[0].abs(), *r, h(w, x, *r)?)))
        .collect::<Result<_>>()?;

    let fit = |pieces: &[(RadiusRange, f64)], regime: Regime| -> Result<HEnvelope> {
        let mut out = Vec::new();
        for &(range, power) in pieces {
            let mut best: Option<f64> = None;
            for &(x1, r, hv) in &values {
                let applies = match range {
                    RadiusRange::All => true,
                    RadiusRange::Inner => r <= x1,
                    RadiusRange::Outer => r >= x1,
                };
                if !applies {
                    continue;
                }
                let ratio = hv / shape(power, a, x1, r);
                if !(ratio.is_finite() && ratio > 0.0) {
                    return Err(Error::EnvelopeViolation(format!(
                        "non-finite ratio at |x_1| = {x1}, r = {r}"
                    )));
                }
                best = Some(match (best, regime) {
                    (None, _) => ratio,
                    (Some(b), Regime::Upper) => b.max(ratio),
                    (Some(b), Regime::Lower) => b.min(ratio),
                });
            }
            if let Some(c) = best {
                out.push(EnvelopePiece {
                    range,
                    coefficient: c,
                    power,
                });
            }
        }
        Ok(HEnvelope { regime, pieces: out })
    };
    let upper = fit(&upper_shape, Regime::Upper)?;
    let lower = fit(&lower_shape, Regime::Lower)?;

    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &(x1, r, hv) in &values {
        let m = if r <= x1 { shape(2.0, a, x1, r) } else { r.powf(two_a) };
        let q = hv / m;
        lo = lo.min(q);
        hi = hi.max(q);
    }
    let worst_ratio = hi / lo;
    if !(worst_ratio.is_finite()) || worst_ratio > ENVELOPE_SPREAD_LIMIT {
        return Err(Error::EnvelopeViolation(format!(
            "two-regime profile spread {worst_ratio:e} exceeds {ENVELOPE_SPREAD_LIMIT:e}"
        )));
    }
    Ok(EnvelopeReport {
        weight: *w,
        samples: sample.len(),
        upper,
        lower,
        worst_ratio,
        pass: true,
    })
}

/// `n` samples in each of the regimes `r <= |x_1|` and `r >= |x_1|`.
pub fn lemma21_sample(w: &Weight, seed: u64, n_per_regime: usize) -> Vec<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * n_per_regime);
    for inner in [true, false] {
        for _ in 0..n_per_regime {
            let x1 = 10f64.powf(rng.gen_range(-3.0..3.0));
            // ratio r/|x_1| spans four decades on each side of 1
            let ratio = if inner {
                10f64.powf(rng.gen_range(-4.0..0.0))
            } else {
                10f64.powf(rng.gen_range(0.0..4.0))
            };
            let mut x: Vec<f64> = (0..w.dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
            x[0] = if rng.gen::<bool>() { x1 } else { -x1 };
            out.push((x, ratio * x1));
        }
    }
    out
}
