//! Adaptive Gauss–Kronrod quadrature with power-law singularity splitting.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// 15-point Kronrod extension of the 7-point Gauss rule; nodes on [0, 1] half-line.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Error control for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn relative(rtol: f64) -> Self {
        Self {
            rtol,
            atol: 1e-300,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Panel {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for (j, &x) in XGK.iter().enumerate().take(7) {
        let s = f(c - h * x) + f(c + h * x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Panel {
        lo,
        hi,
        value: k * h,
        error: ((k - g) * h).abs(),
    }
}

/// Globally adaptive G7K15 quadrature of `f` over `[lo, hi]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: Tolerance) -> Result<Estimate> {
    if lo == hi {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let (lo, hi, sign) = if lo < hi { (lo, hi, 1.0) } else { (hi, lo, -1.0) };
    let mut heap = BinaryHeap::new();
    let first = kronrod(&f, lo, hi);
    let mut value = first.value;
    let mut error = first.error;
    heap.push(first);
    while error > tol.atol.max(tol.rtol * value.abs()) {
        if heap.len() >= tol.max_intervals {
            break;
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            heap.push(worst);
            break;
        }
        let left = kronrod(&f, worst.lo, mid);
        let right = kronrod(&f, mid, worst.hi);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // running sums drift; refresh occasionally
        if heap.len() % 256 == 0 {
            value = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    value = heap.iter().map(|p| p.value).sum();
    error = heap.iter().map(|p| p.error).sum();
    let allowed = tol.atol.max(tol.rtol * value.abs());
    if !value.is_finite() || error > allowed {
        return Err(Error::QuadratureFailure {
            estimate: error,
            tolerance: allowed,
        });
    }
    Ok(Estimate {
        value: sign * value,
        error,
    })
}

/// Integrates `f(s) = |s - s0|^gamma g(s)` over `[lo, hi]` where `g` is smooth.
///
/// The interval is split at `s0` and each side is mapped by
/// `s = s0 ± L u^{1/(gamma+1)}`, which turns `|s - s0|^gamma ds` into a
/// constant multiple of `du`; the rule is exact when `g` is constant.
/// `f(s, s - s0)` is the full integrand (including the singular factor); the
/// offset is passed exactly so the integrand can avoid forming `s - s0` by
/// subtraction. Requires `gamma > -1`.
pub fn integrate_power_singular<F: Fn(f64, f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    s0: f64,
    gamma: f64,
    tol: Tolerance,
) -> Result<Estimate> {
    if gamma <= -1.0 {
        return Err(Error::InvalidInput(format!(
            "power singularity exponent {gamma} is not integrable"
        )));
    }
    if hi < lo {
        let e = integrate_power_singular(f, hi, lo, s0, gamma, tol)?;
        return Ok(Estimate {
            value: -e.value,
            error: e.error,
        });
    }
    let mut total = Estimate { value: 0.0, error: 0.0 };
    let g1 = gamma + 1.0;
    let mut side = |a: f64, b: f64, dir: f64| -> Result<()> {
        // integrate over [s0, s0 + dir*len], with [a, b] its sub-range
        let len = (b - a).abs();
        if len == 0.0 {
            return Ok(());
        }
        let m = 1.0 / g1;
        let scale = len.powf(g1) / g1;
        let mapped = |u: f64| {
            let d = len * u.powf(m);
            if d == 0.0 {
                return 0.0;
            }
            let s = s0 + dir * d;
            f(s, dir * d) / d.powf(gamma)
        };
        let e = integrate(mapped, 0.0, 1.0, tol)?;
        total.value += scale * e.value;
        total.error += scale * e.error;
        Ok(())
    };
    if s0 <= lo {
        // singular point at or left of the interval
        if s0 < lo {
            return integrate(|s| f(s, s - s0), lo, hi, tol);
        }
        side(lo, hi, 1.0)?;
    } else if s0 >= hi {
        if s0 > hi {
            return integrate(|s| f(s, s - s0), lo, hi, tol);
        }
        side(lo, hi, -1.0)?;
    } else {
        side(lo, s0, -1.0)?;
        side(s0, hi, 1.0)?;
    }
    Ok(total)
}

/// Fixed Gauss–Legendre nodes/weights on `[-1, 1]` (8 points), used for cell averages.
pub const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
pub const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let e = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, Tolerance::relative(1e-12)).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((e.value - exact).abs() < 1e-12);
    }

    #[test]
    fn smooth_transcendental() {
        let e = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, Tolerance::relative(1e-12)).unwrap();
        assert!((e.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_limits() {
        let e = integrate(|x| x, 1.0, 0.0, Tolerance::relative(1e-12)).unwrap();
        assert!((e.value + 0.5).abs() < 1e-14);
    }

    #[test]
    fn interior_power_singularity() {
        // ∫_{-1}^{2} |s|^{-1/4} ds = (1 + 2^{3/4}) / (3/4)
        let g = -0.25;
        let e = integrate_power_singular(
            |s: f64, _| s.abs().powf(g),
            -1.0,
            2.0,
            0.0,
            g,
            Tolerance::relative(1e-12),
        )
        .unwrap();
        let exact = (1.0 + 2f64.powf(0.75)) / 0.75;
        assert!((e.value - exact).abs() < 1e-11 * exact, "{} vs {}", e.value, exact);
    }

    #[test]
    fn endpoint_power_singularity_with_smooth_factor() {
        // ∫_0^1 s^{-1/2} cos(s) ds = sqrt(2π) C(sqrt(2/π)); reference from series
        let e = integrate_power_singular(
            |s: f64, _| s.powf(-0.5) * s.cos(),
            0.0,
            1.0,
            0.0,
            -0.5,
            Tolerance::relative(1e-12),
        )
        .unwrap();
        // series: Σ (-1)^k / ((2k)! (2k + 1/2))
        let mut series = 0.0;
        let mut fact = 1.0;
        for k in 0..15 {
            if k > 0 {
                fact *= (2 * k - 1) as f64 * (2 * k) as f64;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            series += sign / (fact * (2.0 * k as f64 + 0.5));
        }
        assert!((e.value - series).abs() < 1e-11);
    }

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        let s: f64 = GL8_WEIGHTS.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m: f64 = GL8_NODES.iter().zip(GL8_WEIGHTS).map(|(x, w)| w * x.powi(14)).sum();
        assert!((m - 2.0 / 15.0).abs() < 1e-14);
    }
}
