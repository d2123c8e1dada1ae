//! Straight-line fits: ordinary least squares (log-log decay rates) and
//! Chebyshev (minimax) fits used for two-sided bounds.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
}

pub fn least_squares(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len().min(y.len());
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss: f64 = (0..n).map(|i| (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let rms = (ss / nf).sqrt();
    let slope_se = if n > 2 && sxx > 0.0 {
        (ss / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    LineFit {
        slope,
        intercept,
        rms,
        slope_se,
    }
}

/// Log-log decay fit of one norm channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub points: usize,
    pub residual: f64,
    /// 95% confidence half-width of the slope.
    pub half_width: f64,
}

/// Minimum number of points and span (in decades) of a decay-fit window.
pub const MIN_FIT_POINTS: usize = 8;
pub const MIN_FIT_DECADES: f64 = 1.0;

/// Least-squares slope of `log value` against `log t` over `window`
/// (all points when `None`); values must exceed `10 * floor`.
pub fn decay_fit(series: &[(f64, f64)], window: Option<(f64, f64)>, floor: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| match window {
            Some((lo, hi)) => t >= lo * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12),
            None => true,
        })
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientWindow(format!(
            "{} points, need at least {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    if let Some(&(t, v)) = pts
        .iter()
        .find(|&&(t, v)| !(t > 0.0) || !(v > 10.0 * floor) || !v.is_finite())
    {
        return Err(Error::InsufficientWindow(format!(
            "point (t = {t}, value = {v}) is not above 10x the floor {floor:e}"
        )));
    }
    let t_lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_hi = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    if (t_hi / t_lo).log10() < MIN_FIT_DECADES - 1e-9 {
        return Err(Error::InsufficientWindow(format!(
            "window [{t_lo}, {t_hi}] spans less than {MIN_FIT_DECADES} decade"
        )));
    }
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let f = least_squares(&lx, &ly);
    let dof = (pts.len() - 2) as f64;
    let quantile = StudentsT::new(0.0, 1.0, dof)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.96);
    Ok(DecayFit {
        slope: f.slope,
        intercept: f.intercept,
        t_lo,
        t_hi,
        points: pts.len(),
        residual: f.rms,
        half_width: quantile * f.slope_se,
    })
}

/// Points of `series` in the last `decades` decades before its final time.
pub fn last_decades(series: &[(f64, f64)], decades: f64) -> Option<(f64, f64)> {
    let t_end = series.last()?.0;
    Some((t_end / 10f64.powf(decades), t_end))
}

/// Minimax line `y ≈ b - c z` with `c >= 0`: returns `(b, c, E)` with
/// `|y_i - b + c z_i| <= E` for all `i` and `E` minimal.
pub fn chebyshev_decay_line(z: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let spread = |c: f64| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (zi, yi) in z.iter().zip(y) {
            let v = yi + c * zi;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (0.5 * (lo + hi), 0.5 * (hi - lo))
    };
    // the half-spread is convex in c; golden-section search on a bracket
    let z_span = z.iter().cloned().fold(0.0, f64::max) - z.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_span = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(z_span > 0.0) {
        let (b, e) = spread(0.0);
        return (b, 0.0, e);
    }
    let mut lo = 0.0;
    let mut hi = 4.0 * y_span.max(1e-12) / z_span;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c1 = hi - g * (hi - lo);
    let mut c2 = lo + g * (hi - lo);
    let mut f1 = spread(c1).1;
    let mut f2 = spread(c2).1;
    for _ in 0..200 {
        if f1 <= f2 {
            hi = c2;
            c2 = c1;
            f2 = f1;
            c1 = hi - g * (hi - lo);
            f1 = spread(c1).1;
        } else {
            lo = c1;
            c1 = c2;
            f1 = f2;
            c2 = lo + g * (hi - lo);
            f2 = spread(c2).1;
        }
        if hi - lo < 1e-14 * (1.0 + hi) {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    let (b, e) = spread(c);
    (b, c, e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_series(exp: f64) -> Vec<(f64, f64)> {
        (0..20)
            .map(|k| {
                let t = 10f64.powf(k as f64 / 8.0);
                (t, 3.0 * t.powf(exp))
            })
            .collect()
    }

    #[test]
    fn exact_power_law() {
        let f = decay_fit(&power_series(-1.0 / 3.0), None, 0.0).unwrap();
        assert!((f.slope + 1.0 / 3.0).abs() < 1e-12);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn constant_series_has_zero_slope() {
        let f = decay_fit(&power_series(0.0), None, 0.0).unwrap();
        assert!(f.slope.abs() < 1e-14);
    }

    #[test]
    fn short_window_rejected() {
        let s: Vec<(f64, f64)> = (1..=10).map(|k| (1.0 + k as f64 * 0.1, 1.0)).collect();
        assert!(matches!(decay_fit(&s, None, 0.0), Err(Error::InsufficientWindow(_))));
        assert!(matches!(
            decay_fit(&s[..5], None, 0.0),
            Err(Error::InsufficientWindow(_))
        ));
    }

    #[test]
    fn floor_enforced() {
        let s = power_series(-1.0);
        assert!(decay_fit(&s, None, 1.0).is_err());
    }

    #[test]
    fn chebyshev_line_recovers_exact_line() {
        let z: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = z.iter().map(|zi| 2.0 - 0.25 * zi).collect();
        let (b, c, e) = chebyshev_decay_line(&z, &y);
        assert!((b - 2.0).abs() < 1e-9 && (c - 0.25).abs() < 1e-9 && e < 1e-9);
    }

    #[test]
    fn chebyshev_line_bounds_all_points() {
        let z: Vec<f64> = (0..30).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = z.iter().map(|zi| 1.0 - 0.5 * zi + 0.1 * (3.0 * zi).sin()).collect();
        let (b, c, e) = chebyshev_decay_line(&z, &y);
        for (zi, yi) in z.iter().zip(&y) {
            assert!((yi - b + c * zi).abs() <= e + 1e-12);
        }
        assert!(e <= 0.1 + 1e-9);
    }
}
