//! The two power-law coefficient families `|x_1|^a` and `|x|^b`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightKind {
    /// `w(x) = |x_1|^a`, singular (or degenerate) on the hyperplane `x_1 = 0`.
    AxisPower,
    /// `w(x) = |x|^b`, singular (or degenerate) at the origin.
    RadialPower,
}

impl WeightKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightKind::AxisPower => "axis",
            WeightKind::RadialPower => "radial",
        }
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A diffusion coefficient from one of the two supported families.
///
/// Construction through [`Weight::new`] does not check admissibility so that
/// exponent sequences leaving the admissible range can still be explored;
/// [`Weight::admissible`] rejects them where the theory needs it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub kind: WeightKind,
    pub exponent: f64,
    pub dim: usize,
}

impl Weight {
    pub fn new(kind: WeightKind, exponent: f64, dim: usize) -> Self {
        Self { kind, exponent, dim }
    }

    pub fn axis(a: f64, dim: usize) -> Self {
        Self::new(WeightKind::AxisPower, a, dim)
    }

    pub fn radial(b: f64, dim: usize) -> Self {
        Self::new(WeightKind::RadialPower, b, dim)
    }

    /// Same weight, but fails unless the exponent lies in the admissible range.
    pub fn admissible(kind: WeightKind, exponent: f64, dim: usize) -> Result<Self> {
        let w = Self::new(kind, exponent, dim);
        w.check_admissible()?;
        Ok(w)
    }

    /// Open exponent interval for which the existence theory applies.
    pub fn admissible_range(kind: WeightKind, dim: usize) -> (f64, f64) {
        match kind {
            WeightKind::AxisPower if dim >= 3 => (-1.0, 2.0 / dim as f64),
            WeightKind::AxisPower => (-1.0, 1.0),
            WeightKind::RadialPower if dim >= 2 => (-(dim as f64), 1.0),
            WeightKind::RadialPower => (-1.0, 1.0),
        }
    }

    pub fn is_admissible(&self) -> bool {
        let (lo, hi) = Self::admissible_range(self.kind, self.dim);
        self.dim >= 1 && self.exponent.is_finite() && self.exponent > lo && self.exponent < hi
    }

    pub fn check_admissible(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InadmissibleWeight("dimension must be positive".into()));
        }
        if !self.is_admissible() {
            let (lo, hi) = Self::admissible_range(self.kind, self.dim);
            return Err(Error::InadmissibleWeight(format!(
                "{} exponent {} outside ({lo}, {hi}) for N = {}",
                self.kind, self.exponent, self.dim
            )));
        }
        Ok(())
    }

    /// Distance to the singular set: `|x_1|` or `|x|`.
    pub fn singular_distance(&self, x: &[f64]) -> f64 {
        match self.kind {
            WeightKind::AxisPower => x[0].abs(),
            WeightKind::RadialPower => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point {x:?} is not a finite point of R^{}",
                self.dim
            )));
        }
        let d = self.singular_distance(x);
        if d == 0.0 {
            return if self.exponent < 0.0 {
                Err(Error::SingularPoint(x.to_vec()))
            } else if self.exponent == 0.0 {
                Ok(1.0)
            } else {
                Ok(0.0)
            };
        }
        Ok(d.powf(self.exponent))
    }

    /// The critical exponent `1 + (2 - alpha)/N` for this weight.
    pub fn critical_exponent(&self) -> f64 {
        critical_exponent(self.exponent, self.dim)
    }

    /// Parabolic scaling exponent: lengths scale like `t^{1/(2 - alpha)}`.
    pub fn diffusion_order(&self) -> f64 {
        2.0 - self.exponent
    }
}

/// `p_*(alpha) = 1 + (2 - alpha)/N`.
pub fn critical_exponent(alpha: f64, dim: usize) -> f64 {
    1.0 + (2.0 - alpha) / dim as f64
}

/// Volume of the unit ball in `R^n` (`c_N`).
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        2 => PI,
        _ => unit_ball_volume(n - 2) * 2.0 * PI / n as f64,
    }
}

/// Surface area of the unit sphere `S^{n-1}` in `R^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight() {
        let w = Weight::axis(0.0, 3);
        assert_eq!(w.evaluate(&[0.0, 1.0, -2.0]).unwrap(), 1.0);
        assert_eq!(w.evaluate(&[5.0, 1.0, -2.0]).unwrap(), 1.0);
    }

    #[test]
    fn direct_evaluation() {
        let w = Weight::axis(0.5, 2);
        assert!((w.evaluate(&[4.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        let r = Weight::radial(-1.0, 2);
        assert!((r.evaluate(&[3.0, 4.0]).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn singular_set() {
        let w = Weight::axis(-0.5, 2);
        assert!(matches!(w.evaluate(&[0.0, 3.0]), Err(Error::SingularPoint(_))));
        assert_eq!(Weight::axis(0.5, 1).evaluate(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn admissible_ranges() {
        assert!(Weight::axis(0.9, 2).is_admissible());
        assert!(!Weight::axis(1.0, 2).is_admissible());
        assert!(!Weight::axis(0.7, 3).is_admissible());
        assert!(Weight::axis(0.6, 3).is_admissible());
        assert!(Weight::radial(-1.5, 2).is_admissible());
        assert!(!Weight::radial(-1.5, 1).is_admissible());
        assert!(!Weight::radial(1.0, 4).is_admissible());
        assert!(Weight::admissible(WeightKind::AxisPower, 1.5, 1).is_err());
    }

    #[test]
    fn critical_exponents() {
        assert_eq!(critical_exponent(0.0, 2), 2.0);
        assert_eq!(critical_exponent(0.5, 1), 2.5);
        assert_eq!(Weight::radial(-1.0, 2).critical_exponent(), 2.5);
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-14);
    }
}
