//! Initial data menu, emitted as cell averages.

use serde::{Deserialize, Serialize};

use crate::grid::{Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialData {
    /// Smooth compactly supported bump `A exp(1 - 1/(1 - (|x|/R)^2))`, peak `A` at 0.
    Bump {
        amplitude: f64,
        radius: f64,
    },
    /// `δ / (1 + |x|^k)` with `k = (2 - alpha)/(p - 1)`.
    Threshold {
        delta: f64,
        decay: f64,
    },
    Constant {
        value: f64,
    },
    /// `A exp(-|x|^2 / w^2)`.
    Gaussian {
        amplitude: f64,
        width: f64,
    },
    /// `A |x - c|^{-γ}` along the first axis, averaged in closed form (1D only).
    Power {
        amplitude: f64,
        gamma: f64,
        center: f64,
    },
    /// `A` on `[lo, hi]` along the first axis, averaged exactly.
    Indicator {
        amplitude: f64,
        lo: f64,
        hi: f64,
    },
}

impl InitialData {
    pub fn threshold(delta: f64, alpha: f64, p: f64) -> Self {
        InitialData::Threshold {
            delta,
            decay: (2.0 - alpha) / (p - 1.0),
        }
    }

    /// Radius of the support, `None` when not compactly supported.
    pub fn support_radius(&self) -> Option<f64> {
        match *self {
            InitialData::Bump { radius, .. } => Some(radius),
            InitialData::Indicator { lo, hi, .. } => Some(lo.abs().max(hi.abs())),
            _ => None,
        }
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        match *self {
            InitialData::Bump { amplitude, radius } => {
                let q = r / radius;
                if q >= 1.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / (1.0 - q * q)).exp()
                }
            }
            InitialData::Threshold { delta, decay } => delta / (1.0 + r.powf(decay)),
            InitialData::Constant { value } => value,
            InitialData::Gaussian { amplitude, width } => amplitude * (-(r * r) / (width * width)).exp(),
            InitialData::Power {
                amplitude,
                gamma,
                center,
            } => {
                let d = (x[0] - center).abs();
                amplitude * d.powf(-gamma)
            }
            InitialData::Indicator { amplitude, lo, hi } => {
                if x[0] >= lo && x[0] <= hi {
                    amplitude
                } else {
                    0.0
                }
            }
        }
    }

    pub fn to_field(&self, grid: &Grid) -> Field {
        match *self {
            InitialData::Constant { value } => Field::new(*grid, vec![value; grid.len()]).expect("sized"),
            InitialData::Power {
                amplitude,
                gamma,
                center,
            } => {
                let h = grid.spacing();
                let anti = |s: f64| s.signum() * s.abs().powf(1.0 - gamma) / (1.0 - gamma);
                let values = (0..grid.len())
                    .map(|i| {
                        let c = grid.center(i)[0];
                        amplitude * (anti(c + 0.5 * h - center) - anti(c - 0.5 * h - center)) / h
                    })
                    .collect();
                Field::new(*grid, values).expect("sized")
            }
            InitialData::Indicator { amplitude, lo, hi } => {
                let h = grid.spacing();
                let values = (0..grid.len())
                    .map(|i| {
                        let c = grid.center(i)[0];
                        let overlap = ((c + 0.5 * h).min(hi) - (c - 0.5 * h).max(lo)).max(0.0);
                        amplitude * overlap / h
                    })
                    .collect();
                Field::new(*grid, values).expect("sized")
            }
            _ => Field::from_fn(*grid, |x| self.value_at(x)),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            InitialData::Bump { .. } => "bump",
            InitialData::Threshold { .. } => "threshold",
            InitialData::Constant { .. } => "constant",
            InitialData::Gaussian { .. } => "gaussian",
            InitialData::Power { .. } => "power",
            InitialData::Indicator { .. } => "indicator",
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            InitialData::Bump { amplitude, .. }
            | InitialData::Gaussian { amplitude, .. }
            | InitialData::Power { amplitude, .. }
            | InitialData::Indicator { amplitude, .. } => amplitude == 0.0,
            InitialData::Threshold { delta, .. } => delta == 0.0,
            InitialData::Constant { value } => value == 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_value() {
        let d = InitialData::threshold(1.5, 0.5, 4.0);
        assert!((d.value_at(&[4.0]) - 0.5).abs() < 1e-15);
        assert!((d.value_at(&[0.0]) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn power_cell_average_preserves_integral() {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let f = InitialData::Power {
            amplitude: 1.0,
            gamma: 0.5,
            center: 0.0,
        }
        .to_field(&g);
        // ∫_{-4}^{4} |x|^{-1/2} = 2 · 2 · 2 = 8
        assert!((f.integral() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn indicator_average() {
        let g = Grid::new(1, 8, 2.0).unwrap();
        let f = InitialData::Indicator {
            amplitude: 3.0,
            lo: 0.0,
            hi: 1.25,
        }
        .to_field(&g);
        assert!((f.integral() - 3.75).abs() < 1e-14);
        assert!((f.values[6] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn bump_is_compact() {
        let d = InitialData::Bump {
            amplitude: 2.0,
            radius: 1.0,
        };
        assert_eq!(d.value_at(&[1.0]), 0.0);
        assert!((d.value_at(&[0.0]) - 2.0).abs() < 1e-15);
        assert_eq!(d.support_radius(), Some(1.0));
    }
}
