//! Cell-centered uniform meshes on `[-L, L]^N` and step-function fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{GL8_NODES, GL8_WEIGHTS};

/// Uniform cell-centered grid on the box `[-L, L]^N`, `N ∈ {1, 2}`.
///
/// The number of cells per axis is even, so the coordinate hyperplanes are
/// cell faces and no cell center lies on the singular set of either weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub cells: usize,
    pub half_width: f64,
}

impl Grid {
    pub fn new(dim: usize, cells: usize, half_width: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidInput(format!("grids support N = 1 or 2, got {dim}")));
        }
        if cells < 2 || !cells.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "cells per axis must be even and at least 2, got {cells}"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidInput(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        Ok(Self { dim, cells, half_width })
    }

    /// Grid with spacing `h` covering at least `[-L, L]` (L rounded up).
    pub fn with_spacing(dim: usize, spacing: f64, min_half_width: f64) -> Result<Self> {
        let half = (min_half_width / spacing).ceil().max(1.0) as usize;
        Self::new(dim, 2 * half, half as f64 * spacing)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.cells as f64
    }

    pub fn cell_measure(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain_measure(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    /// Center coordinate of cell `i` along one axis.
    pub fn axis_center(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    /// Per-axis indices of a flat cell index (axis 0 fastest).
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % self.cells, idx / self.cells]
        }
    }

    pub fn flat_index(&self, mi: [usize; 2]) -> usize {
        if self.dim == 1 {
            mi[0]
        } else {
            mi[1] * self.cells + mi[0]
        }
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        let mi = self.multi_index(idx);
        (0..self.dim).map(|d| self.axis_center(mi[d])).collect()
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }

    /// Euclidean norm of every cell center.
    pub fn center_norms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.center(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Cells whose closure contains `y` (one to `2^N` cells).
    pub fn cells_containing(&self, y: &[f64]) -> Result<Vec<usize>> {
        if y.len() != self.dim {
            return Err(Error::InvalidInput(format!("point {y:?} is not in R^{}", self.dim)));
        }
        let h = self.spacing();
        let mut per_axis: Vec<Vec<usize>> = Vec::with_capacity(self.dim);
        for &c in y {
            if !(c.abs() <= self.half_width) {
                return Err(Error::InvalidInput(format!("point {y:?} lies outside the grid")));
            }
            let s = (c + self.half_width) / h;
            let k = s.floor();
            let mut ids = Vec::new();
            if (s - k).abs() < 1e-9 {
                // on a face
                let k = k as usize;
                if k > 0 {
                    ids.push(k - 1);
                }
                if k < self.cells {
                    ids.push(k);
                }
            } else {
                ids.push((k as usize).min(self.cells - 1));
            }
            per_axis.push(ids);
        }
        let mut out = Vec::new();
        if self.dim == 1 {
            out.extend(per_axis[0].iter().copied());
        } else {
            for &j in &per_axis[1] {
                for &i in &per_axis[0] {
                    out.push(self.flat_index([i, j]));
                }
            }
        }
        Ok(out)
    }

    /// Flags cells in the outer shell: some coordinate with `|x_d| > (1 - frac) L`.
    pub fn shell_mask(&self, frac: f64) -> Vec<bool> {
        let cut = (1.0 - frac) * self.half_width;
        (0..self.len())
            .map(|i| self.center(i).iter().any(|c| c.abs() > cut))
            .collect()
    }

    /// Cell averages of a pointwise function by tensor Gauss–Legendre (8 points per axis).
    pub fn cell_averages<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let h = self.spacing();
        let mut out = Vec::with_capacity(self.len());
        let mut pt = vec![0.0; self.dim];
        for idx in 0..self.len() {
            let c = self.center(idx);
            let mut acc = 0.0;
            if self.dim == 1 {
                for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
                    pt[0] = c[0] + 0.5 * h * x;
                    acc += w * f(&pt);
                }
                acc *= 0.5;
            } else {
                for (x, wx) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
                    for (y, wy) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
                        pt[0] = c[0] + 0.5 * h * x;
                        pt[1] = c[1] + 0.5 * h * y;
                        acc += wx * wy * f(&pt);
                    }
                }
                acc *= 0.25;
            }
            out.push(acc);
        }
        out
    }
}

/// Cell-average values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: Grid, f: F) -> Self {
        let values = grid.cell_averages(f);
        Self { grid, values }
    }

    pub fn integral(&self) -> f64 {
        self.grid.cell_measure() * self.values.iter().sum::<f64>()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn shell_mass(&self, frac: f64) -> f64 {
        let m = self.grid.cell_measure();
        self.grid
            .shell_mask(frac)
            .iter()
            .zip(&self.values)
            .filter(|(s, _)| **s)
            .map(|(_, v)| v.abs() * m)
            .sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Linear interpolation of the cell values at an arbitrary point
    /// (constant extrapolation beyond the outermost centers).
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let h = self.grid.spacing();
        let n = self.grid.cells;
        let locate = |c: f64| {
            let s = ((c + self.grid.half_width) / h - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            (i, s - i as f64)
        };
        if self.grid.dim == 1 {
            let (i, f) = locate(x[0]);
            (1.0 - f) * self.values[i] + f * self.values[i + 1]
        } else {
            let (i, fx) = locate(x[0]);
            let (j, fy) = locate(x[1]);
            let v = |a: usize, b: usize| self.values[self.grid.flat_index([a, b])];
            (1.0 - fy) * ((1.0 - fx) * v(i, j) + fx * v(i + 1, j))
                + fy * ((1.0 - fx) * v(i, j + 1) + fx * v(i + 1, j + 1))
        }
    }
}
