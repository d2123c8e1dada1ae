//! Rearrangements and Lorentz norms of step functions.
//!
//! Fields are cell-average step functions, so the distribution function,
//! `f*`, `f**` and the weak norm are computed exactly: `f*` is the sorted
//! list of `|f|` with cumulative cell measures, `f**` is its prefix integral.

use serde::Serialize;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::Field;

/// `μ(λ) = |{ |f| > λ }|`.
///
/// Cell measures are accumulated one at a time, the same way the
/// rearrangement table accumulates them, so the two agree bit for bit.
pub fn distribution_function(field: &Field, lambda: f64) -> f64 {
    let m = field.grid.cell_measure();
    field
        .values
        .iter()
        .filter(|v| v.abs() > lambda)
        .fold(0.0, |acc, _| acc + m)
}

/// The non-increasing rearrangement of a step function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RearrangementTable {
    /// `|f|` values in non-increasing order (zero values dropped).
    pub thresholds: Vec<f64>,
    /// Cumulative measures: `measures[k] = Σ_{i <= k} m_i`.
    pub measures: Vec<f64>,
    /// Prefix integrals `∫_0^{measures[k]} f*`.
    prefix: Vec<f64>,
}

impl RearrangementTable {
    pub fn from_field(field: &Field) -> Self {
        let m = field.grid.cell_measure();
        Self::from_cells(field.values.iter().map(|&v| (v, m)))
    }

    /// Builds the table from `(value, cell measure)` pairs.
    pub fn from_cells<I: IntoIterator<Item = (f64, f64)>>(cells: I) -> Self {
        let mut pairs: Vec<(f64, f64)> = cells
            .into_iter()
            .filter(|&(v, m)| v != 0.0 && m > 0.0)
            .map(|(v, m)| (v.abs(), m))
            .collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut thresholds = Vec::with_capacity(pairs.len());
        let mut measures = Vec::with_capacity(pairs.len());
        let mut prefix = Vec::with_capacity(pairs.len());
        let mut cum = 0.0;
        let mut integral = 0.0;
        for (v, m) in pairs {
            cum += m;
            integral += v * m;
            thresholds.push(v);
            measures.push(cum);
            prefix.push(integral);
        }
        Self {
            thresholds,
            measures,
            prefix,
        }
    }

    pub fn support_measure(&self) -> f64 {
        self.measures.last().copied().unwrap_or(0.0)
    }

    pub fn total_integral(&self) -> f64 {
        self.prefix.last().copied().unwrap_or(0.0)
    }

    /// Index `k` with `measures[k-1] <= s < measures[k]`.
    fn segment(&self, s: f64) -> usize {
        self.measures.partition_point(|&m| m <= s)
    }

    /// `f*(s) = inf{λ > 0 : μ(λ) <= s}`.
    pub fn f_star(&self, s: f64) -> f64 {
        let k = self.segment(s);
        self.thresholds.get(k).copied().unwrap_or(0.0)
    }

    /// `∫_0^s f*`.
    pub fn integral_to(&self, s: f64) -> f64 {
        let k = self.segment(s);
        if k >= self.thresholds.len() {
            return self.total_integral();
        }
        let (before_m, before_i) = if k == 0 {
            (0.0, 0.0)
        } else {
            (self.measures[k - 1], self.prefix[k - 1])
        };
        before_i + self.thresholds[k] * (s - before_m)
    }

    /// `f**(s) = (1/s) ∫_0^s f*`.
    pub fn f_star_star(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.thresholds.first().copied().unwrap_or(0.0);
        }
        self.integral_to(s) / s
    }

    /// Distribution function of `f*` (equal to that of `f`).
    pub fn distribution(&self, lambda: f64) -> f64 {
        let k = self.thresholds.partition_point(|&v| v > lambda);
        if k == 0 {
            0.0
        } else {
            self.measures[k - 1]
        }
    }

    /// `sup_s s^{1/r} f**(s)`.
    ///
    /// Between consecutive breakpoints `s^{1/r} f**(s) = A s^{1/r-1} + v s^{1/r}`
    /// has a single interior minimum and no interior maximum, and beyond the
    /// support it decreases, so the supremum sits on a breakpoint.
    pub fn weak_norm(&self, r: f64) -> f64 {
        if r.is_infinite() {
            return self.thresholds.first().copied().unwrap_or(0.0);
        }
        self.measures
            .iter()
            .zip(&self.prefix)
            .map(|(&s, &i)| s.powf(1.0 / r - 1.0) * i)
            .fold(0.0, f64::max)
    }

    /// CSV rows `s, f*, f**, s^{1/r} f**` at every breakpoint.
    pub fn to_csv(&self, r: f64) -> String {
        let mut out = String::from("s,f_star,f_star_star,weighted\n");
        for (k, &s) in self.measures.iter().enumerate() {
            let fss = self.prefix[k] / s;
            let _ = writeln!(
                out,
                "{},{},{},{}",
                crate::report::fmt17(s),
                crate::report::fmt17(self.thresholds[k]),
                crate::report::fmt17(fss),
                crate::report::fmt17(s.powf(1.0 / r) * fss)
            );
        }
        out
    }
}

pub fn rearrangement(field: &Field) -> RearrangementTable {
    RearrangementTable::from_field(field)
}

/// Discrete spherical rearrangement: the sorted values of `|f|` are laid
/// out on cells in order of increasing distance of the center from the
/// origin. Exactly equimeasurable with `f`; agrees with `f*(c_N |x|^N)` up
/// to one cell.
pub fn spherical_rearrangement(field: &Field) -> Field {
    let mut vals: Vec<f64> = field.values.iter().map(|v| v.abs()).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let norms = field.grid.center_norms();
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; vals.len()];
    for (rank, &cell) in order.iter().enumerate() {
        out[cell] = vals[rank];
    }
    Field {
        grid: field.grid,
        values: out,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NormKind {
    /// `‖·‖_{r,∞}`
    Weak,
    /// `L^r`
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LorentzNorm {
    pub r: f64,
    pub value: f64,
    pub kind: NormKind,
}

/// `‖f‖_{r,∞} = sup_{s>0} s^{1/r} f**(s)` for `r ∈ [1, ∞]`.
pub fn weak_norm(field: &Field, r: f64) -> Result<LorentzNorm> {
    if !(r >= 1.0) {
        return Err(Error::InvalidInput(format!("weak norm needs r >= 1, got {r}")));
    }
    check_finite(field)?;
    Ok(LorentzNorm {
        r,
        value: rearrangement(field).weak_norm(r),
        kind: NormKind::Weak,
    })
}

/// Cell-measure weighted `L^q` norm; `q = ∞` is the maximum of `|f|`.
pub fn strong_norm(field: &Field, q: f64) -> Result<LorentzNorm> {
    if !(q >= 1.0) {
        return Err(Error::InvalidInput(format!("L^q norm needs q >= 1, got {q}")));
    }
    check_finite(field)?;
    let value = if q.is_infinite() {
        field.sup()
    } else {
        let m = field.grid.cell_measure();
        let scale = field.sup();
        if scale == 0.0 {
            0.0
        } else {
            // scaled to avoid overflow of large powers
            scale * (m * field.values.iter().map(|v| (v.abs() / scale).powf(q)).sum::<f64>()).powf(1.0 / q)
        }
    };
    Ok(LorentzNorm {
        r: q,
        value,
        kind: NormKind::Strong,
    })
}

fn check_finite(field: &Field) -> Result<()> {
    if field.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("field has non-finite values".into()));
    }
    Ok(())
}

/// `‖∏ f_j‖_{r,∞} / ∏ ‖f_j‖_{r_j,∞}` with `1/r = Σ 1/r_j`.
///
/// Fails with `NotApplicable` when some factor has zero norm.
pub fn weak_holder_check(fields: &[&Field], exponents: &[f64]) -> Result<f64> {
    if fields.is_empty() || fields.len() != exponents.len() {
        return Err(Error::InvalidInput("need one exponent per field".into()));
    }
    if exponents.iter().any(|&r| !(r > 1.0 && r.is_finite())) {
        return Err(Error::InvalidInput("exponents must be finite and > 1".into()));
    }
    let inv: f64 = exponents.iter().map(|r| 1.0 / r).sum();
    if !(inv < 1.0) {
        return Err(Error::InvalidInput("combined exponent must exceed 1".into()));
    }
    let r = 1.0 / inv;
    let grid = fields[0].grid;
    if fields.iter().any(|f| f.grid != grid) {
        return Err(Error::InvalidInput("fields live on different grids".into()));
    }
    let mut denom = 1.0;
    for (f, &rj) in fields.iter().zip(exponents) {
        denom *= weak_norm(f, rj)?.value;
    }
    if denom == 0.0 {
        return Err(Error::NotApplicable("a factor has zero weak norm".into()));
    }
    let mut prod = vec![1.0; grid.len()];
    for f in fields {
        for (p, v) in prod.iter_mut().zip(&f.values) {
            *p *= v;
        }
    }
    let num = weak_norm(&Field { grid, values: prod }, r)?.value;
    Ok(num / denom)
}
