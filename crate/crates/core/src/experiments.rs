//! Blow-up versus global-existence experiments around the critical exponent.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::InitialData;
use crate::error::{Error, Result};
use crate::evolution::{run, OutcomeKind, RunConfig, RunOutcome};
use crate::fit::{decay_fit, last_decades, least_squares, DecayFit};
use crate::grid::{Field, Grid};
use crate::kernel::NormFamily;
use crate::lorentz::weak_norm;
use crate::report::{csv_table, fmt17};
use crate::weight::Weight;

pub use crate::weight::critical_exponent;

/// Exponents attached to `(α, N, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentTable {
    pub alpha: f64,
    pub dim: usize,
    pub p: f64,
    pub p_star: f64,
    /// `N(p-1)/(2-α)`.
    pub r_star: f64,
}

impl ExponentTable {
    pub fn new(alpha: f64, dim: usize, p: f64) -> Self {
        Self {
            alpha,
            dim,
            p,
            p_star: critical_exponent(alpha, dim),
            r_star: dim as f64 * (p - 1.0) / (2.0 - alpha),
        }
    }

    /// `(N/(2-α))(1/r_* - 1/q)`; equal to `1/(p-1)` at `q = ∞`.
    pub fn decay(&self, q: f64) -> f64 {
        let n = self.dim as f64 / (2.0 - self.alpha);
        if q.is_infinite() {
            n / self.r_star
        } else {
            n * (1.0 / self.r_star - 1.0 / q)
        }
    }

    /// Scaling exponent `N / r_* = (2-α)/(p-1)`.
    pub fn scaling_exponent(&self) -> f64 {
        self.dim as f64 / self.r_star
    }

    pub fn supercritical(&self) -> bool {
        self.p > self.p_star
    }
}

/// `δ / (1 + |x|^{(2-α)/(p-1)})` as cell averages.
pub fn threshold_data(delta: f64, alpha: f64, p: f64, grid: &Grid) -> Result<Field> {
    let t = ExponentTable::new(alpha, grid.dim, p);
    if !t.supercritical() {
        return Err(Error::InvalidInput(format!(
            "threshold data needs p > p_* = {}",
            t.p_star
        )));
    }
    Ok(InitialData::threshold(delta, alpha, p).to_field(grid))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Consistency {
    Consistent,
    Inconsistent,
    /// No blow-up within the horizon below the critical exponent.
    Undecided,
    /// Blow-up above the critical exponent, allowed for data that is not small.
    ConsistentWithSmallnessHypothesis,
}

impl Consistency {
    pub fn name(&self) -> &'static str {
        match self {
            Consistency::Consistent => "Consistent",
            Consistency::Inconsistent => "Inconsistent",
            Consistency::Undecided => "Undecided",
            Consistency::ConsistentWithSmallnessHypothesis => "ConsistentWithSmallnessHypothesis",
        }
    }
}

/// Relative tolerance on decay slopes of nonlinear runs.
pub const SLOPE_TOLERANCE: f64 = 0.15;
/// Absolute tolerance on the weak `r_*` channel slope.
pub const WEAK_SLOPE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub p: f64,
    pub alpha: f64,
    pub dim: usize,
    pub data: InitialData,
    pub table: ExponentTable,
    pub outcome: OutcomeKind,
    pub slope_inf: Option<DecayFit>,
    pub slope_weak_rstar: Option<DecayFit>,
    pub expected_inf: f64,
    pub expected_weak: f64,
    pub consistency: Consistency,
    pub note: Option<String>,
}

/// Expected long-time slopes `(sup channel, weak r_* channel)` by data class:
/// threshold data keeps its `L^{r_*,∞}` size, integrable data decays linearly.
fn expected_slopes(t: &ExponentTable, data: &InitialData) -> (f64, f64) {
    let lin = t.dim as f64 / (2.0 - t.alpha);
    match data {
        InitialData::Threshold { .. } | InitialData::Constant { .. } => (-t.decay(f64::INFINITY), 0.0),
        _ => (-lin, -lin * (1.0 - 1.0 / t.r_star)),
    }
}

/// Runs `cfg` and labels the outcome against the exponent table.
pub fn classify(cfg: &RunConfig) -> Result<PhasePoint> {
    let out = run(cfg)?;
    Ok(label(cfg, out))
}

/// Labels an existing run of `cfg`.
pub fn label(cfg: &RunConfig, out: RunOutcome) -> PhasePoint {
    let table = ExponentTable::new(cfg.alpha(), cfg.weight.dim, cfg.p);
    let (expected_inf, expected_weak) = expected_slopes(&table, &cfg.data);
    let mut point = PhasePoint {
        p: cfg.p,
        alpha: cfg.alpha(),
        dim: cfg.weight.dim,
        data: cfg.data,
        table,
        outcome: out.kind,
        slope_inf: None,
        slope_weak_rstar: None,
        expected_inf,
        expected_weak,
        consistency: Consistency::Undecided,
        note: None,
    };
    match out.kind {
        OutcomeKind::BlowUp { .. } => {
            point.consistency = if table.supercritical() {
                Consistency::ConsistentWithSmallnessHypothesis
            } else {
                Consistency::Consistent
            };
        }
        OutcomeKind::HorizonReached | OutcomeKind::Global => {
            if !table.supercritical() {
                point.consistency = Consistency::Undecided;
                point.note = Some("no blow-up within the horizon".into());
                return point;
            }
            let fit = |family: NormFamily, q: f64| -> Option<Result<DecayFit>> {
                let ch = out.channel(family, q)?;
                let window = last_decades(&ch.series, 1.0)?;
                Some(decay_fit(&ch.series, Some(window), 0.0))
            };
            match fit(NormFamily::Strong, f64::INFINITY) {
                Some(Ok(f)) => point.slope_inf = Some(f),
                Some(Err(e)) => {
                    point.note = Some(e.to_string());
                    return point;
                }
                None => {
                    point.note = Some("no sup channel recorded".into());
                    return point;
                }
            }
            if let Some(Ok(f)) = fit(NormFamily::Weak, table.r_star) {
                point.slope_weak_rstar = Some(f);
            }
            let s = point.slope_inf.map(|f| f.slope).unwrap_or(f64::NAN);
            let inf_ok = (s - expected_inf).abs() <= SLOPE_TOLERANCE * expected_inf.abs();
            let weak_ok = point.slope_weak_rstar.is_none_or(|f| {
                (f.slope - expected_weak).abs() <= WEAK_SLOPE_TOLERANCE.max(SLOPE_TOLERANCE * expected_weak.abs())
            });
            if inf_ok && weak_ok {
                point.consistency = Consistency::Consistent;
                point.outcome = OutcomeKind::Global;
            } else {
                point.consistency = Consistency::Inconsistent;
            }
        }
    }
    point
}

/// Halves the threshold amplitude from `delta0` until the run is labeled
/// Global; returns the amplitude found and its phase point.
pub fn search_global_delta(cfg: &RunConfig, delta0: f64, max_halvings: usize) -> Result<(f64, PhasePoint)> {
    let mut delta = delta0;
    let mut last_err = None;
    for _ in 0..=max_halvings {
        let mut c = cfg.clone();
        c.data = InitialData::threshold(delta, cfg.alpha(), cfg.p);
        match classify(&c) {
            Ok(pt) if pt.outcome == OutcomeKind::Global => return Ok((delta, pt)),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
        delta *= 0.5;
    }
    Err(last_err.unwrap_or_else(|| Error::NotApplicable(format!("no Global run down to delta = {}", 2.0 * delta))))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassGrowthReport {
    pub outcome: OutcomeKind,
    pub t_lo: f64,
    pub t_hi: f64,
    pub points: usize,
    /// Slope of `∫u` against `log t`.
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual over the fitted rise across the window.
    pub relative_residual: f64,
    pub pass: bool,
}

pub const MASS_GROWTH_RESIDUAL: f64 = 0.2;

/// Fits `∫u dx` against `log t` over the last decade before blow-up or the horizon.
pub fn critical_mass_growth(cfg: &RunConfig) -> Result<MassGrowthReport> {
    if cfg.data.is_zero() {
        return Err(Error::NotApplicable("trivial data".into()));
    }
    let out = run(cfg)?;
    mass_growth_fit(&out)
}

pub fn mass_growth_fit(out: &RunOutcome) -> Result<MassGrowthReport> {
    let end = match out.kind {
        OutcomeKind::BlowUp { lower, .. } => lower,
        _ => out.diagnostics.final_time,
    };
    let pts: Vec<(f64, f64)> = out
        .mass
        .iter()
        .copied()
        .filter(|&(t, _)| t <= end && t >= end / 10.0 * (1.0 - 1e-12))
        .collect();
    if pts.len() < 8 {
        return Err(Error::WindowTooShort(format!("{} usable points, need 8", pts.len())));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let f = least_squares(&x, &y);
    let (t_lo, t_hi) = (pts[0].0, pts[pts.len() - 1].0);
    let rise = (f.slope * (t_hi / t_lo).ln()).abs();
    let relative_residual = if rise > 0.0 { f.rms / rise } else { f64::INFINITY };
    Ok(MassGrowthReport {
        outcome: out.kind,
        t_lo,
        t_hi,
        points: pts.len(),
        slope: f.slope,
        intercept: f.intercept,
        relative_residual,
        pass: f.slope > 0.0 && relative_residual <= MASS_GROWTH_RESIDUAL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma31Report {
    /// `sup_t t^{1/(p-1)} ‖S(t)φ‖_∞` over the samples.
    pub sup_value: f64,
    pub argmax: f64,
    pub fit: DecayFit,
    /// `1/(p-1) - N/(2-α)`.
    pub expected_slope: f64,
}

/// `t^{1/(p-1)} ‖S(t)φ‖_∞` along a linear sup-norm series; the log-slope is
/// fitted over `window` (all points when `None`).
pub fn lemma31_functional(
    series: &[(f64, f64)],
    p: f64,
    w: &Weight,
    window: Option<(f64, f64)>,
) -> Result<Lemma31Report> {
    let g: Vec<(f64, f64)> = series.iter().map(|&(t, v)| (t, t.powf(1.0 / (p - 1.0)) * v)).collect();
    let (argmax, sup_value) = g
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let fit = decay_fit(&g, window, 0.0)?;
    Ok(Lemma31Report {
        sup_value,
        argmax,
        fit,
        expected_slope: 1.0 / (p - 1.0) - w.dim as f64 / w.diffusion_order(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AkConstant {
    pub p: f64,
    pub j_max: usize,
    pub value: f64,
    /// Upper bound on `Π_{j>j_max}` contributions, as a bound on the product increment.
    pub tail_bound: f64,
    pub partial_products: Vec<f64>,
    pub monotone: bool,
    /// `exp Σ_{j>=1} p^{-j-1} log((j+1) p^j)`.
    pub comparison_bound: f64,
}

/// `Π_{j=1}^{j_max} ((p^{j+1}-1)/(p-1))^{p^{-j-1}}` with a tail bound from
/// `log((p^{j+1}-1)/(p-1)) <= log((j+1)p^j) <= j (1 + log p)`.
pub fn ak_constant(p: f64, j_max: usize) -> Result<AkConstant> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidInput(format!("p must exceed 1, got {p}")));
    }
    let lp = p.ln();
    let mut log_sum = 0.0;
    let mut partial_products = Vec::with_capacity(j_max);
    for j in 1..=j_max {
        let jf = j as f64;
        // log((p^{j+1} - 1)/(p - 1)) = log Σ_{i=0}^{j} p^i
        let e = (jf + 1.0) * lp;
        let factor = if e > 30.0 {
            e + (-(-e).exp()).ln_1p() - (p - 1.0).ln()
        } else {
            e.exp_m1().ln() - (p - 1.0).ln()
        };
        log_sum += (-(jf + 1.0) * lp).exp() * factor;
        partial_products.push(log_sum.exp());
    }
    let x = 1.0 / p;
    let jj = (j_max + 1) as f64;
    let tail_log = (1.0 + lp) / p * x.powf(jj) * (jj - (jj - 1.0) * x) / (1.0 - x).powi(2);
    let value = log_sum.exp();
    let mut comparison = 0.0;
    let mut j = 1.0f64;
    loop {
        let term = (-(j + 1.0) * lp).exp() * ((j + 1.0).ln() + j * lp);
        comparison += term;
        if term < 1e-18 * comparison || j > 1e6 {
            break;
        }
        j += 1.0;
    }
    Ok(AkConstant {
        p,
        j_max,
        value,
        tail_bound: value * tail_log.exp_m1(),
        monotone: partial_products.windows(2).all(|w| w[1] >= w[0]),
        partial_products,
        comparison_bound: comparison.exp(),
    })
}

/// Sweep grid and template run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub p_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub template: RunConfig,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub alpha: f64,
    pub dim: usize,
    pub p_star: f64,
    pub r_star: f64,
    pub outcome: String,
    pub t_blowup_lo: Option<f64>,
    pub t_blowup_hi: Option<f64>,
    pub slope_inf: Option<f64>,
    pub slope_weak_rstar: Option<f64>,
    pub consistency: String,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: [&str; 11] = [
    "p",
    "alpha",
    "N",
    "p_star",
    "r_star",
    "outcome",
    "t_blowup_lo",
    "t_blowup_hi",
    "slope_inf",
    "slope_weak_rstar",
    "consistency",
];

impl SweepRow {
    pub fn from_point(pt: &PhasePoint) -> Self {
        let (lo, hi) = match pt.outcome {
            OutcomeKind::BlowUp { lower, upper, .. } => (Some(lower), Some(upper)),
            _ => (None, None),
        };
        Self {
            p: pt.p,
            alpha: pt.alpha,
            dim: pt.dim,
            p_star: pt.table.p_star,
            r_star: pt.table.r_star,
            outcome: pt.outcome.name().into(),
            t_blowup_lo: lo,
            t_blowup_hi: hi,
            slope_inf: pt.slope_inf.map(|f| f.slope),
            slope_weak_rstar: pt.slope_weak_rstar.map(|f| f.slope),
            consistency: pt.consistency.name().into(),
            error: None,
        }
    }

    fn cells(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
        vec![
            fmt17(self.p),
            fmt17(self.alpha),
            self.dim.to_string(),
            fmt17(self.p_star),
            fmt17(self.r_star),
            self.outcome.clone(),
            opt(self.t_blowup_lo),
            opt(self.t_blowup_hi),
            opt(self.slope_inf),
            opt(self.slope_weak_rstar),
            self.consistency.clone(),
        ]
    }
}

/// Template configuration at one grid node; threshold data is re-shaped
/// for the node's `(α, p)`.
pub fn node_config(template: &RunConfig, p: f64, alpha: f64) -> RunConfig {
    let mut c = template.clone();
    c.weight = Weight::new(template.weight.kind, alpha, template.weight.dim);
    c.p = p;
    if let InitialData::Threshold { delta, .. } = template.data {
        c.data = InitialData::threshold(delta, alpha, p);
    }
    let r_star = c.weight.dim as f64 * (p - 1.0) / c.weight.diffusion_order();
    c.weak_q = if r_star >= 1.0 { vec![r_star] } else { vec![] };
    c
}

/// One row per `(α, p)` node, α-major; errors are recorded in the row.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let nodes: Vec<(f64, f64)> = spec
        .alpha_values
        .iter()
        .flat_map(|&a| spec.p_values.iter().map(move |&p| (p, a)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    let rows = pool.install(|| {
        nodes
            .par_iter()
            .map(|&(p, alpha)| {
                let cfg = node_config(&spec.template, p, alpha);
                match classify(&cfg) {
                    Ok(pt) => SweepRow::from_point(&pt),
                    Err(e) => {
                        let t = ExponentTable::new(alpha, cfg.weight.dim, p);
                        SweepRow {
                            p,
                            alpha,
                            dim: cfg.weight.dim,
                            p_star: t.p_star,
                            r_star: t.r_star,
                            outcome: "Error".into(),
                            t_blowup_lo: None,
                            t_blowup_hi: None,
                            slope_inf: None,
                            slope_weak_rstar: None,
                            consistency: "Undecided".into(),
                            error: Some(e.to_string()),
                        }
                    }
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let cells: Vec<Vec<String>> = rows.iter().map(|r| r.cells()).collect();
    csv_table(&SWEEP_HEADER, &cells)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointStatus {
    pub p: f64,
    pub alpha: f64,
    pub outcome: String,
    pub consistency: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepManifest {
    pub config_hash: String,
    pub points: Vec<PointStatus>,
}

pub fn sweep_manifest(rows: &[SweepRow], config_hash: &str) -> SweepManifest {
    SweepManifest {
        config_hash: config_hash.to_string(),
        points: rows
            .iter()
            .map(|r| PointStatus {
                p: r.p,
                alpha: r.alpha,
                outcome: r.outcome.clone(),
                consistency: r.consistency.clone(),
                error: r.error.clone(),
            })
            .collect(),
    }
}

/// `‖threshold_data(δ)‖_{r_*,∞}`.
pub fn threshold_weak_norm(delta: f64, alpha: f64, p: f64, grid: &Grid) -> Result<f64> {
    let t = ExponentTable::new(alpha, grid.dim, p);
    Ok(weak_norm(&threshold_data(delta, alpha, p, grid)?, t.r_star)?.value)
}
