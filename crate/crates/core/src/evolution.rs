//! Time stepping and Picard iteration for `u_t - div(w ∇u) = u^p`.
//!
//! A step is implicit diffusion followed by the exact pointwise flow of
//! `u' = u^p` over the same step. Step sizes are capped by
//! `θ / (p ‖u‖_∞^{p-1})` and drawn from the ladder `dt0 · 2^{k/4}` so
//! factorizations are reused.

use serde::Serialize;

use crate::data::InitialData;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::kernel::{build_propagator, Boundary, NormFamily, Propagator, Scheme, SHELL_FRACTION, SHELL_MASS_LIMIT};
use crate::lorentz::{strong_norm, weak_norm};
use crate::weight::Weight;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub weight: Weight,
    pub p: f64,
    pub grid: Grid,
    pub data: InitialData,
    pub horizon: f64,
    pub dt0: f64,
    pub theta: f64,
    /// Steps grow like `dt_rel · t` once past `dt0`.
    pub dt_rel: f64,
    pub umax: f64,
    pub boundary: Boundary,
    pub snapshots_per_decade: usize,
    pub snapshot_t0: f64,
    pub strong_q: Vec<f64>,
    pub weak_q: Vec<f64>,
}

impl RunConfig {
    /// Defaults: `dt0 = 1e-3`, `θ = 0.5`, `dt_rel = 0.01`, `U_max = 1e8`,
    /// reflecting boundary, 8 snapshots per decade from `t = 0.01`, strong
    /// channels `{1, ∞}` and the weak channel at `r_*` when `r_* >= 1`.
    pub fn new(weight: Weight, p: f64, grid: Grid, data: InitialData, horizon: f64) -> Self {
        let r_star = weight.dim as f64 * (p - 1.0) / weight.diffusion_order();
        Self {
            weight,
            p,
            grid,
            data,
            horizon,
            dt0: 1e-3,
            theta: 0.5,
            dt_rel: 0.01,
            umax: 1e8,
            boundary: Boundary::Reflecting,
            snapshots_per_decade: 8,
            snapshot_t0: 0.01,
            strong_q: vec![1.0, f64::INFINITY],
            weak_q: if r_star >= 1.0 { vec![r_star] } else { vec![] },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weight.check_admissible()?;
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.weight.dim != self.grid.dim {
            return bad(format!(
                "weight dimension {} differs from grid dimension {}",
                self.weight.dim, self.grid.dim
            ));
        }
        if !(self.p > 1.0) || !self.p.is_finite() {
            return bad(format!("p must exceed 1, got {}", self.p));
        }
        if !(self.umax >= 1e6) {
            return bad(format!("blow-up cap must be at least 1e6, got {}", self.umax));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta must lie in (0, 1), got {}", self.theta));
        }
        if !(self.dt0 > 0.0 && self.horizon > 0.0 && self.dt_rel >= 0.0 && self.snapshot_t0 > 0.0) {
            return bad("dt0, horizon and snapshot t0 must be positive".into());
        }
        if self.snapshots_per_decade == 0 {
            return bad("need at least one snapshot per decade".into());
        }
        if self.strong_q.iter().chain(&self.weak_q).any(|q| !(*q >= 1.0)) {
            return bad("channel exponents must be >= 1".into());
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.weight.exponent
    }

    /// `t0 · 10^{k/per_decade}` below the horizon, then the horizon.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let t = self.snapshot_t0 * 10f64.powf(k as f64 / self.snapshots_per_decade as f64);
            if t >= self.horizon * (1.0 - 1e-12) {
                break;
            }
            out.push(t);
            k += 1;
        }
        out.push(self.horizon);
        out
    }

    pub fn propagator(&self) -> Result<Propagator> {
        build_propagator(&self.weight, self.grid, self.dt0, self.boundary, Scheme::ImplicitEuler)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum OutcomeKind {
    BlowUp { t_estimate: f64, lower: f64, upper: f64 },
    Global,
    HorizonReached,
}

impl OutcomeKind {
    pub fn name(&self) -> &'static str {
        match self {
            OutcomeKind::BlowUp { .. } => "BlowUp",
            OutcomeKind::Global => "Global",
            OutcomeKind::HorizonReached => "HorizonReached",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelSeries {
    pub name: String,
    pub q: f64,
    pub family: NormFamily,
    pub series: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub steps: usize,
    /// Steps whose size was set by the growth cap.
    pub cap_limited_steps: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    pub final_time: f64,
    pub final_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub kind: OutcomeKind,
    pub channels: Vec<ChannelSeries>,
    pub mass: Vec<(f64, f64)>,
    pub diagnostics: Diagnostics,
    #[serde(skip)]
    pub final_field: Option<Field>,
}

impl RunOutcome {
    pub fn channel(&self, family: NormFamily, q: f64) -> Option<&ChannelSeries> {
        self.channels
            .iter()
            .find(|c| c.family == family && (c.q == q || (q.is_finite() && (c.q - q).abs() <= 1e-12 * q.abs())))
    }

    pub fn sup_series(&self) -> Option<&[(f64, f64)]> {
        self.channel(NormFamily::Strong, f64::INFINITY)
            .map(|c| c.series.as_slice())
    }
}

/// Exact flow of `u' = u^p` over `dt` applied pointwise.
pub fn source_flow(u: &mut [f64], p: f64, dt: f64) {
    let e = 1.0 - p;
    for v in u.iter_mut() {
        if *v > 0.0 {
            let base = 1.0 - (p - 1.0) * dt * v.powf(p - 1.0);
            *v = if base > 0.0 {
                *v * base.powf(1.0 / e)
            } else {
                f64::INFINITY
            };
        }
    }
}

/// One IMEX step: implicit diffusion, then the source flow on the diffused field.
pub fn step_nonlinear(prop: &Propagator, u: &mut [f64], p: f64, dt: f64, theta: f64) -> Result<()> {
    let sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cap = theta / (p * sup.powf(p - 1.0));
    if dt > cap * (1.0 + 1e-12) {
        return Err(Error::UnstableStep { dt, limit: cap });
    }
    prop.step_dt(u, dt)?;
    source_flow(u, p, dt);
    Ok(())
}

fn ladder(dt0: f64, dt: f64) -> f64 {
    let k = (4.0 * (dt / dt0).log2()).floor();
    let q = dt0 * 2f64.powf(k / 4.0);
    if q > dt {
        dt0 * 2f64.powf((k - 1.0) / 4.0)
    } else {
        q
    }
}

/// Diffusion-length rule for data that already loads the outer shell:
/// `L >= 8 t^{1/(2-α)}`.
fn diffusion_length_ok(cfg: &RunConfig, t: f64) -> bool {
    cfg.grid.half_width >= 8.0 * t.powf(1.0 / cfg.weight.diffusion_order())
}

pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let prop = cfg.propagator()?;
    run_with(&prop, cfg)
}

/// [`run`] with a propagator shared between runs on the same grid and weight.
pub fn run_with(prop: &Propagator, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut u = cfg.data.to_field(&cfg.grid).values;
    if u.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput(
            "initial data must be finite and nonnegative".into(),
        ));
    }
    let grid = cfg.grid;
    let snaps = cfg.snapshot_times();
    let mut channels: Vec<ChannelSeries> = cfg
        .strong_q
        .iter()
        .map(|&q| (q, NormFamily::Strong))
        .chain(cfg.weak_q.iter().map(|&q| (q, NormFamily::Weak)))
        .map(|(q, family)| ChannelSeries {
            name: format!(
                "{}_{}",
                if family == NormFamily::Strong { "strong" } else { "weak" },
                if q.is_infinite() {
                    "inf".to_string()
                } else {
                    format!("{q}")
                }
            ),
            q,
            family,
            series: Vec::new(),
        })
        .collect();
    let mut mass = Vec::new();

    let initial = Field {
        grid,
        values: u.clone(),
    };
    let total0 = initial.integral();
    let shell0 = initial.shell_mass(SHELL_FRACTION);
    let compact = shell0 <= SHELL_MASS_LIMIT * total0.max(f64::MIN_POSITIVE);
    let mut contamination: Option<Error> = None;

    let mut t = 0.0;
    let mut next = 0;
    let mut diag = Diagnostics {
        steps: 0,
        cap_limited_steps: 0,
        min_dt: f64::INFINITY,
        max_dt: 0.0,
        final_time: 0.0,
        final_sup: 0.0,
    };
    let p = cfg.p;
    let blow = |t_last: f64, sup: f64| {
        let ext = sup.powf(1.0 - p) / (p - 1.0);
        let upper = t_last + ext + 1e-9 * t_last;
        OutcomeKind::BlowUp {
            t_estimate: t_last + ext,
            lower: t_last,
            upper,
        }
    };
    let kind = loop {
        let sup = u.iter().fold(0.0f64, |m, v| m.max(*v));
        if sup >= cfg.umax {
            break blow(t, sup);
        }
        if next >= snaps.len() {
            break OutcomeKind::HorizonReached;
        }
        let target = snaps[next];
        let cap = if sup > 0.0 {
            cfg.theta / (p * sup.powf(p - 1.0))
        } else {
            f64::INFINITY
        };
        let pace = cfg.dt0.max(cfg.dt_rel * t);
        let mut dt = ladder(cfg.dt0, cap.min(pace));
        let capped = cap < pace;
        let mut landing = false;
        if t + dt >= target * (1.0 - 1e-12) {
            dt = target - t;
            landing = true;
        }
        if !(dt > 1e-15 * t.max(1.0)) || t + dt == t {
            if landing && dt >= 0.0 {
                // already on the snapshot
                dt = 0.0;
            } else {
                break blow(t, sup);
            }
        }
        if dt > 0.0 {
            step_nonlinear(prop, &mut u, p, dt, cfg.theta)?;
            diag.steps += 1;
            diag.cap_limited_steps += capped as usize;
            diag.min_dt = diag.min_dt.min(dt);
            diag.max_dt = diag.max_dt.max(dt);
        }
        t = if landing { target } else { t + dt };
        if u.iter().any(|v| !v.is_finite()) {
            break blow(t - dt, cfg.umax);
        }
        if landing {
            next += 1;
            let f = Field {
                grid,
                values: u.clone(),
            };
            for ch in channels.iter_mut() {
                let v = match ch.family {
                    NormFamily::Strong => strong_norm(&f, ch.q)?.value,
                    NormFamily::Weak => weak_norm(&f, ch.q)?.value,
                };
                ch.series.push((t, v));
            }
            let m = f.integral();
            mass.push((t, m));
            if contamination.is_none() {
                let shell = f.shell_mass(SHELL_FRACTION);
                let ok = if compact {
                    shell <= SHELL_MASS_LIMIT * m.max(f64::MIN_POSITIVE)
                } else {
                    diffusion_length_ok(cfg, t)
                };
                if !ok {
                    contamination = Some(Error::BoundaryContamination {
                        shell_mass: shell,
                        limit: SHELL_MASS_LIMIT * m,
                        time: t,
                    });
                }
            }
        }
    };
    diag.final_time = t;
    diag.final_sup = u.iter().fold(0.0f64, |m, v| m.max(*v));
    if diag.min_dt == f64::INFINITY {
        diag.min_dt = 0.0;
    }
    if !matches!(kind, OutcomeKind::BlowUp { .. }) {
        if let Some(e) = contamination {
            return Err(e);
        }
    }
    Ok(RunOutcome {
        kind,
        channels,
        mass,
        diagnostics: diag,
        final_field: Some(Field { grid, values: u }),
    })
}

/// Fixed-step IMEX integration; returns the field at every multiple of
/// `every` steps up to `steps`, starting with the data.
pub fn run_fixed(
    prop: &Propagator,
    phi: &Field,
    p: f64,
    theta: f64,
    dt: f64,
    steps: usize,
    every: usize,
) -> Result<Vec<Field>> {
    let mut u = phi.values.clone();
    let mut out = vec![phi.clone()];
    for k in 1..=steps {
        step_nonlinear(prop, &mut u, p, dt, theta)?;
        if k % every.max(1) == 0 {
            out.push(Field {
                grid: phi.grid,
                values: u.clone(),
            });
        }
    }
    Ok(out)
}

/// `S(t)φ` at increasing `times`, stepping `max(dt0, dt_rel · t)` from the ladder.
pub fn linear_snapshots(prop: &Propagator, phi: &Field, times: &[f64], dt0: f64, dt_rel: f64) -> Result<Vec<Field>> {
    let mut u = phi.values.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < t {
            return Err(Error::InvalidInput("snapshot times must increase".into()));
        }
        while t < target {
            let dt = ladder(dt0, dt0.max(dt_rel * t));
            if t + dt >= target * (1.0 - 1e-12) {
                prop.step_dt(&mut u, target - t)?;
                t = target;
            } else {
                prop.step_dt(&mut u, dt)?;
                t += dt;
            }
        }
        out.push(Field {
            grid: phi.grid,
            values: u.clone(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult {
    pub times: Vec<f64>,
    /// `iterates[n][k]` is `u_{n+1}` at `times[k]`.
    pub iterates: Vec<Vec<Field>>,
    /// `sup_t ‖u_1(t)‖_∞ / ‖φ‖_∞`.
    pub c_star: f64,
}

/// Picard iterates `u_1 = S(t)φ`, `u_{n+1} = u_1 + ∫_0^t S(t-s) u_n(s)^p ds`
/// on the uniform lattice `k · every · dt`, `dt = cfg.dt0`, up to `tau`.
pub fn picard_iterate(cfg: &RunConfig, n_max: usize, tau: f64, every: usize) -> Result<PicardResult> {
    cfg.validate()?;
    let prop = build_propagator(&cfg.weight, cfg.grid, cfg.dt0, cfg.boundary, Scheme::ImplicitEuler)?;
    let phi = cfg.data.to_field(&cfg.grid);
    let every = every.max(1);
    let panel = cfg.dt0 * every as f64;
    let k_max = (tau / panel).round() as usize;
    if k_max == 0 {
        return Err(Error::InvalidInput(format!(
            "horizon {tau} is shorter than one panel {panel}"
        )));
    }
    let times: Vec<f64> = (0..=k_max).map(|k| k as f64 * panel).collect();
    let mut u1 = vec![phi.clone()];
    let mut u = phi.values.clone();
    for _ in 0..k_max {
        prop.evolve(&mut u, every)?;
        u1.push(Field {
            grid: cfg.grid,
            values: u.clone(),
        });
    }
    let sup0 = phi.sup();
    let c_star = if sup0 > 0.0 {
        u1.iter().map(|f| f.sup()).fold(0.0, f64::max) / sup0
    } else {
        0.0
    };
    let mut iterates = vec![u1.clone()];
    for _ in 1..n_max {
        let prev = iterates.last().expect("nonempty");
        let f: Vec<Vec<f64>> = prev
            .iter()
            .map(|x| x.values.iter().map(|v| v.powf(cfg.p)).collect())
            .collect();
        let mut next = Vec::with_capacity(k_max + 1);
        next.push(phi.clone());
        // J_k = P^m (J_{k-1} + c_{k-1} f_{k-1}), c_0 = 1/2, c_j = 1
        let mut j = vec![0.0; cfg.grid.len()];
        for k in 1..=k_max {
            let c = if k == 1 { 0.5 } else { 1.0 };
            for (a, b) in j.iter_mut().zip(&f[k - 1]) {
                *a += c * b;
            }
            prop.evolve(&mut j, every)?;
            let values: Vec<f64> = u1[k]
                .values
                .iter()
                .zip(&j)
                .zip(&f[k])
                .map(|((l, jj), fk)| l + panel * (jj + 0.5 * fk))
                .collect();
            let field = Field { grid: cfg.grid, values };
            let s = field.sup();
            if !(s <= cfg.umax) {
                return Err(Error::IterateOverflow {
                    iterate: iterates.len() + 1,
                    time: times[k],
                });
            }
            next.push(field);
        }
        iterates.push(next);
    }
    Ok(PicardResult {
        times,
        iterates,
        c_star,
    })
}

/// `sup_{t <= σ} ‖u_1 - u_2‖_∞ / ‖φ_1 - φ_2‖_∞` with both runs on the same
/// fixed step `cfg.dt0`.
pub fn stability_check(cfg: &RunConfig, phi1: &Field, phi2: &Field, sigma: f64) -> Result<f64> {
    cfg.validate()?;
    let prop = cfg.propagator()?;
    let steps = (sigma / cfg.dt0).round() as usize;
    let mut u1 = phi1.values.clone();
    let mut u2 = phi2.values.clone();
    let d0 = u1.iter().zip(&u2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if d0 == 0.0 {
        return Ok(0.0);
    }
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        for u in [&mut u1, &mut u2] {
            if u.iter().any(|&v| !(v < cfg.umax)) {
                return Err(Error::NotApplicable("a run blew up before sigma".into()));
            }
            step_nonlinear(&prop, u, cfg.p, cfg.dt0, cfg.theta)
                .map_err(|_| Error::NotApplicable("a run left the stable step range before sigma".into()))?;
        }
        let d = u1.iter().zip(&u2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(d);
    }
    Ok(worst / d0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub lambda: f64,
    pub spacing: f64,
    pub times: Vec<f64>,
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
}

/// Compares `u_λ(x, t)` with `λ^α u(λx, λ^{2-a} t)`, `α = (2-a)/(p-1)`.
///
/// Both runs use the spacing of `cfg.grid` and the step `dt0`; the base run
/// covers `λ` times the box and steps `λ^{2-a} dt0`, so the two time lattices
/// correspond. The base field is interpolated at `λx`.
pub fn scaling_covariance_check(cfg: &RunConfig, lambda: f64, times: &[f64]) -> Result<ScalingReport> {
    cfg.validate()?;
    if !(0.25..=4.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!(
            "lambda must lie in [1/4, 4], got {lambda}"
        )));
    }
    let order = cfg.weight.diffusion_order();
    let alpha = order / (cfg.p - 1.0);
    let h = cfg.grid.spacing();
    let scaled_grid = cfg.grid;
    let base_grid = Grid::with_spacing(cfg.grid.dim, h, lambda * cfg.grid.half_width)?;
    let dt_scaled = cfg.dt0;
    let dt_base = lambda.powf(order) * cfg.dt0;
    let p_scaled = build_propagator(&cfg.weight, scaled_grid, dt_scaled, cfg.boundary, Scheme::ImplicitEuler)?;
    let p_base = build_propagator(&cfg.weight, base_grid, dt_base, cfg.boundary, Scheme::ImplicitEuler)?;
    let data = cfg.data;
    let phi_base = data.to_field(&base_grid);
    let phi_scaled = Field::from_fn(scaled_grid, |x| {
        let y: Vec<f64> = x.iter().map(|v| lambda * v).collect();
        lambda.powf(alpha) * data.value_at(&y)
    });
    let mut ub = phi_base.values.clone();
    let mut us = phi_scaled.values.clone();
    let mut done = 0usize;
    let mut deviations = Vec::with_capacity(times.len());
    let theta = cfg.theta;
    for &t in times {
        let k = (t / dt_scaled).round() as usize;
        for _ in done..k {
            step_nonlinear(&p_base, &mut ub, cfg.p, dt_base, theta)?;
            step_nonlinear(&p_scaled, &mut us, cfg.p, dt_scaled, theta)?;
        }
        done = k;
        let base = Field {
            grid: base_grid,
            values: ub.clone(),
        };
        let scaled = Field {
            grid: scaled_grid,
            values: us.clone(),
        };
        let mut worst: f64 = 0.0;
        for i in 0..scaled_grid.len() {
            let x: Vec<f64> = scaled_grid.center(i).iter().map(|v| lambda * v).collect();
            let predicted = lambda.powf(alpha) * base.interpolate(&x);
            worst = worst.max((predicted - scaled.values[i]).abs());
        }
        deviations.push(worst / scaled.sup().max(f64::MIN_POSITIVE));
    }
    let max_deviation = deviations.iter().cloned().fold(0.0, f64::max);
    Ok(ScalingReport {
        lambda,
        spacing: h,
        times: times.to_vec(),
        deviations,
        max_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg1(a: f64, p: f64, data: InitialData, cells: usize, half: f64, horizon: f64) -> RunConfig {
        RunConfig::new(Weight::axis(a, 1), p, Grid::new(1, cells, half).unwrap(), data, horizon)
    }

    #[test]
    fn channel_lookup_separates_finite_and_infinite_exponents() {
        let c = cfg1(0.5, 4.0, InitialData::Constant { value: 0.1 }, 32, 4.0, 0.1);
        let out = run(&c).unwrap();
        let sup = out.channel(NormFamily::Strong, f64::INFINITY).unwrap();
        assert!(sup.q.is_infinite());
        assert_eq!(out.channel(NormFamily::Strong, 1.0).unwrap().q, 1.0);
        assert!(out.channel(NormFamily::Strong, 3.0).is_none());
    }

    #[test]
    fn zero_data_stays_zero() {
        let c = cfg1(0.5, 2.0, InitialData::Constant { value: 0.0 }, 32, 4.0, 1.0);
        let out = run(&c).unwrap();
        assert_eq!(out.kind, OutcomeKind::HorizonReached);
        assert!(out.final_field.unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_data_follows_the_ode() {
        let c = cfg1(0.3, 2.0, InitialData::Constant { value: 1.0 }, 16, 2.0, 0.9);
        let prop = c.propagator().unwrap();
        let mut u = vec![1.0; 16];
        let mut t: f64 = 0.0;
        while t < 0.9 - 1e-12 {
            let dt = (0.9 - t).min(1e-3);
            step_nonlinear(&prop, &mut u, 2.0, dt, 0.5).unwrap();
            t += dt;
        }
        let exact = 1.0 / (1.0 - 0.9);
        assert!(u.iter().all(|v| ((v - exact) / exact).abs() < 1e-3));
    }

    #[test]
    fn ode_blow_up_bracket() {
        let mut c = cfg1(0.5, 2.0, InitialData::Constant { value: 1.0 }, 16, 2.0, 5.0);
        c.weak_q.clear();
        let out = run(&c).unwrap();
        match out.kind {
            OutcomeKind::BlowUp { lower, upper, .. } => {
                assert!(lower <= 1.0 && upper >= 1.0, "[{lower}, {upper}]");
                assert!(upper - lower <= 0.04);
            }
            k => panic!("expected blow-up, got {k:?}"),
        }
    }

    #[test]
    fn small_gaussian_sup_decreases() {
        let g = Grid::new(1, 512, 16.0).unwrap();
        let prop = build_propagator(
            &Weight::axis(0.0, 1),
            g,
            1e-2,
            Boundary::Reflecting,
            Scheme::ImplicitEuler,
        )
        .unwrap();
        let mut u = InitialData::Gaussian {
            amplitude: 0.1,
            width: 1.0,
        }
        .to_field(&g)
        .values;
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            step_nonlinear(&prop, &mut u, 4.0, 1e-2, 0.5).unwrap();
            let s = u.iter().cloned().fold(0.0, f64::max);
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn step_cap_enforced() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        let prop = build_propagator(
            &Weight::axis(0.0, 1),
            g,
            1e-2,
            Boundary::Reflecting,
            Scheme::ImplicitEuler,
        )
        .unwrap();
        let mut u = vec![10.0; 8];
        assert!(matches!(
            step_nonlinear(&prop, &mut u, 2.0, 1.0, 0.5),
            Err(Error::UnstableStep { .. })
        ));
    }

    #[test]
    fn source_flow_is_exact() {
        let mut u = vec![1.0, 0.0, 2.0];
        source_flow(&mut u, 2.0, 0.25);
        assert!((u[0] - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(u[1], 0.0);
        assert!((u[2] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn snapshot_lattice() {
        let c = cfg1(0.0, 2.0, InitialData::Constant { value: 0.0 }, 8, 1.0, 1.0);
        let s = c.snapshot_times();
        assert_eq!(s.len(), 17);
        assert_eq!(*s.last().unwrap(), 1.0);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn picard_of_zero_is_zero() {
        let c = cfg1(0.5, 2.0, InitialData::Constant { value: 0.0 }, 16, 4.0, 1.0);
        let r = picard_iterate(&c, 3, 0.1, 1).unwrap();
        assert!(r.iterates.iter().flatten().all(|f| f.sup() == 0.0));
    }

    #[test]
    fn stability_of_identical_data() {
        let c = cfg1(0.5, 4.0, InitialData::Constant { value: 0.0 }, 64, 8.0, 1.0);
        let phi = InitialData::Bump {
            amplitude: 0.5,
            radius: 1.0,
        }
        .to_field(&c.grid);
        assert_eq!(stability_check(&c, &phi, &phi, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn scaling_identity_at_unit_lambda() {
        let c = cfg1(
            0.5,
            4.0,
            InitialData::Gaussian {
                amplitude: 0.5,
                width: 1.0,
            },
            256,
            8.0,
            1.0,
        );
        let r = scaling_covariance_check(&c, 1.0, &[0.1, 0.2]).unwrap();
        assert!(r.max_deviation < 1e-12);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = cfg1(0.5, 2.0, InitialData::Constant { value: 1.0 }, 16, 2.0, 1.0);
        c.theta = 1.5;
        assert!(c.validate().is_err());
        c.theta = 0.5;
        c.umax = 10.0;
        assert!(c.validate().is_err());
        c.umax = 1e8;
        c.p = 1.0;
        assert!(c.validate().is_err());
    }
}
