//! Finite-volume propagator for `v_t = div(w ∇v)` and the discrete
//! fundamental solution built from it.
//!
//! Cells are uniform squares; the coupling between two adjacent cells is the
//! harmonic integral `c = h / ∫ w^{-1}` along the segment joining their
//! centers, so faces may sit on the singular set. The assembled operator is
//! `(A u)_i = h^{-2} Σ_j c_ij (u_i - u_j)`, symmetric in the cell-measure
//! inner product.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::fit::{chebyshev_decay_line, decay_fit, DecayFit};
use crate::geometry::{h as volume_h, h_inverse, interval_power_integral};
use crate::grid::{Field, Grid};
use crate::lorentz::{strong_norm, weak_norm};
use crate::quadrature::{integrate, Tolerance};
use crate::report::fmt17;
use crate::weight::{Weight, WeightKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
pub enum Boundary {
    /// Zero flux through the box faces.
    Reflecting,
    /// Zero value on the box faces (half-cell coupling to a zero ghost).
    Absorbing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
pub enum Scheme {
    ImplicitEuler,
    ExplicitEuler,
}

/// Banded Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug)]
struct BandedCholesky {
    n: usize,
    bw: usize,
    /// Row `i` stores `L[i][i-bw..=i]`.
    l: Vec<f64>,
}

impl BandedCholesky {
    /// `a` uses the same layout as the factor (lower band, row-major).
    fn factor(n: usize, bw: usize, mut a: Vec<f64>) -> Result<Self> {
        let w = bw + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut sum = a[i * w + (j + bw - i)];
                for k in k0..j {
                    sum -= a[i * w + (k + bw - i)] * a[j * w + (k + bw - j)];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::InvalidInput("operator matrix is not positive definite".into()));
                    }
                    a[i * w + bw] = sum.sqrt();
                } else {
                    a[i * w + (j + bw - i)] = sum / a[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l: a })
    }

    #[allow(clippy::needless_range_loop)]
    fn solve(&self, b: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + (k + bw - i)] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..(i + bw + 1).min(n) {
                s -= self.l[k * w + (i + bw - k)] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
    }
}

/// Byte budget for cached factorizations.
const FACTOR_CACHE_BYTES: usize = 256 << 20;

/// Discrete solution operator of the linear equation on a fixed grid.
///
/// Immutable after assembly apart from an internal cache of factorizations
/// keyed by step size; shareable across threads.
#[derive(Debug)]
pub struct Propagator {
    pub weight: Weight,
    pub grid: Grid,
    /// `(i, j)` pairs of adjacent cells, `i < j`.
    pub links: Vec<(usize, usize)>,
    /// `h / ∫ w^{-1}` along each link (1 for the constant weight).
    pub face_conductances: Vec<f64>,
    /// Coupling of boundary cells to the zero ghost (Absorbing only).
    pub boundary_conductances: Vec<(usize, f64)>,
    pub dt: f64,
    pub boundary: Boundary,
    pub scheme: Scheme,
    /// Per-cell sum of couplings, `h^2 A_ii`.
    diagonal: Vec<f64>,
    cache: RwLock<HashMap<u64, Arc<BandedCholesky>>>,
}

/// `∫` of `w^{-1}` along the axis-parallel segment from `a` to `a + len e_d`.
fn segment_resistance(w: &Weight, a: &[f64], d: usize, len: f64) -> Result<f64> {
    let s0 = a[d];
    let (lo, hi) = (s0.min(s0 + len), s0.max(s0 + len));
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    match (w.kind, d) {
        (WeightKind::AxisPower, 0) => Ok(interval_power_integral(mid, half, -w.exponent)),
        (WeightKind::AxisPower, _) => Ok((hi - lo) * a[0].abs().powf(-w.exponent)),
        (WeightKind::RadialPower, _) if w.dim == 1 => Ok(interval_power_integral(mid, half, -w.exponent)),
        (WeightKind::RadialPower, _) => {
            let other: f64 = a.iter().enumerate().filter(|(k, _)| *k != d).map(|(_, v)| v * v).sum();
            let b = w.exponent;
            if other == 0.0 {
                return Ok(interval_power_integral(mid, half, -b));
            }
            let f = |s: f64| (s * s + other).powf(-0.5 * b);
            Ok(integrate(f, lo, hi, Tolerance::relative(1e-13))?.value)
        }
    }
}

#[allow(clippy::needless_range_loop)]
pub fn build_propagator(w: &Weight, grid: Grid, dt: f64, boundary: Boundary, scheme: Scheme) -> Result<Propagator> {
    if w.dim != grid.dim {
        return Err(Error::InvalidInput(format!(
            "weight lives in dimension {}, grid in {}",
            w.dim, grid.dim
        )));
    }
    w.check_admissible()?;
    if w.kind == WeightKind::AxisPower && !(w.exponent < 1.0) {
        return Err(Error::InadmissibleWeight(format!(
            "|s|^-{} is not integrable across the singular face",
            w.exponent
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    let h = grid.spacing();
    let n = grid.cells;
    let mut links = Vec::new();
    for idx in 0..grid.len() {
        let mi = grid.multi_index(idx);
        for d in 0..grid.dim {
            if mi[d] + 1 < n {
                let mut nj = mi;
                nj[d] += 1;
                links.push((idx, grid.flat_index(nj), d));
            }
        }
    }
    let face_conductances: Vec<f64> = links
        .par_iter()
        .map(|&(i, _, d)| segment_resistance(w, &grid.center(i), d, h).map(|r| h / r))
        .collect::<Result<_>>()?;
    let mut boundary_conductances = Vec::new();
    if boundary == Boundary::Absorbing {
        for idx in 0..grid.len() {
            let mi = grid.multi_index(idx);
            let c = grid.center(idx);
            for d in 0..grid.dim {
                for (edge, dir) in [(0usize, -1.0), (n - 1, 1.0)] {
                    if mi[d] == edge {
                        let r = segment_resistance(w, &c, d, dir * 0.5 * h)?;
                        boundary_conductances.push((idx, h / r));
                    }
                }
            }
        }
    }
    let mut diagonal = vec![0.0; grid.len()];
    for (&(i, j, _), &c) in links.iter().zip(&face_conductances) {
        diagonal[i] += c;
        diagonal[j] += c;
    }
    for &(i, c) in &boundary_conductances {
        diagonal[i] += c;
    }
    if face_conductances
        .iter()
        .chain(boundary_conductances.iter().map(|(_, c)| c))
        .any(|c| !(c.is_finite() && *c > 0.0))
    {
        return Err(Error::InadmissibleWeight(
            "a face conductance is not finite and positive".into(),
        ));
    }
    let prop = Propagator {
        weight: *w,
        grid,
        links: links.iter().map(|&(i, j, _)| (i, j)).collect(),
        face_conductances,
        boundary_conductances,
        dt,
        boundary,
        scheme,
        diagonal,
        cache: RwLock::new(HashMap::new()),
    };
    if scheme == Scheme::ExplicitEuler {
        prop.check_explicit(dt)?;
    }
    Ok(prop)
}

impl Propagator {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Off-diagonal operator coefficients `c_ij / h^2`.
    pub fn operator_coefficients(&self) -> Vec<f64> {
        let h2 = self.grid.spacing().powi(2);
        self.face_conductances.iter().map(|c| c / h2).collect()
    }

    /// `A u` (the negative of the discrete divergence form).
    pub fn apply_operator(&self, u: &[f64]) -> Vec<f64> {
        let h2 = self.grid.spacing().powi(2);
        let mut out: Vec<f64> = u.iter().zip(&self.diagonal).map(|(v, d)| v * d).collect();
        for (&(i, j), &c) in self.links.iter().zip(&self.face_conductances) {
            out[i] -= c * u[j];
            out[j] -= c * u[i];
        }
        out.iter_mut().for_each(|v| *v /= h2);
        out
    }

    /// Largest explicit step: `0.9 h^N / (2 max_i Σ_j T_ij)` with `T = c h^{N-2}`.
    pub fn explicit_limit(&self) -> f64 {
        let h2 = self.grid.spacing().powi(2);
        let max_sum = self.diagonal.iter().cloned().fold(0.0, f64::max);
        0.9 * h2 / (2.0 * max_sum)
    }

    fn check_explicit(&self, dt: f64) -> Result<()> {
        let limit = self.explicit_limit();
        if dt > limit {
            return Err(Error::UnstableStep { dt, limit });
        }
        Ok(())
    }

    fn bandwidth(&self) -> usize {
        if self.grid.dim == 1 {
            1
        } else {
            self.grid.cells
        }
    }

    fn factor_for(&self, dt: f64) -> Result<Arc<BandedCholesky>> {
        let key = dt.to_bits();
        if let Some(f) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(f.clone());
        }
        let n = self.len();
        let bw = self.bandwidth();
        let w = bw + 1;
        let s = dt / self.grid.spacing().powi(2);
        let mut a = vec![0.0; n * w];
        for i in 0..n {
            a[i * w + bw] = 1.0 + s * self.diagonal[i];
        }
        for (&(i, j), &c) in self.links.iter().zip(&self.face_conductances) {
            // j > i, stored in row j
            a[j * w + (i + bw - j)] = -s * c;
        }
        let f = Arc::new(BandedCholesky::factor(n, bw, a)?);
        let mut cache = self.cache.write().expect("cache lock");
        let per = n * w * 8;
        if (cache.len() + 1) * per > FACTOR_CACHE_BYTES {
            cache.clear();
        }
        cache.insert(key, f.clone());
        Ok(f)
    }

    /// One step of size `dt` in place.
    pub fn step_dt(&self, u: &mut [f64], dt: f64) -> Result<()> {
        match self.scheme {
            Scheme::ImplicitEuler => {
                self.factor_for(dt)?.solve(u);
            }
            Scheme::ExplicitEuler => {
                self.check_explicit(dt)?;
                let au = self.apply_operator(u);
                for (v, a) in u.iter_mut().zip(au) {
                    *v -= dt * a;
                }
            }
        }
        Ok(())
    }

    /// `steps` steps of the base size.
    pub fn evolve(&self, u: &mut [f64], steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step_dt(u, self.dt)?;
        }
        Ok(())
    }

    /// Number of base steps reaching `t`, which must lie on the step lattice.
    pub fn steps_to(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if !(t >= 0.0) || (k * self.dt - t).abs() > 1e-9 * t.max(self.dt) {
            return Err(Error::InvalidInput(format!(
                "time {t} is not on the step lattice of {}",
                self.dt
            )));
        }
        Ok(k as usize)
    }

    /// Unit mass split equally over the cells whose closure contains `y`.
    pub fn discrete_delta(&self, y: &[f64]) -> Result<Field> {
        let cells = self.grid.cells_containing(y)?;
        let mut f = Field::zeros(self.grid);
        let v = 1.0 / (cells.len() as f64 * self.grid.cell_measure());
        for c in cells {
            f.values[c] = v;
        }
        Ok(f)
    }

    /// `S(t_k) φ` for increasing lattice times.
    pub fn snapshots(&self, phi: &Field, times: &[f64]) -> Result<Vec<Field>> {
        let mut u = phi.values.clone();
        let mut done = 0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            let k = self.steps_to(t)?;
            if k < done {
                return Err(Error::InvalidInput("snapshot times must increase".into()));
            }
            self.evolve(&mut u, k - done)?;
            done = k;
            out.push(Field {
                grid: self.grid,
                values: u.clone(),
            });
        }
        Ok(out)
    }
}

/// Average of a field over the cells whose closure contains `y`.
pub fn evaluate_at(field: &Field, y: &[f64]) -> Result<f64> {
    let cells = field.grid.cells_containing(y)?;
    Ok(cells.iter().map(|&c| field.values[c]).sum::<f64>() / cells.len() as f64)
}

/// Geometric lattice `t0 2^{k/4}` up to `t1`, closed by `t1` itself, each
/// rounded to a multiple of `dt`.
pub fn kernel_times(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut k = 0;
    loop {
        let t = t0 * 2f64.powf(k as f64 / 4.0);
        if t > t1 * (1.0 + 1e-12) {
            break;
        }
        let q = ((t / dt).round().max(1.0)) * dt;
        if out.last().is_none_or(|&l| q > l) {
            out.push(q);
        }
        k += 1;
    }
    let end = ((t1 / dt).round().max(1.0)) * dt;
    if out.last().is_none_or(|&l| end > l) {
        out.push(end);
    }
    out
}

/// Fraction of the half-width forming the guarded outer shell.
pub const SHELL_FRACTION: f64 = 0.1;
/// Largest mass allowed in the outer shell of a kernel snapshot.
pub const SHELL_MASS_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelEstimate {
    pub source: Vec<f64>,
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    /// `|∫Γ - 1|` per snapshot.
    pub mass_errors: Vec<f64>,
}

pub fn estimate_kernel(prop: &Propagator, y: &[f64], times: &[f64]) -> Result<KernelEstimate> {
    let delta = prop.discrete_delta(y)?;
    let fields = prop.snapshots(&delta, times)?;
    for (f, &t) in fields.iter().zip(times) {
        let shell = f.shell_mass(SHELL_FRACTION);
        if shell > SHELL_MASS_LIMIT {
            return Err(Error::BoundaryContamination {
                shell_mass: shell,
                limit: SHELL_MASS_LIMIT,
                time: t,
            });
        }
    }
    let mass_errors = fields.iter().map(|f| (f.integral() - 1.0).abs()).collect();
    Ok(KernelEstimate {
        source: y.to_vec(),
        times: times.to_vec(),
        fields,
        mass_errors,
    })
}

impl KernelEstimate {
    fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * t.max(1.0))
    }

    /// Long-format CSV `t,x[,x2],value`.
    pub fn to_csv(&self) -> String {
        let dim = self.fields.first().map_or(1, |f| f.grid.dim);
        let mut out = if dim == 1 {
            String::from("t,x,value\n")
        } else {
            String::from("t,x1,x2,value\n")
        };
        for (f, &t) in self.fields.iter().zip(&self.times) {
            for (i, v) in f.values.iter().enumerate() {
                let c = f.grid.center(i);
                out.push_str(&fmt17(t));
                for x in c {
                    out.push(',');
                    out.push_str(&fmt17(x));
                }
                out.push(',');
                out.push_str(&fmt17(*v));
                out.push('\n');
            }
        }
        out
    }

    pub fn manifest(&self, w: &Weight) -> KernelManifest {
        KernelManifest {
            weight: *w,
            y: self.source.clone(),
            times: self.times.clone(),
            mass_errors: self.mass_errors.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelManifest {
    pub weight: Weight,
    pub y: Vec<f64>,
    pub times: Vec<f64>,
    pub mass_errors: Vec<f64>,
}

pub const K1_TOLERANCE: f64 = 1e-10;
pub const K2_TOLERANCE: f64 = 1e-12;
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KAxiomReport {
    pub max_mass_error: f64,
    pub restart_deviation: f64,
    /// `max |Γ(x,y,t) - Γ*(y,x,t)|` relative to the peak of `Γ(·,y,t)`.
    pub symmetry_deviation: f64,
    pub min_value: f64,
    pub pass: bool,
}

/// Number of adjoint evolutions used for the symmetry check.
const SYMMETRY_PROBES: usize = 5;

pub fn verify_k_axioms(prop: &Propagator, kernel: &KernelEstimate, s: f64, t: f64) -> Result<KAxiomReport> {
    if !(s < t) {
        return Err(Error::InvalidInput(format!("need s < t, got s = {s}, t = {t}")));
    }
    let ns = prop.steps_to(s)?;
    let nt = prop.steps_to(t)?;
    let delta = prop.discrete_delta(&kernel.source)?;
    let at_s = match kernel.index_of(s) {
        Some(i) => kernel.fields[i].values.clone(),
        None => {
            let mut u = delta.values.clone();
            prop.evolve(&mut u, ns)?;
            u
        }
    };
    let direct = match kernel.index_of(t) {
        Some(i) => kernel.fields[i].values.clone(),
        None => {
            let mut u = delta.values.clone();
            prop.evolve(&mut u, nt)?;
            u
        }
    };
    let mut restarted = at_s;
    prop.evolve(&mut restarted, nt - ns)?;
    let restart_deviation = restarted
        .iter()
        .zip(&direct)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let peak = direct.iter().cloned().fold(0.0, f64::max);
    let n = prop.len();
    let probes: Vec<usize> = (0..SYMMETRY_PROBES)
        .map(|k| (2 * k + 1) * n / (2 * SYMMETRY_PROBES))
        .collect();
    let deviations: Vec<f64> = probes
        .par_iter()
        .map(|&i| -> Result<f64> {
            let m = prop.grid.cell_measure();
            let mut u = vec![0.0; n];
            u[i] = 1.0 / m;
            prop.evolve(&mut u, nt)?;
            let adj = evaluate_at(
                &Field {
                    grid: prop.grid,
                    values: u,
                },
                &kernel.source,
            )?;
            Ok((adj - direct[i]).abs())
        })
        .collect::<Result<_>>()?;
    let symmetry_deviation = deviations.into_iter().fold(0.0, f64::max) / peak.max(f64::MIN_POSITIVE);
    let max_mass_error = if prop.boundary == Boundary::Reflecting {
        kernel.mass_errors.iter().cloned().fold(0.0, f64::max)
    } else {
        0.0
    };
    let min_value = kernel.fields.iter().map(|f| f.min()).fold(f64::INFINITY, f64::min);
    let pass = max_mass_error <= K1_TOLERANCE
        && restart_deviation <= K2_TOLERANCE
        && symmetry_deviation <= SYMMETRY_TOLERANCE
        && min_value >= -1e-14;
    Ok(KAxiomReport {
        max_mass_error,
        restart_deviation,
        symmetry_deviation,
        min_value,
        pass,
    })
}

/// Largest relative error against the Gaussian `(4πt)^{-N/2} e^{-|x-y|^2/4t}`
/// over `|x - y| <= radius_factor √t`.
pub fn gaussian_deviation(kernel: &KernelEstimate, t: f64, radius_factor: f64) -> Result<f64> {
    let i = kernel
        .index_of(t)
        .ok_or_else(|| Error::InvalidInput(format!("no snapshot at t = {t}")))?;
    let f = &kernel.fields[i];
    let n = f.grid.dim as f64;
    let mut worst: f64 = 0.0;
    for (k, v) in f.values.iter().enumerate() {
        let c = f.grid.center(k);
        let d2: f64 = c.iter().zip(&kernel.source).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2.sqrt() <= radius_factor * t.sqrt() {
            let g = (4.0 * std::f64::consts::PI * t).powf(-0.5 * n) * (-d2 / (4.0 * t)).exp();
            worst = worst.max((v - g).abs() / g);
        }
    }
    Ok(worst)
}

/// Minimax fit of `log(Γ / prefactor) ≈ b - c z` over the sampled set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichFit {
    /// Smallest `C` with `Γ <= C · prefactor · e^{-c z}`.
    pub upper_constant: f64,
    /// Largest `c` with `Γ >= c · prefactor · e^{-c z}`.
    pub lower_constant: f64,
    pub rate: f64,
    pub log_spread: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormSlope {
    pub r: f64,
    pub slope: f64,
    pub expected: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct K3Report {
    pub samples: usize,
    pub general: SandwichFit,
    pub refined_upper: Option<SandwichFit>,
    pub refined_lower: Option<SandwichFit>,
    /// Log-log slope of `Γ(y,y,t)`.
    pub diagonal_slope: f64,
    pub diagonal_expected: f64,
    pub norm_slopes: Vec<NormSlope>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct K3Options {
    /// Samples keep `h_x(|x-y|)/t <= bound`.
    pub bound: f64,
    /// Samples keep `Γ >= floor · peak(t)`.
    pub floor: f64,
    pub max_samples: usize,
    /// Norm exponents whose decay slope is checked.
    pub norm_exponents: [f64; 2],
    pub slope_tolerance: f64,
}

impl Default for K3Options {
    fn default() -> Self {
        Self {
            bound: 16.0,
            floor: 1e-12,
            max_samples: 4000,
            norm_exponents: [2.0, f64::INFINITY],
            slope_tolerance: 0.05,
        }
    }
}

struct K3Sample {
    t: f64,
    x: Vec<f64>,
    value: f64,
    dist: f64,
}

fn sandwich(z: &[f64], y: &[f64]) -> Result<SandwichFit> {
    if z.is_empty() {
        return Err(Error::SandwichViolation("no samples in the fitting region".into()));
    }
    let (b, c, e) = chebyshev_decay_line(z, y);
    let fit = SandwichFit {
        upper_constant: (b + e).exp(),
        lower_constant: (b - e).exp(),
        rate: c,
        log_spread: e,
    };
    if !(fit.upper_constant.is_finite() && fit.lower_constant > 0.0 && fit.rate.is_finite()) {
        return Err(Error::SandwichViolation(format!("no finite constants fit: {fit:?}")));
    }
    Ok(fit)
}

pub fn verify_k3_sandwich(w: &Weight, kernel: &KernelEstimate, opts: &K3Options) -> Result<K3Report> {
    let y = &kernel.source;
    let n = w.dim as f64;
    let alpha = w.exponent;
    let order = 2.0 - alpha;

    let mut candidates = Vec::new();
    for (f, &t) in kernel.fields.iter().zip(&kernel.times) {
        let peak = f.sup();
        let reach = (opts.bound * t).powf(1.0 / order) * 4.0;
        for (i, &v) in f.values.iter().enumerate() {
            if v < opts.floor * peak || v <= 0.0 {
                continue;
            }
            let x = f.grid.center(i);
            let dist = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if dist > reach {
                continue;
            }
            candidates.push(K3Sample { t, x, value: v, dist });
        }
    }
    let stride = candidates.len().div_ceil(opts.max_samples.max(1)).max(1);
    let picked: Vec<&K3Sample> = candidates.iter().step_by(stride).collect();

    // general form: prefactor 1/[h_x^{-1}(t)]^N + 1/[h_y^{-1}(t)]^N, z = (h_x(|x-y|)/t)^{1/(1-α)}
    let general: Vec<Option<(f64, f64)>> = picked
        .par_iter()
        .map(|s| -> Result<Option<(f64, f64)>> {
            let hx = if s.dist > 0.0 { volume_h(w, &s.x, s.dist)? } else { 0.0 };
            if hx / s.t > opts.bound {
                return Ok(None);
            }
            let pre = h_inverse(w, &s.x, s.t)?.powf(-n) + h_inverse(w, y, s.t)?.powf(-n);
            let z = (hx / s.t).powf(1.0 / (1.0 - alpha));
            Ok(Some((z, (s.value / pre).ln())))
        })
        .collect::<Result<_>>()?;
    let (gz, gy): (Vec<f64>, Vec<f64>) = general.into_iter().flatten().unzip();
    let general_fit = sandwich(&gz, &gy)?;

    let (refined_upper, refined_lower) = if w.kind == WeightKind::AxisPower && alpha > -1.0 && alpha < 1.0 {
        let a = alpha;
        let local = |x1: f64, t: f64, pick_min: bool| {
            let s = x1.abs().powf(-a * n / 2.0);
            let tt = t.powf(-a * n / (2.0 * order));
            if pick_min {
                s.min(tt)
            } else {
                s.max(tt)
            }
        };
        let mut zu = Vec::new();
        let mut yu = Vec::new();
        let mut yl = Vec::new();
        for s in &picked {
            let ratio = s.dist.powf(order) / s.t;
            if ratio > opts.bound.powf(1.0 - a) {
                continue;
            }
            let z = ratio.powf(1.0 / (1.0 - a));
            let on_diag = s.t.powf(-n / order);
            let mixed = (local(s.x[0], s.t, a >= 0.0) + local(y[0], s.t, a >= 0.0)) * s.t.powf(-n / 2.0);
            let (upper_shape, lower_shape) = if a >= 0.0 { (on_diag, mixed) } else { (mixed, on_diag) };
            zu.push(z);
            yu.push((s.value / upper_shape).ln());
            yl.push((s.value / lower_shape).ln());
        }
        (Some(sandwich(&zu, &yu)?), Some(sandwich(&zu, &yl)?))
    } else {
        (None, None)
    };

    let diag: Vec<(f64, f64)> = kernel
        .fields
        .iter()
        .zip(&kernel.times)
        .map(|(f, &t)| evaluate_at(f, y).map(|v| (t, v)))
        .collect::<Result<_>>()?;
    let diagonal_expected = -n / order;
    let diagonal_slope = decay_fit(&diag, None, 0.0)?.slope;

    let mut norm_slopes = Vec::new();
    for &r in &opts.norm_exponents {
        let series: Vec<(f64, f64)> = kernel
            .fields
            .iter()
            .zip(&kernel.times)
            .map(|(f, &t)| strong_norm(f, r).map(|v| (t, v.value)))
            .collect::<Result<_>>()?;
        let slope = decay_fit(&series, None, 0.0)?.slope;
        let expected = -(n / order) * (1.0 - 1.0 / r);
        norm_slopes.push(NormSlope {
            r,
            slope,
            expected,
            pass: (slope - expected).abs() <= opts.slope_tolerance * expected.abs(),
        });
    }
    let span = kernel.times.last().unwrap_or(&1.0) / kernel.times.first().unwrap_or(&1.0);
    let pass = norm_slopes.iter().all(|s| s.pass) && span >= 100.0 * (1.0 - 1e-9);
    Ok(K3Report {
        samples: gz.len(),
        general: general_fit,
        refined_upper,
        refined_lower,
        diagonal_slope,
        diagonal_expected,
        norm_slopes,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NormFamily {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingRow {
    pub data_index: usize,
    pub q: f64,
    pub r: f64,
    pub family: NormFamily,
    pub theta: f64,
    /// `sup_t ‖S(t)φ‖_r / (t^{-θ} ‖φ‖_q)`.
    pub sup_ratio: f64,
    pub last_ratio: f64,
    pub slope: Option<DecayFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingReport {
    pub rows: Vec<SmoothingRow>,
    pub pass: bool,
}

fn norm_of(f: &Field, r: f64, family: NormFamily) -> Result<f64> {
    match family {
        NormFamily::Strong => Ok(strong_norm(f, r)?.value),
        NormFamily::Weak => Ok(weak_norm(f, r)?.value),
    }
}

/// Ratios `‖S(t)φ‖_r / (t^{-θ}‖φ‖_q)`, `θ = (N/(2-a))(1/q - 1/r)`, over `times`.
pub fn verify_smoothing(
    prop: &Propagator,
    data: &[Field],
    pairs: &[(f64, f64)],
    times: &[f64],
) -> Result<SmoothingReport> {
    let n = prop.grid.dim as f64;
    let order = prop.weight.diffusion_order();
    let mut rows = Vec::new();
    for (k, phi) in data.iter().enumerate() {
        let snaps = prop.snapshots(phi, times)?;
        for &(q, r) in pairs {
            if !(q <= r) {
                return Err(Error::InvalidInput(format!("need q <= r, got ({q}, {r})")));
            }
            for family in [NormFamily::Strong, NormFamily::Weak] {
                let theta = (n / order) * (1.0 / q - 1.0 / r);
                let base = norm_of(phi, q, family)?;
                if base == 0.0 {
                    return Err(Error::NotApplicable("data with zero norm".into()));
                }
                let mut series = Vec::with_capacity(times.len());
                let mut ratios = Vec::with_capacity(times.len());
                for (f, &t) in snaps.iter().zip(times) {
                    let v = norm_of(f, r, family)?;
                    series.push((t, v));
                    ratios.push(v / (t.powf(-theta) * base));
                }
                rows.push(SmoothingRow {
                    data_index: k,
                    q,
                    r,
                    family,
                    theta,
                    sup_ratio: ratios.iter().cloned().fold(0.0, f64::max),
                    last_ratio: ratios.last().copied().unwrap_or(f64::NAN),
                    slope: decay_fit(&series, None, 0.0).ok(),
                });
            }
        }
    }
    let pass = rows
        .iter()
        .all(|r| r.sup_ratio.is_finite() && (r.q != r.r || r.family == NormFamily::Weak || r.sup_ratio <= 1.0 + 1e-10));
    Ok(SmoothingReport { rows, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallReport {
    pub onset: f64,
    pub times: Vec<f64>,
    /// `min_{|x| <= t^{1/(2-a)}} S(t)φ · t^{N/(2-a)} / ‖φ‖_1` per time.
    pub normalized_minima: Vec<f64>,
    pub constant: f64,
    /// `max / min` of the normalized minima across the window.
    pub spread: f64,
    pub pass: bool,
}

/// Lower bound of `S(t)φ` on the ball `|x| <= t^{1/(2-a)}` over the decade
/// above the onset `T`, the first time whose ball radius reaches
/// `onset_factor` times the support radius of `φ`.
pub fn verify_ball_lower_bound(prop: &Propagator, phi: &Field, times: &[f64], onset_factor: f64) -> Result<BallReport> {
    if phi.values.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("data must be nonnegative".into()));
    }
    let mass = phi.integral();
    if mass == 0.0 {
        return Err(Error::NotApplicable("trivial data".into()));
    }
    let order = prop.weight.diffusion_order();
    let n = prop.grid.dim as f64;
    let norms = prop.grid.center_norms();
    let support = phi
        .values
        .iter()
        .zip(&norms)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r + prop.grid.spacing())
        .fold(0.0, f64::max);
    let onset = times
        .iter()
        .copied()
        .find(|t| t.powf(1.0 / order) >= onset_factor * support)
        .ok_or_else(|| Error::InsufficientWindow("no time reaches the onset".into()))?;
    let window: Vec<f64> = times
        .iter()
        .copied()
        .filter(|&t| t >= onset && t <= 10.0 * onset * (1.0 + 1e-9))
        .collect();
    if window.len() < 2 {
        return Err(Error::InsufficientWindow(
            "fewer than two times in the decade above onset".into(),
        ));
    }
    let snaps = prop.snapshots(phi, &window)?;
    let mut minima = Vec::with_capacity(window.len());
    for (f, &t) in snaps.iter().zip(&window) {
        let rad = t.powf(1.0 / order);
        let m = f
            .values
            .iter()
            .zip(&norms)
            .filter(|(_, r)| **r <= rad)
            .map(|(v, _)| *v)
            .fold(f64::INFINITY, f64::min);
        minima.push(m * t.powf(n / order) / mass);
    }
    let lo = minima.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = minima.iter().cloned().fold(0.0, f64::max);
    Ok(BallReport {
        onset,
        times: window,
        normalized_minima: minima,
        constant: lo,
        spread: hi / lo,
        pass: lo > 0.0 && lo.is_finite(),
    })
}
