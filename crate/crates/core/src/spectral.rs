//! Matrix spectral densities on a frequency grid.
//!
//! Densities are matrix Laurent polynomials `F(λ) = Σ_k F_k e^{ikλ}` with
//! `F_{-k} = F_k*`, entered either as the density itself or as its inverse.
//! Everything downstream works with values on a uniform grid over `[-π, π)`,
//! shifted by half a node so that isolated singular points such as `λ = 0`
//! are never sampled.
//!
//! Fourier coefficients follow `coeff(k) = (1/2π) ∫ F(λ) e^{-ikλ} dλ`, so a
//! trigonometric polynomial is recovered exactly from its values.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, ZERO};
use crate::par::{self, Execution};

/// Default number of grid nodes.
pub const DEFAULT_GRID_SIZE: usize = 1 << 10;

/// Relative eigenvalue floor below which a node counts as singular.
pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Density,
    InverseDensity,
}

/// Hermitian matrix trigonometric polynomial describing `f`, `g` or an inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySpec {
    dim: usize,
    kind: DensityKind,
    /// Lags `0..=degree`; negative lags are the adjoints.
    coeffs: Vec<CMat>,
    pub label: String,
}

const HERMITIAN_TOL: f64 = 1e-12;

impl DensitySpec {
    /// From the non-negative lags `0..=d`. Lag 0 must be Hermitian.
    pub fn new(kind: DensityKind, coeffs: Vec<CMat>, label: impl Into<String>) -> Result<Self> {
        let first = coeffs.first().ok_or_else(|| Error::validation("density needs a lag-0 coefficient"))?;
        let dim = first.nrows();
        if dim == 0 {
            return Err(Error::validation("density dimension must be positive"));
        }
        for (k, c) in coeffs.iter().enumerate() {
            if c.nrows() != dim || c.ncols() != dim {
                return Err(Error::validation(format!("lag {k} coefficient is not {dim}x{dim}")));
            }
            if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::validation(format!("lag {k} coefficient is not finite")));
            }
        }
        let scale = linalg::max_abs(first).max(1.0);
        if linalg::max_abs(&(first - first.adjoint())) > HERMITIAN_TOL * scale {
            return Err(Error::validation("lag-0 coefficient is not Hermitian"));
        }
        let mut coeffs = coeffs;
        coeffs[0] = linalg::hermitian_part(&coeffs[0]);
        // drop trailing zero lags so the degree is exact
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| linalg::max_abs(c) == 0.0) {
            coeffs.pop();
        }
        Ok(Self { dim, kind, coeffs, label: label.into() })
    }

    /// From an arbitrary list of `(lag, coefficient)` pairs. When both `k` and
    /// `-k` are given they must satisfy `F_{-k} = F_k*`.
    pub fn from_lags(kind: DensityKind, lags: &[(i64, CMat)], label: impl Into<String>) -> Result<Self> {
        let degree = lags.iter().map(|(k, _)| k.unsigned_abs() as usize).max().unwrap_or(0);
        let dim =
            lags.first().map(|(_, c)| c.nrows()).ok_or_else(|| Error::validation("density has no coefficients"))?;
        let mut pos: Vec<Option<CMat>> = vec![None; degree + 1];
        let mut neg: Vec<Option<CMat>> = vec![None; degree + 1];
        for (k, c) in lags {
            let slot = if *k >= 0 { &mut pos[*k as usize] } else { &mut neg[k.unsigned_abs() as usize] };
            if slot.is_some() {
                return Err(Error::validation(format!("lag {k} given twice")));
            }
            *slot = Some(c.clone());
        }
        let mut coeffs = Vec::with_capacity(degree + 1);
        for k in 0..=degree {
            let c = match (pos[k].take(), neg[k].take()) {
                (Some(p), Some(n)) => {
                    if k > 0 {
                        let scale = linalg::max_abs(&p).max(1.0);
                        if linalg::max_abs(&(&n - p.adjoint())) > HERMITIAN_TOL * scale {
                            return Err(Error::validation(format!("lags {k} and -{k} violate Hermitian symmetry")));
                        }
                    }
                    p
                }
                (Some(p), None) => p,
                (None, Some(n)) => n.adjoint(),
                (None, None) => CMat::zeros(dim, dim),
            };
            coeffs.push(c);
        }
        Self::new(kind, coeffs, label)
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        Self { dim, kind: DensityKind::Density, coeffs: vec![linalg::identity(dim).scale(s)], label: String::new() }
    }

    pub fn with_kind(mut self, kind: DensityKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficients for lags `0..=degree`.
    pub fn coeffs(&self) -> &[CMat] {
        &self.coeffs
    }

    /// `F_k` for any integer lag.
    pub fn coeff(&self, k: i64) -> CMat {
        let a = k.unsigned_abs() as usize;
        if a > self.degree() {
            CMat::zeros(self.dim, self.dim)
        } else if k >= 0 {
            self.coeffs[a].clone()
        } else {
            self.coeffs[a].adjoint()
        }
    }

    pub fn value_at(&self, lambda: f64) -> CMat {
        let mut out = self.coeffs[0].clone();
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            let z = C64::from_polar(1.0, k as f64 * lambda);
            out += c * z + c.adjoint() * z.conj();
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c = c.scale(s));
        out
    }

    /// Coefficient-wise sum; both operands must be of the same kind.
    pub fn plus(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim || self.kind != other.kind {
            return Err(Error::validation("cannot add densities of different dimension or kind"));
        }
        let d = self.degree().max(other.degree());
        let coeffs = (0..=d as i64).map(|k| self.coeff(k) + other.coeff(k)).collect();
        Self::new(self.kind, coeffs, self.label.clone())
    }

    /// Lag-0 coefficient, i.e. `(1/2π) ∫ F dλ`.
    pub fn mean(&self) -> CMat {
        self.coeffs[0].clone()
    }
}

/// Uniform grid `λ_j = -π + (j + offset) · 2π/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    size: usize,
    offset: f64,
}

impl FrequencyGrid {
    /// Half-node offset grid with `size` nodes (a power of two, at least 8).
    pub fn new(size: usize) -> Result<Self> {
        Self::with_offset(size, 0.5)
    }

    pub fn with_offset(size: usize, offset: f64) -> Result<Self> {
        if size < 8 || !size.is_power_of_two() {
            return Err(Error::validation(format!("grid size {size} must be a power of two >= 8")));
        }
        Ok(Self { size, offset })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.size as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -PI + (j as f64 + self.offset) * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.size).map(|j| self.node(j)).collect()
    }

    pub fn refined(&self) -> Self {
        Self { size: self.size * 2, offset: self.offset }
    }

    /// Every other node of this grid, as a grid of half the size.
    pub fn even_subgrid(&self) -> Self {
        Self { size: self.size / 2, offset: self.offset / 2.0 }
    }

    /// `(1/2π) ∫ F dλ` by the rectangle rule.
    pub fn mean(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / self.size as f64
    }
}

/// Exact evaluation of the trigonometric polynomial at every grid node.
pub fn evaluate(spec: &DensitySpec, grid: &FrequencyGrid, exec: Execution) -> Vec<CMat> {
    par::map_indexed(exec, grid.size(), |j| spec.value_at(grid.node(j)))
}

/// Nodes where a Hermitian field drops below the eigenvalue floor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularityReport {
    pub floor: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub singular_nodes: Vec<usize>,
    pub longest_run: usize,
}

/// Invert a Hermitian field node by node.
///
/// Nodes whose smallest eigenvalue is at or below `rel_floor · max eigenvalue`
/// are reported and inverted with eigenvalues clamped at the floor. A run of
/// more than `√n` contiguous singular nodes is a positive-measure singular set
/// and is rejected.
pub fn pointwise_inverse(values: &[CMat], rel_floor: f64, exec: Execution) -> Result<(Vec<CMat>, SingularityReport)> {
    let eig = par::map_slice(exec, values, linalg::hermitian_eigen);
    let max_eig = eig.iter().map(|(v, _)| *v.last().unwrap()).fold(f64::NEG_INFINITY, f64::max);
    let min_eig = eig.iter().map(|(v, _)| v[0]).fold(f64::INFINITY, f64::min);
    let floor = rel_floor * max_eig.max(f64::MIN_POSITIVE);
    let singular: Vec<usize> = eig.iter().enumerate().filter(|(_, (v, _))| v[0] <= floor).map(|(j, _)| j).collect();
    let longest_run = longest_cyclic_run(&singular, values.len());
    if longest_run * longest_run > values.len() {
        return Err(Error::NonInvertibleDensity { longest_run, grid_size: values.len() });
    }
    let inv = par::map_slice(exec, &eig, |(v, vec)| linalg::spectral_map(v, vec, |x| 1.0 / x.max(floor)));
    Ok((
        inv,
        SingularityReport {
            floor,
            min_eigenvalue: min_eig,
            max_eigenvalue: max_eig,
            singular_nodes: singular,
            longest_run,
        },
    ))
}

fn longest_cyclic_run(sorted: &[usize], n: usize) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    if sorted.len() == n {
        return n;
    }
    let mut best = 0;
    let mut run = 0;
    let mut prev: Option<usize> = None;
    for &j in sorted {
        run = if prev.is_some_and(|p| p + 1 == j) { run + 1 } else { 1 };
        best = best.max(run);
        prev = Some(j);
    }
    // join the run touching node n-1 with the one starting at node 0
    if sorted[0] == 0 && *sorted.last().unwrap() == n - 1 {
        let head = sorted.iter().enumerate().take_while(|(i, &j)| *i == j).count();
        let tail = sorted.iter().rev().enumerate().take_while(|(i, &j)| j == n - 1 - i).count();
        best = best.max(head + tail);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CoeffRole {
    /// Coefficients of `(f+g)^{-1}`.
    B,
    /// Coefficients of `f (f+g)^{-1}`.
    R,
    /// Coefficients of `f (f+g)^{-1} g`.
    D,
    /// Covariances `E ζ⃗(n+k) ζ⃗(n)*`.
    Cov,
    Generic,
}

/// Lag-indexed matrix coefficients for `|k| ≤ kmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoeffSet {
    pub role: CoeffRole,
    rows: usize,
    cols: usize,
    kmax: usize,
    coeffs: Vec<CMat>,
    /// Grid the quadrature ran on (0 when exact).
    pub grid_size: usize,
    /// Max entrywise change against the half-size grid.
    pub residual: f64,
}

impl FourierCoeffSet {
    pub fn from_coeffs(role: CoeffRole, kmax: usize, coeffs: Vec<CMat>, grid_size: usize, residual: f64) -> Self {
        assert_eq!(coeffs.len(), 2 * kmax + 1);
        let (rows, cols) = coeffs[0].shape();
        Self { role, rows, cols, kmax, coeffs, grid_size, residual }
    }

    pub fn dim(&self) -> usize {
        self.rows
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    /// Coefficient at lag `k`; `None` outside the computed range.
    pub fn try_get(&self, k: i64) -> Option<&CMat> {
        if k.unsigned_abs() as usize > self.kmax {
            None
        } else {
            Some(&self.coeffs[(k + self.kmax as i64) as usize])
        }
    }

    /// Coefficient at lag `k`, zero outside the computed range.
    pub fn get(&self, k: i64) -> CMat {
        self.try_get(k).cloned().unwrap_or_else(|| CMat::zeros(self.rows, self.cols))
    }

    /// Largest lag whose coefficient is above `rel_tol · max_k ‖coeff(k)‖`.
    pub fn bandwidth(&self, rel_tol: f64) -> usize {
        let scale = self.coeffs.iter().map(linalg::max_abs).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0;
        }
        (0..=self.kmax)
            .rev()
            .find(|&k| {
                let k = k as i64;
                linalg::max_abs(&self.get(k)).max(linalg::max_abs(&self.get(-k))) > rel_tol * scale
            })
            .unwrap_or(0)
    }

    /// Max entry magnitude at `|k| = kmax`, a proxy for the discarded tail.
    pub fn edge_norm(&self) -> f64 {
        let k = self.kmax as i64;
        linalg::max_abs(&self.get(k)).max(linalg::max_abs(&self.get(-k)))
    }
}

/// Transform-based quadrature of the Fourier coefficients of a matrix field
/// (any fixed shape, so vector fields work as `T×1` matrices).
pub fn fourier_coefficients(
    values: &[CMat],
    grid: &FrequencyGrid,
    kmax: usize,
    role: CoeffRole,
) -> Result<FourierCoeffSet> {
    let n = grid.size();
    if values.len() != n {
        return Err(Error::validation(format!("field has {} nodes, grid has {n}", values.len())));
    }
    if 4 * kmax >= n {
        return Err(Error::Aliasing { kmax, grid_size: n });
    }
    let fine = raw_coefficients(values, grid, kmax, 1);
    let coarse = raw_coefficients(values, &grid.even_subgrid(), kmax, 2);
    let residual = fine.iter().zip(&coarse).map(|(a, b)| linalg::max_abs(&(a - b))).fold(0.0, f64::max);
    Ok(FourierCoeffSet::from_coeffs(role, kmax, fine, n, residual))
}

/// Coefficients from the nodes `values[0], values[stride], …` forming `grid`.
fn raw_coefficients(values: &[CMat], grid: &FrequencyGrid, kmax: usize, stride: usize) -> Vec<CMat> {
    let n = grid.size();
    let (rows, cols) = values[0].shape();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut out = vec![CMat::zeros(rows, cols); 2 * kmax + 1];
    let mut buf = vec![ZERO; n];
    let h = grid.spacing();
    for p in 0..rows {
        for q in 0..cols {
            for (j, slot) in buf.iter_mut().enumerate() {
                *slot = values[j * stride][(p, q)];
            }
            fft.process(&mut buf);
            for k in -(kmax as i64)..=(kmax as i64) {
                // e^{-ikλ_j} = e^{ikπ} e^{-ik·offset·h} e^{-2πi kj/n}
                let phase = C64::from_polar(1.0 / n as f64, k as f64 * (PI - grid.offset() * h));
                out[(k + kmax as i64) as usize][(p, q)] = buf[k.rem_euclid(n as i64) as usize] * phase;
            }
        }
    }
    out
}

/// Signal plus optional additive noise, `f` and `g` of the blocked sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub f: DensitySpec,
    pub g: Option<DensitySpec>,
}

impl Model {
    pub fn new(f: DensitySpec, g: Option<DensitySpec>) -> Result<Self> {
        if let Some(g) = &g {
            if g.dim() != f.dim() {
                return Err(Error::validation(format!(
                    "f is {}x{} but g is {}x{}",
                    f.dim(),
                    f.dim(),
                    g.dim(),
                    g.dim()
                )));
            }
        }
        Ok(Self { f, g })
    }

    pub fn noiseless(f: DensitySpec) -> Self {
        Self { f, g: None }
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn is_noisy(&self) -> bool {
        self.g.is_some()
    }
}

/// The matrix functions the estimator needs, sampled on one grid.
#[derive(Debug, Clone)]
pub struct KernelFields {
    pub grid: FrequencyGrid,
    /// `(f+g)^{-1}`.
    pub inverse: Vec<CMat>,
    /// `f (f+g)^{-1}`; identity when noiseless.
    pub signal_gain: Option<Vec<CMat>>,
    /// `f (f+g)^{-1} g`; zero when noiseless.
    pub error_kernel: Option<Vec<CMat>>,
    /// `f` itself, when finite at every node.
    pub f_values: Option<Vec<CMat>>,
    pub g_values: Option<Vec<CMat>>,
    pub singularities: Option<SingularityReport>,
}

const PSD_TOL: f64 = 1e-12;

fn check_psd(values: &[CMat], what: &str, exec: Execution) -> Result<()> {
    let eig = par::map_slice(exec, values, linalg::min_max_eigenvalue);
    let max = eig.iter().map(|e| e.1).fold(0.0, f64::max);
    if let Some((j, e)) = eig.iter().enumerate().find(|(_, e)| e.0 < -PSD_TOL * max.max(1.0)) {
        return Err(Error::validation(format!(
            "{what} is not positive semidefinite at node {j} (eigenvalue {:.3e})",
            e.0
        )));
    }
    Ok(())
}

/// Values of a spec as a density, inverting when it is given as an inverse.
fn density_values(
    spec: &DensitySpec,
    grid: &FrequencyGrid,
    exec: Execution,
    name: &str,
) -> Result<(Vec<CMat>, Option<SingularityReport>)> {
    let raw = evaluate(spec, grid, exec);
    check_psd(&raw, name, exec)?;
    match spec.kind() {
        DensityKind::Density => Ok((raw, None)),
        DensityKind::InverseDensity => {
            let (inv, rep) = pointwise_inverse(&raw, DEFAULT_EIGEN_FLOOR, exec)?;
            Ok((inv, Some(rep)))
        }
    }
}

/// Sample `(f+g)^{-1}`, `f(f+g)^{-1}` and `f(f+g)^{-1}g` on `grid`.
pub fn kernels_on_grid(model: &Model, grid: &FrequencyGrid, exec: Execution) -> Result<KernelFields> {
    let f = &model.f;
    let Some(g) = &model.g else {
        let raw = evaluate(f, grid, exec);
        check_psd(&raw, "f", exec)?;
        return Ok(match f.kind() {
            DensityKind::InverseDensity => {
                let f_values = pointwise_inverse(&raw, DEFAULT_EIGEN_FLOOR, exec).ok().map(|(v, _)| v);
                KernelFields {
                    grid: *grid,
                    inverse: raw,
                    signal_gain: None,
                    error_kernel: None,
                    f_values,
                    g_values: None,
                    singularities: None,
                }
            }
            DensityKind::Density => {
                let (inv, rep) = pointwise_inverse(&raw, DEFAULT_EIGEN_FLOOR, exec)?;
                KernelFields {
                    grid: *grid,
                    inverse: inv,
                    signal_gain: None,
                    error_kernel: None,
                    f_values: Some(raw),
                    g_values: None,
                    singularities: Some(rep),
                }
            }
        });
    };

    let (g_vals, _) = density_values(g, grid, exec, "g")?;
    match f.kind() {
        DensityKind::InverseDensity => {
            // (f+g)^{-1} = f^{-1} (I + g f^{-1})^{-1} keeps poles of f out of the arithmetic
            let f_inv = evaluate(f, grid, exec);
            check_psd(&f_inv, "f^{-1}", exec)?;
            let t = model.dim();
            let parts = par::try_map_indexed(exec, grid.size(), |j| {
                let m = linalg::identity(t) + &g_vals[j] * &f_inv[j];
                let m_inv = linalg::inverse(&m)
                    .ok_or(Error::NonInvertibleDensity { longest_run: 1, grid_size: grid.size() })?;
                let p = linalg::hermitian_part(&(&f_inv[j] * &m_inv));
                let d = linalg::hermitian_part(&(&m_inv * &g_vals[j]));
                Ok::<_, Error>((p, m_inv, d))
            })?;
            let f_values = pointwise_inverse(&f_inv, DEFAULT_EIGEN_FLOOR, exec).ok().map(|(v, _)| v);
            let (inverse, (gain, err)): (Vec<_>, (Vec<_>, Vec<_>)) =
                parts.into_iter().map(|(p, r, d)| (p, (r, d))).unzip();
            Ok(KernelFields {
                grid: *grid,
                inverse,
                signal_gain: Some(gain),
                error_kernel: Some(err),
                f_values,
                g_values: Some(g_vals),
                singularities: None,
            })
        }
        DensityKind::Density => {
            let f_vals = evaluate(f, grid, exec);
            check_psd(&f_vals, "f", exec)?;
            let sum: Vec<CMat> = f_vals.iter().zip(&g_vals).map(|(a, b)| a + b).collect();
            let (inverse, rep) = pointwise_inverse(&sum, DEFAULT_EIGEN_FLOOR, exec)?;
            let gain: Vec<CMat> = f_vals.iter().zip(&inverse).map(|(fv, p)| fv * p).collect();
            let err = par::map_indexed(exec, grid.size(), |j| linalg::hermitian_part(&(&gain[j] * &g_vals[j])));
            Ok(KernelFields {
                grid: *grid,
                inverse,
                signal_gain: Some(gain),
                error_kernel: Some(err),
                f_values: Some(f_vals),
                g_values: Some(g_vals),
                singularities: Some(rep),
            })
        }
    }
}

/// Outcome of the numeric minimality test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalityReport {
    pub pass: bool,
    /// `(grid size, (1/2π) ∫ Tr[(f+g)^{-1}] dλ)` on successively refined grids.
    pub estimates: Vec<(usize, f64)>,
    pub verdict: String,
}

/// Relative change that counts as converged between refinements.
pub const MINIMALITY_RTOL: f64 = 1e-3;

/// Growth ratio per doubling that counts as divergence.
pub const DIVERGENCE_RATIO: f64 = 1.5;

/// Estimate `(1/2π) ∫ Tr[(f+g)^{-1}] dλ` on grids `n`, `2n`, `4n` and decide
/// whether it converges.
pub fn minimality_check(model: &Model, grid_size: usize, exec: Execution) -> MinimalityReport {
    let mut estimates = Vec::with_capacity(3);
    let mut grid = match FrequencyGrid::new(grid_size) {
        Ok(g) => g,
        Err(e) => return MinimalityReport { pass: false, estimates, verdict: e.to_string() },
    };
    for _ in 0..3 {
        match kernels_on_grid(model, &grid, exec) {
            Ok(k) => {
                let traces: Vec<f64> = k.inverse.iter().map(|m| m.trace().re).collect();
                estimates.push((grid.size(), grid.mean(&traces)));
            }
            Err(e) => return MinimalityReport { pass: false, estimates, verdict: e.to_string() },
        }
        grid = grid.refined();
    }
    let rel = |a: f64, b: f64| (b - a).abs() / a.abs().max(f64::MIN_POSITIVE);
    let (e0, e1, e2) = (estimates[0].1, estimates[1].1, estimates[2].1);
    if rel(e0, e1) < MINIMALITY_RTOL && rel(e1, e2) < MINIMALITY_RTOL {
        MinimalityReport { pass: true, estimates, verdict: "converged".into() }
    } else if e2 / e1 > DIVERGENCE_RATIO {
        MinimalityReport {
            pass: false,
            estimates,
            verdict: format!("trace integral of (f+g)^-1 diverges (x{:.2} per grid doubling)", e2 / e1),
        }
    } else {
        MinimalityReport {
            pass: false,
            estimates,
            verdict: "trace integral of (f+g)^-1 not resolved on the grid".into(),
        }
    }
}

/// Relative change of the lag-0 covariance trace accepted between the two
/// finest grids.
pub const VARIANCE_RTOL: f64 = 1e-8;

/// Covariances `Cov(k) = E ζ⃗(n+k) ζ⃗(n)* = (1/2π) ∫ e^{ikλ} f(λ) dλ`.
pub fn covariance_from_density(
    spec: &DensitySpec,
    kmax: usize,
    grid_size: usize,
    exec: Execution,
) -> Result<FourierCoeffSet> {
    match spec.kind() {
        DensityKind::Density => {
            let coeffs = (-(kmax as i64)..=kmax as i64).map(|k| spec.coeff(-k)).collect();
            Ok(FourierCoeffSet::from_coeffs(CoeffRole::Cov, kmax, coeffs, 0, 0.0))
        }
        DensityKind::InverseDensity => {
            let mut grid = FrequencyGrid::new(grid_size)?;
            while 4 * kmax >= grid.size() {
                grid = grid.refined();
            }
            let mut traces = Vec::with_capacity(3);
            let mut last = None;
            for _ in 0..3 {
                let inv = evaluate(spec, &grid, exec);
                check_psd(&inv, "f^{-1}", exec)?;
                let (f, _) = pointwise_inverse(&inv, DEFAULT_EIGEN_FLOOR, exec)
                    .map_err(|e| Error::InfiniteVariance(e.to_string()))?;
                let set = fourier_coefficients(&f, &grid, kmax, CoeffRole::Generic)?;
                traces.push(set.get(0).trace().re);
                last = Some(set);
                grid = grid.refined();
            }
            let (t1, t2) = (traces[1], traces[2]);
            if t2 / t1 > DIVERGENCE_RATIO {
                return Err(Error::InfiniteVariance(format!(
                    "lag-0 covariance trace grows {t1:.3e} -> {t2:.3e} under grid refinement"
                )));
            }
            if (t2 - t1).abs() > VARIANCE_RTOL * t2.abs() {
                return Err(Error::InfiniteVariance(format!(
                    "lag-0 covariance trace not resolved ({t1:.6e} vs {t2:.6e}); density may not be integrable"
                )));
            }
            let set = last.unwrap();
            let coeffs = (-(kmax as i64)..=kmax as i64).map(|k| set.get(-k)).collect();
            Ok(FourierCoeffSet::from_coeffs(CoeffRole::Cov, kmax, coeffs, set.grid_size, set.residual))
        }
    }
}
