//! Least favorable densities over admissible classes.
//!
//! The value `Δ(f, g)` of the optimal estimate is concave in `(f, g)`; the
//! solver maximizes it by projected gradient ascent over trigonometric
//! densities of bounded degree and certifies the result by sampling the
//! saddle inequality `Δ(h⁰; f, g) ≤ Δ(f⁰, g⁰)`.

mod class;
mod relations;


use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extrapolate::{self, Coefficients, EstimateOptions};
use crate::linalg::{self, CMat, CVec, C64};
use crate::par::{self, Execution};
use crate::pcmodel::{BlockedFunctional, MissingPattern};
use crate::spectral::{DensityKind, DensitySpec, FrequencyGrid};

pub use class::{
    AdmissibleClass, Band, ClassMember, ClassVariant, ComponentClass, DensityClassSpec, Moment, DEFAULT_CLASS_GRID,
    DEFAULT_FLOOR_RATIO, MEMBERSHIP_TOL,
};
pub use relations::{relation_residuals, BoundMultipliers, Multiplier, RelationReport, RelationResidual};

use class::{coords_axpy, coords_norm, Coords};

/// `Δ` of the optimal estimate for the member's densities.
pub fn value_functional(
    member: &ClassMember,
    pattern: &MissingPattern,
    functional: &BlockedFunctional,
    opts: &EstimateOptions,
) -> Result<f64> {
    let solved = extrapolate::solve_instance(&member.model()?, pattern, functional, opts)?;
    Ok(solved.mse.delta)
}

fn bilinear(u: &CVec, m: &CMat) -> f64 {
    (u.transpose() * m * u.conjugate())[(0, 0)].re
}

/// Density value at `λ`, inverting inverse-kind specs.
pub(crate) fn density_at(spec: &DensitySpec, lambda: f64) -> Option<CMat> {
    let v = spec.value_at(lambda);
    match spec.kind() {
        DensityKind::Density => Some(v),
        DensityKind::InverseDensity => linalg::inverse(&v),
    }
}

/// `(A − H⁰, H⁰)` at `λ` from the lag coefficients of `H⁰`.
pub(crate) fn characteristic_parts(h0: &[(i64, CVec)], functional: &BlockedFunctional, lambda: f64) -> (CVec, CVec) {
    let mut h = CVec::zeros(functional.period());
    for (m, c) in h0 {
        h += c * C64::from_polar(1.0, *m as f64 * lambda);
    }
    (functional.transfer(lambda) - &h, h)
}

/// Error of the fixed estimate with characteristic `h0` when the true
/// densities are `other`: `(1/2π) ∫ uᵀ f conj(u) + wᵀ g conj(w)` with
/// `u = A − H⁰ = P⁰ᵀ(g⁰ᵀA + C⁰)` and `w = H⁰ = P⁰ᵀ(f⁰ᵀA − C⁰)`,
/// `P⁰ = (f⁰+g⁰)^{-1}`. Linear in `(f, g)`.
pub fn delta_cross(
    h0: &[(i64, CVec)],
    functional: &BlockedFunctional,
    other: &ClassMember,
    grid: &FrequencyGrid,
) -> Result<f64> {
    let vals = grid
        .nodes()
        .iter()
        .map(|&lambda| {
            let (u, w) = characteristic_parts(h0, functional, lambda);
            let f = density_at(&other.f, lambda).ok_or_else(|| Error::validation("density is singular on the grid"))?;
            let mut v = bilinear(&u, &f);
            if let Some(g) = &other.g {
                let g =
                    density_at(g, lambda).ok_or_else(|| Error::validation("noise density is singular on the grid"))?;
                v += bilinear(&w, &g);
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(grid.mean(&vals))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AscentOptions {
    /// Iteration budget.
    pub max_iterations: usize,
    /// Finite-difference step relative to the class scale.
    pub fd_step: f64,
    /// Stop once an accepted step moves less than this (relative).
    pub step_tol: f64,
    pub estimate: EstimateOptions,
    pub execution: Execution,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            fd_step: 1e-6,
            step_tol: 1e-12,
            estimate: EstimateOptions {
                grid_size: DEFAULT_CLASS_GRID,
                execution: Execution::Sequential,
                ..Default::default()
            },
            execution: Execution::Parallel,
        }
    }
}

impl AscentOptions {
    /// Estimator settings on the class grid.
    pub fn for_class(class: &AdmissibleClass) -> Self {
        let mut out = Self::default();
        out.estimate.grid_size = class.grid().size();
        out
    }
}

/// Outcome of the saddle-point check.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleCertificate {
    pub samples: usize,
    pub tolerance: f64,
    /// `max Δ(h⁰; f, g) − Δ⁰` over the samples.
    pub max_violation: f64,
    pub worst_sample: Option<usize>,
    /// The member attaining `max_violation` when it exceeds the tolerance.
    pub violating_member: Option<ClassMember>,
    pub pass: bool,
}

/// Candidate least favorable pair with its optimal estimate.
#[derive(Debug, Clone)]
pub struct LeastFavorablePair {
    pub member: ClassMember,
    pub value: f64,
    pub c0: Coefficients,
    /// Lag coefficients of the optimal characteristic `h⁰`.
    pub h0: Vec<(i64, CVec)>,
    pub functional: BlockedFunctional,
    pub relations: RelationReport,
    pub iterations: usize,
    pub converged: bool,
    /// Best value after each iteration, starting with the initial point.
    pub history: Vec<f64>,
}

impl LeastFavorablePair {
    /// Solve the estimation problem at `member` and fit the relations there.
    pub fn at(
        class: &AdmissibleClass,
        member: ClassMember,
        pattern: &MissingPattern,
        functional: &BlockedFunctional,
        opts: &EstimateOptions,
    ) -> Result<Self> {
        let solved = extrapolate::solve_instance(&member.model()?, pattern, functional, opts)?;
        let value = solved.mse.delta;
        let lags = extrapolate::characteristic_lags(&solved.kernels, &solved.system.gamma);
        let h0 = extrapolate::spectral_characteristic(&solved.kernels, functional, &solved.coeffs, lags);
        let relations = relation_residuals(class, &member, &h0, functional);
        Ok(Self {
            member,
            value,
            c0: solved.coeffs,
            h0,
            functional: functional.clone(),
            relations,
            iterations: 0,
            converged: true,
            history: vec![value],
        })
    }

    /// `Δ(h⁰; f, g)` for another pair.
    pub fn cross_value(&self, other: &ClassMember, grid: &FrequencyGrid) -> Result<f64> {
        delta_cross(&self.h0, &self.functional, other, grid)
    }
}

struct Objective<'a> {
    class: &'a AdmissibleClass,
    pattern: &'a MissingPattern,
    functional: &'a BlockedFunctional,
    opts: &'a EstimateOptions,
}

impl Objective<'_> {
    fn value(&self, x: &Coords) -> Result<f64> {
        value_functional(&self.class.member_from(x), self.pattern, self.functional, self.opts)
    }
}

/// Real coordinate directions `(component, lag, row, col, imaginary)`; lag 0
/// moves keep the coefficient Hermitian and skip fixed moments.
fn directions(class: &AdmissibleClass) -> Vec<(usize, usize, usize, usize, bool)> {
    let t = class.period();
    let mut out = Vec::new();
    for (ci, comp) in class.components().enumerate() {
        for k in 0..=comp.degree() {
            for p in 0..t {
                for q in 0..t {
                    if k == 0 {
                        if comp.is_matrix() || p > q {
                            continue;
                        }
                        out.push((ci, 0, p, q, false));
                        if p < q {
                            out.push((ci, 0, p, q, true));
                        }
                    } else {
                        out.push((ci, k, p, q, false));
                        out.push((ci, k, p, q, true));
                    }
                }
            }
        }
    }
    out
}

fn shifted(x: &Coords, dir: (usize, usize, usize, usize, bool), h: f64) -> Coords {
    let (ci, k, p, q, imag) = dir;
    let z = if imag { C64::new(0.0, h) } else { C64::new(h, 0.0) };
    let mut y = x.clone();
    y[ci][k][(p, q)] += z;
    if k == 0 && p != q {
        y[ci][k][(q, p)] += z.conj();
    }
    y
}

/// Maximize `Δ` over the class by projected gradient ascent from `init`
/// (default: the class center).
pub fn solve_least_favorable(
    class: &AdmissibleClass,
    pattern: &MissingPattern,
    functional: &BlockedFunctional,
    init: Option<&ClassMember>,
    opts: &AscentOptions,
) -> Result<LeastFavorablePair> {
    if functional.period() != class.period() {
        return Err(Error::validation("functional period does not match the class period"));
    }
    let obj = Objective { class, pattern, functional, opts: &opts.estimate };
    let scale = class.components().map(|c| c.scale).fold(0.0, f64::max);
    let mut x = match init {
        Some(m) => class.project_coords(&class.coords_of(m)?),
        None => class.center_coords(),
    };
    let mut fx = obj.value(&x)?;
    let dirs = directions(class);
    let h = opts.fd_step * scale;
    let mut history = vec![fx];
    let mut eta: Option<f64> = None;
    let mut converged = dirs.is_empty();
    let mut iterations = 0;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let grad_entries = par::try_map_indexed(opts.execution, dirs.len(), |i| {
            let up = obj.value(&shifted(&x, dirs[i], h))?;
            let down = obj.value(&shifted(&x, dirs[i], -h))?;
            Ok::<_, Error>((up - down) / (2.0 * h))
        })?;
        let mut grad: Coords = x.iter().map(|c| vec![CMat::zeros(class.period(), class.period()); c.len()]).collect();
        for (d, g) in dirs.iter().zip(&grad_entries) {
            grad = shifted(&grad, *d, *g);
        }
        let gnorm = coords_norm(&grad);
        if gnorm == 0.0 || !gnorm.is_finite() {
            converged = true;
            break;
        }
        let mut step = eta.unwrap_or(0.1 * scale / gnorm);
        let mut accepted = false;
        for _ in 0..60 {
            let cand = class.project_coords(&coords_axpy(&x, step, &grad));
            let moved = coords_norm(&coords_axpy(&cand, -1.0, &x));
            if moved <= opts.step_tol * scale {
                break;
            }
            match obj.value(&cand) {
                Ok(fc) if fc > fx => {
                    x = cand;
                    fx = fc;
                    accepted = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !accepted {
            converged = true;
        } else {
            eta = Some(2.0 * step);
        }
        history.push(fx);
    }
    let mut pair = LeastFavorablePair::at(class, class.member_from(&x), pattern, functional, &opts.estimate)?;
    pair.iterations = iterations;
    pair.converged = converged;
    pair.history = history;
    Ok(pair)
}

/// Sample `samples` class members on independent streams of `seed` and check
/// `Δ(h⁰; f, g) ≤ Δ⁰ + tol`.
pub fn verify_saddle(
    pair: &LeastFavorablePair,
    class: &AdmissibleClass,
    samples: usize,
    tol: f64,
    seed: u64,
    exec: Execution,
) -> Result<SaddleCertificate> {
    let grid = *class.grid();
    let draws = par::try_map_indexed(exec, samples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let member = class.sample(&mut rng, 1.5);
        let v = pair.cross_value(&member, &grid)?;
        Ok::<_, Error>((v - pair.value, member))
    })?;
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = None;
    for (i, (v, _)) in draws.iter().enumerate() {
        if *v > max_violation {
            max_violation = *v;
            worst = Some(i);
        }
    }
    if samples == 0 {
        max_violation = 0.0;
    }
    let pass = max_violation <= tol;
    let violating_member = if pass { None } else { worst.map(|i| draws[i].1.clone()) };
    Ok(SaddleCertificate { samples, tolerance: tol, max_violation, worst_sample: worst, violating_member, pass })
}
