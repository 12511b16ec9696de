//! Residuals of the first-order relations a least favorable pair satisfies.
//!
//! With `S = f⁰ + g⁰`, `v_f = g⁰ᵀA + C⁰ = Sᵀ(A − H⁰)` and
//! `v_g = f⁰ᵀA − C⁰ = SᵀH⁰`, the relations read `conj(v) vᵀ = S M(λ) S`
//! where `M` is the multiplier of the class of that component: `ᾱαᵀ` or `α² I` for a moment class, plus the bound
//! multipliers `ψ₁ ≤ 0`, `ψ₂ ≥ 0` (scalars `φ₁`, `φ₂` for trace bounds) for a
//! band class. Multipliers are fitted by least squares over the grid.

use super::class::{AdmissibleClass, ClassMember};
use crate::linalg::{self, CMat, CVec};
use crate::par::Execution;
use crate::pcmodel::BlockedFunctional;

/// Relative size below which a slack counts as an active bound.
const ACTIVE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Multiplier {
    /// `α` with constant part `ᾱαᵀ`.
    Vector(CVec),
    /// `α²` with constant part `α² I`.
    Scalar(f64),
}

/// Grid functions multiplying active bounds.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundMultipliers {
    Matrix { lower: Vec<CMat>, upper: Vec<CMat> },
    Scalar { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationResidual {
    pub multiplier: Multiplier,
    pub bounds: Option<BoundMultipliers>,
    /// Max and mean over nodes of `‖L − R‖ / max(‖L‖, ‖R‖)` (Frobenius).
    pub max_relative: f64,
    pub mean_relative: f64,
    /// Largest bound multiplier times its slack, relative to the constant
    /// multiplier; zero under complementary slackness.
    pub slackness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationReport {
    pub signal: RelationResidual,
    pub noise: Option<RelationResidual>,
}

impl RelationReport {
    pub fn max_relative(&self) -> f64 {
        self.noise.as_ref().map_or(self.signal.max_relative, |n| n.max_relative.max(self.signal.max_relative))
    }
}

fn relative(l: &CMat, r: &CMat) -> f64 {
    let d = (l - r).norm();
    let s = l.norm().max(r.norm());
    if s == 0.0 {
        0.0
    } else {
        d / s
    }
}

fn outer_conj(v: &CVec) -> CMat {
    v.conjugate() * v.transpose()
}

fn inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x * y.conj()).re).sum()
}

/// Top eigenpair of a Hermitian matrix as `α` with `ᾱαᵀ ≈ m`.
fn rank_one(m: &CMat) -> (CVec, CMat) {
    let (vals, vecs) = linalg::hermitian_eigen(m);
    let n = vals.len();
    let top = vals[n - 1].max(0.0);
    let v = vecs.column(n - 1).into_owned();
    let abar = v.scale(top.sqrt());
    let alpha = abar.conjugate();
    let r = outer_conj(&alpha);
    (alpha, r)
}

struct NodeData {
    sum: Vec<CMat>,
    left: Vec<CMat>,
    /// `S^{-1} L S^{-1} = conj(u) uᵀ`.
    whitened: Vec<CMat>,
    component: Vec<CMat>,
}

fn fit(class: &AdmissibleClass, index: usize, data: &NodeData, matrix: bool) -> RelationResidual {
    let n = data.left.len();
    let scale = data.left.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let band = class.band_values(index);
    // slacks to the lower and upper bounds, in matrix or trace order
    let slacks: Option<Vec<(f64, f64)>> = band.map(|(lo, hi)| {
        (0..n)
            .map(|j| {
                let c = &data.component[j];
                if matrix {
                    (linalg::min_max_eigenvalue(&(c - &lo[j])).0, linalg::min_max_eigenvalue(&(&hi[j] - c)).0)
                } else {
                    ((c - &lo[j]).trace().re, (&hi[j] - c).trace().re)
                }
            })
            .collect()
    });
    let comp_scale = data.component.iter().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let interior: Vec<bool> = match &slacks {
        None => vec![true; n],
        Some(s) => s.iter().map(|(a, b)| *a > ACTIVE_TOL * comp_scale && *b > ACTIVE_TOL * comp_scale).collect(),
    };
    let use_all = !interior.iter().any(|&b| b);
    let fit_nodes: Vec<usize> = (0..n).filter(|&j| use_all || interior[j]).collect();

    let t = data.sum[0].nrows();
    let (multiplier, constant): (Multiplier, Vec<CMat>) = if matrix {
        let mut mean = CMat::zeros(t, t);
        for &j in &fit_nodes {
            mean += &data.whitened[j];
        }
        mean /= linalg::C64::new(fit_nodes.len() as f64, 0.0);
        let (alpha, r) = rank_one(&linalg::hermitian_part(&mean));
        (Multiplier::Vector(alpha), vec![r; n])
    } else {
        let (mut num, mut den) = (0.0, 0.0);
        for &j in &fit_nodes {
            let r0 = &data.sum[j] * &data.sum[j];
            num += inner(&data.left[j], &r0);
            den += r0.norm_squared();
        }
        let a2 = if den > 0.0 { num / den } else { 0.0 };
        (Multiplier::Scalar(a2), vec![linalg::identity(t).scale(a2); n])
    };

    let mut bounds = None;
    let mut slackness = None;
    let mut inner_mult = constant.clone();
    if let Some(slacks) = &slacks {
        let const_norm = constant[0].norm().max(scale * f64::EPSILON).max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        if matrix {
            let mut lower = vec![CMat::zeros(t, t); n];
            let mut upper = vec![CMat::zeros(t, t); n];
            for j in 0..n {
                if interior[j] && !use_all {
                    continue;
                }
                let psi = linalg::hermitian_part(&(&data.whitened[j] - &constant[j]));
                let (vals, vecs) = linalg::hermitian_eigen(&psi);
                lower[j] = linalg::spectral_map(&vals, &vecs, |e| e.min(0.0));
                upper[j] = linalg::spectral_map(&vals, &vecs, |e| e.max(0.0));
                inner_mult[j] = &constant[j] + &lower[j] + &upper[j];
                let (sl, su) = slacks[j];
                worst = worst.max(lower[j].norm() * sl.max(0.0) + upper[j].norm() * su.max(0.0));
            }
            bounds = Some(BoundMultipliers::Matrix { lower, upper });
        } else {
            let a2 = match multiplier {
                Multiplier::Scalar(a) => a,
                Multiplier::Vector(_) => unreachable!(),
            };
            let mut lower = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for j in 0..n {
                if interior[j] && !use_all {
                    continue;
                }
                let r0 = &data.sum[j] * &data.sum[j];
                let den = r0.norm_squared();
                let ratio = if den > 0.0 { inner(&data.left[j], &r0) / den } else { 0.0 };
                let phi = ratio - a2;
                lower[j] = phi.min(0.0);
                upper[j] = phi.max(0.0);
                inner_mult[j] = linalg::identity(t).scale(a2 + phi);
                let (sl, su) = slacks[j];
                worst = worst.max(lower[j].abs() * sl.max(0.0) + upper[j] * su.max(0.0));
            }
            bounds = Some(BoundMultipliers::Scalar { lower, upper });
        }
        slackness = Some(worst / (const_norm * comp_scale));
    }

    let residuals: Vec<f64> = (0..n)
        .map(|j| {
            let right = &data.sum[j] * &inner_mult[j] * &data.sum[j];
            relative(&data.left[j], &right)
        })
        .collect();
    let max_relative = residuals.iter().copied().fold(0.0, f64::max);
    let mean_relative = residuals.iter().sum::<f64>() / n as f64;
    RelationResidual { multiplier, bounds, max_relative, mean_relative, slackness }
}

/// Fit multipliers and evaluate both sides of each relation on the class
/// grid for the pair `member` whose optimal characteristic is `h0`.
pub fn relation_residuals(
    class: &AdmissibleClass,
    member: &ClassMember,
    h0: &[(i64, CVec)],
    functional: &BlockedFunctional,
) -> RelationReport {
    let t = class.period();
    let grid = class.grid();
    let nodes = grid.nodes();
    let (fv, gv) = class.grid_values(member, Execution::Sequential);
    let zero = CMat::zeros(t, t);
    let mut signal = NodeData { sum: vec![], left: vec![], whitened: vec![], component: vec![] };
    let mut noise = NodeData { sum: vec![], left: vec![], whitened: vec![], component: vec![] };
    for (j, &lambda) in nodes.iter().enumerate() {
        let f0 = &fv[j];
        let g0 = gv.as_ref().map_or(&zero, |g| &g[j]);
        let s = f0 + g0;
        let (u, w) = super::characteristic_parts(h0, functional, lambda);
        signal.whitened.push(outer_conj(&u));
        signal.left.push(outer_conj(&(s.transpose() * &u)));
        signal.sum.push(s.clone());
        signal.component.push(f0.clone());
        if gv.is_some() {
            noise.whitened.push(outer_conj(&w));
            noise.left.push(outer_conj(&(s.transpose() * &w)));
            noise.sum.push(s);
            noise.component.push(g0.clone());
        }
    }
    let matrix = matches!(class.spec().signal.moment, super::class::Moment::Matrix(_));
    RelationReport { signal: fit(class, 0, &signal, matrix), noise: gv.as_ref().map(|_| fit(class, 1, &noise, matrix)) }
}
