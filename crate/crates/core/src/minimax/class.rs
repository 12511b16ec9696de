//! Admissible density classes and the map that forces a candidate into one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::par::Execution;
use crate::spectral::{self, CoeffRole, DensityKind, DensitySpec, FrequencyGrid, Model};

/// Relative tolerance used by [`AdmissibleClass::contains`].
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// Relative slack the projection itself aims for.
const PROJECTION_TOL: f64 = 1e-12;
const PULLBACK_STEPS: usize = 60;
pub const DEFAULT_CLASS_GRID: usize = 256;
/// Default lower eigenvalue bound of the signal density, relative to its
/// average eigenvalue.
pub const DEFAULT_FLOOR_RATIO: f64 = 1e-3;

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassVariant {
    /// `(1/2π) ∫ F = P`.
    D0_1,
    /// `(1/2π) ∫ Tr F = p`.
    D0_2,
    /// `V ≤ F ≤ U` in matrix order and `(1/2π) ∫ F = Q`.
    DVU_1,
    /// `Tr V ≤ Tr F ≤ Tr U` and `(1/2π) ∫ Tr F = q`.
    DVU_2,
}

/// Mean constraint of one density.
#[derive(Debug, Clone, PartialEq)]
pub enum Moment {
    Matrix(CMat),
    Trace(f64),
}

/// Pointwise bounds `lower ≤ F ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub lower: DensitySpec,
    pub upper: DensitySpec,
}

/// Constraints on the signal or the noise density.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentClass {
    pub moment: Moment,
    pub band: Option<Band>,
}

impl ComponentClass {
    pub fn matrix_moment(p: CMat) -> Self {
        Self { moment: Moment::Matrix(p), band: None }
    }

    pub fn trace_moment(p: f64) -> Self {
        Self { moment: Moment::Trace(p), band: None }
    }

    pub fn with_band(mut self, lower: DensitySpec, upper: DensitySpec) -> Self {
        self.band = Some(Band { lower, upper });
        self
    }

    pub fn variant(&self) -> ClassVariant {
        match (&self.moment, self.band.is_some()) {
            (Moment::Matrix(_), false) => ClassVariant::D0_1,
            (Moment::Trace(_), false) => ClassVariant::D0_2,
            (Moment::Matrix(_), true) => ClassVariant::DVU_1,
            (Moment::Trace(_), true) => ClassVariant::DVU_2,
        }
    }

    fn is_matrix(&self) -> bool {
        matches!(self.moment, Moment::Matrix(_))
    }
}

/// Class of `(f, g)` pairs; `noise: None` means noiseless observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityClassSpec {
    pub period: usize,
    pub signal: ComponentClass,
    pub noise: Option<ComponentClass>,
    /// Largest lag of the free Fourier coefficients.
    pub degree: usize,
    pub grid_size: usize,
    /// Lower eigenvalue bound kept on the signal density.
    pub psd_floor: Option<f64>,
}

impl DensityClassSpec {
    pub fn new(period: usize, signal: ComponentClass, degree: usize) -> Self {
        Self { period, signal, noise: None, degree, grid_size: DEFAULT_CLASS_GRID, psd_floor: None }
    }

    pub fn with_noise(mut self, noise: ComponentClass) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn with_grid_size(mut self, n: usize) -> Self {
        self.grid_size = n;
        self
    }

    pub fn with_psd_floor(mut self, floor: f64) -> Self {
        self.psd_floor = Some(floor);
        self
    }

    /// Variant of the signal class.
    pub fn variant(&self) -> ClassVariant {
        self.signal.variant()
    }
}

/// A concrete `(f, g)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMember {
    pub f: DensitySpec,
    pub g: Option<DensitySpec>,
}

impl ClassMember {
    pub fn model(&self) -> Result<Model> {
        Model::new(self.f.clone(), self.g.clone())
    }
}

/// Coefficients of lags `0..=d` for each component (signal first).
pub(crate) type Coords = Vec<Vec<CMat>>;

pub(crate) fn coords_norm(x: &Coords) -> f64 {
    x.iter().flatten().map(|c| c.norm_squared()).sum::<f64>().sqrt()
}

pub(crate) fn coords_axpy(x: &Coords, s: f64, y: &Coords) -> Coords {
    x.iter().zip(y).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q.scale(s)).collect()).collect()
}

fn lerp(a: &[CMat], b: &[CMat], theta: f64) -> Vec<CMat> {
    a.iter().zip(b).map(|(p, q)| p + (q - p).scale(theta)).collect()
}

fn padded(spec: &DensitySpec, degree: usize) -> Vec<CMat> {
    (0..=degree as i64).map(|k| spec.coeff(k)).collect()
}

fn to_spec(coeffs: &[CMat], label: &str) -> DensitySpec {
    let mut c = coeffs.to_vec();
    c[0] = linalg::hermitian_part(&c[0]);
    DensitySpec::new(DensityKind::Density, c, label).expect("finite Hermitian coefficients")
}

fn grid_values(coeffs: &[CMat], nodes: &[f64]) -> Vec<CMat> {
    nodes
        .iter()
        .map(|&lambda| {
            let mut out = coeffs[0].clone();
            for (k, c) in coeffs.iter().enumerate().skip(1) {
                let z = C64::from_polar(1.0, k as f64 * lambda);
                out += c * z + c.adjoint() * z.conj();
            }
            linalg::hermitian_part(&out)
        })
        .collect()
}

fn trace_re(m: &CMat) -> f64 {
    m.trace().re
}

fn min_eig(m: &CMat) -> f64 {
    linalg::min_max_eigenvalue(m).0
}

#[derive(Debug, Clone)]
struct PreparedBand {
    lower: Vec<CMat>,
    upper: Vec<CMat>,
    /// `(U - V)^{1/2}` and its pseudo-inverse, for matrix-order clipping.
    width_sqrt: Vec<CMat>,
    width_isqrt: Vec<CMat>,
}

#[derive(Debug, Clone)]
pub(crate) struct PreparedComponent {
    class: ComponentClass,
    dim: usize,
    degree: usize,
    floor: f64,
    pub(crate) scale: f64,
    grid: FrequencyGrid,
    band: Option<PreparedBand>,
    center: Vec<CMat>,
}

impl PreparedComponent {
    fn new(
        class: &ComponentClass,
        dim: usize,
        degree: usize,
        floor: Option<f64>,
        grid: &FrequencyGrid,
        what: &str,
    ) -> Result<Self> {
        let nodes = grid.nodes();
        let (trace_total, matrix) = match &class.moment {
            Moment::Matrix(p) => {
                if p.nrows() != dim || p.ncols() != dim {
                    return Err(Error::validation(format!("{what} moment matrix must be {dim}x{dim}")));
                }
                let scale = linalg::max_abs(p).max(1.0);
                if linalg::max_abs(&(p - p.adjoint())) > 1e-12 * scale {
                    return Err(Error::validation(format!("{what} moment matrix is not Hermitian")));
                }
                if min_eig(p) <= 0.0 {
                    return Err(Error::validation(format!("{what} moment matrix is not positive definite")));
                }
                (trace_re(p), true)
            }
            Moment::Trace(p) => {
                if !(p.is_finite() && *p > 0.0) {
                    return Err(Error::validation(format!("{what} trace moment must be positive")));
                }
                (*p, false)
            }
        };
        let scale = trace_total / dim as f64;
        let floor = floor.unwrap_or(0.0);
        let tol = PROJECTION_TOL * scale;
        let mut degree = degree;
        let band = match &class.band {
            None => None,
            Some(b) => {
                for (s, name) in [(&b.lower, "lower"), (&b.upper, "upper")] {
                    if s.dim() != dim {
                        return Err(Error::validation(format!("{what} {name} bound must be {dim}x{dim}")));
                    }
                    if s.kind() != DensityKind::Density {
                        return Err(Error::validation(format!("{what} {name} bound must be given as a density")));
                    }
                    degree = degree.max(s.degree());
                }
                let lower = grid_values(&padded(&b.lower, b.lower.degree()), &nodes);
                let upper = grid_values(&padded(&b.upper, b.upper.degree()), &nodes);
                let mut width_sqrt = Vec::with_capacity(nodes.len());
                let mut width_isqrt = Vec::with_capacity(nodes.len());
                for (v, u) in lower.iter().zip(&upper) {
                    let w = u - v;
                    if matrix && min_eig(&w) < -tol {
                        return Err(Error::InfeasibleClass(format!(
                            "{what} lower bound exceeds upper bound in matrix order"
                        )));
                    }
                    if !matrix && trace_re(&w) < -tol {
                        return Err(Error::InfeasibleClass(format!(
                            "{what} lower bound trace exceeds upper bound trace"
                        )));
                    }
                    let (vals, vecs) = linalg::hermitian_eigen(&w);
                    let cut = tol.max(1e-14 * vals.last().copied().unwrap_or(0.0).abs());
                    width_sqrt.push(linalg::spectral_map(&vals, &vecs, |x| x.max(0.0).sqrt()));
                    width_isqrt.push(linalg::spectral_map(
                        &vals,
                        &vecs,
                        |x| if x > cut { 1.0 / x.sqrt() } else { 0.0 },
                    ));
                }
                Some(PreparedBand { lower, upper, width_sqrt, width_isqrt })
            }
        };
        let mut out = Self { class: class.clone(), dim, degree, floor, scale, grid: *grid, band, center: Vec::new() };
        out.center = out.build_center(what)?;
        if out.violation(&out.center) > 1e3 * tol {
            return Err(Error::InfeasibleClass(format!(
                "{what} class has no interior point compatible with the eigenvalue floor {floor:e}"
            )));
        }
        Ok(out)
    }

    fn build_center(&self, what: &str) -> Result<Vec<CMat>> {
        let d = self.degree;
        let t = self.dim;
        let mut c = vec![CMat::zeros(t, t); d + 1];
        let tol = PROJECTION_TOL.sqrt() * self.scale;
        match (&self.class.moment, &self.class.band) {
            (Moment::Matrix(p), None) => c[0] = p.clone(),
            (Moment::Trace(p), None) => c[0] = linalg::identity(t).scale(p / t as f64),
            (Moment::Matrix(q), Some(b)) => {
                let shift = q - b.lower.mean();
                if min_eig(&shift) < -tol {
                    return Err(Error::InfeasibleClass(format!("{what} moment is below the mean of the lower bound")));
                }
                if min_eig(&(b.upper.mean() - q)) < -tol {
                    return Err(Error::InfeasibleClass(format!("{what} moment is above the mean of the upper bound")));
                }
                c = padded(&b.lower, d);
                c[0] += shift;
            }
            (Moment::Trace(q), Some(b)) => {
                let lo = trace_re(&b.lower.mean());
                let hi = trace_re(&b.upper.mean());
                if *q < lo - tol {
                    return Err(Error::InfeasibleClass(format!(
                        "{what} trace moment {q} is below the mean trace of the lower bound {lo}"
                    )));
                }
                if *q > hi + tol {
                    return Err(Error::InfeasibleClass(format!(
                        "{what} trace moment {q} is above the mean trace of the upper bound {hi}"
                    )));
                }
                let theta = if hi - lo > tol { ((q - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
                c = lerp(&padded(&b.lower, d), &padded(&b.upper, d), theta);
            }
        }
        self.fix_moment(&mut c);
        Ok(c)
    }

    pub(crate) fn center(&self) -> &[CMat] {
        &self.center
    }

    pub(crate) fn degree(&self) -> usize {
        self.degree
    }

    pub(crate) fn is_matrix(&self) -> bool {
        self.class.is_matrix()
    }

    fn fix_moment(&self, c: &mut [CMat]) {
        c[0] = linalg::hermitian_part(&c[0]);
        match &self.class.moment {
            Moment::Matrix(p) => c[0] = p.clone(),
            Moment::Trace(p) => {
                let shift = (trace_re(&c[0]) - p) / self.dim as f64;
                c[0] -= linalg::identity(self.dim).scale(shift);
            }
        }
    }

    fn moment_error(&self, c: &[CMat]) -> f64 {
        let herm = linalg::max_abs(&(&c[0] - c[0].adjoint()));
        let m = match &self.class.moment {
            Moment::Matrix(p) => linalg::max_abs(&(&c[0] - p)),
            Moment::Trace(p) => (trace_re(&c[0]) - p).abs(),
        };
        herm.max(m)
    }

    /// Largest constraint violation over the grid, in absolute units.
    fn violation_on(&self, values: &[CMat]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, v) in values.iter().enumerate() {
            worst = worst.max(self.floor - min_eig(v));
            if let Some(b) = &self.band {
                if self.is_matrix() {
                    worst = worst.max(-min_eig(&(v - &b.lower[j])));
                    worst = worst.max(-min_eig(&(&b.upper[j] - v)));
                } else {
                    let tr = trace_re(v);
                    worst = worst.max(trace_re(&b.lower[j]) - tr);
                    worst = worst.max(tr - trace_re(&b.upper[j]));
                }
            }
        }
        worst
    }

    fn violation(&self, c: &[CMat]) -> f64 {
        if c.len() > self.degree + 1 {
            return f64::INFINITY;
        }
        self.violation_on(&grid_values(c, &self.nodes())).max(self.moment_error(c))
    }

    fn nodes(&self) -> Vec<f64> {
        self.grid.nodes()
    }

    fn clip(&self, values: &[CMat]) -> Vec<CMat> {
        values
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let mut v = v.clone();
                if let (Some(b), true) = (&self.band, self.is_matrix()) {
                    let x = &b.width_isqrt[j] * (&v - &b.lower[j]) * &b.width_isqrt[j];
                    let (vals, vecs) = linalg::hermitian_eigen(&x);
                    let x = linalg::spectral_map(&vals, &vecs, |e| e.clamp(0.0, 1.0));
                    v = &b.lower[j] + &b.width_sqrt[j] * x * &b.width_sqrt[j];
                }
                let (vals, vecs) = linalg::hermitian_eigen(&v);
                v = linalg::spectral_map(&vals, &vecs, |e| e.max(self.floor));
                if let (Some(b), false) = (&self.band, self.is_matrix()) {
                    let tr = trace_re(&v);
                    let (lo, hi) = (trace_re(&b.lower[j]), trace_re(&b.upper[j]));
                    if tr > hi {
                        v = v.scale(hi / tr);
                    } else if tr < lo {
                        v = if tr > 0.0 { v.scale(lo / tr) } else { b.lower[j].clone() };
                    }
                }
                v
            })
            .collect()
    }

    /// Map coefficients into the class; feasible input is returned unchanged.
    pub(crate) fn project(&self, c: &[CMat]) -> Vec<CMat> {
        let tol = PROJECTION_TOL * self.scale;
        if self.violation(c) <= tol {
            return c.to_vec();
        }
        let mut x: Vec<CMat> =
            (0..=self.degree).map(|k| c.get(k).cloned().unwrap_or_else(|| CMat::zeros(self.dim, self.dim))).collect();
        self.fix_moment(&mut x);
        if self.violation(&x) <= tol {
            return x;
        }
        let grid = self.grid;
        let clipped = self.clip(&grid_values(&x, &grid.nodes()));
        let set = spectral::fourier_coefficients(&clipped, &grid, self.degree, CoeffRole::Generic)
            .expect("degree below grid / 4");
        let mut y: Vec<CMat> = (0..=self.degree as i64).map(|k| set.get(k)).collect();
        self.fix_moment(&mut y);
        if self.violation(&y) <= tol {
            return y;
        }
        // largest step from the center toward `y` that stays feasible
        let nodes = grid.nodes();
        let vc = grid_values(&self.center, &nodes);
        let vy = grid_values(&y, &nodes);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..PULLBACK_STEPS {
            let mid = 0.5 * (lo + hi);
            // half the tolerance, so re-evaluation rounding keeps the result feasible
            if self.violation_on(&lerp(&vc, &vy, mid)) <= 0.5 * tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut out = lerp(&self.center, &y, lo);
        self.fix_moment(&mut out);
        out
    }

    /// Random perturbation of the center of relative size up to `radius`.
    fn perturbed<R: Rng>(&self, rng: &mut R, radius: f64) -> Vec<CMat> {
        let mut c = self.center.clone();
        let r = radius * self.scale;
        for (k, m) in c.iter_mut().enumerate() {
            for p in 0..self.dim {
                for q in 0..self.dim {
                    let z = C64::new(rng.random_range(-r..r), rng.random_range(-r..r));
                    if k == 0 {
                        if p == q {
                            m[(p, q)] += z.re;
                        } else if p < q {
                            m[(p, q)] += z;
                            m[(q, p)] += z.conj();
                        }
                    } else {
                        m[(p, q)] += z;
                    }
                }
            }
        }
        c
    }
}

/// A validated class with its evaluation grid, ready for projection and
/// sampling.
#[derive(Debug, Clone)]
pub struct AdmissibleClass {
    spec: DensityClassSpec,
    grid: FrequencyGrid,
    pub(crate) signal: PreparedComponent,
    pub(crate) noise: Option<PreparedComponent>,
}

impl AdmissibleClass {
    pub fn new(spec: &DensityClassSpec) -> Result<Self> {
        let t = spec.period;
        if t == 0 {
            return Err(Error::validation("period must be positive"));
        }
        let grid = FrequencyGrid::new(spec.grid_size)?;
        if 4 * spec.degree >= spec.grid_size {
            return Err(Error::Aliasing { kmax: spec.degree, grid_size: spec.grid_size });
        }
        if let Some(noise) = &spec.noise {
            if noise.is_matrix() != spec.signal.is_matrix() {
                return Err(Error::validation(
                    "signal and noise classes must both be matrix or both be trace variants",
                ));
            }
        }
        let signal_scale = match &spec.signal.moment {
            Moment::Matrix(p) => min_eig(p),
            Moment::Trace(p) => p / t as f64,
        };
        let floor = spec.psd_floor.unwrap_or(DEFAULT_FLOOR_RATIO * signal_scale);
        if !(floor.is_finite() && floor > 0.0) {
            return Err(Error::validation("eigenvalue floor must be positive"));
        }
        let signal = PreparedComponent::new(&spec.signal, t, spec.degree, Some(floor), &grid, "signal")?;
        let noise =
            spec.noise.as_ref().map(|n| PreparedComponent::new(n, t, spec.degree, None, &grid, "noise")).transpose()?;
        Ok(Self { spec: spec.clone(), grid, signal, noise })
    }

    pub fn spec(&self) -> &DensityClassSpec {
        &self.spec
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn period(&self) -> usize {
        self.spec.period
    }

    pub fn is_noisy(&self) -> bool {
        self.noise.is_some()
    }

    pub(crate) fn components(&self) -> impl Iterator<Item = &PreparedComponent> {
        std::iter::once(&self.signal).chain(self.noise.as_ref())
    }

    pub(crate) fn member_from(&self, x: &Coords) -> ClassMember {
        ClassMember { f: to_spec(&x[0], "f0"), g: x.get(1).map(|c| to_spec(c, "g0")) }
    }

    pub(crate) fn coords_of(&self, m: &ClassMember) -> Result<Coords> {
        let mut out = vec![padded(&m.f, m.f.degree().max(self.signal.degree))];
        match (&self.noise, &m.g) {
            (Some(n), Some(g)) => out.push(padded(g, g.degree().max(n.degree))),
            (None, None) => {}
            (Some(_), None) => return Err(Error::validation("class has a noise component but the member has no g")),
            (None, Some(_)) => return Err(Error::validation("class is noiseless but the member has a g")),
        }
        if m.f.dim() != self.period() {
            return Err(Error::validation("member dimension does not match the class period"));
        }
        Ok(out)
    }

    pub(crate) fn project_coords(&self, x: &Coords) -> Coords {
        self.components().zip(x).map(|(c, v)| c.project(v)).collect()
    }

    pub(crate) fn center_coords(&self) -> Coords {
        self.components().map(|c| c.center().to_vec()).collect()
    }

    /// Reference member: constant densities or the band interpolant meeting
    /// the moment constraints.
    pub fn center(&self) -> ClassMember {
        self.member_from(&self.center_coords())
    }

    /// Largest constraint violation relative to the component scale.
    pub fn membership_violation(&self, m: &ClassMember) -> f64 {
        match self.coords_of(m) {
            Ok(x) => self.components().zip(&x).map(|(c, v)| c.violation(v) / c.scale).fold(0.0, f64::max),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn contains(&self, m: &ClassMember) -> bool {
        self.membership_violation(m) <= MEMBERSHIP_TOL
    }

    /// Map any pair of densities into the class.
    pub fn project(&self, m: &ClassMember) -> Result<ClassMember> {
        Ok(self.member_from(&self.project_coords(&self.coords_of(m)?)))
    }

    /// Random class member: a perturbation of the center of relative size up
    /// to `radius`, projected.
    pub fn sample<R: Rng>(&self, rng: &mut R, radius: f64) -> ClassMember {
        let x: Coords = self
            .components()
            .map(|c| {
                let r = rng.random_range(0.0..radius);
                c.project(&c.perturbed(rng, r))
            })
            .collect();
        self.member_from(&x)
    }

    /// Signal and noise values on the class grid.
    pub fn grid_values(&self, m: &ClassMember, exec: Execution) -> (Vec<CMat>, Option<Vec<CMat>>) {
        (spectral::evaluate(&m.f, &self.grid, exec), m.g.as_ref().map(|g| spectral::evaluate(g, &self.grid, exec)))
    }

    pub(crate) fn band_values(&self, component: usize) -> Option<(&[CMat], &[CMat])> {
        let c = if component == 0 { Some(&self.signal) } else { self.noise.as_ref() }?;
        c.band.as_ref().map(|b| (b.lower.as_slice(), b.upper.as_slice()))
    }
}
