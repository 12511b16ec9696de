//! Optimal linear extrapolation over the block operator system on `Γ_L`.
//!
//! All block matrices act on column vectors and use the transposed Fourier
//! coefficients `Bw(k) = B(k)ᵀ`, `Rw(k) = R(k)ᵀ`, `Dw(k) = D(k)ᵀ`. With
//! `Γ = S̃ ∪ {0, 1, …}` the coefficients `c` solve
//!
//! ```text
//! Σ_{n∈Γ} Bw(m-n) c(n) = Σ_j Rw(m-j) ā(j),   m ∈ Γ
//! ```
//!
//! (noiseless: right side `ā(m)`), the spectral characteristic has lag
//! coefficients `h(m) = Σ_j Rw(m-j) ā(j) - Σ_{n∈Γ} Bw(m-n) c(n)`, which vanish
//! on `Γ` and are the time-domain weights of the estimate `Σ_m h(m)ᵀ y(m)`,
//! and the error is `Δ = ⟨𝐃𝐚, 𝐚⟩ + ⟨𝐁𝐜, 𝐜⟩` (noiseless: `⟨𝐜, 𝐚⟩`).

mod closure;

use std::ops::RangeInclusive;

use serde::Serialize;

pub use closure::FutureCorner;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64};
use crate::par::Execution;
use crate::pcmodel::{BlockedFunctional, GammaIndex, MissingPattern};
use crate::spectral::{self, CoeffRole, FourierCoeffSet, FrequencyGrid, KernelFields, MinimalityReport, Model};

pub const DEFAULT_CONDITION_LIMIT: f64 = 1e12;
/// Relative residual `‖𝐁𝐜 - rhs‖ / ‖rhs‖` accepted from the solver.
pub const SOLVE_RESIDUAL_LIMIT: f64 = 1e-10;
/// Relative change of `Δ` between `L` and `2L` that counts as converged.
pub const TRUNCATION_RTOL: f64 = 1e-6;
pub const DEFAULT_LEAKAGE_LIMIT: f64 = 1e-6;
/// Coefficients below this fraction of the largest one count as zero when
/// measuring bandwidth.
pub const BANDWIDTH_TOL: f64 = 1e-14;
/// Weights below this fraction of the largest one are dropped.
const WEIGHT_PRUNE: f64 = 1e-13;
/// Tail coefficients below this fraction of the largest `c` count as decayed.
const TAIL_DECAY: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Noisy,
    Noiseless,
}

/// Default truncation `max(4N, 32)`.
pub fn default_truncation(horizon: usize) -> usize {
    (4 * horizon).max(32)
}

/// Fourier coefficients of the kernels `(f+g)^{-1}`, `f(f+g)^{-1}`,
/// `f(f+g)^{-1}g`, stored transposed for assembly.
#[derive(Debug, Clone)]
pub struct KernelCoefficients {
    pub period: usize,
    pub b: FourierCoeffSet,
    pub r: Option<FourierCoeffSet>,
    pub d: Option<FourierCoeffSet>,
    bw: Vec<CMat>,
    rw: Vec<CMat>,
    dw: Vec<CMat>,
}

fn transposed(set: &FourierCoeffSet) -> Vec<CMat> {
    let k = set.kmax() as i64;
    (-k..=k).map(|l| set.get(l).transpose()).collect()
}

impl KernelCoefficients {
    pub fn from_fields(fields: &KernelFields, kmax: usize) -> Result<Self> {
        let grid = &fields.grid;
        let b = spectral::fourier_coefficients(&fields.inverse, grid, kmax, CoeffRole::B)?;
        let r = fields
            .signal_gain
            .as_ref()
            .map(|v| spectral::fourier_coefficients(v, grid, kmax, CoeffRole::R))
            .transpose()?;
        let d = fields
            .error_kernel
            .as_ref()
            .map(|v| spectral::fourier_coefficients(v, grid, kmax, CoeffRole::D))
            .transpose()?;
        let bw = transposed(&b);
        let rw = r.as_ref().map(transposed).unwrap_or_default();
        let dw = d.as_ref().map(transposed).unwrap_or_default();
        Ok(Self { period: b.dim(), b, r, d, bw, rw, dw })
    }

    pub fn mode(&self) -> Mode {
        if self.r.is_some() {
            Mode::Noisy
        } else {
            Mode::Noiseless
        }
    }

    pub fn kmax(&self) -> usize {
        self.b.kmax()
    }

    fn lookup<'a>(&self, table: &'a [CMat], k: i64) -> Option<&'a CMat> {
        let kmax = self.kmax() as i64;
        if k.abs() > kmax || table.is_empty() {
            None
        } else {
            Some(&table[(k + kmax) as usize])
        }
    }

    pub fn bw(&self, k: i64) -> CMat {
        self.lookup(&self.bw, k).cloned().unwrap_or_else(|| CMat::zeros(self.period, self.period))
    }

    /// `Rw(k)`; the identity at lag 0 and zero elsewhere when noiseless.
    pub fn rw(&self, k: i64) -> CMat {
        match self.mode() {
            Mode::Noiseless if k == 0 => linalg::identity(self.period),
            Mode::Noiseless => CMat::zeros(self.period, self.period),
            Mode::Noisy => self.lookup(&self.rw, k).cloned().unwrap_or_else(|| CMat::zeros(self.period, self.period)),
        }
    }

    pub fn dw(&self, k: i64) -> CMat {
        self.lookup(&self.dw, k).cloned().unwrap_or_else(|| CMat::zeros(self.period, self.period))
    }

    /// Largest quadrature residual over the coefficient sets.
    pub fn grid_residual(&self) -> f64 {
        [Some(&self.b), self.r.as_ref(), self.d.as_ref()].into_iter().flatten().map(|s| s.residual).fold(0.0, f64::max)
    }

    pub fn b_bandwidth(&self) -> usize {
        self.b.bandwidth(BANDWIDTH_TOL)
    }

    pub fn r_bandwidth(&self) -> usize {
        self.r.as_ref().map_or(0, |r| r.bandwidth(BANDWIDTH_TOL))
    }

    /// Inverse corner of the future operator, when the coefficients decay
    /// within `kmax` (otherwise the future cannot be closed exactly).
    pub fn future_corner(&self) -> Result<Option<FutureCorner>> {
        let b = self.b_bandwidth();
        if b == 0 || b >= self.kmax() {
            return Ok(None);
        }
        FutureCorner::new(|k| self.bw(k), self.period, b).map(Some)
    }
}

/// Operator matrices of the truncated system, indexed by `Γ_L`.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub gamma: GammaIndex,
    pub period: usize,
    pub mode: Mode,
    /// Finite section, block `(k, j)` = `Bw(k-j)`.
    pub bmat: CMat,
    /// Block `(k, ĵ)` = `Rw(k-ĵ)` for `ĵ = 0..N-1`.
    pub rmat: Option<CMat>,
    /// Block `(k̃, ĵ)` = `Dw(k̃-ĵ)`.
    pub dmat: Option<CMat>,
    /// `ā` laid out on `Γ_L` (zero on `S̃`).
    pub padded: CVec,
    /// `ā(0), …, ā(N-1)` stacked.
    pub stacked: CVec,
    pub rhs: CVec,
    /// Coupling `E` of `Γ_L` to the first future superblock.
    pub coupling: Option<CMat>,
    /// Matrix actually solved: `bmat` or its Schur complement with the future.
    pub operator: CMat,
    pub condition: f64,
    /// Largest right-side entry dropped beyond `L` (noisy mode).
    pub rhs_tail: f64,
}

fn stack(vectors: impl Iterator<Item = CVec>, t: usize, count: usize) -> CVec {
    let mut out = CVec::zeros(t * count);
    for (i, v) in vectors.enumerate() {
        out.rows_mut(i * t, t).copy_from(&v);
    }
    out
}

/// Lay out the block operator system over `Γ_L`.
pub fn assemble(
    kc: &KernelCoefficients,
    gamma: &GammaIndex,
    functional: &BlockedFunctional,
    corner: Option<&FutureCorner>,
) -> Result<BlockSystem> {
    let t = kc.period;
    if functional.period() != t {
        return Err(Error::validation(format!(
            "functional period {} does not match density dimension {t}",
            functional.period()
        )));
    }
    let n_a = functional.horizon();
    let l = gamma.truncation();
    if l < n_a {
        return Err(Error::validation(format!("truncation L = {l} is below the functional horizon N = {n_a}")));
    }
    if gamma.spread() > kc.kmax() && kc.b.edge_norm() > 1e-12 * linalg::max_abs(&kc.b.get(0)) {
        return Err(Error::Truncation(format!(
            "index spread {} exceeds kmax {} while coefficients have not decayed",
            gamma.spread(),
            kc.kmax()
        )));
    }
    let idx = gamma.indices();
    let g = idx.len();
    let mut bmat = CMat::zeros(g * t, g * t);
    for (r, &k) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            linalg::set_block(&mut bmat, r, c, &kc.bw(k - j));
        }
    }
    let padded = stack(idx.iter().map(|&k| functional.lifted_at(k)), t, g);
    let stacked = stack(functional.lifted().iter().cloned(), t, n_a);

    let (rmat, dmat, rhs, rhs_tail) = match kc.mode() {
        Mode::Noiseless => (None, None, padded.clone(), 0.0),
        Mode::Noisy => {
            let mut rmat = CMat::zeros(g * t, n_a * t);
            for (r, &k) in idx.iter().enumerate() {
                for j in 0..n_a {
                    let blk = kc.rw(k - j as i64);
                    rmat.view_mut((r * t, j * t), (t, t)).copy_from(&blk);
                }
            }
            let mut dmat = CMat::zeros(n_a * t, n_a * t);
            for k in 0..n_a {
                for j in 0..n_a {
                    linalg::set_block(&mut dmat, k, j, &kc.dw(k as i64 - j as i64));
                }
            }
            let rhs = &rmat * &stacked;
            let a_norm: f64 = functional.lifted().iter().map(|v| v.norm()).sum();
            let first_dropped = l as i64 - n_a as i64 + 1;
            let tail = (first_dropped..=kc.kmax() as i64).map(|k| kc.rw(k).norm()).fold(0.0, f64::max);
            (Some(rmat), Some(dmat), rhs, tail * a_norm)
        }
    };

    let (coupling, operator) = match corner {
        Some(corner) => {
            let b = corner.bandwidth;
            let mut e = CMat::zeros(g * t, b * t);
            for (r, &k) in idx.iter().enumerate() {
                for i in 0..b {
                    let blk = kc.bw(k - (l + i) as i64);
                    e.view_mut((r * t, i * t), (t, t)).copy_from(&blk);
                }
            }
            let op = linalg::hermitian_part(&(&bmat - linalg::matmul(&linalg::matmul(&e, &corner.x), &e.adjoint())));
            (Some(e), op)
        }
        None => (None, bmat.clone()),
    };
    let condition = linalg::hermitian_condition(&operator);
    Ok(BlockSystem {
        gamma: gamma.clone(),
        period: t,
        mode: kc.mode(),
        bmat,
        rmat,
        dmat,
        padded,
        stacked,
        rhs,
        coupling,
        operator,
        condition,
        rhs_tail,
    })
}

/// Solved coefficient vectors on `Γ_L`, plus the implied future ones.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub indices: Vec<i64>,
    pub values: Vec<CVec>,
    /// First index of `tail` (equals `L`).
    pub tail_start: i64,
    /// `c(L), c(L+1), …` implied by the closed future (empty without closure).
    pub tail: Vec<CVec>,
    /// Whether `tail` decays to negligible size within its length.
    pub tail_decayed: bool,
    pub residual: f64,
    pub condition: f64,
}

impl Coefficients {
    pub fn get(&self, n: i64) -> Option<&CVec> {
        if n >= self.tail_start {
            return self.tail.get((n - self.tail_start) as usize);
        }
        self.indices.binary_search(&n).ok().map(|i| &self.values[i])
    }

    /// Every known `(index, c)` pair, `Γ_L` then tail.
    pub fn iter(&self) -> impl Iterator<Item = (i64, &CVec)> {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter())
            .chain(self.tail.iter().enumerate().map(move |(i, v)| (self.tail_start + i as i64, v)))
    }

    /// `C(e^{iλ}) = Σ c(n) e^{inλ}` over the known coefficients.
    pub fn transfer(&self, lambda: f64) -> CVec {
        let t = self.values.first().map_or(0, |v| v.len());
        let mut out = CVec::zeros(t);
        for (n, v) in self.iter() {
            out += v * C64::from_polar(1.0, n as f64 * lambda);
        }
        out
    }
}

/// Solve the assembled system by Hermitian positive-definite factorization.
///
/// `tail_len` bounds the number of future coefficients reconstructed when the
/// future was closed; at least two superblocks are always produced.
pub fn solve_coefficients(
    system: &BlockSystem,
    corner: Option<&FutureCorner>,
    condition_limit: f64,
    tail_len: usize,
) -> Result<Coefficients> {
    let t = system.period;
    let g = system.gamma.len();
    let rhs_norm = system.rhs.norm();
    let l = system.gamma.truncation() as i64;
    if rhs_norm == 0.0 {
        return Ok(Coefficients {
            indices: system.gamma.indices().to_vec(),
            values: vec![CVec::zeros(t); g],
            tail_start: l,
            tail: Vec::new(),
            tail_decayed: true,
            residual: 0.0,
            condition: system.condition,
        });
    }
    if system.condition.is_nan() || system.condition > condition_limit {
        return Err(Error::IllConditioned { condition: system.condition, limit: condition_limit });
    }
    let rhs = CMat::from_column_slice(g * t, 1, system.rhs.as_slice());
    let sol = linalg::cholesky_solve(&system.operator, &rhs)
        .ok_or(Error::IllConditioned { condition: f64::INFINITY, limit: condition_limit })?;
    let sol = CVec::from_column_slice(sol.as_slice());
    let residual = (&system.operator * &sol - &system.rhs).norm() / rhs_norm;
    if residual > SOLVE_RESIDUAL_LIMIT {
        return Err(Error::Consistency(format!("solve residual {residual:.3e} above {SOLVE_RESIDUAL_LIMIT:e}")));
    }
    let values: Vec<CVec> = (0..g).map(|i| sol.rows(i * t, t).into_owned()).collect();

    let (tail, tail_decayed) = match (corner, &system.coupling) {
        (Some(corner), Some(e)) => {
            let b = corner.bandwidth;
            let blocks = tail_len.div_ceil(b).max(2);
            let v = e.adjoint() * CMat::from_column_slice(g * t, 1, sol.as_slice());
            let scale = values.iter().map(|c| c.norm()).fold(0.0, f64::max);
            let mut tail = Vec::with_capacity(blocks * b);
            let mut decayed = false;
            for (k, sb) in corner.propagate(&v, blocks).into_iter().enumerate() {
                let norm = sb.norm();
                for i in 0..b {
                    tail.push(sb.view((i * t, 0), (t, 1)).column(0).into_owned());
                }
                if k >= 1 && norm <= TAIL_DECAY * scale {
                    decayed = true;
                    break;
                }
            }
            (tail, decayed)
        }
        _ => (Vec::new(), true),
    };
    Ok(Coefficients {
        indices: system.gamma.indices().to_vec(),
        values,
        tail_start: l,
        tail,
        tail_decayed,
        residual,
        condition: system.condition,
    })
}

/// Mean-square error with its two quadratic-form contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseParts {
    pub delta: f64,
    /// `⟨𝐃𝐚, 𝐚⟩` (zero when noiseless).
    pub data_term: f64,
    /// `⟨𝐁𝐜, 𝐜⟩` over the closed system (noiseless: `⟨𝐜, 𝐚⟩`).
    pub coefficient_term: f64,
}

/// Negative `Δ` tolerated as round-off.
const NEGATIVE_SLACK: f64 = 1e-10;

pub fn mse(system: &BlockSystem, coeffs: &Coefficients) -> Result<MseParts> {
    let c = stack(coeffs.values.iter().cloned(), system.period, coeffs.values.len());
    let (data_term, coefficient_term) = match system.mode {
        Mode::Noiseless => (0.0, linalg::dot(&c, &system.padded).re),
        Mode::Noisy => {
            let dmat = system.dmat.as_ref().expect("noisy system carries D");
            let d = linalg::dot(&system.stacked, &(dmat * &system.stacked)).re;
            let b = linalg::dot(&c, &(&system.operator * &c)).re;
            (d, b)
        }
    };
    let delta = data_term + coefficient_term;
    if delta < -NEGATIVE_SLACK * (1.0 + data_term.abs() + coefficient_term.abs()) {
        return Err(Error::Consistency(format!("negative mean-square error {delta:.3e}")));
    }
    Ok(MseParts { delta: delta.max(0.0), data_term, coefficient_term })
}

/// Lags on which `h` can be nonzero for this system, up to the future band.
pub fn characteristic_lags(kc: &KernelCoefficients, gamma: &GammaIndex) -> RangeInclusive<i64> {
    let b = kc.b_bandwidth() as i64;
    let br = kc.r_bandwidth() as i64;
    let lo = gamma.indices().first().copied().unwrap_or(0).min(0) - b.max(br);
    let hi = gamma.truncation() as i64 - 1 + b;
    lo.min(-1)..=hi
}

/// Lag coefficients `h(m)` of the spectral characteristic.
pub fn spectral_characteristic(
    kc: &KernelCoefficients,
    functional: &BlockedFunctional,
    coeffs: &Coefficients,
    lags: RangeInclusive<i64>,
) -> Vec<(i64, CVec)> {
    let t = kc.period;
    let kmax = kc.kmax() as i64;
    lags.map(|m| {
        let mut h = CVec::zeros(t);
        for (j, a) in functional.lifted().iter().enumerate() {
            let k = m - j as i64;
            if k.abs() <= kmax {
                h += kc.rw(k) * a;
            }
        }
        for (n, c) in coeffs.iter() {
            let k = m - n;
            if k.abs() <= kmax {
                h -= kc.bw(k) * c;
            }
        }
        (m, h)
    })
    .collect()
}

/// `H(e^{iλ})` on the grid from the closed formula
/// `f(f+g)^{-1}ᵀ A - (f+g)^{-1}ᵀ C` (noiseless: `A - f^{-1}ᵀ C`).
pub fn characteristic_on_grid(
    fields: &KernelFields,
    functional: &BlockedFunctional,
    coeffs: &Coefficients,
) -> Vec<CVec> {
    let nodes = fields.grid.nodes();
    nodes
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let a = functional.transfer(lambda);
            let c = coeffs.transfer(lambda);
            let first = match &fields.signal_gain {
                Some(gain) => gain[j].transpose() * &a,
                None => a,
            };
            first - fields.inverse[j].transpose() * c
        })
        .collect()
}

/// Executable estimate `Σ_m w(m)ᵀ (ζ⃗(m) + θ⃗(m))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeWeights {
    /// Nonzero weights on observed blocked indices, ascending.
    pub weights: Vec<(i64, CVec)>,
    /// Largest `|h(m)|` on a missing or future lag.
    pub leakage: f64,
    /// Largest `|h(m)|` dropped below the window.
    pub beyond_window: f64,
}

/// Restrict `h` to the observed lags `-window..=-1`.
pub fn time_domain_weights(
    hcoeffs: &[(i64, CVec)],
    pattern: &MissingPattern,
    window: usize,
    leakage_limit: Option<f64>,
) -> Result<TimeWeights> {
    let scale = hcoeffs.iter().map(|(_, h)| linalg::max_abs_vec(h)).fold(0.0, f64::max);
    let mut weights = Vec::new();
    let mut leakage: f64 = 0.0;
    let mut beyond: f64 = 0.0;
    for (m, h) in hcoeffs {
        let size = linalg::max_abs_vec(h);
        if !pattern.is_observed(*m) {
            leakage = leakage.max(size);
        } else if *m < -(window as i64) {
            beyond = beyond.max(size);
        } else if size > WEIGHT_PRUNE * scale {
            weights.push((*m, h.clone()));
        }
    }
    if let Some(limit) = leakage_limit {
        if leakage > limit {
            return Err(Error::Truncation(format!(
                "spectral characteristic leaks {leakage:.3e} onto unobserved lags (limit {limit:e})"
            )));
        }
    }
    Ok(TimeWeights { weights, leakage, beyond_window: beyond })
}

fn bilinear(u: &CVec, m: &CMat) -> f64 {
    (u.transpose() * m * u.conjugate())[(0, 0)].re
}

/// `(1/2π) ∫ (A-H)ᵀ f conj(A-H) + Hᵀ g conj(H) dλ` with `H` built from the
/// given lag coefficients. `None` when `f` is not finite on the grid.
pub fn frequency_mse(fields: &KernelFields, functional: &BlockedFunctional, hcoeffs: &[(i64, CVec)]) -> Option<f64> {
    let f = fields.f_values.as_ref()?;
    let grid = &fields.grid;
    let vals: Vec<f64> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let mut hv = CVec::zeros(functional.period());
            for (m, h) in hcoeffs {
                hv += h * C64::from_polar(1.0, *m as f64 * lambda);
            }
            let u = functional.transfer(lambda) - &hv;
            let mut v = bilinear(&u, &f[j]);
            if let Some(g) = &fields.g_values {
                v += bilinear(&hv, &g[j]);
            }
            v
        })
        .collect();
    Some(grid.mean(&vals))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateOptions {
    /// Truncation `L`; `None` selects `max(4N, 32)`.
    pub truncation: Option<usize>,
    pub grid_size: usize,
    /// Fourier lag bound; `None` selects `grid_size/4 - 1`.
    pub kmax: Option<usize>,
    /// Close the semi-infinite future exactly instead of a plain finite section.
    pub tail_closure: bool,
    pub condition_limit: f64,
    pub leakage_limit: f64,
    pub execution: Execution,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            truncation: None,
            grid_size: spectral::DEFAULT_GRID_SIZE,
            kmax: None,
            tail_closure: true,
            condition_limit: DEFAULT_CONDITION_LIMIT,
            leakage_limit: DEFAULT_LEAKAGE_LIMIT,
            execution: Execution::default(),
        }
    }
}

impl EstimateOptions {
    pub fn kmax_for_grid(&self) -> usize {
        self.kmax.unwrap_or(self.grid_size / 4 - 1)
    }
}

/// Everything computed for one `(model, pattern, functional, L)` instance.
#[derive(Debug, Clone)]
pub struct SolvedInstance {
    pub fields: KernelFields,
    pub kernels: KernelCoefficients,
    pub corner: Option<FutureCorner>,
    pub system: BlockSystem,
    pub coeffs: Coefficients,
    pub mse: MseParts,
}

fn validate_instance(model: &Model, functional: &BlockedFunctional) -> Result<()> {
    if functional.period() != model.dim() {
        return Err(Error::validation(format!(
            "functional period {} does not match density dimension {}",
            functional.period(),
            model.dim()
        )));
    }
    Ok(())
}

/// Truncation actually used: at least `N`, and with a closed future also
/// past the band of the noisy right side.
pub fn effective_truncation(
    requested: usize,
    kc: &KernelCoefficients,
    functional: &BlockedFunctional,
    closure: bool,
) -> usize {
    let n = functional.horizon().max(1);
    let mut l = requested.max(n);
    if closure && kc.mode() == Mode::Noisy {
        l = l.max(n + kc.r_bandwidth());
    }
    l
}

/// Solve one instance on already-sampled kernels.
pub fn solve_on_kernels(
    fields: KernelFields,
    kernels: KernelCoefficients,
    corner: Option<FutureCorner>,
    pattern: &MissingPattern,
    functional: &BlockedFunctional,
    truncation: usize,
    condition_limit: f64,
) -> Result<SolvedInstance> {
    let gamma = GammaIndex::new(pattern, truncation)?;
    let system = assemble(&kernels, &gamma, functional, corner.as_ref())?;
    let tail_len = kernels.kmax();
    let coeffs = solve_coefficients(&system, corner.as_ref(), condition_limit, tail_len)?;
    let mse = mse(&system, &coeffs)?;
    Ok(SolvedInstance { fields, kernels, corner, system, coeffs, mse })
}

/// Sample kernels and solve, without minimality, refinement or weight checks.
pub fn solve_instance(
    model: &Model,
    pattern: &MissingPattern,
    functional: &BlockedFunctional,
    opts: &EstimateOptions,
) -> Result<SolvedInstance> {
    validate_instance(model, functional)?;
    let grid = FrequencyGrid::new(opts.grid_size)?;
    let fields = spectral::kernels_on_grid(model, &grid, opts.execution)?;
    let kernels = KernelCoefficients::from_fields(&fields, opts.kmax_for_grid())?;
    let corner = if opts.tail_closure { kernels.future_corner()? } else { None };
    let requested = opts.truncation.unwrap_or_else(|| default_truncation(functional.horizon()));
    let l = effective_truncation(requested, &kernels, functional, opts.tail_closure);
    solve_on_kernels(fields, kernels, corner, pattern, functional, l, opts.condition_limit)
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosureReport {
    pub bandwidth: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub mode: Mode,
    pub truncation: usize,
    pub effective_truncation: usize,
    pub grid_size: usize,
    pub kmax: usize,
    pub condition: f64,
    pub solve_residual: f64,
    /// Declared tail of an infinite functional dropped by truncation.
    pub functional_tail: f64,
    pub grid_residual: f64,
    pub rhs_tail: f64,
    pub delta_refined: f64,
    pub truncation_converged: bool,
    /// Largest `|h(m)|` over `m ∈ Γ_L`.
    pub orthogonality_residual: f64,
    /// Largest `|h(m)|` over all unobserved lags examined.
    pub leakage: f64,
    pub leakage_ok: bool,
    pub weights_beyond_window: f64,
    pub closure: Option<ClosureReport>,
    pub delta_frequency: Option<f64>,
    /// Max difference between lag-domain `h` and the grid closed formula.
    pub characteristic_crosscheck: Option<f64>,
    pub minimality: MinimalityReport,
    pub singular_nodes: usize,
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub delta: f64,
    pub mse: MseParts,
    /// `c(k)` for `k ∈ Γ_L`.
    pub c: Vec<(i64, CVec)>,
    /// `h(m)` over the examined lag range.
    pub hcoeffs: Vec<(i64, CVec)>,
    pub weights: TimeWeights,
    pub diagnostics: Diagnostics,
}

/// End-to-end estimate: minimality check, assembly, solve, characteristic,
/// error and time-domain weights, with a `2L` re-solve for convergence.
pub fn extrapolate_functional(
    model: &Model,
    pattern: &MissingPattern,
    functional: &BlockedFunctional,
    opts: &EstimateOptions,
) -> Result<EstimateResult> {
    validate_instance(model, functional)?;
    let minimality = spectral::minimality_check(model, opts.grid_size, opts.execution);
    if !minimality.pass {
        return Err(Error::Minimality(minimality.verdict));
    }
    let requested = opts.truncation.unwrap_or_else(|| default_truncation(functional.horizon()));
    let solved = solve_instance(model, pattern, functional, opts)?;
    let l = solved.system.gamma.truncation();

    let refined = solve_on_kernels(
        solved.fields.clone(),
        solved.kernels.clone(),
        solved.corner.clone(),
        pattern,
        functional,
        2 * l,
        opts.condition_limit,
    )?;
    let delta = solved.mse.delta;
    let delta_refined = refined.mse.delta;
    let scale = delta.abs().max(delta_refined.abs());
    let truncation_converged = (delta_refined - delta).abs() <= TRUNCATION_RTOL * scale || scale == 0.0;

    let lags = characteristic_lags(&solved.kernels, &solved.system.gamma);
    let window = (-*lags.start()) as usize;
    let hcoeffs = spectral_characteristic(&solved.kernels, functional, &solved.coeffs, lags);
    let orthogonality_residual = hcoeffs
        .iter()
        .filter(|(m, _)| solved.system.gamma.position(*m).is_some())
        .map(|(_, h)| h.norm())
        .fold(0.0, f64::max);
    let weights = time_domain_weights(&hcoeffs, pattern, window, None)?;
    let observed_h: Vec<(i64, CVec)> = weights.weights.clone();
    let delta_frequency = frequency_mse(&solved.fields, functional, &observed_h);

    let characteristic_crosscheck = if solved.coeffs.tail_decayed
        && solved.fields.singularities.as_ref().is_none_or(|s| s.singular_nodes.is_empty())
    {
        let kmax = solved.kernels.kmax();
        let values: Vec<CMat> = characteristic_on_grid(&solved.fields, functional, &solved.coeffs)
            .into_iter()
            .map(|v| CMat::from_column_slice(v.len(), 1, v.as_slice()))
            .collect();
        let set = spectral::fourier_coefficients(&values, &solved.fields.grid, kmax, CoeffRole::Generic)?;
        let diff = hcoeffs
            .iter()
            .filter(|(m, _)| m.unsigned_abs() as usize <= kmax)
            .map(|(m, h)| (set.get(*m).column(0) - h).norm())
            .fold(0.0, f64::max);
        Some(diff)
    } else {
        None
    };

    let diagnostics = Diagnostics {
        mode: solved.system.mode,
        truncation: requested,
        effective_truncation: l,
        grid_size: opts.grid_size,
        kmax: solved.kernels.kmax(),
        condition: solved.system.condition,
        solve_residual: solved.coeffs.residual,
        functional_tail: functional.truncation_tail(),
        grid_residual: solved.kernels.grid_residual(),
        rhs_tail: solved.system.rhs_tail,
        delta_refined,
        truncation_converged,
        orthogonality_residual,
        leakage: weights.leakage,
        leakage_ok: weights.leakage <= opts.leakage_limit,
        weights_beyond_window: weights.beyond_window,
        closure: solved.corner.as_ref().map(|c| ClosureReport {
            bandwidth: c.bandwidth,
            iterations: c.iterations,
            converged: c.converged,
        }),
        delta_frequency,
        characteristic_crosscheck,
        minimality,
        singular_nodes: solved.fields.singularities.as_ref().map_or(0, |s| s.singular_nodes.len()),
    };
    let c = solved.coeffs.indices.iter().copied().zip(solved.coeffs.values.iter().cloned()).collect();
    Ok(EstimateResult { delta, mse: solved.mse, c, hcoeffs, weights, diagnostics })
}

#[cfg(test)]
mod tests;
