//! Exact treatment of the semi-infinite future block `{L, L+1, …}`.
//!
//! The operator restricted to future indices is block Toeplitz with blocks
//! `Bw(p-q)`. Grouping `b` consecutive indices (`b` = bandwidth of the
//! coefficients) turns it into a block tridiagonal Toeplitz operator with
//! diagonal `A0` and off-diagonals `A1`, `A1*`. The top-left block `X` of its
//! inverse solves `X = (A0 - A1 X A1*)^{-1}` and is found by cyclic reduction.
//! Eliminating the future then replaces the finite section `B_LL` by the
//! Schur complement `B_LL - E X E*`, which gives the same `c` on `Γ_L` as the
//! infinite system.

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Stop once the cyclic-reduction update is below this fraction of the corner.
const REDUCTION_TOL: f64 = 1e-15;
const MAX_REDUCTIONS: usize = 128;

/// Inverse corner of the semi-infinite future operator.
#[derive(Debug, Clone)]
pub struct FutureCorner {
    pub bandwidth: usize,
    /// Top-left `bT×bT` block of the inverse of the future operator.
    pub x: CMat,
    /// Super-diagonal superblock `A1`.
    pub a1: CMat,
    pub iterations: usize,
    pub converged: bool,
}

impl FutureCorner {
    /// Build from the transposed kernel coefficients `bw(k)` for `|k| ≤ b`.
    pub fn new(bw: impl Fn(i64) -> CMat, t: usize, bandwidth: usize) -> Result<Self> {
        let b = bandwidth;
        let m = b * t;
        let mut a0 = CMat::zeros(m, m);
        let mut a1 = CMat::zeros(m, m);
        for p in 0..b {
            for q in 0..b {
                let d = p as i64 - q as i64;
                linalg::set_block(&mut a0, p, q, &bw(d));
                linalg::set_block(&mut a1, p, q, &bw(d - b as i64));
            }
        }
        let (x_inv, iterations, converged) = semi_infinite_corner(&a0, &a1)?;
        let x = linalg::inverse(&linalg::hermitian_part(&x_inv))
            .map(|x| linalg::hermitian_part(&x))
            .ok_or_else(|| Error::Consistency("future corner of the operator is singular".into()))?;
        Ok(Self { bandwidth, x, a1, iterations, converged })
    }

    /// Future coefficients, superblock by superblock, given `v = E* c_L`.
    pub fn propagate(&self, v: &CMat, superblocks: usize) -> Vec<CMat> {
        let mut out = Vec::with_capacity(superblocks);
        if superblocks == 0 {
            return out;
        }
        let mut cur = -linalg::matmul(&self.x, v);
        let step = -linalg::matmul(&self.x, &self.a1.adjoint());
        for _ in 1..superblocks {
            let next = linalg::matmul(&step, &cur);
            out.push(cur);
            cur = next;
        }
        out.push(cur);
        out
    }
}

/// Schur complement `X^{-1}` of the first superblock of the semi-infinite
/// block tridiagonal operator `tridiag(A1*, A0, A1)`, by cyclic reduction.
fn semi_infinite_corner(a0: &CMat, a1: &CMat) -> Result<(CMat, usize, bool)> {
    let mut corner = a0.clone();
    let mut diag = a0.clone();
    let mut up = a1.clone();
    let mut low = a1.adjoint();
    for it in 1..=MAX_REDUCTIONS {
        let inv = linalg::inverse(&diag)
            .ok_or_else(|| Error::Consistency("cyclic reduction hit a singular diagonal block".into()))?;
        let ui = linalg::matmul(&up, &inv);
        let li = linalg::matmul(&low, &inv);
        let uil = linalg::matmul(&ui, &low);
        let liu = linalg::matmul(&li, &up);
        corner -= &uil;
        diag -= &uil + &liu;
        up = -linalg::matmul(&ui, &up);
        low = -linalg::matmul(&li, &low);
        if uil.norm() <= REDUCTION_TOL * corner.norm() {
            return Ok((corner, it, true));
        }
    }
    Ok((corner, MAX_REDUCTIONS, false))
}
