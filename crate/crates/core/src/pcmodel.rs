//! Observation pattern, T-blocking maps and the blocked representation of the
//! target functional.
//!
//! A T-periodically correlated scalar sequence `ζ(j)` is packed into the
//! T-variate stationary sequence `[ζ⃗(n)]_p = ζ(nT + p)`, `p = 1..=T`. Blocked
//! observations live at `n ≤ -1`, except the blocked missing set
//!
//! ```text
//! S̃ = ∪_{l=1..s} { -M_l, …, -M_{l-1} - N_l - 1 },   M_l = Σ_{k≤l} (N_k + K_k)
//! ```
//!
//! so `N_l` counts the observed blocks of the l-th run (nearest to the present
//! first) and `K_l` the missing blocks that follow it into the past.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{CVec, C64, ZERO};

/// Gap structure of the observations in blocked time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissingPattern {
    observed_runs: Vec<usize>,
    missing_runs: Vec<usize>,
    offsets: Vec<i64>,
}

impl MissingPattern {
    /// Build a pattern from observed run lengths `n` and missing run lengths `k`.
    pub fn new(n: &[usize], k: &[usize]) -> Result<Self> {
        if n.len() != k.len() {
            return Err(Error::validation(format!(
                "observed and missing run lists differ in length ({} vs {})",
                n.len(),
                k.len()
            )));
        }
        if let Some(pos) = n.iter().chain(k).position(|&v| v == 0) {
            return Err(Error::validation(format!("run length at position {pos} is not positive")));
        }
        let mut offsets = Vec::with_capacity(n.len() + 1);
        offsets.push(0i64);
        let mut acc = 0i64;
        for (&nl, &kl) in n.iter().zip(k) {
            acc += (nl + kl) as i64;
            offsets.push(acc);
        }
        Ok(Self { observed_runs: n.to_vec(), missing_runs: k.to_vec(), offsets })
    }

    /// No gaps: every blocked index `≤ -1` is observed.
    pub fn empty() -> Self {
        Self { observed_runs: Vec::new(), missing_runs: Vec::new(), offsets: vec![0] }
    }

    pub fn gap_count(&self) -> usize {
        self.observed_runs.len()
    }

    pub fn observed_runs(&self) -> &[usize] {
        &self.observed_runs
    }

    pub fn missing_runs(&self) -> &[usize] {
        &self.missing_runs
    }

    /// `M_0 = 0, M_1, …, M_s`.
    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    /// `M_s`: beyond `-M_s` everything is observed.
    pub fn span(&self) -> i64 {
        *self.offsets.last().unwrap()
    }

    pub fn total_missing(&self) -> usize {
        self.missing_runs.iter().sum()
    }

    /// `S̃` in ascending order.
    pub fn blocked_missing_set(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.total_missing());
        for l in (1..=self.gap_count()).rev() {
            let lo = -self.offsets[l];
            let hi = -self.offsets[l - 1] - self.observed_runs[l - 1] as i64 - 1;
            out.extend(lo..=hi);
        }
        out
    }

    pub fn is_blocked_missing(&self, idx: i64) -> bool {
        (1..=self.gap_count()).any(|l| {
            let lo = -self.offsets[l];
            let hi = -self.offsets[l - 1] - self.observed_runs[l - 1] as i64 - 1;
            (lo..=hi).contains(&idx)
        })
    }

    /// Blocked index carries an observation.
    pub fn is_observed(&self, idx: i64) -> bool {
        idx <= -1 && !self.is_blocked_missing(idx)
    }

    /// Observed blocked indices in `[-window, -1]`, ascending.
    pub fn observed_in_window(&self, window: usize) -> Vec<i64> {
        (-(window as i64)..=-1).filter(|&i| self.is_observed(i)).collect()
    }

    /// Univariate missing set `S` for period `t`, ascending.
    pub fn univariate_missing_set(&self, t: usize) -> Result<Vec<i64>> {
        if t == 0 {
            return Err(Error::validation("period must be positive"));
        }
        let t = t as i64;
        let mut out = Vec::with_capacity(self.total_missing() * t as usize);
        for l in (1..=self.gap_count()).rev() {
            let lo = -self.offsets[l] * t + 1;
            let hi = -self.offsets[l - 1] * t - self.observed_runs[l - 1] as i64 * t;
            out.extend(lo..=hi);
        }
        Ok(out)
    }

    /// Mark one more blocked index missing: the observed block just older than
    /// gap `l` (1-based). The observation set of the result is a strict subset
    /// of this one.
    pub fn with_extra_missing(&self, l: usize) -> Result<Self> {
        let s = self.gap_count();
        if l == 0 || l > s {
            return Err(Error::validation(format!("gap index {l} out of range 1..={s}")));
        }
        let mut n = self.observed_runs.clone();
        let mut k = self.missing_runs.clone();
        k[l - 1] += 1;
        if l < s {
            if n[l] > 1 {
                n[l] -= 1;
            } else {
                // the next observed run vanishes: merge the two gaps
                let merged = k[l - 1] + k[l];
                k[l - 1] = merged;
                n.remove(l);
                k.remove(l);
            }
        }
        Self::new(&n, &k)
    }
}

/// Blocked index and 1-based phase of univariate time `j`: `j = nT + p`.
pub fn block_position(j: i64, t: usize) -> (i64, usize) {
    let t = t as i64;
    let n = (j - 1).div_euclid(t);
    (n, (j - n * t) as usize)
}

/// Univariate time of phase `p` (1-based) in block `n`.
pub fn univariate_time(n: i64, p: usize, t: usize) -> i64 {
    n * t as i64 + p as i64
}

/// Target functional `Σ_ĵ ā(ĵ)ᵀ ζ⃗(ĵ)` with `a_ν(ĵ) = a(ĵ) e^{2πi ĵ ν / T}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedFunctional {
    period: usize,
    base: Vec<C64>,
    lifted: Vec<CVec>,
    tail: f64,
}

/// Default tolerance on `Σ_{ĵ≥N} |a(ĵ)|` when truncating an infinite functional.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-10;

/// Largest horizon scanned when truncating an infinite functional.
pub const MAX_HORIZON: usize = 1 << 16;

impl BlockedFunctional {
    /// Lift a finite base sequence `a(0), …, a(N-1)`.
    pub fn new(base: &[C64], period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::validation("period must be positive"));
        }
        if base.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::validation("functional coefficients must be finite"));
        }
        let lifted = base.iter().enumerate().map(|(j, &a)| lift(a, j, period)).collect();
        Ok(Self { period, base: base.to_vec(), lifted, tail: 0.0 })
    }

    /// Truncate an infinite functional at the smallest horizon `N` whose
    /// declared tail bound `Σ_{ĵ≥N} |a(ĵ)|` drops below `tol`.
    pub fn from_infinite(
        coeff: impl Fn(usize) -> C64,
        tail_bound: impl Fn(usize) -> f64,
        period: usize,
        tol: f64,
    ) -> Result<Self> {
        let horizon = (1..=MAX_HORIZON).find(|&n| tail_bound(n) < tol).ok_or_else(|| {
            Error::validation(format!("coefficients not summable to tolerance {tol:e} within horizon {MAX_HORIZON}"))
        })?;
        let base: Vec<C64> = (0..horizon).map(coeff).collect();
        let mut out = Self::new(&base, period)?;
        out.tail = tail_bound(horizon);
        Ok(out)
    }

    pub fn period(&self) -> usize {
        self.period
    }

    /// Number of blocked coefficients `N`.
    pub fn horizon(&self) -> usize {
        self.base.len()
    }

    pub fn base(&self) -> &[C64] {
        &self.base
    }

    pub fn lifted(&self) -> &[CVec] {
        &self.lifted
    }

    /// `ā(ĵ)`, zero outside the horizon.
    pub fn lifted_at(&self, j: i64) -> CVec {
        if j >= 0 && (j as usize) < self.lifted.len() {
            self.lifted[j as usize].clone()
        } else {
            CVec::zeros(self.period)
        }
    }

    /// Declared tail `Σ_{ĵ≥N} |a(ĵ)|` dropped by truncation.
    pub fn truncation_tail(&self) -> f64 {
        self.tail
    }

    pub fn is_zero(&self) -> bool {
        self.base.iter().all(|a| *a == ZERO)
    }

    /// `Σ_ĵ ‖ā(ĵ)‖²`.
    pub fn lifted_norm_sq(&self) -> f64 {
        self.lifted.iter().map(|v| v.norm_squared()).sum()
    }

    /// Univariate coefficient `a(j)` for `j ≥ 1`.
    pub fn univariate_coefficient(&self, j: i64) -> C64 {
        if j < 1 {
            return ZERO;
        }
        let (n, p) = block_position(j, self.period);
        if (n as usize) < self.lifted.len() {
            self.lifted[n as usize][p - 1]
        } else {
            ZERO
        }
    }

    /// `A(e^{iλ}) = Σ_ĵ ā(ĵ) e^{iĵλ}`.
    pub fn transfer(&self, lambda: f64) -> CVec {
        let mut out = CVec::zeros(self.period);
        for (j, a) in self.lifted.iter().enumerate() {
            out += a * C64::from_polar(1.0, j as f64 * lambda);
        }
        out
    }
}

fn lift(a: C64, j: usize, period: usize) -> CVec {
    CVec::from_iterator(
        period,
        (1..=period).map(|nu| {
            // reduce the exponent mod T first so that large ĵ keep full precision
            let k = (j * nu) % period;
            a * C64::from_polar(1.0, 2.0 * PI * k as f64 / period as f64)
        }),
    )
}

/// Canonical index set `Γ_L = S̃ ∪ {0, …, L-1}` in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GammaIndex {
    truncation: usize,
    indices: Vec<i64>,
}

impl GammaIndex {
    pub fn new(pattern: &MissingPattern, truncation: usize) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::validation("truncation L must be at least 1"));
        }
        let mut indices = pattern.blocked_missing_set();
        indices.extend(0..truncation as i64);
        Ok(Self { truncation, indices })
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Block position of index `k` (each block spans T scalar rows).
    pub fn position(&self, k: i64) -> Option<usize> {
        self.indices.binary_search(&k).ok()
    }

    /// Largest `|k - j|` over pairs of indices.
    pub fn spread(&self) -> usize {
        match (self.indices.first(), self.indices.last()) {
            (Some(a), Some(b)) => (b - a) as usize,
            _ => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn single_gap_pattern() {
        let p = MissingPattern::new(&[1], &[1]).unwrap();
        assert_eq!(p.offsets(), &[0, 2]);
        assert_eq!(p.blocked_missing_set(), vec![-2]);
        assert_eq!(p.univariate_missing_set(2).unwrap(), vec![-3, -2]);
    }

    #[test]
    fn empty_pattern() {
        let p = MissingPattern::new(&[], &[]).unwrap();
        assert!(p.blocked_missing_set().is_empty());
        assert!(p.univariate_missing_set(4).unwrap().is_empty());
        assert_eq!(p, MissingPattern::empty());
    }

    #[test]
    fn two_gap_pattern() {
        let p = MissingPattern::new(&[2, 1], &[1, 2]).unwrap();
        assert_eq!(p.offsets(), &[0, 3, 6]);
        assert_eq!(p.blocked_missing_set(), vec![-6, -5, -3]);
        assert_eq!(p.univariate_missing_set(2).unwrap(), vec![-11, -10, -9, -8, -5, -4]);
        // walk left from -1: 2 observed, 1 missing, 1 observed, 2 missing
        let walk: Vec<bool> = (1..=7).map(|d| p.is_observed(-d)).collect();
        assert_eq!(walk, vec![true, true, false, true, false, false, true]);
    }

    #[test]
    fn rejects_bad_runs() {
        assert!(MissingPattern::new(&[1, 0], &[1, 1]).is_err());
        assert!(MissingPattern::new(&[1], &[0]).is_err());
        assert!(MissingPattern::new(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn extra_missing_shrinks_observation_set() {
        let p = MissingPattern::new(&[1, 1], &[1, 1]).unwrap();
        let q = p.with_extra_missing(1).unwrap();
        // next observed run had length 1 so the two gaps merge
        assert_eq!(q.blocked_missing_set(), vec![-4, -3, -2]);
        let r = p.with_extra_missing(2).unwrap();
        assert_eq!(r.blocked_missing_set(), vec![-5, -4, -2]);
        for i in -20..0 {
            if q.is_observed(i) {
                assert!(p.is_observed(i));
            }
            if r.is_observed(i) {
                assert!(p.is_observed(i));
            }
        }
    }

    #[test]
    fn lift_examples() {
        let f = BlockedFunctional::new(&[c(1.0, 0.0)], 2).unwrap();
        assert_eq!(f.lifted()[0].as_slice(), &[c(1.0, 0.0), c(1.0, 0.0)]);

        let f = BlockedFunctional::new(&[c(0.0, 0.0), c(1.0, 0.0)], 2).unwrap();
        assert_eq!(f.lifted()[0].as_slice(), &[c(0.0, 0.0), c(0.0, 0.0)]);
        assert!((f.lifted()[1][0] - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((f.lifted()[1][1] - c(1.0, 0.0)).norm() < 1e-15);

        let z = c(2.0, 1.0);
        let f = BlockedFunctional::new(&[z], 3).unwrap();
        assert!(f.lifted()[0].iter().all(|&v| v == z));
    }

    #[test]
    fn infinite_functional_truncates_at_tail() {
        // a(ĵ) = 0.5^ĵ, tail Σ_{ĵ≥N} 0.5^ĵ = 2·0.5^N
        let f = BlockedFunctional::from_infinite(
            |j| c(0.5f64.powi(j as i32), 0.0),
            |n| 2.0 * 0.5f64.powi(n as i32),
            2,
            1e-10,
        )
        .unwrap();
        assert_eq!(f.horizon(), 35);
        assert!(f.truncation_tail() < 1e-10);

        let err = BlockedFunctional::from_infinite(|_| c(1.0, 0.0), |_| f64::INFINITY, 2, 1e-10);
        assert!(err.is_err());
    }

    #[test]
    fn gamma_examples() {
        let p = MissingPattern::new(&[1], &[1]).unwrap();
        assert_eq!(GammaIndex::new(&p, 3).unwrap().indices(), &[-2, 0, 1, 2]);
        assert_eq!(GammaIndex::new(&MissingPattern::empty(), 2).unwrap().indices(), &[0, 1]);
        let p = MissingPattern::new(&[2, 1], &[1, 2]).unwrap();
        let g = GammaIndex::new(&p, 1).unwrap();
        assert_eq!(g.indices(), &[-6, -5, -3, 0]);
        assert_eq!(g.position(-3), Some(2));
        assert_eq!(g.position(-4), None);
        assert!(GammaIndex::new(&p, 0).is_err());
    }

    fn pattern_strategy() -> impl Strategy<Value = MissingPattern> {
        (0usize..=4)
            .prop_flat_map(|s| (prop::collection::vec(1usize..=5, s), prop::collection::vec(1usize..=5, s)))
            .prop_map(|(n, k)| MissingPattern::new(&n, &k).unwrap())
    }

    proptest! {
        #[test]
        fn reblocking_reproduces_blocked_set(p in pattern_strategy(), t in 1usize..=6) {
            let s = p.univariate_missing_set(t).unwrap();
            prop_assert_eq!(s.len(), t * p.total_missing());
            let mut reblocked: Vec<i64> = s.iter().map(|&j| block_position(j, t).0).collect();
            reblocked.dedup();
            prop_assert_eq!(&reblocked, &p.blocked_missing_set());
            // block-consistency both ways over the relevant range
            for j in (-(p.span() + 2) * t as i64)..=0 {
                let (n, _) = block_position(j, t);
                prop_assert_eq!(s.contains(&j), p.is_blocked_missing(n));
            }
        }

        #[test]
        fn missing_set_structure(p in pattern_strategy()) {
            let set = p.blocked_missing_set();
            prop_assert_eq!(set.len(), p.total_missing());
            prop_assert!(set.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(set.iter().all(|&i| i <= -2 && i >= -p.span()));
            for i in (-p.span() - 5)..=-1 {
                prop_assert_ne!(p.is_observed(i), set.contains(&i));
            }
        }

        #[test]
        fn functional_identity(
            t in 1usize..=5,
            base in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..6),
            path in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 30),
        ) {
            let base: Vec<C64> = base.into_iter().map(|(r, i)| c(r, i)).collect();
            let f = BlockedFunctional::new(&base, t).unwrap();
            let n = base.len();
            let zeta = |j: i64| { let (r, i) = path[(j as usize) % path.len()]; c(r, i) };
            // Σ_j a(j) ζ(j) over univariate times j = 1..=N·T
            let direct: C64 = (1..=(n * t) as i64).map(|j| f.univariate_coefficient(j) * zeta(j)).sum();
            let blocked: C64 = (0..n).map(|jb| {
                (1..=t).map(|p| f.lifted()[jb][p - 1] * zeta(univariate_time(jb as i64, p, t))).sum::<C64>()
            }).sum();
            prop_assert!((direct - blocked).norm() < 1e-12);
            for (jb, v) in f.lifted().iter().enumerate() {
                prop_assert!((v.norm_squared() - t as f64 * base[jb].norm_sqr()).abs() < 1e-12);
            }
        }
    }
}
