//! Reference models and random instance generators shared by tests,
//! benchmarks and bundled configurations.

use rand::Rng;

use crate::linalg::{self, CMat, C64};
use crate::pcmodel::{BlockedFunctional, MissingPattern};
use crate::spectral::{DensityKind, DensitySpec, Model};

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn diag(values: &[f64]) -> CMat {
    CMat::from_diagonal(&nalgebra::DVector::from_iterator(values.len(), values.iter().map(|&v| re(v))))
}

/// Two-channel model given through `f^{-1} = diag(1, |1 - q e^{iλ}|²)`.
///
/// `q = 1` is the long-memory model whose second channel has infinite
/// variance; `q < 1` gives a finite-variance autoregressive channel.
pub fn channel_pair_inverse(q: f64) -> DensitySpec {
    DensitySpec::new(
        DensityKind::InverseDensity,
        vec![diag(&[1.0, 1.0 + q * q]), diag(&[0.0, -q])],
        format!("diag(1, |1 - {q} e^(i l)|^2) inverse"),
    )
    .expect("valid spec")
}

/// `f^{-1}` with `B(0) = diag(1, 2)`, `B(±1) = diag(0, -1)`.
pub fn long_memory_inverse() -> DensitySpec {
    channel_pair_inverse(1.0)
}

/// Pattern with one observed block followed by one missing block.
pub fn single_gap() -> MissingPattern {
    MissingPattern::new(&[1], &[1]).expect("valid pattern")
}

/// Functional `ζ(1) + ζ(2)`, i.e. base `[1]` at period 2.
pub fn first_block_sum() -> BlockedFunctional {
    BlockedFunctional::new(&[re(1.0)], 2).expect("valid functional")
}

/// Scalar inverse `|1 - q e^{iλ}|²`, i.e. an AR(1) density.
pub fn ar1_inverse(q: f64) -> DensitySpec {
    DensitySpec::new(
        DensityKind::InverseDensity,
        vec![CMat::from_element(1, 1, re(1.0 + q * q)), CMat::from_element(1, 1, re(-q))],
        format!("|1 - {q} e^(i l)|^2 inverse"),
    )
    .expect("valid spec")
}

/// `(2 - 2cos λ) I`, a density violating the minimality condition.
pub fn vanishing_density(t: usize) -> DensitySpec {
    DensitySpec::new(
        DensityKind::Density,
        vec![linalg::identity(t).scale(2.0), linalg::identity(t).scale(-1.0)],
        "(2 - 2cos l) I",
    )
    .expect("valid spec")
}

fn random_complex<R: Rng>(rng: &mut R, scale: f64) -> C64 {
    C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
}

/// Random density `W(λ) W(λ)* + floor·I` with `W` a matrix polynomial of
/// degree `degree`; exact trigonometric polynomial of the same degree.
pub fn random_density<R: Rng>(rng: &mut R, t: usize, degree: usize, floor: f64) -> DensitySpec {
    let w: Vec<CMat> = (0..=degree).map(|_| CMat::from_fn(t, t, |_, _| random_complex(rng, 1.0))).collect();
    let coeffs = (0..=degree)
        .map(|m| {
            let mut c = CMat::zeros(t, t);
            for k in 0..=degree - m {
                c += &w[k + m] * w[k].adjoint();
            }
            if m == 0 {
                c += linalg::identity(t).scale(floor);
            }
            c
        })
        .collect();
    DensitySpec::new(DensityKind::Density, coeffs, "random").expect("valid spec")
}

/// Random pattern with up to `max_gaps` gaps and runs of length `1..=max_run`.
pub fn random_pattern<R: Rng>(rng: &mut R, max_gaps: usize, max_run: usize) -> MissingPattern {
    let s = rng.random_range(0..=max_gaps);
    let n: Vec<usize> = (0..s).map(|_| rng.random_range(1..=max_run)).collect();
    let k: Vec<usize> = (0..s).map(|_| rng.random_range(1..=max_run)).collect();
    MissingPattern::new(&n, &k).expect("valid pattern")
}

/// Random functional with `1..=max_horizon` complex base coefficients.
pub fn random_functional<R: Rng>(rng: &mut R, t: usize, max_horizon: usize) -> BlockedFunctional {
    let n = rng.random_range(1..=max_horizon);
    let base: Vec<C64> = (0..n).map(|_| random_complex(rng, 1.0)).collect();
    BlockedFunctional::new(&base, t).expect("valid functional")
}

/// Random finite-variance model, noisy with probability one half.
pub fn random_model<R: Rng>(rng: &mut R, t: usize, max_degree: usize) -> Model {
    let df = rng.random_range(0..=max_degree);
    let floor = rng.random_range(0.2..1.0);
    let f = random_density(rng, t, df, floor);
    let g = if rng.random_bool(0.5) {
        let dg = rng.random_range(0..=max_degree);
        let floor = rng.random_range(0.1..0.5);
        Some(random_density(rng, t, dg, floor))
    } else {
        None
    };
    Model::new(f, g).expect("matching dimensions")
}
