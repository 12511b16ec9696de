use super::*;
use crate::fixtures;
use crate::spectral::{DensityKind, DensitySpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn vec2(a: f64, b: f64) -> CVec {
    CVec::from_vec(vec![re(a), re(b)])
}

fn long_memory() -> Model {
    Model::noiseless(fixtures::long_memory_inverse())
}

fn with_closure(closure: bool, l: Option<usize>) -> EstimateOptions {
    EstimateOptions { truncation: l, tail_closure: closure, ..Default::default() }
}

#[test]
fn long_memory_example_reproduced() {
    let res = extrapolate_functional(
        &long_memory(),
        &fixtures::single_gap(),
        &fixtures::first_block_sum(),
        &with_closure(true, Some(8)),
    )
    .unwrap();
    assert!((res.delta - 2.0).abs() < 1e-8, "delta {}", res.delta);
    let c: std::collections::BTreeMap<i64, CVec> = res.c.iter().cloned().collect();
    assert!(c[&-2].norm() < 1e-10);
    assert!((&c[&0] - vec2(1.0, 1.0)).norm() < 1e-10);
    for i in 1..8 {
        assert!((&c[&i] - vec2(0.0, 1.0)).norm() < 1e-10, "c({i}) = {}", c[&i]);
    }
    // h(e^{iλ}) = (0, 1)ᵀ e^{-iλ}
    for (m, h) in &res.hcoeffs {
        let expect = if *m == -1 { vec2(0.0, 1.0) } else { vec2(0.0, 0.0) };
        assert!((h - expect).norm() < 1e-10, "h({m}) = {h}");
    }
    assert_eq!(res.weights.weights.len(), 1);
    assert_eq!(res.weights.weights[0].0, -1);
    assert!((&res.weights.weights[0].1 - vec2(0.0, 1.0)).norm() < 1e-10);
    assert!(res.weights.leakage < 1e-8);
    let d = &res.diagnostics;
    assert!(d.truncation_converged);
    assert!(d.orthogonality_residual < 1e-10);
    assert!((d.delta_frequency.unwrap() - 2.0).abs() < 1e-8);
    assert!(d.closure.as_ref().unwrap().converged);
}

#[test]
fn long_memory_finite_section_converges_slowly() {
    // without the closed future the plain finite section gives 1 + L/(L+1)
    let mut prev = 0.0;
    for l in [1usize, 2, 4, 8, 16] {
        let solved = solve_instance(
            &long_memory(),
            &fixtures::single_gap(),
            &fixtures::first_block_sum(),
            &with_closure(false, Some(l)),
        )
        .unwrap();
        let expect = 1.0 + l as f64 / (l as f64 + 1.0);
        assert!((solved.mse.delta - expect).abs() < 1e-10, "L={l}: {}", solved.mse.delta);
        assert!(solved.mse.delta >= prev);
        prev = solved.mse.delta;
    }
}

#[test]
fn assembly_blocks_of_long_memory_example() {
    let solved = solve_instance(
        &long_memory(),
        &fixtures::single_gap(),
        &fixtures::first_block_sum(),
        &with_closure(false, Some(3)),
    )
    .unwrap();
    let sys = &solved.system;
    assert_eq!(sys.gamma.indices(), &[-2, 0, 1, 2]);
    let diag = |a: f64, b: f64| CMat::from_diagonal(&vec2(a, b));
    assert!((linalg::block(&sys.bmat, 0, 0, 2) - diag(1.0, 2.0)).norm() < 1e-13);
    assert!(linalg::block(&sys.bmat, 0, 1, 2).norm() < 1e-13);
    assert!((linalg::block(&sys.bmat, 1, 2, 2) - diag(0.0, -1.0)).norm() < 1e-13);
    assert!((&sys.bmat - sys.bmat.adjoint()).norm() < 1e-12);
}

#[test]
fn white_noise_closed_form() {
    let pattern = MissingPattern::new(&[1, 2], &[2, 1]).unwrap();
    let base = [C64::new(1.0, 0.5), C64::new(-0.3, 0.0), C64::new(0.0, 2.0)];
    let func = BlockedFunctional::new(&base, 3).unwrap();
    let model = Model::noiseless(DensitySpec::identity(3));
    let res = extrapolate_functional(&model, &pattern, &func, &EstimateOptions::default()).unwrap();
    let expect: f64 = 3.0 * base.iter().map(|a| a.norm_sqr()).sum::<f64>();
    assert!((res.delta - expect).abs() < 1e-10);
    assert!(res.hcoeffs.iter().all(|(_, h)| h.norm() < 1e-12));
    assert!(res.weights.weights.is_empty());
    for (k, c) in &res.c {
        assert!((c - func.lifted_at(*k)).norm() < 1e-12, "c({k})");
    }
    let solved =
        solve_instance(&model, &pattern, &func, &EstimateOptions { truncation: Some(4), ..Default::default() })
            .unwrap();
    assert!((&solved.system.bmat - linalg::identity(solved.system.bmat.nrows())).norm() < 1e-13);
}

#[test]
fn zero_functional_gives_zero() {
    let func = BlockedFunctional::new(&[C64::new(0.0, 0.0); 3], 2).unwrap();
    let res =
        extrapolate_functional(&long_memory(), &fixtures::single_gap(), &func, &EstimateOptions::default()).unwrap();
    assert_eq!(res.delta, 0.0);
    assert!(res.c.iter().all(|(_, c)| c.norm() == 0.0));
    assert!(res.hcoeffs.iter().all(|(_, h)| h.norm() == 0.0));
    assert!(res.weights.weights.is_empty());
}

#[test]
fn white_signal_white_noise() {
    let model = Model::new(DensitySpec::identity(2), Some(DensitySpec::identity(2))).unwrap();
    let res = extrapolate_functional(
        &model,
        &fixtures::single_gap(),
        &fixtures::first_block_sum(),
        &EstimateOptions::default(),
    )
    .unwrap();
    assert!((res.delta - 2.0).abs() < 1e-10);
    assert!(res.weights.weights.is_empty());
}

#[test]
fn noisy_path_with_zero_noise_matches_noiseless() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let f = fixtures::random_density(&mut rng, 2, 2, 0.5);
        let zero = DensitySpec::new(DensityKind::Density, vec![CMat::zeros(2, 2)], "").unwrap();
        let pattern = fixtures::random_pattern(&mut rng, 2, 2);
        let func = fixtures::random_functional(&mut rng, 2, 3);
        let opts = EstimateOptions::default();
        let a = solve_instance(&Model::noiseless(f.clone()), &pattern, &func, &opts).unwrap();
        let b = solve_instance(&Model::new(f, Some(zero)).unwrap(), &pattern, &func, &opts).unwrap();
        assert!((a.mse.delta - b.mse.delta).abs() < 1e-8 * a.mse.delta.max(1.0));
    }
}

#[test]
fn closed_future_matches_long_finite_section() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let model = fixtures::random_model(&mut rng, 2, 2);
        let pattern = fixtures::random_pattern(&mut rng, 2, 2);
        let func = fixtures::random_functional(&mut rng, 2, 3);
        let closed = solve_instance(&model, &pattern, &func, &with_closure(true, Some(8))).unwrap();
        let long = solve_instance(&model, &pattern, &func, &with_closure(false, Some(200))).unwrap();
        let d = closed.mse.delta;
        assert!((d - long.mse.delta).abs() < 1e-9 * d.max(1.0), "{d} vs {}", long.mse.delta);
    }
}

#[test]
fn permutation_of_gamma_leaves_solution_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = fixtures::random_model(&mut rng, 2, 2);
    let pattern = MissingPattern::new(&[1, 1], &[2, 1]).unwrap();
    let func = fixtures::random_functional(&mut rng, 2, 2);
    let solved = solve_instance(&model, &pattern, &func, &with_closure(true, Some(6))).unwrap();
    let sys = &solved.system;
    let g = sys.gamma.len();
    let t = 2;
    // reverse-interleaved block order
    let order: Vec<usize> = (0..g).rev().collect();
    let mut p = CMat::zeros(g * t, g * t);
    for (new, &old) in order.iter().enumerate() {
        for i in 0..t {
            p[(new * t + i, old * t + i)] = re(1.0);
        }
    }
    let op = &p * &sys.operator * p.transpose();
    let rhs = CMat::from_column_slice(g * t, 1, (&p * &sys.rhs).as_slice());
    let sol = linalg::cholesky_solve(&op, &rhs).unwrap();
    let back = p.transpose() * sol;
    for i in 0..g {
        let c = back.view((i * t, 0), (t, 1));
        assert!((c.column(0).into_owned() - &solved.coeffs.values[i]).norm() < 1e-10);
    }
}

#[test]
fn both_error_formulas_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..6 {
        let t = rng.random_range(1..=3);
        let model = fixtures::random_model(&mut rng, t, 3);
        let pattern = fixtures::random_pattern(&mut rng, 2, 3);
        let func = fixtures::random_functional(&mut rng, t, 3);
        let res = extrapolate_functional(&model, &pattern, &func, &EstimateOptions::default()).unwrap();
        let freq = res.diagnostics.delta_frequency.unwrap();
        assert!((freq - res.delta).abs() < 1e-8 * res.delta.max(1.0), "{freq} vs {}", res.delta);
        assert!(res.diagnostics.orthogonality_residual < 1e-6);
        assert!(res.diagnostics.characteristic_crosscheck.unwrap() < 1e-8);
        assert!(res.diagnostics.truncation_converged);
        assert!(res.diagnostics.leakage < 1e-8);
    }
}

#[test]
fn refinement_stability_of_kernel_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for degree in [1usize, 4, 8] {
        let f = fixtures::random_density(&mut rng, 2, degree, 0.5);
        let g = fixtures::random_density(&mut rng, 2, degree, 0.5);
        let model = Model::new(f, Some(g)).unwrap();
        let coarse = FrequencyGrid::new(1024).unwrap();
        let kc1 = KernelCoefficients::from_fields(
            &spectral::kernels_on_grid(&model, &coarse, Execution::Parallel).unwrap(),
            64,
        )
        .unwrap();
        let kc2 = KernelCoefficients::from_fields(
            &spectral::kernels_on_grid(&model, &coarse.refined(), Execution::Parallel).unwrap(),
            64,
        )
        .unwrap();
        for k in -64i64..=64 {
            assert!((kc1.bw(k) - kc2.bw(k)).norm() < 1e-8);
            assert!((kc1.rw(k) - kc2.rw(k)).norm() < 1e-8);
            assert!((kc1.dw(k) - kc2.dw(k)).norm() < 1e-8);
        }
    }
}

#[test]
fn minimality_failure_is_an_error() {
    let model = Model::noiseless(fixtures::vanishing_density(2));
    let err = extrapolate_functional(
        &model,
        &fixtures::single_gap(),
        &fixtures::first_block_sum(),
        &EstimateOptions::default(),
    );
    assert!(matches!(err, Err(Error::Minimality(_))), "{err:?}");
}

#[test]
fn ill_conditioning_is_an_error() {
    let model = Model::noiseless(fixtures::random_density(&mut ChaCha8Rng::seed_from_u64(1), 2, 1, 0.5));
    let opts = EstimateOptions { condition_limit: 1.0, ..Default::default() };
    let err = extrapolate_functional(&model, &fixtures::single_gap(), &fixtures::first_block_sum(), &opts);
    assert!(matches!(err, Err(Error::IllConditioned { .. })), "{err:?}");
}

#[test]
fn leakage_flagged_for_tiny_finite_section() {
    let res = extrapolate_functional(
        &long_memory(),
        &fixtures::single_gap(),
        &fixtures::first_block_sum(),
        &with_closure(false, Some(1)),
    )
    .unwrap();
    assert!(!res.diagnostics.truncation_converged);
    assert!(res.diagnostics.leakage > 1e-3);
    assert!(!res.diagnostics.leakage_ok);
    let strict = time_domain_weights(&res.hcoeffs, &fixtures::single_gap(), 64, Some(1e-6));
    assert!(matches!(strict, Err(Error::Truncation(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn more_information_never_hurts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rng.random_range(1..=2);
        let model = fixtures::random_model(&mut rng, t, 2);
        let pattern = fixtures::random_pattern(&mut rng, 2, 2);
        let func = fixtures::random_functional(&mut rng, t, 2);
        let opts = EstimateOptions::default();
        let base = solve_instance(&model, &pattern, &func, &opts).unwrap().mse.delta;
        for l in 1..=pattern.gap_count() {
            let wider = pattern.with_extra_missing(l).unwrap();
            let d = solve_instance(&model, &wider, &func, &opts).unwrap().mse.delta;
            prop_assert!(d >= base - 1e-10 * base.max(1.0), "gap {l}: {d} < {base}");
        }
        let extra = DensitySpec::scaled_identity(t, 0.1);
        let g = match &model.g { Some(g) => g.plus(&extra).unwrap(), None => extra };
        let noisier = Model::new(model.f.clone(), Some(g)).unwrap();
        let d = solve_instance(&noisier, &pattern, &func, &opts).unwrap().mse.delta;
        prop_assert!(d >= base - 1e-10 * base.max(1.0));
    }
}
