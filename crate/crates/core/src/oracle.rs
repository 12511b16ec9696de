//! Time-domain verification: projection by normal equations, Gaussian path
//! simulation and Monte Carlo error estimates.
//!
//! Nothing here touches the frequency-domain estimator; everything is built
//! from block covariances `Cov(k) = E ζ⃗(n+k) ζ⃗(n)*`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64, ZERO};
use crate::par::{self, Execution};
use crate::pcmodel::{univariate_time, BlockedFunctional, MissingPattern};
use crate::spectral::{self, FourierCoeffSet, Model};

/// Extra blocks required past the last gap.
pub const WINDOW_MARGIN: usize = 4;

/// Covariances of signal and noise of a model, up to lag `kmax`.
#[derive(Debug, Clone)]
pub struct ModelCovariance {
    pub signal: FourierCoeffSet,
    pub noise: Option<FourierCoeffSet>,
}

impl ModelCovariance {
    pub fn from_model(model: &Model, kmax: usize, grid_size: usize, exec: Execution) -> Result<Self> {
        let signal = spectral::covariance_from_density(&model.f, kmax, grid_size, exec)?;
        let noise =
            model.g.as_ref().map(|g| spectral::covariance_from_density(g, kmax, grid_size, exec)).transpose()?;
        Ok(Self { signal, noise })
    }

    pub fn period(&self) -> usize {
        self.signal.dim()
    }

    pub fn kmax(&self) -> usize {
        self.signal.kmax()
    }

    fn checked(&self, k: i64) -> Result<CMat> {
        self.signal
            .try_get(k)
            .cloned()
            .ok_or_else(|| Error::validation(format!("covariance lag {k} beyond computed range {}", self.kmax())))
    }

    /// Signal covariance at lag `k`.
    pub fn signal_at(&self, k: i64) -> Result<CMat> {
        self.checked(k)
    }

    /// Covariance of the observations `ζ⃗ + θ⃗` at lag `k`.
    pub fn observed_at(&self, k: i64) -> Result<CMat> {
        let mut c = self.checked(k)?;
        if let Some(g) = &self.noise {
            c += g.try_get(k).ok_or_else(|| Error::validation(format!("noise covariance lag {k} out of range")))?;
        }
        Ok(c)
    }
}

/// `E|Aζ⃗|² = Σ_{j,k} ā(j)ᵀ Cov(j-k) conj(ā(k))`.
pub fn functional_variance(cov: &ModelCovariance, functional: &BlockedFunctional) -> Result<f64> {
    let a = functional.lifted();
    let mut v = ZERO;
    for (j, aj) in a.iter().enumerate() {
        for (k, ak) in a.iter().enumerate() {
            v += (aj.transpose() * cov.signal_at(j as i64 - k as i64)? * ak.conjugate())[(0, 0)];
        }
    }
    Ok(v.re)
}

/// `E[Aζ⃗ · conj(y(m))]` as a vector over the components of `y(m)`.
fn cross_covariance(cov: &ModelCovariance, functional: &BlockedFunctional, m: i64) -> Result<CVec> {
    let mut b = CVec::zeros(cov.period());
    for (j, aj) in functional.lifted().iter().enumerate() {
        b += cov.signal_at(j as i64 - m)?.transpose() * aj;
    }
    Ok(b)
}

/// Optimal weights over an observation window and the attained error.
#[derive(Debug, Clone)]
pub struct GramResult {
    pub window: usize,
    /// `(m, w(m))` for the estimate `Σ w(m)ᵀ (ζ⃗(m) + θ⃗(m))`.
    pub weights: Vec<(i64, CVec)>,
    pub mse: f64,
    pub condition: f64,
}

/// Project `Aζ⃗` onto the span of `ζ⃗(m) + θ⃗(m)`, `m ∈ {-W..-1} ∖ S̃`, by
/// solving the normal equations.
pub fn gram_projection(
    cov: &ModelCovariance,
    pattern: &MissingPattern,
    functional: &BlockedFunctional,
    window: usize,
) -> Result<GramResult> {
    let t = cov.period();
    if functional.period() != t {
        return Err(Error::validation("functional period does not match covariance dimension"));
    }
    let needed = pattern.span() as usize + WINDOW_MARGIN;
    if window < needed {
        return Err(Error::validation(format!("window {window} shorter than the last gap plus margin ({needed})")));
    }
    let obs = pattern.observed_in_window(window);
    let n = obs.len();
    let mut gram = CMat::zeros(n * t, n * t);
    for (p, &mp) in obs.iter().enumerate() {
        for (q, &mq) in obs.iter().enumerate() {
            linalg::set_block(&mut gram, p, q, &cov.observed_at(mp - mq)?);
        }
    }
    let mut b = CMat::zeros(n * t, 1);
    for (p, &m) in obs.iter().enumerate() {
        b.view_mut((p * t, 0), (t, 1)).copy_from(&cross_covariance(cov, functional, m)?);
    }
    let var_a = functional_variance(cov, functional)?;
    if b.iter().all(|z| *z == ZERO) {
        return Ok(GramResult { window, weights: Vec::new(), mse: var_a, condition: 1.0 });
    }
    let condition = linalg::hermitian_condition(&gram);
    // conj(G) w = b  ⇔  G conj(w) = conj(b)
    let w_conj = linalg::cholesky_solve(&gram, &b.conjugate())
        .ok_or_else(|| Error::validation("singular Gram matrix: degenerate model"))?;
    let w = w_conj.conjugate();
    let explained: C64 = w.iter().zip(b.iter()).map(|(wi, bi)| wi * bi.conj()).sum();
    let weights =
        obs.iter().enumerate().map(|(p, &m)| (m, w.view((p * t, 0), (t, 1)).column(0).into_owned())).collect();
    Ok(GramResult { window, weights, mse: (var_a - explained.re).max(0.0), condition })
}

/// Analytic error `E|Aζ⃗ - Σ w(m)ᵀ y(m)|²` of arbitrary weights.
pub fn weights_mse(cov: &ModelCovariance, functional: &BlockedFunctional, weights: &[(i64, CVec)]) -> Result<f64> {
    let mut v = C64::new(functional_variance(cov, functional)?, 0.0);
    for (m, w) in weights {
        let b = cross_covariance(cov, functional, *m)?;
        v -= 2.0 * linalg::dot(w, &b).re;
        for (n, u) in weights {
            v += (w.transpose() * cov.observed_at(m - n)? * u.conjugate())[(0, 0)];
        }
    }
    Ok(v.re)
}

/// Blocked sample path over `first..first+len`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub period: usize,
    pub first: i64,
    pub zeta: Vec<CVec>,
    /// Noise path; `None` for noiseless models.
    pub theta: Option<Vec<CVec>>,
    pub seed: u64,
    pub trial: u64,
}

impl SamplePath {
    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }

    fn slot(&self, n: i64) -> Option<usize> {
        let i = n - self.first;
        (i >= 0 && (i as usize) < self.zeta.len()).then_some(i as usize)
    }

    pub fn signal(&self, n: i64) -> Option<&CVec> {
        self.slot(n).map(|i| &self.zeta[i])
    }

    /// `ζ⃗(n) + θ⃗(n)`.
    pub fn observation(&self, n: i64) -> Option<CVec> {
        let i = self.slot(n)?;
        Some(match &self.theta {
            Some(th) => &self.zeta[i] + &th[i],
            None => self.zeta[i].clone(),
        })
    }

    /// `(j, ζ(j), θ(j))` with `[ζ⃗(n)]_p = ζ(nT + p)`.
    pub fn univariate(&self) -> Vec<(i64, C64, C64)> {
        let mut rows = Vec::with_capacity(self.len() * self.period);
        for (i, z) in self.zeta.iter().enumerate() {
            let n = self.first + i as i64;
            for p in 1..=self.period {
                let th = self.theta.as_ref().map_or(ZERO, |t| t[i][p - 1]);
                rows.push((univariate_time(n, p, self.period), z[p - 1], th));
            }
        }
        rows
    }

    /// Rebuild from univariate values, the inverse of [`SamplePath::univariate`].
    pub fn from_univariate(period: usize, first: i64, zeta: &[C64]) -> Self {
        let blocks = zeta.chunks(period).map(CVec::from_column_slice).collect();
        Self { period, first, zeta: blocks, theta: None, seed: 0, trial: 0 }
    }
}

/// Lower Cholesky factor of a windowed block Toeplitz covariance, kept real
/// when the covariance is real.
#[derive(Debug, Clone)]
enum Factor {
    Real(DMatrix<f64>),
    Complex(CMat),
}

impl Factor {
    fn new(cov: &FourierCoeffSet, blocks: usize, what: &str) -> Result<Self> {
        let t = cov.dim();
        if blocks > cov.kmax() + 1 {
            return Err(Error::validation(format!(
                "{what} covariance known to lag {} but window spans {blocks} blocks",
                cov.kmax()
            )));
        }
        let mut full = CMat::zeros(blocks * t, blocks * t);
        for a in 0..blocks {
            for b in 0..blocks {
                linalg::set_block(&mut full, a, b, &cov.get(a as i64 - b as i64));
            }
        }
        let full = linalg::hermitian_part(&full);
        let scale = linalg::max_abs(&full).max(f64::MIN_POSITIVE);
        let real = full.iter().all(|z| z.im.abs() <= 1e-14 * scale);
        let indefinite = || Error::validation(format!("{what} covariance is not positive definite over the window"));
        if real {
            let re = full.map(|z| z.re);
            let chol = re.cholesky().ok_or_else(indefinite)?;
            Ok(Factor::Real(chol.l()))
        } else {
            let chol = full.cholesky().ok_or_else(indefinite)?;
            Ok(Factor::Complex(chol.l()))
        }
    }

    fn dim(&self) -> usize {
        match self {
            Factor::Real(l) => l.nrows(),
            Factor::Complex(l) => l.nrows(),
        }
    }

    fn is_real(&self) -> bool {
        matches!(self, Factor::Real(_))
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> CVec {
        let n = self.dim();
        match self {
            Factor::Real(l) => {
                let z = nalgebra::DVector::<f64>::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
                (l * z).map(|x| C64::new(x, 0.0))
            }
            Factor::Complex(l) => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let z = CVec::from_iterator(
                    n,
                    (0..n).map(|_| {
                        let re: f64 = StandardNormal.sample(rng);
                        let im: f64 = StandardNormal.sample(rng);
                        C64::new(re * s, im * s)
                    }),
                );
                l * z
            }
        }
    }
}

/// Zero-mean Gaussian generator for blocked paths over a fixed window.
#[derive(Debug, Clone)]
pub struct GaussianSimulator {
    period: usize,
    first: i64,
    blocks: usize,
    signal: Factor,
    noise: Option<Factor>,
}

impl GaussianSimulator {
    pub fn new(signal: &FourierCoeffSet, noise: Option<&FourierCoeffSet>, first: i64, blocks: usize) -> Result<Self> {
        if blocks == 0 {
            return Err(Error::validation("simulation window must contain at least one block"));
        }
        Ok(Self {
            period: signal.dim(),
            first,
            blocks,
            signal: Factor::new(signal, blocks, "signal")?,
            noise: noise.map(|g| Factor::new(g, blocks, "noise")).transpose()?,
        })
    }

    /// Paths over `-window..N-1`, enough for a functional of horizon `N`
    /// and weights back to `-window`.
    pub fn for_model(cov: &ModelCovariance, window: usize, horizon: usize) -> Result<Self> {
        Self::new(&cov.signal, cov.noise.as_ref(), -(window as i64), window + horizon)
    }

    pub fn is_real(&self) -> bool {
        self.signal.is_real() && self.noise.as_ref().is_none_or(Factor::is_real)
    }

    pub fn first(&self) -> i64 {
        self.first
    }

    pub fn last(&self) -> i64 {
        self.first + self.blocks as i64 - 1
    }

    /// Trial `trial` of the stream seeded by `seed`; independent of the
    /// order in which trials are drawn.
    pub fn sample(&self, seed: u64, trial: u64) -> SamplePath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let split =
            |v: CVec| (0..self.blocks).map(|i| v.rows(i * self.period, self.period).into_owned()).collect::<Vec<_>>();
        let zeta = split(self.signal.draw(&mut rng));
        let theta = self.noise.as_ref().map(|f| split(f.draw(&mut rng)));
        SamplePath { period: self.period, first: self.first, zeta, theta, seed, trial }
    }
}

/// `trials` independent paths over blocks `0..blocks`.
pub fn simulate_gaussian(
    cov: &FourierCoeffSet,
    blocks: usize,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SamplePath>> {
    let sim = GaussianSimulator::new(cov, None, 0, blocks)?;
    Ok(par::map_indexed(exec, trials, |i| sim.sample(seed, i as u64)))
}

/// Empirical mean of a squared error with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MonteCarloEstimate {
    pub trials: usize,
    pub mean: f64,
    /// Jackknife standard error of the mean.
    pub standard_error: f64,
}

impl MonteCarloEstimate {
    /// `(mean - reference) / standard_error`, zero when both coincide exactly.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = self.mean - reference;
        if d == 0.0 {
            0.0
        } else if self.standard_error == 0.0 {
            f64::INFINITY * d.signum()
        } else {
            d / self.standard_error
        }
    }
}

fn jackknife(samples: &[f64]) -> MonteCarloEstimate {
    let n = samples.len();
    let total: f64 = samples.iter().sum();
    let mean = total / n as f64;
    if n < 2 {
        return MonteCarloEstimate { trials: n, mean, standard_error: f64::NAN };
    }
    // leave-one-out means and their spread
    let loo = samples.iter().map(|x| (total - x) / (n - 1) as f64);
    let ss: f64 = loo.map(|m| (m - mean).powi(2)).sum();
    MonteCarloEstimate { trials: n, mean, standard_error: ((n - 1) as f64 / n as f64 * ss).sqrt() }
}

fn squared_error(path: &SamplePath, weights: &[(i64, CVec)], functional: &BlockedFunctional) -> Result<f64> {
    let mut err = ZERO;
    for (j, a) in functional.lifted().iter().enumerate() {
        let z = path.signal(j as i64).ok_or_else(|| Error::validation("path does not cover the functional horizon"))?;
        err += (a.transpose() * z)[(0, 0)];
    }
    for (m, w) in weights {
        let y = path.observation(*m).ok_or_else(|| Error::validation(format!("path does not cover weight lag {m}")))?;
        err -= (w.transpose() * y)[(0, 0)];
    }
    Ok(err.norm_sqr())
}

/// Empirical `E|Aζ⃗ - Σ w(m)ᵀ y(m)|²` over stored paths.
pub fn monte_carlo_mse(
    paths: &[SamplePath],
    weights: &[(i64, CVec)],
    functional: &BlockedFunctional,
) -> Result<MonteCarloEstimate> {
    let errs = paths.iter().map(|p| squared_error(p, weights, functional)).collect::<Result<Vec<_>>>()?;
    Ok(jackknife(&errs))
}

/// Streaming variant that draws each trial on the fly.
pub fn monte_carlo_stream(
    sim: &GaussianSimulator,
    weights: &[(i64, CVec)],
    functional: &BlockedFunctional,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarloEstimate> {
    if trials == 0 {
        return Err(Error::validation("at least one trial is required"));
    }
    if let Some((m, _)) = weights.iter().find(|(m, _)| *m < sim.first()) {
        return Err(Error::validation(format!("simulation window starts at {} but weights reach {m}", sim.first())));
    }
    if functional.horizon() as i64 - 1 > sim.last() {
        return Err(Error::validation("simulation window does not cover the functional horizon"));
    }
    let errs = par::try_map_indexed(exec, trials, |i| squared_error(&sim.sample(seed, i as u64), weights, functional))?;
    Ok(jackknife(&errs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extrapolate::{extrapolate_functional, EstimateOptions};
    use crate::fixtures;
    use crate::spectral::{DensityKind, DensitySpec};
    use proptest::prelude::*;
    use rand::Rng;

    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn white(t: usize) -> ModelCovariance {
        ModelCovariance::from_model(&Model::noiseless(DensitySpec::identity(t)), 200, 1024, Execution::Parallel)
            .unwrap()
    }

    /// Channel 1 white, channel 2 with spectral density 1/(2.5 - 2cos λ).
    fn mixed_model() -> Model {
        let b0 = CMat::from_diagonal(&CVec::from_vec(vec![re(1.0), re(2.5)]));
        let b1 = CMat::from_diagonal(&CVec::from_vec(vec![re(0.0), re(-1.0)]));
        Model::noiseless(DensitySpec::new(DensityKind::InverseDensity, vec![b0, b1], "").unwrap())
    }

    #[test]
    fn white_noise_projection_is_trivial() {
        let r = gram_projection(&white(2), &fixtures::single_gap(), &fixtures::first_block_sum(), 16).unwrap();
        assert!((r.mse - 2.0).abs() < 1e-12);
        assert!(r.weights.iter().all(|(_, w)| w.norm() < 1e-14));
    }

    #[test]
    fn window_precondition() {
        let p = MissingPattern::new(&[2], &[3]).unwrap();
        assert!(gram_projection(&white(2), &p, &fixtures::first_block_sum(), 8).is_err());
        assert!(gram_projection(&white(2), &p, &fixtures::first_block_sum(), 9).is_ok());
    }

    #[test]
    fn mixed_model_matches_spectral_estimate() {
        let model = mixed_model();
        let cov = ModelCovariance::from_model(&model, 200, 1024, Execution::Parallel).unwrap();
        let func = fixtures::first_block_sum();
        let r = gram_projection(&cov, &fixtures::single_gap(), &func, 64).unwrap();
        let est = extrapolate_functional(&model, &fixtures::single_gap(), &func, &EstimateOptions::default()).unwrap();
        assert!((r.mse - est.delta).abs() < 1e-4 * est.delta, "{} vs {}", r.mse, est.delta);
        // analytic error of the spectral weights in the time domain
        let w = weights_mse(&cov, &func, &est.weights.weights).unwrap();
        assert!((w - est.delta).abs() < 1e-8 * est.delta);
    }

    #[test]
    fn gaps_never_help() {
        let cov = ModelCovariance::from_model(&mixed_model(), 200, 1024, Execution::Parallel).unwrap();
        let func = fixtures::first_block_sum();
        let none = gram_projection(&cov, &MissingPattern::empty(), &func, 32).unwrap();
        let gap = gram_projection(&cov, &fixtures::single_gap(), &func, 32).unwrap();
        assert!(gap.mse >= none.mse - 1e-12);
    }

    #[test]
    fn mse_non_increasing_in_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = fixtures::random_model(&mut rng, 2, 2);
        let cov = ModelCovariance::from_model(&model, 200, 1024, Execution::Parallel).unwrap();
        let pattern = MissingPattern::new(&[1], &[2]).unwrap();
        let func = fixtures::random_functional(&mut rng, 2, 2);
        let mut prev = f64::INFINITY;
        for w in [8, 16, 32, 64] {
            let r = gram_projection(&cov, &pattern, &func, w).unwrap();
            assert!(r.mse <= prev + 1e-12);
            prev = r.mse;
        }
    }

    #[test]
    fn white_simulation_statistics() {
        let cov = white(2).signal;
        let paths = simulate_gaussian(&cov, 4, 20000, 1, Execution::Parallel).unwrap();
        let n = paths.len() as f64;
        let mut c0 = CMat::zeros(2, 2);
        for p in &paths {
            c0 += &p.zeta[1] * p.zeta[1].adjoint();
        }
        c0 /= re(n);
        assert!((c0 - linalg::identity(2)).norm() < 5.0 / n.sqrt());
    }

    #[test]
    fn ar_simulation_lag_one_correlation() {
        let spec = DensitySpec::new(
            DensityKind::InverseDensity,
            vec![CMat::from_element(1, 1, re(2.5)), CMat::from_element(1, 1, re(-1.0))],
            "",
        )
        .unwrap();
        let cov = spectral::covariance_from_density(&spec, 8, 256, Execution::Parallel).unwrap();
        let trials = 20000;
        let paths = simulate_gaussian(&cov, 2, trials, 9, Execution::Parallel).unwrap();
        let (mut s01, mut s00) = (0.0, 0.0);
        for p in &paths {
            s01 += (p.zeta[1][0] * p.zeta[0][0].conj()).re;
            s00 += p.zeta[0][0].norm_sqr();
        }
        let rho = s01 / s00;
        assert!((rho - 0.5).abs() < 3.0 / (trials as f64).sqrt(), "{rho}");
    }

    #[test]
    fn simulation_is_deterministic_and_order_free() {
        let cov = white(3).signal;
        let a = simulate_gaussian(&cov, 5, 50, 42, Execution::Parallel).unwrap();
        let b = simulate_gaussian(&cov, 5, 50, 42, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let sim = GaussianSimulator::new(&cov, None, 0, 5).unwrap();
        assert_eq!(sim.sample(42, 17), a[17]);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let bad = FourierCoeffSet::from_coeffs(
            spectral::CoeffRole::Cov,
            1,
            vec![
                CMat::from_element(1, 1, re(1.0)),
                CMat::from_element(1, 1, re(1.0)),
                CMat::from_element(1, 1, re(1.0)),
            ],
            0,
            0.0,
        );
        // [[1, 1], [1, 1]] is singular; with lag 1 = 2 it would be indefinite
        assert!(GaussianSimulator::new(&bad, None, 0, 2).is_err());
    }

    #[test]
    fn univariate_round_trip() {
        let cov = white(3).signal;
        let p = GaussianSimulator::new(&cov, None, -2, 4).unwrap().sample(3, 0);
        let rows = p.univariate();
        assert_eq!(rows[0].0, -5);
        assert_eq!(rows.last().unwrap().0, 6);
        let back = SamplePath::from_univariate(3, -2, &rows.iter().map(|r| r.1).collect::<Vec<_>>());
        assert_eq!(back.zeta, p.zeta);
    }

    #[test]
    fn zero_functional_has_zero_empirical_error() {
        let cov = white(2);
        let sim = GaussianSimulator::for_model(&cov, 4, 1).unwrap();
        let func = BlockedFunctional::new(&[ZERO], 2).unwrap();
        let mc = monte_carlo_stream(&sim, &[], &func, 100, 1, Execution::Parallel).unwrap();
        assert_eq!(mc.mean, 0.0);
        assert_eq!(mc.z_score(0.0), 0.0);
    }

    #[test]
    fn oracle_weights_match_projection_error_empirically() {
        let cov = ModelCovariance::from_model(&mixed_model(), 200, 1024, Execution::Parallel).unwrap();
        let func = fixtures::first_block_sum();
        let r = gram_projection(&cov, &fixtures::single_gap(), &func, 8).unwrap();
        let sim = GaussianSimulator::for_model(&cov, 8, 1).unwrap();
        let mc = monte_carlo_stream(&sim, &r.weights, &func, 20000, 5, Execution::Parallel).unwrap();
        assert!(mc.z_score(r.mse).abs() < 4.0, "{mc:?} vs {}", r.mse);
    }

    #[test]
    fn window_too_short_is_an_error() {
        let cov = white(2);
        let sim = GaussianSimulator::for_model(&cov, 2, 1).unwrap();
        let w = vec![(-5, CVec::zeros(2))];
        assert!(monte_carlo_stream(&sim, &w, &fixtures::first_block_sum(), 10, 1, Execution::Sequential).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn perturbing_optimal_weights_increases_error(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = rng.random_range(1..=2);
            let model = fixtures::random_model(&mut rng, t, 2);
            let cov = ModelCovariance::from_model(&model, 64, 1024, Execution::Sequential).unwrap();
            let pattern = fixtures::random_pattern(&mut rng, 1, 2);
            let func = fixtures::random_functional(&mut rng, t, 2);
            let r = gram_projection(&cov, &pattern, &func, 16).unwrap();
            let base = weights_mse(&cov, &func, &r.weights).unwrap();
            prop_assert!((base - r.mse).abs() < 1e-9 * r.mse.max(1.0));
            prop_assume!(!r.weights.is_empty());
            let i = rng.random_range(0..r.weights.len());
            let p = rng.random_range(0..t);
            for eps in [0.1, -0.1] {
                let mut w = r.weights.clone();
                w[i].1[p] += re(eps);
                prop_assert!(weights_mse(&cov, &func, &w).unwrap() > base);
            }
        }
    }
}
