//! The four workflows: estimate, oracle-check, simulate and minimax.

use std::path::Path;

use serde::Serialize;

use pc_extrap_core::extrapolate::{extrapolate_functional, EstimateOptions, EstimateResult};
use pc_extrap_core::minimax::{solve_least_favorable, verify_saddle, AdmissibleClass, AscentOptions};
use pc_extrap_core::oracle::{gram_projection, monte_carlo_stream, GaussianSimulator, ModelCovariance, WINDOW_MARGIN};
use pc_extrap_core::pcmodel::BlockedFunctional;
use pc_extrap_core::spectral::Model;

use crate::config::{DensityConfig, LoadedConfig, Overrides, RunConfig};
use crate::report::{
    indexed, univariate_weights, CertificateReport, Envelope, ErrorReport, EstimateReport, MinimaxReport, OracleReport,
    SimulateReport, Status, Verdict, WindowMse,
};
use crate::{CliError, EXIT_FAIL, EXIT_OK};

/// Largest `|z|` accepted by the simulate workflow.
pub const Z_LIMIT: f64 = 3.0;

/// Smallest window in the oracle doubling schedule.
const MIN_ORACLE_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workflow {
    Estimate,
    OracleCheck,
    Simulate,
    Minimax,
}

impl Workflow {
    pub fn name(self) -> &'static str {
        match self {
            Workflow::Estimate => "estimate",
            Workflow::OracleCheck => "oracle-check",
            Workflow::Simulate => "simulate",
            Workflow::Minimax => "minimax",
        }
    }
}

/// Serialized report with its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub json: String,
    pub exit_code: i32,
    /// Human-readable error, if the workflow did not produce a result.
    pub error: Option<String>,
}

impl Outcome {
    fn ok<T: Serialize>(workflow: Workflow, sha: &str, status: Status, result: T) -> Self {
        let exit_code = if status == Status::Ok { EXIT_OK } else { EXIT_FAIL };
        Self { json: Envelope::new(workflow.name(), sha, status, result).to_json(), exit_code, error: None }
    }

    pub fn error(workflow: Workflow, sha: &str, err: CliError) -> Self {
        let exit_code = err.exit_code();
        let report = ErrorReport { kind: err.kind(), message: err.to_string(), exit_code, hint: err.hint() };
        Self {
            json: Envelope::new(workflow.name(), sha, Status::Error, report).to_json(),
            exit_code,
            error: Some(err.to_string()),
        }
    }
}

/// Run `workflow` on a loaded configuration. Errors become error reports.
pub fn run(workflow: Workflow, cfg: &LoadedConfig, ov: &Overrides, csv: Option<&Path>) -> Outcome {
    let sha = cfg.sha256.as_str();
    let c = &cfg.config;
    let result = match workflow {
        Workflow::Estimate => estimate(c, ov).map(|r| Outcome::ok(workflow, sha, Status::Ok, r)),
        Workflow::OracleCheck => oracle_check(c, ov).map(|r| Outcome::ok(workflow, sha, r.verdict.status(), r)),
        Workflow::Simulate => simulate(c, ov, csv).map(|r| Outcome::ok(workflow, sha, r.verdict.status(), r)),
        Workflow::Minimax => minimax(c, ov).map(|r| Outcome::ok(workflow, sha, r.certificate.verdict.status(), r)),
    };
    result.unwrap_or_else(|e| Outcome::error(workflow, sha, e))
}

struct Instance {
    model: Model,
    pattern: pc_extrap_core::pcmodel::MissingPattern,
    functional: BlockedFunctional,
    opts: EstimateOptions,
}

fn instance(cfg: &RunConfig, ov: &Overrides) -> Result<Instance, CliError> {
    Ok(Instance {
        model: cfg.model()?,
        pattern: cfg.pattern()?,
        functional: cfg.functional()?,
        opts: cfg.estimate_options(ov),
    })
}

fn solve(inst: &Instance) -> Result<EstimateResult, CliError> {
    Ok(extrapolate_functional(&inst.model, &inst.pattern, &inst.functional, &inst.opts)?)
}

pub fn estimate(cfg: &RunConfig, ov: &Overrides) -> Result<EstimateReport, CliError> {
    let inst = instance(cfg, ov)?;
    let est = solve(&inst)?;
    Ok(EstimateReport {
        period: cfg.period,
        delta: est.delta,
        mse: est.mse,
        c: indexed(&est.c),
        h: indexed(&est.hcoeffs),
        weights: indexed(&est.weights.weights),
        univariate_weights: univariate_weights(&est.weights.weights, cfg.period),
        diagnostics: est.diagnostics,
    })
}

/// Windows `W, W/2, …` down to the smallest admissible one, ascending.
pub fn doubling_schedule(window: usize, smallest: usize) -> Vec<usize> {
    let floor = smallest.max(MIN_ORACLE_WINDOW.min(window));
    let mut out = vec![window];
    let mut w = window;
    while w / 2 >= floor {
        w /= 2;
        out.push(w);
    }
    out.reverse();
    out
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn oracle_check(cfg: &RunConfig, ov: &Overrides) -> Result<OracleReport, CliError> {
    let mut inst = instance(cfg, ov)?;
    let oracle = cfg.oracle(ov);
    // covariances first: infinite-variance models stop here
    let kmax = oracle.window + inst.functional.horizon();
    let cov = ModelCovariance::from_model(&inst.model, kmax, inst.opts.grid_size, inst.opts.execution)?;
    // judge the estimate by its error, not by leakage of a short truncation
    inst.opts.leakage_limit = f64::INFINITY;
    let est = solve(&inst)?;
    let smallest = inst.pattern.span() as usize + WINDOW_MARGIN;
    if oracle.window < smallest {
        return Err(CliError::Config(format!(
            "oracle.window {} is shorter than the last gap plus margin ({smallest})",
            oracle.window
        )));
    }
    let windows = doubling_schedule(oracle.window, smallest)
        .into_iter()
        .map(|w| {
            let r = gram_projection(&cov, &inst.pattern, &inst.functional, w)?;
            Ok(WindowMse { window: w, mse: r.mse, condition: r.condition })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let last = windows.last().expect("schedule is never empty").mse;
    let gap = relative_gap(last, est.delta);
    Ok(OracleReport {
        delta: est.delta,
        windows,
        relative_gap: gap,
        tolerance: oracle.tolerance,
        truncation_flag: !est.diagnostics.truncation_converged,
        effective_truncation: est.diagnostics.effective_truncation,
        verdict: Verdict::from_pass(gap <= oracle.tolerance),
    })
}

fn format_complex(z: num_complex::Complex64, real: bool) -> String {
    if real {
        format!("{}", z.re)
    } else if z.im < 0.0 {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

fn write_path_csv(path: &Path, sim: &GaussianSimulator, seed: u64) -> Result<(), CliError> {
    let sample = sim.sample(seed, 0);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["j", "zeta", "theta"])?;
    let real = sim.is_real();
    for (j, z, th) in sample.univariate() {
        w.write_record([j.to_string(), format_complex(z, real), format_complex(th, real)])?;
    }
    w.flush().map_err(|e| CliError::Io(path.display().to_string(), e))?;
    Ok(())
}

pub fn simulate(cfg: &RunConfig, ov: &Overrides, csv: Option<&Path>) -> Result<SimulateReport, CliError> {
    let inst = instance(cfg, ov)?;
    let oracle = cfg.oracle(ov);
    let est = solve(&inst)?;
    let weights = &est.weights.weights;
    let window = weights.iter().map(|(m, _)| m.unsigned_abs() as usize).max().unwrap_or(1).max(1);
    let horizon = inst.functional.horizon();
    let cov = ModelCovariance::from_model(&inst.model, window + horizon, inst.opts.grid_size, inst.opts.execution)?;
    let sim = GaussianSimulator::for_model(&cov, window, horizon)?;
    let mc = monte_carlo_stream(&sim, weights, &inst.functional, oracle.trials, oracle.seed, inst.opts.execution)?;
    let z = mc.z_score(est.delta);
    if let Some(p) = csv {
        write_path_csv(p, &sim, oracle.seed)?;
    }
    Ok(SimulateReport {
        delta: est.delta,
        seed: oracle.seed,
        window,
        weights: indexed(weights),
        estimate: mc,
        z_score: z,
        z_limit: Z_LIMIT,
        verdict: Verdict::from_pass(z.abs() <= Z_LIMIT),
        csv_path: csv.map(|p| p.display().to_string()),
    })
}

pub fn minimax(cfg: &RunConfig, ov: &Overrides) -> Result<MinimaxReport, CliError> {
    let m = cfg.minimax()?;
    let spec = cfg.class_spec_from(m, ov.grid_size)?;
    let class = AdmissibleClass::new(&spec)?;
    let pattern = cfg.pattern()?;
    let functional = cfg.functional()?;
    let mut opts = AscentOptions::for_class(&class);
    if let Some(b) = m.budget {
        opts.max_iterations = b;
    }
    opts.estimate.truncation = ov.truncation.or(cfg.numeric.truncation);
    if let Some(e) = cfg.numeric.execution {
        opts.execution = e;
    }
    let init = cfg.minimax_init(m)?;
    let pair = solve_least_favorable(&class, &pattern, &functional, init.as_ref(), &opts)?;
    let seed = ov.seed.unwrap_or(m.seed);
    let cert = verify_saddle(&pair, &class, m.samples, m.tolerance, seed, opts.execution)?;
    Ok(MinimaxReport {
        variant: spec.variant(),
        degree: spec.degree,
        grid_size: class.grid().size(),
        f0: DensityConfig::from_spec(&pair.member.f),
        g0: pair.member.g.as_ref().map(DensityConfig::from_spec),
        delta0: pair.value,
        h0: indexed(&pair.h0),
        iterations: pair.iterations,
        converged: pair.converged,
        history: pair.history.clone(),
        signal_relation: (&pair.relations.signal).into(),
        noise_relation: pair.relations.noise.as_ref().map(Into::into),
        certificate: CertificateReport::from(&cert),
    })
}
