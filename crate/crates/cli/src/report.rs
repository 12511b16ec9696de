//! Report documents written by the workflows.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use pc_extrap_core::extrapolate::{Diagnostics, MseParts};
use pc_extrap_core::minimax::{BoundMultipliers, Multiplier, RelationResidual, SaddleCertificate};
use pc_extrap_core::oracle::MonteCarloEstimate;
use pc_extrap_core::pcmodel::univariate_time;

use crate::config::{matrix_entries, pair, DensityConfig, Pair};

pub const TOOL: &str = "pc-extrap";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Fail,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct Envelope<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub workflow: &'static str,
    pub config_sha256: String,
    pub status: Status,
    pub result: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(workflow: &'static str, config_sha256: &str, status: Status, result: T) -> Self {
        Self { tool: TOOL, version: VERSION, workflow, config_sha256: config_sha256.to_string(), status, result }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint: Option<&'static str>,
}

pub fn vector(v: &DVector<Complex64>) -> Vec<Pair> {
    v.iter().map(|z| pair(*z)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Indexed {
    pub index: i64,
    pub value: Vec<Pair>,
}

pub fn indexed(items: &[(i64, DVector<Complex64>)]) -> Vec<Indexed> {
    items.iter().map(|(k, v)| Indexed { index: *k, value: vector(v) }).collect()
}

/// Coefficient of `ζ(j)` in the estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnivariateWeight {
    pub time: i64,
    pub coefficient: Pair,
}

pub fn univariate_weights(weights: &[(i64, DVector<Complex64>)], period: usize) -> Vec<UnivariateWeight> {
    let mut out: Vec<UnivariateWeight> = weights
        .iter()
        .flat_map(|(m, w)| {
            w.iter()
                .enumerate()
                .filter(|(_, z)| z.norm() > 0.0)
                .map(move |(p, z)| UnivariateWeight { time: univariate_time(*m, p + 1, period), coefficient: pair(*z) })
        })
        .collect();
    out.sort_by_key(|w| w.time);
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub period: usize,
    pub delta: f64,
    pub mse: MseParts,
    pub c: Vec<Indexed>,
    pub h: Vec<Indexed>,
    pub weights: Vec<Indexed>,
    pub univariate_weights: Vec<UnivariateWeight>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowMse {
    pub window: usize,
    pub mse: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub delta: f64,
    pub windows: Vec<WindowMse>,
    /// `|mse(W) − Δ| / max(|Δ|, |mse(W)|)` at the largest window.
    pub relative_gap: f64,
    pub tolerance: f64,
    /// Set when the `2L` re-solve moved `Δ` beyond its tolerance.
    pub truncation_flag: bool,
    pub effective_truncation: usize,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn status(self) -> Status {
        match self {
            Verdict::Pass => Status::Ok,
            Verdict::Fail => Status::Fail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub delta: f64,
    pub seed: u64,
    pub window: usize,
    pub weights: Vec<Indexed>,
    pub estimate: MonteCarloEstimate,
    pub z_score: f64,
    pub z_limit: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierReport {
    /// `α` with constant part `conj(α) αᵀ`.
    Vector(Vec<Pair>),
    /// `α²`.
    Scalar(f64),
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundReport {
    /// `ψ₁ ≤ 0`, `ψ₂ ≥ 0` per grid node, flat row-major.
    Matrix { lower: Vec<Vec<Pair>>, upper: Vec<Vec<Pair>> },
    /// `φ₁ ≤ 0`, `φ₂ ≥ 0` per grid node.
    Scalar { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, Serialize)]
pub struct RelationSummary {
    pub multiplier: MultiplierReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundReport>,
    pub max_relative: f64,
    pub mean_relative: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slackness: Option<f64>,
}

fn matrices(ms: &[DMatrix<Complex64>]) -> Vec<Vec<Pair>> {
    ms.iter().map(matrix_entries).collect()
}

impl From<&RelationResidual> for RelationSummary {
    fn from(r: &RelationResidual) -> Self {
        Self {
            multiplier: match &r.multiplier {
                Multiplier::Vector(a) => MultiplierReport::Vector(vector(a)),
                Multiplier::Scalar(a2) => MultiplierReport::Scalar(*a2),
            },
            bounds: r.bounds.as_ref().map(|b| match b {
                BoundMultipliers::Matrix { lower, upper } => {
                    BoundReport::Matrix { lower: matrices(lower), upper: matrices(upper) }
                }
                BoundMultipliers::Scalar { lower, upper } => {
                    BoundReport::Scalar { lower: lower.clone(), upper: upper.clone() }
                }
            }),
            max_relative: r.max_relative,
            mean_relative: r.mean_relative,
            slackness: r.slackness,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub samples: usize,
    pub tolerance: f64,
    pub max_violation: f64,
    pub worst_sample: Option<usize>,
    pub verdict: Verdict,
}

impl From<&SaddleCertificate> for CertificateReport {
    fn from(c: &SaddleCertificate) -> Self {
        Self {
            samples: c.samples,
            tolerance: c.tolerance,
            max_violation: c.max_violation,
            worst_sample: c.worst_sample,
            verdict: Verdict::from_pass(c.pass),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimaxReport {
    pub variant: pc_extrap_core::minimax::ClassVariant,
    pub degree: usize,
    pub grid_size: usize,
    pub f0: DensityConfig,
    pub g0: Option<DensityConfig>,
    pub delta0: f64,
    pub h0: Vec<Indexed>,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
    pub signal_relation: RelationSummary,
    pub noise_relation: Option<RelationSummary>,
    pub certificate: CertificateReport,
}
