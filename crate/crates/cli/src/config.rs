//! JSON run configuration.
//!
//! Complex numbers are `[re, im]` pairs; a `T×T` matrix is a flat row-major
//! list of `T²` pairs.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use pc_extrap_core::extrapolate::EstimateOptions;
use pc_extrap_core::minimax::{ClassMember, ClassVariant, ComponentClass, DensityClassSpec};
use pc_extrap_core::pcmodel::{BlockedFunctional, MissingPattern};
use pc_extrap_core::spectral::{DensityKind, DensitySpec, Model};
use pc_extrap_core::Execution;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub type Pair = [f64; 2];

fn complex(p: &Pair) -> Complex64 {
    Complex64::new(p[0], p[1])
}

pub fn pair(z: Complex64) -> Pair {
    [z.re, z.im]
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Flat row-major `[re, im]` entries to a `t×t` matrix.
pub fn matrix_from_entries(entries: &[Pair], t: usize, what: &str) -> Result<DMatrix<Complex64>, CliError> {
    if entries.len() != t * t {
        return Err(invalid(format!("{what}: expected {} entries for a {t}x{t} matrix, got {}", t * t, entries.len())));
    }
    if entries.iter().flatten().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{what}: entries must be finite")));
    }
    Ok(DMatrix::from_row_iterator(t, t, entries.iter().map(complex)))
}

pub fn matrix_entries(m: &DMatrix<Complex64>) -> Vec<Pair> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(pair(m[(i, j)]));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagCoeff {
    pub lag: i64,
    pub entries: Vec<Pair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub kind: DensityKind,
    #[serde(default)]
    pub label: String,
    pub coeffs: Vec<LagCoeff>,
}

impl DensityConfig {
    pub fn to_spec(&self, t: usize, what: &str) -> Result<DensitySpec, CliError> {
        let lags = self
            .coeffs
            .iter()
            .map(|c| Ok((c.lag, matrix_from_entries(&c.entries, t, &format!("{what} lag {}", c.lag))?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        DensitySpec::from_lags(self.kind, &lags, self.label.clone()).map_err(|e| invalid(format!("{what}: {e}")))
    }

    /// Non-negative lags of a spec, as written in configs.
    pub fn from_spec(spec: &DensitySpec) -> Self {
        Self {
            kind: spec.kind(),
            label: spec.label.clone(),
            coeffs: spec
                .coeffs()
                .iter()
                .enumerate()
                .map(|(k, c)| LagCoeff { lag: k as i64, entries: matrix_entries(c) })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    #[serde(rename = "N", default)]
    pub n: Vec<usize>,
    #[serde(rename = "K", default)]
    pub k: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    pub base: Vec<Pair>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub condition_limit: Option<f64>,
    pub leakage_limit: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericConfig {
    #[serde(rename = "L")]
    pub truncation: Option<usize>,
    pub grid_size: Option<usize>,
    pub kmax: Option<usize>,
    pub tail_closure: Option<bool>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub execution: Option<Execution>,
}

fn default_window() -> usize {
    128
}

fn default_trials() -> usize {
    10_000
}

fn default_oracle_tolerance() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_oracle_tolerance")]
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { window: default_window(), trials: default_trials(), seed: 0, tolerance: default_oracle_tolerance() }
    }
}

fn default_samples() -> usize {
    100
}

fn default_saddle_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimaxConfig {
    pub variant: ClassVariant,
    #[serde(rename = "P")]
    pub moment_matrix: Option<Vec<Pair>>,
    #[serde(rename = "p")]
    pub moment_trace: Option<f64>,
    #[serde(rename = "Q")]
    pub band_moment_matrix: Option<Vec<Pair>>,
    #[serde(rename = "q")]
    pub band_moment_trace: Option<f64>,
    #[serde(rename = "V")]
    pub lower: Option<DensityConfig>,
    #[serde(rename = "U")]
    pub upper: Option<DensityConfig>,
    pub degree: usize,
    /// Iteration budget of the ascent.
    pub budget: Option<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_saddle_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
    pub grid_size: Option<usize>,
    pub psd_floor: Option<f64>,
    /// Starting point; projected into the class. Defaults to the class center.
    pub init_f: Option<DensityConfig>,
    pub init_g: Option<DensityConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub period: usize,
    pub f: Option<DensityConfig>,
    pub g: Option<DensityConfig>,
    #[serde(default)]
    pub pattern: PatternConfig,
    pub functional: FunctionalConfig,
    #[serde(default)]
    pub numeric: NumericConfig,
    pub oracle: Option<OracleConfig>,
    pub minimax: Option<MinimaxConfig>,
}

/// A parsed configuration with the raw bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl LoadedConfig {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let config: RunConfig = serde_json::from_slice(bytes)?;
        config.validate()?;
        Ok(Self { config, sha256: sha256_hex(bytes) })
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }
}

/// Command-line overrides applied on top of the config.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid_size: Option<usize>,
    pub truncation: Option<usize>,
    pub trials: Option<usize>,
}

impl RunConfig {
    /// Schema and cross-reference checks; builds every object once.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.period == 0 {
            return Err(invalid("period must be positive"));
        }
        self.pattern()?;
        self.functional()?;
        if let Some(f) = &self.f {
            f.to_spec(self.period, "f")?;
        }
        if let Some(g) = &self.g {
            if self.f.is_none() {
                return Err(invalid("g given without f"));
            }
            g.to_spec(self.period, "g")?;
        }
        if let Some(m) = &self.minimax {
            self.class_spec_from(m, None)?;
        }
        Ok(())
    }

    pub fn pattern(&self) -> Result<MissingPattern, CliError> {
        MissingPattern::new(&self.pattern.n, &self.pattern.k).map_err(|e| invalid(format!("pattern: {e}")))
    }

    pub fn functional(&self) -> Result<BlockedFunctional, CliError> {
        let base: Vec<Complex64> = self.functional.base.iter().map(complex).collect();
        BlockedFunctional::new(&base, self.period).map_err(|e| invalid(format!("functional: {e}")))
    }

    pub fn model(&self) -> Result<Model, CliError> {
        let f = self.f.as_ref().ok_or_else(|| invalid("this workflow needs a signal density `f`"))?;
        let f = f.to_spec(self.period, "f")?;
        let g = self.g.as_ref().map(|g| g.to_spec(self.period, "g")).transpose()?;
        Ok(Model::new(f, g)?)
    }

    pub fn estimate_options(&self, ov: &Overrides) -> EstimateOptions {
        let n = &self.numeric;
        let mut opts = EstimateOptions {
            truncation: ov.truncation.or(n.truncation),
            grid_size: ov.grid_size.or(n.grid_size).unwrap_or(EstimateOptions::default().grid_size),
            kmax: n.kmax,
            ..Default::default()
        };
        if let Some(c) = n.tail_closure {
            opts.tail_closure = c;
        }
        if let Some(c) = n.tolerances.condition_limit {
            opts.condition_limit = c;
        }
        if let Some(l) = n.tolerances.leakage_limit {
            opts.leakage_limit = l;
        }
        if let Some(e) = n.execution {
            opts.execution = e;
        }
        opts
    }

    pub fn oracle(&self, ov: &Overrides) -> OracleConfig {
        let mut o = self.oracle.clone().unwrap_or_default();
        if let Some(s) = ov.seed {
            o.seed = s;
        }
        if let Some(t) = ov.trials {
            o.trials = t;
        }
        o
    }

    pub fn minimax(&self) -> Result<&MinimaxConfig, CliError> {
        self.minimax.as_ref().ok_or_else(|| invalid("the minimax workflow needs a `minimax` block"))
    }

    /// Class described by the `minimax` block.
    ///
    /// `D0_1`/`D0_2` constrain the signal by `P`/`p`; any of `Q|q`, `V`, `U`
    /// then adds a noise class. `DVU_1`/`DVU_2` describe a noiseless signal
    /// class with moment `Q|q` and bounds `V ≤ f ≤ U`.
    pub fn class_spec_from(&self, m: &MinimaxConfig, grid: Option<usize>) -> Result<DensityClassSpec, CliError> {
        let t = self.period;
        let matrix = matches!(m.variant, ClassVariant::D0_1 | ClassVariant::DVU_1);
        let moment =
            |mat: &Option<Vec<Pair>>, tr: Option<f64>, names: (&str, &str)| -> Result<ComponentClass, CliError> {
                if matrix {
                    let e =
                        mat.as_ref().ok_or_else(|| invalid(format!("variant {:?} needs `{}`", m.variant, names.0)))?;
                    Ok(ComponentClass::matrix_moment(matrix_from_entries(e, t, names.0)?))
                } else {
                    let v = tr.ok_or_else(|| invalid(format!("variant {:?} needs `{}`", m.variant, names.1)))?;
                    Ok(ComponentClass::trace_moment(v))
                }
            };
        let band = |c: ComponentClass| -> Result<ComponentClass, CliError> {
            match (&m.lower, &m.upper) {
                (Some(v), Some(u)) => Ok(c.with_band(v.to_spec(t, "V")?, u.to_spec(t, "U")?)),
                (None, None) => Ok(c),
                _ => Err(invalid("`V` and `U` must be given together")),
            }
        };
        let has_noise_block =
            m.band_moment_matrix.is_some() || m.band_moment_trace.is_some() || m.lower.is_some() || m.upper.is_some();
        let mut spec = match m.variant {
            ClassVariant::D0_1 | ClassVariant::D0_2 => {
                let signal = moment(&m.moment_matrix, m.moment_trace, ("P", "p"))?;
                let mut spec = DensityClassSpec::new(t, signal, m.degree);
                if has_noise_block {
                    let noise = band(moment(&m.band_moment_matrix, m.band_moment_trace, ("Q", "q"))?)?;
                    spec = spec.with_noise(noise);
                }
                spec
            }
            ClassVariant::DVU_1 | ClassVariant::DVU_2 => {
                if m.lower.is_none() || m.upper.is_none() {
                    return Err(invalid(format!("variant {:?} needs `V` and `U`", m.variant)));
                }
                let signal = band(moment(&m.band_moment_matrix, m.band_moment_trace, ("Q", "q"))?)?;
                DensityClassSpec::new(t, signal, m.degree)
            }
        };
        if let Some(n) = grid.or(m.grid_size) {
            spec = spec.with_grid_size(n);
        }
        if let Some(f) = m.psd_floor {
            spec = spec.with_psd_floor(f);
        }
        Ok(spec)
    }

    /// Optional starting point of the ascent.
    pub fn minimax_init(&self, m: &MinimaxConfig) -> Result<Option<ClassMember>, CliError> {
        let Some(f) = &m.init_f else {
            if m.init_g.is_some() {
                return Err(invalid("`init_g` needs `init_f`"));
            }
            return Ok(None);
        };
        let f = f.to_spec(self.period, "init_f")?;
        let g = m.init_g.as_ref().map(|g| g.to_spec(self.period, "init_g")).transpose()?;
        Ok(Some(ClassMember { f, g }))
    }
}
