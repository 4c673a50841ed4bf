//! JSON run configuration.
//!
//! Complex numbers are `[re, im]` pairs and matrices are row-major nested
//! arrays of pairs. Unknown keys are rejected.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use qgcc_core::analysis::Method;
use qgcc_core::linalg::{self, c, CMat};
use qgcc_core::lmi::DEFAULT_MARGIN;
use qgcc_core::oracle::{DEFAULT_SAMPLES, DEFAULT_SEED};
use qgcc_core::qmodel::{
    dpa_fixture, CostSpec, CouplingOperator, DoubledKind, DoubledMatrix, UncertainSystem, UncertaintyClass,
};

pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<qgcc_core::Error> for ConfigError {
    fn from(e: qgcc_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Smallgain,
    Popov,
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodChoice::Smallgain => vec![Method::SmallGain],
            MethodChoice::Popov => vec![Method::Popov],
            MethodChoice::Both => vec![Method::SmallGain, Method::Popov],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MethodChoice::Smallgain => "smallgain",
            MethodChoice::Popov => "popov",
            MethodChoice::Both => "both",
        }
    }
}

/// Either `{"fixture": "dpa", "kappa": ...}` or explicit `m1, m2, n1, n2, e1, e2`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m2: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n2: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e1: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e2: Option<JsonMatrix>,
    /// Only the identity scattering matrix is supported; any value is rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scattering: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RSpec {
    Named(String),
    Matrix(JsonMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default = "default_r")]
    pub r: RSpec,
    #[serde(default = "default_rho")]
    pub rho: f64,
}

fn default_r() -> RSpec {
    RSpec::Named("identity".into())
}

fn default_rho() -> f64 {
    0.1
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            r: default_r(),
            rho: default_rho(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

impl Default for Range {
    fn default() -> Self {
        Self {
            from: 0.0,
            to: 1.0,
            step: 0.05,
        }
    }
}

impl Range {
    /// `from, from + step, …` up to `to` inclusive (with a small tolerance),
    /// rounded to 10 decimals so printed values stay clean.
    pub fn points(&self) -> Result<Vec<f64>, ConfigError> {
        if !(self.from.is_finite() && self.to.is_finite() && self.step.is_finite()) {
            return cfg_err("range bounds must be finite");
        }
        if !(self.step > 0.0) {
            return cfg_err(format!("step must be positive, got {}", self.step));
        }
        if self.from > self.to {
            return cfg_err(format!("empty range: from {} > to {}", self.from, self.to));
        }
        let count = ((self.to - self.from) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|i| ((self.from + i as f64 * self.step) * 1e10).round() / 1e10)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default = "default_method")]
    pub method: MethodChoice,
    #[serde(default)]
    pub theta_grid: Range,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub verification: VerificationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn default_method() -> MethodChoice {
    MethodChoice::Smallgain
}

fn default_epsilon() -> f64 {
    DEFAULT_MARGIN
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig {
                fixture: Some("dpa".into()),
                kappa: Some(4.5),
                ..SystemConfig::default()
            },
            cost: CostConfig::default(),
            method: default_method(),
            theta_grid: Range::default(),
            epsilon: default_epsilon(),
            verification: VerificationConfig::default(),
            output: None,
        }
    }
}

pub fn parse_matrix(m: &JsonMatrix, name: &str) -> Result<CMat, ConfigError> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || m.iter().any(|r| r.len() != cols) {
        return cfg_err(format!("{name} must be a non-empty rectangular matrix"));
    }
    if m.iter().flatten().flatten().any(|v| !v.is_finite()) {
        return cfg_err(format!("{name} has non-finite entries"));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| c(m[i][j][0], m[i][j][1])))
}

pub fn to_json_matrix(m: &CMat) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re + 0.0, m[(i, j)].im + 0.0]).collect())
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return cfg_err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.verification.samples == 0 {
            return cfg_err("verification.samples must be at least 1");
        }
        if self.theta_grid.from < 0.0 {
            return cfg_err("theta_grid must start at a non-negative value");
        }
        self.theta_grid.points()?;
        if !(self.cost.rho > 0.0 && self.cost.rho.is_finite()) {
            return cfg_err(format!("cost.rho must be positive, got {}", self.cost.rho));
        }
        match &self.cost.r {
            RSpec::Named(name) if name != "identity" => {
                return cfg_err(format!("unknown cost.r {name:?}; use \"identity\" or a matrix"))
            }
            RSpec::Matrix(m) => {
                parse_matrix(m, "cost.r")?;
            }
            RSpec::Named(_) => {}
        }
        let s = &self.system;
        if s.scattering.is_some() {
            return cfg_err("unsupported: only the identity scattering matrix is handled; drop the scattering field");
        }
        match s.fixture.as_deref() {
            Some("dpa") => {
                if s.kappa.is_none() {
                    return cfg_err("fixture dpa needs kappa");
                }
                if [&s.m1, &s.m2, &s.n1, &s.n2, &s.e1, &s.e2].iter().any(|m| m.is_some()) {
                    return cfg_err("fixture and explicit matrices are mutually exclusive");
                }
            }
            Some(other) => return cfg_err(format!("unknown fixture {other:?}")),
            None => {
                if s.kappa.is_some() {
                    return cfg_err("kappa only applies to the dpa fixture");
                }
                if s.m1.is_none() || s.n1.is_none() {
                    return cfg_err("explicit systems need at least m1 and n1");
                }
            }
        }
        Ok(())
    }

    pub fn is_fixture(&self) -> bool {
        self.system.fixture.is_some()
    }

    pub fn kappa(&self) -> Option<f64> {
        self.system.kappa
    }

    pub fn theta_points(&self) -> Vec<f64> {
        self.theta_grid.points().expect("validated on load")
    }

    /// The plant set up for `method`'s uncertainty class. γ defaults to 1
    /// for small gain and 2 for Popov.
    pub fn system_for(&self, method: Method, kappa_override: Option<f64>) -> Result<UncertainSystem, ConfigError> {
        let class = method.uncertainty_class();
        let gamma = self.system.gamma.unwrap_or_else(|| class.example_gamma());
        let delta = self.system.delta.unwrap_or(0.0);
        let base = match self.system.fixture.as_deref() {
            Some(_) => {
                let kappa = kappa_override.or(self.system.kappa).expect("validated");
                dpa_fixture(kappa)?.system
            }
            None => self.explicit_system()?,
        };
        Ok(base.with_uncertainty(class, gamma)?.with_delta(delta)?)
    }

    fn explicit_system(&self) -> Result<UncertainSystem, ConfigError> {
        let s = &self.system;
        let m1 = parse_matrix(s.m1.as_ref().expect("validated"), "m1")?;
        let n = m1.nrows();
        let zeros = |r: usize, k: usize| linalg::zeros(r, k);
        let m2 = s.m2.as_ref().map(|m| parse_matrix(m, "m2")).transpose()?.unwrap_or_else(|| zeros(n, n));
        let n1 = parse_matrix(s.n1.as_ref().expect("validated"), "n1")?;
        let n2 = s
            .n2
            .as_ref()
            .map(|m| parse_matrix(m, "n2"))
            .transpose()?
            .unwrap_or_else(|| zeros(n1.nrows(), n1.ncols()));
        let e1 = s.e1.as_ref().map(|m| parse_matrix(m, "e1")).transpose()?.unwrap_or_else(|| linalg::eye(n));
        let e2 = s
            .e2
            .as_ref()
            .map(|m| parse_matrix(m, "e2"))
            .transpose()?
            .unwrap_or_else(|| zeros(e1.nrows(), e1.ncols()));
        let m = DoubledMatrix::validate(m1, m2, DoubledKind::Hermitian)?;
        let e = DoubledMatrix::validate(e1, e2, DoubledKind::General)?;
        let coupling = CouplingOperator::new(n1, n2)?;
        Ok(UncertainSystem::new(m, coupling, e, 1.0, 0.0, UncertaintyClass::NormBound)?)
    }

    pub fn cost_spec(&self, modes: usize) -> Result<CostSpec, ConfigError> {
        let r = match &self.cost.r {
            RSpec::Named(name) if name == "identity" => linalg::eye(2 * modes),
            RSpec::Named(other) => return cfg_err(format!("unknown cost.r {other:?}; use \"identity\" or a matrix")),
            RSpec::Matrix(m) => parse_matrix(m, "cost.r")?,
        };
        Ok(CostSpec::new(r, self.cost.rho)?)
    }

    /// `# key=value` lines describing the run.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let system = match self.system.fixture.as_deref() {
            Some(f) => f.to_string(),
            None => "explicit".to_string(),
        };
        let r = match &self.cost.r {
            RSpec::Named(n) => n.clone(),
            RSpec::Matrix(_) => "matrix".to_string(),
        };
        let fmt_opt = |v: Option<f64>, default: &str| v.map_or_else(|| default.to_string(), |x| x.to_string());
        vec![
            ("system".into(), system),
            ("gamma".into(), fmt_opt(self.system.gamma, "method_default(1|2)")),
            ("delta".into(), fmt_opt(self.system.delta, "0")),
            ("r".into(), r),
            ("rho".into(), self.cost.rho.to_string()),
            ("epsilon".into(), self.epsilon.to_string()),
            (
                "theta_grid".into(),
                format!("{}:{}:{}", self.theta_grid.from, self.theta_grid.step, self.theta_grid.to),
            ),
            ("samples".into(), self.verification.samples.to_string()),
            ("seed".into(), self.verification.seed.to_string()),
        ]
    }
}
