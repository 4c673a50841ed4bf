//! CSV tables and JSON artifacts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use qgcc_core::analysis::{AnalysisOutcome, Method};
use qgcc_core::linalg::CMat;
use qgcc_core::oracle::VerificationReport;
use qgcc_core::qmodel::{DoubledKind, DoubledMatrix};
use qgcc_core::realize::SqueezerRealization;
use qgcc_core::synthesis::SynthesisOutcome;

use crate::config::{parse_matrix, to_json_matrix, ConfigError, JsonMatrix};

pub const HEADER: &str = "method,kappa,theta,feasible,bound,q,t,solver_status,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Analysis,
    Synthesis,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Analysis => "analysis",
            Task::Synthesis => "synthesis",
        }
    }
}

/// Row label such as `smallgain_synthesis`.
pub fn method_label(method: Method, task: Task) -> String {
    format!("{}_{}", method.as_str(), task.as_str())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub method: String,
    pub kappa: Option<f64>,
    pub theta: Option<f64>,
    pub feasible: bool,
    pub bound: f64,
    pub q: Option<f64>,
    pub t: Option<f64>,
    pub status: String,
    pub wall_ms: Option<f64>,
}

impl Row {
    pub fn from_analysis(o: &AnalysisOutcome, kappa: Option<f64>) -> Self {
        let (theta, t) = match o.method {
            // τ² = 1/s
            Method::SmallGain => (None, o.feasible.then(|| 1.0 / o.s_or_theta)),
            Method::Popov => (Some(o.s_or_theta), None),
        };
        Self {
            method: method_label(o.method, Task::Analysis),
            kappa,
            theta,
            feasible: o.feasible,
            bound: o.bound,
            q: None,
            t,
            status: o.solver.status.as_str().to_string(),
            wall_ms: None,
        }
    }

    pub fn from_synthesis(o: &SynthesisOutcome, kappa: Option<f64>) -> Self {
        Self {
            method: method_label(o.method, Task::Synthesis),
            kappa,
            theta: o.theta,
            feasible: o.feasible,
            bound: o.bound,
            q: o.q,
            t: o.t,
            status: o.solver.status.as_str().to_string(),
            wall_ms: None,
        }
    }

    /// A point that produced an error instead of an outcome.
    pub fn failed(method: Method, task: Task, kappa: Option<f64>, theta: Option<f64>, status: &str) -> Self {
        Self {
            method: method_label(method, task),
            kappa,
            theta,
            feasible: false,
            bound: f64::INFINITY,
            q: None,
            t: None,
            status: status.to_string(),
            wall_ms: None,
        }
    }

    pub fn render(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let sci = |v: Option<f64>| v.map_or_else(String::new, format_sci);
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.method,
            opt(self.kappa),
            opt(self.theta),
            self.feasible,
            format_sci(self.bound),
            sci(self.q),
            sci(self.t),
            self.status,
            self.wall_ms.map_or_else(String::new, |ms| format!("{ms:.3}")),
        )
    }
}

/// Nine significant digits; `inf` for the infeasible sentinel.
pub fn format_sci(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.8e}")
    }
}

pub fn render_csv(metadata: &[(String, String)], rows: &[Row]) -> String {
    let mut out = String::new();
    for (k, v) in metadata {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str(HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.render());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    /// `K = [[k1, k2], [k2^#, k1^#]]`.
    pub k1: JsonMatrix,
    pub k2: JsonMatrix,
}

impl ControllerFile {
    pub fn from_outcome(o: &SynthesisOutcome, kappa: Option<f64>) -> Option<Self> {
        let k = o.k.as_ref()?;
        Some(Self {
            method: o.method.as_str().to_string(),
            kappa,
            theta: o.theta,
            q: o.q,
            t: o.t,
            bound: Some(o.bound),
            k1: to_json_matrix(k.block1()),
            k2: to_json_matrix(k.block2()),
        })
    }

    pub fn controller(&self) -> Result<DoubledMatrix, ConfigError> {
        let k1 = parse_matrix(&self.k1, "k1")?;
        let k2 = parse_matrix(&self.k2, "k2")?;
        Ok(DoubledMatrix::validate(k1, k2, DoubledKind::Hermitian)?)
    }

    pub fn method(&self) -> Result<Method, ConfigError> {
        match self.method.as_str() {
            "smallgain" => Ok(Method::SmallGain),
            "popov" => Ok(Method::Popov),
            other => Err(ConfigError(format!("unknown controller method {other:?}"))),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("invalid controller file: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationFile {
    pub r: f64,
    pub sinh_r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kappa_tilde: f64,
    pub b: JsonMatrix,
    pub realized_term: JsonMatrix,
    pub target: JsonMatrix,
    pub residual: f64,
    pub bogoliubov_defect: f64,
}

impl RealizationFile {
    pub fn new(s: &SqueezerRealization, realized: &CMat, target: &CMat) -> Self {
        Self {
            r: s.r,
            sinh_r: s.r.sinh(),
            alpha: s.alpha,
            beta: s.beta,
            kappa_tilde: s.kappa_tilde,
            b: to_json_matrix(&s.b),
            realized_term: to_json_matrix(realized),
            target: to_json_matrix(target),
            residual: qgcc_core::linalg::max_abs_diff(realized, target),
            bogoliubov_defect: s.bogoliubov_defect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationFile {
    pub method: String,
    pub bound: f64,
    pub samples: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub worst_cost: f64,
    pub unstable_samples: usize,
    pub seed: u64,
    pub sound: bool,
}

impl VerificationFile {
    pub fn new(method: Method, bound: f64, r: &VerificationReport) -> Self {
        Self {
            method: method.as_str().to_string(),
            bound,
            samples: r.samples,
            violations: r.violations,
            worst_margin: r.worst_margin,
            worst_cost: r.worst_cost,
            unstable_samples: r.unstable_samples,
            seed: r.seed,
            sound: r.is_sound(),
        }
    }
}
