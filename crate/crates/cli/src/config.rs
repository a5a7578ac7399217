//! Run configuration: a UTF-8 JSON document, parsed strictly (unknown keys
//! are rejected) and validated before any computation.

use std::fmt;
use std::path::PathBuf;

use branchsim::decomposition::{DecompositionKind, DecompositionSpec};
use branchsim::models::{self, ModelSpec};
use branchsim::{ExecMode, Tolerances, C64};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_coupling() -> f64 {
    1.0
}

fn default_energy_scale() -> f64 {
    1.0
}

/// A real number or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Complex {
    Real(f64),
    Pair([f64; 2]),
}

impl From<Complex> for C64 {
    fn from(c: Complex) -> Self {
        match c {
            Complex::Real(x) => C64::new(x, 0.0),
            Complex::Pair([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    MeasurementChain {
        alpha: Complex,
        beta: Complex,
        n_env: usize,
        #[serde(default = "default_coupling")]
        coupling: f64,
        record_times: Vec<f64>,
    },
    Recoherence {
        alpha: Complex,
        beta: Complex,
        #[serde(default = "default_coupling")]
        coupling: f64,
        t_record: f64,
        t_erase: f64,
    },
    Random {
        seed: u64,
        d_a: usize,
        d_b: usize,
        #[serde(default = "default_energy_scale")]
        energy_scale: f64,
    },
    Idle {
        d_a: usize,
        d_b: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionConfig {
    pub kind: DecompositionKind,
    /// Schmidt degeneracy tolerance (schmidt kind only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub model: ModelConfig,
    /// Defaults to the model's recommended decomposition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionConfig>,
    pub horizons: Vec<f64>,
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub execution: ExecMode,
}

/// A rejected configuration, located by line where possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source_name: String,
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source_name)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        write!(f, ": ")?;
        if let Some(field) = &self.field {
            write!(f, "{field}: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// A parsed and validated configuration together with the model it
/// describes.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: RunConfig,
    pub model: ModelSpec,
    pub decomposition: DecompositionSpec,
}

/// First line (1-based) on which `"key"` appears.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

pub fn parse(text: &str, source_name: &str) -> Result<RunConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| {
        let mut message = e.to_string();
        // serde appends " at line L column C"; the line is reported separately
        if let Some(pos) = message.rfind(" at line ") {
            message.truncate(pos);
        }
        if message.contains("unknown variant") && message.contains("basis") {
            message.push_str(" (allowed decomposition kinds: basis, fourier, schmidt)");
        }
        // tagged enums buffer their content, so serde reports the end of the
        // object; point at the offending key instead when it is named
        let named_line = ["unknown field `", "unknown variant `"]
            .iter()
            .find_map(|p| message.split(p).nth(1)?.split('`').next())
            .and_then(|key| {
                let needle = format!("\"{key}\"");
                text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
            });
        ConfigError {
            source_name: source_name.to_string(),
            line: named_line.or((e.line() > 0).then_some(e.line())),
            field: None,
            message,
        }
    })
}

pub fn parse_and_validate(text: &str, source_name: &str) -> Result<Validated, ConfigError> {
    let config = parse(text, source_name)?;
    validate(config, text, source_name)
}

pub fn validate(config: RunConfig, text: &str, source_name: &str) -> Result<Validated, ConfigError> {
    let err = |field: &str, key: &str, message: String| ConfigError {
        source_name: source_name.to_string(),
        line: line_of(text, key),
        field: Some(field.to_string()),
        message,
    };

    if config.schema_version != SCHEMA_VERSION {
        return Err(err(
            "schema_version",
            "schema_version",
            format!("unsupported version {} (expected {SCHEMA_VERSION})", config.schema_version),
        ));
    }
    check_increasing(&config.horizons).map_err(|m| err("horizons", "horizons", m))?;
    if config.horizons.is_empty() {
        return Err(err("horizons", "horizons", "at least one horizon is required".into()));
    }
    if config.horizons[0] <= 0.0 {
        return Err(err("horizons", "horizons", "horizons must be positive".into()));
    }
    check_increasing(&config.times).map_err(|m| err("times", "times", m))?;
    if config.times.is_empty() {
        return Err(err("times", "times", "at least one sample time is required".into()));
    }
    let t_max = config.horizons[0];
    if config.times[0] < 0.0 || *config.times.last().expect("nonempty") > t_max {
        return Err(err(
            "times",
            "times",
            format!("sample times must lie in [0, {t_max}] (the smallest horizon)"),
        ));
    }
    let tol = config.tolerances;
    for (name, value) in [
        ("normalization", tol.normalization),
        ("hermitian", tol.hermitian),
        ("psd", tol.psd),
        ("trace", tol.trace),
        ("projector", tol.projector),
        ("orthonormal", tol.orthonormal),
        ("eps_deg", tol.eps_deg),
        ("schmidt_zero", tol.schmidt_zero),
        ("eps_branch", tol.eps_branch),
        ("eps_p", tol.eps_p),
        ("eps_rho", tol.eps_rho),
        ("match_ambiguity", tol.match_ambiguity),
    ] {
        if !(value.is_finite() && value >= 0.0) {
            return Err(err(
                &format!("tolerances.{name}"),
                name,
                format!("must be a finite non-negative number, got {value}"),
            ));
        }
    }
    if tol.n_stable == 0 {
        return Err(err("tolerances.n_stable", "n_stable", "must be at least 1".into()));
    }

    let model = build_model(&config.model, &tol)
        .map_err(|e| err("model", "model", e.to_string()))?;

    let decomposition = match &config.decomposition {
        None => model.decomposition.clone(),
        Some(d) => {
            if d.eps_deg.is_some() && d.kind != DecompositionKind::Schmidt {
                return Err(err(
                    "decomposition.eps_deg",
                    "eps_deg",
                    format!("only applies to the schmidt kind, not {}", d.kind),
                ));
            }
            match d.kind {
                DecompositionKind::Basis => {
                    if model.decomposition.kind() == DecompositionKind::Basis {
                        model.decomposition.clone()
                    } else {
                        DecompositionSpec::computational(model.space, false)
                            .map_err(|e| err("decomposition", "decomposition", e.to_string()))?
                    }
                }
                DecompositionKind::Fourier => DecompositionSpec::fourier(model.space),
                DecompositionKind::Schmidt => {
                    let eps = d.eps_deg.unwrap_or(tol.eps_deg);
                    if !(eps.is_finite() && eps >= 0.0) {
                        return Err(err(
                            "decomposition.eps_deg",
                            "eps_deg",
                            format!("must be a finite non-negative number, got {eps}"),
                        ));
                    }
                    DecompositionSpec::schmidt(eps)
                }
            }
        }
    };

    Ok(Validated {
        config,
        model,
        decomposition,
    })
}

fn check_increasing(xs: &[f64]) -> Result<(), String> {
    if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
        return Err(format!("value {x} is not finite"));
    }
    if let Some(i) = xs.windows(2).position(|w| !(w[0] < w[1])) {
        return Err(format!(
            "list not increasing: entry {} ({}) is not greater than entry {} ({})",
            i + 1,
            xs[i + 1],
            i,
            xs[i]
        ));
    }
    Ok(())
}

pub fn build_model(model: &ModelConfig, tol: &Tolerances) -> branchsim::Result<ModelSpec> {
    match model {
        ModelConfig::MeasurementChain {
            alpha,
            beta,
            n_env,
            coupling,
            record_times,
        } => models::measurement_chain((*alpha).into(), (*beta).into(), *n_env, *coupling, record_times, tol),
        ModelConfig::Recoherence {
            alpha,
            beta,
            coupling,
            t_record,
            t_erase,
        } => models::recoherence_model((*alpha).into(), (*beta).into(), *coupling, *t_record, *t_erase, tol),
        ModelConfig::Random {
            seed,
            d_a,
            d_b,
            energy_scale,
        } => models::random_model(*seed, *d_a, *d_b, *energy_scale, tol),
        ModelConfig::Idle { d_a, d_b } => models::idle_model(*d_a, *d_b, tol),
    }
}
