//! model → branching → asymptotics, and the files written for a run.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use branchsim::asymptotics::{assemble_report, evaluate_horizons, HorizonData, HorizonReport, SweepSettings};
use branchsim::branching::{sampling_rng, BranchSampler, RealStateTrajectory};
use branchsim::decomposition::DecompositionKind;
use branchsim::models::pointer_distances;
use serde::Serialize;
use thiserror::Error;

use crate::config::{self, ConfigError, Validated, SCHEMA_VERSION};

pub const BRANCHES_FILE: &str = "branches.json";
pub const CONVERGENCE_FILE: &str = "convergence.json";
pub const REALIZED_FILE: &str = "realized.json";
pub const LOG_FILE: &str = "run.log";
pub const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("numeric error in {operation}: {source}")]
    Numeric {
        operation: &'static str,
        source: branchsim::Error,
    },
    #[error("I/O error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    /// 2 config, 3 numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric { .. } => 3,
            RunError::Io { .. } => 4,
        }
    }
}

fn numeric(operation: &'static str) -> impl FnOnce(branchsim::Error) -> RunError {
    move |source| RunError::Numeric { operation, source }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Command-line overrides of the configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub converged: bool,
    pub realized: Option<String>,
    pub branch_count: usize,
}

pub fn read_config(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn validate_file(path: &Path) -> Result<Validated, RunError> {
    let text = read_config(path)?;
    Ok(config::parse_and_validate(&text, &path.display().to_string())?)
}

pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let text = read_config(path)?;
    run_text(&text, &path.display().to_string(), opts)
}

#[derive(Serialize)]
struct BranchEntry<'a> {
    label: &'a str,
    probability: f64,
    /// `Re⟨ψ_l(T), ψ(T)⟩`, the second route to the probability.
    overlap: [f64; 2],
}

#[derive(Serialize)]
struct HorizonEntry<'a> {
    horizon: f64,
    branches: Vec<BranchEntry<'a>>,
    probability_sum: f64,
    /// `Σ_l p_l − 1`, reported rather than renormalized.
    residual: f64,
    dropped_mass: f64,
}

#[derive(Serialize)]
struct MatchedSeries<'a> {
    track: usize,
    labels: &'a [Option<String>],
    probabilities: &'a [Option<f64>],
}

#[derive(Serialize)]
struct BranchesDoc<'a> {
    schema_version: u32,
    model: &'a str,
    decomposition: DecompositionKind,
    horizons: Vec<HorizonEntry<'a>>,
    matched_series: Vec<MatchedSeries<'a>>,
    converged: bool,
}

#[derive(Serialize)]
struct ConvergenceDoc<'a> {
    schema_version: u32,
    #[serde(flatten)]
    report: &'a HorizonReport,
}

#[derive(Serialize)]
struct RealizedDoc<'a> {
    schema_version: u32,
    seed: u64,
    horizon: f64,
    label: &'a str,
    probability: f64,
    /// Sum of the sampled weights before renormalization.
    probability_sum: f64,
    trajectory_file: String,
    times: &'a [f64],
    /// Trace distance from the real state to the nearest `H_A` basis state.
    pointer_distance: Vec<f64>,
}

pub fn realstate_file_name(label: &str) -> String {
    let safe: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("realstate_{safe}.csv")
}

/// Shortest round-trip decimal, switching to exponent form for very large
/// or very small magnitudes.
fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// CSV with columns `t, ρ_re_0_0, ρ_im_0_0, ρ_re_0_1, …` (row-major, LF).
pub fn realstate_csv(traj: &RealStateTrajectory) -> String {
    let d = traj.states.first().map_or(0, |r| r.dim());
    let mut out = String::from("t");
    for i in 0..d {
        for j in 0..d {
            let _ = write!(out, ",ρ_re_{i}_{j},ρ_im_{i}_{j}");
        }
    }
    out.push('\n');
    for (t, rho) in traj.times.iter().zip(&traj.states) {
        out.push_str(&fmt_f64(*t));
        let m = rho.matrix();
        for i in 0..d {
            for j in 0..d {
                let z = m[(i, j)];
                let _ = write!(out, ",{},{}", fmt_f64(z.re), fmt_f64(z.im));
            }
        }
        out.push('\n');
    }
    out
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    files.push(path);
    Ok(())
}

/// Everything computed for a run, before anything is written.
pub struct Computed {
    pub validated: Validated,
    pub data: Vec<HorizonData>,
    pub report: HorizonReport,
    pub seed: Option<u64>,
}

pub fn compute(validated: Validated, seed: Option<u64>) -> Result<Computed, RunError> {
    let cfg = &validated.config;
    let system = validated
        .model
        .system_with(validated.decomposition.clone(), cfg.tolerances)
        .map_err(numeric("setup"))?
        .with_exec(cfg.execution);
    let data = evaluate_horizons(&system, &cfg.horizons, &cfg.times).map_err(numeric("horizon_sweep"))?;
    let settings = SweepSettings::from(&cfg.tolerances);
    let report = assemble_report(&system, &cfg.horizons, &cfg.times, settings, &data)
        .map_err(numeric("match_branches"))?;
    Ok(Computed {
        seed: seed.or(cfg.seed),
        validated,
        data,
        report,
    })
}

pub fn run_text(text: &str, source_name: &str, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let validated = config::parse_and_validate(text, source_name)?;
    let out_dir = opts
        .out
        .clone()
        .or_else(|| validated.config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let computed = compute(validated, opts.seed)?;
    write_outputs(&computed, &out_dir, text)
}

pub fn write_outputs(c: &Computed, out_dir: &Path, config_text: &str) -> Result<RunSummary, RunError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let cfg = &c.validated.config;
    let mut files = Vec::new();
    let mut log = String::new();
    let _ = writeln!(log, "branchsim {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(log, "schema_version {SCHEMA_VERSION}");
    let _ = writeln!(
        log,
        "started_unix {}",
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    );
    let _ = writeln!(log, "execution {:?} (parallel active: {})", cfg.execution, cfg.execution.is_parallel());
    let _ = writeln!(log, "--- config ---\n{}", config_text.trim_end());
    let _ = writeln!(log, "--- resolved ---\n{}", serde_json::to_string(cfg).expect("serializable"));

    let branches_doc = BranchesDoc {
        schema_version: SCHEMA_VERSION,
        model: &c.validated.model.name,
        decomposition: c.report.decomposition,
        horizons: c
            .data
            .iter()
            .map(|d| HorizonEntry {
                horizon: d.branches.horizon,
                branches: d
                    .branches
                    .branches
                    .iter()
                    .map(|b| BranchEntry {
                        label: &b.label,
                        probability: b.probability,
                        overlap: [b.overlap.re, b.overlap.im],
                    })
                    .collect(),
                probability_sum: d.branches.probability_sum,
                residual: d.branches.probability_sum - 1.0,
                dropped_mass: d.branches.dropped_mass,
            })
            .collect(),
        matched_series: c
            .report
            .tracks
            .iter()
            .map(|t| MatchedSeries {
                track: t.id,
                labels: &t.labels,
                probabilities: &t.probabilities,
            })
            .collect(),
        converged: c.report.converged,
    };
    write_file(out_dir, BRANCHES_FILE, &to_json(&branches_doc), &mut files)?;

    let last = c.data.last().expect("at least one horizon");
    for traj in &last.trajectories {
        write_file(out_dir, &realstate_file_name(&traj.branch), &realstate_csv(traj), &mut files)?;
    }

    let conv = ConvergenceDoc {
        schema_version: SCHEMA_VERSION,
        report: &c.report,
    };
    write_file(out_dir, CONVERGENCE_FILE, &to_json(&conv), &mut files)?;

    let mut realized = None;
    if let Some(seed) = c.seed {
        let sampler = BranchSampler::new(&last.branches.branches, cfg.tolerances.eps_branch)
            .map_err(numeric("sample_branch"))?;
        let idx = sampler.sample_index(&mut sampling_rng(seed));
        let branch = &last.branches.branches[idx];
        let _ = writeln!(
            log,
            "sampling: renormalized branch weights (sum before = {})",
            sampler.probability_sum()
        );
        let traj = last
            .trajectories
            .iter()
            .find(|t| t.branch == branch.label)
            .expect("one trajectory per branch");
        let pointer_distance =
            pointer_distances(traj, cfg.tolerances.hermitian).map_err(numeric("pointer_distances"))?;
        let doc = RealizedDoc {
            schema_version: SCHEMA_VERSION,
            seed,
            horizon: last.branches.horizon,
            label: &branch.label,
            probability: branch.probability,
            probability_sum: sampler.probability_sum(),
            trajectory_file: realstate_file_name(&branch.label),
            times: &traj.times,
            pointer_distance,
        };
        write_file(out_dir, REALIZED_FILE, &to_json(&doc), &mut files)?;
        realized = Some(branch.label.clone());
    }

    let _ = writeln!(log, "converged {} ({:?})", c.report.converged, c.report.status);
    write_file(out_dir, LOG_FILE, &log, &mut files)?;

    Ok(RunSummary {
        output_dir: out_dir.to_path_buf(),
        files,
        converged: c.report.converged,
        realized,
        branch_count: last.branches.branches.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use branchsim::linalg::DensityMatrix;

    #[test]
    fn csv_layout() {
        let traj = RealStateTrajectory {
            branch: "1".into(),
            horizon: 2.0,
            times: vec![0.0, 1.5],
            states: vec![
                DensityMatrix::diagonal(&[1.0, 0.0]).unwrap(),
                DensityMatrix::diagonal(&[0.25, 0.75]).unwrap(),
            ],
        };
        let csv = realstate_csv(&traj);
        let lines: Vec<&str> = csv.split('\n').collect();
        assert_eq!(
            lines[0],
            "t,ρ_re_0_0,ρ_im_0_0,ρ_re_0_1,ρ_im_0_1,ρ_re_1_0,ρ_im_1_0,ρ_re_1_1,ρ_im_1_1"
        );
        assert_eq!(lines[1], "0,1,0,0,0,0,0,0,0");
        assert_eq!(lines[2], "1.5,0.25,0,0,0,0,0,0.75,0");
        assert_eq!(lines[3], "");
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn small_values_use_exponent() {
        assert_eq!(fmt_f64(1e-20), "1e-20");
        assert_eq!(fmt_f64(-0.3), "-0.3");
    }

    #[test]
    fn file_names_are_sanitized() {
        assert_eq!(realstate_file_name("011"), "realstate_011.csv");
        assert_eq!(realstate_file_name("a/b"), "realstate_a_b.csv");
    }
}
