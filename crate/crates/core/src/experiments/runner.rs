//! Batch entry points behind the CLI: single runs, parameter sweeps, law
//! comparisons, vanishing-degree tables and plots.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{probe_scenario, LawKind, ScenarioConfig};
use super::csv::{format_value, trajectory_header, write_trajectory, CsvTable};
use super::svg::{render, Series};
use crate::clf::VanishingDegreeVerdict;
use crate::error::{Error, Result};
use crate::metrics::{convergence_time, monotonicity_report, q_tolerance, r_root_integral};
use crate::simulation::{simulate, Scenario, Termination, Trajectory};

/// State-norm level used for the reported convergence time.
pub const CONVERGENCE_LEVEL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub terminated: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub final_time: f64,
    pub samples: usize,
    /// First time after which `||x|| < 1e-3` for the rest of the run.
    pub convergence_time: Option<f64>,
    /// Trapezoidal `int ||x||^(2/r) dt` with the scenario's `r`.
    pub r_root_integral: f64,
    pub tail_fraction: f64,
    pub max_q_violation: f64,
    pub q_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub config_echo: ScenarioConfig,
    pub csv_path: PathBuf,
    pub summary: RunSummary,
}

pub fn summarize(scenario: &Scenario, traj: &Trajectory) -> RunSummary {
    let norms = traj.state_norms();
    let root = r_root_integral(&traj.times, &norms, scenario.gains.r);
    let q = traj.q_values();
    let tol = q_tolerance(scenario.horizon.dt, q.first().copied().unwrap_or(0.0));
    RunSummary {
        name: scenario.name.clone(),
        terminated: traj.terminated,
        failure: traj.failure.clone(),
        final_time: traj.final_time(),
        samples: traj.len(),
        convergence_time: convergence_time(&traj.times, &norms, CONVERGENCE_LEVEL),
        r_root_integral: root.integral,
        tail_fraction: root.tail_fraction,
        max_q_violation: monotonicity_report(&q, tol).max_violation,
        q_tolerance: tol,
    }
}

pub fn csv_header(scenario: &Scenario) -> Vec<String> {
    trajectory_header(scenario.n(), scenario.p(), scenario.m(), scenario.law.uses_momentum())
}

/// Serialized trajectory exactly as `run` writes it.
pub fn trajectory_csv(scenario: &Scenario, traj: &Trajectory, stride: usize) -> Result<String> {
    let mut buf = Vec::new();
    write_trajectory(&mut buf, traj, &csv_header(scenario), stride)?;
    Ok(String::from_utf8(buf).expect("CSV is ASCII"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Builds, simulates and writes `<name>.csv`, `<name>.toml` (resolved config
/// echo) and `<name>.summary.json` into `out_dir`.
pub fn run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunArtifact> {
    let scenario = cfg.build()?;
    let traj = simulate(&scenario)?;
    ensure_dir(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", cfg.name));
    write_file(&csv_path, trajectory_csv(&scenario, &traj, cfg.horizon.output_stride)?.as_bytes())?;
    write_file(&out_dir.join(format!("{}.toml", cfg.name)), cfg.to_toml_string().as_bytes())?;
    let summary = summarize(&scenario, &traj);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&out_dir.join(format!("{}.summary.json", cfg.name)), format!("{json}\n").as_bytes())?;
    Ok(RunArtifact {
        config_echo: cfg.clone(),
        csv_path,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    R,
    Gamma,
    Lambda,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "r" => Ok(SweepParam::R),
            "gamma" => Ok(SweepParam::Gamma),
            "lambda" => Ok(SweepParam::Lambda),
            other => Err(Error::validation("param", format!("expected r, gamma or lambda, got `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::R => "r",
            SweepParam::Gamma => "gamma",
            SweepParam::Lambda => "lambda",
        }
    }

    /// Copy of `cfg` with the parameter set to `value`. `gamma` replaces the
    /// gain by `value * I`.
    pub fn apply(&self, cfg: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut out = cfg.clone();
        match self {
            SweepParam::R => out.estimator.r = value,
            SweepParam::Gamma => {
                out.estimator.gamma = Some(value);
                out.estimator.gamma_diag = None;
            }
            SweepParam::Lambda => out.clf.lambda = value,
        }
        out.name = format!("{}_{}{}", cfg.name, self.name(), value);
        out
    }
}

/// One member of a sweep or comparison; errors are kept per run.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberOutcome {
    pub label: String,
    pub result: std::result::Result<RunArtifact, String>,
    /// `V` at the probe times, `None` where the run had stopped short.
    pub probe_values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub members: Vec<MemberOutcome>,
    pub probe_times: Vec<f64>,
    pub comparison_path: PathBuf,
}

impl BatchOutcome {
    pub fn any_non_finite(&self) -> bool {
        self.members.iter().any(|m| match &m.result {
            Ok(a) => a.summary.terminated == Termination::NonFinite,
            Err(_) => false,
        })
    }
}

/// Quarter points of the horizon.
pub fn probe_times(t_final: f64) -> Vec<f64> {
    (1..=4).map(|k| t_final * k as f64 / 4.0).collect()
}

fn value_at(traj: &Trajectory, t: f64) -> Option<f64> {
    match traj.at(t) {
        Some(s) => Some(s.v),
        None if traj.terminated == Termination::Converged => Some(traj.last().v),
        None => None,
    }
}

fn run_member(cfg: &ScenarioConfig, out_dir: &Path, times: &[f64]) -> (std::result::Result<RunArtifact, String>, Vec<Option<f64>>) {
    let scenario = match cfg.build() {
        Ok(s) => s,
        Err(e) => return (Err(e.to_string()), vec![None; times.len()]),
    };
    let traj = match simulate(&scenario) {
        Ok(t) => t,
        Err(e) => return (Err(e.to_string()), vec![None; times.len()]),
    };
    let probes = times.iter().map(|&t| value_at(&traj, t)).collect();
    let written = (|| -> Result<RunArtifact> {
        let csv_path = out_dir.join(format!("{}.csv", cfg.name));
        write_file(&csv_path, trajectory_csv(&scenario, &traj, cfg.horizon.output_stride)?.as_bytes())?;
        write_file(&out_dir.join(format!("{}.toml", cfg.name)), cfg.to_toml_string().as_bytes())?;
        Ok(RunArtifact {
            config_echo: cfg.clone(),
            csv_path,
            summary: summarize(&scenario, &traj),
        })
    })();
    (written.map_err(|e| e.to_string()), probes)
}

fn opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

fn batch(
    members: Vec<(String, Vec<String>, ScenarioConfig)>,
    key_header: &[&str],
    out_dir: &Path,
    file_name: &str,
    t_final: f64,
) -> Result<BatchOutcome> {
    ensure_dir(out_dir)?;
    let times = probe_times(t_final);
    let results: Vec<_> = members
        .par_iter()
        .map(|(_, _, cfg)| run_member(cfg, out_dir, &times))
        .collect();

    let mut text = String::new();
    let mut header: Vec<String> = key_header.iter().map(|s| s.to_string()).collect();
    header.extend(["terminated".to_string(), "convergence_time".to_string()]);
    header.extend(times.iter().map(|t| format!("V@{t}")));
    header.push("error".into());
    text.push_str(&header.join(","));
    text.push('\n');

    let mut outcomes = Vec::with_capacity(members.len());
    for ((label, keys, _), (result, probes)) in members.into_iter().zip(results) {
        let mut row = keys.clone();
        match &result {
            Ok(a) => {
                row.push(a.summary.terminated.as_str().into());
                row.push(opt(a.summary.convergence_time));
                row.extend(probes.iter().map(|v| opt(*v)));
                row.push(String::new());
            }
            Err(e) => {
                row.push("error".into());
                row.push(String::new());
                row.extend(probes.iter().map(|_| String::new()));
                row.push(format!("\"{}\"", e.replace('"', "'")));
            }
        }
        text.push_str(&row.join(","));
        text.push('\n');
        outcomes.push(MemberOutcome {
            label,
            result,
            probe_values: probes,
        });
    }
    let comparison_path = out_dir.join(file_name);
    write_file(&comparison_path, text.as_bytes())?;
    Ok(BatchOutcome {
        members: outcomes,
        probe_times: times,
        comparison_path,
    })
}

/// One run per value, in parallel; writes `<name>_sweep_<param>.csv`.
pub fn sweep(cfg: &ScenarioConfig, param: SweepParam, values: &[f64], out_dir: &Path) -> Result<BatchOutcome> {
    if values.is_empty() {
        return Err(Error::validation("values", "at least one value is required"));
    }
    let members = values
        .iter()
        .map(|&v| (format!("{}={v}", param.name()), vec![format!("{v}")], param.apply(cfg, v)))
        .collect();
    let file = format!("{}_sweep_{}.csv", cfg.name, param.name());
    batch(members, &["value"], out_dir, &file, cfg.horizon.t_final)
}

/// `law` or `law:r`, e.g. `standard`, `scalar_normalized:8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawSpec {
    pub law: LawKind,
    pub r: Option<f64>,
}

impl LawSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, r) = match s.split_once(':') {
            Some((n, r)) => {
                let r = r
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::validation("laws", format!("bad r in `{s}`")))?;
                (n.trim(), Some(r))
            }
            None => (s.trim(), None),
        };
        Ok(LawSpec {
            law: LawKind::parse(name)?,
            r,
        })
    }

    pub fn label(&self) -> String {
        let name = match self.law {
            LawKind::Standard => "standard",
            LawKind::ScalarNormalized => "scalar_normalized",
            LawKind::Normalized => "normalized",
            LawKind::Momentum => "momentum",
            LawKind::Limiting => "limiting",
        };
        match self.r {
            Some(r) => format!("{name}_r{r}"),
            None => name.to_string(),
        }
    }

    /// Copy of `cfg` with the estimator swapped.
    pub fn apply(&self, cfg: &ScenarioConfig) -> ScenarioConfig {
        let mut out = cfg.clone();
        out.estimator.law = self.law;
        if let Some(r) = self.r {
            out.estimator.r = r;
        }
        if self.law != LawKind::Momentum {
            out.initial.a_hat = None;
        }
        if self.law == LawKind::Limiting && out.estimator.limiting_style.is_none() {
            out.estimator.limiting_style = Some(crate::estimators::LimitingStyle::Nonsmooth);
        }
        out.name = format!("{}_{}", cfg.name, self.label());
        out
    }
}

/// One run per law; writes `<name>_compare.csv`.
pub fn compare(cfg: &ScenarioConfig, laws: &[LawSpec], out_dir: &Path) -> Result<BatchOutcome> {
    if laws.is_empty() {
        return Err(Error::validation("laws", "at least one law is required"));
    }
    let members = laws
        .iter()
        .map(|l| {
            let r = l.r.unwrap_or(cfg.estimator.r);
            (l.label(), vec![l.label(), format!("{r}")], l.apply(cfg))
        })
        .collect();
    let file = format!("{}_compare.csv", cfg.name);
    batch(members, &["law", "r"], out_dir, &file, cfg.horizon.t_final)
}

/// Probe verdicts for each `r`, using the scenario's system and CLF.
pub fn probe_vd(cfg: &ScenarioConfig, r_list: &[f64]) -> Result<Vec<VanishingDegreeVerdict>> {
    if r_list.is_empty() {
        return Err(Error::validation("r-list", "at least one r is required"));
    }
    let mut probe_cfg = cfg.clone();
    probe_cfg.estimator.skip_vd_check = true;
    let scenario = probe_cfg.build()?;
    r_list.iter().map(|&r| probe_scenario(&scenario, r, cfg.seed)).collect()
}

pub fn probe_table(verdicts: &[VanishingDegreeVerdict]) -> String {
    let mut out = String::from("r,finite,sup_observed\n");
    for v in verdicts {
        out.push_str(&format!("{},{},{}\n", v.r_tested, v.finite, format_value(v.sup_observed)));
    }
    out
}

/// Plots `columns` against `t` from every CSV into one SVG.
pub fn plot(csv_paths: &[PathBuf], columns: &[String], out_svg: &Path, log_y: bool) -> Result<()> {
    if columns.is_empty() || columns.iter().any(|c| c.trim().is_empty()) {
        return Err(Error::validation("columns", "at least one column is required"));
    }
    if csv_paths.is_empty() {
        return Err(Error::validation("csv", "at least one CSV is required"));
    }
    let mut series = Vec::new();
    for path in csv_paths {
        let table = CsvTable::read(path)?;
        let t = table
            .column("t")
            .ok_or_else(|| Error::validation("columns", format!("{} has no `t` column", path.display())))?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for c in columns {
            let ys = table
                .column(c)
                .ok_or_else(|| Error::validation("columns", format!("{} has no column `{c}`", path.display())))?;
            let label = if csv_paths.len() == 1 {
                c.clone()
            } else if columns.len() == 1 {
                stem.clone()
            } else {
                format!("{stem}:{c}")
            };
            series.push(Series {
                label,
                xs: t.clone(),
                ys,
            });
        }
    }
    let svg = render(&series, &columns.join(", "), &columns.join(", "), log_y)?;
    if let Some(parent) = out_svg.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    write_file(out_svg, svg.as_bytes())
}
