use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use adaptlab::experiments::runner::{probe_table, BatchOutcome};
use adaptlab::experiments::{compare, plot, probe_vd, run, sweep, LawSpec, ScenarioConfig, SweepParam};
use adaptlab::simulation::Termination;
use adaptlab::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NON_FINITE: u8 = 3;

#[derive(Parser)]
#[command(name = "adaptlab", version, about = "Adaptive-control experiments: run, sweep, compare, probe, plot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write CSV, config echo and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-run a scenario for each value of r, gamma or lambda.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-run a scenario with different estimation laws (`law` or `law:r`).
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        laws: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Numerical vanishing-degree verdict for each r.
    ProbeVd {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "r-list", value_delimiter = ',', required = true)]
        r_list: Vec<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Line plot of CSV columns against t. `--out` may name the SVG file or a directory.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        #[arg(long)]
        log_y: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn out_dir(flag: &Path) -> PathBuf {
    match std::env::var_os("ADAPTLAB_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.to_path_buf(),
    }
}

fn fail(e: &Error) -> ExitCode {
    let (kind, field) = match e {
        Error::Validation { field, .. } => ("validation", Some(field.clone())),
        Error::Parse(_) => ("parse", None),
        Error::Dimension { what, .. } => ("dimension", Some(what.to_string())),
        Error::Io(_) => ("io", None),
        e if e.is_numeric_failure() => ("non_finite", None),
        _ => ("error", None),
    };
    let mut body = json!({ "error": kind, "message": e.to_string() });
    if let Some(f) = field {
        body["field"] = json!(f);
    }
    eprintln!("{body}");
    let code = match kind {
        "validation" | "parse" | "dimension" => EXIT_VALIDATION,
        "non_finite" => EXIT_NON_FINITE,
        _ => match e {
            Error::Io(_) => 1,
            _ => EXIT_VALIDATION,
        },
    };
    ExitCode::from(code)
}

fn report_batch(outcome: &BatchOutcome) -> ExitCode {
    for m in &outcome.members {
        match &m.result {
            Ok(a) => println!(
                "{}: {} (convergence_time = {})",
                m.label,
                a.summary.terminated.as_str(),
                a.summary.convergence_time.map_or("none".into(), |t| format!("{t}"))
            ),
            Err(e) => {
                println!("{}: error", m.label);
                eprintln!("{}", json!({ "error": "member", "member": m.label, "message": e }));
            }
        }
    }
    println!("{}", outcome.comparison_path.display());
    if outcome.any_non_finite() {
        ExitCode::from(EXIT_NON_FINITE)
    } else {
        ExitCode::SUCCESS
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Error> {
    ScenarioConfig::from_path(path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => load(&config).and_then(|cfg| run(&cfg, &out_dir(&out))).map(|a| {
            println!("{}", serde_json::to_string_pretty(&a.summary).expect("summary serializes"));
            if a.summary.terminated == Termination::NonFinite {
                eprintln!(
                    "{}",
                    json!({ "error": "non_finite", "message": a.summary.failure.clone().unwrap_or_default() })
                );
                ExitCode::from(EXIT_NON_FINITE)
            } else {
                ExitCode::SUCCESS
            }
        }),
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => SweepParam::parse(&param)
            .and_then(|p| load(&config).map(|cfg| (p, cfg)))
            .and_then(|(p, cfg)| sweep(&cfg, p, &values, &out_dir(&out)))
            .map(|o| report_batch(&o)),
        Command::Compare { config, laws, out } => laws
            .iter()
            .map(|l| LawSpec::parse(l))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|specs| load(&config).map(|cfg| (specs, cfg)))
            .and_then(|(specs, cfg)| compare(&cfg, &specs, &out_dir(&out)))
            .map(|o| report_batch(&o)),
        Command::ProbeVd { config, r_list, out } => load(&config)
            .and_then(|cfg| probe_vd(&cfg, &r_list).map(|v| (cfg, v)))
            .and_then(|(cfg, verdicts)| {
                let table = probe_table(&verdicts);
                let dir = out_dir(&out);
                std::fs::create_dir_all(&dir).map_err(Error::from)?;
                std::fs::write(dir.join(format!("{}_probe_vd.csv", cfg.name)), &table).map_err(Error::from)?;
                print!("{table}");
                Ok(ExitCode::SUCCESS)
            }),
        Command::Plot {
            csv,
            columns,
            log_y,
            out,
        } => {
            let target = out_dir(&out);
            let svg = if target.extension().is_some_and(|e| e == "svg") {
                target
            } else {
                target.join("plot.svg")
            };
            plot(&csv, &columns, &svg, log_y).map(|_| {
                println!("{}", svg.display());
                ExitCode::SUCCESS
            })
        }
    };
    result.unwrap_or_else(|e| fail(&e))
}
