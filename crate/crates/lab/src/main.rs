use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use degroot_lab::audit_cli::{audit_trajectory, AuditParams};
use degroot_lab::io::{read_result, write_result, TrajectoryFile};
use degroot_lab::plots::emit_plots;
use degroot_lab::{run_scenario, validate_text, ExperimentConfig, LabError, ScenarioResult};

#[derive(Parser)]
#[command(name = "degroot-lab", version, about = "Run and audit opinion-dynamics experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Audit a recorded trajectory (CSV or binary).
    Audit {
        trajectory: PathBuf,
        #[arg(long)]
        params: PathBuf,
    },
    /// Re-render plots from a result.json.
    Plot {
        result: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn verdict(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn summarize(result: &ScenarioResult) {
    for check in &result.checks {
        println!(
            "{} {} = {:.6e} {} {:.6e}",
            if check.pass { "ok  " } else { "FAIL" },
            check.name,
            check.value,
            check.relation,
            check.limit
        );
    }
    for audit in &result.audits {
        let r = &audit.report;
        println!(
            "{} {} ({} checks, worst violation {:.3e})",
            if r.pass { "ok  " } else { "FAIL" },
            audit.name,
            r.checks,
            r.worst_violation
        );
    }
    println!("{}: {}", result.scenario, if result.pass { "PASS" } else { "FAIL" });
}

fn run(config: &Path, out: Option<PathBuf>, plots: bool) -> anyhow::Result<bool> {
    let cfg = ExperimentConfig::load(config)?;
    let dir = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-{}", cfg.scenario, cfg.seed)));
    let result = run_scenario(&cfg)?;
    let mut written = write_result(&result, &dir)?;
    if plots {
        written.extend(emit_plots(&result, &dir)?);
    }
    summarize(&result);
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(result.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = std::env::var("DEGROOT_LAB_WORKERS").ok().and_then(|w| w.parse().ok()) {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    let outcome = match cli.command {
        Command::Run { config, out, no_plots } => run(&config, out, !no_plots),
        Command::Validate { config } => std::fs::read_to_string(&config)
            .with_context(|| format!("reading {}", config.display()))
            .map(|text| {
                let diagnostics = validate_text(&text);
                for d in &diagnostics {
                    println!("{}: {}", d.field, d.message);
                }
                if diagnostics.is_empty() {
                    println!("ok");
                }
                diagnostics.is_empty()
            }),
        Command::Audit { trajectory, params } => (|| {
            let traj = TrajectoryFile::load(&trajectory)?;
            let report = audit_trajectory(&traj, &AuditParams::load(&params)?)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
            Ok::<_, LabError>(report.pass)
        })()
        .map_err(Into::into),
        Command::Plot { result, out } => (|| {
            let res = read_result(&result)?;
            let dir = out.unwrap_or_else(|| result.parent().unwrap_or(Path::new(".")).to_path_buf());
            for path in emit_plots(&res, &dir)? {
                println!("wrote {}", path.display());
            }
            Ok::<_, LabError>(true)
        })()
        .map_err(Into::into),
    };
    match outcome {
        Ok(pass) => verdict(pass),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
