use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fhn_waves_cli::compare::{compare_report, estimates_from_summary, Tolerances};
use fhn_waves_cli::config::{Config, SCHEMA_VERSION};
use fhn_waves_cli::output::{resolve_dir, sha256_hex, RunDir};
use fhn_waves_cli::scenarios::run_scenario;
use fhn_waves_cli::{CliError, OUTPUT_ROOT_ENV};
use serde_json::json;

#[derive(Parser)]
#[command(name = "fhn-waves", version, about = "Wave-train stability experiments for FitzHugh-Nagumo type systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a JSON config.
    Run { config: PathBuf },
    /// Check a config without running it; prints the effective config.
    Validate { config: PathBuf },
    /// Compare diffusivity estimates from scenario summary files.
    Compare {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.10)]
        tol_bloch_analytic: f64,
        #[arg(long, default_value_t = 0.25)]
        tol_dns_bloch: f64,
        #[arg(long, default_value_t = 0.25)]
        tol_dns_analytic: f64,
    },
}

fn read_config(path: &Path) -> anyhow::Result<(String, Config)> {
    let text = fs::read_to_string(path).map_err(CliError::Io).with_context(|| format!("reading {}", path.display()))?;
    let cfg = Config::parse(&text)?;
    Ok((text, cfg))
}

fn run(path: &Path) -> anyhow::Result<()> {
    let (text, cfg) = read_config(path)?;
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    let dir = resolve_dir(&root, cfg.output_dir.as_deref().unwrap_or(Path::new(cfg.scenario.name())));
    let mut out = RunDir::create(&dir)?;
    let start = Instant::now();
    let result = run_scenario(&cfg, &mut out);
    let wall = start.elapsed().as_secs_f64();
    let mut manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "scenario": cfg.scenario.name(),
        "config_sha256": sha256_hex(text.as_bytes()),
        "raw_config": serde_json::from_str::<serde_json::Value>(&text)?,
        "effective_config": cfg.effective(),
        "seed": cfg.seed,
        "wall_time_s": wall,
    });
    match result {
        Ok(summary) => {
            manifest["status"] = json!("ok");
            manifest["summary"] = summary;
            manifest["files"] = serde_json::to_value(&out.files)?;
            out.write_json("manifest.json", &manifest)?;
            println!("{}", dir.display());
            Ok(())
        }
        Err(e) => {
            manifest["status"] = json!("error");
            manifest["error"] = e.record();
            manifest["files"] = serde_json::to_value(&out.files)?;
            out.write_json("manifest.json", &manifest)?;
            Err(e.into())
        }
    }
}

fn validate(path: &Path) -> anyhow::Result<()> {
    let (_, cfg) = read_config(path)?;
    println!("{}", serde_json::to_string_pretty(&cfg.effective())?);
    Ok(())
}

fn compare(files: &[PathBuf], tol: Tolerances) -> anyhow::Result<()> {
    let mut estimates = Vec::new();
    for f in files {
        let text = fs::read_to_string(f).map_err(CliError::Io).with_context(|| format!("reading {}", f.display()))?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", f.display())))?;
        // accept manifests as well as bare summaries
        estimates.extend(estimates_from_summary(v.get("summary").unwrap_or(&v))?);
    }
    let report = compare_report(&estimates, &tol)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(config),
        Command::Validate { config } => validate(config),
        Command::Compare { files, tol_bloch_analytic, tol_dns_bloch, tol_dns_analytic } => compare(
            files,
            Tolerances { bloch_analytic: *tol_bloch_analytic, dns_bloch: *tol_dns_bloch, dns_analytic: *tol_dns_analytic },
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = match e.downcast_ref::<CliError>() {
                Some(ce) => ce.record(),
                None => json!({ "error": "runtime", "exit_code": 2, "message": format!("{e:#}") }),
            };
            eprintln!("{record}");
            let code = record["exit_code"].as_u64().unwrap_or(2) as u8;
            ExitCode::from(code)
        }
    }
}
