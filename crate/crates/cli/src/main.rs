use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use restmask_core::orchestrator::backend_for;
use restmask_core::reporting::parse_log;
use restmask_core::transport::{HttpSender, UreqSender};
use restmask_core::{load_config, render_status_summary, run_many, validate_openapi, GroundTruth, RunOptions};

#[derive(Parser)]
#[command(name = "restmask", version, about = "Infer OpenAPI documents for REST APIs by mutating requests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore every API in a config file and write their documents.
    Infer {
        #[arg(long)]
        config: PathBuf,
        /// Answer model prompts from a scripted fixture instead of a live endpoint.
        #[arg(long)]
        llm_fixture: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// JSON `{"routes": [...], "parameters": [...]}`; the run stops once all are found.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_iterations: Option<u32>,
    },
    /// Check an OpenAPI document (JSON or YAML).
    Validate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Summarize a request log.
    Report {
        #[arg(long)]
        log: PathBuf,
    },
}

fn infer(
    config: &Path,
    fixture: Option<&Path>,
    out: PathBuf,
    ground_truth: Option<&Path>,
    seed: u64,
    max_iterations: Option<u32>,
) -> anyhow::Result<bool> {
    let configs = load_config(config).with_context(|| format!("loading {}", config.display()))?;
    let ground_truth = ground_truth
        .map(GroundTruth::load)
        .transpose()
        .context("loading ground truth")?;
    let options = RunOptions {
        seed,
        out_dir: Some(out),
        ground_truth,
        max_iterations,
    };
    let results = run_many(&configs, &options, |c| {
        let sender: Box<dyn HttpSender> = Box::new(UreqSender::new());
        Ok((backend_for(c, fixture)?, sender))
    });
    let mut ok = true;
    for (config, result) in configs.iter().zip(results) {
        match result {
            Ok(outcome) => {
                let r = &outcome.report;
                println!(
                    "{}: {} routes, {} params, {} requests, {} server errors, {} iterations -> {}",
                    r.api_name,
                    r.routes_found,
                    r.params_found,
                    r.requests_sent,
                    r.server_errors.len(),
                    r.iterations.len(),
                    outcome.output_dir.as_deref().map(|d| d.display().to_string()).unwrap_or_default()
                );
            }
            Err(e) => {
                ok = false;
                eprintln!("{}: {e}", config.api_name);
            }
        }
    }
    Ok(ok)
}

fn validate(spec: &Path) -> anyhow::Result<bool> {
    let text = std::fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let value: serde_json::Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(_) => serde_yaml::from_str(&text).context("neither JSON nor YAML")?,
    };
    if !value.is_object() {
        bail!("{}: top level is not an object", spec.display());
    }
    let issues = validate_openapi(&value);
    for issue in &issues {
        println!("{issue}");
    }
    if issues.is_empty() {
        println!("{}: ok", spec.display());
    }
    Ok(issues.is_empty())
}

fn report(log: &Path) -> anyhow::Result<bool> {
    print!("{}", render_status_summary(log)?);
    let text = std::fs::read_to_string(log)?;
    let errors: Vec<_> = parse_log(&text)?
        .into_iter()
        .filter(|e| e.status.is_some_and(|s| (500..600).contains(&s)))
        .collect();
    if !errors.is_empty() {
        println!("\nserver errors:");
        for e in errors {
            println!("  {} {} {} -> {}", e.timestamp, e.method, e.url, e.status.unwrap_or_default());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Infer {
            config,
            llm_fixture,
            out,
            ground_truth,
            seed,
            max_iterations,
        } => infer(&config, llm_fixture.as_deref(), out, ground_truth.as_deref(), seed, max_iterations),
        Command::Validate { spec } => validate(&spec),
        Command::Report { log } => report(&log),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
