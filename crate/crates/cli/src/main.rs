mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Value};

use commands::{dispatch, Artifacts, Command, Failure};
use config::{parse_config_with, Issue, Overrides};

const EXIT_PASS: u8 = 0;
const EXIT_ASSERTION: u8 = 2;
const EXIT_GUARD: u8 = 3;
const EXIT_CONFIG: u8 = 4;

/// Experiments on multi-proposer transaction fee mechanisms.
#[derive(Debug, Parser)]
#[command(name = "tfmlab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scenario file (JSON). Optional for paper-suite.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `sampling.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `sampling.samples`.
    #[arg(long)]
    samples: Option<usize>,
    /// Output directory; defaults to `output.dir`, then `out`.
    #[arg(long)]
    out: Option<String>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

fn default_document(cmd: Command) -> Option<String> {
    (cmd == Command::PaperSuite).then(|| {
        json!({
            "game": { "users": 1, "bps": 1, "block_size": 1 },
            "tfm": "fpa-eq",
            "sampling": { "seed": tfmlab::scenarios::SUITE_SEED },
        })
        .to_string()
    })
}

fn config_failure(issues: &[Issue]) -> ExitCode {
    let body = json!({
        "status": "config_error",
        "issues": issues.iter().map(|i| json!({ "path": i.path, "message": i.message })).collect::<Vec<_>>(),
    });
    eprintln!("{body}");
    ExitCode::from(EXIT_CONFIG)
}

fn write_outputs(dir: &Path, summary: &Value, art: Option<&Artifacts>) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    std::fs::write(dir.join("summary.json"), text)?;
    let mut w = csv::Writer::from_path(dir.join("detail.csv"))?;
    match art {
        Some(a) => {
            w.write_record(&a.header)?;
            for r in &a.rows {
                w.write_record(r)?;
            }
        }
        None => w.write_record(["reason"])?,
    }
    w.flush()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("cannot start {t} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                return config_failure(&[Issue {
                    path: "$".into(),
                    message: format!("cannot read {}: {e}", path.display()),
                }])
            }
        },
        None => match default_document(cli.command) {
            Some(t) => t,
            None => {
                return config_failure(&[Issue {
                    path: "$".into(),
                    message: format!("{} needs --config", cli.command.name()),
                }])
            }
        },
    };
    let overrides = Overrides {
        seed: cli.seed,
        samples: cli.samples,
        out: cli.out.clone(),
    };
    let cfg = match parse_config_with(&text, &overrides) {
        Ok(c) => c,
        Err(issues) => return config_failure(&issues),
    };
    let dir = PathBuf::from(cfg.out_dir.clone().unwrap_or_else(|| "out".into()));
    let mut summary = json!({
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash,
        "seed": cfg.sampling.seed,
    });
    let (code, art) = match dispatch(cli.command, &cfg) {
        Ok(art) => {
            let code = if art.pass { EXIT_PASS } else { EXIT_ASSERTION };
            summary["status"] = json!(if art.pass { "pass" } else { "fail" });
            summary["result"] = art.result.clone();
            (code, Some(art))
        }
        Err(Failure::Config(issues)) => return config_failure(&issues),
        Err(Failure::Guard(reason)) => {
            eprintln!("{}", json!({ "status": "refused", "reason": reason }));
            summary["status"] = json!("refused");
            summary["result"] = json!({ "reason": reason });
            (EXIT_GUARD, None)
        }
    };
    summary["exit_code"] = json!(code);
    if let Err(e) = write_outputs(&dir, &summary, art.as_ref()) {
        eprintln!("cannot write {}: {e}", dir.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    println!("{}: {}", cli.command.name(), summary["status"].as_str().unwrap_or("?"));
    ExitCode::from(code)
}
