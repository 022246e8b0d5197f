use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcr::{PcrError, PipelineConfig, Stage};

#[derive(Parser)]
#[command(name = "pcr", version, about = "Tag and triage code review requests")]
struct Cli {
    #[command(subcommand)]
    stage: Command,
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log one JSON object per line.
    #[arg(long, global = true)]
    json_logs: bool,
    #[arg(long, global = true)]
    dump: Option<PathBuf>,
    #[arg(long, global = true)]
    knowledge: Option<PathBuf>,
    /// Sets corpus, checkpoint and report directories together.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Any configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Stream the XML dump into cleaned posts.
    Ingest,
    /// Label necessity, drop rare tags and split folds.
    Preprocess,
    /// Build code dependence graphs.
    Graph,
    /// Train the built-in model on one fold.
    Train,
    /// Predict tags and necessity.
    Predict,
    /// Score predictions against the gold labels.
    Evaluate,
    /// Run every stage in order.
    All,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Stage {
        match c {
            Command::Ingest => Stage::Ingest,
            Command::Preprocess => Stage::Preprocess,
            Command::Graph => Stage::Graph,
            Command::Train => Stage::Train,
            Command::Predict => Stage::Predict,
            Command::Evaluate => Stage::Evaluate,
            Command::All => Stage::All,
        }
    }
}

fn flag_pairs(cli: &Cli) -> Result<Vec<(String, String)>, PcrError> {
    let mut pairs = Vec::new();
    let path = |p: &PathBuf| p.display().to_string();
    if let Some(p) = &cli.dump {
        pairs.push(("dump".into(), path(p)));
    }
    if let Some(p) = &cli.knowledge {
        pairs.push(("knowledge".into(), path(p)));
    }
    if let Some(p) = &cli.out_dir {
        pairs.push(("out_dir".into(), path(p)));
    }
    if let Some(s) = cli.seed {
        pairs.push(("seed".into(), s.to_string()));
    }
    if let Some(j) = cli.jobs {
        pairs.push(("jobs".into(), j.to_string()));
    }
    if cli.json_logs {
        pairs.push(("json_logs".into(), "true".into()));
    }
    for s in &cli.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| PcrError::config(s.as_str(), "expected key=value"))?;
        pairs.push((k.trim().into(), v.trim().into()));
    }
    Ok(pairs)
}

fn init_logging(json: bool) {
    let mut b = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if json {
        b.format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().to_string(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    b.init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let resolved = flag_pairs(&cli).and_then(|flags| {
        PipelineConfig::resolve(cli.config.as_deref(), PipelineConfig::env_pairs(std::env::vars()), flags)
    });
    let (cfg, layered) = match resolved {
        Ok(r) => r,
        Err(e) => {
            eprintln!("pcr: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let json = layered
        .get("json_logs")
        .is_some_and(|v| matches!(v.to_ascii_lowercase().as_str(), "1" | "true" | "yes" | "on"));
    init_logging(json);
    if let Some(jobs) = layered.get("jobs") {
        match jobs.parse::<usize>() {
            Ok(n) => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("thread pool: {e}");
                }
            }
            Err(e) => {
                eprintln!("pcr: {}", PcrError::config("jobs", e.to_string()));
                return ExitCode::from(3);
            }
        }
    }
    match pcr::run(cli.stage.into(), &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::error!("{f}");
            eprintln!("pcr: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
