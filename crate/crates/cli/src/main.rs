//! `kredux verify|reduce|flow|lift|residual|golden [--config FILE] [--out DIR] [key=value ...]`
//!
//! Exit codes: 0 pass, 2 identity failure, 3 input error, 4 numerical breakdown.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use kredux_cli::commands::{self, Failure, EXIT_INPUT};
use kredux_cli::config::RunConfig;
use kredux::KreduxError;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Verify,
    Reduce,
    Flow,
    Lift,
    Residual,
    Golden,
}

#[derive(Debug, Parser)]
#[command(name = "kredux", version, about = "Kähler reduction laboratory")]
struct Cli {
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides as `key=value` or `--key value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

/// Split `key=value` and `--key value` tokens into pairs.
fn override_pairs(tokens: &[String]) -> kredux::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let (key, value) = match tok.strip_prefix("--") {
            Some(flag) => match flag.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| KreduxError::Parse(format!("flag --{flag} needs a value")))?;
                    (flag.to_string(), v.clone())
                }
            },
            None => tok
                .split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| KreduxError::Parse(format!("expected key=value, got `{tok}`")))?,
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

fn resolve(cli: &Cli) -> kredux::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| KreduxError::Io(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for (k, v) in override_pairs(&cli.overrides)? {
        cfg.set(&k, &v)?;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> kredux::Result<()> {
    if let Ok(v) = std::env::var("KREDUX_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| KreduxError::Parse(format!("KREDUX_THREADS must be a count, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| KreduxError::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    configure_threads()?;
    let mut cfg = resolve(cli)?;
    match cli.command {
        Command::Verify => commands::verify(&cfg),
        Command::Reduce => commands::reduce(&cfg),
        Command::Flow => commands::flow(&cfg),
        Command::Lift => commands::lift(&cfg),
        Command::Residual => commands::residual(&cfg),
        Command::Golden => commands::golden(&mut cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Identity(msg) => eprintln!("identity failed: {msg}"),
                Failure::Breakdown(msg) => eprintln!("numerical breakdown: {msg}"),
                Failure::Error(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
