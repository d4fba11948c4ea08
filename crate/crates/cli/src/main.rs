//! Command-line entry point for the gridworld transfer lab.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use dynemb::harness::{
    aggregate_runs, count_field, emit_heatmap, ir_field, read_run_snapshot, run_exploration_study,
    run_transfer_suite, ExperimentConfig, HarnessError,
};

const USAGE: &str = "\
usage: dynemb <command> [args]

commands:
  run <config>                    run the transfer suite described by <config>
  explore <config>                run the exploration study (base vs +ir pairs)
  aggregate <dir> [--window N]    summarize metrics CSVs into <dir>/summary.csv
  heatmap <snapshot> <out.pgm> [--field ir|counts]
                                  render a field from a run snapshot

The config file is `key = value` text; run any suite once to get a
resolved.cfg listing every key and its default. Set DYNEMB_OUT_ROOT to
re-root relative output directories.";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("{msg}");
            eprintln!();
            eprintln!("{USAGE}");
            ExitCode::from(1)
        }
        Err(CliError::Config(err)) => {
            eprintln!("config error: {err}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

enum CliError {
    Usage(String),
    Config(HarnessError),
    Runtime(HarnessError),
}

impl From<HarnessError> for CliError {
    fn from(err: HarnessError) -> CliError {
        match err {
            HarnessError::Config(_) | HarnessError::UnpairedAgent(_) => CliError::Config(err),
            other => CliError::Runtime(other),
        }
    }
}

fn dispatch(args: &[String]) -> Result<(), CliError> {
    let Some(command) = args.first() else {
        return Err(CliError::Usage("missing command".into()));
    };
    match command.as_str() {
        "run" => {
            let config = expect_path(args.get(1), "run needs a config path")?;
            let cfg = parse_config(&config)?;
            let files = run_transfer_suite(&cfg)?;
            println!(
                "wrote {} metrics files under {}",
                files.len(),
                cfg.out_dir.display()
            );
            Ok(())
        }
        "explore" => {
            let config = expect_path(args.get(1), "explore needs a config path")?;
            let cfg = parse_config(&config)?;
            let artifacts = run_exploration_study(&cfg)?;
            for art in &artifacts {
                let covered = art.visits.iter().filter(|&&v| v > 0).count();
                println!(
                    "{} seed {}: {} unique states, visit map {}",
                    art.agent,
                    art.seed,
                    covered,
                    art.visits_map.display()
                );
            }
            Ok(())
        }
        "aggregate" => {
            let dir = expect_path(args.get(1), "aggregate needs a directory")?;
            let window = match flag_value(args, "--window") {
                Some(v) => v
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad --window value {v:?}")))?,
                None => 20,
            };
            let out = aggregate_runs(&dir, window).map_err(HarnessError::from)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        "heatmap" => {
            let snapshot = expect_path(args.get(1), "heatmap needs a snapshot path")?;
            let out = expect_path(args.get(2), "heatmap needs an output path")?;
            let field_kind = flag_value(args, "--field").unwrap_or_else(|| "ir".into());
            render_heatmap(&snapshot, &out, &field_kind)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(CliError::Usage(format!("unknown command {other:?}"))),
    }
}

fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::parse_file(path).map_err(|e| CliError::Config(HarnessError::Config(e)))
}

fn render_heatmap(snapshot: &Path, out: &Path, field_kind: &str) -> Result<(), CliError> {
    let (env, records) = read_run_snapshot(snapshot).map_err(HarnessError::from)?;
    let field = match field_kind {
        "ir" => ir_field(&env, &records),
        "counts" => count_field(&env, &records),
        other => {
            return Err(CliError::Usage(format!(
                "unknown field {other:?}; expected ir or counts"
            )))
        }
    };
    emit_heatmap(&env, &field, out).map_err(HarnessError::from)?;
    Ok(())
}

fn expect_path(arg: Option<&String>, message: &str) -> Result<PathBuf, CliError> {
    arg.map(PathBuf::from)
        .ok_or_else(|| CliError::Usage(message.into()))
}

fn flag_value(args: &[String], flag: &str) -> Option<String> {
    args.iter()
        .position(|a| a == flag)
        .and_then(|i| args.get(i + 1))
        .cloned()
}
