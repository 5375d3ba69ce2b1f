//! `smpnn`: command-line entry points for training, evaluation, gradient
//! checks, the numerical theory experiments and the scaling benchmark.
//!
//! Options resolve with precedence command line, then `--config` file, then
//! built-in defaults; the resolved values are recorded in each manifest.
//! Outputs go to `--out-dir`, else `$SMPNN_OUT_DIR`, else the current
//! directory. Failures print one `error kind=<kind> code=<n>: <message>`
//! line to stderr and exit with the code listed in [`error::code`].

mod commands;
mod error;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Arg, ArgMatches, Command};
use smpnn::io::{KvFile, ResolvedConfig};

use commands::{CommandSpec, Context, COMMANDS};
use error::{code, error_line, CliResult};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "SMPNN_OUT_DIR";

fn cli() -> Command {
    let mut cmd = Command::new("smpnn")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Scalable message passing networks: training, gradient checks and numerical experiments")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("out-dir")
                .long("out-dir")
                .global(true)
                .value_name("DIR")
                .help(format!("output directory [default: ${OUT_DIR_ENV}, else .]")),
        )
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("`key = value` file; command-line flags override it"),
        );
    for spec in COMMANDS {
        let mut sub = Command::new(spec.name).about(spec.about);
        for (key, default, help) in spec.keys {
            let shown = if default.is_empty() { "unset" } else { default };
            sub = sub.arg(
                Arg::new(*key)
                    .long(*key)
                    .value_name("VALUE")
                    .allow_negative_numbers(true)
                    .help(format!("{help} [default: {shown}]")),
            );
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn resolve(spec: &CommandSpec, m: &ArgMatches) -> CliResult<Context> {
    let cli_values: BTreeMap<String, String> = spec
        .keys
        .iter()
        .filter_map(|(k, _, _)| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect();
    let file = m
        .get_one::<String>("config")
        .map(KvFile::read)
        .transpose()?;
    let defaults: Vec<(&str, &str)> = spec.keys.iter().map(|(k, d, _)| (*k, *d)).collect();
    let config = ResolvedConfig::resolve(&defaults, file.as_ref(), &cli_values)?;
    let out_dir = m
        .get_one::<String>("out-dir")
        .cloned()
        .or_else(|| std::env::var(OUT_DIR_ENV).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| ".".into());
    Ok(Context {
        command: spec.name,
        out_dir: PathBuf::from(out_dir),
        config,
    })
}

fn run(args: Vec<OsString>) -> u8 {
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let help_only = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            if help_only {
                return code::OK;
            }
            let msg = if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                "missing subcommand".to_string()
            } else {
                let rendered = e.render().to_string();
                rendered
                    .lines()
                    .next()
                    .unwrap_or("usage error")
                    .trim_start_matches("error: ")
                    .to_string()
            };
            eprintln!("{}", error_line("usage", code::USAGE, &msg));
            return code::USAGE;
        }
    };
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let spec = COMMANDS
        .iter()
        .find(|s| s.name == name)
        .expect("every subcommand has a spec");
    match resolve(spec, sub).and_then(|ctx| (spec.run)(&ctx)) {
        Ok(()) => code::OK,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), e.exit_code(), &e.to_string()));
            e.exit_code()
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::CliError;

    #[test]
    fn command_table_is_well_formed() {
        cli().debug_assert();
        for spec in COMMANDS {
            let mut keys: Vec<&str> = spec.keys.iter().map(|k| k.0).collect();
            keys.sort_unstable();
            keys.dedup();
            assert_eq!(
                keys.len(),
                spec.keys.len(),
                "duplicate key in {}",
                spec.name
            );
        }
    }

    #[test]
    fn cli_error_kinds_match_codes() {
        let e = CliError::CheckFailed("x".into());
        assert_eq!(
            (e.kind(), e.exit_code()),
            ("check_failed", code::CHECK_FAILED)
        );
    }
}
