use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use fairadv_core::experiment::{ExperimentConfig, KEYS};
use fairadv_core::Error;

mod commands;

fn key_args() -> Vec<Arg> {
    KEYS.iter()
        .map(|&key| {
            let mut arg = Arg::new(key).long(key).value_name("VALUE").help_heading("Config overrides");
            if key.contains('_') {
                arg = arg.alias(key.replace('_', "-"));
            }
            arg
        })
        .collect()
}

fn common_args() -> Vec<Arg> {
    vec![
        Arg::new("config").long("config").value_name("PATH").help("Flat key = value config file"),
        Arg::new("out").long("out").value_name("PATH").help("Output file (overrides output_path)"),
    ]
}

fn workers_arg() -> Arg {
    Arg::new("workers")
        .long("workers")
        .value_name("N")
        .default_value("1")
        .value_parser(clap::value_parser!(usize))
        .help("Concurrent runs")
}

fn cli() -> Command {
    Command::new("fairadv")
        .about("Adversarial debiasing experiments on fixed representations")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("train")
                .about("Train and evaluate n_seeds runs, one CSV row each")
                .args(common_args())
                .arg(workers_arg())
                .arg(
                    Arg::new("checkpoint-dir")
                        .long("checkpoint-dir")
                        .value_name("DIR")
                        .help("Save each run's best-dev main model here"),
                )
                .args(key_args()),
        )
        .subcommand(
            Command::new("sweep")
                .about("Run every grid value of sweep_param for n_seeds seeds")
                .args(common_args())
                .arg(workers_arg())
                .args(key_args()),
        )
        .subcommand(
            Command::new("gen-data")
                .about("Write the configured synthetic dataset as an embedding file")
                .args(common_args())
                .args(key_args()),
        )
        .subcommand(
            Command::new("probe")
                .about("Leakage of a saved checkpoint on the test split")
                .args(common_args())
                .arg(
                    Arg::new("checkpoint")
                        .long("checkpoint")
                        .value_name("PATH")
                        .required(true)
                        .help("Checkpoint written by train --checkpoint-dir"),
                )
                .args(key_args()),
        )
        .arg(
            Arg::new("quiet")
                .long("quiet")
                .short('q')
                .global(true)
                .action(ArgAction::SetTrue)
                .help("Suppress the summary"),
        )
}

/// Config file first, then command-line overrides in key order.
fn load_config(m: &ArgMatches) -> Result<ExperimentConfig, Error> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for &key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    if let Some(out) = m.get_one::<String>("out") {
        cfg.output_path = Some(out.into());
    }
    Ok(cfg)
}

pub(crate) fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } => 2,
        Error::Io(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            // Usage errors are validation failures; exit code 2 is reserved for divergence.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let quiet = sub.get_flag("quiet");
    let result = load_config(sub).and_then(|cfg| match name {
        "train" => commands::train(
            &cfg,
            *sub.get_one::<usize>("workers").expect("defaulted"),
            sub.get_one::<String>("checkpoint-dir").map(Into::into),
            quiet,
        ),
        "sweep" => commands::sweep(&cfg, *sub.get_one::<usize>("workers").expect("defaulted"), quiet),
        "gen-data" => commands::gen_data(&cfg),
        "probe" => commands::probe(&cfg, sub.get_one::<String>("checkpoint").expect("required")),
        _ => unreachable!("unknown subcommand"),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
