//! `newsrec` command-line driver.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "newsrec", version, about = "Session-based news recommendation laboratory")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<String>,
    /// Override one configuration key; repeatable.
    #[arg(short = 's', long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (1 is the deterministic reference path).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all outputs.
    #[arg(short, long, global = true, value_name = "DIR")]
    out_dir: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic article catalog and click log.
    Synth {
        #[arg(long)]
        hours: Option<String>,
        #[arg(long)]
        markov_skew: Option<String>,
        #[arg(long)]
        n_articles: Option<String>,
        #[arg(long)]
        n_sessions: Option<String>,
    },
    /// Train the content encoder and export the embedding repository.
    AcrTrain {
        #[arg(long)]
        articles: Option<String>,
        #[arg(long)]
        categories: Option<String>,
        #[arg(long)]
        word_vectors: Option<String>,
        #[arg(long)]
        epochs: Option<String>,
        /// `text` or `binary`.
        #[arg(long)]
        format: Option<String>,
    },
    /// Run the hourly train/evaluate protocol.
    Evaluate {
        #[arg(long)]
        articles: Option<String>,
        #[arg(long)]
        clicks: Option<String>,
        #[arg(long)]
        repository: Option<String>,
        /// `all` or a comma-separated subset of the method names.
        #[arg(long)]
        methods: Option<String>,
        /// Also write per-step evaluation records.
        #[arg(long)]
        records: bool,
    },
    /// Summarize a metrics file and write plot-ready series.
    Report {
        /// Metrics file written by `evaluate`.
        metrics: Option<String>,
    },
}

fn overrides(cli: &Cli) -> Vec<String> {
    let mut out = cli.common.set.clone();
    let mut push = |key: &str, v: &Option<String>| {
        if let Some(v) = v {
            out.push(format!("{key}={v}"));
        }
    };
    push("threads", &cli.common.threads.map(|t| t.to_string()));
    push("seed", &cli.common.seed.map(|s| s.to_string()));
    push("out_dir", &cli.common.out_dir);
    match &cli.command {
        Command::Synth {
            hours,
            markov_skew,
            n_articles,
            n_sessions,
        } => {
            push("hours", hours);
            push("markov_skew", markov_skew);
            push("n_articles", n_articles);
            push("n_sessions", n_sessions);
        }
        Command::AcrTrain {
            articles,
            categories,
            word_vectors,
            epochs,
            format,
        } => {
            push("articles", articles);
            push("categories", categories);
            push("word_vectors", word_vectors);
            push("acr_epochs", epochs);
            push("repository_format", format);
        }
        Command::Evaluate {
            articles,
            clicks,
            repository,
            methods,
            records,
        } => {
            push("articles", articles);
            push("clicks", clicks);
            push("repository", repository);
            push("methods", methods);
            if *records {
                out.push("records=true".into());
            }
        }
        Command::Report { metrics } => push("metrics", metrics),
    }
    out
}

fn load_config(cli: &Cli) -> newsrec::Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.common.config {
        config.apply_file(std::path::Path::new(path))?;
    }
    config.apply_env(std::env::vars())?;
    let items = overrides(cli);
    config.apply_overrides(items.iter().map(String::as_str))?;
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { commands::EXIT_USAGE } else { 0 });
        }
    };
    let result = load_config(&cli).map_err(commands::Failure::from).and_then(|config| {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global();
        match &cli.command {
            Command::Synth { .. } => commands::synth(&config),
            Command::AcrTrain { .. } => commands::acr_train(&config),
            Command::Evaluate { .. } => commands::evaluate(&config),
            Command::Report { .. } => commands::report(&config),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
