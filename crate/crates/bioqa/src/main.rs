//! Command-line entry point: prepare-store, run, fuse, evaluate.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bioqa::config::RunConfig;
use bioqa::error::Error;
use bioqa::pipeline::{cmd_evaluate, cmd_fuse, cmd_prepare_store, cmd_run, RunReport};

#[derive(Parser)]
#[command(name = "bioqa", version, about = "Biomedical question-answering pipeline and evaluator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the in-context example store from a training batch.
    PrepareStore {
        #[arg(long)]
        config: PathBuf,
        /// Training batch file with gold answers.
        #[arg(long)]
        batch: PathBuf,
        /// Output store file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer a batch end to end and write a submission file.
    Run(RunArgs),
    /// Re-fuse persisted per-model answers under a new ensemble setting.
    Fuse(RunArgs),
    /// Score a submission against a gold batch file.
    Evaluate {
        #[arg(long)]
        submission: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Where to write the report JSON.
        #[arg(long, default_value = "eval_report.json")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the configured batch file.
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured provider-call parallelism.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Directory of per-type instruction template overrides.
    #[arg(long)]
    template_dir: Option<PathBuf>,
    /// Override the ensemble vote threshold.
    #[arg(long)]
    threshold: Option<usize>,
}

impl RunArgs {
    fn load_config(&self) -> Result<RunConfig, Error> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(batch) = &self.batch {
            config.paths.batch = batch.clone();
        }
        if let Some(out) = &self.out {
            config.paths.out_dir = out.clone();
        }
        if let Some(parallelism) = self.parallelism {
            config.parallelism = parallelism;
        }
        if let Some(dir) = &self.template_dir {
            config.template_dir = Some(dir.clone());
        }
        if let Some(threshold) = self.threshold {
            config.ensemble.threshold = threshold;
        }
        config.validate()?;
        Ok(config)
    }
}

fn summarize_run(report: &RunReport) {
    eprintln!(
        "{} questions, {} submission entries written to {}",
        report.questions,
        report.entries,
        report.submission_path.display()
    );
    if !report.skipped.is_empty() {
        eprintln!("{} question(s) skipped:", report.skipped.len());
        for skip in &report.skipped {
            eprintln!("  {}: {}", skip.question_id, skip.reason);
        }
    }
    if !report.unanswered.is_empty() {
        eprintln!("{} unanswered (question, model) pair(s):", report.unanswered.len());
        for record in &report.unanswered {
            eprintln!("  {} / {}: {}", record.question_id, record.model, record.reason);
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::PrepareStore { config, batch, out } => {
            let config = RunConfig::load(&config)?;
            let client = config.embedding.build()?;
            let report = cmd_prepare_store(&batch, &client, &out)?;
            eprintln!(
                "store written to {}: {} record(s), {} skipped",
                out.display(),
                report.records,
                report.skipped
            );
            Ok(())
        }
        Command::Run(args) => {
            let config = args.load_config()?;
            let report = cmd_run(&config)?;
            summarize_run(&report);
            Ok(())
        }
        Command::Fuse(args) => {
            let config = args.load_config()?;
            let out_dir = args.out.clone().unwrap_or_else(|| config.paths.out_dir.clone());
            let report = cmd_fuse(&config, &out_dir)?;
            summarize_run(&report);
            Ok(())
        }
        Command::Evaluate { submission, gold, out } => {
            let report = cmd_evaluate(&submission, &gold)?;
            std::fs::write(&out, report.to_json_bytes()).map_err(|e| Error::io(&out, e))?;
            print!("{}", report.render_table());
            eprintln!("report written to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
