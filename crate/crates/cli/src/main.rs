use std::path::PathBuf;
use std::process::ExitCode;

use cascade_ser::commands::{self, ComparisonReport};
use cascade_ser::pipeline::Stage;
use cascade_ser::{with_jobs, Error, Result, RunConfig};
use cascade_ser_core::stats::SdConvention;
use cascade_ser_core::synth::SynthSpec;
use cascade_ser_core::ClassifierKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Two-stage (speaker, then emotion) speech emotion recognition toolkit.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus (WAV files plus manifest.jsonl).
    Generate {
        /// Synthetic corpus spec (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Corpus directory to create.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Extract MFCC features for every utterance into the feature cache.
    Featurize(RunArgs),
    /// Train the speaker, per-speaker emotion and pooled emotion models.
    Train(RunArgs),
    /// Run one-stage and two-stage recognition on the test half and write reports.
    Evaluate(RunArgs),
    /// Student's t between the per-emotion accuracies of two reports.
    Compare {
        report_a: PathBuf,
        report_b: PathBuf,
        #[arg(long, value_enum, default_value = "two-stage")]
        stage_a: Stage,
        #[arg(long, value_enum, default_value = "two-stage")]
        stage_b: Stage,
        #[arg(long, value_enum, default_value = "standard-error")]
        sd: SdArg,
        /// Where to write the comparison JSON.
        #[arg(long, default_value = "comparison.json")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_kind)]
    classifier: Option<ClassifierKind>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output root for features, models and reports.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SdArg {
    StandardError,
    SampleSd,
}

fn parse_kind(s: &str) -> std::result::Result<ClassifierKind, String> {
    s.parse().map_err(|e: cascade_ser_core::Error| e.to_string())
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.classifier {
            c.classifier = v;
        }
        if let Some(v) = self.corpus {
            c.corpus = v;
        }
        if let Some(v) = self.out {
            c.out = v;
        }
        if let Some(v) = self.jobs {
            c.jobs = v;
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, seed, out, jobs } => {
            let mut spec: SynthSpec = match config {
                Some(path) => serde_json::from_str(
                    &std::fs::read_to_string(&path).map_err(|source| Error::Io { path: path.clone(), source })?,
                )
                .map_err(|source| Error::Json { path, source })?,
                None => SynthSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let manifest = with_jobs(jobs.unwrap_or(0), || commands::generate(&spec, &out))??;
            println!("{}", manifest.display());
        }
        Command::Featurize(args) => {
            let c = args.resolve()?;
            let n = with_jobs(c.jobs, || commands::featurize_corpus(&c))??;
            println!("featurized {n} utterances into {}", c.features_dir().display());
        }
        Command::Train(args) => {
            let c = args.resolve()?;
            with_jobs(c.jobs, || commands::train(&c))??;
            println!("{}", cascade_ser::models::system_dir(&c.models_dir(), c.classifier).display());
        }
        Command::Evaluate(args) => {
            let c = args.resolve()?;
            let outputs = with_jobs(c.jobs, || commands::evaluate(&c))??;
            print!("{}", outputs.report.render_text());
            println!("\n{}", outputs.json.display());
        }
        Command::Compare { report_a, report_b, stage_a, stage_b, sd, out } => {
            let convention = match sd {
                SdArg::StandardError => SdConvention::StandardError,
                SdArg::SampleSd => SdConvention::SampleSd,
            };
            let comparison: ComparisonReport = commands::compare(&report_a, stage_a, &report_b, stage_b, convention)?;
            commands::write_comparison(&out, &comparison)?;
            print!("{}", comparison.render_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CASCADE_SER_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
