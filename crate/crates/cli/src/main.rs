//! `recfollow`: synthetic corpus generation, model training, batch
//! extraction, adherence analysis and evaluation.

mod cmd;
mod config;
mod data;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use recfollow::ner::DecodeMode;

use cmd::evaluate::EvalMode;
use config::{input_path, output_path, PipelineConfig};
use failure::CmdResult;

#[derive(Parser)]
#[command(name = "recfollow", version, about = "Follow-up recommendation extraction and adherence analysis")]
struct Cli {
    /// Log progress (equivalent to RUST_LOG=info).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed` in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> CmdResult<PipelineConfig> {
        let mut cfg = PipelineConfig::load(self.config.as_deref())?;
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    reports: Option<PathBuf>,
    /// Directory of `<report_id>.ann` files.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus with gold annotations and gold outcomes.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `generate.n_reports`.
        #[arg(long)]
        n_reports: Option<usize>,
    },
    /// Pretrain skip-gram word vectors on report text.
    TrainEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the recommendation sentence classifier.
    TrainSentence(TrainArgs),
    /// Cross-validate and train the entity tagger.
    TrainNer(TrainArgs),
    /// Run both models over a report stream and write one JSON line per report.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long)]
        sentence_model: Option<PathBuf>,
        #[arg(long)]
        ner_model: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sentence probability cut-off; defaults to the trained model's.
        #[arg(long)]
        threshold: Option<f64>,
        /// `argmax` or `viterbi`; defaults to the trained model's.
        #[arg(long)]
        decode: Option<DecodeMode>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Worker threads; 0 uses every available core.
        #[arg(long)]
        threads: Option<usize>,
        /// Print the peak resident set size when done.
        #[arg(long)]
        report_memory: bool,
    },
    /// Join predictions with report metadata and count follow-up outcomes.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long)]
        grace_days: Option<u32>,
        /// Last day of observation (YYYY-MM-DD); defaults to the latest report.
        #[arg(long)]
        dataset_end: Option<NaiveDate>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score prediction records against gold records.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum)]
        mode: EvalMode,
        /// Report JSONL, required in token mode.
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Generate { common, out, n_reports } => {
            let mut cfg = common.load()?;
            if let Some(n) = n_reports {
                cfg.generate.n_reports = n;
            }
            let out = output_path(out, &cfg.paths.out, "output directory")?;
            cmd::generate::run(&cfg, &out)
        }
        Command::TrainEmbeddings { common, reports, out } => {
            let cfg = common.load()?;
            let reports = input_path(reports, &cfg.paths.reports, "reports")?;
            let out = output_path(out, &cfg.paths.out, "output directory")?;
            cmd::train::embeddings_cmd(&cfg, &reports, &out)
        }
        Command::TrainSentence(a) => {
            let (cfg, reports, ann, emb, out) = train_inputs(a)?;
            cmd::train::sentence_cmd(&cfg, &reports, &ann, &emb, &out)
        }
        Command::TrainNer(a) => {
            let (cfg, reports, ann, emb, out) = train_inputs(a)?;
            cmd::train::ner_cmd(&cfg, &reports, &ann, &emb, &out)
        }
        Command::Extract {
            common,
            reports,
            sentence_model,
            ner_model,
            embeddings,
            out,
            threshold,
            decode,
            batch_size,
            threads,
            report_memory,
        } => {
            let mut cfg = common.load()?;
            if let Some(b) = batch_size {
                cfg.extract.batch_size = b;
            }
            if let Some(t) = threads {
                cfg.extract.threads = t;
            }
            let args = cmd::extract::ExtractArgs {
                reports: input_path(reports, &cfg.paths.reports, "reports")?,
                sentence_model: input_path(sentence_model, &cfg.paths.sentence_model, "sentence model")?,
                ner_model: input_path(ner_model, &cfg.paths.ner_model, "NER model")?,
                embeddings: input_path(embeddings, &cfg.paths.embeddings, "embeddings")?,
                out: output_path(out, &cfg.paths.predictions, "predictions")?,
                threshold,
                decode,
                report_memory,
            };
            cmd::extract::run(&cfg, args)
        }
        Command::Analyze { common, predictions, reports, grace_days, dataset_end, out } => {
            let mut cfg = common.load()?;
            if let Some(g) = grace_days {
                cfg.adherence.grace_days = g;
            }
            if dataset_end.is_some() {
                cfg.adherence.dataset_end = dataset_end;
            }
            let predictions = input_path(predictions, &cfg.paths.predictions, "predictions")?;
            let reports = input_path(reports, &cfg.paths.reports, "reports")?;
            let out = output_path(out, &cfg.paths.out, "output directory")?;
            cmd::analyze::run(&cfg, &predictions, &reports, &out)
        }
        Command::Evaluate { gold, pred, mode, reports, out } => {
            let gold = input_path(Some(gold), &None, "gold")?;
            let pred = input_path(Some(pred), &None, "predictions")?;
            let reports = reports.map(|r| input_path(Some(r), &None, "reports")).transpose()?;
            cmd::evaluate::run(&gold, &pred, mode, reports.as_deref(), &out)
        }
    }
}

type TrainInputs = (PipelineConfig, PathBuf, PathBuf, PathBuf, PathBuf);

fn train_inputs(a: TrainArgs) -> CmdResult<TrainInputs> {
    let cfg = a.common.load()?;
    let reports = input_path(a.reports, &cfg.paths.reports, "reports")?;
    let ann = input_path(a.annotations, &cfg.paths.annotations, "annotations")?;
    let emb = input_path(a.embeddings, &cfg.paths.embeddings, "embeddings")?;
    let out = output_path(a.out, &cfg.paths.out, "output directory")?;
    Ok((cfg, reports, ann, emb, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
