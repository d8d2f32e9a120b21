//! `dualmol`: tokenizer training, contrastive pretraining, fingerprint
//! retrieval, downstream evaluation and representation analysis from the
//! command line.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualmol_core::downstream::{FingerprintSource, TaskKind};
use dualmol_core::encoder::Branch;

#[derive(Debug, Parser)]
#[command(name = "dualmol", version, about = "Dual-encoder molecular fingerprints from SMILES and IUPAC names")]
pub struct Cli {
    /// JSON run configuration; omitted sections use defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random component (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic paired corpus with a known token correspondence.
    Synth(SynthArgs),
    /// Train a SMILES BPE model on the SMILES column of a pair corpus.
    TrainBpe(TrainBpeArgs),
    /// Tokenize one column of a pair corpus into JSON lines.
    Tokenize(TokenizeArgs),
    /// Sequence-length histograms and most frequent tokens per language.
    Stats(StatsArgs),
    /// Fit tokenizers and train both encoders contrastively.
    Pretrain(PretrainArgs),
    /// Fingerprint a corpus through both branches into two stores.
    Embed(EmbedArgs),
    /// Top-K cosine neighbours of one query.
    Retrieve(RetrieveArgs),
    /// Cross-lingual recall@K in both directions.
    EvalRetrieval(EvalRetrievalArgs),
    /// Grid-searched fine-tuning of one branch with a task head.
    Finetune(FinetuneArgs),
    /// Cross-validated drug-pair interaction MLP on fingerprints.
    Ddi(DdiArgs),
    /// Synthetic drug fingerprints and interaction pairs.
    SynthDdi(SynthDdiArgs),
    /// Layer-by-layer CKA grid between branches or between two models.
    Cka(CkaArgs),
    /// Cosine matrix between single-token fingerprints of both languages.
    TokenAlign(TokenAlignArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the `iupac_token,smiles_token` correspondence table.
    #[arg(long)]
    pub correspondence: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainBpeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `tokenizer.bpe_vocab_size`.
    #[arg(long)]
    pub vocab_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub branch: Branch,
    /// Model directory holding both tokenizers.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Use this model's tokenizers instead of fitting new ones.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Model directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep the last N records out of training; they are written to
    /// `holdout.tsv` in the model directory.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Receives `smiles.mmfp` and `iupac.mmfp` (with `.ids` companions).
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Candidate store.
    #[arg(long)]
    pub store: PathBuf,
    /// Take the query vector from this store...
    #[arg(long, requires = "query_id")]
    pub query_store: Option<PathBuf>,
    #[arg(long)]
    pub query_id: Option<String>,
    /// ...or embed this string with `--model` through `--branch`.
    #[arg(long, conflicts_with = "query_store", requires_all = ["model", "branch"])]
    pub query: Option<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub branch: Option<Branch>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalRetrievalArgs {
    #[arg(long)]
    pub smiles_store: PathBuf,
    #[arg(long)]
    pub iupac_store: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with header `id,smiles[,iupac],label`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub branch: Branch,
    #[arg(long)]
    pub task: TaskKind,
    /// Train only the head on fixed fingerprints.
    #[arg(long)]
    pub freeze: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DdiArgs {
    /// CSV with header `id_a,id_b,label`.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub smiles_store: Option<PathBuf>,
    #[arg(long)]
    pub iupac_store: Option<PathBuf>,
    #[arg(long, default_value = "smiles")]
    pub source: FingerprintSource,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthDdiArgs {
    #[arg(long, default_value_t = 300)]
    pub drugs: usize,
    #[arg(long, default_value_t = 3000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.2)]
    pub prevalence: f64,
    /// Shuffle labels so they carry no signal.
    #[arg(long)]
    pub no_signal: bool,
    /// Receives `drugs.mmfp` and `pairs.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CkaArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Probe molecules.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Compare `--branch` of `--model` against the same branch of this model
    /// instead of comparing the two branches.
    #[arg(long, requires = "branch")]
    pub other_model: Option<PathBuf>,
    #[arg(long)]
    pub branch: Option<Branch>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TokenAlignArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV `iupac_token,smiles_token`; its columns become the axes and the
    /// argmax accuracy is reported.
    #[arg(long, conflicts_with_all = ["iupac_token", "smiles_token"])]
    pub correspondence: Option<PathBuf>,
    #[arg(long = "iupac-token")]
    pub iupac_token: Vec<String>,
    #[arg(long = "smiles-token")]
    pub smiles_token: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also draw the matrix as an SVG heat map.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let body = serde_json::json!({ "error": { "kind": "usage", "message": e.to_string().trim_end() } });
            eprintln!("{body}");
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
