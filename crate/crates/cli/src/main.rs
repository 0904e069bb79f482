//! ugcrank — end-to-end pipeline driver.
//!
//! Subcommands mirror the pipeline stages: `generate-pairs`,
//! `extract-features`, `train`, `score`, `evaluate`, plus `distort` for
//! replaying a single distortion spec. Every run is deterministic given its
//! resolved configuration, and commands that produce artifacts echo that
//! resolved configuration next to them.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit classification: usage/validation problems exit 1, I/O problems 2.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m,
        }
    }
}

impl From<ugcrank::corpus::CorpusError> for CliError {
    fn from(e: ugcrank::corpus::CorpusError) -> Self {
        match e {
            ugcrank::corpus::CorpusError::Io(_) => CliError::io(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<ugcrank::pairgen::PairGenError> for CliError {
    fn from(e: ugcrank::pairgen::PairGenError) -> Self {
        use ugcrank::pairgen::PairGenError::*;
        match e {
            Io(_) | ImgIo(_) => CliError::io(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<ugcrank::features::FeatureError> for CliError {
    fn from(e: ugcrank::features::FeatureError) -> Self {
        use ugcrank::features::FeatureError::*;
        match e {
            Io(_) | ImgIo(_) | Store(_) => CliError::io(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<ugcrank::ranker::RankerError> for CliError {
    fn from(e: ugcrank::ranker::RankerError) -> Self {
        use ugcrank::ranker::RankerError::*;
        match e {
            Io(_) | Checkpoint(_) => CliError::io(e.to_string()),
            Feature(f) => f.into(),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<ugcrank::eval::EvalError> for CliError {
    fn from(e: ugcrank::eval::EvalError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<ugcrank::imgio::ImgIoError> for CliError {
    fn from(e: ugcrank::imgio::ImgIoError) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "ugcrank",
    version,
    about = "Rank user-generated product images by quality"
)]
struct Cli {
    /// Worker threads for parallel stages (fallback: UGCRANK_THREADS env
    /// var, then all available cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ManifestArgs {
    /// Manifest file (one JSON record per line).
    #[arg(long)]
    manifest: PathBuf,

    /// Accept unknown manifest fields.
    #[arg(long)]
    lenient: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample ranked pairs and materialize distorted negatives.
    GeneratePairs {
        #[command(flatten)]
        manifest: ManifestArgs,
        /// Output directory (pair file, distorted images, config echo).
        #[arg(long)]
        out: PathBuf,
        /// Number of pairs to sample.
        #[arg(long)]
        n_pairs: Option<usize>,
        /// Sampling seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Longest distortion chain for class 1-2 negatives.
        #[arg(long)]
        chain_max: Option<usize>,
        /// Six comma-separated class weights, e.g. "1,1,1,1,1,1".
        #[arg(long)]
        class_weights: Option<String>,
        /// JSON config file with defaults (flags win over it).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Extract feature vectors into a binary store.
    ExtractFeatures {
        #[command(flatten)]
        manifest: ManifestArgs,
        /// Pair file whose image paths are included too.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// "analytic" or "onnx:PATH_A,PATH_T".
        #[arg(long, default_value = "analytic")]
        extractor: String,
        /// Output store file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the ranking network on a materialized pair file.
    Train {
        #[command(flatten)]
        manifest: ManifestArgs,
        /// Pair file from generate-pairs.
        #[arg(long)]
        pairs: PathBuf,
        /// Output directory (checkpoint, history, feature store, config).
        #[arg(long)]
        out: PathBuf,
        /// "analytic" or "onnx:PATH_A,PATH_T".
        #[arg(long, default_value = "analytic")]
        extractor: String,
        /// Reuse a feature store instead of extracting.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        weight_decay: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Epochs without val-accuracy improvement before halving the lr.
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON config file with defaults (flags win over it).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score images with a trained checkpoint ("score<TAB>path", best first).
    Score {
        /// Checkpoint file.
        #[arg(long)]
        model: PathBuf,
        /// "analytic" or "onnx:PATH_A,PATH_T".
        #[arg(long, default_value = "analytic")]
        extractor: String,
        /// Also write the ranking to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Images to score.
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Evaluate a checkpoint (and optionally the expected-score baselines)
    /// against a test manifest's proxy scores.
    Evaluate {
        /// Checkpoint file.
        #[arg(long)]
        model: PathBuf,
        /// Test manifest; only split=test records are used.
        #[arg(long)]
        test_manifest: PathBuf,
        /// Accept unknown manifest fields.
        #[arg(long)]
        lenient: bool,
        /// Include the aesthetic/technical expected-score baselines.
        #[arg(long)]
        baselines: bool,
        /// Manifest whose ids must not appear in the test set.
        #[arg(long)]
        train_manifest: Option<PathBuf>,
        #[arg(long, default_value_t = ugcrank::eval::DEFAULT_PAIRS_PER_STYLE)]
        pairs_per_style: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// "analytic" or "onnx:PATH_A,PATH_T".
        #[arg(long, default_value = "analytic")]
        extractor: String,
        /// Directory for report.txt / report.json / config echo.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply one distortion spec to one image (debugging aid).
    Distort {
        /// Input image.
        #[arg(long)]
        input: PathBuf,
        /// Spec as inline JSON or @file, e.g.
        /// '{"kind":"gaussian_blur","param":1.0,"seed":7}'.
        #[arg(long)]
        spec: String,
        /// Output PNG path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("UGCRANK_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    ugcrank::exec::configure_threads(threads);

    let result = match cli.command {
        Command::GeneratePairs {
            manifest,
            out,
            n_pairs,
            seed,
            chain_max,
            class_weights,
            config,
        } => commands::generate_pairs(
            manifest,
            out,
            n_pairs,
            seed,
            chain_max,
            class_weights,
            config,
        ),
        Command::ExtractFeatures {
            manifest,
            pairs,
            extractor,
            out,
        } => commands::extract_features(manifest, pairs, &extractor, out),
        Command::Train {
            manifest,
            pairs,
            out,
            extractor,
            features,
            margin,
            lr,
            weight_decay,
            batch_size,
            max_epochs,
            patience,
            seed,
            config,
        } => commands::train(
            manifest,
            pairs,
            out,
            &extractor,
            features,
            commands::TrainFlags {
                margin,
                lr,
                weight_decay,
                batch_size,
                max_epochs,
                patience,
                seed,
            },
            config,
        ),
        Command::Score {
            model,
            extractor,
            out,
            images,
        } => commands::score(model, &extractor, out, images),
        Command::Evaluate {
            model,
            test_manifest,
            lenient,
            baselines,
            train_manifest,
            pairs_per_style,
            seed,
            extractor,
            out,
        } => commands::evaluate(
            model,
            test_manifest,
            lenient,
            baselines,
            train_manifest,
            pairs_per_style,
            seed,
            &extractor,
            out,
        ),
        Command::Distort { input, spec, out } => commands::distort(input, &spec, out),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
