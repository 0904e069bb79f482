//! Subcommand implementations.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use ugcrank::corpus::{self, LoadOptions, Manifest, Split};
use ugcrank::distortion::{self, DistortionSpec};
use ugcrank::eval::{self, BaselineKind, NamedScorer};
use ugcrank::exec;
use ugcrank::features::{
    self, extract_from_path, store::FeatureStore, store::StoreHeader, ExtractorSpec,
    FeatureExtractor, FeatureLayout, FeatureVector,
};
use ugcrank::imgio;
use ugcrank::pairgen::{self, PairConfig, PairFileEntry};
use ugcrank::ranker::{self, checkpoint, train::build_val_triples, TrainConfig};

use crate::config::{echo_run_config, resolve, FileConfig};
use crate::{CliError, ManifestArgs};

fn load_manifest_file(args: &ManifestArgs) -> Result<Manifest, CliError> {
    let file = fs::File::open(&args.manifest)
        .map_err(|e| CliError::io(format!("manifest {}: {e}", args.manifest.display())))?;
    let opts = LoadOptions {
        lenient: args.lenient,
        ..Default::default()
    };
    Ok(corpus::load_manifest(
        BufReader::new(file),
        &args.manifest.display().to_string(),
        opts,
    )?)
}

/// Extractor pair plus the identity string recorded in checkpoints.
type NamedExtractors = (Box<dyn FeatureExtractor>, Box<dyn FeatureExtractor>, String);

fn build_extractors(spec: &str) -> Result<NamedExtractors, CliError> {
    let parsed: ExtractorSpec = spec.parse().map_err(CliError::from)?;
    let identity = parsed.identity();
    let (a, t) = parsed.build()?;
    Ok((a, t, identity))
}

fn parse_class_weights(s: &str) -> Result<[f64; 6], CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 6 {
        return Err(CliError::validation(format!(
            "--class-weights needs 6 comma-separated values, got {}",
            parts.len()
        )));
    }
    let mut weights = [0.0; 6];
    for (w, p) in weights.iter_mut().zip(parts) {
        *w = p
            .trim()
            .parse()
            .map_err(|e| CliError::validation(format!("class weight \"{p}\": {e}")))?;
    }
    Ok(weights)
}

pub fn generate_pairs(
    manifest_args: ManifestArgs,
    out: PathBuf,
    n_pairs: Option<usize>,
    seed: Option<u64>,
    chain_max: Option<usize>,
    class_weights: Option<String>,
    config: Option<PathBuf>,
) -> Result<(), CliError> {
    let file_cfg = FileConfig::load(config.as_deref())?;
    let manifest = load_manifest_file(&manifest_args)?;
    let train = corpus::filter_split(&manifest, Split::Train);

    let flag_weights = class_weights
        .as_deref()
        .map(parse_class_weights)
        .transpose()?;
    let cfg = PairConfig {
        n_pairs: resolve(n_pairs, file_cfg.n_pairs, 1000),
        chain_max: resolve(chain_max, file_cfg.chain_max, 2),
        seed: resolve(seed, file_cfg.seed, 0),
        class_weights: resolve(flag_weights, file_cfg.class_weights, [1.0; 6]),
    };

    let (pairs, warnings) = pairgen::build_pairs(&train, &cfg)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let report = pairgen::materialize(&pairs, &train, &out)?;
    for (idx, reason) in &report.dropped {
        eprintln!("warning: dropped pair {idx}: {reason}");
    }

    echo_run_config(
        &out.join("run_config.json"),
        &json!({
            "command": "generate-pairs",
            "manifest": manifest_args.manifest,
            "lenient": manifest_args.lenient,
            "n_pairs": cfg.n_pairs,
            "chain_max": cfg.chain_max,
            "seed": cfg.seed,
            "class_weights": cfg.class_weights,
        }),
    )?;

    println!(
        "wrote {} pairs to {} ({} distorted images written, {} reused, {} dropped)",
        report.entries.len(),
        report.pair_file.display(),
        report.images_written,
        report.images_reused,
        report.dropped.len()
    );
    if report.dropped.len() * 10 > pairs.len() {
        return Err(CliError::io(format!(
            "{} of {} pairs dropped (>10%)",
            report.dropped.len(),
            pairs.len()
        )));
    }
    Ok(())
}

/// Unique image paths from a pair file plus manifest records, in first-seen
/// order.
fn collect_paths(manifest: &Manifest, pairs: &[PairFileEntry]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut paths = Vec::new();
    let mut push = |p: &str| {
        if seen.insert(p.to_string()) {
            paths.push(p.to_string());
        }
    };
    for r in &manifest.records {
        push(&r.path);
    }
    for e in pairs {
        push(&e.pos_path);
        push(&e.neg_path);
    }
    paths
}

/// Extracts features for every path, in parallel; any failure aborts with
/// the offending path.
fn extract_all(
    paths: &[String],
    aesthetic: &dyn FeatureExtractor,
    technical: &dyn FeatureExtractor,
) -> Result<Vec<(String, FeatureVector)>, CliError> {
    let results = exec::map_batch(paths, |p| {
        extract_from_path(Path::new(p), aesthetic, technical).map_err(|e| e.to_string())
    });
    let mut out = Vec::with_capacity(paths.len());
    for (path, r) in paths.iter().zip(results) {
        match r {
            Ok(v) => out.push((path.clone(), v)),
            Err(msg) => return Err(CliError::io(format!("extracting {path}: {msg}"))),
        }
    }
    Ok(out)
}

pub fn extract_features(
    manifest_args: ManifestArgs,
    pairs: Option<PathBuf>,
    extractor: &str,
    out: PathBuf,
) -> Result<(), CliError> {
    let manifest = load_manifest_file(&manifest_args)?;
    let pair_entries = match &pairs {
        Some(path) => {
            let file = fs::File::open(path)
                .map_err(|e| CliError::io(format!("pair file {}: {e}", path.display())))?;
            pairgen::load_pairs(BufReader::new(file))?
        }
        None => Vec::new(),
    };
    let (aesthetic, technical, _identity) = build_extractors(extractor)?;
    let paths = collect_paths(&manifest, &pair_entries);
    let entries = extract_all(&paths, aesthetic.as_ref(), technical.as_ref())?;
    let dim = entries.first().map(|(_, v)| v.dim()).unwrap_or(0);
    if dim == 0 {
        return Err(CliError::validation(
            "nothing to extract: manifest and pair file are empty",
        ));
    }
    let header = StoreHeader {
        aesthetic: aesthetic.name().to_string(),
        technical: technical.name().to_string(),
        dim,
    };
    features::store::write_store(&out, &header, &entries)?;
    echo_run_config(
        &PathBuf::from(format!("{}.run.json", out.display())),
        &json!({
            "command": "extract-features",
            "manifest": manifest_args.manifest,
            "lenient": manifest_args.lenient,
            "pairs": pairs,
            "extractor": extractor,
            "dim": dim,
            "vectors": entries.len(),
        }),
    )?;
    println!(
        "wrote {} feature vectors (D={dim}) to {}",
        entries.len(),
        out.display()
    );
    Ok(())
}

#[derive(Debug)]
pub struct TrainFlags {
    pub margin: Option<f64>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    manifest_args: ManifestArgs,
    pairs_path: PathBuf,
    out: PathBuf,
    extractor: &str,
    features_path: Option<PathBuf>,
    flags: TrainFlags,
    config: Option<PathBuf>,
) -> Result<(), CliError> {
    let file_cfg = FileConfig::load(config.as_deref())?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        margin: resolve(flags.margin, file_cfg.margin, defaults.margin),
        lr: resolve(flags.lr, file_cfg.lr, defaults.lr),
        weight_decay: resolve(
            flags.weight_decay,
            file_cfg.weight_decay,
            defaults.weight_decay,
        ),
        batch_size: resolve(flags.batch_size, file_cfg.batch_size, defaults.batch_size),
        max_epochs: resolve(flags.max_epochs, file_cfg.max_epochs, defaults.max_epochs),
        plateau_patience: resolve(flags.patience, file_cfg.patience, defaults.plateau_patience),
        seed: resolve(flags.seed, file_cfg.seed, defaults.seed),
        ..defaults
    };
    // Surface bad hyperparameters as a usage error before any heavy work.
    cfg.validate()
        .map_err(|e| CliError::validation(e.to_string()))?;

    let manifest = load_manifest_file(&manifest_args)?;
    let pair_file = fs::File::open(&pairs_path)
        .map_err(|e| CliError::io(format!("pair file {}: {e}", pairs_path.display())))?;
    let pair_entries = pairgen::load_pairs(BufReader::new(pair_file))?;
    if pair_entries.is_empty() {
        return Err(CliError::validation("pair file contains no pairs"));
    }

    let (aesthetic, technical, identity) = build_extractors(extractor)?;
    let val_manifest = corpus::filter_split(&manifest, Split::Val);
    fs::create_dir_all(&out)?;

    // Feature vectors for every referenced image, keyed by path: reuse a
    // store if one was supplied, otherwise extract now and cache the store
    // alongside the checkpoint.
    let mut by_path: HashMap<String, FeatureVector> = HashMap::new();
    match &features_path {
        Some(store_path) => {
            let store = FeatureStore::load(store_path)?;
            let expected = (
                store.header.aesthetic.clone(),
                store.header.technical.clone(),
            );
            let got = (aesthetic.name().to_string(), technical.name().to_string());
            if expected != got {
                eprintln!(
                    "warning: feature store was built with {:?}, current extractors are {:?}",
                    expected, got
                );
            }
            for path in collect_paths(&val_manifest, &pair_entries) {
                match store.get(&path) {
                    Some(v) => {
                        by_path.insert(path, v.clone());
                    }
                    None => {
                        return Err(CliError::validation(format!(
                            "feature store has no vector for \"{path}\""
                        )))
                    }
                }
            }
        }
        None => {
            let paths = collect_paths(&val_manifest, &pair_entries);
            let entries = extract_all(&paths, aesthetic.as_ref(), technical.as_ref())?;
            let dim = entries[0].1.dim();
            let header = StoreHeader {
                aesthetic: aesthetic.name().to_string(),
                technical: technical.name().to_string(),
                dim,
            };
            features::store::write_store(&out.join("features.ugcf"), &header, &entries)?;
            by_path.extend(entries);
        }
    }

    let lookup = |path: &str| -> Result<FeatureVector, CliError> {
        by_path
            .get(path)
            .cloned()
            .ok_or_else(|| CliError::validation(format!("no features for \"{path}\"")))
    };
    let train_pairs: Vec<(FeatureVector, FeatureVector)> = pair_entries
        .iter()
        .map(|e| Ok((lookup(&e.pos_path)?, lookup(&e.neg_path)?)))
        .collect::<Result<_, CliError>>()?;

    let (val_triples, skipped) = build_val_triples(&val_manifest, &mut |r| {
        lookup(&r.path)
            .map_err(|e| ugcrank::ranker::RankerError::InvalidConfig(e.message().to_string()))
    })?;
    for style in &skipped {
        eprintln!("warning: val style \"{style}\" lacks a full studio/good/bad triple; skipped");
    }
    if val_triples.is_empty() {
        return Err(CliError::validation(
            "no validation style has all three buckets (studio, ugc_good, ugc_bad)",
        ));
    }

    let outcome = ranker::train(&train_pairs, &val_triples, &identity, &cfg)?;

    let ckpt_path = out.join("checkpoint.rnkr");
    checkpoint::save_checkpoint(&outcome.model, &ckpt_path)?;
    let mut history = Vec::new();
    for e in &outcome.history {
        history.push(serde_json::to_string(e).expect("history serializes"));
    }
    fs::write(out.join("history.jsonl"), history.join("\n") + "\n")?;

    echo_run_config(
        &out.join("run_config.json"),
        &json!({
            "command": "train",
            "manifest": manifest_args.manifest,
            "lenient": manifest_args.lenient,
            "pairs": pairs_path,
            "extractor": extractor,
            "features": features_path,
            "margin": cfg.margin,
            "lr": cfg.lr,
            "weight_decay": cfg.weight_decay,
            "batch_size": cfg.batch_size,
            "max_epochs": cfg.max_epochs,
            "patience": cfg.plateau_patience,
            "seed": cfg.seed,
        }),
    )?;

    println!(
        "trained {} pairs, {} val triples; best val accuracy {:.4} at epoch {}; checkpoint {}",
        train_pairs.len(),
        val_triples.len(),
        outcome.best_accuracy,
        outcome.best_epoch,
        ckpt_path.display()
    );
    Ok(())
}

pub fn score(
    model_path: PathBuf,
    extractor: &str,
    out: Option<PathBuf>,
    images: Vec<PathBuf>,
) -> Result<(), CliError> {
    let model = checkpoint::load_checkpoint(&model_path)?;
    let (aesthetic, technical, _identity) = build_extractors(extractor)?;
    let outcome = ranker::score_images(&model, aesthetic.as_ref(), technical.as_ref(), &images);
    if let Some(warning) = &outcome.extractor_warning {
        eprintln!("warning: {warning}");
    }
    for (path, msg) in &outcome.errors {
        eprintln!("warning: skipped {}: {msg}", path.display());
    }
    let mut rendered = String::new();
    for (path, s) in &outcome.scores {
        rendered.push_str(&format!("{s}\t{}\n", path.display()));
    }
    print!("{rendered}");
    if let Some(out) = &out {
        fs::write(out, &rendered)?;
        echo_run_config(
            &PathBuf::from(format!("{}.run.json", out.display())),
            &json!({
                "command": "score",
                "model": model_path,
                "extractor": extractor,
                "images": images,
            }),
        )?;
    }
    if outcome.scores.is_empty() {
        return Err(CliError::io("no image could be scored"));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    model_path: PathBuf,
    test_manifest: PathBuf,
    lenient: bool,
    baselines: bool,
    train_manifest: Option<PathBuf>,
    pairs_per_style: usize,
    seed: u64,
    extractor: &str,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let model = checkpoint::load_checkpoint(&model_path)?;
    let (aesthetic, technical, identity) = build_extractors(extractor)?;
    if let Some(warning) = model.extractor_mismatch(&identity) {
        eprintln!("warning: {warning}");
    }

    let manifest = load_manifest_file(&ManifestArgs {
        manifest: test_manifest.clone(),
        lenient,
    })?;
    let test = corpus::filter_split(&manifest, Split::Test);
    if test.records.is_empty() {
        return Err(CliError::validation(format!(
            "{} contains no split=test records",
            test_manifest.display()
        )));
    }

    let reserved: Option<HashSet<String>> = match &train_manifest {
        Some(path) => {
            let m = load_manifest_file(&ManifestArgs {
                manifest: path.clone(),
                lenient,
            })?;
            Some(m.records.into_iter().map(|r| r.id).collect())
        }
        None => None,
    };

    // One extraction pass over the test images; scorers share it.
    let feature_results: HashMap<String, Result<FeatureVector, String>> = test
        .records
        .iter()
        .map(|r| r.id.clone())
        .zip(exec::map_batch(&test.records, |r| {
            extract_from_path(Path::new(&r.path), aesthetic.as_ref(), technical.as_ref())
                .map_err(|e| e.to_string())
        }))
        .collect();
    let feature_of = |id: &str| -> Result<&FeatureVector, String> {
        feature_results
            .get(id)
            .ok_or_else(|| format!("no features for \"{id}\""))?
            .as_ref()
            .map_err(|e| e.clone())
    };

    let mut scorers: Vec<NamedScorer> = vec![NamedScorer {
        name: "ranker".into(),
        score: Box::new(|r| {
            let v = feature_of(&r.id)?;
            model.score(v).map_err(|e| e.to_string())
        }),
    }];
    if baselines {
        let layout = FeatureLayout::from_dim(model.mlp.input_dim())
            .map_err(|e| CliError::validation(format!("cannot infer feature layout: {e}")))?;
        scorers.push(NamedScorer {
            name: "baseline-aesthetic".into(),
            score: Box::new(move |r| {
                let v = feature_of(&r.id)?;
                let dist = layout
                    .aesthetic_distribution(v)
                    .map_err(|e| e.to_string())?;
                Ok(eval::baseline_score(BaselineKind::Aesthetic, &dist))
            }),
        });
        scorers.push(NamedScorer {
            name: "baseline-technical".into(),
            score: Box::new(move |r| {
                let v = feature_of(&r.id)?;
                let dist = layout
                    .technical_distribution(v)
                    .map_err(|e| e.to_string())?;
                Ok(eval::baseline_score(BaselineKind::Technical, &dist))
            }),
        });
    }

    let report = eval::evaluate(&scorers, &test, reserved.as_ref(), pairs_per_style, seed)?;
    let text = report.render_text();
    print!("{text}");

    if let Some(out) = &out {
        fs::create_dir_all(out)?;
        fs::write(out.join("report.txt"), &text)?;
        fs::write(out.join("report.json"), report.render_json() + "\n")?;
        echo_run_config(
            &out.join("run_config.json"),
            &json!({
                "command": "evaluate",
                "model": model_path,
                "test_manifest": test_manifest,
                "train_manifest": train_manifest,
                "baselines": baselines,
                "pairs_per_style": pairs_per_style,
                "seed": seed,
                "extractor": extractor,
            }),
        )?;
    }
    Ok(())
}

pub fn distort(input: PathBuf, spec_arg: &str, out: PathBuf) -> Result<(), CliError> {
    let spec_text = match spec_arg.strip_prefix('@') {
        Some(path) => {
            fs::read_to_string(path).map_err(|e| CliError::io(format!("spec file {path}: {e}")))?
        }
        None => spec_arg.to_string(),
    };
    let spec: DistortionSpec =
        serde_json::from_str(&spec_text).map_err(|e| CliError::validation(format!("spec: {e}")))?;
    spec.validate_shape()
        .map_err(|e| CliError::validation(e.to_string()))?;
    let img = imgio::load_rgb(&input)?;
    let distorted = distortion::apply_distortion(&img, &spec)
        .map_err(|e| CliError::validation(e.to_string()))?;
    imgio::save_png(&distorted, &out)?;
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(
        stdout,
        "applied {:?} to {} -> {} ({}x{})",
        spec.kind,
        input.display(),
        out.display(),
        distorted.width(),
        distorted.height()
    );
    Ok(())
}
