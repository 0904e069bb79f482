//! Ranked training pair generation.
//!
//! Six pair classes, each pairing a known-better set against a known-worse
//! set: (1) studio vs distorted studio, (2) good UGC vs distorted good UGC,
//! (3) studio vs good UGC, (4) studio vs bad UGC, (5) good vs bad UGC with a
//! person visible, (6) good vs bad UGC without. Classes 1–2 synthesize the
//! negative by distorting the positive itself, so the supervisory signal is
//! purely the degradation. Sampling is with replacement and deterministic in
//! the config seed.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Bucket, Manifest};
use crate::distortion::{self, DistortionError, DistortionSpec};
use crate::exec;
use crate::hash::fnv1a64_str;
use crate::imgio::{self, ImgIoError};

/// Number of pair classes.
pub const N_CLASSES: usize = 6;

/// A sampled (better, worse) training pair, referencing manifest ids.
/// `neg_distortions` is present exactly for classes 1–2, where the negative
/// is the positive's image with the recorded chain applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPair {
    pub pos_id: String,
    pub neg_id: String,
    pub class_id: u8,
    pub neg_distortions: Option<Vec<DistortionSpec>>,
}

/// Pair sampling configuration.
#[derive(Debug, Clone)]
pub struct PairConfig {
    pub n_pairs: usize,
    /// Longest distortion chain attached to class 1–2 negatives.
    pub chain_max: usize,
    pub seed: u64,
    /// Relative class weights; normalized internally, uniform by default.
    pub class_weights: [f64; N_CLASSES],
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            n_pairs: 1000,
            chain_max: 2,
            seed: 0,
            class_weights: [1.0; N_CLASSES],
        }
    }
}

#[derive(Debug, Error)]
pub enum PairGenError {
    #[error("invalid pair config: {0}")]
    InvalidConfig(String),
    #[error("no pair class has both a positive and a negative candidate set")]
    NoEligiblePairs,
    #[error("pair references unknown record id \"{0}\"")]
    UnknownId(String),
    #[error("pair file line {line}: {msg}")]
    PairFile { line: usize, msg: String },
    #[error(transparent)]
    Distortion(#[from] DistortionError),
    #[error(transparent)]
    ImgIo(#[from] ImgIoError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Candidate record indices for one class row.
#[derive(Debug, Clone, Default)]
pub struct EligibleRow {
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

impl EligibleRow {
    pub fn is_populated(&self) -> bool {
        !self.pos.is_empty() && !self.neg.is_empty()
    }
}

/// The six candidate rows for a manifest. Rows 1–2 list the same records on
/// both sides (the negative is manufactured from the positive); rows 5–6
/// only admit records whose human flag is known.
pub fn eligible_sets(manifest: &Manifest) -> [EligibleRow; N_CLASSES] {
    let mut rows: [EligibleRow; N_CLASSES] = Default::default();
    for (i, r) in manifest.records.iter().enumerate() {
        match r.bucket {
            Bucket::Studio => {
                rows[0].pos.push(i);
                rows[0].neg.push(i);
                rows[2].pos.push(i);
                rows[3].pos.push(i);
            }
            Bucket::UgcGood => {
                rows[1].pos.push(i);
                rows[1].neg.push(i);
                rows[2].neg.push(i);
                match r.has_human {
                    Some(true) => rows[4].pos.push(i),
                    Some(false) => rows[5].pos.push(i),
                    None => {}
                }
            }
            Bucket::UgcBad => {
                rows[3].neg.push(i);
                match r.has_human {
                    Some(true) => rows[4].neg.push(i),
                    Some(false) => rows[5].neg.push(i),
                    None => {}
                }
            }
        }
    }
    rows
}

/// Samples exactly `cfg.n_pairs` pairs. Classes are drawn by weight over the
/// populated rows (weights on empty rows are dropped with a warning and the
/// rest renormalized); positives and negatives are uniform within a row.
/// Returns the pairs plus any warnings.
pub fn build_pairs(
    manifest: &Manifest,
    cfg: &PairConfig,
) -> Result<(Vec<RankedPair>, Vec<String>), PairGenError> {
    use rand::{Rng, SeedableRng};

    if cfg.n_pairs == 0 {
        return Err(PairGenError::InvalidConfig(
            "n_pairs must be at least 1".into(),
        ));
    }
    if cfg.chain_max == 0 {
        return Err(PairGenError::InvalidConfig(
            "chain_max must be at least 1".into(),
        ));
    }
    if cfg.class_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(PairGenError::InvalidConfig(
            "class weights must be finite and >= 0".into(),
        ));
    }

    let rows = eligible_sets(manifest);
    if !rows.iter().any(EligibleRow::is_populated) {
        return Err(PairGenError::NoEligiblePairs);
    }

    let mut warnings = Vec::new();
    let mut weights = cfg.class_weights;
    for (i, row) in rows.iter().enumerate() {
        if !row.is_populated() && weights[i] > 0.0 {
            warnings.push(format!(
                "class {} has weight {} but no candidates; renormalizing over populated classes",
                i + 1,
                weights[i]
            ));
            weights[i] = 0.0;
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(PairGenError::InvalidConfig(
            "all positive class weights fall on empty rows".into(),
        ));
    }

    let last_positive = weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("total > 0 implies a positive weight");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    for _ in 0..cfg.n_pairs {
        let mut draw = rng.random_range(0.0..total);
        // Rounding in the cumulative walk can leave a sliver past the last
        // weight; it belongs to the last populated class.
        let mut class = last_positive;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 && draw < w {
                class = i;
                break;
            }
            draw -= w;
        }
        let row = &rows[class];
        let pos_idx = row.pos[rng.random_range(0..row.pos.len())];
        let pos_id = manifest.records[pos_idx].id.clone();
        let pair = if class < 2 {
            let chain_len = rng.random_range(1..=cfg.chain_max);
            let specs: Vec<DistortionSpec> = (0..chain_len)
                .map(|_| distortion::sample_spec_with(&mut rng))
                .collect();
            RankedPair {
                neg_id: pos_id.clone(),
                pos_id,
                class_id: (class + 1) as u8,
                neg_distortions: Some(specs),
            }
        } else {
            let neg_idx = row.neg[rng.random_range(0..row.neg.len())];
            RankedPair {
                pos_id,
                neg_id: manifest.records[neg_idx].id.clone(),
                class_id: (class + 1) as u8,
                neg_distortions: None,
            }
        };
        pairs.push(pair);
    }
    Ok((pairs, warnings))
}

/// One line of the materialized pair file. `neg_distortions` is written as
/// an explicit `null` for classes 3–6.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFileEntry {
    pub pos_path: String,
    pub neg_path: String,
    pub class_id: u8,
    pub neg_distortions: Option<Vec<DistortionSpec>>,
}

/// Outcome of [`materialize`].
#[derive(Debug)]
pub struct MaterializeReport {
    /// Surviving pair entries, in input order.
    pub entries: Vec<PairFileEntry>,
    /// Distorted negatives newly written in this run.
    pub images_written: usize,
    /// Content-addressed negatives that already existed (idempotent re-run).
    pub images_reused: usize,
    /// Dropped pairs: (index into the input list, reason).
    pub dropped: Vec<(usize, String)>,
    /// Path of the pair file.
    pub pair_file: PathBuf,
}

/// Content-addressed file name for a distorted negative: hash of the source
/// id and the exact spec chain, so identical provenance maps to one file.
pub fn negative_image_name(pos_id: &str, specs: &[DistortionSpec]) -> String {
    let serialized = serde_json::to_string(specs).expect("distortion specs serialize infallibly");
    let key = format!("{pos_id}\n{serialized}");
    format!("{:016x}.png", fnv1a64_str(&key))
}

/// Renders distorted negatives and writes `pairs.jsonl` under `out_dir`.
/// Pair work runs data-parallel; already-materialized negatives are skipped,
/// so re-running over unchanged inputs writes nothing new. Undecodable
/// images drop their pair into the report instead of failing the run.
pub fn materialize(
    pairs: &[RankedPair],
    manifest: &Manifest,
    out_dir: &Path,
) -> Result<MaterializeReport, PairGenError> {
    let images_dir = out_dir.join("images");
    fs::create_dir_all(&images_dir)?;

    let path_by_id: HashMap<&str, &str> = manifest
        .records
        .iter()
        .map(|r| (r.id.as_str(), r.path.as_str()))
        .collect();

    enum Outcome {
        Entry { entry: PairFileEntry, wrote: bool },
        Dropped(String),
    }

    let outcomes = exec::map_batch(pairs, |pair| {
        let resolve = |id: &str| -> Result<String, String> {
            path_by_id
                .get(id)
                .map(|p| p.to_string())
                .ok_or_else(|| format!("unknown record id \"{id}\""))
        };
        let work = || -> Result<(PairFileEntry, bool), String> {
            let pos_path = resolve(&pair.pos_id)?;
            match &pair.neg_distortions {
                Some(specs) => {
                    let neg_path = images_dir.join(negative_image_name(&pair.pos_id, specs));
                    let mut wrote = false;
                    if !neg_path.exists() {
                        let src =
                            imgio::load_rgb(Path::new(&pos_path)).map_err(|e| e.to_string())?;
                        let distorted =
                            distortion::distort_chain(&src, specs).map_err(|e| e.to_string())?;
                        imgio::save_png(&distorted, &neg_path).map_err(|e| e.to_string())?;
                        wrote = true;
                    }
                    Ok((
                        PairFileEntry {
                            pos_path,
                            neg_path: neg_path.display().to_string(),
                            class_id: pair.class_id,
                            neg_distortions: Some(specs.clone()),
                        },
                        wrote,
                    ))
                }
                None => {
                    let neg_path = resolve(&pair.neg_id)?;
                    // Both sides must decode for the pair to be trainable.
                    imgio::load_rgb(Path::new(&pos_path)).map_err(|e| e.to_string())?;
                    imgio::load_rgb(Path::new(&neg_path)).map_err(|e| e.to_string())?;
                    Ok((
                        PairFileEntry {
                            pos_path,
                            neg_path,
                            class_id: pair.class_id,
                            neg_distortions: None,
                        },
                        wrote_nothing(),
                    ))
                }
            }
        };
        match work() {
            Ok((entry, wrote)) => Outcome::Entry { entry, wrote },
            Err(msg) => Outcome::Dropped(msg),
        }
    });

    let mut entries = Vec::with_capacity(pairs.len());
    let mut dropped = Vec::new();
    let mut images_written = 0;
    let mut images_reused = 0;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Outcome::Entry { entry, wrote } => {
                if entry.neg_distortions.is_some() {
                    if wrote {
                        images_written += 1;
                    } else {
                        images_reused += 1;
                    }
                }
                entries.push(entry);
            }
            Outcome::Dropped(msg) => dropped.push((i, msg)),
        }
    }

    let pair_file = out_dir.join("pairs.jsonl");
    let mut buf = Vec::new();
    for entry in &entries {
        serde_json::to_writer(&mut buf, entry)
            .map_err(|e| PairGenError::Io(std::io::Error::other(e)))?;
        buf.push(b'\n');
    }
    imgio::write_atomic(&pair_file, &buf)?;

    Ok(MaterializeReport {
        entries,
        images_written,
        images_reused,
        dropped,
        pair_file,
    })
}

fn wrote_nothing() -> bool {
    false
}

/// Parses a pair file written by [`materialize`].
pub fn load_pairs(reader: impl BufRead) -> Result<Vec<PairFileEntry>, PairGenError> {
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: PairFileEntry =
            serde_json::from_str(&line).map_err(|e| PairGenError::PairFile {
                line: idx + 1,
                msg: e.to_string(),
            })?;
        if let Some(specs) = &entry.neg_distortions {
            if specs.is_empty() {
                return Err(PairGenError::PairFile {
                    line: idx + 1,
                    msg: "neg_distortions present but empty".into(),
                });
            }
            for spec in specs {
                spec.validate_shape().map_err(|e| PairGenError::PairFile {
                    line: idx + 1,
                    msg: e.to_string(),
                })?;
            }
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Writes pair entries (used by tests and tools to round trip pair files).
pub fn save_pairs(entries: &[PairFileEntry], mut writer: impl Write) -> Result<(), PairGenError> {
    for entry in entries {
        let line =
            serde_json::to_string(entry).map_err(|e| PairGenError::Io(std::io::Error::other(e)))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ImageRecord, Split};

    fn record(id: &str, bucket: Bucket, has_human: Option<bool>) -> ImageRecord {
        ImageRecord {
            id: id.to_string(),
            path: format!("{id}.png"),
            bucket,
            style_id: "s".into(),
            has_human,
            upvotes: 0,
            downvotes: 0,
            split: Split::Train,
        }
    }

    fn full_manifest() -> Manifest {
        let mut records = Vec::new();
        for i in 0..4 {
            records.push(record(&format!("st{i}"), Bucket::Studio, None));
        }
        for i in 0..4 {
            records.push(record(&format!("gd{i}"), Bucket::UgcGood, Some(i % 2 == 0)));
        }
        for i in 0..4 {
            records.push(record(&format!("bd{i}"), Bucket::UgcBad, Some(i % 2 == 0)));
        }
        Manifest {
            records,
            source_uri: "t".into(),
        }
    }

    #[test]
    fn studio_only_manifest_populates_row_one_only() {
        let m = Manifest {
            records: vec![
                record("a", Bucket::Studio, None),
                record("b", Bucket::Studio, None),
            ],
            source_uri: "t".into(),
        };
        let rows = eligible_sets(&m);
        assert!(rows[0].is_populated());
        for row in &rows[1..] {
            assert!(!row.is_populated());
        }
    }

    #[test]
    fn unknown_human_flag_excluded_from_rows_five_six() {
        let m = Manifest {
            records: vec![
                record("g", Bucket::UgcGood, None),
                record("b", Bucket::UgcBad, Some(true)),
            ],
            source_uri: "t".into(),
        };
        let rows = eligible_sets(&m);
        // The good record still feeds rows 2 (both sides) and 3 (negative).
        assert_eq!(rows[1].pos, vec![0]);
        assert_eq!(rows[1].neg, vec![0]);
        assert_eq!(rows[2].neg, vec![0]);
        assert!(rows[4].pos.is_empty());
        assert!(rows[5].pos.is_empty());
    }

    #[test]
    fn full_manifest_populates_all_rows() {
        let rows = eligible_sets(&full_manifest());
        for (i, row) in rows.iter().enumerate() {
            assert!(row.is_populated(), "row {} empty", i + 1);
        }
    }

    #[test]
    fn zero_pairs_rejected() {
        let cfg = PairConfig {
            n_pairs: 0,
            ..Default::default()
        };
        assert!(matches!(
            build_pairs(&full_manifest(), &cfg),
            Err(PairGenError::InvalidConfig(_))
        ));
    }

    #[test]
    fn empty_manifest_rejected() {
        let m = Manifest {
            records: vec![],
            source_uri: "t".into(),
        };
        assert!(matches!(
            build_pairs(&m, &PairConfig::default()),
            Err(PairGenError::NoEligiblePairs)
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = full_manifest();
        let cfg = PairConfig {
            n_pairs: 200,
            seed: 99,
            ..Default::default()
        };
        let (a, _) = build_pairs(&m, &cfg).unwrap();
        let (b, _) = build_pairs(&m, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_class_counts_concentrate() {
        let m = full_manifest();
        let cfg = PairConfig {
            n_pairs: 6000,
            seed: 5,
            ..Default::default()
        };
        let (pairs, warnings) = build_pairs(&m, &cfg).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(pairs.len(), 6000);
        let mut counts = [0usize; N_CLASSES];
        for p in &pairs {
            counts[(p.class_id - 1) as usize] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            assert!((850..=1150).contains(&c), "class {} count {c}", i + 1);
        }
    }

    #[test]
    fn weight_on_empty_row_warns_and_renormalizes() {
        let m = Manifest {
            records: vec![record("a", Bucket::Studio, None)],
            source_uri: "t".into(),
        };
        let cfg = PairConfig {
            n_pairs: 50,
            seed: 1,
            ..Default::default()
        };
        let (pairs, warnings) = build_pairs(&m, &cfg).unwrap();
        assert_eq!(pairs.len(), 50);
        assert_eq!(warnings.len(), 5, "five empty rows carried weight");
        assert!(pairs.iter().all(|p| p.class_id == 1));
    }

    #[test]
    fn pairs_satisfy_row_membership() {
        let m = full_manifest();
        let by_id: HashMap<&str, &ImageRecord> =
            m.records.iter().map(|r| (r.id.as_str(), r)).collect();
        let cfg = PairConfig {
            n_pairs: 500,
            seed: 3,
            chain_max: 3,
            ..Default::default()
        };
        let (pairs, _) = build_pairs(&m, &cfg).unwrap();
        for p in &pairs {
            let pos = by_id[p.pos_id.as_str()];
            match p.class_id {
                1 | 2 => {
                    let want = if p.class_id == 1 {
                        Bucket::Studio
                    } else {
                        Bucket::UgcGood
                    };
                    assert_eq!(pos.bucket, want);
                    assert_eq!(p.neg_id, p.pos_id);
                    let specs = p.neg_distortions.as_ref().unwrap();
                    assert!(!specs.is_empty() && specs.len() <= 3);
                    for s in specs {
                        s.validate_ranges().unwrap();
                    }
                }
                3 | 4 => {
                    let neg = by_id[p.neg_id.as_str()];
                    assert_eq!(pos.bucket, Bucket::Studio);
                    let want = if p.class_id == 3 {
                        Bucket::UgcGood
                    } else {
                        Bucket::UgcBad
                    };
                    assert_eq!(neg.bucket, want);
                    assert!(p.neg_distortions.is_none());
                }
                5 | 6 => {
                    let neg = by_id[p.neg_id.as_str()];
                    assert_eq!(pos.bucket, Bucket::UgcGood);
                    assert_eq!(neg.bucket, Bucket::UgcBad);
                    let want = Some(p.class_id == 5);
                    assert_eq!(pos.has_human, want, "positive flag mixed");
                    assert_eq!(neg.has_human, want, "negative flag mixed");
                }
                other => panic!("class {other} out of range"),
            }
        }
    }

    mod materialize_tests {
        use super::*;
        use crate::fixture;

        fn disk_manifest(dir: &Path) -> Manifest {
            let spec = fixture::CorpusSpec {
                train_studio: 3,
                train_good: 2,
                train_bad: 2,
                val_styles: 0,
                test_clean: 0,
                test_tiered: 0,
                image_size: 48,
                seed: 40,
            };
            fixture::generate_corpus(dir, &spec).unwrap()
        }

        #[test]
        fn single_class_one_pair_materializes_one_image_and_line() {
            let dir = tempfile::tempdir().unwrap();
            let m = disk_manifest(dir.path());
            let out = dir.path().join("out");
            let pairs = vec![RankedPair {
                pos_id: "studio-000".into(),
                neg_id: "studio-000".into(),
                class_id: 1,
                neg_distortions: Some(vec![crate::distortion::sample_spec(4)]),
            }];
            let report = materialize(&pairs, &m, &out).unwrap();
            assert_eq!(report.entries.len(), 1);
            assert_eq!(report.images_written, 1);
            assert!(report.dropped.is_empty());
            let lines = std::fs::read_to_string(&report.pair_file).unwrap();
            assert_eq!(lines.lines().count(), 1);
        }

        #[test]
        fn rerun_is_idempotent() {
            let dir = tempfile::tempdir().unwrap();
            let m = disk_manifest(dir.path());
            let out = dir.path().join("out");
            let cfg = PairConfig {
                n_pairs: 20,
                seed: 11,
                ..Default::default()
            };
            let (pairs, _) = build_pairs(&m, &cfg).unwrap();
            let first = materialize(&pairs, &m, &out).unwrap();
            let second = materialize(&pairs, &m, &out).unwrap();
            assert!(first.images_written > 0);
            assert_eq!(second.images_written, 0, "re-run must write nothing new");
            assert_eq!(
                second.images_reused,
                first.images_written + first.images_reused
            );
            assert_eq!(first.entries, second.entries);
        }

        #[test]
        fn corrupt_image_drops_only_its_pair() {
            let dir = tempfile::tempdir().unwrap();
            let m = disk_manifest(dir.path());
            // Corrupt one studio image on disk.
            let victim = m.records.iter().position(|r| r.id == "studio-001").unwrap();
            std::fs::write(&m.records[victim].path, b"garbage").unwrap();

            let out = dir.path().join("out");
            let mk = |pos: &str, seed| RankedPair {
                pos_id: pos.into(),
                neg_id: pos.into(),
                class_id: 1,
                neg_distortions: Some(vec![crate::distortion::sample_spec(seed)]),
            };
            let pairs = vec![
                mk("studio-000", 1),
                mk("studio-001", 2),
                mk("studio-002", 3),
            ];
            let report = materialize(&pairs, &m, &out).unwrap();
            assert_eq!(report.entries.len(), 2);
            assert_eq!(report.dropped.len(), 1);
            assert_eq!(report.dropped[0].0, 1);
            let lines = std::fs::read_to_string(&report.pair_file).unwrap();
            assert_eq!(lines.lines().count(), 2);
        }

        #[test]
        fn recorded_chains_replay_byte_identically() {
            let dir = tempfile::tempdir().unwrap();
            let m = disk_manifest(dir.path());
            let out = dir.path().join("out");
            let cfg = PairConfig {
                n_pairs: 12,
                seed: 21,
                class_weights: [1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
                ..Default::default()
            };
            let (pairs, _) = build_pairs(&m, &cfg).unwrap();
            let report = materialize(&pairs, &m, &out).unwrap();
            let by_id: HashMap<&str, &str> = m
                .records
                .iter()
                .map(|r| (r.id.as_str(), r.path.as_str()))
                .collect();
            for entry in &report.entries {
                let specs = entry.neg_distortions.as_ref().unwrap();
                let pos_id = pairs
                    .iter()
                    .find(|p| by_id[p.pos_id.as_str()] == entry.pos_path)
                    .map(|p| p.pos_id.as_str())
                    .unwrap();
                let src = imgio::load_rgb(Path::new(&entry.pos_path)).unwrap();
                let replayed = distortion::distort_chain(&src, specs).unwrap();
                let replayed_bytes = imgio::encode_png(&replayed).unwrap();
                let on_disk = std::fs::read(&entry.neg_path).unwrap();
                assert_eq!(replayed_bytes, on_disk, "replay mismatch for {pos_id}");
            }
        }

        #[test]
        fn pair_file_round_trips() {
            let dir = tempfile::tempdir().unwrap();
            let m = disk_manifest(dir.path());
            let out = dir.path().join("out");
            let cfg = PairConfig {
                n_pairs: 15,
                seed: 2,
                ..Default::default()
            };
            let (pairs, _) = build_pairs(&m, &cfg).unwrap();
            let report = materialize(&pairs, &m, &out).unwrap();
            let file = std::fs::File::open(&report.pair_file).unwrap();
            let loaded = load_pairs(std::io::BufReader::new(file)).unwrap();
            assert_eq!(loaded, report.entries);
        }
    }
}
