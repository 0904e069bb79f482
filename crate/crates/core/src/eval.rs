//! Evaluation against vote-derived proxy ground truth.
//!
//! Test images are grouped by style (one product); for each style and each
//! model we report the Pearson correlation between model scores and proxy
//! scores, plus the accuracy over up to 50 sampled image pairs whose proxy
//! scores differ. Macro averages over styles mirror the usual results-table
//! layout.

use std::collections::HashSet;

use rand::SeedableRng;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{proxy_score, ImageRecord, Manifest};
use crate::features::{expected_score, FeatureError, ScoreDistribution};

/// Default number of sampled pairs per style.
pub const DEFAULT_PAIRS_PER_STYLE: usize = 50;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("correlation undefined: {0} scores are constant")]
    ConstantInput(&'static str),
    #[error("accuracy undefined: no pair of images has distinct proxy scores")]
    NoDistinctPairs,
    #[error("test manifest shares {n} id(s) with the training/validation set: {ids:?}")]
    Leakage { n: usize, ids: Vec<String> },
    #[error("record \"{id}\": proxy score undefined in a test set (no votes)")]
    UndefinedProxy { id: String },
    #[error("scoring \"{id}\" failed: {msg}")]
    ScoringFailed { id: String, msg: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Test images of one style with their proxy scores.
#[derive(Debug, Clone)]
pub struct StyleGroup {
    pub style_id: String,
    pub records: Vec<ImageRecord>,
    pub proxy: Vec<f64>,
}

/// A style left out of a report, with the reason.
pub type SkippedStyle = (String, String);

/// Groups a test manifest by style. Every record must carry votes; styles
/// with fewer than two images are returned separately as skipped.
pub fn build_style_groups(
    manifest: &Manifest,
) -> Result<(Vec<StyleGroup>, Vec<SkippedStyle>), EvalError> {
    use std::collections::BTreeMap;
    // Every test record must carry votes, even ones in styles too small to
    // evaluate.
    for r in &manifest.records {
        proxy_score(r).map_err(|_| EvalError::UndefinedProxy { id: r.id.clone() })?;
    }
    let mut by_style: BTreeMap<&str, Vec<&ImageRecord>> = BTreeMap::new();
    for r in &manifest.records {
        by_style.entry(r.style_id.as_str()).or_default().push(r);
    }
    let mut groups = Vec::new();
    let mut skipped = Vec::new();
    for (style, records) in by_style {
        if records.len() < 2 {
            skipped.push((style.to_string(), "fewer than 2 images".to_string()));
            continue;
        }
        let proxy = records
            .iter()
            .map(|r| proxy_score(r).expect("validated above"))
            .collect();
        groups.push(StyleGroup {
            style_id: style.to_string(),
            records: records.into_iter().cloned().collect(),
            proxy,
        });
    }
    Ok((groups, skipped))
}

/// Standard Pearson correlation coefficient: covariance over the product of
/// the two standard deviations. Errors when either input is constant.
pub fn pearson(f: &[f64], g: &[f64]) -> Result<f64, EvalError> {
    if f.len() != g.len() {
        return Err(EvalError::LengthMismatch {
            a: f.len(),
            b: g.len(),
        });
    }
    if f.len() < 2 {
        return Err(EvalError::TooFewValues {
            needed: 2,
            got: f.len(),
        });
    }
    let is_constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if is_constant(f) {
        return Err(EvalError::ConstantInput("model"));
    }
    if is_constant(g) {
        return Err(EvalError::ConstantInput("ground-truth"));
    }
    let n = f.len() as f64;
    let mean_f = f.iter().sum::<f64>() / n;
    let mean_g = g.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut ss_f = 0.0;
    let mut ss_g = 0.0;
    for (&a, &b) in f.iter().zip(g) {
        let da = a - mean_f;
        let db = b - mean_g;
        cov += da * db;
        ss_f += da * da;
        ss_g += db * db;
    }
    Ok(cov / (ss_f.sqrt() * ss_g.sqrt()))
}

/// The unordered index pairs `(i, j)` with distinct proxy scores that
/// [`pair_accuracy`] samples from, in deterministic enumeration order.
pub fn distinct_pairs(g: &[f64]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..g.len() {
        for j in i + 1..g.len() {
            if g[i] != g[j] {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Sampled pair accuracy: draws `min(n_pairs, available)` unordered pairs
/// with distinct proxy scores, uniformly without replacement, and counts the
/// fraction whose model ordering strictly agrees with the proxy ordering
/// (model-score ties are misclassifications). The sample depends only on
/// `(g, n_pairs, seed)`, so different models are judged on identical pairs.
pub fn pair_accuracy(g: &[f64], f: &[f64], n_pairs: usize, seed: u64) -> Result<f64, EvalError> {
    if f.len() != g.len() {
        return Err(EvalError::LengthMismatch {
            a: f.len(),
            b: g.len(),
        });
    }
    let pool = distinct_pairs(g);
    if pool.is_empty() {
        return Err(EvalError::NoDistinctPairs);
    }
    let k = n_pairs.min(pool.len());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, pool.len(), k);
    let mut correct = 0usize;
    for idx in chosen {
        let (i, j) = pool[idx];
        let (hi, lo) = if g[i] > g[j] { (i, j) } else { (j, i) };
        if f[hi] > f[lo] {
            correct += 1;
        }
    }
    Ok(correct as f64 / k as f64)
}

/// Expected-score baseline over a backbone's predicted distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Aesthetic,
    Technical,
}

/// The baseline score is simply the expectation of the distribution the
/// named backbone head predicted for the image.
pub fn baseline_score(_kind: BaselineKind, dist: &ScoreDistribution) -> f64 {
    expected_score(dist)
}

/// A scoring function over test records; failures carry a message.
pub type ScoreFn<'a> = Box<dyn Fn(&ImageRecord) -> Result<f64, String> + Sync + 'a>;

/// A named scoring function over test records.
pub struct NamedScorer<'a> {
    pub name: String,
    pub score: ScoreFn<'a>,
}

/// Per-style metrics for every model.
#[derive(Debug, Clone, Serialize)]
pub struct StyleEval {
    pub style_id: String,
    pub n_images: usize,
    pub n_pairs: usize,
    /// Indexed like the report's model list: (pearson, accuracy).
    pub metrics: Vec<(f64, f64)>,
}

/// Full evaluation report.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub models: Vec<String>,
    pub styles: Vec<StyleEval>,
    /// (mean pearson, mean accuracy) per model over evaluated styles.
    pub macro_avg: Vec<(f64, f64)>,
    pub skipped_styles: Vec<SkippedStyle>,
    pub pairs_per_style: usize,
    pub seed: u64,
}

/// Runs the full protocol: leakage check, style grouping, per-style metrics
/// for every scorer, macro averages.
///
/// `reserved_ids` is the train+val id set; any overlap with the test
/// manifest is a hard error. Styles where a metric is undefined (constant
/// scores, no distinct-proxy pairs) are skipped and listed.
pub fn evaluate(
    scorers: &[NamedScorer],
    test_manifest: &Manifest,
    reserved_ids: Option<&HashSet<String>>,
    pairs_per_style: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if let Some(reserved) = reserved_ids {
        let mut leaked: Vec<String> = test_manifest
            .records
            .iter()
            .filter(|r| reserved.contains(&r.id))
            .map(|r| r.id.clone())
            .collect();
        if !leaked.is_empty() {
            leaked.sort();
            return Err(EvalError::Leakage {
                n: leaked.len(),
                ids: leaked,
            });
        }
    }

    let (groups, mut skipped) = build_style_groups(test_manifest)?;
    let mut styles = Vec::new();
    'group: for group in &groups {
        // Score every image once per model.
        let mut per_model_scores = Vec::with_capacity(scorers.len());
        for scorer in scorers {
            let mut scores = Vec::with_capacity(group.records.len());
            for r in &group.records {
                let s = (scorer.score)(r).map_err(|msg| EvalError::ScoringFailed {
                    id: r.id.clone(),
                    msg,
                })?;
                scores.push(s);
            }
            per_model_scores.push(scores);
        }

        let pool_size = distinct_pairs(&group.proxy).len();
        if pool_size == 0 {
            skipped.push((
                group.style_id.clone(),
                "no distinct-proxy pairs".to_string(),
            ));
            continue;
        }
        // Per-style seed keeps pair samples independent across styles while
        // staying identical across models and reruns.
        let style_seed = seed ^ crate::hash::fnv1a64_str(&group.style_id);
        let mut metrics = Vec::with_capacity(scorers.len());
        for scores in &per_model_scores {
            let rho = match pearson(scores, &group.proxy) {
                Ok(r) => r,
                Err(EvalError::ConstantInput(which)) => {
                    skipped.push((group.style_id.clone(), format!("constant {which} scores")));
                    continue 'group;
                }
                Err(e) => return Err(e),
            };
            let acc = pair_accuracy(&group.proxy, scores, pairs_per_style, style_seed)?;
            metrics.push((rho, acc));
        }
        styles.push(StyleEval {
            style_id: group.style_id.clone(),
            n_images: group.records.len(),
            n_pairs: pairs_per_style.min(pool_size),
            metrics,
        });
    }

    let macro_avg = (0..scorers.len())
        .map(|m| {
            let n = styles.len().max(1) as f64;
            let rho = styles.iter().map(|s| s.metrics[m].0).sum::<f64>() / n;
            let acc = styles.iter().map(|s| s.metrics[m].1).sum::<f64>() / n;
            (rho, acc)
        })
        .collect();

    Ok(EvalReport {
        models: scorers.iter().map(|s| s.name.clone()).collect(),
        styles,
        macro_avg,
        skipped_styles: skipped,
        pairs_per_style,
        seed,
    })
}

impl EvalReport {
    /// Human-readable table: one row per model with its macro-averaged
    /// correlation and accuracy, then per-style detail.
    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let name_w = self
            .models
            .iter()
            .map(|m| m.len())
            .max()
            .unwrap_or(5)
            .max("model".len());
        let _ = writeln!(
            out,
            "{:name_w$}  {:>22}  {:>8}",
            "model", "correlation coefficient", "accuracy"
        );
        for (name, (rho, acc)) in self.models.iter().zip(&self.macro_avg) {
            let _ = writeln!(out, "{name:name_w$}  {rho:>22.4}  {acc:>8.4}");
        }
        let _ = writeln!(
            out,
            "\naveraged over {} style(s), {} sampled pairs per style, seed {}",
            self.styles.len(),
            self.pairs_per_style,
            self.seed
        );
        if !self.styles.is_empty() {
            let _ = writeln!(out, "\nper-style detail:");
            for s in &self.styles {
                let _ = write!(
                    out,
                    "  {} ({} images, {} pairs):",
                    s.style_id, s.n_images, s.n_pairs
                );
                for (name, (rho, acc)) in self.models.iter().zip(&s.metrics) {
                    let _ = write!(out, "  {name} rho={rho:.4} acc={acc:.4}");
                }
                let _ = writeln!(out);
            }
        }
        if !self.skipped_styles.is_empty() {
            let _ = writeln!(out, "\nskipped styles:");
            for (style, reason) in &self.skipped_styles {
                let _ = writeln!(out, "  {style}: {reason}");
            }
        }
        out
    }

    /// Machine-readable JSON with per-style detail.
    pub fn render_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}
