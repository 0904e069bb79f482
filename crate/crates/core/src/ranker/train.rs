//! Training loop: seeded init, shuffled mini-batches, ADAM steps, per-epoch
//! validation accuracy, plateau LR halving, and best-accuracy model
//! selection.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::features::{apply_normalizer, fit_normalizer, FeatureVector};

use super::{
    architecture, evaluate_batch, training_rng, Adam, Mlp, PlateauScheduler, RankerError,
    RankerModel,
};

/// Training hyperparameters. Defaults: margin 1, lr 1e-3, weight decay
/// 5e-4, batch 16, up to 50 epochs, LR halved after 5 non-improving epochs,
/// ADAM (0.9, 0.999, 1e-8).
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub margin: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            lr: 1e-3,
            weight_decay: 5e-4,
            batch_size: 16,
            max_epochs: 50,
            plateau_patience: 5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RankerError> {
        let fail = |msg: &str| Err(RankerError::InvalidConfig(msg.to_string()));
        if self.margin.is_nan() || self.margin <= 0.0 {
            return fail("margin must be > 0");
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return fail("lr must be > 0");
        }
        if self.weight_decay < 0.0 {
            return fail("weight_decay must be >= 0");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be >= 1");
        }
        if self.plateau_patience == 0 {
            return fail("plateau_patience must be >= 1");
        }
        Ok(())
    }
}

/// One validation style: its studio, good-UGC, and bad-UGC image features.
#[derive(Debug, Clone)]
pub struct ValTriple {
    pub style_id: String,
    pub studio: FeatureVector,
    pub good: FeatureVector,
    pub bad: FeatureVector,
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean hinge loss over the epoch's pairs.
    pub loss: f64,
    pub val_accuracy: f64,
    /// Learning rate in effect during this epoch.
    pub lr: f64,
}

/// Result of [`train`]: the best-validation-accuracy snapshot plus the full
/// history.
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: RankerModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_accuracy: f64,
}

/// Trains the scoring network on (positive, negative) feature pairs.
///
/// The normalizer is fitted on the training pair features and becomes part
/// of the returned model. Validation accuracy is the fraction of correctly
/// ordered pairs among the three orderings each triple implies
/// (studio > good, studio > bad, good > bad; ties count as wrong).
/// Deterministic for a fixed config.
pub fn train(
    pairs: &[(FeatureVector, FeatureVector)],
    val: &[ValTriple],
    extractor_identity: &str,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, RankerError> {
    cfg.validate()?;
    if pairs.is_empty() || val.is_empty() {
        return Err(RankerError::MissingData);
    }
    let dim = pairs[0].0.dim();
    for (p, n) in pairs {
        for v in [p, n] {
            if v.dim() != dim {
                return Err(RankerError::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
        }
    }
    for t in val {
        for v in [&t.studio, &t.good, &t.bad] {
            if v.dim() != dim {
                return Err(RankerError::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
        }
    }

    let mut all: Vec<FeatureVector> = Vec::with_capacity(pairs.len() * 2);
    for (p, n) in pairs {
        all.push(p.clone());
        all.push(n.clone());
    }
    let norm = fit_normalizer(&all)?;
    drop(all);

    let normalize = |v: &FeatureVector| apply_normalizer(v, &norm).map_err(RankerError::from);
    let train_pairs: Vec<(Vec<f64>, Vec<f64>)> = pairs
        .iter()
        .map(|(p, n)| Ok((normalize(p)?, normalize(n)?)))
        .collect::<Result<_, RankerError>>()?;
    let val_triples: Vec<[Vec<f64>; 3]> = val
        .iter()
        .map(|t| {
            Ok([
                normalize(&t.studio)?,
                normalize(&t.good)?,
                normalize(&t.bad)?,
            ])
        })
        .collect::<Result<_, RankerError>>()?;

    let mut rng = training_rng(cfg.seed);
    let mut mlp = Mlp::init_fan_in(&architecture(dim), &mut rng)?;
    let mut adam = Adam::new(&mlp, cfg.beta1, cfg.beta2, cfg.eps);
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.plateau_patience);

    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(f64, usize, Mlp)> = None;
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(Vec<f64>, Vec<f64>)> =
                chunk.iter().map(|&i| train_pairs[i].clone()).collect();
            let eval =
                evaluate_batch(&mlp, &batch, cfg.margin, cfg.weight_decay).map_err(
                    |e| match e {
                        RankerError::NonFinite { context } => RankerError::NonFinite {
                            context: format!("{context} (epoch {epoch}, batch {batch_idx})"),
                        },
                        other => other,
                    },
                )?;
            loss_sum += eval.hinge_loss * chunk.len() as f64;
            adam.step(&mut mlp, &eval.gradient, lr);
        }
        let loss = loss_sum / train_pairs.len() as f64;
        let val_accuracy = validation_accuracy(&mlp, &val_triples)?;
        history.push(EpochStats {
            epoch,
            loss,
            val_accuracy,
            lr,
        });

        if best.as_ref().is_none_or(|(acc, _, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, epoch, mlp.clone()));
        }
        sched.observe(val_accuracy);
    }

    let (best_accuracy, best_epoch, best_mlp) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model: RankerModel {
            mlp: best_mlp,
            norm,
            extractor: extractor_identity.to_string(),
        },
        history,
        best_epoch,
        best_accuracy,
    })
}

/// Fraction of the 3 ordered pairs per triple scored strictly in the right
/// order.
fn validation_accuracy(mlp: &Mlp, triples: &[[Vec<f64>; 3]]) -> Result<f64, RankerError> {
    let mut correct = 0usize;
    for [studio, good, bad] in triples {
        let s = mlp.forward(studio)?;
        let g = mlp.forward(good)?;
        let b = mlp.forward(bad)?;
        correct += usize::from(s > g) + usize::from(s > b) + usize::from(g > b);
    }
    Ok(correct as f64 / (3 * triples.len()) as f64)
}

/// Builds validation triples out of a manifest's val split: for each style
/// with at least one record of every bucket, the first of each is used.
/// Returns the triples and the style ids skipped for missing buckets.
pub fn build_val_triples(
    manifest: &crate::corpus::Manifest,
    features_for: &mut dyn FnMut(&crate::corpus::ImageRecord) -> Result<FeatureVector, RankerError>,
) -> Result<(Vec<ValTriple>, Vec<String>), RankerError> {
    use crate::corpus::Bucket;
    use std::collections::BTreeMap;

    let mut by_style: BTreeMap<&str, [Option<&crate::corpus::ImageRecord>; 3]> = BTreeMap::new();
    for r in &manifest.records {
        let slot = match r.bucket {
            Bucket::Studio => 0,
            Bucket::UgcGood => 1,
            Bucket::UgcBad => 2,
        };
        let entry = by_style.entry(r.style_id.as_str()).or_default();
        if entry[slot].is_none() {
            entry[slot] = Some(r);
        }
    }
    let mut triples = Vec::new();
    let mut skipped = Vec::new();
    for (style, slots) in by_style {
        match slots {
            [Some(studio), Some(good), Some(bad)] => triples.push(ValTriple {
                style_id: style.to_string(),
                studio: features_for(studio)?,
                good: features_for(good)?,
                bad: features_for(bad)?,
            }),
            _ => skipped.push(style.to_string()),
        }
    }
    Ok((triples, skipped))
}
