//! The Siamese scoring network.
//!
//! One MLP scores both members of a pair (shared parameters are what makes
//! it "Siamese"); training pushes the better image's score above the worse
//! one's by a margin via the pairwise hinge loss. Parameters are stored as
//! `f32` — matching the checkpoint format exactly, so round trips are
//! bit-exact — while all arithmetic runs in `f64`.

pub mod checkpoint;
pub mod optim;
pub mod train;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exec;
use crate::features::{
    apply_normalizer, extract_from_path, FeatureError, FeatureExtractor, FeatureVector, NormStats,
};

pub use optim::{Adam, PlateauScheduler};
pub use train::{train, EpochStats, TrainConfig, TrainOutcome, ValTriple};

#[derive(Debug, Error)]
pub enum RankerError {
    #[error("input dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("batch must contain at least one pair")]
    EmptyBatch,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training requires at least one pair and one validation triple")]
    MissingData,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One dense layer: `weights` is `out_dim x in_dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

/// Plain MLP with ReLU hidden activations and a linear scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(dims: &[usize]) -> Result<Self, RankerError> {
        Self::check_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            layers,
        })
    }

    /// Seeded uniform fan-in initialization: weights from
    /// `U(-sqrt(6/fan_in), +sqrt(6/fan_in))`, biases zero.
    pub fn init_fan_in(dims: &[usize], rng: &mut impl Rng) -> Result<Self, RankerError> {
        let mut mlp = Self::zeros(dims)?;
        for (layer, w) in mlp.layers.iter_mut().zip(dims.windows(2)) {
            let bound = (6.0 / w[0] as f64).sqrt();
            for weight in &mut layer.weights {
                *weight = rng.random_range(-bound..bound) as f32;
            }
        }
        Ok(mlp)
    }

    fn check_dims(dims: &[usize]) -> Result<(), RankerError> {
        if dims.len() < 2 {
            return Err(RankerError::InvalidConfig(
                "need at least input and output dims".into(),
            ));
        }
        if dims.contains(&0) {
            return Err(RankerError::InvalidConfig(
                "layer dims must be nonzero".into(),
            ));
        }
        if *dims.last().unwrap() != 1 {
            return Err(RankerError::InvalidConfig(
                "output layer must be scalar".into(),
            ));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    /// Scalar score for a (normalized) input.
    pub fn forward(&self, x: &[f64]) -> Result<f64, RankerError> {
        let trace = self.forward_trace(x)?;
        let out = trace.output;
        if !out.is_finite() {
            return Err(RankerError::NonFinite {
                context: "network output".into(),
            });
        }
        Ok(out)
    }

    /// Forward pass retaining pre-activations and activations for backprop.
    fn forward_trace(&self, x: &[f64]) -> Result<Trace, RankerError> {
        if x.len() != self.input_dim() {
            return Err(RankerError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let n_layers = self.layers.len();
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        let mut pre_activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        activations.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let in_dim = self.dims[l];
            let out_dim = self.dims[l + 1];
            let input = &activations[l];
            let mut z = vec![0.0f64; out_dim];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.weights[o * in_dim..(o + 1) * in_dim];
                let mut acc = layer.biases[o] as f64;
                for (w, a) in row.iter().zip(input) {
                    acc += *w as f64 * a;
                }
                *zo = acc;
            }
            let a = if l + 1 < n_layers {
                z.iter().map(|&v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            pre_activations.push(z);
            activations.push(a);
        }
        let output = activations.last().unwrap()[0];
        Ok(Trace {
            activations,
            pre_activations,
            output,
        })
    }

    /// Accumulates `d output / d theta * upstream` into `grad` by
    /// backpropagating a single input's trace.
    fn backprop_into(&self, trace: &Trace, upstream: f64, grad: &mut Gradient) {
        let n_layers = self.layers.len();
        let mut delta = vec![upstream];
        for l in (0..n_layers).rev() {
            let in_dim = self.dims[l];
            let out_dim = self.dims[l + 1];
            let input = &trace.activations[l];
            debug_assert_eq!(delta.len(), out_dim);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad.weights[l][o * in_dim..(o + 1) * in_dim];
                for (gw, a) in row.iter_mut().zip(input) {
                    *gw += d * a;
                }
                grad.biases[l][o] += d;
            }
            if l > 0 {
                let layer = &self.layers[l];
                let mut prev = vec![0.0f64; in_dim];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * in_dim..(o + 1) * in_dim];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * *w as f64;
                    }
                }
                // ReLU gate of the layer below.
                for (p, &z) in prev.iter_mut().zip(&trace.pre_activations[l - 1]) {
                    if z <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
}

struct Trace {
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    output: f64,
}

/// Gradient with the same shape as the model parameters, in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            biases: mlp
                .layers
                .iter()
                .map(|l| vec![0.0; l.biases.len()])
                .collect(),
        }
    }
}

/// Pairwise hinge ranking loss for one pair:
/// `max(0, margin - delta * (s_pos - s_neg))` with `delta = +1` when
/// `y_pos >= y_neg`, `-1` otherwise. Zero exactly when the correctly-ordered
/// score difference clears the margin.
pub fn hinge_pair_loss(s_pos: f64, s_neg: f64, y_pos: f64, y_neg: f64, margin: f64) -> f64 {
    let delta = if y_pos >= y_neg { 1.0 } else { -1.0 };
    (margin - delta * (s_pos - s_neg)).max(0.0)
}

/// Loss and gradient of one batch of (positive, negative) normalized inputs.
#[derive(Debug)]
pub struct BatchEval {
    /// Mean hinge loss over the batch.
    pub hinge_loss: f64,
    /// hinge_loss + (weight_decay/2) * ||theta||^2 — the quantity whose
    /// gradient is returned.
    pub objective: f64,
    pub gradient: Gradient,
}

/// Evaluates the batch objective (mean hinge + L2 term) and its exact
/// gradient. Pairs whose margin is already satisfied contribute nothing to
/// the hinge part; weight decay contributes `weight_decay * theta` across
/// all parameters.
pub fn evaluate_batch(
    mlp: &Mlp,
    batch: &[(Vec<f64>, Vec<f64>)],
    margin: f64,
    weight_decay: f64,
) -> Result<BatchEval, RankerError> {
    if batch.is_empty() {
        return Err(RankerError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut grad = Gradient::zeros_like(mlp);
    let mut hinge_sum = 0.0;
    for (pos, neg) in batch {
        let pos_trace = mlp.forward_trace(pos)?;
        let neg_trace = mlp.forward_trace(neg)?;
        let loss = hinge_pair_loss(pos_trace.output, neg_trace.output, 1.0, 0.0, margin);
        hinge_sum += loss;
        if loss > 0.0 {
            mlp.backprop_into(&pos_trace, -1.0 / n, &mut grad);
            mlp.backprop_into(&neg_trace, 1.0 / n, &mut grad);
        }
    }

    let mut sq_norm = 0.0;
    if weight_decay != 0.0 {
        for (l, layer) in mlp.layers.iter().enumerate() {
            for (g, &w) in grad.weights[l].iter_mut().zip(&layer.weights) {
                *g += weight_decay * w as f64;
                sq_norm += (w as f64) * (w as f64);
            }
            for (g, &b) in grad.biases[l].iter_mut().zip(&layer.biases) {
                *g += weight_decay * b as f64;
                sq_norm += (b as f64) * (b as f64);
            }
        }
    }

    for (l, (ws, bs)) in grad.weights.iter().zip(&grad.biases).enumerate() {
        if ws.iter().chain(bs).any(|g| !g.is_finite()) {
            return Err(RankerError::NonFinite {
                context: format!("gradient of layer {l}"),
            });
        }
    }
    let hinge_loss = hinge_sum / n;
    if !hinge_loss.is_finite() {
        return Err(RankerError::NonFinite {
            context: "batch loss".into(),
        });
    }
    Ok(BatchEval {
        hinge_loss,
        objective: hinge_loss + 0.5 * weight_decay * sq_norm,
        gradient: grad,
    })
}

/// The trained scoring model: MLP, the feature normalizer it was fitted
/// with, and the extractor identity its features came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RankerModel {
    pub mlp: Mlp,
    pub norm: NormStats,
    pub extractor: String,
}

/// Hidden layer widths of the scoring network.
pub const HIDDEN_DIMS: [usize; 3] = [512, 256, 128];

/// The full dimension chain for a given feature dimension.
pub fn architecture(input_dim: usize) -> Vec<usize> {
    vec![input_dim, HIDDEN_DIMS[0], HIDDEN_DIMS[1], HIDDEN_DIMS[2], 1]
}

impl RankerModel {
    /// Scores one raw feature vector: z-normalize, then run the MLP.
    pub fn score(&self, v: &FeatureVector) -> Result<f64, RankerError> {
        let x = apply_normalizer(v, &self.norm)?;
        self.mlp.forward(&x)
    }

    /// Batch loss/gradient over raw feature pairs (normalization applied
    /// internally, matching [`RankerModel::score`] semantics).
    pub fn pair_gradient(
        &self,
        batch: &[(FeatureVector, FeatureVector)],
        margin: f64,
        weight_decay: f64,
    ) -> Result<BatchEval, RankerError> {
        let normalized = batch
            .iter()
            .map(|(p, n)| {
                Ok((
                    apply_normalizer(p, &self.norm)?,
                    apply_normalizer(n, &self.norm)?,
                ))
            })
            .collect::<Result<Vec<_>, FeatureError>>()?;
        evaluate_batch(&self.mlp, &normalized, margin, weight_decay)
    }

    /// Warning text when the supplied extractor pair is not the one this
    /// model was trained with.
    pub fn extractor_mismatch(&self, identity: &str) -> Option<String> {
        (self.extractor != identity).then(|| {
            format!(
                "checkpoint was trained with extractor \"{}\" but \"{}\" was supplied",
                self.extractor, identity
            )
        })
    }
}

/// Result of scoring a set of image files.
#[derive(Debug)]
pub struct ScoreOutcome {
    /// (path, score), sorted by descending score; ties broken by path.
    pub scores: Vec<(PathBuf, f64)>,
    /// Images that failed to decode or score, with reasons.
    pub errors: Vec<(PathBuf, String)>,
    /// Present when the extractor identity differs from the checkpoint's.
    pub extractor_warning: Option<String>,
}

/// Scores images from disk (extraction runs data-parallel) and returns a
/// ranking. Per-image failures are collected, not fatal.
pub fn score_images(
    model: &RankerModel,
    aesthetic: &dyn FeatureExtractor,
    technical: &dyn FeatureExtractor,
    paths: &[PathBuf],
) -> ScoreOutcome {
    let identity = format!("{}+{}", aesthetic.name(), technical.name());
    let extractor_warning = model.extractor_mismatch(&identity);
    let results = exec::map_batch(paths, |path| {
        extract_from_path(path, aesthetic, technical)
            .map_err(RankerError::from)
            .and_then(|v| model.score(&v))
            .map_err(|e| e.to_string())
    });
    let mut scores = Vec::new();
    let mut errors = Vec::new();
    for (path, result) in paths.iter().zip(results) {
        match result {
            Ok(score) => scores.push((path.clone(), score)),
            Err(msg) => errors.push((path.clone(), msg)),
        }
    }
    scores.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    ScoreOutcome {
        scores,
        errors,
        extractor_warning,
    }
}

/// Seeded RNG used for weight init and batch shuffling.
pub(crate) fn training_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
