//! ugcrank — quality ranking for user-generated product images.
//!
//! The pipeline turns an unlabeled image corpus into a trained ranking model:
//!
//! 1. **corpus** — manifest of images bucketed as studio / good UGC / bad UGC,
//!    with vote counts that provide proxy ground truth for evaluation.
//! 2. **distortion** — seeded, replayable image degradations (crops, jitter,
//!    blur, noise, grayscale, rotation) that manufacture known-worse copies.
//! 3. **pairgen** — the six-class pair sampling strategy producing (better,
//!    worse) training pairs, with distorted negatives materialized to disk.
//! 4. **features** — per-image feature vectors from pluggable backbone
//!    extractors plus score distributions and image geometry.
//! 5. **ranker** — a Siamese scoring MLP trained with a pairwise hinge loss,
//!    ADAM, and plateau LR halving; checkpoints are self-contained.
//! 6. **eval** — per-style Pearson correlation and sampled pair accuracy
//!    against the upvote-ratio proxy, reported per model.
//!
//! Batch stages run data-parallel via rayon when the `parallel` feature
//! (default) is enabled; disabling it yields a dependency-light sequential
//! build with identical results.

pub mod corpus;
pub mod distortion;
pub mod eval;
pub mod exec;
pub mod features;
pub mod fixture;
pub mod hash;
pub mod imgio;
pub mod pairgen;
pub mod ranker;
pub mod raster;

pub use raster::RgbImage;
