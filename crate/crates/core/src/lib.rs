//! Cross-stream pooled descriptors for two-stream video classification.
//!
//! The pipeline normalizes per-stream convolutional feature maps, weights
//! each stream by the other's per-position activation mass, pools the result
//! along point trajectories, encodes the pooled descriptors with Fisher
//! vectors or VLAD, and classifies with one-vs-rest linear SVMs whose raw
//! scores are fused by summation.

// Numeric kernels index several parallel buffers at once; iterator zips would
// obscure the stride arithmetic the correctness arguments are written in.
#![allow(clippy::needless_range_loop)]

pub mod classify;
pub mod encode;
pub mod error;
pub mod io;
pub mod matrix;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod tensor;
pub mod trajectory;

pub use classify::{
    accuracy, fuse_scores, predict, svm_score, svm_train, svm_train_with, LinearSvmModel,
    ScoreMatrix,
};
pub use encode::{
    assemble_layer, encode_video, fisher_encode, gmm_fit, gmm_fit_trace, kmeans_fit, pca_fit,
    postnormalize, subsample_rows, vlad_encode, Encoder, GmmModel, KmeansModel,
    LayerRepresentation, PcaModel, RepBlock, DEFAULT_SAMPLE_CAP,
};
pub use error::{CpdError, Result};
pub use matrix::Matrix;
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutcome};
pub use synth::{generate_corpus, SynthSpec, SynthSummary};
pub use tensor::{
    channel_normalize, cross_stream, cross_stream_with, normalize, spatiotemporal_normalize,
    weight_map, CrossStreamMap, FeatureMap, MapDims, NormMode, NormalizedMap, Stream, VideoDims,
    WeightMap,
};
pub use trajectory::{
    map_point, pool_all, pool_cpd_direct, pool_cpd_weighted, pool_cpd_weighted_with, pool_tdd,
    scale_ratios, DescriptorKind, DescriptorSet, PooledDescriptor, PreparedMaps, Trajectory,
    TrajectoryPoint, TrajectorySet,
};
