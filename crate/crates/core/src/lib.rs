//! End-to-end few-shot learning pipeline: a weight-clustered CNN feature
//! extractor with a cycle-approximate PE-array model, and a
//! hyperdimensional-computing classifier with cyclic random projection
//! encoding and single-pass training.
//!
//! Modules mirror the pipeline stages:
//!
//! - [`tensor`]: dense tensors, layer specs, and the reference convolution
//!   that serves as the oracle for the clustered path.
//! - [`wclust`]: weight clustering, cross-filter pattern sharing, the
//!   accumulate-then-multiply executor, and cost accounting.
//! - [`pesim`]: the 4x16 PE-array cycle and utilization model.
//! - [`hdc`]: cyclic-random-projection encoding, L1 inference at 1-16 bit
//!   class precision, and single-pass few-shot training.
//! - [`harness`]: episodes, the kNN-L1 baseline, synthetic benchmarks, and
//!   sweep reporting.
//! - [`io`]: the binary file formats and CSV/JSON report writers.

pub mod error;
pub mod harness;
pub mod hdc;
pub mod io;
pub mod pesim;
pub mod rng;
pub mod tensor;
pub mod vgg16;
pub mod wclust;

pub use error::{Error, Result};
pub use harness::{
    extract_features, knn_l1, make_synthetic_dataset, run_episode_sweep, run_pipeline,
    sample_episode, Episode, EpisodeReport, LabeledFeatures, SweepParams, SweepSummary,
};
pub use hdc::{
    classify, crp_matrix_entry, encode, fsl_train_single_pass, l1_distance, memory_footprint,
    quantize, ClassMemory, CrpSeedBlock, EncoderMode, HdcConfig, Hypervector, UpdateRule,
};
pub use pesim::{
    schedule_clustered, schedule_layer, simulate, simulate_traced, ArrayConfig, LayerSchedule,
    SimReport,
};
pub use rng::CounterRng;
pub use tensor::{
    dense_conv2d, dense_cost, global_avg_pool, max_pool2, relu, round_to_bf16, ConvLayerSpec,
    DenseFilterBank, OpCounters, Tensor3,
};
pub use vgg16::vgg16_conv_stack;
pub use wclust::{
    cluster_filter, clustered_conv2d, clustered_cost, expand, share_patterns, ClusteredFilter,
    ClusteredLayer, CostRecord, PatternGroup,
};
