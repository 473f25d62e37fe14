//! Command-line surface.

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "fhdnn",
    version,
    about = "Weight-clustered feature extraction and hyperdimensional few-shot learning"
)]
pub struct Cli {
    /// Optional key=value config file (or a previous run's manifest JSON)
    /// merged beneath the flags: explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,

    /// Where to write the reproducibility manifest (defaults next to the
    /// first output artifact).
    #[arg(long, global = true)]
    pub manifest: Option<std::path::PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster a dense-weights model (FHW1) into a clustered model (FHC1).
    Cluster(ClusterArgs),
    /// Run the PE-array model over one layer of a clustered model.
    Simulate(SimulateArgs),
    /// Single-pass train a class memory from a feature file.
    HdcTrain(HdcTrainArgs),
    /// Classify a feature file against a trained class memory.
    HdcInfer(HdcInferArgs),
    /// Run seeded few-shot episodes on the synthetic benchmark.
    Episodes(EpisodesArgs),
    /// Dense-vs-clustered operation and parameter accounting.
    Costs(CostsArgs),
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Dense model file (FHW1).
    #[arg(long)]
    pub input: std::path::PathBuf,
    /// Clustered model output (FHC1).
    #[arg(long)]
    pub output: std::path::PathBuf,
    /// Centroids per filter, 1-16.
    #[arg(long, default_value_t = 16)]
    pub g: usize,
    /// Channels sharing one index map; 0 means all channels of a layer.
    #[arg(long, default_value_t = 0)]
    pub group_size: usize,
    /// Round weights to bf16 before clustering.
    #[arg(long, default_value_t = false)]
    pub bf16: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Clustered model file (FHC1).
    #[arg(long)]
    pub model: std::path::PathBuf,
    /// Layer index within the model.
    #[arg(long, default_value_t = 0)]
    pub layer: usize,
    /// CSV report to append to (header is written if the file is new).
    #[arg(long)]
    pub report: std::path::PathBuf,
    /// Also write the JSON report here (it always goes to stdout).
    #[arg(long)]
    pub json: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct HdcTrainArgs {
    /// Feature file (FHT1, samples x 1 x F).
    #[arg(long)]
    pub features: std::path::PathBuf,
    /// Label sidecar (FHL1).
    #[arg(long)]
    pub labels: std::path::PathBuf,
    /// Class memory output (FHV1).
    #[arg(long)]
    pub output: std::path::PathBuf,
    /// Hypervector dimension, 1024-8192.
    #[arg(long, default_value_t = 4096)]
    pub d: usize,
    /// Class count; defaults to max label + 1.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Precision used when classifying during training and inference, 1-16.
    #[arg(long, default_value_t = 16)]
    pub infer_bits: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// penalize-only | penalize-reinforce
    #[arg(long, default_value = "penalize-only")]
    pub update_rule: String,
}

#[derive(Debug, Args)]
pub struct HdcInferArgs {
    /// Feature file (FHT1).
    #[arg(long)]
    pub features: std::path::PathBuf,
    /// Trained class memory (FHV1).
    #[arg(long)]
    pub memory: std::path::PathBuf,
    /// Optional label sidecar; enables the accuracy summary.
    #[arg(long)]
    pub labels: Option<std::path::PathBuf>,
    /// Prediction CSV output.
    #[arg(long)]
    pub output: std::path::PathBuf,
    #[arg(long, default_value_t = 16)]
    pub infer_bits: u8,
    /// Must match the seed the memory was trained with (it keys the
    /// on-the-fly projection blocks).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EpisodesArgs {
    #[arg(long, default_value_t = 10)]
    pub way: usize,
    #[arg(long, default_value_t = 5)]
    pub shot: usize,
    #[arg(long, default_value_t = 10)]
    pub query: usize,
    #[arg(long, default_value_t = 20)]
    pub episodes: usize,
    /// Feature dimension, 16-1024.
    #[arg(long, default_value_t = 64)]
    pub f: usize,
    /// Hypervector dimension, 1024-8192.
    #[arg(long, default_value_t = 4096)]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub infer_bits: u8,
    /// Synthetic dataset classes (>= way).
    #[arg(long, default_value_t = 12)]
    pub classes: usize,
    /// Samples per dataset class (>= shot + query).
    #[arg(long, default_value_t = 20)]
    pub per_class: usize,
    /// Noise scale of the synthetic Gaussian benchmark.
    #[arg(long, default_value_t = 0.24)]
    pub spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// penalize-only | penalize-reinforce
    #[arg(long, default_value = "penalize-only")]
    pub update_rule: String,
    /// Episode CSV output.
    #[arg(long)]
    pub output: std::path::PathBuf,
    /// JSON summary (means and standard errors per configuration).
    #[arg(long)]
    pub summary: Option<std::path::PathBuf>,
    /// Sweep lists; when given they override the scalar d/infer_bits/shot.
    #[arg(long, value_delimiter = ',')]
    pub d_list: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub bits_list: Vec<u8>,
    #[arg(long, value_delimiter = ',')]
    pub shot_list: Vec<usize>,
    /// Dump the synthetic dataset as a feature file (FHT1).
    #[arg(long)]
    pub dump_features: Option<std::path::PathBuf>,
    /// Label sidecar for --dump-features (FHL1).
    #[arg(long)]
    pub dump_labels: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostsArgs {
    /// Model to account: `vgg16` (embedded) or a clustered-model file path.
    #[arg(long, default_value = "vgg16")]
    pub model: String,
    /// Centroids per filter, 1-16.
    #[arg(long, default_value_t = 16)]
    pub g: usize,
    /// Channels sharing one index map; 0 means all channels of a layer.
    #[arg(long, default_value_t = 0)]
    pub group_size: usize,
    /// Optional CSV with the per-layer table.
    #[arg(long)]
    pub output: Option<std::path::PathBuf>,
}
