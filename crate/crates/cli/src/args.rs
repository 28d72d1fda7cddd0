//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Reach estimation toolkit for autoencoder manifolds.
#[derive(Debug, Parser)]
#[command(name = "reach", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as CSV.
    GenData(GenDataArgs),
    /// Pretrain an autoencoder on a point cloud.
    Train(TrainArgs),
    /// Continue training with the reach penalty active.
    Regularize(RegularizeArgs),
    /// Estimate reach at every observation and compare with its
    /// reconstruction distance.
    Analyze(AnalyzeArgs),
    /// Cross-check reach verdicts against a multi-restart nearest-point
    /// search.
    VerifyUniqueness(VerifyArgs),
    /// Measure estimator overestimation on quadratic surfaces across
    /// ambient dimensions.
    SweepDim(SweepArgs),
    /// Decode a latent grid to CSV for plotting the learned manifold.
    ExportManifold(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DatasetKind {
    /// Noisy circular arc in the plane.
    CircleArc,
    /// Quadratic surface embedded in n dimensions by a random rotation.
    QuadraticSurface,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseModeArg {
    Radial,
    Scalar,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Which dataset to generate.
    #[arg(long, value_enum, default_value = "circle-arc")]
    pub kind: DatasetKind,
    /// Number of points.
    #[arg(long, default_value_t = 400)]
    pub n_points: usize,
    /// Arc radius (circle-arc).
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Noise amplitude (circle-arc).
    #[arg(long, default_value_t = 1.5)]
    pub noise_amplitude: f64,
    /// Noise coupling (circle-arc).
    #[arg(long, value_enum, default_value = "radial")]
    pub noise_mode: NoiseModeArg,
    /// Arc span in radians (circle-arc); defaults to three quarter turns.
    #[arg(long)]
    pub arc_span: Option<f64>,
    /// Ambient dimension (quadratic-surface).
    #[arg(long, default_value_t = 3)]
    pub ambient_dim: usize,
    /// Latent disk radius (quadratic-surface).
    #[arg(long, default_value_t = 1.0)]
    pub domain_radius: f64,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long, default_value = "data.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training point cloud (CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// JSON run configuration; explicit flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Latent dimension.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Hidden widths of the encoder (decoder mirrors them), e.g. 16,16.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Pretraining epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    pub minibatch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// RNG seed (model init, shuffling, splits).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of the data held out for the test column (0 disables).
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Where to save the trained encoder.
    #[arg(long, default_value = "encoder.json")]
    pub encoder_out: PathBuf,
    /// Where to save the trained decoder.
    #[arg(long, default_value = "decoder.json")]
    pub decoder_out: PathBuf,
    /// Per-epoch training log (CSV), written when set.
    #[arg(long)]
    pub epochs_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegularizeArgs {
    /// Training point cloud (CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Trained encoder to continue from.
    #[arg(long, default_value = "encoder.json")]
    pub encoder: PathBuf,
    /// Trained decoder to continue from.
    #[arg(long, default_value = "decoder.json")]
    pub decoder: PathBuf,
    /// JSON run configuration; explicit flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Regularized epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Optional cap on regularized optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Reach penalty weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Penalty estimator: samples per batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Penalty estimator: batches per term.
    #[arg(long)]
    pub num_batches: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    pub minibatch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of the data held out for the test column (0 disables).
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Observations diagnosed per epoch for the within-reach column
    /// (0 disables the per-epoch diagnosis).
    #[arg(long, default_value_t = 100)]
    pub diagnosis_subsample: usize,
    /// Where to save the regularized encoder.
    #[arg(long, default_value = "encoder_reg.json")]
    pub encoder_out: PathBuf,
    /// Where to save the regularized decoder.
    #[arg(long, default_value = "decoder_reg.json")]
    pub decoder_out: PathBuf,
    /// Per-epoch training log (CSV), written when set.
    #[arg(long)]
    pub epochs_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Point cloud to diagnose (CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Encoder model file.
    #[arg(long, default_value = "encoder.json")]
    pub encoder: PathBuf,
    /// Decoder model file.
    #[arg(long, default_value = "decoder.json")]
    pub decoder: PathBuf,
    /// Fixed initial search radius; omitted means twice each observation's
    /// reconstruction distance.
    #[arg(long)]
    pub r0: Option<f64>,
    /// Estimator samples per batch.
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    /// Estimator batches per observation.
    #[arg(long, default_value_t = 10)]
    pub num_batches: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Diagnose only a seeded random subset of this size.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Warm-start each estimate with ratios against the reconstructed
    /// dataset.
    #[arg(long, default_value_t = false)]
    pub seed_from_dataset: bool,
    /// Output CSV path.
    #[arg(long, default_value = "diagnosis.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Point cloud to verify (CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Encoder model file.
    #[arg(long, default_value = "encoder.json")]
    pub encoder: PathBuf,
    /// Decoder model file.
    #[arg(long, default_value = "decoder.json")]
    pub decoder: PathBuf,
    /// Nearest-point search restarts per observation.
    #[arg(long, default_value_t = 32)]
    pub restarts: usize,
    /// Estimator samples per batch.
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    /// Estimator batches per observation.
    #[arg(long, default_value_t = 10)]
    pub num_batches: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Verify only a seeded random subset of this size.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Latent search box half-width for the nearest-point search.
    #[arg(long, default_value_t = 3.0)]
    pub latent_box: f64,
    /// Output CSV path.
    #[arg(long, default_value = "uniqueness.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Ambient dimensions to sweep, e.g. 3,5,10,50.
    #[arg(long, value_delimiter = ',', default_value = "3,5,10,50")]
    pub dims: Vec<usize>,
    /// Random surfaces per dimension.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Estimator initial radius.
    #[arg(long, default_value_t = 1.0)]
    pub r0: f64,
    /// Estimator samples per batch.
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    /// Estimator batches per trial.
    #[arg(long, default_value_t = 10)]
    pub num_batches: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Decoder model file.
    #[arg(long, default_value = "decoder.json")]
    pub decoder: PathBuf,
    /// Lower bound of the latent grid, per axis.
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    pub lo: f64,
    /// Upper bound of the latent grid, per axis.
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub hi: f64,
    /// Grid points per latent axis.
    #[arg(long, default_value_t = 201)]
    pub per_axis: usize,
    /// Output CSV path.
    #[arg(long, default_value = "manifold.csv")]
    pub out: PathBuf,
}
