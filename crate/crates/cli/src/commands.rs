//! Subcommand implementations.
//!
//! Every command returns a process exit code: 0 on success, [`EXIT_INPUT`]
//! for bad inputs (missing files, malformed CSV/JSON, invalid flags) and
//! [`EXIT_DEGENERATE`] when more than half of the examined observations had
//! to be skipped for rank-deficient Jacobians. Each invocation logs one
//! stderr line with the binary version, the seed and a SHA-256 digest of the
//! resolved configuration, so runs can be matched to their outputs later.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use reach_core::analysis::{diagnose, DiagnosisConfig, RadiusPolicy};
use reach_core::analytic::AnalyticManifold;
use reach_core::datasets::{
    decode_latent_grid, gen_circle_arc, gen_quadratic_surface_samples, load_point_cloud,
    save_point_cloud, train_test_split, CircleArcConfig, NoiseMode,
};
use reach_core::geometry::{AmbientPoint, LatentPoint};
use reach_core::nn::{load_model, save_model, Mlp, ModelRole};
use reach_core::projection::{project_with_encoder, ProjectionConfig};
use reach_core::sampling::{estimate_reach_from_latent, rng_stream, SamplerConfig};
use reach_core::training::{train, EpochReport, TrainingConfig};
use reach_core::{Error, Result};

use crate::args::{
    AnalyzeArgs, Command, DatasetKind, ExportArgs, GenDataArgs, NoiseModeArg, RegularizeArgs,
    SweepArgs, TrainArgs, VerifyArgs,
};

/// Exit code for input errors (files, flags, schemas).
pub const EXIT_INPUT: i32 = 2;
/// Exit code when a diagnosis skipped more than half of its observations.
pub const EXIT_DEGENERATE: i32 = 3;

// RNG sub-streams owned by the CLI. The core crate reserves stream 0
// (dataset generation), `u64::MAX` (splits), `u64::MAX - 1` (diagnosis
// subsampling), small indices (per-observation diagnosis), `2^40 + epoch`
// (shuffles) and `2^60 + ...` (penalty sampling); the bases below stay clear
// of all of them.
const MODEL_INIT_STREAM: u64 = 1 << 41;
const PROJECTION_STREAM_BASE: u64 = 3 << 40;
const SWEEP_STREAM_BASE: u64 = 1 << 42;

/// Maps an error to the exit code of the process.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io(_)
        | Error::Json(_)
        | Error::ParseError { .. }
        | Error::RaggedRows { .. }
        | Error::InvalidArgument { .. }
        | Error::InvalidModelFile { .. }
        | Error::EmptySampleSet
        | Error::InsufficientSamples { .. }
        | Error::DuplicatePoint { .. }
        | Error::DimensionMismatch { .. } => EXIT_INPUT,
        _ => 1,
    }
}

pub fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::GenData(args) => gen_data(&args),
        Command::Train(args) => run_train(&args),
        Command::Regularize(args) => run_regularize(&args),
        Command::Analyze(args) => run_analyze(&args),
        Command::VerifyUniqueness(args) => run_verify(&args),
        Command::SweepDim(args) => run_sweep(&args),
        Command::ExportManifold(args) => run_export(&args),
    }
}

// ───────────────────────── run configuration ─────────────────────────

/// Current version of the JSON run-configuration schema.
pub const RUN_CONFIG_VERSION: u32 = 1;

/// Architecture and training settings shared by `train` and `regularize`.
/// Explicit command-line flags override individual fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    /// Latent (bottleneck) dimension.
    pub latent_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them in reverse.
    pub hidden: Vec<usize>,
    pub training: TrainingConfig<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            format_version: RUN_CONFIG_VERSION,
            latent_dim: 1,
            hidden: vec![16, 16],
            training: TrainingConfig::default(),
        }
    }
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)?;
    let cfg: RunConfig = serde_json::from_str(&text)?;
    if cfg.format_version != RUN_CONFIG_VERSION {
        return Err(Error::InvalidModelFile {
            reason: format!(
                "unsupported config format_version {} (expected {})",
                cfg.format_version, RUN_CONFIG_VERSION
            ),
        });
    }
    Ok(cfg)
}

/// Logs the one-line run fingerprint: version, seed and a SHA-256 digest of
/// the resolved configuration (after flag/file/default merging).
fn log_invocation(seed: u64, resolved: &serde_json::Value) {
    let bytes = serde_json::to_vec(resolved).expect("resolved config serializes");
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    eprintln!(
        "reach {} seed={seed} config_sha256={hex}",
        env!("CARGO_PKG_VERSION")
    );
}

// ───────────────────────── shared helpers ─────────────────────────

fn load_role_model(path: &Path, expected: ModelRole) -> Result<Mlp<f64>> {
    let (model, role) = load_model::<f64, _>(path)?;
    if role != expected {
        return Err(Error::InvalidModelFile {
            reason: format!(
                "{} stores a model with role {:?}, expected {:?}",
                path.display(),
                role,
                expected
            ),
        });
    }
    Ok(model)
}

/// Shortest round-trip decimal; infinities print as `inf`, which Rust's
/// float parser accepts back.
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

fn write_epoch_csv(path: &Path, reports: &[EpochReport<f64>]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,lambda,recon_train,recon_test,reach_loss,pct_within_reach")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.epoch,
            fmt(r.lambda),
            fmt(r.recon_train),
            fmt(r.recon_test.unwrap_or(f64::NAN)),
            fmt(r.reach_loss),
            fmt(r.pct_within_reach.unwrap_or(f64::NAN)),
        )?;
    }
    w.flush()?;
    Ok(())
}

fn epoch_progress(r: &EpochReport<f64>) {
    let test = r
        .recon_test
        .map(|v| format!(" recon_test={v:.6e}"))
        .unwrap_or_default();
    let pct = r
        .pct_within_reach
        .map(|v| format!(" within_reach={v:.1}%"))
        .unwrap_or_default();
    eprintln!(
        "epoch {:>4} lambda={} recon_train={:.6e}{test} reach_loss={:.6e}{pct}",
        r.epoch, r.lambda, r.recon_train, r.reach_loss
    );
}

/// Splits off a held-out set; a zero fraction (or a split too small to hold
/// anything back) trains on everything.
fn split_data(
    points: &[AmbientPoint<f64>],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<AmbientPoint<f64>>, Option<Vec<AmbientPoint<f64>>>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument {
            name: "test_fraction",
            reason: format!("must lie in [0, 1), got {test_fraction}"),
        });
    }
    if test_fraction == 0.0 || points.len() < 2 {
        return Ok((points.to_vec(), None));
    }
    let (train_set, test_set) = train_test_split(points, test_fraction, seed);
    if train_set.is_empty() || test_set.is_empty() {
        return Ok((points.to_vec(), None));
    }
    Ok((train_set, Some(test_set)))
}

fn check_dims(ambient_dim: usize, latent_dim: usize) -> Result<()> {
    if latent_dim == 0 || latent_dim >= ambient_dim {
        return Err(Error::InvalidArgument {
            name: "latent_dim",
            reason: format!(
                "need 1 <= latent_dim < ambient dimension ({ambient_dim}), got {latent_dim}"
            ),
        });
    }
    Ok(())
}

// ───────────────────────── gen-data ─────────────────────────

fn gen_data(args: &GenDataArgs) -> Result<i32> {
    let points = match args.kind {
        DatasetKind::CircleArc => {
            let cfg = CircleArcConfig {
                n_points: args.n_points,
                radius: args.radius,
                noise_amplitude: args.noise_amplitude,
                noise_mode: match args.noise_mode {
                    NoiseModeArg::Radial => NoiseMode::Radial,
                    NoiseModeArg::Scalar => NoiseMode::Scalar,
                },
                arc_span: args
                    .arc_span
                    .unwrap_or(CircleArcConfig::<f64>::default().arc_span),
                seed: args.seed,
            };
            log_invocation(
                args.seed,
                &serde_json::json!({ "command": "gen-data", "kind": "circle-arc", "config": cfg }),
            );
            gen_circle_arc(&cfg)?
        }
        DatasetKind::QuadraticSurface => {
            log_invocation(
                args.seed,
                &serde_json::json!({
                    "command": "gen-data",
                    "kind": "quadratic-surface",
                    "n_points": args.n_points,
                    "ambient_dim": args.ambient_dim,
                    "domain_radius": args.domain_radius,
                    "seed": args.seed,
                }),
            );
            gen_quadratic_surface_samples(args.ambient_dim, args.n_points, args.domain_radius, args.seed)?
                .points
        }
    };
    save_point_cloud(&args.out, &points)?;
    println!(
        "wrote {} points (dim {}) -> {}",
        points.len(),
        points[0].dim(),
        args.out.display()
    );
    Ok(0)
}

// ───────────────────────── train ─────────────────────────

fn run_train(args: &TrainArgs) -> Result<i32> {
    let mut cfg = load_run_config(args.config.as_deref())?;
    if let Some(d) = args.latent_dim {
        cfg.latent_dim = d;
    }
    if let Some(h) = &args.hidden {
        cfg.hidden = h.clone();
    }
    if let Some(e) = args.epochs {
        cfg.training.pretrain_epochs = e;
    }
    if let Some(b) = args.minibatch_size {
        cfg.training.batch_size = b;
    }
    if let Some(lr) = args.learning_rate {
        cfg.training.learning_rate = lr;
    }
    if let Some(s) = args.seed {
        cfg.training.seed = s;
    }
    // This command is the plain pretraining phase; the penalty phase lives in
    // `regularize`.
    cfg.training.regularized_epochs = 0;
    cfg.training.regularized_steps = None;
    cfg.training.diagnosis = None;
    let seed = cfg.training.seed;
    log_invocation(
        seed,
        &serde_json::json!({
            "command": "train",
            "data": args.data.display().to_string(),
            "test_fraction": args.test_fraction,
            "config": cfg,
        }),
    );

    let points = load_point_cloud::<f64>(&args.data)?;
    if points.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let ambient_dim = points[0].dim();
    check_dims(ambient_dim, cfg.latent_dim)?;
    let (train_set, test_set) = split_data(&points, args.test_fraction, seed)?;

    let mut init_rng = rng_stream(seed, MODEL_INIT_STREAM);
    let mut encoder = Mlp::elu_net(ambient_dim, &cfg.hidden, cfg.latent_dim, &mut init_rng)?;
    let reversed: Vec<usize> = cfg.hidden.iter().rev().copied().collect();
    let mut decoder = Mlp::elu_net(cfg.latent_dim, &reversed, ambient_dim, &mut init_rng)?;

    let mut progress = |r: &EpochReport<f64>| epoch_progress(r);
    let reports = train(
        &mut encoder,
        &mut decoder,
        &train_set,
        test_set.as_deref(),
        &cfg.training,
        Some(&mut progress),
    )?;

    save_model(&args.encoder_out, &encoder, ModelRole::Encoder)?;
    save_model(&args.decoder_out, &decoder, ModelRole::Decoder)?;
    if let Some(path) = &args.epochs_out {
        write_epoch_csv(path, &reports)?;
    }

    let n_test = test_set.as_ref().map_or(0, Vec::len);
    println!(
        "pretrained {} epochs on {} train / {n_test} test points",
        reports.len(),
        train_set.len()
    );
    if let Some(last) = reports.last() {
        match last.recon_test {
            Some(t) => println!("final recon_train={} recon_test={}", fmt(last.recon_train), fmt(t)),
            None => println!("final recon_train={}", fmt(last.recon_train)),
        }
    }
    println!("encoder -> {}", args.encoder_out.display());
    println!("decoder -> {}", args.decoder_out.display());
    Ok(0)
}

// ───────────────────────── regularize ─────────────────────────

fn run_regularize(args: &RegularizeArgs) -> Result<i32> {
    let mut cfg = load_run_config(args.config.as_deref())?;
    if let Some(e) = args.epochs {
        cfg.training.regularized_epochs = e;
    }
    if args.steps.is_some() {
        cfg.training.regularized_steps = args.steps;
    }
    if let Some(l) = args.lambda {
        cfg.training.lambda = l;
    }
    if let Some(b) = args.batch_size {
        cfg.training.sampler.batch_size = b;
    }
    if let Some(n) = args.num_batches {
        cfg.training.sampler.num_batches = n;
    }
    if let Some(b) = args.minibatch_size {
        cfg.training.batch_size = b;
    }
    if let Some(lr) = args.learning_rate {
        cfg.training.learning_rate = lr;
    }
    if let Some(s) = args.seed {
        cfg.training.seed = s;
    }
    cfg.training.pretrain_epochs = 0;
    if cfg.training.regularized_epochs == 0 {
        cfg.training.regularized_epochs = 20;
    }
    cfg.training.diagnosis = if args.diagnosis_subsample > 0 {
        Some(DiagnosisConfig {
            subsample: Some(args.diagnosis_subsample),
            seed: cfg.training.seed,
            ..DiagnosisConfig::default()
        })
    } else {
        None
    };
    let seed = cfg.training.seed;
    log_invocation(
        seed,
        &serde_json::json!({
            "command": "regularize",
            "data": args.data.display().to_string(),
            "encoder": args.encoder.display().to_string(),
            "decoder": args.decoder.display().to_string(),
            "test_fraction": args.test_fraction,
            "config": cfg,
        }),
    );

    let points = load_point_cloud::<f64>(&args.data)?;
    if points.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    // Same split stream as `train`, so a matching seed and fraction keep the
    // held-out set held out across both phases.
    let (train_set, test_set) = split_data(&points, args.test_fraction, seed)?;

    let mut encoder = load_role_model(&args.encoder, ModelRole::Encoder)?;
    let mut decoder = load_role_model(&args.decoder, ModelRole::Decoder)?;
    check_dims(encoder.input_dim(), encoder.output_dim())?;

    let mut progress = |r: &EpochReport<f64>| epoch_progress(r);
    let reports = train(
        &mut encoder,
        &mut decoder,
        &train_set,
        test_set.as_deref(),
        &cfg.training,
        Some(&mut progress),
    )?;

    save_model(&args.encoder_out, &encoder, ModelRole::Encoder)?;
    save_model(&args.decoder_out, &decoder, ModelRole::Decoder)?;
    if let Some(path) = &args.epochs_out {
        write_epoch_csv(path, &reports)?;
    }

    println!(
        "regularized {} epochs (lambda={}) on {} train points",
        reports.len(),
        fmt(cfg.training.lambda),
        train_set.len()
    );
    if let Some(last) = reports.last() {
        println!(
            "final recon_train={} reach_loss={}",
            fmt(last.recon_train),
            fmt(last.reach_loss)
        );
        if let Some(pct) = last.pct_within_reach {
            println!("final within_reach={pct:.1}%");
        }
    }
    println!("encoder -> {}", args.encoder_out.display());
    println!("decoder -> {}", args.decoder_out.display());
    Ok(0)
}

// ───────────────────────── analyze ─────────────────────────

fn run_analyze(args: &AnalyzeArgs) -> Result<i32> {
    let cfg = DiagnosisConfig {
        radius_policy: match args.r0 {
            Some(r0) => RadiusPolicy::Fixed(r0),
            None => RadiusPolicy::Adaptive,
        },
        batch_size: args.batch_size,
        num_batches: args.num_batches,
        seed: args.seed,
        subsample: args.subsample,
        seed_from_dataset: args.seed_from_dataset,
    };
    log_invocation(
        args.seed,
        &serde_json::json!({
            "command": "analyze",
            "data": args.data.display().to_string(),
            "encoder": args.encoder.display().to_string(),
            "decoder": args.decoder.display().to_string(),
            "config": cfg,
        }),
    );

    let points = load_point_cloud::<f64>(&args.data)?;
    let encoder = load_role_model(&args.encoder, ModelRole::Encoder)?;
    let decoder = load_role_model(&args.decoder, ModelRole::Decoder)?;

    let diagnosis = diagnose(&encoder, &decoder, &points, &cfg)?;

    let mut w = BufWriter::new(std::fs::File::create(&args.out)?);
    writeln!(w, "index,recon_distance,r_hat,within_reach,margin")?;
    for row in &diagnosis.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.index,
            fmt(row.recon_distance),
            fmt(row.r_hat),
            row.within_reach,
            fmt(row.margin),
        )?;
    }
    w.flush()?;

    let recon: Vec<f64> = diagnosis.rows.iter().map(|r| r.recon_distance).collect();
    let reach: Vec<f64> = diagnosis
        .rows
        .iter()
        .map(|r| r.r_hat)
        .filter(|v| v.is_finite())
        .collect();
    println!(
        "examined {} observations: {} diagnosed, {} skipped (rank-deficient)",
        diagnosis.n_examined,
        diagnosis.rows.len(),
        diagnosis.skipped.len()
    );
    println!("within reach: {:.1}%", diagnosis.pct_within_reach());
    println!(
        "median recon_distance={} median finite r_hat={}",
        fmt(median(&recon)),
        fmt(median(&reach))
    );
    println!("rows -> {}", args.out.display());

    if diagnosis.skipped_fraction() > 0.5 {
        eprintln!(
            "warning: {:.0}% of observations were skipped; the decoder is \
             rank-deficient over most of the data",
            100.0 * diagnosis.skipped_fraction()
        );
        return Ok(EXIT_DEGENERATE);
    }
    Ok(0)
}

// ───────────────────────── verify-uniqueness ─────────────────────────

fn run_verify(args: &VerifyArgs) -> Result<i32> {
    let diag_cfg = DiagnosisConfig {
        radius_policy: RadiusPolicy::Adaptive,
        batch_size: args.batch_size,
        num_batches: args.num_batches,
        seed: args.seed,
        subsample: args.subsample,
        seed_from_dataset: false,
    };
    let proj_cfg = ProjectionConfig {
        restarts: args.restarts,
        latent_box_halfwidth: args.latent_box,
        ..ProjectionConfig::default()
    };
    log_invocation(
        args.seed,
        &serde_json::json!({
            "command": "verify-uniqueness",
            "data": args.data.display().to_string(),
            "encoder": args.encoder.display().to_string(),
            "decoder": args.decoder.display().to_string(),
            "diagnosis": diag_cfg,
            "projection": proj_cfg,
        }),
    );

    let points = load_point_cloud::<f64>(&args.data)?;
    let encoder = load_role_model(&args.encoder, ModelRole::Encoder)?;
    let decoder = load_role_model(&args.decoder, ModelRole::Decoder)?;

    let diagnosis = diagnose(&encoder, &decoder, &points, &diag_cfg)?;

    let mut w = BufWriter::new(std::fs::File::create(&args.out)?);
    writeln!(
        w,
        "index,recon_distance,r_hat,within_reach,nearest_distance,n_minima,unique,\
         distance_gap,boundary_hit,n_unconverged,agreement"
    )?;
    let (mut within_unique, mut outside_nonunique, mut outside_unique, mut within_nonunique) =
        (0usize, 0usize, 0usize, 0usize);
    for row in &diagnosis.rows {
        let x = &points[row.index];
        let mut rng = rng_stream(args.seed, PROJECTION_STREAM_BASE + row.index as u64);
        let proj = project_with_encoder(x, &decoder, &encoder, &proj_cfg, &mut rng)?;
        let agreement = match (row.within_reach, proj.unique) {
            (true, true) => {
                within_unique += 1;
                "within_unique"
            }
            (false, false) => {
                outside_nonunique += 1;
                "outside_nonunique"
            }
            (false, true) => {
                outside_unique += 1;
                "outside_unique"
            }
            (true, false) => {
                within_nonunique += 1;
                "within_nonunique"
            }
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{agreement}",
            row.index,
            fmt(row.recon_distance),
            fmt(row.r_hat),
            row.within_reach,
            fmt(proj.best().distance),
            proj.minima.len(),
            proj.unique,
            fmt(proj.distance_gap),
            proj.boundary_hit,
            proj.n_unconverged,
        )?;
    }
    w.flush()?;

    let n = diagnosis.rows.len();
    println!(
        "verified {n} observations ({} skipped as rank-deficient)",
        diagnosis.skipped.len()
    );
    println!("within reach & unique nearest point:      {within_unique}");
    println!("outside reach & ambiguous nearest point:  {outside_nonunique}");
    println!("outside reach but still unique:           {outside_unique}");
    println!("within reach yet ambiguous (flagged):     {within_nonunique}");
    println!("rows -> {}", args.out.display());

    if diagnosis.skipped_fraction() > 0.5 {
        return Ok(EXIT_DEGENERATE);
    }
    Ok(0)
}

// ───────────────────────── sweep-dim ─────────────────────────

fn run_sweep(args: &SweepArgs) -> Result<i32> {
    if args.dims.is_empty() {
        return Err(Error::InvalidArgument {
            name: "dims",
            reason: "need at least one ambient dimension".into(),
        });
    }
    if args.trials == 0 {
        return Err(Error::InvalidArgument {
            name: "trials",
            reason: "need at least one trial".into(),
        });
    }
    let sampler = SamplerConfig {
        r0: args.r0,
        batch_size: args.batch_size,
        num_batches: args.num_batches,
    };
    log_invocation(
        args.seed,
        &serde_json::json!({
            "command": "sweep-dim",
            "dims": args.dims,
            "trials": args.trials,
            "sampler": sampler,
            "seed": args.seed,
        }),
    );

    // The true reach at the origin of every quadratic surface is 1/2
    // regardless of the ambient embedding, so the estimator's mean excess
    // over 1/2 isolates the sampling bias as dimension grows.
    const TRUE_REACH: f64 = 0.5;
    let origin = LatentPoint::new(vec![0.0, 0.0])?;

    let mut w = BufWriter::new(std::fs::File::create(&args.out)?);
    writeln!(w, "ambient_dim,trials,mean_estimate,mean_overestimate")?;
    for &dim in &args.dims {
        let mut estimates = Vec::with_capacity(args.trials);
        for trial in 0..args.trials {
            let pair = SWEEP_STREAM_BASE + (dim as u64) * 2_000_000 + 2 * trial as u64;
            let mut manifold_rng = rng_stream(args.seed, pair);
            let manifold = AnalyticManifold::quadratic_surface_random(dim, &mut manifold_rng)?;
            let mut sample_rng = rng_stream(args.seed, pair + 1);
            let run =
                estimate_reach_from_latent(&manifold, &manifold, &origin, &sampler, &mut sample_rng)?;
            if run.estimate.r_hat.is_finite() {
                estimates.push(run.estimate.r_hat);
            }
        }
        if estimates.is_empty() {
            return Err(Error::InsufficientSamples {
                needed: 1,
                got: 0,
            });
        }
        let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
        let over = mean - TRUE_REACH;
        writeln!(w, "{dim},{},{},{}", estimates.len(), fmt(mean), fmt(over))?;
        println!(
            "dim {dim:>4}: mean_estimate={mean:.6} mean_overestimate={over:.6} ({}/{} trials)",
            estimates.len(),
            args.trials
        );
    }
    w.flush()?;
    println!("rows -> {}", args.out.display());
    Ok(0)
}

// ───────────────────────── export-manifold ─────────────────────────

fn run_export(args: &ExportArgs) -> Result<i32> {
    if !(args.lo < args.hi) {
        return Err(Error::InvalidArgument {
            name: "lo",
            reason: format!("grid needs lo < hi, got [{}, {}]", args.lo, args.hi),
        });
    }
    log_invocation(
        0,
        &serde_json::json!({
            "command": "export-manifold",
            "decoder": args.decoder.display().to_string(),
            "lo": args.lo,
            "hi": args.hi,
            "per_axis": args.per_axis,
        }),
    );

    let decoder = load_role_model(&args.decoder, ModelRole::Decoder)?;
    let (latents, points) = decode_latent_grid(&decoder, args.lo, args.hi, args.per_axis)?;

    let d = decoder.input_dim();
    let n = decoder.output_dim();
    let mut w = BufWriter::new(std::fs::File::create(&args.out)?);
    let mut header = Vec::with_capacity(d + n);
    header.extend((0..d).map(|j| format!("z{j}")));
    header.extend((0..n).map(|i| format!("x{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (z, x) in latents.iter().zip(&points) {
        let mut cells: Vec<String> = z.iter().copied().map(fmt).collect();
        cells.extend(x.iter().copied().map(fmt));
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;

    println!(
        "decoded {} grid points (latent dim {d}, ambient dim {n}) -> {}",
        points.len(),
        args.out.display()
    );
    Ok(0)
}
