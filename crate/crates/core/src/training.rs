//! Autoencoder training with an optional reach penalty.
//!
//! Training has two phases: plain reconstruction (pretraining) and a
//! regularized phase that adds `lambda * mean(softplus(delta - r_hat))`,
//! pushing the estimated pointwise normal reach at each reconstruction above
//! that observation's reconstruction distance. The witness point behind each
//! `r_hat` is frozen for the gradient step (the estimate itself is not
//! differentiated through its sampling), and the penalty flows into the
//! decoder only — both through its output and through its Jacobian — while
//! the encoder trains purely on reconstruction.
//!
//! RNG stream layout (one user seed, disjoint ChaCha streams): dataset
//! helpers use streams `0` and `u64::MAX`-adjacent values, per-observation
//! diagnosis uses the observation index, per-epoch shuffles use
//! `2^40 + epoch`, and penalty estimators use `2^60 + step * 2^20 + i`.

use rayon::prelude::*;

use crate::analysis::{diagnose, DiagnosisConfig};
use crate::error::{Error, Result};
use crate::geometry::{
    AmbientPoint, JacobianMatrix, NormalProjector, DUPLICATE_TOLERANCE, NORMAL_NOISE_FLOOR,
    TANGENCY_TOLERANCE,
};
use crate::linalg::{self, Mat};
use crate::nn::{sigmoid, softplus, Decoder, Encoder, Mlp};
use crate::sampling::{estimate_reach_warm, rng_stream, SamplerConfig};
use crate::scalar::{real, Real};

/// Stream family for per-epoch shuffles.
const SHUFFLE_STREAM_BASE: u64 = 1 << 40;
/// Stream family for per-step, per-observation penalty estimators.
const PENALTY_STREAM_BASE: u64 = 1 << 60;

/// Hyperparameters of a training run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, bound(
    serialize = "T: serde::Serialize",
    deserialize = "T: Real + serde::de::Deserialize<'de>"
))]
pub struct TrainingConfig<T> {
    /// Adam learning rate.
    pub learning_rate: T,
    /// Minibatch size.
    pub batch_size: usize,
    /// Epochs of plain reconstruction training.
    pub pretrain_epochs: usize,
    /// Epochs with the reach penalty active.
    pub regularized_epochs: usize,
    /// Optional cap on regularized optimizer steps; training stops after the
    /// epoch in which the cap is exhausted (useful to bound wall time).
    pub regularized_steps: Option<usize>,
    /// Penalty weight.
    pub lambda: T,
    /// Estimator budget for penalty terms (`r0` is ignored: each term uses
    /// twice its observation's reconstruction distance).
    pub sampler: SamplerConfig<T>,
    /// Seed for shuffling and penalty sampling.
    pub seed: u64,
    /// Per-epoch reach diagnosis for the report's `pct_within_reach`
    /// (skipped when `None`; a subsampled config keeps it cheap).
    pub diagnosis: Option<DiagnosisConfig<T>>,
}

impl<T: Real> Default for TrainingConfig<T> {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: real(1e-3),
            batch_size: 32,
            pretrain_epochs: 100,
            regularized_epochs: 0,
            regularized_steps: None,
            lambda: T::one(),
            sampler: SamplerConfig {
                r0: T::one(),
                batch_size: 100,
                num_batches: 3,
            },
            seed: 0,
            diagnosis: None,
        }
    }
}

impl<T: Real> TrainingConfig<T> {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument {
                name: "learning_rate",
                reason: format!("must be positive and finite, got {}", self.learning_rate),
            });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument {
                name: "batch_size",
                reason: "must be at least 1".into(),
            });
        }
        if self.pretrain_epochs + self.regularized_epochs == 0 {
            return Err(Error::InvalidArgument {
                name: "epochs",
                reason: "need at least one epoch".into(),
            });
        }
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument {
                name: "lambda",
                reason: format!("must be non-negative and finite, got {}", self.lambda),
            });
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochReport<T> {
    /// Epoch number, starting at 0.
    pub epoch: usize,
    /// Penalty weight in force this epoch (0 during pretraining).
    pub lambda: T,
    /// Mean squared reconstruction distance over the epoch's minibatches.
    pub recon_train: T,
    /// Mean squared reconstruction distance on the held-out set.
    pub recon_test: Option<T>,
    /// Mean penalty `softplus(delta - r_hat)` over the epoch's minibatches
    /// (reported unweighted; 0 during pretraining).
    pub reach_loss: T,
    /// Within-reach percentage from the per-epoch diagnosis, when enabled.
    pub pct_within_reach: Option<f64>,
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: u32,
}

impl<T: Real> Adam<T> {
    /// Standard coefficients (0.9, 0.999, 1e-8) at the given rate.
    pub fn new(lr: T, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: real(0.9),
            beta2: real(0.999),
            eps: real(1e-8),
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            t: 0,
        }
    }

    /// One bias-corrected update in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len(), "parameter count");
        assert_eq!(grads.len(), self.m.len(), "gradient count");
        self.t += 1;
        let b1t = T::one() - self.beta1.powi(self.t as i32);
        let b2t = T::one() - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] = params[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Frozen ingredients of one observation's penalty term.
#[derive(Debug, Clone)]
pub struct ReachTerm<T> {
    /// Reconstruction distance when the term was built.
    pub delta: T,
    /// Reach estimate when the term was built.
    pub r_hat: T,
    /// Witness manifold point achieving the estimate; held fixed during the
    /// gradient step.
    pub witness: AmbientPoint<T>,
}

/// Builds penalty terms for a minibatch: per observation, reconstruct,
/// estimate the reach at the reconstruction (initial radius twice the
/// reconstruction distance) and keep the witness.
///
/// Observations yield `None` — no penalty — when the reconstruction
/// coincides with the observation, when no finite estimate emerges within
/// the budget, or when the decoder Jacobian is rank-deficient there.
pub fn reach_penalty_terms<T, E, D>(
    encoder: &E,
    decoder: &D,
    batch: &[AmbientPoint<T>],
    sampler: &SamplerConfig<T>,
    seed: u64,
    stream_base: u64,
) -> Result<Vec<Option<ReachTerm<T>>>>
where
    T: Real,
    E: Encoder<T>,
    D: Decoder<T>,
{
    batch
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let z = encoder.encode(x)?;
            let recon = decoder.decode(&z)?;
            let delta = linalg::dist(x.as_slice(), recon.as_slice());
            let scale = T::one() + linalg::norm(x.as_slice());
            if delta <= real::<T>(DUPLICATE_TOLERANCE) * scale {
                return Ok(None);
            }
            let cfg = SamplerConfig {
                r0: real::<T>(2.0) * delta,
                ..*sampler
            };
            let mut rng = rng_stream(seed, stream_base + i as u64);
            match estimate_reach_warm(encoder, decoder, &z, &cfg, &mut rng, None) {
                Ok(run) => {
                    if run.estimate.r_hat.is_finite() {
                        if let Some(witness) = run.minimizer {
                            return Ok(Some(ReachTerm {
                                delta,
                                r_hat: run.estimate.r_hat,
                                witness,
                            }));
                        }
                    }
                    Ok(None)
                }
                Err(Error::RankDeficient { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Gradient of `recon + lambda * reach` for one minibatch.
///
/// Reconstruction is the mean squared distance `|f(g(x)) - x|^2`; its
/// gradient flows through decoder and encoder. The reach term re-evaluates
/// each frozen witness against the live decoder — `R = s / (2 p)` with
/// `u = witness - f(z)`, `s = |u|^2`, `p = |P_N u|` — and backpropagates
/// `softplus(delta - R)` through the decoder's output and Jacobian while the
/// encoder input is stopped. Returns `(recon_loss, reach_loss)`, both
/// unweighted means; gradients of `recon + lambda * reach` accumulate into
/// the two buffers (caller zeroes them).
pub fn loss_gradients<T: Real>(
    encoder: &Mlp<T>,
    decoder: &Mlp<T>,
    batch: &[AmbientPoint<T>],
    lambda: T,
    terms: &[Option<ReachTerm<T>>],
    enc_grads: &mut [T],
    dec_grads: &mut [T],
) -> Result<(T, T)> {
    if batch.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if terms.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            context: "loss_gradients terms",
            expected: batch.len(),
            got: terms.len(),
        });
    }
    let b = real::<T>(batch.len() as f64);
    let inv_b = T::one() / b;
    let two = real::<T>(2.0);
    let mut recon_sum = T::zero();
    let mut reach_sum = T::zero();

    for (x, term) in batch.iter().zip(terms) {
        let tr_enc = encoder.forward_traced(x.as_slice())?;
        let z = &tr_enc.output;
        let with_penalty = lambda > T::zero() && term.is_some();

        let recon_in_bar = if with_penalty {
            let tr_dec = decoder.forward_jacobian_traced(z)?;
            let xhat = &tr_dec.output;
            let diff = linalg::sub(xhat, x.as_slice());
            recon_sum += linalg::norm_sq(&diff);
            let recon_bar: Vec<T> = diff.iter().map(|d| two * *d * inv_b).collect();

            let term = term.as_ref().expect("with_penalty implies a term");
            if let Some((penalty, xhat_bar, jac_bar)) =
                penalty_heads(x, xhat, tr_dec.jacobian(), &term.witness, lambda, inv_b)?
            {
                reach_sum += penalty;
                decoder.backprop_with_jacobian(&tr_dec, &xhat_bar, &jac_bar, dec_grads);
            }
            decoder.backprop_value_traced(&tr_dec, &recon_bar, dec_grads)
        } else {
            let tr_dec = decoder.forward_traced(z)?;
            let diff = linalg::sub(&tr_dec.output, x.as_slice());
            recon_sum += linalg::norm_sq(&diff);
            let recon_bar: Vec<T> = diff.iter().map(|d| two * *d * inv_b).collect();
            decoder.backprop(&tr_dec, &recon_bar, dec_grads)
        };
        encoder.backprop(&tr_enc, &recon_in_bar, enc_grads);
    }
    Ok((recon_sum * inv_b, reach_sum * inv_b))
}

/// Penalty value and its two decoder-side cotangents at one observation.
///
/// Returns `None` when the live geometry gives the term nothing to push on:
/// witness collapsed onto the reconstruction, tangent-level normal
/// component, or rank-deficient Jacobian.
#[allow(clippy::type_complexity)]
fn penalty_heads<T: Real>(
    x: &AmbientPoint<T>,
    xhat: &[T],
    jacobian: &Mat<T>,
    witness: &AmbientPoint<T>,
    lambda: T,
    inv_b: T,
) -> Result<Option<(T, Vec<T>, Mat<T>)>> {
    let jac = JacobianMatrix::new(jacobian.clone())?;
    let projector = match NormalProjector::new(&jac) {
        Ok(p) => p,
        Err(Error::RankDeficient { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let u = linalg::sub(witness.as_slice(), xhat);
    let s = linalg::norm_sq(&u);
    let dist = s.sqrt();
    let scale = T::one() + linalg::norm(xhat);
    if dist <= real::<T>(DUPLICATE_TOLERANCE) * scale {
        return Ok(None);
    }
    let (w, n) = projector.decompose(&u);
    let p = linalg::norm(&n);
    let floor = (real::<T>(TANGENCY_TOLERANCE) * dist).max(real::<T>(NORMAL_NOISE_FLOOR) * scale);
    if p <= floor {
        return Ok(None);
    }
    let r = s / (two::<T>() * p);
    let delta_vec = linalg::sub(xhat, x.as_slice());
    let delta = linalg::norm(&delta_vec);
    let penalty = softplus(delta - r);
    let sig = sigmoid(delta - r) * lambda * inv_b;

    // d(penalty)/d(xhat) = sig * (d(delta)/d(xhat) - dR/d(xhat)) with
    //   d(delta)/d(xhat) = (xhat - x) / delta   (dropped at delta ~ 0)
    //   dR/d(xhat)       = -u / p + (s / (2 p^3)) n.
    let c = s / (two::<T>() * p * p * p);
    let delta_floor = real::<T>(DUPLICATE_TOLERANCE) * scale;
    let mut xhat_bar = vec![T::zero(); xhat.len()];
    for i in 0..xhat.len() {
        let d_delta = if delta > delta_floor {
            delta_vec[i] / delta
        } else {
            T::zero()
        };
        xhat_bar[i] = sig * (d_delta + u[i] / p - c * n[i]);
    }
    // dR/dJ = (s / (2 p^3)) n w^T, so the Jacobian cotangent of the penalty
    // is -sig * c * n w^T.
    let mut jac_bar = Mat::zeros(jacobian.rows(), jacobian.cols());
    for i in 0..jac_bar.rows() {
        for j in 0..jac_bar.cols() {
            jac_bar[(i, j)] = -sig * c * n[i] * w[j];
        }
    }
    Ok(Some((penalty, xhat_bar, jac_bar)))
}

fn two<T: Real>() -> T {
    real(2.0)
}

/// Mean squared reconstruction distance of a dataset under the current
/// models (deterministic: parallel map, ordered sequential sum).
pub fn mean_squared_recon<T, E, D>(encoder: &E, decoder: &D, points: &[AmbientPoint<T>]) -> Result<T>
where
    T: Real,
    E: Encoder<T>,
    D: Decoder<T>,
{
    if points.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let sq: Result<Vec<T>> = points
        .par_iter()
        .map(|x| {
            let recon = decoder.decode(&encoder.encode(x)?)?;
            Ok(linalg::dist(x.as_slice(), recon.as_slice()).powi(2))
        })
        .collect();
    let sq = sq?;
    let sum = sq.into_iter().fold(T::zero(), |acc, v| acc + v);
    Ok(sum / real::<T>(points.len() as f64))
}

/// Trains the autoencoder in place and returns the per-epoch log.
///
/// A non-finite loss, gradient, or parameter update aborts training with
/// [`Error::NonFiniteLoss`], restoring both models to their state at the end
/// of the last completed epoch.
pub fn train<T: Real>(
    encoder: &mut Mlp<T>,
    decoder: &mut Mlp<T>,
    train_set: &[AmbientPoint<T>],
    test_set: Option<&[AmbientPoint<T>]>,
    cfg: &TrainingConfig<T>,
    mut on_epoch: Option<&mut dyn FnMut(&EpochReport<T>)>,
) -> Result<Vec<EpochReport<T>>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let dim = train_set[0].dim();
    if encoder.input_dim() != dim || decoder.output_dim() != dim {
        return Err(Error::DimensionMismatch {
            context: "train ambient dimension",
            expected: dim,
            got: encoder.input_dim(),
        });
    }
    if encoder.output_dim() != decoder.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "train latent dimension",
            expected: decoder.input_dim(),
            got: encoder.output_dim(),
        });
    }

    let mut adam_enc = Adam::new(cfg.learning_rate, encoder.param_count());
    let mut adam_dec = Adam::new(cfg.learning_rate, decoder.param_count());
    let mut enc_grads = vec![T::zero(); encoder.param_count()];
    let mut dec_grads = vec![T::zero(); decoder.param_count()];
    let mut snapshot = (encoder.params(), decoder.params());
    let mut reports = Vec::new();
    let total_epochs = cfg.pretrain_epochs + cfg.regularized_epochs;
    let mut global_step: u64 = 0;
    let mut reg_steps_used = 0usize;

    'epochs: for epoch in 0..total_epochs {
        let regularized = epoch >= cfg.pretrain_epochs;
        let lambda = if regularized { cfg.lambda } else { T::zero() };

        // Seeded shuffle (Fisher-Yates) on its own stream.
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut shuffle_rng = rng_stream(cfg.seed, SHUFFLE_STREAM_BASE + epoch as u64);
        for i in (1..order.len()).rev() {
            let j = rand::Rng::gen_range(&mut shuffle_rng, 0..=i);
            order.swap(i, j);
        }

        let mut recon_sum = T::zero();
        let mut reach_sum = T::zero();
        let mut n_seen = 0usize;
        let mut cap_hit = false;
        for chunk in order.chunks(cfg.batch_size) {
            if regularized {
                if let Some(cap) = cfg.regularized_steps {
                    if reg_steps_used >= cap {
                        cap_hit = true;
                        break;
                    }
                }
            }
            let batch: Vec<AmbientPoint<T>> =
                chunk.iter().map(|&i| train_set[i].clone()).collect();
            let terms = if lambda > T::zero() {
                reach_penalty_terms(
                    encoder,
                    decoder,
                    &batch,
                    &cfg.sampler,
                    cfg.seed,
                    PENALTY_STREAM_BASE + (global_step << 20),
                )?
            } else {
                vec![None; batch.len()]
            };
            enc_grads.iter_mut().for_each(|g| *g = T::zero());
            dec_grads.iter_mut().for_each(|g| *g = T::zero());
            let step_result =
                loss_gradients(encoder, decoder, &batch, lambda, &terms, &mut enc_grads, &mut dec_grads);
            let (recon, reach) = match step_result {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => {
                    return abort_non_finite(encoder, decoder, snapshot, epoch);
                }
                Err(e) => return Err(e),
            };
            let total = recon + lambda * reach;
            if !total.is_finite()
                || !linalg::all_finite(&enc_grads)
                || !linalg::all_finite(&dec_grads)
            {
                return abort_non_finite(encoder, decoder, snapshot, epoch);
            }

            let mut enc_params = encoder.params();
            adam_enc.step(&mut enc_params, &enc_grads);
            let mut dec_params = decoder.params();
            adam_dec.step(&mut dec_params, &dec_grads);
            if !linalg::all_finite(&enc_params) || !linalg::all_finite(&dec_params) {
                return abort_non_finite(encoder, decoder, snapshot, epoch);
            }
            encoder.set_params(&enc_params)?;
            decoder.set_params(&dec_params)?;

            let weight = real::<T>(batch.len() as f64);
            recon_sum += recon * weight;
            reach_sum += reach * weight;
            n_seen += batch.len();
            global_step += 1;
            if regularized {
                reg_steps_used += 1;
            }
        }

        let recon_train = if n_seen > 0 {
            recon_sum / real::<T>(n_seen as f64)
        } else {
            mean_squared_recon(encoder, decoder, train_set)?
        };
        let reach_loss = if n_seen > 0 {
            reach_sum / real::<T>(n_seen as f64)
        } else {
            T::zero()
        };
        let recon_test = match test_set {
            Some(set) => Some(mean_squared_recon(encoder, decoder, set)?),
            None => None,
        };
        let pct_within_reach = match &cfg.diagnosis {
            Some(diag_cfg) => {
                Some(diagnose(encoder, decoder, train_set, diag_cfg)?.pct_within_reach())
            }
            None => None,
        };
        let report = EpochReport {
            epoch,
            lambda,
            recon_train,
            recon_test,
            reach_loss,
            pct_within_reach,
        };
        if let Some(cb) = on_epoch.as_deref_mut() {
            cb(&report);
        }
        reports.push(report);
        snapshot = (encoder.params(), decoder.params());
        if cap_hit {
            break 'epochs;
        }
    }
    Ok(reports)
}

fn abort_non_finite<T: Real>(
    encoder: &mut Mlp<T>,
    decoder: &mut Mlp<T>,
    snapshot: (Vec<T>, Vec<T>),
    epoch: usize,
) -> Result<Vec<EpochReport<T>>> {
    // The snapshot predates the exploding epoch, so it is finite by
    // construction and set_params cannot fail.
    encoder.set_params(&snapshot.0)?;
    decoder.set_params(&snapshot.1)?;
    Err(Error::NonFiniteLoss { epoch })
}
