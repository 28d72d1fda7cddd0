//! Dataset-level reach diagnosis.
//!
//! For every observation the autoencoder yields a reconstruction on the
//! learned manifold; comparing the reconstruction distance against the
//! estimated pointwise normal reach at that manifold point tells whether the
//! observation sits inside the tube where projection onto the manifold is
//! unambiguous. `within_reach` is the per-point verdict; the percentage of
//! points within reach summarizes how trustworthy the encoder is as a
//! nearest-point map on its own training distribution.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    min_ratio_over_samples, AmbientPoint, NormalProjector, DUPLICATE_TOLERANCE,
};
use crate::linalg;
use crate::nn::{Decoder, Encoder};
use crate::sampling::{estimate_reach_warm, rng_stream, SamplerConfig};
use crate::scalar::{real, Real};

/// How the initial search radius is chosen per observation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusPolicy<T> {
    /// Twice the reconstruction distance: the ball is just wide enough to
    /// contain any witness that could pull the reach below the distance that
    /// matters for the verdict.
    Adaptive,
    /// A fixed radius for every observation.
    Fixed(T),
}

/// Settings of a dataset diagnosis pass.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DiagnosisConfig<T> {
    /// Initial-radius choice.
    pub radius_policy: RadiusPolicy<T>,
    /// Ball samples per batch.
    pub batch_size: usize,
    /// Batches per observation.
    pub num_batches: usize,
    /// Seed; each observation uses its own derived stream, so results do not
    /// depend on thread scheduling.
    pub seed: u64,
    /// Diagnose only a seeded random subset of this size (all points when
    /// `None` or when the dataset is smaller).
    pub subsample: Option<usize>,
    /// Pre-seed each running minimum with reach ratios against the whole
    /// dataset's reconstructions before ball sampling starts.
    pub seed_from_dataset: bool,
}

impl<T: Real> Default for DiagnosisConfig<T> {
    fn default() -> Self {
        DiagnosisConfig {
            radius_policy: RadiusPolicy::Adaptive,
            batch_size: 100,
            num_batches: 10,
            seed: 0,
            subsample: None,
            seed_from_dataset: false,
        }
    }
}

/// Verdict for one observation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReachDiagnosis<T> {
    /// Position of the observation in the input dataset.
    pub index: usize,
    /// Distance from the observation to its reconstruction.
    pub recon_distance: T,
    /// Estimated pointwise normal reach at the reconstruction.
    pub r_hat: T,
    /// Strict test `recon_distance < r_hat`.
    pub within_reach: bool,
    /// `r_hat - recon_distance`; positive inside the reach tube.
    pub margin: T,
}

/// Diagnosis of a whole dataset.
#[derive(Debug, Clone)]
pub struct DatasetDiagnosis<T> {
    /// Per-observation verdicts in input order (subsampled sets keep the
    /// original indices).
    pub rows: Vec<ReachDiagnosis<T>>,
    /// Indices whose decoder Jacobian was rank-deficient; no verdict exists
    /// for these.
    pub skipped: Vec<usize>,
    /// Number of observations examined (rows + skipped).
    pub n_examined: usize,
}

impl<T: Real> DatasetDiagnosis<T> {
    /// Percentage of diagnosed observations strictly within reach (0 when
    /// nothing was diagnosed).
    pub fn pct_within_reach(&self) -> f64 {
        pct_within_reach(&self.rows)
    }

    /// Fraction of examined observations that had to be skipped.
    pub fn skipped_fraction(&self) -> f64 {
        if self.n_examined == 0 {
            0.0
        } else {
            self.skipped.len() as f64 / self.n_examined as f64
        }
    }
}

/// Percentage of rows with `within_reach` (0 for an empty slice).
pub fn pct_within_reach<T>(rows: &[ReachDiagnosis<T>]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let n = rows.iter().filter(|r| r.within_reach).count();
    100.0 * n as f64 / rows.len() as f64
}

/// Encodes then decodes one observation.
pub fn reconstruct<T, E, D>(
    encoder: &E,
    decoder: &D,
    x: &AmbientPoint<T>,
) -> Result<(crate::geometry::LatentPoint<T>, AmbientPoint<T>)>
where
    T: Real,
    E: Encoder<T> + ?Sized,
    D: Decoder<T> + ?Sized,
{
    let z = encoder.encode(x)?;
    let recon = decoder.decode(&z)?;
    Ok((z, recon))
}

/// Runs the reach diagnosis over a dataset.
///
/// Per observation: reconstruct, estimate the reach at the reconstruction
/// (initial radius per `radius_policy`), and compare. Observations whose
/// reconstruction coincides with the original to duplicate tolerance are
/// reported within reach with an infinite estimate — the witness search has
/// nothing to refute at distance zero. Observations whose decoder Jacobian
/// is rank-deficient carry no normal space and are skipped (collected in
/// `skipped`).
pub fn diagnose<T, E, D>(
    encoder: &E,
    decoder: &D,
    points: &[AmbientPoint<T>],
    cfg: &DiagnosisConfig<T>,
) -> Result<DatasetDiagnosis<T>>
where
    T: Real,
    E: Encoder<T>,
    D: Decoder<T>,
{
    if points.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if cfg.batch_size == 0 || cfg.num_batches == 0 {
        return Err(Error::InvalidArgument {
            name: "diagnosis",
            reason: "batch_size and num_batches must be at least 1".into(),
        });
    }
    if let RadiusPolicy::Fixed(r) = cfg.radius_policy {
        if !(r > T::zero()) || !r.is_finite() {
            return Err(Error::InvalidArgument {
                name: "radius_policy",
                reason: format!("fixed radius must be positive and finite, got {r}"),
            });
        }
    }

    // Which observations to examine.
    let indices: Vec<usize> = match cfg.subsample {
        Some(k) if k < points.len() => {
            let mut order: Vec<usize> = (0..points.len()).collect();
            let mut rng = rng_stream(cfg.seed, u64::MAX - 1);
            for i in (1..order.len()).rev() {
                let j = rand::Rng::gen_range(&mut rng, 0..=i);
                order.swap(i, j);
            }
            let mut chosen: Vec<usize> = order.into_iter().take(k).collect();
            chosen.sort_unstable();
            chosen
        }
        _ => (0..points.len()).collect(),
    };

    // Reconstructions of the full dataset for warm starts.
    let recon_cloud: Option<Vec<AmbientPoint<T>>> = if cfg.seed_from_dataset {
        let cloud: Result<Vec<_>> = points
            .par_iter()
            .map(|x| reconstruct(encoder, decoder, x).map(|(_, r)| r))
            .collect();
        Some(cloud?)
    } else {
        None
    };

    let outcomes: Result<Vec<(usize, Option<ReachDiagnosis<T>>)>> = indices
        .par_iter()
        .map(|&i| {
            let x = &points[i];
            let (z, recon) = reconstruct(encoder, decoder, x)?;
            let delta = linalg::dist(x.as_slice(), recon.as_slice());
            let scale = T::one() + linalg::norm(x.as_slice());
            if delta <= real::<T>(DUPLICATE_TOLERANCE) * scale {
                // The reconstruction is the observation: nothing separates
                // them, so the verdict holds regardless of the reach value.
                return Ok((
                    i,
                    Some(ReachDiagnosis {
                        index: i,
                        recon_distance: delta,
                        r_hat: T::infinity(),
                        within_reach: true,
                        margin: T::infinity(),
                    }),
                ));
            }
            let r0 = match cfg.radius_policy {
                RadiusPolicy::Adaptive => real::<T>(2.0) * delta,
                RadiusPolicy::Fixed(r) => r,
            };
            let sampler = SamplerConfig {
                r0,
                batch_size: cfg.batch_size,
                num_batches: cfg.num_batches,
            };

            // Warm start from the reconstructed dataset, when requested.
            let warm = match &recon_cloud {
                Some(cloud) => {
                    let jacobian = match decoder.jacobian(&z) {
                        Ok(j) => j,
                        Err(Error::RankDeficient { .. }) => return Ok((i, None)),
                        Err(e) => return Err(e),
                    };
                    let projector = match NormalProjector::new(&jacobian) {
                        Ok(p) => p,
                        Err(Error::RankDeficient { .. }) => return Ok((i, None)),
                        Err(e) => return Err(e),
                    };
                    match min_ratio_over_samples(&recon, &projector, cloud) {
                        Ok((best, best_idx, _, _)) => {
                            Some((best, best_idx.map(|j| cloud[j].clone())))
                        }
                        Err(Error::EmptySampleSet) => None,
                        Err(e) => return Err(e),
                    }
                }
                None => None,
            };

            let mut rng = rng_stream(cfg.seed, i as u64);
            match estimate_reach_warm(encoder, decoder, &z, &sampler, &mut rng, warm) {
                Ok(run) => {
                    let r_hat = run.estimate.r_hat;
                    Ok((
                        i,
                        Some(ReachDiagnosis {
                            index: i,
                            recon_distance: delta,
                            r_hat,
                            within_reach: delta < r_hat,
                            margin: r_hat - delta,
                        }),
                    ))
                }
                Err(Error::RankDeficient { .. }) => Ok((i, None)),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let outcomes = outcomes?;
    let n_examined = outcomes.len();
    for (i, outcome) in outcomes {
        match outcome {
            Some(row) => rows.push(row),
            None => skipped.push(i),
        }
    }
    Ok(DatasetDiagnosis {
        rows,
        skipped,
        n_examined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::AnalyticManifold;
    use crate::geometry::LatentPoint;
    use crate::nn::{Activation, LayerSpec, Mlp};

    fn circle_cloud(radii: &[f64], angles: &[f64]) -> Vec<AmbientPoint<f64>> {
        radii
            .iter()
            .zip(angles)
            .map(|(&r, &a)| AmbientPoint::new(vec![r * a.cos(), r * a.sin()]).unwrap())
            .collect()
    }

    #[test]
    fn circle_verdicts_follow_the_tube() {
        // Circle of radius 2: points closer than 2 to it are within reach,
        // points at distance >= 2 (center side) are not.
        let m = AnalyticManifold::circle(2.0f64).unwrap();
        let pts = circle_cloud(&[2.5, 3.0, 1.2, 5.0, 0.1], &[0.3, 1.1, 2.0, 4.0, 5.5]);
        let cfg = DiagnosisConfig { seed: 1, ..DiagnosisConfig::default() };
        let d = diagnose(&m, &m, &pts, &cfg).unwrap();
        assert_eq!(d.rows.len(), 5);
        assert!(d.skipped.is_empty());
        let expected_delta = [0.5, 1.0, 0.8, 3.0, 1.9];
        let expected_within = [true, true, true, false, true];
        for (row, (&ed, &ew)) in d.rows.iter().zip(expected_delta.iter().zip(&expected_within)) {
            assert!((row.recon_distance - ed).abs() < 1e-12);
            assert_eq!(row.within_reach, ew, "row {row:?}");
            // Any informative sample on a circle yields exactly the radius.
            assert!((row.r_hat - 2.0).abs() < 1e-7, "r_hat {}", row.r_hat);
            assert!((row.margin - (row.r_hat - row.recon_distance)).abs() < 1e-12);
        }
        assert!((d.pct_within_reach() - 80.0).abs() < 1e-12);
    }

    #[test]
    fn on_manifold_points_short_circuit() {
        let m = AnalyticManifold::circle(1.0f64).unwrap();
        let pts = circle_cloud(&[1.0, 1.0], &[0.2, 2.4]);
        let d = diagnose(&m, &m, &pts, &DiagnosisConfig::default()).unwrap();
        for row in &d.rows {
            assert!(row.within_reach);
            assert!(row.r_hat.is_infinite());
            assert!(row.margin.is_infinite());
            assert!(row.recon_distance < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_points_are_skipped_not_fatal() {
        // A decoder with all-zero weights has a zero Jacobian everywhere.
        let mut rng = rng_stream(3, 0);
        let mut dead = Mlp::<f64>::new(
            &[LayerSpec { in_width: 1, out_width: 2, activation: Activation::Identity }],
            &mut rng,
        )
        .unwrap();
        dead.set_params(&vec![0.0; dead.param_count()]).unwrap();
        let encoder = AnalyticManifold::<f64>::Parabola;
        let pts = vec![
            AmbientPoint::new(vec![0.5, 0.3]).unwrap(),
            AmbientPoint::new(vec![-0.2, 0.9]).unwrap(),
        ];
        let d = diagnose(&encoder, &dead, &pts, &DiagnosisConfig::default()).unwrap();
        assert!(d.rows.is_empty());
        assert_eq!(d.skipped, vec![0, 1]);
        assert_eq!(d.n_examined, 2);
        assert_eq!(d.skipped_fraction(), 1.0);
        assert_eq!(d.pct_within_reach(), 0.0);
    }

    #[test]
    fn diagnosis_is_deterministic_and_subsampling_keeps_indices() {
        let m = AnalyticManifold::circle(2.0f64).unwrap();
        let pts = circle_cloud(
            &[2.5, 3.0, 1.2, 5.0, 0.1, 2.2, 2.9, 1.4],
            &[0.1, 0.5, 0.9, 1.3, 1.7, 2.1, 2.5, 2.9],
        );
        let cfg = DiagnosisConfig { seed: 9, subsample: Some(3), ..DiagnosisConfig::default() };
        let a = diagnose(&m, &m, &pts, &cfg).unwrap();
        let b = diagnose(&m, &m, &pts, &cfg).unwrap();
        assert_eq!(a.rows.len(), 3);
        assert_eq!(a.n_examined, 3);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra, rb);
        }
        // Indices refer to the original dataset and arrive sorted.
        for w in a.rows.windows(2) {
            assert!(w[0].index < w[1].index);
        }
        assert!(a.rows.iter().all(|r| r.index < pts.len()));
        // A full pass diagnoses everything in order.
        let full = diagnose(&m, &m, &pts, &DiagnosisConfig { subsample: None, ..cfg }).unwrap();
        assert_eq!(full.rows.len(), 8);
        for (k, row) in full.rows.iter().enumerate() {
            assert_eq!(row.index, k);
        }
    }

    #[test]
    fn dataset_seeding_finds_the_circle_immediately() {
        // With warm starts from the reconstructed cloud, even a one-sample
        // budget pins the circle's reach: every chord ratio equals the
        // radius exactly.
        let m = AnalyticManifold::circle(2.0f64).unwrap();
        let pts = circle_cloud(&[2.4, 1.8, 2.1, 1.95], &[0.2, 1.0, 2.2, 3.1]);
        let cfg = DiagnosisConfig {
            batch_size: 1,
            num_batches: 1,
            seed: 4,
            seed_from_dataset: true,
            ..DiagnosisConfig::default()
        };
        let d = diagnose(&m, &m, &pts, &cfg).unwrap();
        assert_eq!(d.rows.len(), 4);
        for row in &d.rows {
            assert!(
                (row.r_hat - 2.0).abs() < 1e-9,
                "seeded estimate should equal the radius, got {}",
                row.r_hat
            );
        }
    }

    #[test]
    fn fixed_radius_policy_is_validated_and_used() {
        let m = AnalyticManifold::circle(1.0f64).unwrap();
        let pts = circle_cloud(&[1.3], &[0.7]);
        let bad = DiagnosisConfig {
            radius_policy: RadiusPolicy::Fixed(-1.0),
            ..DiagnosisConfig::default()
        };
        assert!(diagnose(&m, &m, &pts, &bad).is_err());
        let ok = DiagnosisConfig {
            radius_policy: RadiusPolicy::Fixed(0.5),
            ..DiagnosisConfig::default()
        };
        let d = diagnose(&m, &m, &pts, &ok).unwrap();
        assert!((d.rows[0].r_hat - 1.0).abs() < 1e-7);
    }

    #[test]
    fn zero_distance_latents_do_not_crash_the_estimator() {
        // A parabola vertex observation lands exactly on the manifold; the
        // adaptive radius would be zero, so the short circuit must fire.
        let p = AnalyticManifold::<f64>::Parabola;
        let x = crate::nn::Decoder::decode(&p, &LatentPoint::new(vec![0.0]).unwrap()).unwrap();
        let d = diagnose(&p, &p, &[x], &DiagnosisConfig::default()).unwrap();
        assert!(d.rows[0].within_reach);
        assert!(d.rows[0].r_hat.is_infinite());
    }
}
