//! Nearest-point projection oracle.
//!
//! Finds local minimizers of `h(z) = |x - f(z)|^2` by gradient descent with
//! backtracking from many restarts, deduplicates them, and reports whether
//! the nearest point on the manifold is unique. This is the slow, direct
//! check that reach-based diagnostics are compared against: a query point
//! closer to the manifold than the pointwise normal reach of its projection
//! must have a unique nearest point.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{AmbientPoint, LatentPoint};
use crate::linalg;
use crate::nn::{Decoder, Encoder};
use crate::scalar::{real, Real};

/// Settings of the multi-restart descent.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ProjectionConfig<T> {
    /// Number of descent restarts.
    pub restarts: usize,
    /// Iteration cap per restart; hitting it flags the run as unconverged.
    pub max_iters: usize,
    /// Stop when `|grad h| <= grad_tolerance * (1 + h)`.
    pub grad_tolerance: T,
    /// Minima within this relative distance of the best are "same depth".
    pub cluster_tolerance: T,
    /// Minima whose decoded points lie within this ambient distance are the
    /// same nearest point.
    pub spatial_tolerance: T,
    /// Latent search box `[-halfwidth, halfwidth]^d`; descent is projected
    /// onto the box and minima on its boundary are flagged.
    pub latent_box_halfwidth: T,
    /// Standard deviation of the perturbed-encoding restarts.
    pub perturbation_scale: T,
}

impl<T: Real> Default for ProjectionConfig<T> {
    fn default() -> Self {
        ProjectionConfig {
            restarts: 32,
            max_iters: 10_000,
            grad_tolerance: real(1e-10),
            cluster_tolerance: real(1e-6),
            spatial_tolerance: real(1e-4),
            latent_box_halfwidth: real(3.0),
            perturbation_scale: real(0.25),
        }
    }
}

/// One deduplicated local minimum of the distance function.
#[derive(Debug, Clone)]
pub struct LocalMinimum<T> {
    /// Latent minimizer.
    pub z: LatentPoint<T>,
    /// Decoded manifold point.
    pub point: AmbientPoint<T>,
    /// Ambient distance `|x - point|`.
    pub distance: T,
    /// Whether the gradient criterion was met within the iteration cap.
    pub converged: bool,
    /// Whether the minimizer sits on the latent search box boundary.
    pub on_boundary: bool,
}

/// Outcome of the projection oracle at one query point.
#[derive(Debug, Clone)]
pub struct ProjectionResult<T> {
    /// Distinct local minima found, sorted by ascending distance.
    pub minima: Vec<LocalMinimum<T>>,
    /// True when every minimum within the depth tolerance of the best
    /// decodes to the same manifold point (spatial tolerance).
    pub unique: bool,
    /// Distance between the best and the second-best distinct minimum;
    /// infinite when only one minimum was found.
    pub distance_gap: T,
    /// Restarts that hit the iteration cap.
    pub n_unconverged: usize,
    /// True when any reported minimum touches the search box boundary.
    pub boundary_hit: bool,
}

impl<T: Real> ProjectionResult<T> {
    /// Best (smallest-distance) minimum.
    pub fn best(&self) -> &LocalMinimum<T> {
        &self.minima[0]
    }
}

/// Nearest-point search without an encoder; restarts draw uniformly from the
/// latent box (the first starts at the box center).
pub fn project<T, D, R>(
    x: &AmbientPoint<T>,
    decoder: &D,
    cfg: &ProjectionConfig<T>,
    rng: &mut R,
) -> Result<ProjectionResult<T>>
where
    T: Real,
    D: Decoder<T>,
    R: Rng + ?Sized,
{
    project_impl(x, decoder, None, cfg, rng)
}

/// Nearest-point search seeded with `encode(x)` and perturbations of it, in
/// addition to uniform draws from the latent box.
pub fn project_with_encoder<T, D, R>(
    x: &AmbientPoint<T>,
    decoder: &D,
    encoder: &dyn Encoder<T>,
    cfg: &ProjectionConfig<T>,
    rng: &mut R,
) -> Result<ProjectionResult<T>>
where
    T: Real,
    D: Decoder<T>,
    R: Rng + ?Sized,
{
    project_impl(x, decoder, Some(encoder), cfg, rng)
}

fn project_impl<T, D, R>(
    x: &AmbientPoint<T>,
    decoder: &D,
    encoder: Option<&dyn Encoder<T>>,
    cfg: &ProjectionConfig<T>,
    rng: &mut R,
) -> Result<ProjectionResult<T>>
where
    T: Real,
    D: Decoder<T>,
    R: Rng + ?Sized,
{
    if cfg.restarts == 0 || cfg.max_iters == 0 {
        return Err(Error::InvalidArgument {
            name: "projection",
            reason: "restarts and max_iters must be at least 1".into(),
        });
    }
    if !(cfg.latent_box_halfwidth > T::zero()) {
        return Err(Error::InvalidArgument {
            name: "latent_box_halfwidth",
            reason: "must be positive".into(),
        });
    }
    if x.dim() != decoder.ambient_dim() {
        return Err(Error::DimensionMismatch {
            context: "project",
            expected: decoder.ambient_dim(),
            got: x.dim(),
        });
    }
    let d = decoder.latent_dim();
    let b = cfg.latent_box_halfwidth;

    // Starting points: encode(x) if available, perturbations of it, then
    // uniform draws from the box (the first uniform draw is the center).
    let mut starts: Vec<Vec<T>> = Vec::with_capacity(cfg.restarts);
    let z_enc: Option<Vec<T>> = match encoder {
        Some(e) => {
            let z = e.encode(x)?;
            Some(z.as_slice().iter().map(|&v| clamp(v, b)).collect())
        }
        None => None,
    };
    if let Some(z0) = &z_enc {
        starts.push(z0.clone());
        let n_perturbed = (cfg.restarts - 1) / 2;
        for _ in 0..n_perturbed {
            let z: Vec<T> = z0
                .iter()
                .map(|&v| {
                    let eps: f64 = rng.sample(rand_distr::StandardNormal);
                    clamp(v + cfg.perturbation_scale * real::<T>(eps), b)
                })
                .collect();
            starts.push(z);
        }
    } else {
        starts.push(vec![T::zero(); d]);
    }
    while starts.len() < cfg.restarts {
        let z: Vec<T> = (0..d)
            .map(|_| {
                let u: f64 = rng.gen_range(-1.0..1.0);
                b * real::<T>(u)
            })
            .collect();
        starts.push(z);
    }

    // Descend from every start.
    let mut raw: Vec<LocalMinimum<T>> = Vec::with_capacity(starts.len());
    let mut n_unconverged = 0usize;
    for start in starts {
        let m = descend(x, decoder, start, cfg)?;
        if !m.converged {
            n_unconverged += 1;
        }
        raw.push(m);
    }

    // Deduplicate by decoded point, keeping the better distance.
    raw.sort_by(|a, b| a.distance.partial_cmp(&b.distance).expect("finite distances"));
    let mut minima: Vec<LocalMinimum<T>> = Vec::new();
    for cand in raw {
        let dup = minima.iter().any(|kept| {
            linalg::dist(kept.point.as_slice(), cand.point.as_slice()) <= cfg.spatial_tolerance
        });
        if !dup {
            minima.push(cand);
        }
    }

    let best = minima[0].distance;
    let depth_band = best * (T::one() + cfg.cluster_tolerance) + real::<T>(1e-12);
    let near_optimal = minima.iter().filter(|m| m.distance <= depth_band).count();
    let unique = near_optimal == 1;
    let distance_gap = if minima.len() > 1 {
        minima[1].distance - best
    } else {
        T::infinity()
    };
    let boundary_hit = minima.iter().any(|m| m.on_boundary);

    Ok(ProjectionResult {
        minima,
        unique,
        distance_gap,
        n_unconverged,
        boundary_hit,
    })
}

#[inline]
fn clamp<T: Real>(v: T, halfwidth: T) -> T {
    v.max(-halfwidth).min(halfwidth)
}

/// Projected gradient descent on `h(z) = |x - f(z)|^2` with backtracking
/// (halve on failure, double on success).
fn descend<T, D>(
    x: &AmbientPoint<T>,
    decoder: &D,
    mut z: Vec<T>,
    cfg: &ProjectionConfig<T>,
) -> Result<LocalMinimum<T>>
where
    T: Real,
    D: Decoder<T>,
{
    let b = cfg.latent_box_halfwidth;
    let eval = |z: &[T]| -> Result<(AmbientPoint<T>, T)> {
        let p = decoder.decode(&LatentPoint::new(z.to_vec())?)?;
        let h = {
            let r = linalg::sub(x.as_slice(), p.as_slice());
            linalg::norm_sq(&r)
        };
        Ok((p, h))
    };

    let (mut point, mut h) = eval(&z)?;
    let mut step = real::<T>(0.25);
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let jac = decoder.jacobian(&LatentPoint::new(z.clone())?)?;
        let residual = linalg::sub(x.as_slice(), point.as_slice());
        let mut grad = jac.mat().tr_matvec(&residual);
        for g in grad.iter_mut() {
            *g = *g * real::<T>(-2.0);
        }
        // First-order test on the box-projected gradient: components pushing
        // out of the box at an active bound do not count.
        let pgnorm = z
            .iter()
            .zip(&grad)
            .map(|(&zi, &gi)| {
                let blocked = (zi >= b && gi < T::zero()) || (zi <= -b && gi > T::zero());
                if blocked {
                    T::zero()
                } else {
                    gi * gi
                }
            })
            .sum::<T>()
            .sqrt();
        if pgnorm <= cfg.grad_tolerance * (T::one() + h) {
            converged = true;
            break;
        }
        // Backtracking: halve until the step decreases h.
        let mut accepted = false;
        for _ in 0..80 {
            let z_new: Vec<T> = z
                .iter()
                .zip(&grad)
                .map(|(zi, gi)| clamp(*zi - step * *gi, b))
                .collect();
            let (p_new, h_new) = eval(&z_new)?;
            if h_new < h {
                z = z_new;
                point = p_new;
                h = h_new;
                step = step * real::<T>(2.0);
                accepted = true;
                break;
            }
            step = step * real::<T>(0.5);
            if step < real::<T>(1e-18) {
                break;
            }
        }
        if !accepted {
            // h cannot decrease at floating-point resolution. When h is
            // large its representable decrements exceed what a tiny gradient
            // step can shave off, so the strict criterion may be out of
            // reach; accept the point as a numerical minimum if it still
            // passes a first-order check at the orthogonality scale.
            let floor = cfg.grad_tolerance.max(real(1e-6));
            converged = pgnorm <= floor * (T::one() + h);
            break;
        }
    }

    let on_boundary = z
        .iter()
        .any(|&v| v.abs() >= b - real::<T>(1e-9) * (T::one() + b));
    Ok(LocalMinimum {
        z: LatentPoint::new(z)?,
        point,
        distance: h.sqrt(),
        converged,
        on_boundary,
    })
}
