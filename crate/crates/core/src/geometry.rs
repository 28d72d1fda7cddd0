//! Pointwise normal reach: ratios, projections, and sample-based estimates.
//!
//! For a manifold given as the image of a decoder `f`, the reach ratio of a
//! base point `x` (with tangent space spanned by the Jacobian columns) and
//! another manifold point `y` is
//!
//! ```text
//!     R(x, y) = |x - y|^2 / (2 |P_N (y - x)|)
//! ```
//!
//! where `P_N` projects onto the normal space at `x`. The pointwise normal
//! reach at `x` is the infimum of `R(x, y)` over the manifold; taking the
//! minimum over any finite sample set therefore yields an upper bound that
//! only tightens as samples are added.

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky, Mat};
use crate::scalar::{real, Real};

/// Relative tangency threshold: when the normal component of `y - x` is
/// smaller than this fraction of `|y - x|`, the ratio is reported as
/// infinite rather than amplified rounding noise.
pub const TANGENCY_TOLERANCE: f64 = 1e-9;

/// Absolute noise floor for the normal component, scaled by `1 + |x|`.
///
/// Decoded coordinates carry rounding error of a few ulps (~1e-16 at unit
/// scale), so the computed normal component of a short chord is dominated by
/// that noise once it drops near machine epsilon: a ratio built from it is
/// arbitrary and can grossly underestimate. Keeping only components above
/// 1e-6 * (1 + |x|) caps the relative error of accepted ratios at ~1e-9.
/// The cost is that chords shorter than about `sqrt(2 r) * 1e-3` are treated
/// as tangent — they carry no curvature information that slightly longer
/// chords do not, so the induced bias on the estimate is O(1e-6) relative.
pub const NORMAL_NOISE_FLOOR: f64 = 1e-6;

/// Rank threshold: the smallest eigenvalue of `J^T J` must be at least this
/// fraction of the largest, otherwise the Jacobian is treated as
/// rank-deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Duplicate threshold factor: `y` counts as a duplicate of `x` when
/// `|x - y| <= DUPLICATE_TOLERANCE * (1 + |x|)`.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

// ───────────────────────── validated points ─────────────────────────

/// Point (or displacement) in the ambient space `R^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientPoint<T> {
    coords: Vec<T>,
}

/// Point in the latent space `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPoint<T> {
    coords: Vec<T>,
}

macro_rules! impl_point {
    ($name:ident, $ctx:literal) => {
        impl<T: Real> $name<T> {
            /// Validates that the coordinates are non-empty and finite.
            pub fn new(coords: Vec<T>) -> Result<Self> {
                if coords.is_empty() {
                    return Err(Error::DimensionMismatch {
                        context: $ctx,
                        expected: 1,
                        got: 0,
                    });
                }
                if !linalg::all_finite(&coords) {
                    return Err(Error::NonFinite { context: $ctx });
                }
                Ok(Self { coords })
            }

            pub fn dim(&self) -> usize {
                self.coords.len()
            }

            pub fn as_slice(&self) -> &[T] {
                &self.coords
            }

            pub fn into_vec(self) -> Vec<T> {
                self.coords
            }
        }

        impl<T: Real> std::ops::Deref for $name<T> {
            type Target = [T];
            fn deref(&self) -> &[T] {
                &self.coords
            }
        }
    };
}

impl_point!(AmbientPoint, "AmbientPoint");
impl_point!(LatentPoint, "LatentPoint");

// ───────────────────────── Jacobian ─────────────────────────

/// Decoder Jacobian at a latent point: `D x d` with entry `(i, j)` holding
/// the partial derivative of output `i` with respect to latent coordinate
/// `j`. Requires `1 <= d < D` so that a nontrivial normal space exists.
#[derive(Debug, Clone)]
pub struct JacobianMatrix<T> {
    mat: Mat<T>,
    eval_point: Option<LatentPoint<T>>,
}

impl<T: Real> JacobianMatrix<T> {
    pub fn new(mat: Mat<T>) -> Result<Self> {
        if mat.cols() == 0 {
            return Err(Error::DimensionMismatch {
                context: "JacobianMatrix (latent dim)",
                expected: 1,
                got: 0,
            });
        }
        if mat.rows() <= mat.cols() {
            return Err(Error::InvalidArgument {
                name: "jacobian",
                reason: format!(
                    "ambient dimension {} must exceed latent dimension {}",
                    mat.rows(),
                    mat.cols()
                ),
            });
        }
        if !mat.all_finite() {
            return Err(Error::NonFinite {
                context: "JacobianMatrix",
            });
        }
        Ok(JacobianMatrix {
            mat,
            eval_point: None,
        })
    }

    /// Attaches the latent point the Jacobian was evaluated at.
    pub fn with_eval_point(mut self, z: LatentPoint<T>) -> Self {
        self.eval_point = Some(z);
        self
    }

    pub fn ambient_dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.mat.cols()
    }

    pub fn mat(&self) -> &Mat<T> {
        &self.mat
    }

    pub fn eval_point(&self) -> Option<&LatentPoint<T>> {
        self.eval_point.as_ref()
    }
}

// ───────────────────────── normal projection ─────────────────────────

/// Projection onto the normal space of a tangent frame, prepared once and
/// applied to many vectors.
///
/// Applies `v - J (J^T J)^{-1} J^T v` with the Gram matrix factored by a
/// Cholesky decomposition; construction costs `O(D d^2 + d^3)` and each
/// application `O(D d)`.
#[derive(Debug, Clone)]
pub struct NormalProjector<T> {
    j: Mat<T>,
    chol: Cholesky<T>,
}

impl<T: Real> NormalProjector<T> {
    /// Validates the rank of the Jacobian and factors its Gram matrix.
    pub fn new(jacobian: &JacobianMatrix<T>) -> Result<Self> {
        let gram = jacobian.mat().gram();
        let (min_eig, max_eig) = linalg::sym_eig_extremes(&gram);
        let rank_err = || Error::RankDeficient {
            min_eig: min_eig.to_f64().unwrap_or(f64::NAN),
            max_eig: max_eig.to_f64().unwrap_or(f64::NAN),
        };
        if !(max_eig > T::zero()) || min_eig < real::<T>(RANK_TOLERANCE) * max_eig {
            return Err(rank_err());
        }
        let chol = Cholesky::new(&gram).ok_or_else(rank_err)?;
        Ok(NormalProjector {
            j: jacobian.mat().clone(),
            chol,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.j.rows()
    }

    /// Splits `v` into `(tangent, normal)` components summing back to `v`.
    pub fn split(&self, v: &[T]) -> (Vec<T>, Vec<T>) {
        debug_assert_eq!(v.len(), self.j.rows());
        let coeffs = self.chol.solve(&self.j.tr_matvec(v));
        let tangent = self.j.matvec(&coeffs);
        let normal = linalg::sub(v, &tangent);
        (tangent, normal)
    }

    /// Component of `v` in the normal space.
    pub fn normal_component(&self, v: &[T]) -> Vec<T> {
        self.split(v).1
    }

    /// Coefficients of the tangent component in the Jacobian column basis,
    /// together with the normal component: `v = J w + n`.
    pub fn decompose(&self, v: &[T]) -> (Vec<T>, Vec<T>) {
        let coeffs = self.chol.solve(&self.j.tr_matvec(v));
        let tangent = self.j.matvec(&coeffs);
        let normal = linalg::sub(v, &tangent);
        (coeffs, normal)
    }
}

/// Projects `v` onto the normal space at the point where `jacobian` was
/// evaluated.
pub fn normal_projection<T: Real>(
    jacobian: &JacobianMatrix<T>,
    v: &AmbientPoint<T>,
) -> Result<AmbientPoint<T>> {
    if v.dim() != jacobian.ambient_dim() {
        return Err(Error::DimensionMismatch {
            context: "normal_projection",
            expected: jacobian.ambient_dim(),
            got: v.dim(),
        });
    }
    let proj = NormalProjector::new(jacobian)?;
    AmbientPoint::new(proj.normal_component(v.as_slice()))
}

// ───────────────────────── reach ratio ─────────────────────────

/// Reach ratio against a prepared projector; use this form when evaluating
/// many samples against the same base point.
pub fn reach_ratio_prepared<T: Real>(
    x: &AmbientPoint<T>,
    projector: &NormalProjector<T>,
    y: &AmbientPoint<T>,
) -> Result<T> {
    if x.dim() != projector.ambient_dim() || y.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            context: "reach_ratio",
            expected: projector.ambient_dim(),
            got: if x.dim() != projector.ambient_dim() {
                x.dim()
            } else {
                y.dim()
            },
        });
    }
    let u = linalg::sub(y.as_slice(), x.as_slice());
    let dist = linalg::norm(&u);
    let dup_tol = real::<T>(DUPLICATE_TOLERANCE) * (T::one() + linalg::norm(x.as_slice()));
    if dist <= dup_tol {
        return Err(Error::DuplicatePoint {
            tolerance: dup_tol.to_f64().unwrap_or(f64::NAN),
        });
    }
    let normal = projector.normal_component(&u);
    let p = linalg::norm(&normal);
    let noise_floor = real::<T>(NORMAL_NOISE_FLOOR) * (T::one() + linalg::norm(x.as_slice()));
    if p <= (real::<T>(TANGENCY_TOLERANCE) * dist).max(noise_floor) {
        return Ok(T::infinity());
    }
    Ok(dist * dist / (real::<T>(2.0) * p))
}

/// Reach ratio `R(x, y) = |x - y|^2 / (2 |P_N (y - x)|)`, infinite when the
/// displacement is (numerically) tangent at `x`.
pub fn reach_ratio<T: Real>(
    x: &AmbientPoint<T>,
    jacobian: &JacobianMatrix<T>,
    y: &AmbientPoint<T>,
) -> Result<T> {
    let projector = NormalProjector::new(jacobian)?;
    reach_ratio_prepared(x, &projector, y)
}

// ───────────────────────── sample-based estimates ─────────────────────────

/// Result of estimating the pointwise normal reach at one base point.
#[derive(Debug, Clone)]
pub struct ReachEstimate<T> {
    /// Base point the estimate refers to.
    pub base_point: AmbientPoint<T>,
    /// Estimated pointwise normal reach; an upper bound of the true value,
    /// infinite when every sample was tangent.
    pub r_hat: T,
    /// Number of samples that survived duplicate filtering and entered the
    /// minimum.
    pub n_samples_used: usize,
    /// Radius of the neighborhood the samples were drawn from; for a static
    /// sample set this is the largest distance among used samples.
    pub search_radius_final: T,
}

/// Minimum ratio over a sample set together with the index of the minimizer.
///
/// Duplicates of `x` are skipped. Returns `EmptySampleSet` when nothing
/// survives filtering. The minimizer index is `None` when every surviving
/// sample was tangent (infinite ratio).
pub(crate) fn min_ratio_over_samples<T: Real>(
    x: &AmbientPoint<T>,
    projector: &NormalProjector<T>,
    samples: &[AmbientPoint<T>],
) -> Result<(T, Option<usize>, usize, T)> {
    let mut best = T::infinity();
    let mut best_idx = None;
    let mut used = 0usize;
    let mut max_dist = T::zero();
    for (idx, y) in samples.iter().enumerate() {
        match reach_ratio_prepared(x, projector, y) {
            Ok(r) => {
                used += 1;
                max_dist = max_dist.max(linalg::dist(x.as_slice(), y.as_slice()));
                if r < best {
                    best = r;
                    best_idx = Some(idx);
                }
            }
            Err(Error::DuplicatePoint { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::EmptySampleSet);
    }
    Ok((best, best_idx, used, max_dist))
}

/// Estimates the pointwise normal reach at `x` as the minimum ratio over a
/// finite sample set. The result never underestimates by construction and is
/// monotone non-increasing under sample-set growth.
pub fn pointwise_reach_over_samples<T: Real>(
    x: &AmbientPoint<T>,
    jacobian: &JacobianMatrix<T>,
    samples: &[AmbientPoint<T>],
) -> Result<ReachEstimate<T>> {
    let projector = NormalProjector::new(jacobian)?;
    let (r_hat, _, used, max_dist) = min_ratio_over_samples(x, &projector, samples)?;
    Ok(ReachEstimate {
        base_point: x.clone(),
        r_hat,
        n_samples_used: used,
        search_radius_final: max_dist,
    })
}

/// Estimates the global reach of a sampled manifold as the minimum ratio
/// over all ordered pairs of distinct points.
pub fn global_reach_over_samples<T: Real>(
    points: &[(AmbientPoint<T>, JacobianMatrix<T>)],
) -> Result<T> {
    if points.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: points.len(),
        });
    }
    let projectors: Vec<NormalProjector<T>> = points
        .iter()
        .map(|(_, j)| NormalProjector::new(j))
        .collect::<Result<_>>()?;
    let mut best = T::infinity();
    let mut any_pair = false;
    for (i, (x, _)) in points.iter().enumerate() {
        for (k, (y, _)) in points.iter().enumerate() {
            if i == k {
                continue;
            }
            match reach_ratio_prepared(x, &projectors[i], y) {
                Ok(r) => {
                    any_pair = true;
                    best = best.min(r);
                }
                Err(Error::DuplicatePoint { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    if !any_pair {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: 1,
        });
    }
    Ok(best)
}

/// Checks the universal lower bound `R(x, y) >= |x - y| / 2`, allowing
/// relative floating-point slack of `1e-12`.
pub fn half_distance_bound_holds<T: Real>(
    x: &AmbientPoint<T>,
    jacobian: &JacobianMatrix<T>,
    y: &AmbientPoint<T>,
) -> Result<bool> {
    let r = reach_ratio(x, jacobian, y)?;
    let half = linalg::dist(x.as_slice(), y.as_slice()) / real::<T>(2.0);
    Ok(r >= half * (T::one() - real::<T>(1e-12)))
}
