//! Closed-form reference manifolds with exact Jacobians.
//!
//! These implement the same [`Decoder`]/[`Encoder`] traits as trained models
//! and serve as ground truth: their reach is known analytically, so sampling
//! estimators and projection oracles can be validated against them.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{AmbientPoint, JacobianMatrix, LatentPoint};
use crate::linalg::{self, Mat};
use crate::nn::{Decoder, Encoder};
use crate::scalar::{real, Real};

/// A manifold given by explicit formulas.
#[derive(Debug, Clone)]
pub enum AnalyticManifold<T> {
    /// Circle of the given radius in the plane: `z -> r (cos z, sin z)`.
    /// Pointwise normal reach `r` everywhere; the encoder returns the angle,
    /// so decode(encode(x)) is the radial projection onto the circle.
    Circle { radius: T },
    /// Affine subspace `z -> origin + B z` with a full-rank `D x d` basis.
    /// Reach is infinite; the encoder is the least-squares coordinate map,
    /// so decode(encode(x)) is the orthogonal projection onto the subspace.
    FlatAffine { origin: Vec<T>, basis: Mat<T> },
    /// Embedded quadratic surface `(z1, z2) -> U (z1, z2, z1^2 + z2^2, 0,
    /// ..., 0)` for an orthogonal `U`; pointwise normal reach 0.5 at the
    /// image of the origin. The encoder reads the first two coordinates of
    /// `U^T x`.
    QuadraticSurface { u: Mat<T> },
    /// Plane parabola `z -> (z, z^2)`; pointwise normal reach 0.5 at the
    /// vertex, with non-unique nearest points for `(0, y)` when `y > 0.5`.
    /// The encoder reads the first coordinate.
    Parabola,
}

impl<T: Real> AnalyticManifold<T> {
    /// Circle of positive radius.
    pub fn circle(radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidArgument {
                name: "radius",
                reason: format!("must be positive and finite, got {radius}"),
            });
        }
        Ok(AnalyticManifold::Circle { radius })
    }

    /// Affine subspace through `origin` spanned by the columns of `basis`.
    pub fn flat_affine(origin: Vec<T>, basis: Mat<T>) -> Result<Self> {
        if origin.len() != basis.rows() {
            return Err(Error::DimensionMismatch {
                context: "flat_affine",
                expected: basis.rows(),
                got: origin.len(),
            });
        }
        if !linalg::all_finite(&origin) || !basis.all_finite() {
            return Err(Error::NonFinite {
                context: "flat_affine",
            });
        }
        // Full column rank is required for the least-squares encoder; reuse
        // the same eigenvalue criterion as the projector.
        let jac = JacobianMatrix::new(basis.clone())?;
        crate::geometry::NormalProjector::new(&jac)?;
        Ok(AnalyticManifold::FlatAffine { origin, basis })
    }

    /// Quadratic surface embedded by an explicit orthogonal matrix
    /// (`n >= 3`, orthogonality checked to 1e-12).
    pub fn quadratic_surface(u: Mat<T>) -> Result<Self> {
        let n = u.rows();
        if n < 3 || u.cols() != n {
            return Err(Error::InvalidArgument {
                name: "u",
                reason: format!("need a square matrix with n >= 3, got {}x{}", n, u.cols()),
            });
        }
        let gram = u.gram();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { T::one() } else { T::zero() };
                if (gram[(i, j)] - want).abs() > real::<T>(1e-12) {
                    return Err(Error::InvalidArgument {
                        name: "u",
                        reason: format!("not orthogonal: (U^T U)[{i},{j}] = {}", gram[(i, j)]),
                    });
                }
            }
        }
        Ok(AnalyticManifold::QuadraticSurface { u })
    }

    /// Quadratic surface with a seeded random orthogonal embedding.
    pub fn quadratic_surface_random<R: Rng + ?Sized>(n_ambient: usize, rng: &mut R) -> Result<Self> {
        if n_ambient < 3 {
            return Err(Error::InvalidArgument {
                name: "n_ambient",
                reason: format!("need n >= 3, got {n_ambient}"),
            });
        }
        Self::quadratic_surface(linalg::random_orthogonal(n_ambient, rng))
    }

    /// Quadratic surface with the identity embedding (first three axes).
    pub fn quadratic_surface_identity(n_ambient: usize) -> Result<Self> {
        Self::quadratic_surface(Mat::identity(n_ambient.max(3)))
    }

    fn check_latent(&self, got: usize) -> Result<()> {
        let want = Decoder::latent_dim(self);
        if got != want {
            return Err(Error::DimensionMismatch {
                context: "analytic decode",
                expected: want,
                got,
            });
        }
        Ok(())
    }

    fn check_ambient(&self, got: usize) -> Result<()> {
        let want = Decoder::ambient_dim(self);
        if got != want {
            return Err(Error::DimensionMismatch {
                context: "analytic encode",
                expected: want,
                got,
            });
        }
        Ok(())
    }

    /// The embedding vector `(z1, z2, z1^2 + z2^2, 0, ..., 0)`.
    fn quadratic_feature(n: usize, z: &[T]) -> Vec<T> {
        let mut v = vec![T::zero(); n];
        v[0] = z[0];
        v[1] = z[1];
        v[2] = z[0] * z[0] + z[1] * z[1];
        v
    }
}

impl<T: Real> Decoder<T> for AnalyticManifold<T> {
    fn latent_dim(&self) -> usize {
        match self {
            AnalyticManifold::Circle { .. } | AnalyticManifold::Parabola => 1,
            AnalyticManifold::FlatAffine { basis, .. } => basis.cols(),
            AnalyticManifold::QuadraticSurface { .. } => 2,
        }
    }

    fn ambient_dim(&self) -> usize {
        match self {
            AnalyticManifold::Circle { .. } | AnalyticManifold::Parabola => 2,
            AnalyticManifold::FlatAffine { basis, .. } => basis.rows(),
            AnalyticManifold::QuadraticSurface { u } => u.rows(),
        }
    }

    fn decode(&self, z: &LatentPoint<T>) -> Result<AmbientPoint<T>> {
        self.check_latent(z.dim())?;
        let coords = match self {
            AnalyticManifold::Circle { radius } => {
                vec![*radius * z[0].cos(), *radius * z[0].sin()]
            }
            AnalyticManifold::FlatAffine { origin, basis } => {
                let mut out = basis.matvec(z.as_slice());
                for (o, g) in out.iter_mut().zip(origin) {
                    *o += *g;
                }
                out
            }
            AnalyticManifold::QuadraticSurface { u } => {
                u.matvec(&Self::quadratic_feature(u.rows(), z.as_slice()))
            }
            AnalyticManifold::Parabola => vec![z[0], z[0] * z[0]],
        };
        AmbientPoint::new(coords)
    }

    fn jacobian(&self, z: &LatentPoint<T>) -> Result<JacobianMatrix<T>> {
        self.check_latent(z.dim())?;
        let mat = match self {
            AnalyticManifold::Circle { radius } => Mat::from_rows(&[
                vec![-*radius * z[0].sin()],
                vec![*radius * z[0].cos()],
            ])?,
            AnalyticManifold::FlatAffine { basis, .. } => basis.clone(),
            AnalyticManifold::QuadraticSurface { u } => {
                let n = u.rows();
                let two = real::<T>(2.0);
                let mut k = Mat::zeros(n, 2);
                k[(0, 0)] = T::one();
                k[(1, 1)] = T::one();
                k[(2, 0)] = two * z[0];
                k[(2, 1)] = two * z[1];
                u.matmul(&k)
            }
            AnalyticManifold::Parabola => {
                Mat::from_rows(&[vec![T::one()], vec![real::<T>(2.0) * z[0]]])?
            }
        };
        Ok(JacobianMatrix::new(mat)?.with_eval_point(z.clone()))
    }
}

impl<T: Real> Encoder<T> for AnalyticManifold<T> {
    fn latent_dim(&self) -> usize {
        Decoder::latent_dim(self)
    }

    fn ambient_dim(&self) -> usize {
        Decoder::ambient_dim(self)
    }

    fn encode(&self, x: &AmbientPoint<T>) -> Result<LatentPoint<T>> {
        self.check_ambient(x.dim())?;
        let coords = match self {
            AnalyticManifold::Circle { .. } => vec![x[1].atan2(x[0])],
            AnalyticManifold::FlatAffine { origin, basis } => {
                let shifted = linalg::sub(x.as_slice(), origin);
                let gram = basis.gram();
                let chol = linalg::Cholesky::new(&gram).ok_or(Error::RankDeficient {
                    min_eig: f64::NAN,
                    max_eig: f64::NAN,
                })?;
                chol.solve(&basis.tr_matvec(&shifted))
            }
            AnalyticManifold::QuadraticSurface { u } => {
                let back = u.tr_matvec(x.as_slice());
                vec![back[0], back[1]]
            }
            AnalyticManifold::Parabola => vec![x[0]],
        };
        LatentPoint::new(coords)
    }
}
