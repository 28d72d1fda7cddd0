//! Synthetic datasets and point-cloud CSV I/O.
//!
//! Two generators used throughout the experiments: a noisy circular arc in
//! the plane (the autoencoder training set) and samples from an embedded
//! quadratic surface in higher-dimensional ambient space (the dimension
//! sweep). CSV helpers round-trip point clouds losslessly via shortest
//! decimal representation.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{AmbientPoint, JacobianMatrix};
use crate::linalg::Mat;
use crate::sampling::rng_stream;
use crate::scalar::{real, Real};

/// How the Gaussian noise perturbs arc points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Noise scales the radius: the point stays on the ray through the
    /// clean arc point, so zero noise amplitude leaves the arc intact.
    Radial,
    /// Noise is a scalar added to both coordinates (a diagonal shear).
    Scalar,
}

/// Configuration of the noisy circular-arc dataset.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CircleArcConfig<T> {
    /// Number of points to draw.
    pub n_points: usize,
    /// Clean arc radius.
    pub radius: T,
    /// Amplitude multiplying the Gaussian noise.
    pub noise_amplitude: T,
    /// Noise coupling.
    pub noise_mode: NoiseMode,
    /// Arc extent: angles are uniform on `[0, arc_span]`.
    pub arc_span: T,
    /// RNG seed.
    pub seed: u64,
}

impl<T: Real> Default for CircleArcConfig<T> {
    fn default() -> Self {
        CircleArcConfig {
            n_points: 400,
            radius: T::one(),
            noise_amplitude: real(1.5),
            noise_mode: NoiseMode::Radial,
            arc_span: real::<T>(1.5) * T::PI(),
            seed: 0,
        }
    }
}

/// Draws the noisy arc: angle `z ~ U[0, arc_span]`, noise `e ~ N(0,1)`, and
/// a point whose clean position is `radius * (sin z, -cos z)`.
///
/// In `Radial` mode the point is `(radius + amplitude*cos(z)*e) * (sin z,
/// -cos z)`; the `cos(z)` factor makes the noise vanish at the arc's quarter
/// turns, so the cloud pinches onto the clean arc there. In `Scalar` mode
/// the same scalar `amplitude*cos(z)*e` is added to both coordinates.
pub fn gen_circle_arc<T: Real>(cfg: &CircleArcConfig<T>) -> Result<Vec<AmbientPoint<T>>> {
    if cfg.n_points == 0 {
        return Err(Error::InvalidArgument {
            name: "n_points",
            reason: "must be at least 1".into(),
        });
    }
    if !(cfg.radius > T::zero()) || !cfg.radius.is_finite() {
        return Err(Error::InvalidArgument {
            name: "radius",
            reason: "must be positive and finite".into(),
        });
    }
    if !(cfg.noise_amplitude >= T::zero()) || !cfg.noise_amplitude.is_finite() {
        return Err(Error::InvalidArgument {
            name: "noise_amplitude",
            reason: "must be non-negative and finite".into(),
        });
    }
    if !(cfg.arc_span > T::zero()) || !cfg.arc_span.is_finite() {
        return Err(Error::InvalidArgument {
            name: "arc_span",
            reason: "must be positive and finite".into(),
        });
    }
    let mut rng = rng_stream(cfg.seed, 0);
    let mut points = Vec::with_capacity(cfg.n_points);
    for _ in 0..cfg.n_points {
        let z = cfg.arc_span * real::<T>(rng.gen::<f64>());
        let eps: T = real(rng.sample::<f64, _>(StandardNormal));
        let dir = [z.sin(), -z.cos()];
        let bump = cfg.noise_amplitude * z.cos() * eps;
        let p = match cfg.noise_mode {
            NoiseMode::Radial => {
                let r = cfg.radius + bump;
                vec![r * dir[0], r * dir[1]]
            }
            NoiseMode::Scalar => {
                vec![cfg.radius * dir[0] + bump, cfg.radius * dir[1] + bump]
            }
        };
        points.push(AmbientPoint::new(p)?);
    }
    Ok(points)
}

/// Samples from the quadratic surface `z -> U (z1, z2, z1^2 + z2^2, 0, ...)`
/// embedded in `n`-dimensional ambient space by a random rotation `U`.
#[derive(Debug, Clone)]
pub struct QuadraticSurfaceSamples<T> {
    /// Decoded surface points.
    pub points: Vec<AmbientPoint<T>>,
    /// Latent parameters that generated each point.
    pub latents: Vec<[T; 2]>,
    /// The embedding used (for analytic cross-checks).
    pub manifold: crate::analytic::AnalyticManifold<T>,
    /// Analytic Jacobian at the origin.
    pub jacobian_at_origin: JacobianMatrix<T>,
}

/// Draws `m_samples` surface points with latents uniform on the disk of
/// radius `domain_radius` (area-uniform: `r = R*sqrt(u)`).
pub fn gen_quadratic_surface_samples<T: Real>(
    n_ambient: usize,
    m_samples: usize,
    domain_radius: T,
    seed: u64,
) -> Result<QuadraticSurfaceSamples<T>> {
    if n_ambient < 3 {
        return Err(Error::InvalidArgument {
            name: "n_ambient",
            reason: "quadratic surface needs ambient dimension >= 3".into(),
        });
    }
    if m_samples == 0 {
        return Err(Error::InvalidArgument {
            name: "m_samples",
            reason: "must be at least 1".into(),
        });
    }
    if !(domain_radius > T::zero()) || !domain_radius.is_finite() {
        return Err(Error::InvalidArgument {
            name: "domain_radius",
            reason: "must be positive and finite".into(),
        });
    }
    let mut rng = rng_stream(seed, 0);
    let manifold = crate::analytic::AnalyticManifold::quadratic_surface_random(n_ambient, &mut rng)?;
    let mut points = Vec::with_capacity(m_samples);
    let mut latents = Vec::with_capacity(m_samples);
    for _ in 0..m_samples {
        let r = domain_radius * real::<T>(rng.gen::<f64>().sqrt());
        let theta = real::<T>(2.0) * T::PI() * real::<T>(rng.gen::<f64>());
        let z = [r * theta.cos(), r * theta.sin()];
        let p = crate::nn::Decoder::decode(
            &manifold,
            &crate::geometry::LatentPoint::new(z.to_vec())?,
        )?;
        points.push(p);
        latents.push(z);
    }
    let origin = crate::geometry::LatentPoint::new(vec![T::zero(); 2])?;
    let jacobian_at_origin = crate::nn::Decoder::jacobian(&manifold, &origin)?;
    Ok(QuadraticSurfaceSamples {
        points,
        latents,
        manifold,
        jacobian_at_origin,
    })
}

/// Reads a point cloud from CSV. A header row is detected automatically: if
/// every field of the first row parses as a number it is data, otherwise it
/// is skipped. All rows must have the same width.
pub fn load_point_cloud<T: Real>(path: &Path) -> Result<Vec<AmbientPoint<T>>> {
    let file = std::fs::File::open(path)?;
    read_point_cloud(BufReader::new(file))
}

/// [`load_point_cloud`] over any reader (useful for tests and stdin).
pub fn read_point_cloud<T: Real, R: Read>(reader: R) -> Result<Vec<AmbientPoint<T>>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut points: Vec<AmbientPoint<T>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, record) in csv_reader.records().enumerate() {
        let record = record.map_err(|e| Error::ParseError {
            row: idx + 1,
            col: 0,
            message: e.to_string(),
        })?;
        let fields: Vec<&str> = record.iter().map(str::trim).collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut coords = Vec::with_capacity(fields.len());
        let mut failed_col = None;
        for (col, field) in fields.iter().enumerate() {
            match field.parse::<f64>() {
                Ok(v) => coords.push(real::<T>(v)),
                Err(_) => {
                    failed_col = Some(col);
                    break;
                }
            }
        }
        if let Some(col) = failed_col {
            // A non-numeric first row is a header; anywhere else it is an
            // error.
            if idx == 0 {
                continue;
            }
            return Err(Error::ParseError {
                row: idx + 1,
                col: col + 1,
                message: format!("cannot parse {:?} as a number", fields[col]),
            });
        }
        if let Some(w) = width {
            if coords.len() != w {
                return Err(Error::RaggedRows {
                    row: idx + 1,
                    expected: w,
                    got: coords.len(),
                });
            }
        } else {
            width = Some(coords.len());
        }
        points.push(AmbientPoint::new(coords)?);
    }
    if points.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    Ok(points)
}

/// Writes a point cloud as CSV with header `x0,x1,...`, LF newlines, and
/// shortest round-trip float formatting.
pub fn save_point_cloud<T: Real>(path: &Path, points: &[AmbientPoint<T>]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_point_cloud(BufWriter::new(file), points)
}

/// [`save_point_cloud`] over any writer.
pub fn write_point_cloud<T: Real, W: Write>(mut w: W, points: &[AmbientPoint<T>]) -> Result<()> {
    let Some(first) = points.first() else {
        return Err(Error::EmptySampleSet);
    };
    let dim = first.dim();
    let header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, p) in points.iter().enumerate() {
        if p.dim() != dim {
            return Err(Error::RaggedRows {
                row: i + 2,
                expected: dim,
                got: p.dim(),
            });
        }
        let row: Vec<String> = p.as_slice().iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Splits a dataset into train/test by a seeded shuffle; `test_fraction` of
/// the points (rounded down, at least one of each split when possible) go to
/// the test set.
pub fn train_test_split<T: Real>(
    points: &[AmbientPoint<T>],
    test_fraction: f64,
    seed: u64,
) -> (Vec<AmbientPoint<T>>, Vec<AmbientPoint<T>>) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    let mut rng = rng_stream(seed, u64::MAX);
    // Fisher-Yates.
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut n_test = ((points.len() as f64) * test_fraction).floor() as usize;
    if points.len() >= 2 {
        n_test = n_test.clamp(1, points.len() - 1);
    } else {
        n_test = 0;
    }
    let test: Vec<_> = order[..n_test].iter().map(|&i| points[i].clone()).collect();
    let train: Vec<_> = order[n_test..].iter().map(|&i| points[i].clone()).collect();
    (train, test)
}

/// Decodes a regular latent grid, returning `(latents, points)` — used to
/// export a learned manifold for plotting.
pub fn decode_latent_grid<T: Real>(
    decoder: &dyn crate::nn::Decoder<T>,
    lo: T,
    hi: T,
    per_axis: usize,
) -> Result<(Vec<Vec<T>>, Vec<AmbientPoint<T>>)> {
    if per_axis < 2 {
        return Err(Error::InvalidArgument {
            name: "per_axis",
            reason: "grid needs at least 2 points per axis".into(),
        });
    }
    if !(hi > lo) {
        return Err(Error::InvalidArgument {
            name: "grid_range",
            reason: "hi must exceed lo".into(),
        });
    }
    let d = decoder.latent_dim();
    let total = per_axis.pow(d as u32);
    let step = (hi - lo) / real::<T>((per_axis - 1) as f64);
    let mut latents = Vec::with_capacity(total);
    let mut points = Vec::with_capacity(total);
    for flat in 0..total {
        let mut idx = flat;
        let mut z = Vec::with_capacity(d);
        for _ in 0..d {
            z.push(lo + step * real::<T>((idx % per_axis) as f64));
            idx /= per_axis;
        }
        let p = decoder.decode(&crate::geometry::LatentPoint::new(z.clone())?)?;
        latents.push(z);
        points.push(p);
    }
    Ok((latents, points))
}

/// Builds a matrix whose rows are the given points (design-matrix view).
pub fn to_matrix<T: Real>(points: &[AmbientPoint<T>]) -> Result<Mat<T>> {
    if points.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let rows: Vec<Vec<T>> = points.iter().map(|p| p.as_slice().to_vec()).collect();
    Mat::from_rows(&rows)
}
