//! Closed-form reference surfaces used as verification fixtures.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::manifold::{is_full_rank, AmbientPoint, DifferentiableMap, MetricTensor};

/// Fraction of the radius the sphere chart may reach before it is rejected.
pub const SPHERE_CHART_LIMIT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticSurface {
    /// `(z1, z2) -> (z1, z2, z1^2 - z2^2)`.
    HyperbolicParaboloid,
    /// `z -> W z + b` with `W` of full column rank.
    FlatEmbedding { weights: DMatrix<f64>, offset: DVector<f64> },
    /// Orthographic chart of the upper hemisphere: `z -> (z, sqrt(r^2 - |z|^2))`.
    SphereChart { radius: f64, latent_dim: usize },
}

impl AnalyticSurface {
    pub fn flat(weights: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        check_dim("flat embedding offset", weights.nrows(), offset.len())?;
        if weights.nrows() < weights.ncols() || !is_full_rank(&weights.singular_values()) {
            return Err(Error::InvalidConfig("flat embedding weights must have full column rank".into()));
        }
        Ok(AnalyticSurface::FlatEmbedding { weights, offset })
    }

    /// `R^d` sitting in the first `d` coordinates of `R^D`.
    pub fn padded_identity(latent_dim: usize, ambient_dim: usize) -> Result<Self> {
        let mut w = DMatrix::zeros(ambient_dim, latent_dim);
        for i in 0..latent_dim.min(ambient_dim) {
            w[(i, i)] = 1.0;
        }
        Self::flat(w, DVector::zeros(ambient_dim))
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidConfig(format!("sphere radius must be positive, got {radius}")));
        }
        Ok(AnalyticSurface::SphereChart { radius, latent_dim: 2 })
    }

    fn check_domain(&self, z: &DVector<f64>) -> Result<()> {
        check_dim("analytic surface", self.latent_dim(), z.len())?;
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("surface input"));
        }
        if let AnalyticSurface::SphereChart { radius, .. } = self {
            if z.norm() >= SPHERE_CHART_LIMIT * radius {
                return Err(Error::OutsideDomain(format!(
                    "|z| = {} exceeds {} x radius {}",
                    z.norm(),
                    SPHERE_CHART_LIMIT,
                    radius
                )));
            }
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            AnalyticSurface::HyperbolicParaboloid => 2,
            AnalyticSurface::FlatEmbedding { weights, .. } => weights.ncols(),
            AnalyticSurface::SphereChart { latent_dim, .. } => *latent_dim,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            AnalyticSurface::HyperbolicParaboloid => 3,
            AnalyticSurface::FlatEmbedding { weights, .. } => weights.nrows(),
            AnalyticSurface::SphereChart { latent_dim, .. } => latent_dim + 1,
        }
    }

    /// Exact left inverse `h` with `h(g(z)) = z` on the chart domain.
    pub fn chart_inverse(&self) -> ChartInverse {
        match self {
            AnalyticSurface::FlatEmbedding { weights, offset } => ChartInverse::Affine {
                pseudo_inverse: weights
                    .clone()
                    .pseudo_inverse(0.0)
                    .expect("full-rank weights have a pseudo-inverse"),
                offset: offset.clone(),
            },
            _ => ChartInverse::LeadingCoordinates {
                latent_dim: self.latent_dim(),
                ambient_dim: self.ambient_dim(),
            },
        }
    }

    /// Closed-form `J^T J`.
    pub fn closed_form_metric(&self, z: &DVector<f64>) -> Result<MetricTensor> {
        self.check_domain(z)?;
        let g = match self {
            AnalyticSurface::HyperbolicParaboloid => {
                let (a, b) = (z[0], z[1]);
                DMatrix::from_row_slice(2, 2, &[1.0 + 4.0 * a * a, -4.0 * a * b, -4.0 * a * b, 1.0 + 4.0 * b * b])
            }
            AnalyticSurface::FlatEmbedding { weights, .. } => weights.transpose() * weights,
            AnalyticSurface::SphereChart { radius, .. } => {
                let h2 = radius * radius - z.norm_squared();
                DMatrix::identity(z.len(), z.len()) + (z * z.transpose()) / h2
            }
        };
        MetricTensor::new(g)
    }

    /// Great-circle distance between two chart points of a sphere.
    pub fn great_circle_distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        let AnalyticSurface::SphereChart { radius, .. } = self else {
            return Err(Error::InvalidConfig("great-circle distance needs a sphere chart".into()));
        };
        let (pa, pb) = (self.evaluate(a)?, self.evaluate(b)?);
        // atan2 of |a x b| and a.b stays accurate for nearby points, unlike acos.
        let cross = pa.norm_squared() * pb.norm_squared() - pa.dot(&pb).powi(2);
        Ok(radius * cross.max(0.0).sqrt().atan2(pa.dot(&pb)))
    }
}

impl DifferentiableMap for AnalyticSurface {
    fn input_dim(&self) -> usize {
        self.latent_dim()
    }

    fn output_dim(&self) -> usize {
        self.ambient_dim()
    }

    fn evaluate(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_domain(z)?;
        Ok(match self {
            AnalyticSurface::HyperbolicParaboloid => DVector::from_column_slice(&[z[0], z[1], z[0] * z[0] - z[1] * z[1]]),
            AnalyticSurface::FlatEmbedding { weights, offset } => weights * z + offset,
            AnalyticSurface::SphereChart { radius, .. } => {
                let height = (radius * radius - z.norm_squared()).sqrt();
                z.clone().insert_row(z.len(), height)
            }
        })
    }

    fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_domain(z)?;
        Ok(match self {
            AnalyticSurface::HyperbolicParaboloid => DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0 * z[0], -2.0 * z[1]]),
            AnalyticSurface::FlatEmbedding { weights, .. } => weights.clone(),
            AnalyticSurface::SphereChart { radius, .. } => {
                let d = z.len();
                let height = (radius * radius - z.norm_squared()).sqrt();
                let mut j = DMatrix::identity(d, d).insert_row(d, 0.0);
                for k in 0..d {
                    j[(d, k)] = -z[k] / height;
                }
                j
            }
        })
    }
}

/// Exact chart inverses of the analytic surfaces.
#[derive(Debug, Clone, PartialEq)]
pub enum ChartInverse {
    /// Keeps the first `latent_dim` coordinates.
    LeadingCoordinates { latent_dim: usize, ambient_dim: usize },
    /// `x -> W^+ (x - b)`.
    Affine {
        pseudo_inverse: DMatrix<f64>,
        offset: DVector<f64>,
    },
}

impl DifferentiableMap for ChartInverse {
    fn input_dim(&self) -> usize {
        match self {
            ChartInverse::LeadingCoordinates { ambient_dim, .. } => *ambient_dim,
            ChartInverse::Affine { pseudo_inverse, .. } => pseudo_inverse.ncols(),
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            ChartInverse::LeadingCoordinates { latent_dim, .. } => *latent_dim,
            ChartInverse::Affine { pseudo_inverse, .. } => pseudo_inverse.nrows(),
        }
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("chart inverse", self.input_dim(), x.len())?;
        Ok(match self {
            ChartInverse::LeadingCoordinates { latent_dim, .. } => x.rows(0, *latent_dim).into_owned(),
            ChartInverse::Affine { pseudo_inverse, offset } => pseudo_inverse * (x - offset),
        })
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim("chart inverse", self.input_dim(), x.len())?;
        Ok(match self {
            ChartInverse::LeadingCoordinates { latent_dim, ambient_dim } => DMatrix::identity(*latent_dim, *ambient_dim),
            ChartInverse::Affine { pseudo_inverse, .. } => pseudo_inverse.clone(),
        })
    }
}

/// Ancestral samples `z ~ N(0, I)`, `x = (z1, z2, z1^2 - z2^2)`, with no added noise.
pub fn sample_paraboloid(n: usize, seed: u64) -> Vec<AmbientPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            AmbientPoint::from_slice(&[a, b, a * a - b * b]).expect("finite sample")
        })
        .collect()
}
