//! Statistics on the generated manifold: Fréchet means, pairwise distance
//! matrices, an attribute-grouping R² score and classical MDS.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::geodesic::{geodesic_distance, geodesic_path, GeodesicConfig};
use crate::manifold::{length_of_images, DifferentiableMap};

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const MDS_ZERO_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMode {
    /// Euclidean distance between latent coordinates.
    Linear,
    /// Arc length of the discrete geodesic on the manifold.
    Geodesic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: DMatrix<f64>,
    mode: DistanceMode,
}

impl DistanceMatrix {
    /// Wraps a square, symmetric, non-negative matrix with a zero diagonal.
    pub fn new(values: DMatrix<f64>, mode: DistanceMode) -> Result<Self> {
        check_dim("distance matrix", values.nrows(), values.ncols())?;
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig("distances must be finite and non-negative".into()));
        }
        let scale = values.amax().max(1.0);
        if (&values - values.transpose()).amax() > 1e-9 * scale {
            return Err(Error::InvalidConfig("distance matrix is not symmetric".into()));
        }
        if values.diagonal().iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidConfig("distance matrix diagonal must be zero".into()));
        }
        Ok(Self { values, mode })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mode(&self) -> DistanceMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

/// Latent points paired with group labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<L> {
    pub points: Vec<DVector<f64>>,
    pub labels: Vec<L>,
}

impl<L> LabeledSet<L> {
    pub fn new(points: Vec<DVector<f64>>, labels: Vec<L>) -> Result<Self> {
        check_dim("labeled set", points.len(), labels.len())?;
        Ok(Self { points, labels })
    }
}

/// Pairwise distances between latent points.
///
/// Geodesic entries are computed in both directions and averaged. Pairs run
/// on `jobs` threads; the result does not depend on the thread count.
pub fn distance_matrix<G, H>(
    generator: &G,
    encoder: Option<&H>,
    points: &[DVector<f64>],
    mode: DistanceMode,
    config: &GeodesicConfig,
    jobs: usize,
) -> Result<DistanceMatrix>
where
    G: DifferentiableMap + ?Sized,
    H: DifferentiableMap + ?Sized,
{
    let n = points.len();
    if let Some(first) = points.first() {
        for p in points {
            check_dim("distance matrix point", first.len(), p.len())?;
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let compute = |&(i, j): &(usize, usize)| -> Result<f64> {
        match mode {
            DistanceMode::Linear => Ok((&points[i] - &points[j]).norm()),
            DistanceMode::Geodesic => geodesic_distance(generator, encoder, &points[i], &points[j], config)
                .map_err(|e| Error::PairFailed { i, j, source: Box::new(e) }),
        }
    };
    let directed: Vec<f64> = if jobs > 1 && mode == DistanceMode::Geodesic {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        pool.install(|| pairs.par_iter().map(compute).collect::<Result<Vec<_>>>())?
    } else {
        pairs.iter().map(compute).collect::<Result<Vec<_>>>()?
    };
    let mut raw = DMatrix::zeros(n, n);
    for (&(i, j), d) in pairs.iter().zip(directed) {
        raw[(i, j)] = d;
    }
    let values = (&raw + raw.transpose()) * 0.5;
    DistanceMatrix::new(values, mode)
}

/// Coordinatewise arithmetic mean.
pub fn linear_mean(points: &[DVector<f64>]) -> Result<DVector<f64>> {
    let first = points.first().ok_or_else(|| Error::InvalidConfig("mean of an empty set".into()))?;
    let mut sum = DVector::zeros(first.len());
    for p in points {
        check_dim("linear mean", first.len(), p.len())?;
        sum += p;
    }
    Ok(sum / points.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrechetConfig {
    pub geodesic: GeodesicConfig,
    /// Initial fraction of the mean log-map taken per update.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop once the mean log-map is shorter than this.
    pub tolerance: f64,
}

impl Default for FrechetConfig {
    fn default() -> Self {
        Self {
            geodesic: GeodesicConfig::default(),
            step_size: 0.5,
            max_iters: 100,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrechetResult {
    pub mean: DVector<f64>,
    /// `sum_i d(mu, z_i)^2` at the start and after every accepted update.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct KarcherStep {
    objective: f64,
    direction: DVector<f64>,
}

fn karcher_step<G, H>(
    generator: &G,
    encoder: Option<&H>,
    mu: &DVector<f64>,
    points: &[DVector<f64>],
    config: &GeodesicConfig,
) -> Result<KarcherStep>
where
    G: DifferentiableMap + ?Sized,
    H: DifferentiableMap + ?Sized,
{
    let mut objective = 0.0;
    let mut direction = DVector::zeros(mu.len());
    let j_mu = generator.jacobian(mu)?;
    let j_pinv = j_mu.clone().pseudo_inverse(1e-12).map_err(|_| Error::SingularMetric)?;
    for z in points {
        if z == mu {
            continue;
        }
        let sol = geodesic_path(generator, encoder, mu, z, config)?;
        let images = sol.path.images(generator)?;
        let dist = length_of_images(&images);
        objective += dist * dist;
        // Initial direction of the geodesic, scaled so its image has length
        // d(mu, z): a discrete log map. Pulling the first ambient chord back
        // through the pseudo-inverse, rather than differencing latents, keeps
        // it the exact descent direction of the discrete length.
        let w = &j_pinv * (&images[1] - &images[0]);
        let image_len = (&j_mu * &w).norm();
        if image_len > 0.0 {
            direction += w * (dist / image_len);
        }
    }
    Ok(KarcherStep {
        objective,
        direction: direction / points.len() as f64,
    })
}

/// Minimizes `sum_i d(mu, z_i)^2` by the Karcher iteration
/// `mu <- mu + tau * mean_i Log_mu(z_i)`, starting from the linear mean and
/// halving `tau` whenever the objective would increase.
pub fn frechet_mean<G, H>(generator: &G, encoder: Option<&H>, points: &[DVector<f64>], config: &FrechetConfig) -> Result<FrechetResult>
where
    G: DifferentiableMap + ?Sized,
    H: DifferentiableMap + ?Sized,
{
    let mut mu = linear_mean(points)?;
    check_dim("frechet mean", generator.input_dim(), mu.len())?;
    if points.len() == 1 {
        return Ok(FrechetResult {
            mean: mu,
            objective_history: vec![0.0],
            iterations: 0,
            converged: true,
        });
    }
    let mut current = karcher_step(generator, encoder, &mu, points, &config.geodesic)?;
    let mut history = vec![current.objective];
    let mut tau = config.step_size;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        if current.direction.norm() <= config.tolerance {
            converged = true;
            break;
        }
        let candidate = &mu + &current.direction * tau;
        let next = karcher_step(generator, encoder, &candidate, points, &config.geodesic);
        match next {
            Ok(step) if step.objective <= current.objective => {
                mu = candidate;
                current = step;
                history.push(current.objective);
                iterations += 1;
            }
            _ => {
                tau *= 0.5;
                if tau < 1e-12 {
                    converged = current.direction.norm() <= config.tolerance.sqrt();
                    break;
                }
            }
        }
    }
    Ok(FrechetResult {
        mean: mu,
        objective_history: history,
        iterations,
        converged,
    })
}

/// `1 - sum_{l_i = l_j} d_ij^2 / sum_{i,j} d_ij^2` over ordered pairs.
pub fn r2_score<L: PartialEq>(distances: &DistanceMatrix, labels: &[L]) -> Result<f64> {
    check_dim("r2 labels", distances.len(), labels.len())?;
    let d = distances.values();
    let mut intra = 0.0;
    let mut total = 0.0;
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            let sq = d[(i, j)] * d[(i, j)];
            total += sq;
            if labels[i] == labels[j] {
                intra += sq;
            }
        }
    }
    if total == 0.0 {
        return Err(Error::ZeroDistances);
    }
    Ok(1.0 - intra / total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdsResult {
    /// All eigenvalues of the double-centered Gram matrix, descending.
    pub eigenvalues: DVector<f64>,
    /// `N x k` coordinates from the leading positive eigenpairs.
    pub embedding: DMatrix<f64>,
    /// Set when fewer than the requested number of positive eigenvalues exist.
    pub truncated: bool,
}

impl MdsResult {
    fn zero_cutoff(&self) -> f64 {
        MDS_ZERO_THRESHOLD * self.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn positive_count(&self) -> usize {
        let cut = self.zero_cutoff();
        self.eigenvalues.iter().filter(|&&v| v > cut).count()
    }

    pub fn negative_count(&self) -> usize {
        let cut = self.zero_cutoff();
        self.eigenvalues.iter().filter(|&&v| v < -cut).count()
    }

    pub fn zero_count(&self) -> usize {
        self.eigenvalues.len() - self.positive_count() - self.negative_count()
    }

    /// `sum |lambda_-| / sum |lambda|` over the non-zero eigenvalues.
    pub fn negative_mass_ratio(&self) -> f64 {
        let cut = self.zero_cutoff();
        let total: f64 = self.eigenvalues.iter().filter(|v| v.abs() > cut).map(|v| v.abs()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let negative: f64 = self.eigenvalues.iter().filter(|&&v| v < -cut).map(|v| v.abs()).sum();
        negative / total
    }
}

/// The double-centered Gram matrix `B = -1/2 J (D∘D) J`.
pub fn double_centered_gram(distances: &DistanceMatrix) -> DMatrix<f64> {
    let n = distances.len();
    let sq = distances.values().map(|v| v * v);
    let row_means = DVector::from_iterator(n, sq.row_iter().map(|r| r.sum() / n as f64));
    let grand = row_means.sum() / n as f64;
    DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand))
}

/// Classical MDS into `k` dimensions.
pub fn classical_mds(distances: &DistanceMatrix, k: usize) -> Result<MdsResult> {
    let n = distances.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!("MDS needs at least 2 points, got {n}")));
    }
    let b = double_centered_gram(distances);
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut result = MdsResult {
        eigenvalues,
        embedding: DMatrix::zeros(n, 0),
        truncated: false,
    };
    let usable = result.positive_count().min(k);
    result.truncated = usable < k;
    let mut embedding = DMatrix::zeros(n, usable);
    for (axis, &idx) in order.iter().take(usable).enumerate() {
        let scale = eig.eigenvalues[idx].sqrt();
        embedding.set_column(axis, &(eig.eigenvectors.column(idx) * scale));
    }
    result.embedding = embedding;
    Ok(result)
}
