//! Independent finite-difference oracles and fixtures shared by the
//! integration tests. Nothing here calls the analytic derivatives under test.

#![allow(dead_code)]

use latent_manifold::{Activation, DenseLayer, DifferentiableMap, DiscretePath, MlpModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

/// Central-difference Jacobian of any map.
pub fn fd_jacobian<M: DifferentiableMap + ?Sized>(map: &M, z: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(map.output_dim(), map.input_dim());
    for k in 0..z.len() {
        let mut plus = z.clone();
        let mut minus = z.clone();
        plus[k] += h;
        minus[k] -= h;
        let col = (map.evaluate(&plus).unwrap() - map.evaluate(&minus).unwrap()) / (2.0 * h);
        out.set_column(k, &col);
    }
    out
}

/// `0.5 * T * sum ||g(z_{i+1}) - g(z_i)||^2`, written out independently.
pub fn reference_energy<M: DifferentiableMap + ?Sized>(map: &M, points: &[DVector<f64>]) -> f64 {
    let t = (points.len() - 1) as f64;
    let images: Vec<_> = points.iter().map(|z| map.evaluate(z).unwrap()).collect();
    0.5 * t * images.windows(2).map(|w| (&w[1] - &w[0]).norm_squared()).sum::<f64>()
}

/// Central-difference gradient of the energy with respect to point `index`.
pub fn fd_energy_gradient<M: DifferentiableMap + ?Sized>(map: &M, path: &DiscretePath, index: usize, h: f64) -> DVector<f64> {
    let dim = path.dim();
    DVector::from_fn(dim, |k, _| {
        let mut plus = path.points().to_vec();
        let mut minus = path.points().to_vec();
        plus[index][k] += h;
        minus[index][k] -= h;
        (reference_energy(map, &plus) - reference_energy(map, &minus)) / (2.0 * h)
    })
}

pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

pub fn relative_error_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

/// Random MLP with smooth activations and Gaussian-ish weights.
pub fn random_mlp(rng: &mut ChaCha8Rng, widths: &[usize], activations: &[Activation]) -> MlpModel {
    let layers = widths
        .windows(2)
        .zip(activations)
        .map(|(w, act)| {
            let scale = 1.5 / (w[0] as f64).sqrt();
            let weights = DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-scale..scale));
            let bias = DVector::from_fn(w[1], |_, _| rng.random_range(-0.5..0.5));
            DenseLayer::new(weights, bias, *act).unwrap()
        })
        .collect();
    MlpModel::new(layers).unwrap()
}

/// The ambient chord polyline, resampled at `samples` equally spaced arc-length positions.
pub fn resample_by_arc_length(images: &[DVector<f64>], samples: usize) -> Vec<DVector<f64>> {
    let mut cumulative = vec![0.0];
    for w in images.windows(2) {
        cumulative.push(cumulative.last().unwrap() + (&w[1] - &w[0]).norm());
    }
    let total = *cumulative.last().unwrap();
    (0..=samples)
        .map(|s| {
            let target = total * s as f64 / samples as f64;
            let seg = cumulative.windows(2).position(|c| target <= c[1]).unwrap_or(images.len() - 2);
            let span = cumulative[seg + 1] - cumulative[seg];
            let t = if span > 0.0 { (target - cumulative[seg]) / span } else { 0.0 };
            &images[seg] * (1.0 - t) + &images[seg + 1] * t
        })
        .collect()
}

/// Largest distance from any point of `a` to the polyline `b`.
pub fn max_polyline_deviation(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter()
        .map(|p| {
            b.windows(2)
                .map(|w| {
                    let d = &w[1] - &w[0];
                    let len2 = d.norm_squared();
                    let t = if len2 > 0.0 {
                        ((p - &w[0]).dot(&d) / len2).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    (p - (&w[0] + d * t)).norm()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Encoder whose Jacobian on the surface is the pseudo-inverse of `J_g`:
/// orthogonal projection onto the image, solved by Gauss–Newton from a
/// caller-supplied initial chart guess.
pub struct NearestPointEncoder<'a, G: DifferentiableMap, F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync> {
    pub generator: &'a G,
    pub guess: F,
}

impl<G: DifferentiableMap, F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync> DifferentiableMap for NearestPointEncoder<'_, G, F> {
    fn input_dim(&self) -> usize {
        self.generator.output_dim()
    }

    fn output_dim(&self) -> usize {
        self.generator.input_dim()
    }

    fn evaluate(&self, x: &DVector<f64>) -> latent_manifold::Result<DVector<f64>> {
        let mut z = (self.guess)(x);
        for _ in 0..50 {
            let j = self.generator.jacobian(&z)?;
            let r = self.generator.evaluate(&z)? - x;
            let step = (j.transpose() * &j).lu().solve(&(j.transpose() * r)).unwrap();
            z -= &step;
            if step.norm() < 1e-14 {
                break;
            }
        }
        Ok(z)
    }

    fn jacobian(&self, x: &DVector<f64>) -> latent_manifold::Result<DMatrix<f64>> {
        let z = self.evaluate(x)?;
        let j = self.generator.jacobian(&z)?;
        Ok((j.transpose() * &j).try_inverse().unwrap() * j.transpose())
    }
}
