//! Discrete geodesic interpolation by gradient descent on the curve energy.
//!
//! The interior points `z_1 ... z_{T-1}` of a latent path are updated in
//! place, one after the other, along either the exact energy gradient
//!
//! ```text
//! grad_i = -(1/dt) J_g(z_i)^T (g(z_{i+1}) - 2 g(z_i) + g(z_{i-1}))
//! ```
//!
//! or the encoder variant that swaps `J_g^T` for `J_h(g(z_i))`. Neither needs
//! second derivatives of the generator.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::manifold::{energy_of_images, length_of_images, DifferentiableMap, DiscretePath};

/// Consecutive step halvings allowed before the solver gives up.
pub const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// `J_g^T` applied to the second difference.
    Exact,
    /// `J_h` of the encoder applied to the second difference.
    Encoder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicConfig {
    /// Number of path segments `T`.
    pub steps: usize,
    /// Initial descent step size.
    pub step_size: f64,
    /// Threshold on the summed squared gradient norm; `None` means `1e-6 * T`.
    pub tolerance: Option<f64>,
    pub max_iters: usize,
    pub gradient_mode: GradientMode,
    /// Halve the step whenever a sweep would raise the energy.
    pub backtracking: bool,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            step_size: 0.05,
            tolerance: None,
            max_iters: 5000,
            gradient_mode: GradientMode::Exact,
            backtracking: true,
        }
    }
}

impl GeodesicConfig {
    pub fn with_steps(steps: usize) -> Self {
        Self { steps, ..Self::default() }
    }

    pub fn effective_tolerance(&self) -> f64 {
        self.tolerance.unwrap_or(1e-6 * self.steps as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::InvalidConfig(format!("geodesic needs at least 2 steps, got {}", self.steps)));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidConfig(format!("step size must be positive, got {}", self.step_size)));
        }
        let eps = self.effective_tolerance();
        if !(eps > 0.0) {
            return Err(Error::InvalidConfig(format!("tolerance must be positive, got {eps}")));
        }
        Ok(())
    }
}

/// Solver trace of one geodesic computation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicDiagnostics {
    /// Accepted sweeps.
    pub iterations: usize,
    /// `sum_i ||grad_i||^2` at the returned path.
    pub gradient_norm_sq: f64,
    /// Energy of the initial path followed by the energy after each accepted sweep.
    pub energy_history: Vec<f64>,
    pub final_step_size: f64,
    /// False when the iteration cap or the halving limit was hit first.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSolution {
    pub path: DiscretePath,
    pub diagnostics: GeodesicDiagnostics,
}

impl GeodesicSolution {
    pub fn energy(&self) -> f64 {
        *self.diagnostics.energy_history.last().expect("history is never empty")
    }
}

fn check_interior(path: &DiscretePath, index: usize) -> Result<()> {
    if index == 0 || index >= path.steps() {
        return Err(Error::BoundaryIndex {
            index,
            steps: path.steps(),
        });
    }
    Ok(())
}

fn second_difference(images: &[DVector<f64>], i: usize) -> DVector<f64> {
    &images[i + 1] - &images[i] * 2.0 + &images[i - 1]
}

/// Exact gradient of the discrete energy with respect to interior point `i`.
pub fn energy_gradient<G: DifferentiableMap + ?Sized>(generator: &G, path: &DiscretePath, index: usize) -> Result<DVector<f64>> {
    check_interior(path, index)?;
    check_dim("energy gradient", generator.input_dim(), path.dim())?;
    let pts = path.points();
    let images = [
        generator.evaluate(&pts[index - 1])?,
        generator.evaluate(&pts[index])?,
        generator.evaluate(&pts[index + 1])?,
    ];
    let j = generator.jacobian(&pts[index])?;
    Ok(j.transpose() * second_difference(&images, 1) * (-(path.steps() as f64)))
}

/// Encoder-based descent direction for interior point `i`.
pub fn modified_gradient<G, H>(generator: &G, encoder: &H, path: &DiscretePath, index: usize) -> Result<DVector<f64>>
where
    G: DifferentiableMap + ?Sized,
    H: DifferentiableMap + ?Sized,
{
    check_interior(path, index)?;
    check_dim("modified gradient", generator.input_dim(), path.dim())?;
    check_dim("encoder input", generator.output_dim(), encoder.input_dim())?;
    let pts = path.points();
    let images = [
        generator.evaluate(&pts[index - 1])?,
        generator.evaluate(&pts[index])?,
        generator.evaluate(&pts[index + 1])?,
    ];
    let jh = encoder.jacobian(&images[1])?;
    Ok(jh * second_difference(&images, 1) * (-(path.steps() as f64)))
}

struct Descent<'a, G: ?Sized, H: ?Sized> {
    generator: &'a G,
    encoder: Option<&'a H>,
    mode: GradientMode,
    scale: f64,
}

impl<G, H> Descent<'_, G, H>
where
    G: DifferentiableMap + ?Sized,
    H: DifferentiableMap + ?Sized,
{
    fn direction(&self, z: &DVector<f64>, images: &[DVector<f64>], i: usize) -> Result<DVector<f64>> {
        let dd = second_difference(images, i);
        let lin = match (self.mode, self.encoder) {
            (GradientMode::Exact, _) => self.generator.jacobian(z)?.transpose() * dd,
            (GradientMode::Encoder, Some(h)) => h.jacobian(&images[i])? * dd,
            (GradientMode::Encoder, None) => return Err(Error::EncoderRequired),
        };
        Ok(lin * -self.scale)
    }

    fn gradient_norm_sq(&self, path: &DiscretePath, images: &[DVector<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for i in 1..path.steps() {
            total += self.direction(&path.points()[i], images, i)?.norm_squared();
        }
        Ok(total)
    }
}

/// Computes a discrete geodesic between `start` and `end`.
///
/// The path is initialized by linear interpolation. Each sweep visits
/// `z_1 ... z_{T-1}` in order and moves each point against its descent
/// direction, using the already-updated neighbour on the left. When
/// backtracking is on, a sweep that raises the energy is discarded and the
/// step size halved. Hitting `max_iters` or the halving limit returns the
/// best path with `converged == false` rather than an error.
pub fn geodesic_path<G, H>(
    generator: &G,
    encoder: Option<&H>,
    start: &DVector<f64>,
    end: &DVector<f64>,
    config: &GeodesicConfig,
) -> Result<GeodesicSolution>
where
    G: DifferentiableMap + ?Sized,
    H: DifferentiableMap + ?Sized,
{
    config.validate()?;
    check_dim("geodesic start", generator.input_dim(), start.len())?;
    check_dim("geodesic end", generator.input_dim(), end.len())?;
    if config.gradient_mode == GradientMode::Encoder {
        let h = encoder.ok_or(Error::EncoderRequired)?;
        check_dim("encoder input", generator.output_dim(), h.input_dim())?;
        check_dim("encoder output", generator.input_dim(), h.output_dim())?;
    }

    let steps = config.steps;
    let mut path = DiscretePath::linear(start, end, steps)?;
    let mut images = path.images(generator)?;
    let mut energy = energy_of_images(&images);
    if !energy.is_finite() {
        return Err(Error::NonFinite("initial path energy"));
    }
    let descent = Descent {
        generator,
        encoder,
        mode: config.gradient_mode,
        scale: steps as f64,
    };
    let eps = config.effective_tolerance();
    let mut alpha = config.step_size;
    let mut history = vec![energy];
    let mut iterations = 0;
    let mut halvings = 0;

    if start == end {
        return Ok(GeodesicSolution {
            path,
            diagnostics: GeodesicDiagnostics {
                iterations: 0,
                gradient_norm_sq: 0.0,
                energy_history: history,
                final_step_size: alpha,
                converged: true,
            },
        });
    }

    let mut grad_sq = descent.gradient_norm_sq(&path, &images)?;
    let converged = loop {
        if grad_sq <= eps {
            break true;
        }
        if iterations >= config.max_iters {
            break false;
        }

        let mut trial = path.clone();
        let mut trial_images = images.clone();
        let mut swept = true;
        for i in 1..steps {
            let dir = match descent.direction(&trial.points()[i], &trial_images, i) {
                Ok(d) => d,
                Err(_) if config.backtracking => {
                    swept = false;
                    break;
                }
                Err(e) => return Err(e),
            };
            let zi = &mut trial.points_mut()[i];
            *zi -= dir * alpha;
            match generator.evaluate(zi) {
                Ok(x) => trial_images[i] = x,
                Err(_) if config.backtracking => {
                    swept = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let trial_energy = if swept { energy_of_images(&trial_images) } else { f64::NAN };

        if config.backtracking && !(trial_energy <= energy) {
            halvings += 1;
            if halvings > MAX_HALVINGS {
                break false;
            }
            alpha *= 0.5;
            continue;
        }
        if !trial_energy.is_finite() {
            return Err(Error::NonFinite("path energy (reduce the step size or enable backtracking)"));
        }

        halvings = 0;
        path = trial;
        images = trial_images;
        energy = trial_energy;
        history.push(energy);
        iterations += 1;
        grad_sq = descent.gradient_norm_sq(&path, &images)?;
    };

    Ok(GeodesicSolution {
        path,
        diagnostics: GeodesicDiagnostics {
            iterations,
            gradient_norm_sq: grad_sq,
            energy_history: history,
            final_step_size: alpha,
            converged,
        },
    })
}

/// Arc length of the discrete geodesic between two latent points.
pub fn geodesic_distance<G, H>(
    generator: &G,
    encoder: Option<&H>,
    start: &DVector<f64>,
    end: &DVector<f64>,
    config: &GeodesicConfig,
) -> Result<f64>
where
    G: DifferentiableMap + ?Sized,
    H: DifferentiableMap + ?Sized,
{
    if start == end {
        check_dim("geodesic start", generator.input_dim(), start.len())?;
        return Ok(0.0);
    }
    let solution = geodesic_path(generator, encoder, start, end, config)?;
    Ok(length_of_images(&solution.path.images(generator)?))
}
