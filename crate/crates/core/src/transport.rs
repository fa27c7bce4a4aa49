//! Parallel translation along discrete paths, geodesic shooting, and
//! analogies built from the two.
//!
//! Both schemes carry an ambient tangent vector from one path point to the
//! next by projecting it onto the new tangent space `U U^T` (from the SVD of
//! the Jacobian) and rescaling it to its previous length.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::geodesic::{geodesic_path, GeodesicConfig};
use crate::manifold::{length_of_images, tangent_frame, DifferentiableMap, DiscretePath, TangentFrame};

/// Projected vectors shorter than this fraction of the input are degenerate.
pub const DEGENERACY_RATIO: f64 = 1e-12;

/// Forward-difference velocity `(g(z_1) - g(z_0)) / dt` at the path start.
pub fn initial_velocity<G: DifferentiableMap + ?Sized>(generator: &G, path: &DiscretePath) -> Result<DVector<f64>> {
    check_dim("initial velocity", generator.input_dim(), path.dim())?;
    let x0 = generator.evaluate(&path.points()[0])?;
    let x1 = generator.evaluate(&path.points()[1])?;
    Ok((x1 - x0) * path.steps() as f64)
}

/// Projects `u` onto the frame and restores its length.
fn transfer(frame: &TangentFrame, u: &DVector<f64>, step: usize) -> Result<DVector<f64>> {
    let norm = u.norm();
    if norm == 0.0 {
        return Ok(DVector::zeros(u.len()));
    }
    let p = frame.project(u)?;
    let pn = p.norm();
    if !(pn >= DEGENERACY_RATIO * norm) {
        return Err(Error::DegenerateProjection { step });
    }
    Ok(p * (norm / pn))
}

/// Result of translating a vector along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    /// Latent representation `v_T` at the path end.
    pub latent: DVector<f64>,
    /// Ambient vector `u_T` at `g(z_T)`.
    pub ambient: DVector<f64>,
    /// `u_0 ... u_T`.
    pub ambient_steps: Vec<DVector<f64>>,
}

/// Translates an ambient tangent vector at `g(z_0)` along `path`, returning `u_0 ... u_T`.
pub fn translate_ambient<G: DifferentiableMap + ?Sized>(
    generator: &G,
    path: &DiscretePath,
    u0: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    check_dim("parallel translation", generator.input_dim(), path.dim())?;
    check_dim("translated vector", generator.output_dim(), u0.len())?;
    let mut steps = Vec::with_capacity(path.points().len());
    steps.push(u0.clone());
    for (i, z) in path.points().iter().enumerate().skip(1) {
        let frame = tangent_frame(generator, z)?;
        let next = transfer(&frame, &steps[i - 1], i)?;
        steps.push(next);
    }
    Ok(steps)
}

/// Parallel translation of the latent vector `v0` at `z_0` to `z_T`.
///
/// The ambient result is mapped back to latent coordinates with the encoder
/// Jacobian `J_h(g(z_T))` when an encoder is given, and with the
/// pseudo-inverse of `J_g(z_T)` otherwise.
pub fn parallel_translate<G, H>(generator: &G, encoder: Option<&H>, path: &DiscretePath, v0: &DVector<f64>) -> Result<Translation>
where
    G: DifferentiableMap + ?Sized,
    H: DifferentiableMap + ?Sized,
{
    check_dim("translated vector", generator.input_dim(), v0.len())?;
    let u0 = generator.jacobian(path.start())? * v0;
    let ambient_steps = translate_ambient(generator, path, &u0)?;
    let ambient = ambient_steps.last().expect("path has points").clone();
    let latent = match encoder {
        Some(h) => {
            let x_end = generator.evaluate(path.end())?;
            h.jacobian(&x_end)? * &ambient
        }
        None => tangent_frame(generator, path.end())?.pull_back(&ambient)?,
    };
    Ok(Translation {
        latent,
        ambient,
        ambient_steps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootOptions {
    /// Number of steps `T`; the segment covers unit time with `dt = 1/T`.
    pub steps: usize,
    /// Largest tolerated `||g(h(x)) - x||` after an ambient step.
    pub max_round_trip: Option<f64>,
}

impl ShootOptions {
    pub fn new(steps: usize) -> Self {
        Self {
            steps,
            max_round_trip: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootResult {
    pub path: DiscretePath,
    /// Ambient velocities `u_0 ... u_T`.
    pub velocities: Vec<DVector<f64>>,
    /// Largest encoder round-trip residual seen.
    pub max_round_trip: f64,
}

/// Shoots a discrete geodesic from `z0` with ambient initial velocity `u0`.
///
/// `u0` is projected onto the tangent space at `g(z0)` and rescaled to its
/// own length before the first step.
pub fn geodesic_shoot<G, H>(generator: &G, encoder: &H, z0: &DVector<f64>, u0: &DVector<f64>, options: &ShootOptions) -> Result<ShootResult>
where
    G: DifferentiableMap + ?Sized,
    H: DifferentiableMap + ?Sized,
{
    check_dim("shoot start", generator.input_dim(), z0.len())?;
    check_dim("shoot velocity", generator.output_dim(), u0.len())?;
    check_dim("encoder input", generator.output_dim(), encoder.input_dim())?;
    check_dim("encoder output", generator.input_dim(), encoder.output_dim())?;
    if options.steps == 0 {
        return Err(Error::InvalidConfig("shooting needs at least one step".into()));
    }
    let dt = 1.0 / options.steps as f64;
    let mut u = transfer(&tangent_frame(generator, z0)?, u0, 0)?;
    let mut x = generator.evaluate(z0)?;
    let mut points = vec![z0.clone()];
    let mut velocities = vec![u.clone()];
    let mut worst = 0.0f64;
    for i in 0..options.steps {
        let stepped = &x + &u * dt;
        let z = encoder.evaluate(&stepped)?;
        x = generator.evaluate(&z)?;
        let residual = (&x - &stepped).norm();
        worst = worst.max(residual);
        if let Some(budget) = options.max_round_trip {
            if residual > budget {
                return Err(Error::EncoderDivergence {
                    step: i + 1,
                    residual,
                    budget,
                });
            }
        }
        u = transfer(&tangent_frame(generator, &z)?, &u, i + 1)?;
        points.push(z);
        velocities.push(u.clone());
    }
    Ok(ShootResult {
        path: DiscretePath::new(points)?,
        velocities,
        max_round_trip: worst,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogyResult {
    pub answer: DVector<f64>,
    pub geodesic_ab: DiscretePath,
    pub geodesic_ac: DiscretePath,
    /// Velocity at `g(c)` used for the final shot.
    pub translated_velocity: DVector<f64>,
    pub shoot_path: DiscretePath,
    pub ab_length: f64,
    pub shoot_length: f64,
    /// Whether both geodesic solves met their tolerance.
    pub converged: bool,
}

/// Solves `a : b :: c : ?` on the manifold: take the initial velocity of the
/// geodesic `a -> b`, translate it along the geodesic `a -> c`, and shoot from
/// `c` with that velocity scaled to the `a -> b` arc length for `T` steps.
pub fn geodesic_analogy<G, H>(
    generator: &G,
    encoder: &H,
    a: &DVector<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    config: &GeodesicConfig,
) -> Result<AnalogyResult>
where
    G: DifferentiableMap + ?Sized,
    H: DifferentiableMap + ?Sized,
{
    let ab = geodesic_path(generator, Some(encoder), a, b, config)?;
    let ac = geodesic_path(generator, Some(encoder), a, c, config)?;
    let ab_length = length_of_images(&ab.path.images(generator)?);
    let u0 = initial_velocity(generator, &ab.path)?;
    let translated = translate_ambient(generator, &ac.path, &u0)?;
    let mut velocity = translated.last().expect("path has points").clone();
    let vn = velocity.norm();
    if vn > 0.0 {
        velocity *= ab_length / vn;
    }
    let shot = geodesic_shoot(generator, encoder, c, &velocity, &ShootOptions::new(config.steps))?;
    let shoot_length = length_of_images(&shot.path.images(generator)?);
    Ok(AnalogyResult {
        answer: shot.path.end().clone(),
        geodesic_ab: ab.path,
        geodesic_ac: ac.path,
        translated_velocity: velocity,
        shoot_path: shot.path,
        ab_length,
        shoot_length,
        converged: ab.diagnostics.converged && ac.diagnostics.converged,
    })
}

/// Latent vector arithmetic `b - a + c`.
pub fn linear_analogy(a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("linear analogy", a.len(), b.len())?;
    check_dim("linear analogy", a.len(), c.len())?;
    Ok(b - a + c)
}
