//! Continuous geodesic machinery: Christoffel symbols of the pullback metric,
//! RK4 integration of the geodesic equation, a shooting solver for the
//! two-point problem, and parallel transport along an ODE geodesic.
//!
//! Everything here needs metric derivatives and inverses, which the discrete
//! solvers avoid. It exists as an independent reference to check them against.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::manifold::{pullback_metric, DifferentiableMap, DiscretePath};

/// Central-difference step used on the metric.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Connection coefficients `Gamma^i_{jk}`, symmetric in `j, k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelSymbols {
    dim: usize,
    values: Vec<f64>,
}

impl ChristoffelSymbols {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(i * self.dim + j) * self.dim + k]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `a^i = Gamma^i_{jk} u^j w^k`.
    pub fn contract(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        DVector::from_fn(d, |i, _| {
            let mut s = 0.0;
            for j in 0..d {
                for k in 0..d {
                    s += self.get(i, j, k) * u[j] * w[k];
                }
            }
            s
        })
    }
}

/// Christoffel symbols of `G = J^T J` at `z`, from central differences of `G`
/// with step `fd_step` and an explicit inverse.
pub fn christoffel<G: DifferentiableMap + ?Sized>(generator: &G, z: &DVector<f64>, fd_step: f64) -> Result<ChristoffelSymbols> {
    check_dim("christoffel", generator.input_dim(), z.len())?;
    if !(fd_step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "finite difference step must be positive, got {fd_step}"
        )));
    }
    let d = z.len();
    let metric = pullback_metric(generator, z)?;
    let inverse = metric.matrix().clone().try_inverse().ok_or(Error::SingularMetric)?;
    if inverse.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMetric);
    }
    // dg[k][(l, j)] = dG_lj / dz^k
    let dg: Vec<DMatrix<f64>> = (0..d)
        .map(|k| {
            let mut plus = z.clone();
            let mut minus = z.clone();
            plus[k] += fd_step;
            minus[k] -= fd_step;
            let gp = pullback_metric(generator, &plus)?;
            let gm = pullback_metric(generator, &minus)?;
            Ok((gp.matrix() - gm.matrix()) / (2.0 * fd_step))
        })
        .collect::<Result<_>>()?;

    let mut values = vec![0.0; d * d * d];
    for i in 0..d {
        for j in 0..d {
            for k in j..d {
                let mut s = 0.0;
                for l in 0..d {
                    s += inverse[(i, l)] * (dg[k][(l, j)] + dg[j][(l, k)] - dg[l][(j, k)]);
                }
                values[(i * d + j) * d + k] = 0.5 * s;
                values[(i * d + k) * d + j] = 0.5 * s;
            }
        }
    }
    Ok(ChristoffelSymbols { dim: d, values })
}

fn geodesic_rhs<G: DifferentiableMap + ?Sized>(generator: &G, z: &DVector<f64>, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let gamma = christoffel(generator, z, DEFAULT_FD_STEP)?;
    Ok((v.clone(), -gamma.contract(v, v)))
}

/// RK4 integration of `z'' = -Gamma(z)(z', z')` from `(z0, v0)`.
///
/// Returns `steps + 1` samples at times `i * step_size`.
pub fn integrate_geodesic_ode<G: DifferentiableMap + ?Sized>(
    generator: &G,
    z0: &DVector<f64>,
    v0: &DVector<f64>,
    steps: usize,
    step_size: f64,
) -> Result<DiscretePath> {
    check_dim("geodesic ode start", generator.input_dim(), z0.len())?;
    check_dim("geodesic ode velocity", z0.len(), v0.len())?;
    if steps == 0 || !(step_size > 0.0) {
        return Err(Error::InvalidConfig(
            "ode integration needs steps > 0 and a positive step size".into(),
        ));
    }
    let mut z = z0.clone();
    let mut v = v0.clone();
    let mut points = Vec::with_capacity(steps + 1);
    points.push(z.clone());
    let h = step_size;
    for _ in 0..steps {
        let (k1z, k1v) = geodesic_rhs(generator, &z, &v)?;
        let (k2z, k2v) = geodesic_rhs(generator, &(&z + &k1z * (h / 2.0)), &(&v + &k1v * (h / 2.0)))?;
        let (k3z, k3v) = geodesic_rhs(generator, &(&z + &k2z * (h / 2.0)), &(&v + &k2v * (h / 2.0)))?;
        let (k4z, k4v) = geodesic_rhs(generator, &(&z + &k3z * h), &(&v + &k3v * h))?;
        z += (k1z + k2z * 2.0 + k3z * 2.0 + k4z) * (h / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
        if z.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("geodesic ode state"));
        }
        points.push(z.clone());
    }
    DiscretePath::new(points)
}

fn endpoint<G: DifferentiableMap + ?Sized>(generator: &G, z0: &DVector<f64>, v0: &DVector<f64>, steps: usize) -> Result<DVector<f64>> {
    let path = integrate_geodesic_ode(generator, z0, v0, steps, 1.0 / steps as f64)?;
    Ok(path.end().clone())
}

/// Solution of the two-point geodesic problem on `t in [0, 1]`.
#[derive(Debug, Clone)]
pub struct BoundarySolution {
    pub initial_velocity: DVector<f64>,
    pub path: DiscretePath,
    pub residual: f64,
    pub iterations: usize,
}

/// Finds `v0` with `exp_{z0}(v0) = z_end` by damped Gauss–Newton on the
/// endpoint residual, starting from `v0 = z_end - z0`.
pub fn solve_geodesic_bvp<G: DifferentiableMap + ?Sized>(
    generator: &G,
    z0: &DVector<f64>,
    z_end: &DVector<f64>,
    steps: usize,
) -> Result<BoundarySolution> {
    check_dim("geodesic bvp end", z0.len(), z_end.len())?;
    const MAX_NEWTON: usize = 60;
    const TARGET: f64 = 1e-11;
    const FD_VELOCITY: f64 = 1e-6;
    let d = z0.len();
    let mut v = z_end - z0;
    let mut iterations = 0;
    let mut end = endpoint(generator, z0, &v, steps)?;
    let mut residual = (&end - z_end).norm();
    while residual > TARGET * (1.0 + z_end.norm()) && iterations < MAX_NEWTON {
        iterations += 1;
        let mut jac = DMatrix::zeros(d, d);
        for k in 0..d {
            let mut vp = v.clone();
            vp[k] += FD_VELOCITY;
            let ep = endpoint(generator, z0, &vp, steps)?;
            jac.set_column(k, &((ep - &end) / FD_VELOCITY));
        }
        let delta = jac.lu().solve(&(z_end - &end)).ok_or(Error::SingularMetric)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-6 {
            let candidate = &v + &delta * lambda;
            if let Ok(e) = endpoint(generator, z0, &candidate, steps) {
                let r = (&e - z_end).norm();
                if r < residual {
                    v = candidate;
                    end = e;
                    residual = r;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let path = integrate_geodesic_ode(generator, z0, &v, steps, 1.0 / steps as f64)?;
    Ok(BoundarySolution {
        initial_velocity: v,
        path,
        residual,
        iterations,
    })
}

/// Transports the latent vector `w0` along the ODE geodesic starting at
/// `(z0, v0)` for unit time, solving `w' = -Gamma(z)(z', w)` alongside it.
/// Returns the geodesic endpoint and the transported vector.
pub fn parallel_transport_ode<G: DifferentiableMap + ?Sized>(
    generator: &G,
    z0: &DVector<f64>,
    v0: &DVector<f64>,
    w0: &DVector<f64>,
    steps: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim("transport ode start", generator.input_dim(), z0.len())?;
    check_dim("transport ode velocity", z0.len(), v0.len())?;
    check_dim("transport ode vector", z0.len(), w0.len())?;
    if steps == 0 {
        return Err(Error::InvalidConfig("ode integration needs steps > 0".into()));
    }
    let rhs = |z: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>| -> Result<[DVector<f64>; 3]> {
        let gamma = christoffel(generator, z, DEFAULT_FD_STEP)?;
        Ok([v.clone(), -gamma.contract(v, v), -gamma.contract(v, w)])
    };
    let h = 1.0 / steps as f64;
    let (mut z, mut v, mut w) = (z0.clone(), v0.clone(), w0.clone());
    for _ in 0..steps {
        let k1 = rhs(&z, &v, &w)?;
        let k2 = rhs(&(&z + &k1[0] * (h / 2.0)), &(&v + &k1[1] * (h / 2.0)), &(&w + &k1[2] * (h / 2.0)))?;
        let k3 = rhs(&(&z + &k2[0] * (h / 2.0)), &(&v + &k2[1] * (h / 2.0)), &(&w + &k2[2] * (h / 2.0)))?;
        let k4 = rhs(&(&z + &k3[0] * h), &(&v + &k3[1] * h), &(&w + &k3[2] * h))?;
        z += (&k1[0] + &k2[0] * 2.0 + &k3[0] * 2.0 + &k4[0]) * (h / 6.0);
        v += (&k1[1] + &k2[1] * 2.0 + &k3[1] * 2.0 + &k4[1]) * (h / 6.0);
        w += (&k1[2] + &k2[2] * 2.0 + &k3[2] * 2.0 + &k4[2]) * (h / 6.0);
    }
    if z.iter().chain(w.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("transport ode state"));
    }
    Ok((z, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfaces::AnalyticSurface;
    use nalgebra::dvector;

    #[test]
    fn paraboloid_symbols_at_origin_vanish() {
        let g = christoffel(&AnalyticSurface::HyperbolicParaboloid, &dvector![0.0, 0.0], DEFAULT_FD_STEP).unwrap();
        assert!(g.max_abs() < 1e-8);
    }

    #[test]
    fn paraboloid_gamma_111_at_unit_point() {
        // G11 = 1 + 4 z1^2, so dG11/dz1 = 8 at z = (1, 0) and G^11 = 1/5.
        let g = christoffel(&AnalyticSurface::HyperbolicParaboloid, &dvector![1.0, 0.0], DEFAULT_FD_STEP).unwrap();
        assert!((g.get(0, 0, 0) - 0.8).abs() < 1e-7);
    }

    #[test]
    fn singular_metric_is_reported() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let flat = AnalyticSurface::flat(w, DVector::zeros(2)).unwrap();
        let g = christoffel(&flat, &dvector![0.3, 0.1], DEFAULT_FD_STEP).unwrap();
        assert!(g.max_abs() < 1e-8);

        struct Collapse;
        impl DifferentiableMap for Collapse {
            fn input_dim(&self) -> usize {
                2
            }
            fn output_dim(&self) -> usize {
                2
            }
            fn evaluate(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(dvector![z[0] + z[1], z[0] + z[1]])
            }
            fn jacobian(&self, _z: &DVector<f64>) -> Result<DMatrix<f64>> {
                Ok(DMatrix::from_element(2, 2, 1.0))
            }
        }
        assert!(matches!(
            christoffel(&Collapse, &dvector![0.0, 0.0], DEFAULT_FD_STEP),
            Err(Error::SingularMetric)
        ));
    }

    #[test]
    fn zero_velocity_stays_put() {
        let z0 = dvector![0.4, -0.2];
        let path = integrate_geodesic_ode(&AnalyticSurface::HyperbolicParaboloid, &z0, &dvector![0.0, 0.0], 16, 0.1).unwrap();
        assert!(path.points().iter().all(|p| p == &z0));
    }
}
