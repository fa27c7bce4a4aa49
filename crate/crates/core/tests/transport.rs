mod common;

use common::*;
use latent_manifold::ode::{integrate_geodesic_ode, parallel_transport_ode};
use latent_manifold::*;
use nalgebra::{dvector, DVector};

fn half_circle(steps: usize) -> DiscretePath {
    let pts = (0..=steps)
        .map(|i| {
            let s = std::f64::consts::PI * i as f64 / steps as f64;
            dvector![s.cos(), s.sin()]
        })
        .collect();
    DiscretePath::new(pts).unwrap()
}

#[test]
fn every_step_keeps_norm_and_stays_tangent() {
    let p = AnalyticSurface::HyperbolicParaboloid;
    let mut r = rng(21);
    for steps in [3, 16, 50] {
        let pts: Vec<_> = (0..=steps).map(|_| random_vector(&mut r, 2, 2.0)).collect();
        let path = DiscretePath::new(pts).unwrap();
        let u0 = p.jacobian(path.start()).unwrap() * dvector![0.4, -1.1];
        let us = translate_ambient(&p, &path, &u0).unwrap();
        for (z, u) in path.points().iter().zip(&us) {
            assert!((u.norm() - u0.norm()).abs() < 1e-10);
            let frame = tangent_frame(&p, z).unwrap();
            let normal_part = u - frame.project(u).unwrap();
            assert!(normal_part.norm() < 1e-10);
        }
    }
}

#[test]
fn inner_product_error_halves_when_steps_double() {
    let p = AnalyticSurface::HyperbolicParaboloid;
    let errors: Vec<f64> = [16, 32, 64, 128, 256]
        .iter()
        .map(|&t| {
            let path = half_circle(t);
            let j0 = p.jacobian(path.start()).unwrap();
            let u = translate_ambient(&p, &path, &(&j0 * dvector![1.0, 0.3])).unwrap();
            let w = translate_ambient(&p, &path, &(&j0 * dvector![-0.2, 1.0])).unwrap();
            (u.last().unwrap().dot(w.last().unwrap()) - u[0].dot(&w[0])).abs()
        })
        .collect();
    for pair in errors.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!((1.4..=2.6).contains(&ratio), "errors {errors:?}");
    }
}

#[test]
fn translation_converges_to_transport_ode() {
    // Walk an exact geodesic sampled from the ODE, then compare the
    // translated latent vector with the transport equation solution.
    let p = AnalyticSurface::HyperbolicParaboloid;
    let h = p.chart_inverse();
    let z0 = dvector![-1.0, -0.5];
    let v0 = dvector![1.5, 1.2];
    let w0 = dvector![0.3, -1.0];
    let (_, w_end) = parallel_transport_ode(&p, &z0, &v0, &w0, 2048).unwrap();
    let mut previous = f64::INFINITY;
    for steps in [16, 32, 64, 128] {
        let path = integrate_geodesic_ode(&p, &z0, &v0, steps, 1.0 / steps as f64).unwrap();
        let with_h = parallel_translate(&p, Some(&h), &path, &w0).unwrap();
        let without = parallel_translate(&p, None::<&ChartInverse>, &path, &w0).unwrap();
        let err = (&with_h.latent - &w_end).norm() / w_end.norm();
        assert!((&with_h.latent - &without.latent).amax() < 1e-10);
        assert!(err < previous * 0.6, "steps {steps}: {err} after {previous}");
        previous = err;
    }
    assert!(previous < 0.02);
}

#[test]
fn shooting_converges_to_geodesic_ode() {
    let p = AnalyticSurface::HyperbolicParaboloid;
    let h = p.chart_inverse();
    let z0 = dvector![-1.0, -0.5];
    let v0 = dvector![1.5, 1.2];
    let exact = integrate_geodesic_ode(&p, &z0, &v0, 2048, 1.0 / 2048.0).unwrap();
    let length = discrete_arc_length(&p, &exact).unwrap();
    let target = p.evaluate(exact.end()).unwrap();
    let u0 = p.jacobian(&z0).unwrap() * &v0;
    let mut previous = f64::INFINITY;
    for steps in [16, 32, 64, 128] {
        let shot = geodesic_shoot(&p, &h, &z0, &u0, &ShootOptions::new(steps)).unwrap();
        let err = (p.evaluate(shot.path.end()).unwrap() - &target).norm() / length;
        assert!(err < previous * 0.65, "steps {steps}: {err} after {previous}");
        previous = err;
        // Chart encoder: the ambient step lands back on the surface only
        // up to the normal component, which shrinks with dt^2.
        assert!(shot.max_round_trip < 10.0 / (steps * steps) as f64);
    }
    assert!(previous < 0.02);
}

#[test]
fn shooting_keeps_speed() {
    let p = AnalyticSurface::HyperbolicParaboloid;
    let h = p.chart_inverse();
    let u0 = DVector::from_vec(vec![1.0, 0.5, 3.0]);
    let shot = geodesic_shoot(&p, &h, &dvector![0.2, 0.1], &u0, &ShootOptions::new(20)).unwrap();
    let speed = shot.velocities[0].norm();
    assert!((speed - u0.norm()).abs() < 1e-12);
    assert!(shot.velocities.iter().all(|u| (u.norm() - speed).abs() < 1e-10));
}
