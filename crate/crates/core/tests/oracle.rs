//! The discrete algorithms against continuous references computed from
//! Christoffel symbols and RK4.

mod common;

use common::NearestPointEncoder;
use latent_manifold::ode::{christoffel, solve_geodesic_bvp, DEFAULT_FD_STEP};
use latent_manifold::*;
use nalgebra::{dmatrix, dvector, DVector};
use rand::Rng;

#[test]
fn paraboloid_christoffel_symbols_match_closed_form() {
    // G = I + grad(c) grad(c)^T with c = a^2 - b^2, so
    // Gamma^i_jk = grad(c)_i H_jk / (1 + |grad c|^2), H = diag(2, -2).
    let p = AnalyticSurface::HyperbolicParaboloid;
    for z in [dvector![0.3, -0.7], dvector![1.2, 0.4], dvector![-2.0, -1.5]] {
        let grad = dvector![2.0 * z[0], -2.0 * z[1]];
        let hess = dmatrix![2.0, 0.0; 0.0, -2.0];
        let denom = 1.0 + grad.norm_squared();
        let gamma = christoffel(&p, &z, DEFAULT_FD_STEP).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let expected = grad[i] * hess[(j, k)] / denom;
                    assert!((gamma.get(i, j, k) - expected).abs() < 1e-7, "{i}{j}{k} at {z:?}");
                }
            }
        }
    }
}

#[test]
fn paraboloid_geodesic_matches_boundary_value_solution() {
    let p = AnalyticSurface::HyperbolicParaboloid;
    let (a, b) = (dvector![-3.0, -3.0], dvector![3.0, -3.0]);
    let reference = solve_geodesic_bvp(&p, &a, &b, 1024).unwrap();
    let reference_length = discrete_arc_length(&p, &reference.path).unwrap();
    assert!((reference_length - 7.6274).abs() < 1e-3);
    let sol = geodesic_path(&p, None::<&ChartInverse>, &a, &b, &GeodesicConfig::default()).unwrap();
    assert!(sol.diagnostics.converged);
    let length = discrete_arc_length(&p, &sol.path).unwrap();
    assert!((length - reference_length).abs() / reference_length < 0.01);
    let linear = discrete_arc_length(&p, &DiscretePath::linear(&a, &b, 10).unwrap()).unwrap();
    assert!(length < 0.5 * linear);
}

#[test]
fn sphere_geodesic_matches_great_circle() {
    let s = AnalyticSurface::sphere(1.0).unwrap();
    let (a, b) = (dvector![-0.6, 0.1], dvector![0.5, 0.4]);
    let exact = s.great_circle_distance(&a, &b).unwrap();
    for (steps, tol) in [(10, 2e-3), (32, 1e-4)] {
        let cfg = GeodesicConfig {
            max_iters: 100_000,
            ..GeodesicConfig::with_steps(steps)
        };
        let d = geodesic_distance(&s, None::<&ChartInverse>, &a, &b, &cfg).unwrap();
        assert!(d <= exact * (1.0 + 1e-9), "chords never exceed the arc");
        assert!((d - exact).abs() / exact < tol, "T={steps}: {d} vs {exact}");
    }
}

#[test]
fn energy_never_increases_under_backtracking() {
    let p = AnalyticSurface::HyperbolicParaboloid;
    let cfg = GeodesicConfig {
        step_size: 0.5,
        ..GeodesicConfig::default()
    };
    let sol = geodesic_path(&p, None::<&ChartInverse>, &dvector![-2.0, 1.0], &dvector![2.5, -1.0], &cfg).unwrap();
    for w in sol.diagnostics.energy_history.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert!(sol.diagnostics.final_step_size < 0.5);
}

fn projection_encoder(
    p: &AnalyticSurface,
) -> NearestPointEncoder<'_, AnalyticSurface, impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync> {
    NearestPointEncoder {
        generator: p,
        guess: |x: &DVector<f64>| x.rows(0, 2).into_owned(),
    }
}

#[test]
fn encoder_direction_is_a_descent_direction() {
    let p = AnalyticSurface::HyperbolicParaboloid;
    let h = projection_encoder(&p);
    let mut r = common::rng(31);
    for _ in 0..25 {
        let pts: Vec<_> = (0..6).map(|_| common::random_vector(&mut r, 2, 2.0)).collect();
        let path = DiscretePath::new(pts).unwrap();
        let i = r.random_range(1..5);
        let eta = modified_gradient(&p, &h, &path, i).unwrap();
        let grad = energy_gradient(&p, &path, i).unwrap();
        assert!(eta.dot(&grad) > 0.0);
    }
}

#[test]
fn encoder_mode_shares_the_fixed_point() {
    let p = AnalyticSurface::HyperbolicParaboloid;
    let h = projection_encoder(&p);
    let (a, b) = (dvector![-1.5, -1.0], dvector![1.5, -1.0]);
    let tight = |mode| GeodesicConfig {
        gradient_mode: mode,
        tolerance: Some(1e-16),
        max_iters: 100_000,
        ..GeodesicConfig::default()
    };
    let exact = geodesic_path(&p, Some(&h), &a, &b, &tight(GradientMode::Exact)).unwrap();
    let approx = geodesic_path(&p, Some(&h), &a, &b, &tight(GradientMode::Encoder)).unwrap();
    let gap = exact
        .path
        .points()
        .iter()
        .zip(approx.path.points())
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max);
    assert!(gap < 1e-4, "paths differ by {gap}");
    for i in 1..10 {
        assert!(modified_gradient(&p, &h, &approx.path, i).unwrap().norm() < 1e-6);
    }
}

#[test]
fn chart_encoder_mode_stops_at_a_different_path() {
    // The coordinate chart is a left inverse but not an orthogonal one, so
    // it discards the tangential pull carried by the height coordinate.
    let p = AnalyticSurface::HyperbolicParaboloid;
    let h = p.chart_inverse();
    let (a, b) = (dvector![-1.5, -1.0], dvector![1.5, -1.0]);
    let cfg = GeodesicConfig {
        gradient_mode: GradientMode::Encoder,
        ..GeodesicConfig::default()
    };
    let sol = geodesic_path(&p, Some(&h), &a, &b, &cfg).unwrap();
    let linear = DiscretePath::linear(&a, &b, 10).unwrap();
    assert_eq!(sol.diagnostics.iterations, 0);
    assert_eq!(sol.path, linear);
}
