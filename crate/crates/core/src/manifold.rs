//! Generator maps, the pullback metric they induce on latent space, tangent
//! frames, and the discrete curve functionals shared by the solvers.
//!
//! A generator `g : Z -> X` sends latent coordinates in `R^d` to data space
//! `R^D`. Wherever its Jacobian has rank `d` the image is an immersed
//! manifold, and the ambient dot product pulls back to the metric
//! `G(z) = J(z)^T J(z)` on the latent chart.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Relative singular value cutoff used for every numerical rank decision.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// A smooth map between coordinate spaces with an exact Jacobian.
///
/// Implemented by generators `g : Z -> X` and encoders `h : X -> Z` alike.
pub trait DifferentiableMap: Send + Sync {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn evaluate(&self, input: &DVector<f64>) -> Result<DVector<f64>>;

    /// `output_dim x input_dim` matrix of partial derivatives.
    fn jacobian(&self, input: &DVector<f64>) -> Result<DMatrix<f64>>;
}

impl<M: DifferentiableMap + ?Sized> DifferentiableMap for &M {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }

    fn evaluate(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).evaluate(input)
    }

    fn jacobian(&self, input: &DVector<f64>) -> Result<DMatrix<f64>> {
        (**self).jacobian(input)
    }
}

impl<M: DifferentiableMap + ?Sized> DifferentiableMap for Box<M> {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }

    fn evaluate(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).evaluate(input)
    }

    fn jacobian(&self, input: &DVector<f64>) -> Result<DMatrix<f64>> {
        (**self).jacobian(input)
    }
}

fn ensure_finite(context: &'static str, v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

macro_rules! coordinate_newtype {
    ($(#[$meta:meta])* $name:ident, $context:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(DVector<f64>);

        impl $name {
            pub fn new(coords: DVector<f64>) -> Result<Self> {
                if coords.is_empty() {
                    return Err(Error::InvalidConfig(concat!($context, " must have at least one coordinate").into()));
                }
                ensure_finite($context, &coords)?;
                Ok(Self(coords))
            }

            pub fn from_slice(coords: &[f64]) -> Result<Self> {
                Self::new(DVector::from_column_slice(coords))
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn as_vector(&self) -> &DVector<f64> {
                &self.0
            }

            pub fn into_vector(self) -> DVector<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = DVector<f64>;

            fn deref(&self) -> &DVector<f64> {
                &self.0
            }
        }

        impl From<$name> for DVector<f64> {
            fn from(p: $name) -> DVector<f64> {
                p.0
            }
        }
    };
}

coordinate_newtype!(
    /// Coordinates of a point in the latent space `Z`.
    LatentPoint,
    "latent point"
);

coordinate_newtype!(
    /// Coordinates of a point in the data space `X`.
    AmbientPoint,
    "ambient point"
);

/// Which space a tangent vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Latent,
    Ambient,
}

/// A vector attached to a base point in either latent or ambient space.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: DVector<f64>,
    components: DVector<f64>,
    space: Space,
}

impl TangentVector {
    pub fn new(space: Space, base: DVector<f64>, components: DVector<f64>) -> Result<Self> {
        check_dim("tangent vector", base.len(), components.len())?;
        ensure_finite("tangent vector", &components)?;
        Ok(Self { base, components, space })
    }

    pub fn latent(base: &LatentPoint, components: DVector<f64>) -> Result<Self> {
        Self::new(Space::Latent, base.as_vector().clone(), components)
    }

    pub fn ambient(base: &AmbientPoint, components: DVector<f64>) -> Result<Self> {
        Self::new(Space::Ambient, base.as_vector().clone(), components)
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.base
    }

    pub fn components(&self) -> &DVector<f64> {
        &self.components
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn norm(&self) -> f64 {
        self.components.norm()
    }
}

/// The pullback metric `G(z)` at a latent point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTensor(DMatrix<f64>);

impl MetricTensor {
    /// Wraps a matrix, rejecting anything that is not square and symmetric.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        check_dim("metric tensor", matrix.nrows(), matrix.ncols())?;
        let scale = matrix.amax().max(1.0);
        if (&matrix - matrix.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidConfig("metric tensor is not symmetric".into()));
        }
        Ok(Self(matrix))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `u^T G v` for two latent vectors sharing a base point.
    pub fn inner_product(&self, u: &TangentVector, v: &TangentVector) -> Result<f64> {
        for w in [u, v] {
            if w.space() != Space::Latent {
                return Err(Error::InvalidConfig("metric inner product needs latent tangent vectors".into()));
            }
            check_dim("inner product", self.dim(), w.components().len())?;
        }
        if u.base() != v.base() {
            return Err(Error::InvalidConfig("tangent vectors are attached to different base points".into()));
        }
        Ok(self.quadratic_form(u.components(), v.components()))
    }

    pub(crate) fn quadratic_form(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&(&self.0 * v))
    }
}

/// Pullback of the ambient Euclidean metric through `map` at `z`.
pub fn pullback_metric<M: DifferentiableMap + ?Sized>(map: &M, z: &DVector<f64>) -> Result<MetricTensor> {
    let j = map.jacobian(z)?;
    let g = j.transpose() * &j;
    // J^T J is symmetric in exact arithmetic; enforce it bitwise.
    let g = (&g + g.transpose()) * 0.5;
    Ok(MetricTensor(g))
}

/// Orthonormal basis of the tangent space at `g(z)` from the thin SVD of the Jacobian.
#[derive(Debug, Clone)]
pub struct TangentFrame {
    basis: DMatrix<f64>,
    singular_values: DVector<f64>,
    right: DMatrix<f64>,
}

impl TangentFrame {
    /// Computes the frame of a `D x d` Jacobian, failing when its numerical rank is below `d`.
    pub fn from_jacobian(jacobian: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = jacobian.shape();
        if rows < cols {
            return Err(Error::DimensionMismatch {
                context: "tangent frame (ambient dim must be >= latent dim)",
                expected: cols,
                found: rows,
            });
        }
        if jacobian.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("jacobian"));
        }
        let svd = jacobian.clone().svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::NonFinite("singular value decomposition")),
        };
        let sv = svd.singular_values;
        let largest = sv.max();
        let smallest = sv.min();
        if !(smallest > RANK_TOLERANCE * largest) || largest == 0.0 {
            return Err(Error::RankDeficient {
                smallest,
                largest,
                tolerance: RANK_TOLERANCE,
            });
        }
        Ok(Self {
            basis: u,
            singular_values: sv,
            right: v_t.transpose(),
        })
    }

    /// `D x d` matrix with orthonormal columns spanning the tangent space.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    /// Orthogonal projection `U U^T w` onto the tangent space.
    pub fn project(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("tangent projection", self.basis.nrows(), w.len())?;
        Ok(&self.basis * (self.basis.transpose() * w))
    }

    /// Least-squares latent preimage `J^+ u` of an ambient tangent vector.
    pub fn pull_back(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("tangent pull back", self.basis.nrows(), u.len())?;
        let coeffs = (self.basis.transpose() * u).component_div(&self.singular_values);
        Ok(&self.right * coeffs)
    }
}

pub fn tangent_frame<M: DifferentiableMap + ?Sized>(map: &M, z: &DVector<f64>) -> Result<TangentFrame> {
    TangentFrame::from_jacobian(&map.jacobian(z)?)
}

/// Projects an ambient tangent vector onto the frame's tangent space.
pub fn project_to_tangent(frame: &TangentFrame, w: &TangentVector) -> Result<TangentVector> {
    if w.space() != Space::Ambient {
        return Err(Error::InvalidConfig("tangent projection expects an ambient vector".into()));
    }
    let p = frame.project(w.components())?;
    TangentVector::new(Space::Ambient, w.base().clone(), p)
}

/// Ordered latent samples `z_0 ... z_T` of a curve on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    points: Vec<DVector<f64>>,
}

impl DiscretePath {
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "a path needs at least two points, got {}",
                points.len()
            )));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::InvalidConfig("path points must be non-empty".into()));
        }
        for p in &points {
            check_dim("path point", d, p.len())?;
            ensure_finite("path point", p)?;
        }
        Ok(Self { points })
    }

    /// Evenly spaced samples of the latent segment from `start` to `end`.
    pub fn linear(start: &DVector<f64>, end: &DVector<f64>, steps: usize) -> Result<Self> {
        check_dim("linear path", start.len(), end.len())?;
        if steps == 0 {
            return Err(Error::InvalidConfig("a path needs at least one step".into()));
        }
        let points = (0..=steps)
            .map(|i| {
                let t = i as f64 / steps as f64;
                start * (1.0 - t) + end * t
            })
            .collect();
        Self::new(points)
    }

    /// Number of segments `T`.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps() as f64
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.points[0]
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.points[self.points.len() - 1]
    }

    pub(crate) fn points_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.points
    }

    pub fn into_points(self) -> Vec<DVector<f64>> {
        self.points
    }

    /// The image curve `g(z_0) ... g(z_T)`.
    pub fn images<M: DifferentiableMap + ?Sized>(&self, map: &M) -> Result<Vec<DVector<f64>>> {
        self.points.iter().map(|z| map.evaluate(z)).collect()
    }
}

pub(crate) fn energy_of_images(images: &[DVector<f64>]) -> f64 {
    let steps = (images.len() - 1) as f64;
    0.5 * steps * images.windows(2).map(|w| (&w[1] - &w[0]).norm_squared()).sum::<f64>()
}

pub(crate) fn length_of_images(images: &[DVector<f64>]) -> f64 {
    images.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum()
}

/// `E = 1/2 sum_{i<T} ||g(z_{i+1}) - g(z_i)||^2 / dt`.
pub fn discrete_energy<M: DifferentiableMap + ?Sized>(map: &M, path: &DiscretePath) -> Result<f64> {
    check_dim("discrete energy", map.input_dim(), path.dim())?;
    Ok(energy_of_images(&path.images(map)?))
}

/// Sum of chord lengths of the image curve.
pub fn discrete_arc_length<M: DifferentiableMap + ?Sized>(map: &M, path: &DiscretePath) -> Result<f64> {
    check_dim("discrete arc length", map.input_dim(), path.dim())?;
    Ok(length_of_images(&path.images(map)?))
}

/// Whether a set of singular values passes the relative rank test.
pub fn is_full_rank(singular_values: &DVector<f64>) -> bool {
    if singular_values.is_empty() {
        return false;
    }
    let largest = singular_values.max();
    largest > 0.0 && singular_values.min() > RANK_TOLERANCE * largest
}

/// The identity map on `R^n`.
#[derive(Debug, Clone, Copy)]
pub struct IdentityMap(pub usize);

impl DifferentiableMap for IdentityMap {
    fn input_dim(&self) -> usize {
        self.0
    }

    fn output_dim(&self) -> usize {
        self.0
    }

    fn evaluate(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("identity map", self.0, input.len())?;
        Ok(input.clone())
    }

    fn jacobian(&self, input: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim("identity map", self.0, input.len())?;
        Ok(DMatrix::identity(self.0, self.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn identity_evaluates_to_input() {
        let z = dvector![1.0, 2.0];
        assert_eq!(IdentityMap(2).evaluate(&z).unwrap(), z);
        assert!(matches!(IdentityMap(3).evaluate(&z), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn inner_product_examples() {
        let base = LatentPoint::from_slice(&[0.0, 0.0]).unwrap();
        let g = MetricTensor::new(DMatrix::identity(2, 2)).unwrap();
        let e1 = TangentVector::latent(&base, dvector![1.0, 0.0]).unwrap();
        let e2 = TangentVector::latent(&base, dvector![0.0, 1.0]).unwrap();
        assert_eq!(g.inner_product(&e1, &e2).unwrap(), 0.0);
        let u = TangentVector::latent(&base, dvector![3.0, 4.0]).unwrap();
        assert_eq!(g.inner_product(&u, &u).unwrap(), 25.0);

        let g = MetricTensor::new(DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(g.inner_product(&e1, &e1).unwrap(), 5.0);
    }

    #[test]
    fn inner_product_rejects_mixed_base_points() {
        let g = MetricTensor::new(DMatrix::identity(2, 2)).unwrap();
        let a = LatentPoint::from_slice(&[0.0, 0.0]).unwrap();
        let b = LatentPoint::from_slice(&[1.0, 0.0]).unwrap();
        let u = TangentVector::latent(&a, dvector![1.0, 0.0]).unwrap();
        let v = TangentVector::latent(&b, dvector![1.0, 0.0]).unwrap();
        assert!(g.inner_product(&u, &v).is_err());
        let short = TangentVector::new(Space::Latent, dvector![0.0], dvector![1.0]).unwrap();
        assert!(g.inner_product(&short, &short).is_err());
    }

    #[test]
    fn asymmetric_metric_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(MetricTensor::new(m).is_err());
    }

    #[test]
    fn points_reject_non_finite() {
        assert!(LatentPoint::from_slice(&[f64::NAN]).is_err());
        assert!(AmbientPoint::from_slice(&[]).is_err());
    }

    #[test]
    fn frame_of_orthonormal_columns_spans_them() {
        let j = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let frame = TangentFrame::from_jacobian(&j).unwrap();
        let gram = frame.basis().transpose() * frame.basis();
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-12);
        let w = dvector![1.0, 2.0, 7.0];
        let p = frame.project(&w).unwrap();
        assert!((p - dvector![1.0, 2.0, 0.0]).amax() < 1e-12);
    }

    #[test]
    fn rank_deficient_jacobian_is_rejected() {
        let j = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 0.0, 0.0]);
        assert!(matches!(TangentFrame::from_jacobian(&j), Err(Error::RankDeficient { .. })));
        assert!(TangentFrame::from_jacobian(&DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn pull_back_inverts_the_jacobian_on_its_range() {
        let j = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, 0.1]);
        let frame = TangentFrame::from_jacobian(&j).unwrap();
        let v = dvector![0.4, -1.3];
        let back = frame.pull_back(&(&j * &v)).unwrap();
        assert!((back - v).amax() < 1e-12);
    }

    #[test]
    fn flat_energy_is_independent_of_resolution() {
        let map = IdentityMap(2);
        let a = dvector![0.0, 0.0];
        let b = dvector![3.0, 0.0];
        for steps in [1, 4, 17] {
            let path = DiscretePath::linear(&a, &b, steps).unwrap();
            assert!((discrete_energy(&map, &path).unwrap() - 4.5).abs() < 1e-12);
        }
        let path = DiscretePath::linear(&a, &dvector![6.0, 0.0], 5).unwrap();
        assert!((discrete_arc_length(&map, &path).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn constant_path_has_zero_energy_and_length() {
        let map = IdentityMap(2);
        let p = dvector![1.0, -2.0];
        let path = DiscretePath::linear(&p, &p, 4).unwrap();
        assert_eq!(discrete_energy(&map, &path).unwrap(), 0.0);
        assert_eq!(discrete_arc_length(&map, &path).unwrap(), 0.0);
    }

    #[test]
    fn path_validation() {
        assert!(DiscretePath::new(vec![dvector![0.0]]).is_err());
        assert!(DiscretePath::new(vec![dvector![0.0], dvector![0.0, 1.0]]).is_err());
        assert!(DiscretePath::linear(&dvector![0.0], &dvector![1.0], 0).is_err());
    }
}
