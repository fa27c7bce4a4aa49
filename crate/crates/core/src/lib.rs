//! Riemannian geometry of generator maps `g: Z -> X`.
//!
//! The latent space of a smooth immersion inherits the pullback metric
//! `G(z) = J(z)^T J(z)`. This crate computes discrete geodesics under that
//! metric, parallel translation, geodesic shooting and analogies, and the
//! statistics (means, distance matrices, MDS) that go with them. Models are
//! either small MLPs (including a trainable VAE) or closed-form surfaces.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geodesic;
pub mod manifold;
pub mod mlp;
pub mod ode;
pub mod stats;
pub mod surfaces;
pub mod transport;
pub mod vae;

pub use error::{Error, Result};
pub use geodesic::{
    energy_gradient, geodesic_distance, geodesic_path, modified_gradient, GeodesicConfig, GeodesicDiagnostics, GeodesicSolution,
    GradientMode,
};
pub use manifold::{
    discrete_arc_length, discrete_energy, project_to_tangent, pullback_metric, tangent_frame, AmbientPoint, DifferentiableMap,
    DiscretePath, IdentityMap, LatentPoint, MetricTensor, Space, TangentFrame, TangentVector,
};
pub use mlp::{load_model, save_model, Activation, DenseLayer, ImmersionReport, MlpModel, ModelDocument};
pub use stats::{
    classical_mds, distance_matrix, frechet_mean, linear_mean, r2_score, DistanceMatrix, DistanceMode, FrechetConfig, FrechetResult,
    LabeledSet, MdsResult,
};
pub use surfaces::{sample_paraboloid, AnalyticSurface, ChartInverse};
pub use transport::{
    geodesic_analogy, geodesic_shoot, initial_velocity, linear_analogy, parallel_translate, translate_ambient, AnalogyResult, ShootOptions,
    ShootResult, Translation,
};
pub use vae::{elbo_loss, train_vae, TrainConfig, TrainingLog, VaeModel};
