//! A small fully connected VAE trained by minibatch SGD, providing a
//! generator `g` (the decoder) and an encoder `h` (the posterior mean).
//!
//! Architecture: `D -> FC(hidden), ELU` trunk, an identity mean head and a
//! sigmoid standard-deviation head of width `d`, and the mirrored decoder
//! `d -> FC(hidden), ELU -> FC(D)`.
//!
//! The loss is the negative ELBO with a fixed-variance Gaussian likelihood
//! and the analytic KL divergence to `N(0, I)`, averaged over the batch.
//! Gradients are obtained by backpropagation through `z = mu + sigma * eps`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::mlp::{sigmoid, Activation, DenseLayer, ImmersionReport, LayerGradient, MlpModel};

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder_trunk: MlpModel,
    pub mean_head: DenseLayer,
    pub std_head: DenseLayer,
    pub decoder: MlpModel,
}

fn gaussian_layer(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize, activation: Activation) -> DenseLayer {
    let normal = Normal::new(0.0, 1.0 / (inputs as f64).sqrt()).expect("positive std");
    let weights = DMatrix::from_fn(outputs, inputs, |_, _| normal.sample(rng));
    DenseLayer::new(weights, DVector::zeros(outputs), activation).expect("finite initial weights")
}

impl VaeModel {
    pub fn new(encoder_trunk: MlpModel, mean_head: DenseLayer, std_head: DenseLayer, decoder: MlpModel) -> Result<Self> {
        let hidden = encoder_trunk.output_dim();
        check_dim("mean head input", hidden, mean_head.input_dim())?;
        check_dim("std head input", hidden, std_head.input_dim())?;
        check_dim("std head output", mean_head.output_dim(), std_head.output_dim())?;
        check_dim("decoder input", mean_head.output_dim(), decoder.input_dim())?;
        check_dim("decoder output", encoder_trunk.input_dim(), decoder.output_dim())?;
        if std_head.activation != Activation::Sigmoid {
            return Err(Error::InvalidConfig("the std head must use a sigmoid activation".into()));
        }
        Ok(Self {
            encoder_trunk,
            mean_head,
            std_head,
            decoder,
        })
    }

    /// Gaussian initialization with standard deviation `1/sqrt(fan_in)` and zero biases.
    pub fn initialize(ambient_dim: usize, hidden: usize, latent_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if ambient_dim == 0 || hidden == 0 || latent_dim == 0 {
            return Err(Error::InvalidConfig("VAE dimensions must be positive".into()));
        }
        let trunk = MlpModel::new(vec![gaussian_layer(rng, ambient_dim, hidden, Activation::elu())])?;
        let mean_head = gaussian_layer(rng, hidden, latent_dim, Activation::Identity);
        let std_head = gaussian_layer(rng, hidden, latent_dim, Activation::Sigmoid);
        let decoder = MlpModel::new(vec![
            gaussian_layer(rng, latent_dim, hidden, Activation::elu()),
            gaussian_layer(rng, hidden, ambient_dim, Activation::Identity),
        ])?;
        Self::new(trunk, mean_head, std_head, decoder)
    }

    pub fn ambient_dim(&self) -> usize {
        self.encoder_trunk.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.mean_head.output_dim()
    }

    /// The encoder `h`: trunk followed by the mean head.
    pub fn encoder(&self) -> MlpModel {
        self.encoder_trunk
            .then(&MlpModel::new(vec![self.mean_head.clone()]).expect("single layer"))
            .expect("dimensions checked at construction")
    }

    pub fn decoder(&self) -> &MlpModel {
        &self.decoder
    }

    /// Posterior mean for `x`.
    pub fn encode_mean(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let t = self.encoder_trunk.forward(x)?;
        self.mean_head.forward(&t)
    }

    /// Posterior standard deviation for `x`.
    pub fn encode_std(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let t = self.encoder_trunk.forward(x)?;
        self.std_head.forward(&t)
    }

    fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder_trunk
            .layers()
            .iter()
            .chain([&self.mean_head, &self.std_head])
            .chain(self.decoder.layers())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All weights and biases, layer by layer, weights column-major then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in self.layers() {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    /// Inverse of [`VaeModel::parameters`].
    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        check_dim("parameter vector", self.parameter_count(), values.len())?;
        let mut offset = 0;
        let mut fill = |layer: &mut DenseLayer| {
            let nw = layer.weights.len();
            layer.weights.as_mut_slice().copy_from_slice(&values[offset..offset + nw]);
            offset += nw;
            let nb = layer.bias.len();
            layer.bias.as_mut_slice().copy_from_slice(&values[offset..offset + nb]);
            offset += nb;
        };
        for l in self.encoder_trunk.layers_mut() {
            fill(l);
        }
        fill(&mut self.mean_head);
        fill(&mut self.std_head);
        for l in self.decoder.layers_mut() {
            fill(l);
        }
        Ok(())
    }
}

fn flatten_gradients<'a>(grads: impl Iterator<Item = &'a LayerGradient>, capacity: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(capacity);
    for g in grads {
        out.extend_from_slice(g.weights.as_slice());
        out.extend_from_slice(g.bias.as_slice());
    }
    out
}

/// Batch-averaged negative ELBO and its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElboEvaluation {
    pub breakdown: LossBreakdown,
    /// Gradient in the order of [`VaeModel::parameters`].
    pub gradient: Vec<f64>,
}

/// Negative ELBO of a batch (columns are samples) under reparameterization
/// noise `noise` (`d x B`), with its exact parameter gradient.
pub fn elbo_loss(model: &VaeModel, batch: &DMatrix<f64>, noise: &DMatrix<f64>, likelihood_variance: f64) -> Result<ElboEvaluation> {
    check_dim("batch rows", model.ambient_dim(), batch.nrows())?;
    check_dim("noise rows", model.latent_dim(), noise.nrows())?;
    check_dim("noise columns", batch.ncols(), noise.ncols())?;
    if !(likelihood_variance > 0.0) {
        return Err(Error::InvalidConfig("likelihood variance must be positive".into()));
    }
    let b = batch.ncols();
    if b == 0 {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let inv_b = 1.0 / b as f64;
    let ambient = model.ambient_dim() as f64;

    let trunk = model.encoder_trunk.forward_batch(batch);
    let hidden = &trunk.output;
    let mean = model.mean_head.pre_activation_batch(hidden);
    let std_pre = model.std_head.pre_activation_batch(hidden);
    let std = std_pre.map(sigmoid);
    let z = &mean + std.component_mul(noise);
    let dec = model.decoder.forward_batch(&z);
    let residual = &dec.output - batch;

    let reconstruction = 0.5 * residual.norm_squared() / likelihood_variance * inv_b
        + 0.5 * ambient * (2.0 * std::f64::consts::PI * likelihood_variance).ln();
    // ln sigmoid(s) = -ln(1 + e^{-s}), evaluated without forming sigma.
    let log_std = std_pre.map(|s| -softplus(-s));
    let kl = 0.5 * inv_b * (mean.norm_squared() + std.norm_squared() - (mean.len() as f64) - 2.0 * log_std.sum());
    let loss = reconstruction + kl;
    if !loss.is_finite() {
        return Err(Error::NonFinite("ELBO loss"));
    }

    let grad_out = &residual * (inv_b / likelihood_variance);
    let (dec_grads, grad_z) = model.decoder.backward_batch(&dec, &grad_out);
    let grad_mean = &grad_z + &mean * inv_b;
    // d/ds of [eps * sigma] via sigma' = sigma (1 - sigma), plus the KL term
    // d/ds [sigma^2 / 2 - ln sigma] = (1 - sigma)(sigma^2 - 1).
    let delta_std = DMatrix::from_fn(std.nrows(), std.ncols(), |r, c| {
        let s = std[(r, c)];
        grad_z[(r, c)] * noise[(r, c)] * s * (1.0 - s) + inv_b * (1.0 - s) * (s * s - 1.0)
    });
    let (mean_grad, grad_hidden_mean) = model.mean_head.backward_from_delta(hidden, &grad_mean);
    let (std_grad, grad_hidden_std) = model.std_head.backward_from_delta(hidden, &delta_std);
    let (trunk_grads, _) = model.encoder_trunk.backward_batch(&trunk, &(grad_hidden_mean + grad_hidden_std));

    let gradient = flatten_gradients(
        trunk_grads.iter().chain([&mean_grad, &std_grad]).chain(dec_grads.iter()),
        model.parameter_count(),
    );
    Ok(ElboEvaluation {
        breakdown: LossBreakdown { loss, reconstruction, kl },
        gradient,
    })
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub likelihood_variance: f64,
    pub hidden_units: usize,
    pub latent_dim: usize,
    /// Rescale the gradient to at most this Euclidean norm.
    pub gradient_clip: Option<f64>,
    /// Decay the learning rate linearly to zero over the run.
    pub linear_decay: bool,
}

impl TrainConfig {
    /// Batch 100, learning rate 1e-4, 100k iterations, unit likelihood variance.
    pub fn paper() -> Self {
        Self {
            batch_size: 100,
            learning_rate: 1e-4,
            iterations: 100_000,
            seed: 0,
            likelihood_variance: 1.0,
            hidden_units: 100,
            latent_dim: 2,
            gradient_clip: None,
            linear_decay: false,
        }
    }

    /// 20k iterations at a sharper likelihood, with clipping and a linear
    /// decay so plain SGD still settles. Trains in well under a minute.
    pub fn desk() -> Self {
        Self {
            iterations: 20_000,
            learning_rate: 3e-3,
            likelihood_variance: 0.03,
            gradient_clip: Some(10.0),
            linear_decay: true,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.iterations == 0 || self.hidden_units == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidConfig(
                "batch size, iterations and layer sizes must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.likelihood_variance > 0.0) {
            return Err(Error::InvalidConfig(
                "learning rate and likelihood variance must be positive".into(),
            ));
        }
        if let Some(c) = self.gradient_clip {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig("gradient clip must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    /// Minibatch loss before each update.
    pub losses: Vec<f64>,
    /// Rank check of the trained decoder on prior samples.
    pub decoder_immersion: ImmersionReport,
}

/// Number of prior samples used for the post-training immersion check.
pub const IMMERSION_SAMPLES: usize = 100;

/// Trains a VAE on `data` by minibatch SGD. Deterministic for a fixed seed.
pub fn train_vae(data: &[DVector<f64>], config: &TrainConfig) -> Result<(VaeModel, TrainingLog)> {
    config.validate()?;
    let first = data.first().ok_or_else(|| Error::InvalidConfig("training set is empty".into()))?;
    let ambient = first.len();
    for x in data {
        check_dim("training point", ambient, x.len())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = VaeModel::initialize(ambient, config.hidden_units, config.latent_dim, &mut rng)?;
    let mut params = model.parameters();
    let mut losses = Vec::with_capacity(config.iterations);
    let mut batch = DMatrix::zeros(ambient, config.batch_size);

    for it in 0..config.iterations {
        for c in 0..config.batch_size {
            let idx = rng.random_range(0..data.len());
            batch.set_column(c, &data[idx]);
        }
        let noise = DMatrix::from_fn(config.latent_dim, config.batch_size, |_, _| StandardNormal.sample(&mut rng));
        let eval = match elbo_loss(&model, &batch, &noise, config.likelihood_variance) {
            Ok(e) => e,
            Err(Error::NonFinite(_)) => {
                return Err(Error::Diverged {
                    iteration: it,
                    loss: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        losses.push(eval.breakdown.loss);
        let mut scale = if config.linear_decay {
            config.learning_rate * (1.0 - it as f64 / config.iterations as f64)
        } else {
            config.learning_rate
        };
        if let Some(clip) = config.gradient_clip {
            let norm = eval.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                scale *= clip / norm;
            }
        }
        for (p, g) in params.iter_mut().zip(&eval.gradient) {
            *p -= scale * g;
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                iteration: it,
                loss: eval.breakdown.loss,
            });
        }
        model.set_parameters(&params)?;
    }

    let samples: Vec<DVector<f64>> = (0..IMMERSION_SAMPLES)
        .map(|_| DVector::from_fn(config.latent_dim, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let decoder_immersion = model.decoder.check_immersion(&samples)?;
    Ok((model, TrainingLog { losses, decoder_immersion }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn tiny_model(seed: u64) -> VaeModel {
        VaeModel::initialize(3, 5, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn parameters_round_trip() {
        let mut m = tiny_model(1);
        let p = m.parameters();
        assert_eq!(p.len(), m.parameter_count());
        let shifted: Vec<f64> = p.iter().map(|v| v + 1.0).collect();
        m.set_parameters(&shifted).unwrap();
        assert_eq!(m.parameters(), shifted);
        assert!(m.set_parameters(&shifted[1..]).is_err());
    }

    #[test]
    fn kl_vanishes_at_prior() {
        // Zero mean head and a std head saturated at sigma = 1 - tiny.
        let mut m = tiny_model(2);
        m.mean_head.weights.fill(0.0);
        m.mean_head.bias.fill(0.0);
        m.std_head.weights.fill(0.0);
        m.std_head.bias.fill(40.0);
        let batch = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.3, -0.4, 0.5, 0.6]);
        let noise = DMatrix::zeros(2, 2);
        let e = elbo_loss(&m, &batch, &noise, 1.0).unwrap();
        assert!(e.breakdown.kl.abs() < 1e-12, "{}", e.breakdown.kl);
    }

    #[test]
    fn perfect_reconstruction_leaves_only_the_normalizer() {
        // A decoder that outputs a constant equal to the single sample.
        let mut m = tiny_model(3);
        let x = dvector![0.3, -0.2, 0.7];
        for l in m.decoder.layers_mut() {
            l.weights.fill(0.0);
        }
        let last = m.decoder.layers_mut().last_mut().unwrap();
        last.bias = x.clone();
        let batch = DMatrix::from_column_slice(3, 1, x.as_slice());
        let e = elbo_loss(&m, &batch, &DMatrix::zeros(2, 1), 1.0).unwrap();
        let expected = 0.5 * 3.0 * (2.0 * std::f64::consts::PI).ln();
        assert!((e.breakdown.reconstruction - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_encoder_returns_mean_bias() {
        let mut m = tiny_model(4);
        for l in m.encoder_trunk.layers_mut() {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        m.mean_head.weights.fill(0.0);
        m.mean_head.bias = dvector![0.25, -1.5];
        for x in [dvector![1.0, 2.0, 3.0], dvector![-7.0, 0.0, 0.5]] {
            assert_eq!(m.encode_mean(&x).unwrap(), dvector![0.25, -1.5]);
        }
    }

    #[test]
    fn encoder_matches_trunk_and_head() {
        let m = tiny_model(5);
        let x = dvector![0.4, -1.0, 0.2];
        let direct = m.mean_head.forward(&m.encoder_trunk.forward(&x).unwrap()).unwrap();
        assert_eq!(m.encoder().forward(&x).unwrap(), direct);
        assert_eq!(m.encode_mean(&x).unwrap(), direct);
    }

    #[test]
    fn invalid_training_configs() {
        let data = vec![dvector![0.0, 0.0, 0.0]];
        let mut cfg = TrainConfig::desk();
        cfg.batch_size = 0;
        assert!(train_vae(&data, &cfg).is_err());
        let mut cfg = TrainConfig::desk();
        cfg.likelihood_variance = 0.0;
        assert!(train_vae(&data, &cfg).is_err());
        assert!(train_vae(&[], &TrainConfig::desk()).is_err());
    }

    #[test]
    fn absurd_learning_rate_diverges() {
        let data: Vec<_> = (0..50).map(|i| dvector![i as f64, -(i as f64), (i * i) as f64]).collect();
        let cfg = TrainConfig {
            iterations: 200,
            learning_rate: 1e6,
            gradient_clip: None,
            linear_decay: false,
            batch_size: 10,
            ..TrainConfig::desk()
        };
        assert!(matches!(train_vae(&data, &cfg), Err(Error::Diverged { .. })));
    }
}
