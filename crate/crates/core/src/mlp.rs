//! Fully connected networks `g = g^(1) ∘ ... ∘ g^(l)` with exact Jacobians.
//!
//! Each layer computes `phi(W y + b)`. The Jacobian of the composition is the
//! chain-rule product of `diag(phi'(a)) W` over the layers, evaluated at the
//! intermediate pre-activations `a`.
//!
//! Models serialize to a JSON document of the form
//!
//! ```json
//! { "layers": [ { "weights": [[...], ...], "bias": [...], "activation": "elu", "alpha": 1.0 } ] }
//! ```
//!
//! where `weights` is row-major (`out x in`) and `alpha` is only read for
//! `elu` (defaulting to 1.0 when absent).

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::manifold::{is_full_rank, DifferentiableMap};

pub const DEFAULT_ELU_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Elu { alpha: f64 },
    Tanh,
    Identity,
    Sigmoid,
}

impl Activation {
    pub fn elu() -> Self {
        Activation::Elu { alpha: DEFAULT_ELU_ALPHA }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Elu { .. } => "elu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn from_name(name: &str, alpha: Option<f64>) -> Result<Self> {
        match name {
            "elu" => {
                let alpha = alpha.unwrap_or(DEFAULT_ELU_ALPHA);
                if !(alpha > 0.0) || !alpha.is_finite() {
                    return Err(Error::MalformedModel(format!("elu alpha must be positive, got {alpha}")));
                }
                Ok(Activation::Elu { alpha })
            }
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::UnknownActivation(other.to_string())),
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Elu { alpha } => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x.exp_m1()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// `phi'(x)`. For ELU both one-sided limits at zero equal `alpha`
    /// from the left and 1 from the right, so the derivative is continuous
    /// exactly when `alpha == 1`.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Elu { alpha } => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha * x.exp()
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Affine map followed by an elementwise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

/// Parameter gradients of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl DenseLayer {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Result<Self> {
        check_dim("layer bias", weights.nrows(), bias.len())?;
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::MalformedModel("layer has an empty weight matrix".into()));
        }
        if weights.iter().chain(bias.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("layer parameters"));
        }
        if let Activation::Elu { alpha } = activation {
            if !(alpha > 0.0) {
                return Err(Error::InvalidConfig(format!("elu alpha must be positive, got {alpha}")));
            }
        }
        Ok(Self { weights, bias, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn pre_activation(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = &self.weights * input;
        for mut col in a.column_iter_mut() {
            col += &self.bias;
        }
        a
    }

    pub fn forward(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("layer input", self.input_dim(), input.len())?;
        let a = &self.weights * input + &self.bias;
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("activation input"));
        }
        Ok(a.map(|x| self.activation.apply(x)))
    }

    /// Gradients for a batch given the cached input, pre-activation and the
    /// upstream gradient with respect to the layer output. Returns the
    /// parameter gradient and the gradient with respect to the input.
    pub(crate) fn backward(&self, input: &DMatrix<f64>, pre: &DMatrix<f64>, grad_output: &DMatrix<f64>) -> (LayerGradient, DMatrix<f64>) {
        let delta = grad_output.zip_map(pre, |g, a| g * self.activation.derivative(a));
        self.backward_from_delta(input, &delta)
    }

    /// Same as `backward` with the gradient already taken through the activation.
    pub(crate) fn backward_from_delta(&self, input: &DMatrix<f64>, delta: &DMatrix<f64>) -> (LayerGradient, DMatrix<f64>) {
        let weights = delta * input.transpose();
        let bias = delta.column_sum();
        let grad_input = self.weights.transpose() * delta;
        (LayerGradient { weights, bias }, grad_input)
    }

    pub(crate) fn pre_activation_batch(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        self.pre_activation(input)
    }
}

/// Per-layer activations recorded during a batched forward pass.
/// Columns are samples.
#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    pub inputs: Vec<DMatrix<f64>>,
    pub pre: Vec<DMatrix<f64>>,
    pub output: DMatrix<f64>,
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
}

impl MlpModel {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::MalformedModel("model has no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].input_dim() != pair[0].output_dim() {
                return Err(Error::ChainMismatch {
                    layer: i + 1,
                    expected: pair[1].input_dim(),
                    found: pair[0].output_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Appends `other` after `self`.
    pub fn then(&self, other: &MlpModel) -> Result<MlpModel> {
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned());
        MlpModel::new(layers)
    }

    pub fn forward(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("model input", self.input_dim(), input.len())?;
        let mut y = input.clone();
        for layer in &self.layers {
            y = layer.forward(&y)?;
        }
        Ok(y)
    }

    /// Exact `out x in` Jacobian by the chain rule.
    pub fn model_jacobian(&self, input: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim("model input", self.input_dim(), input.len())?;
        let mut y = input.clone();
        let mut jac = DMatrix::identity(self.input_dim(), self.input_dim());
        for layer in &self.layers {
            let a = &layer.weights * &y + &layer.bias;
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("activation input"));
            }
            let mut local = layer.weights.clone();
            for (r, mut row) in local.row_iter_mut().enumerate() {
                row *= layer.activation.derivative(a[r]);
            }
            jac = local * jac;
            y = a.map(|x| layer.activation.apply(x));
        }
        Ok(jac)
    }

    pub(crate) fn forward_batch(&self, input: &DMatrix<f64>) -> ForwardCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut y = input.clone();
        for layer in &self.layers {
            let a = layer.pre_activation(&y);
            let next = a.map(|x| layer.activation.apply(x));
            inputs.push(y);
            pre.push(a);
            y = next;
        }
        ForwardCache { inputs, pre, output: y }
    }

    pub(crate) fn backward_batch(&self, cache: &ForwardCache, grad_output: &DMatrix<f64>) -> (Vec<LayerGradient>, DMatrix<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (grad, grad_in) = layer.backward(&cache.inputs[l], &cache.pre[l], &upstream);
            grads.push(grad);
            upstream = grad_in;
        }
        grads.reverse();
        (grads, upstream)
    }

    /// Numerical rank checks for the weights and for the Jacobian at `samples`.
    pub fn check_immersion(&self, samples: &[DVector<f64>]) -> Result<ImmersionReport> {
        let weight_rank_ok = self.layers.iter().map(|l| is_full_rank(&l.weights.singular_values())).collect();
        let jacobian_rank_ok = samples
            .iter()
            .map(|z| {
                let j = self.model_jacobian(z)?;
                let sv = j.singular_values();
                Ok(sv.len() == self.input_dim() && is_full_rank(&sv))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ImmersionReport {
            weight_rank_ok,
            jacobian_rank_ok,
        })
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            layers: self
                .layers
                .iter()
                .map(|l| LayerDocument {
                    weights: l.weights.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    bias: l.bias.iter().copied().collect(),
                    activation: l.activation.name().to_string(),
                    alpha: match l.activation {
                        Activation::Elu { alpha } => Some(alpha),
                        _ => None,
                    },
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let layers = doc
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let rows = l.weights.len();
                let cols = l.weights.first().map_or(0, Vec::len);
                if rows == 0 || cols == 0 {
                    return Err(Error::MalformedModel(format!("layer {i} has no weights")));
                }
                if l.weights.iter().any(|r| r.len() != cols) {
                    return Err(Error::MalformedModel(format!("layer {i} has ragged weight rows")));
                }
                if l.bias.len() != rows {
                    return Err(Error::MalformedModel(format!(
                        "layer {i} has {} bias entries for {rows} outputs",
                        l.bias.len()
                    )));
                }
                let weights = DMatrix::from_row_iterator(rows, cols, l.weights.iter().flatten().copied());
                let activation = Activation::from_name(&l.activation, l.alpha)?;
                DenseLayer::new(weights, DVector::from_vec(l.bias.clone()), activation)
            })
            .collect::<Result<Vec<_>>>()?;
        MlpModel::new(layers)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
        Self::from_document(&doc)
    }
}

impl DifferentiableMap for MlpModel {
    fn input_dim(&self) -> usize {
        MlpModel::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        MlpModel::output_dim(self)
    }

    fn evaluate(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        self.forward(input)
    }

    fn jacobian(&self, input: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.model_jacobian(input)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImmersionReport {
    pub weight_rank_ok: Vec<bool>,
    pub jacobian_rank_ok: Vec<bool>,
}

impl ImmersionReport {
    pub fn all_ok(&self) -> bool {
        self.weight_rank_ok.iter().chain(&self.jacobian_rank_ok).all(|&ok| ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

pub fn save_model(model: &MlpModel, destination: impl AsRef<Path>) -> Result<()> {
    fs::write(destination, model.to_json()?)?;
    Ok(())
}

pub fn load_model(source: impl AsRef<Path>) -> Result<MlpModel> {
    MlpModel::from_json(&fs::read_to_string(source)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn layer(rows: usize, cols: usize, w: &[f64], b: &[f64], act: Activation) -> DenseLayer {
        DenseLayer::new(DMatrix::from_row_slice(rows, cols, w), DVector::from_column_slice(b), act).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let m = MlpModel::new(vec![layer(2, 2, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], Activation::Identity)]).unwrap();
        assert_eq!(m.forward(&dvector![1.0, 2.0]).unwrap(), dvector![1.0, 2.0]);
    }

    #[test]
    fn elu_values() {
        let elu = Activation::elu();
        assert_eq!(elu.apply(0.0), 0.0);
        assert!((elu.apply(-1.0) - (-1.0f64).exp_m1()).abs() < 1e-15);
        assert!((elu.apply(-1.0) + 0.632_120_558_828_557_7).abs() < 1e-12);
        assert_eq!(elu.apply(2.5), 2.5);
    }

    #[test]
    fn elu_derivative_is_continuous_at_zero_for_unit_alpha() {
        let elu = Activation::elu();
        let left = elu.derivative(0.0);
        let right = elu.derivative(f64::MIN_POSITIVE);
        assert_eq!(left, 1.0);
        assert_eq!((left - right).abs(), 0.0);
    }

    #[test]
    fn linear_model_jacobian_is_weight_matrix() {
        let w = [1.0, 2.0, -1.0, 0.5, 3.0, 0.0];
        let m = MlpModel::new(vec![layer(3, 2, &w, &[0.1, 0.2, 0.3], Activation::Identity)]).unwrap();
        let j = m.model_jacobian(&dvector![0.3, -4.0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(3, 2, &w));
    }

    #[test]
    fn elu_layer_with_positive_preactivation_has_weight_jacobian() {
        let w = [1.0, 0.5, 0.25, 2.0];
        let m = MlpModel::new(vec![layer(2, 2, &w, &[10.0, 10.0], Activation::elu())]).unwrap();
        let j = m.model_jacobian(&dvector![0.1, 0.2]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &w));
    }

    #[test]
    fn chain_mismatch_is_detected() {
        let a = layer(3, 2, &[0.0; 6], &[0.0; 3], Activation::Tanh);
        let b = layer(1, 2, &[0.0; 2], &[0.0], Activation::Tanh);
        assert!(matches!(
            MlpModel::new(vec![a, b]),
            Err(Error::ChainMismatch {
                layer: 1,
                expected: 2,
                found: 3
            })
        ));
    }

    #[test]
    fn forward_rejects_wrong_input_size() {
        let m = MlpModel::new(vec![layer(1, 2, &[1.0, 1.0], &[0.0], Activation::Tanh)]).unwrap();
        assert!(matches!(m.forward(&dvector![1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn duplicated_zero_row_fails_rank_check() {
        let w = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let m = MlpModel::new(vec![layer(3, 2, &w, &[0.0; 3], Activation::elu())]).unwrap();
        let report = m.check_immersion(&[dvector![0.2, 0.3]]).unwrap();
        assert_eq!(report.weight_rank_ok, vec![false]);
        assert_eq!(report.jacobian_rank_ok, vec![false]);
        assert!(!report.all_ok());
    }

    #[test]
    fn identity_network_is_an_immersion() {
        let m = MlpModel::new(vec![layer(2, 2, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], Activation::Identity)]).unwrap();
        assert!(m.check_immersion(&[dvector![0.0, 0.0], dvector![5.0, -1.0]]).unwrap().all_ok());
    }

    #[test]
    fn unknown_activation_and_missing_alpha() {
        let text = r#"{"layers":[{"weights":[[1.0,0.0]],"bias":[0.0],"activation":"relu"}]}"#;
        assert!(matches!(MlpModel::from_json(text), Err(Error::UnknownActivation(_))));
        let text = r#"{"layers":[{"weights":[[1.0,0.0]],"bias":[0.0],"activation":"elu"}]}"#;
        let m = MlpModel::from_json(text).unwrap();
        assert_eq!(m.layers()[0].activation, Activation::Elu { alpha: 1.0 });
    }

    #[test]
    fn mismatched_dimensions_in_document() {
        let text = r#"{"layers":[
            {"weights":[[1.0,0.0],[0.0,1.0]],"bias":[0.0,0.0],"activation":"tanh"},
            {"weights":[[1.0,0.0,2.0]],"bias":[0.0],"activation":"identity"}]}"#;
        assert!(matches!(MlpModel::from_json(text), Err(Error::ChainMismatch { .. })));
        let text = r#"{"layers":[{"weights":[[1.0,0.0]],"bias":[0.0,1.0],"activation":"tanh"}]}"#;
        assert!(matches!(MlpModel::from_json(text), Err(Error::MalformedModel(_))));
        assert!(matches!(MlpModel::from_json("{not json"), Err(Error::MalformedModel(_))));
    }
}
