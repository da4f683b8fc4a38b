use sha2::{Digest, Sha256};

use super::{Matrix, Rng};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// One dense layer, `y = act(W x + b)` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.biases.len()
    }
}

/// Parameters of a fully connected network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<DenseLayer>,
}

/// Activations recorded by [`MlpParams::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    preacts: Vec<Matrix>,
    pub output: Matrix,
}

impl ForwardPass {
    pub fn preactivation(&self, layer: usize) -> &Matrix {
        &self.preacts[layer]
    }

    /// Pre-activation of the output layer.
    pub fn logits(&self) -> &Matrix {
        self.preacts.last().expect("network has layers")
    }

    pub fn input(&self) -> &Matrix {
        &self.inputs[0]
    }
}

/// Gradients shaped like an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: MlpGrads,
    /// Gradient with respect to the network input, for chaining networks.
    pub input_grad: Matrix,
}

impl MlpParams {
    /// Randomly initialised network. `activations` has one entry per layer,
    /// i.e. `layer_dims.len() - 1` entries. Weights use a scaled normal with
    /// variance `2 / fan_in`; biases start at zero.
    pub fn new(layer_dims: &[usize], activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        Self::check_dims(layer_dims, activations)?;
        let layers = layer_dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / fan_in as f64).sqrt();
                let weights = rng.gauss_sample(fan_out, fan_in)?.scale(std);
                Ok(DenseLayer {
                    weights,
                    biases: vec![0.0; fan_out],
                    activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MlpParams { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::invalid(format!(
                "a network needs at least two layers, got {}",
                layers.len()
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.biases.len() != l.out_dim() {
                return Err(Error::shape(format!(
                    "layer {i}: {} biases for {} outputs",
                    l.biases.len(),
                    l.out_dim()
                )));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::shape(format!(
                    "layer {i} expects {} inputs but layer {} emits {}",
                    l.in_dim(),
                    i - 1,
                    layers[i - 1].out_dim()
                )));
            }
            if !l.weights.is_finite() || l.biases.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        Ok(MlpParams { layers })
    }

    fn check_dims(layer_dims: &[usize], activations: &[Activation]) -> Result<()> {
        if layer_dims.len() < 3 {
            return Err(Error::invalid(format!(
                "a network needs at least two layers (three dims), got dims {layer_dims:?}"
            )));
        }
        if layer_dims.contains(&0) {
            return Err(Error::invalid(format!(
                "zero-width layer in {layer_dims:?}"
            )));
        }
        if activations.len() != layer_dims.len() - 1 {
            return Err(Error::invalid(format!(
                "{} activations for {} layers",
                activations.len(),
                layer_dims.len() - 1
            )));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim()];
        dims.extend(self.layers.iter().map(DenseLayer::out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(DenseLayer::out_dim).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.shape() == b.weights.shape())
    }

    pub fn forward(&self, input: &Matrix) -> Result<ForwardPass> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} features, network expects {}",
                input.cols(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for layer in &self.layers {
            let mut z = current.matmul_transposed(&layer.weights)?;
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.biases) {
                    *v += b;
                }
            }
            let a = z.map(|v| layer.activation.apply(v));
            inputs.push(current);
            preacts.push(z);
            current = a;
        }
        Ok(ForwardPass {
            inputs,
            preacts,
            output: current,
        })
    }

    /// Forward pass without caching.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        Ok(self.forward(input)?.output)
    }

    /// Backpropagates `upstream = ∂L/∂output` through the cached pass.
    pub fn backward(&self, pass: &ForwardPass, upstream: &Matrix) -> Result<Backward> {
        let last = self.layers.len() - 1;
        let z = &pass.preacts[last];
        if upstream.shape() != z.shape() {
            return Err(Error::shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                z.shape()
            )));
        }
        let act = self.layers[last].activation;
        let delta = upstream.zip_with(z, |g, x| g * act.derivative(x))?;
        self.backward_from_logits(pass, &delta)
    }

    /// Backpropagates a gradient given with respect to the output layer's
    /// pre-activation. Loss terms written in terms of logits (log-sigmoid
    /// and friends) enter here, avoiding the division by the output.
    pub fn backward_from_logits(
        &self,
        pass: &ForwardPass,
        logit_grad: &Matrix,
    ) -> Result<Backward> {
        if pass.preacts.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "forward pass has {} layers, network has {}",
                pass.preacts.len(),
                self.layers.len()
            )));
        }
        let last = self.layers.len() - 1;
        if logit_grad.shape() != pass.preacts[last].shape() {
            return Err(Error::shape(format!(
                "logit gradient {:?} does not match output {:?}",
                logit_grad.shape(),
                pass.preacts[last].shape()
            )));
        }
        let mut weights = vec![Matrix::zeros(0, 0); self.layers.len()];
        let mut biases = vec![Vec::new(); self.layers.len()];
        let mut delta = logit_grad.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if pass.inputs[l].cols() != layer.in_dim() {
                return Err(Error::shape(format!(
                    "cached input of layer {l} has wrong width"
                )));
            }
            weights[l] = delta.transposed_matmul(&pass.inputs[l])?;
            biases[l] = delta.column_sums();
            let upstream = delta.matmul(&layer.weights)?;
            delta = if l > 0 {
                let prev_act = self.layers[l - 1].activation;
                upstream.zip_with(&pass.preacts[l - 1], |g, x| g * prev_act.derivative(x))?
            } else {
                upstream
            };
        }
        Ok(Backward {
            grads: MlpGrads { weights, biases },
            input_grad: delta,
        })
    }

    /// All parameters flattened layer by layer, weights (row-major) then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.as_slice().len();
            l.weights
                .as_mut_slice()
                .copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// SHA-256 over the little-endian bytes of one layer, truncated to 64 bits.
    pub fn layer_checksum(&self, layer: usize) -> u64 {
        let mut h = Sha256::new();
        hash_layer(&mut h, &self.layers[layer]);
        truncate_digest(&h.finalize())
    }

    pub fn checksum(&self) -> u64 {
        let mut h = Sha256::new();
        for l in &self.layers {
            hash_layer(&mut h, l);
        }
        truncate_digest(&h.finalize())
    }
}

fn hash_layer(h: &mut Sha256, layer: &DenseLayer) {
    h.update((layer.out_dim() as u64).to_le_bytes());
    h.update((layer.in_dim() as u64).to_le_bytes());
    for b in layer.weights.le_bytes() {
        h.update(b);
    }
    for b in &layer.biases {
        h.update(b.to_le_bytes());
    }
}

fn truncate_digest(d: &[u8]) -> u64 {
    u64::from_le_bytes(d[..8].try_into().expect("sha256 digest is 32 bytes"))
}

impl MlpGrads {
    pub fn zeros_like(net: &MlpParams) -> Self {
        MlpGrads {
            weights: net
                .layers()
                .iter()
                .map(|l| Matrix::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            biases: net
                .layers()
                .iter()
                .map(|l| vec![0.0; l.out_dim()])
                .collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn matches(&self, net: &MlpParams) -> bool {
        self.weights.len() == net.num_layers()
            && self
                .weights
                .iter()
                .zip(&self.biases)
                .zip(net.layers())
                .all(|((w, b), l)| w.shape() == l.weights.shape() && b.len() == l.biases.len())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &MlpGrads, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += scale * y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            for x in w.as_mut_slice() {
                *x *= s;
            }
        }
        for b in &mut self.biases {
            for x in b.iter_mut() {
                *x *= s;
            }
        }
    }

    /// Zeroes the gradients of every layer flagged `true`.
    pub fn zero_layers(&mut self, frozen: &[bool]) {
        for (l, _) in frozen.iter().enumerate().filter(|(_, &f)| f) {
            if let Some(w) = self.weights.get_mut(l) {
                w.as_mut_slice().fill(0.0);
            }
            if let Some(b) = self.biases.get_mut(l) {
                b.fill(0.0);
            }
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn layer_is_zero(&self, layer: usize) -> bool {
        self.weights[layer].as_slice().iter().all(|&v| v == 0.0)
            && self.biases[layer].iter().all(|&v| v == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(weights: Vec<f64>, rows: usize, cols: usize, biases: Vec<f64>) -> DenseLayer {
        DenseLayer {
            weights: Matrix::from_vec(rows, cols, weights).unwrap(),
            biases,
            activation: Activation::Identity,
        }
    }

    #[test]
    fn identity_network_is_identity() {
        let net = MlpParams::from_layers(vec![
            linear(vec![1.0, 0.0, 0.0, 1.0], 2, 2, vec![0.0, 0.0]),
            linear(vec![1.0, 0.0, 0.0, 1.0], 2, 2, vec![0.0, 0.0]),
        ])
        .unwrap();
        let x = Matrix::from_rows(&[[0.3, -1.5], [2.0, 7.0]], 2).unwrap();
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn scalar_affine_layer() {
        let net = MlpParams::from_layers(vec![
            linear(vec![2.0], 1, 1, vec![1.0]),
            linear(vec![1.0], 1, 1, vec![0.0]),
        ])
        .unwrap();
        let out = net
            .predict(&Matrix::from_vec(1, 1, vec![3.0]).unwrap())
            .unwrap();
        assert_eq!(out.as_slice(), &[7.0]);
    }

    #[test]
    fn linear_layer_closed_form_gradient() {
        // y = W x + b through an identity second layer: dW = g xᵀ, db = g.
        let net = MlpParams::from_layers(vec![
            linear(vec![0.5, -1.0, 2.0, 0.25], 2, 2, vec![0.1, -0.2]),
            linear(vec![1.0, 0.0, 0.0, 1.0], 2, 2, vec![0.0, 0.0]),
        ])
        .unwrap();
        let x = Matrix::from_vec(1, 2, vec![3.0, -4.0]).unwrap();
        let g = Matrix::from_vec(1, 2, vec![0.7, -1.3]).unwrap();
        let pass = net.forward(&x).unwrap();
        let back = net.backward(&pass, &g).unwrap();
        let dw = &back.grads.weights[0];
        assert_eq!(
            dw.as_slice(),
            &[0.7 * 3.0, 0.7 * -4.0, -1.3 * 3.0, -1.3 * -4.0]
        );
        assert_eq!(back.grads.biases[0], vec![0.7, -1.3]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Rng::new(5);
        let net = MlpParams::new(
            &[3, 6, 2],
            &[Activation::LeakyRelu(0.2), Activation::Sigmoid],
            &mut rng,
        )
        .unwrap();
        let x = rng.gauss_sample(4, 3).unwrap();
        let pass = net.forward(&x).unwrap();
        let back = net.backward(&pass, &Matrix::zeros(4, 2)).unwrap();
        assert!(back.grads.flat().iter().all(|&v| v == 0.0));
        assert!(back.input_grad.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = Rng::new(1);
        let net = MlpParams::new(
            &[3, 4, 1],
            &[Activation::Tanh, Activation::Identity],
            &mut rng,
        )
        .unwrap();
        assert!(matches!(
            net.forward(&Matrix::zeros(2, 5)),
            Err(Error::Shape(_))
        ));
        let pass = net.forward(&Matrix::zeros(2, 3)).unwrap();
        assert!(net.backward(&pass, &Matrix::zeros(3, 1)).is_err());
        assert!(MlpParams::new(&[3, 1], &[Activation::Identity], &mut rng).is_err());
        assert!(MlpParams::new(&[3, 4, 1], &[Activation::Identity], &mut rng).is_err());
    }

    #[test]
    fn flat_params_roundtrip_and_checksums() {
        let mut rng = Rng::new(3);
        let mut net = MlpParams::new(
            &[2, 5, 1],
            &[Activation::Tanh, Activation::Sigmoid],
            &mut rng,
        )
        .unwrap();
        let flat = net.flat_params();
        assert_eq!(flat.len(), net.param_count());
        let before = net.checksum();
        let l1 = net.layer_checksum(1);
        let mut bumped = flat.clone();
        bumped[0] += 1e-12;
        net.set_flat_params(&bumped).unwrap();
        assert_ne!(net.checksum(), before);
        assert_eq!(net.layer_checksum(1), l1);
        net.set_flat_params(&flat).unwrap();
        assert_eq!(net.checksum(), before);
    }

    #[test]
    fn stable_log_sigmoid_helpers() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus(800.0).is_finite());
        assert_eq!(softplus(-800.0), 0.0);
    }
}
