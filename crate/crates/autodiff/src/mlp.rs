//! Fully connected networks.

use rand::Rng;

use crate::error::{AdError, Result};
use crate::graph::{Gradients, Graph, NodeId};
use crate::tensor::Tensor;

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "softplus" => Some(Activation::Softplus),
            _ => None,
        }
    }
}

/// `y = x·weight + bias` with `weight: in×out`, `bias: 1×out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

impl MlpParams {
    /// Uniform(±1/√fan_in) initialisation for weights and biases.
    pub fn new<R: Rng + ?Sized>(input: usize, widths: &[usize], activation: Activation, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input;
        for &w in widths {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
            let weight = Tensor::new(fan_in, w, draw(fan_in * w)).expect("shape");
            let bias = Tensor::new(1, w, draw(w)).expect("shape");
            layers.push(Layer { weight, bias });
            fan_in = w;
        }
        MlpParams { layers, activation }
    }

    /// Builds from explicit layers, checking that consecutive shapes compose.
    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(AdError::Config("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != [1, l.weight.cols()] {
                return Err(AdError::Config(format!("layer {i}: bias shape {:?}", l.bias.shape())));
            }
            if i > 0 && layers[i - 1].weight.cols() != l.weight.rows() {
                return Err(AdError::Config(format!("layer {i}: input width does not match previous output")));
            }
        }
        Ok(MlpParams { layers, activation })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").weight.cols()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.weight.cols()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Weights and biases in a fixed order: `w0, b0, w1, b1, ...`.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Dotted names matching `tensors()`, e.g. `actor.layer0.weight`.
    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("{prefix}.layer{i}.weight"), &l.weight),
                    (format!("{prefix}.layer{i}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    /// Records the parameters on `g`; `trainable = false` records constants.
    pub fn register(&self, g: &mut Graph, trainable: bool) -> MlpNodes {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (g.leaf(l.weight.clone()), g.leaf(l.bias.clone()))
                } else {
                    (g.constant(l.weight.clone()), g.constant(l.bias.clone()))
                }
            })
            .collect();
        MlpNodes {
            layers,
            activation: self.activation,
        }
    }

    /// Forward pass on plain tensors, no graph.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x.cols())?;
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = h.matmul(&l.weight)?;
            let cols = z.cols();
            for (k, v) in z.data_mut().iter_mut().enumerate() {
                *v += l.bias.data()[k % cols];
            }
            if i < last {
                z = match self.activation {
                    Activation::Tanh => z.map(f64::tanh),
                    Activation::Softplus => z.map(crate::graph::softplus),
                };
            }
            if !z.is_finite() {
                return Err(AdError::NonFiniteLayer { layer: i });
            }
            h = z;
        }
        Ok(h)
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.input_width() {
            return Err(AdError::Config(format!(
                "network expects input width {}, got {width}",
                self.input_width()
            )));
        }
        Ok(())
    }
}

/// Parameters of one network as recorded on a particular graph.
#[derive(Clone, Debug)]
pub struct MlpNodes {
    pub layers: Vec<(NodeId, NodeId)>,
    pub activation: Activation,
}

impl MlpNodes {
    pub fn input_width(&self, g: &Graph) -> usize {
        g.shape(self.layers[0].0)[0]
    }

    /// Node ids in the same order as `MlpParams::tensors`.
    pub fn ids(&self) -> Vec<NodeId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn grads(&self, g: &Graph, grads: &Gradients) -> Vec<Tensor> {
        self.ids().into_iter().map(|id| grads.get_or_zeros(g, id)).collect()
    }
}

/// Records a forward pass of `x` (`rows×in`) through the network.
pub fn mlp_forward(g: &mut Graph, net: &MlpNodes, x: NodeId) -> Result<NodeId> {
    let expected = net.input_width(g);
    if g.shape(x)[1] != expected {
        return Err(AdError::Config(format!(
            "network expects input width {expected}, got {}",
            g.shape(x)[1]
        )));
    }
    let mut h = x;
    let last = net.layers.len() - 1;
    for (i, &(w, b)) in net.layers.iter().enumerate() {
        let z = g.matmul(h, w);
        let z = g.add(z, b);
        h = if i < last {
            match net.activation {
                Activation::Tanh => g.tanh(z),
                Activation::Softplus => g.softplus(z),
            }
        } else {
            z
        };
        if !g.value(h).is_finite() {
            return Err(AdError::NonFiniteLayer { layer: i });
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = MlpParams::new(3, &[4, 2], Activation::Tanh, &mut rng);
        for l in &mut p.layers {
            l.weight = Tensor::zeros(l.weight.rows(), l.weight.cols());
        }
        p.layers[1].bias = Tensor::row(&[0.5, -2.0]);
        let mut g = Graph::new();
        let nodes = p.register(&mut g, true);
        let x = g.constant(Tensor::row(&[1.0, -7.0, 3.0]));
        let y = mlp_forward(&mut g, &nodes, x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, -2.0]);
    }

    #[test]
    fn identity_single_layer() {
        let p = MlpParams::from_layers(
            vec![Layer {
                weight: Tensor::identity(3),
                bias: Tensor::zeros(1, 3),
            }],
            Activation::Tanh,
        )
        .unwrap();
        let x = Tensor::row(&[0.1, -4.0, 9.0]);
        assert_eq!(p.eval(&x).unwrap(), x);
    }

    #[test]
    fn width_mismatch_is_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = MlpParams::new(3, &[4, 1], Activation::Softplus, &mut rng);
        let mut g = Graph::new();
        let nodes = p.register(&mut g, false);
        let x = g.constant(Tensor::row(&[1.0, 2.0]));
        assert!(matches!(mlp_forward(&mut g, &nodes, x), Err(AdError::Config(_))));
    }

    #[test]
    fn non_finite_names_layer() {
        let p = MlpParams::from_layers(
            vec![
                Layer {
                    weight: Tensor::identity(1),
                    bias: Tensor::zeros(1, 1),
                },
                Layer {
                    weight: Tensor::scalar(f64::INFINITY),
                    bias: Tensor::zeros(1, 1),
                },
            ],
            Activation::Tanh,
        )
        .unwrap();
        let mut g = Graph::new();
        let nodes = p.register(&mut g, true);
        let x = g.constant(Tensor::scalar(0.0));
        // tanh(0) * inf = NaN at layer 1
        assert_eq!(
            mlp_forward(&mut g, &nodes, x).unwrap_err(),
            AdError::NonFiniteLayer { layer: 1 }
        );
    }
}
