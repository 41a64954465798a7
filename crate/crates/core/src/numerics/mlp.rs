use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::tape::{sigmoid, softmax_rows, Tape, Var};
use crate::error::{Error, Result};

/// Negative slope of every LeakyReLU in the crate.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Default hidden width of all networks.
pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
    Softmax,
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Fully connected layer; `weight` is `in x out`, `bias` is `1 x out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    /// Uniform initialization in `±1/sqrt(fan_in)`.
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let mut weight = Matrix::zeros(input, output);
        weight
            .data_mut()
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-bound..bound));
        let mut bias = Matrix::zeros(1, output);
        bias.data_mut()
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-bound..bound));
        Self { weight, bias }
    }
}

/// Multi-layer perceptron with LeakyReLU between layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub negative_slope: f64,
    pub output: OutputActivation,
}

impl Mlp {
    /// Builds from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Dense>, negative_slope: f64, output: OutputActivation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        if !(negative_slope > 0.0 && negative_slope < 1.0) {
            return Err(Error::Config(format!("negative slope {negative_slope} outside (0,1)")));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != (1, l.weight.cols()) {
                return Err(Error::shape("Mlp::from_layers", format!("layer {i} bias shape")));
            }
            if i > 0 && layers[i - 1].weight.cols() != l.weight.rows() {
                return Err(Error::shape("Mlp::from_layers", format!("layer {i} input width")));
            }
        }
        Ok(Self {
            layers,
            negative_slope,
            output,
        })
    }

    /// Two fully connected layers: `input -> hidden -> output`.
    pub fn two_layer(
        input: usize,
        hidden: usize,
        output: usize,
        activation: OutputActivation,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            layers: vec![Dense::init(input, hidden, rng), Dense::init(hidden, output, rng)],
            negative_slope: LEAKY_SLOPE,
            output: activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.cols())
    }

    /// Pre-activation output of the final layer.
    pub fn forward_logits(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "mlp_forward",
                format!("input has {} columns, network expects {}", x.cols(), self.input_dim()),
            ));
        }
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.matmul(&layer.weight)?;
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(layer.bias.data()) {
                    *v += b;
                }
            }
            if i < last {
                let slope = self.negative_slope;
                z.data_mut().iter_mut().for_each(|v| *v = leaky_relu(*v, slope));
            }
            h = z;
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.forward_logits(x)?;
        Ok(match self.output {
            OutputActivation::Identity => z,
            OutputActivation::Sigmoid => z.map(sigmoid),
            OutputActivation::Softmax => softmax_rows(&z),
        })
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Registers the parameters on `tape` for a differentiable forward pass.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundMlp<'t> {
        BoundMlp {
            params: self.parameters().into_iter().map(|p| tape.param(p.clone())).collect(),
            negative_slope: self.negative_slope,
            output: self.output,
        }
    }
}

impl Mlp {
    /// Uses existing tape variables as the parameters, in [`parameters`](Self::parameters) order.
    pub fn bind_params<'t>(&self, params: Vec<Var<'t>>) -> Result<BoundMlp<'t>> {
        let expected = self.parameters();
        if params.len() != expected.len()
            || params.iter().zip(&expected).any(|(v, m)| v.shape() != m.shape())
        {
            return Err(Error::shape("bind_params", "parameter shapes do not match the network"));
        }
        Ok(BoundMlp {
            params,
            negative_slope: self.negative_slope,
            output: self.output,
        })
    }
}

/// An [`Mlp`] whose parameters live on a tape.
pub struct BoundMlp<'t> {
    pub params: Vec<Var<'t>>,
    negative_slope: f64,
    output: OutputActivation,
}

impl<'t> BoundMlp<'t> {
    pub fn forward_logits(&self, x: Var<'t>) -> Result<Var<'t>> {
        let mut h = x;
        let layers = self.params.len() / 2;
        for i in 0..layers {
            let (w, b) = (self.params[2 * i], self.params[2 * i + 1]);
            h = h.matmul(w)?.add_row(b)?;
            if i + 1 < layers {
                h = h.leaky_relu(self.negative_slope);
            }
        }
        Ok(h)
    }

    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        let z = self.forward_logits(x)?;
        Ok(match self.output {
            OutputActivation::Identity => z,
            OutputActivation::Sigmoid => z.sigmoid(),
            OutputActivation::Softmax => z.softmax_rows(),
        })
    }

    /// Gradients of the bound parameters, in [`Mlp::parameters`] order.
    pub fn gradients(&self, grads: &super::tape::Gradients) -> Vec<Matrix> {
        self.params.iter().map(|&p| grads.wrt(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn leaky_relu_negative_input() {
        assert_eq!(leaky_relu(-1.0, LEAKY_SLOPE), -0.01);
        assert_eq!(leaky_relu(2.0, LEAKY_SLOPE), 2.0);
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mlp = Mlp::two_layer(3, 4, 2, OutputActivation::Identity, &mut rng);
        for p in mlp.parameters_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        mlp.layers[1].bias = Matrix::row_vector(&[0.5, -1.5]);
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-4.0, 0.0, 9.0]]).unwrap();
        let y = mlp.forward(&x).unwrap();
        for r in 0..2 {
            assert_eq!(y.row(r), &[0.5, -1.5]);
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::two_layer(3, 4, 1, OutputActivation::Identity, &mut rng);
        assert!(matches!(
            mlp.forward(&Matrix::zeros(2, 2)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn from_layers_rejects_broken_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layers = vec![Dense::init(2, 3, &mut rng), Dense::init(4, 1, &mut rng)];
        assert!(Mlp::from_layers(layers, LEAKY_SLOPE, OutputActivation::Identity).is_err());
    }

    #[test]
    fn sigmoid_and_softmax_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::from_rows(&[vec![10.0, -3.0], vec![0.2, 0.1], vec![-50.0, 7.0]]).unwrap();
        let sig = Mlp::two_layer(2, 8, 1, OutputActivation::Sigmoid, &mut rng);
        for v in sig.forward(&x).unwrap().data() {
            assert!(*v > 0.0 && *v < 1.0);
        }
        let soft = Mlp::two_layer(2, 8, 4, OutputActivation::Softmax, &mut rng);
        let p = soft.forward(&x).unwrap();
        for r in 0..3 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
