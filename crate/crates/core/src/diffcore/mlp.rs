//! Fully connected stacks on top of the tape.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{kernels, Activation, Graph, Var};
use super::tensor::{ParamGroup, Tensor};
use crate::error::{Error, Result};

/// Layer widths `[input, hidden..., output]` plus activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(
        layer_widths: Vec<usize>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let spec = MlpSpec {
            layer_widths,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least input and output widths, got {:?}",
                self.layer_widths
            )));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::Config(format!(
                "MLP widths must be positive, got {:?}",
                self.layer_widths
            )));
        }
        if self.hidden_activation == Activation::Softmax {
            return Err(Error::Config("softmax is only valid as an output activation".into()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated widths")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn weight_key(prefix: &str, layer: usize) -> String {
        format!("{prefix}.{layer}.weight")
    }

    pub fn bias_key(prefix: &str, layer: usize) -> String {
        format!("{prefix}.{layer}.bias")
    }

    /// Adds freshly initialized `weight`/`bias` entries under `prefix`.
    /// Weights and biases are uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init_params<R: Rng + ?Sized>(
        &self,
        group: &mut ParamGroup,
        prefix: &str,
        rng: &mut R,
    ) -> Result<()> {
        self.validate()?;
        for layer in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.layer_widths[layer], self.layer_widths[layer + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
            let b: Vec<f64> = (0..fan_out).map(|_| dist.sample(rng)).collect();
            group.insert(Self::weight_key(prefix, layer), Tensor::matrix(fan_out, fan_in, w)?)?;
            group.insert(Self::bias_key(prefix, layer), Tensor::vector(b))?;
        }
        Ok(())
    }

    fn check_layer(&self, params: &ParamGroup, prefix: &str, layer: usize) -> Result<()> {
        let (fan_in, fan_out) = (self.layer_widths[layer], self.layer_widths[layer + 1]);
        let w = params.require(&Self::weight_key(prefix, layer))?;
        let b = params.require(&Self::bias_key(prefix, layer))?;
        if w.shape() != [fan_out, fan_in] || b.shape() != [fan_out] {
            return Err(Error::Dimension(format!(
                "layer `{prefix}.{layer}` expects weight [{fan_out}, {fan_in}] and bias [{fan_out}], found {:?} and {:?}",
                w.shape(),
                b.shape()
            )));
        }
        Ok(())
    }

    /// Recorded forward pass over a `[n, input_width]` matrix.
    pub fn forward(
        &self,
        graph: &mut Graph,
        params: &ParamGroup,
        prefix: &str,
        input: Var,
    ) -> Result<Var> {
        let got = graph.value(input).last_dim();
        if got != self.input_width() {
            return Err(Error::Dimension(format!(
                "layer `{prefix}.0` expects input width {}, got {got}",
                self.input_width()
            )));
        }
        let mut h = input;
        for layer in 0..self.num_layers() {
            self.check_layer(params, prefix, layer)?;
            let w = graph.param(params, &Self::weight_key(prefix, layer))?;
            let b = graph.param(params, &Self::bias_key(prefix, layer))?;
            let z = graph.linear(h, w, b)?;
            h = graph.activate(z, self.activation_of(layer));
        }
        Ok(h)
    }

    /// Graph-free forward pass on one row. Bit-identical to [`MlpSpec::forward`].
    pub fn eval(&self, params: &ParamGroup, prefix: &str, input: &[f64]) -> Result<Vec<f64>> {
        let bound = self.bind(params, prefix)?;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        bound.eval_into(input, &mut a, &mut b)?;
        Ok(a)
    }

    /// Resolves every layer's weights once for repeated graph-free passes.
    pub fn bind<'a>(&self, params: &'a ParamGroup, prefix: &str) -> Result<BoundMlp<'a>> {
        let mut layers = Vec::with_capacity(self.num_layers());
        for layer in 0..self.num_layers() {
            self.check_layer(params, prefix, layer)?;
            let w = params.require(&Self::weight_key(prefix, layer))?;
            let b = params.require(&Self::bias_key(prefix, layer))?;
            layers.push(BoundLayer {
                weight: w.values(),
                bias: b.values(),
                activation: self.activation_of(layer),
            });
        }
        Ok(BoundMlp {
            prefix: prefix.to_string(),
            input_width: self.input_width(),
            layers,
        })
    }
}

struct BoundLayer<'a> {
    weight: &'a [f64],
    bias: &'a [f64],
    activation: Activation,
}

/// An MLP with its parameters looked up, for tight evaluation loops.
pub struct BoundMlp<'a> {
    prefix: String,
    input_width: usize,
    layers: Vec<BoundLayer<'a>>,
}

impl BoundMlp<'_> {
    /// Evaluates one row; the output is left in `out`, `scratch` is reused.
    pub fn eval_into(&self, input: &[f64], out: &mut Vec<f64>, scratch: &mut Vec<f64>) -> Result<()> {
        if input.len() != self.input_width {
            return Err(Error::Dimension(format!(
                "layer `{}.0` expects input width {}, got {}",
                self.prefix,
                self.input_width,
                input.len()
            )));
        }
        out.clear();
        out.extend_from_slice(input);
        for l in &self.layers {
            scratch.clear();
            scratch.resize(l.bias.len(), 0.0);
            kernels::linear_row(out, l.weight, l.bias, scratch);
            kernels::activate_row(l.activation, scratch);
            std::mem::swap(out, scratch);
        }
        Ok(())
    }
}

/// Records a forward pass of `spec` over `input` and returns the output tensor.
pub fn mlp_forward(
    graph: &mut Graph,
    spec: &MlpSpec,
    params: &ParamGroup,
    prefix: &str,
    input: &Tensor,
) -> Result<Var> {
    let x = graph.constant(input.clone());
    spec.forward(graph, params, prefix, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = MlpSpec::new(vec![2, 2], Activation::Relu, Activation::Identity).unwrap();
        let mut p = ParamGroup::new("m");
        p.insert("l.0.weight", Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap())
            .unwrap();
        p.insert("l.0.bias", Tensor::vector(vec![0.0, 0.0])).unwrap();
        let mut g = Graph::new();
        let input = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let out = mlp_forward(&mut g, &spec, &p, "l", &input).unwrap();
        assert_eq!(g.value(out).values(), &[1.0, 2.0]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let spec = MlpSpec::new(vec![3, 1], Activation::Relu, Activation::Sigmoid).unwrap();
        let mut p = ParamGroup::new("m");
        p.insert("l.0.weight", Tensor::zeros(&[1, 3])).unwrap();
        p.insert("l.0.bias", Tensor::zeros(&[1])).unwrap();
        assert_eq!(spec.eval(&p, "l", &[0.3, -2.0, 7.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn width_mismatch_names_the_layer() {
        let spec = MlpSpec::new(vec![3, 4, 1], Activation::Relu, Activation::Identity).unwrap();
        let mut p = ParamGroup::new("m");
        spec.init_params(&mut p, "enc", &mut seeded(1)).unwrap();
        let err = spec.eval(&p, "enc", &[1.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("enc.0"), "{err}");

        let mut bad = ParamGroup::new("m");
        let other = MlpSpec::new(vec![3, 5, 1], Activation::Relu, Activation::Identity).unwrap();
        other.init_params(&mut bad, "enc", &mut seeded(1)).unwrap();
        let err = spec.eval(&bad, "enc", &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(err.to_string().contains("enc.0"), "{err}");
    }

    #[test]
    fn fewer_than_two_widths_is_rejected() {
        assert!(MlpSpec::new(vec![3], Activation::Relu, Activation::Identity).is_err());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let spec = MlpSpec::new(vec![16, 4], Activation::Relu, Activation::Identity).unwrap();
        let mut p = ParamGroup::new("m");
        spec.init_params(&mut p, "l", &mut seeded(9)).unwrap();
        for (_, t) in p.iter() {
            assert!(t.values().iter().all(|v| v.abs() <= 0.25));
        }
    }
}
