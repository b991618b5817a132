use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use super::layer::{Layer, LayerState};
use crate::error::{check_len, Error, Result};

/// A named parameter vector owned by one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub values: Vec<f64>,
}

/// A chain of layers, each owning exactly one parameter block.
pub struct Network {
    input_dim: usize,
    layers: Vec<Box<dyn Layer>>,
    params: Vec<ParamBlock>,
}

/// Intermediate results of a forward pass.
pub struct ForwardPass {
    pub output: Vec<f64>,
    states: Vec<LayerState>,
}

impl ForwardPass {
    pub fn states(&self) -> &[LayerState] {
        &self.states
    }
}

impl Network {
    pub fn new(input_dim: usize) -> Self {
        Network {
            input_dim,
            layers: Vec::new(),
            params: Vec::new(),
        }
    }

    /// Appends a layer with its initial parameters.
    pub fn push(&mut self, layer: Box<dyn Layer>, params: Vec<f64>) -> Result<()> {
        check_len("network layer input", self.output_dim(), layer.input_dim())?;
        check_len("network layer params", layer.param_dim(), params.len())?;
        self.params.push(ParamBlock {
            name: layer.name().into(),
            values: params,
        });
        self.layers.push(layer);
        Ok(())
    }

    pub fn with(mut self, layer: impl Layer + 'static, params: Vec<f64>) -> Result<Self> {
        self.push(Box::new(layer), params)?;
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.output_dim())
    }

    pub fn layers(&self) -> &[Box<dyn Layer>] {
        &self.layers
    }

    pub fn params(&self) -> &[ParamBlock] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardPass> {
        check_len("network input", self.input_dim, input.len())?;
        let mut x = input.to_vec();
        let mut states = Vec::with_capacity(self.layers.len());
        for (layer, block) in self.layers.iter().zip(&self.params) {
            let (y, s) = layer.forward(&x, &block.values)?;
            states.push(s);
            x = y;
        }
        Ok(ForwardPass { output: x, states })
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.output)
    }

    /// Gradients of the loss for every parameter block, given `∂L/∂output`.
    pub fn backward(&self, pass: &mut ForwardPass, gout: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_len("network output gradient", self.output_dim(), gout.len())?;
        let mut g = gout.to_vec();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (layer, state) in self.layers.iter().zip(pass.states.iter_mut()).rev() {
            let (gi, gp) = layer.backward(state, &g)?;
            grads.push(gp);
            g = gi;
        }
        grads.reverse();
        if grads.iter().any(|b| !crate::mat::all_finite(b)) {
            return Err(Error::NonFinite { context: "gradient" });
        }
        Ok(grads)
    }
}
