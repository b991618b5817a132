use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{record, Recording, Tape, Var};
use crate::error::{check_len, Result};
use crate::implicit::{check_wellposed, ImplicitLayer, SolvedPoint, WellPosedTol, WellPosedness};

/// What a layer keeps between its forward and backward pass.
#[derive(Clone, Debug)]
pub enum LayerState {
    Recorded(Recording),
    Solved(SolvedPoint),
}

/// A network stage mapping `(input, params) ↦ output`.
pub trait Layer {
    fn name(&self) -> &str;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Length of this layer's parameter block (possibly zero).
    fn param_dim(&self) -> usize;
    fn forward(&self, input: &[f64], params: &[f64]) -> Result<(Vec<f64>, LayerState)>;
    /// Returns `(∂L/∂input, ∂L/∂params)` given `∂L/∂output`.
    fn backward(&self, state: &mut LayerState, gout: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
    /// Well-posedness of the last forward point, for implicit layers.
    fn diagnose(&self, _state: &LayerState) -> Option<WellPosedness> {
        None
    }
}

type TracedFn = dyn Fn(&mut Tape, Var, Var) -> Result<Var>;

/// A layer written directly with tape primitives; differentiated by
/// reverse-mode sweeps.
pub struct ExplicitLayer {
    name: String,
    input_dim: usize,
    output_dim: usize,
    param_dim: usize,
    f: Box<TracedFn>,
}

impl ExplicitLayer {
    pub fn new<F>(name: &str, input_dim: usize, output_dim: usize, param_dim: usize, f: F) -> Self
    where
        F: Fn(&mut Tape, Var, Var) -> Result<Var> + 'static,
    {
        ExplicitLayer {
            name: name.into(),
            input_dim,
            output_dim,
            param_dim,
            f: Box::new(f),
        }
    }
}

impl Layer for ExplicitLayer {
    fn name(&self) -> &str {
        &self.name
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn forward(&self, input: &[f64], params: &[f64]) -> Result<(Vec<f64>, LayerState)> {
        check_len("layer input", self.input_dim, input.len())?;
        check_len("layer params", self.param_dim, params.len())?;
        let rec = record(&[input, params], |t, v| (self.f)(t, v[0], v[1]))?;
        check_len("layer output", self.output_dim, rec.output_value().len())?;
        Ok((rec.output_value().to_vec(), LayerState::Recorded(rec)))
    }

    fn backward(&self, state: &mut LayerState, gout: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let LayerState::Recorded(rec) = state else {
            return Err(crate::Error::InvalidArgument(
                "explicit layer given a solved state".into(),
            ));
        };
        let mut g = rec.vjp(gout)?;
        let gp = g.pop().expect("two inputs");
        let gi = g.pop().expect("two inputs");
        Ok((gi, gp))
    }
}

/// Adapts an [`ImplicitLayer`] whose residual input is the concatenation
/// `(previous output, parameters)`.
pub struct ImplicitAdapter {
    name: String,
    input_dim: usize,
    param_dim: usize,
    layer: ImplicitLayer,
    wellposed: WellPosedTol,
}

impl ImplicitAdapter {
    pub fn new(name: &str, input_dim: usize, layer: ImplicitLayer) -> Result<Self> {
        let total = layer.residual().input_dim();
        if total < input_dim {
            return Err(crate::Error::ShapeMismatch {
                op: "implicit adapter",
                expected: input_dim,
                found: total,
            });
        }
        Ok(ImplicitAdapter {
            name: name.into(),
            input_dim,
            param_dim: total - input_dim,
            wellposed: WellPosedTol {
                residual: layer.forward_tol(),
                ..WellPosedTol::default()
            },
            layer,
        })
    }

    pub fn inner(&self) -> &ImplicitLayer {
        &self.layer
    }
}

impl Layer for ImplicitAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.layer.exposed().len()
    }

    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn forward(&self, input: &[f64], params: &[f64]) -> Result<(Vec<f64>, LayerState)> {
        check_len("layer input", self.input_dim, input.len())?;
        check_len("layer params", self.param_dim, params.len())?;
        let mut x = input.to_vec();
        x.extend_from_slice(params);
        let p = self.layer.forward(&x)?;
        Ok((self.layer.output(&p).to_vec(), LayerState::Solved(p)))
    }

    fn backward(&self, state: &mut LayerState, gout: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let LayerState::Solved(p) = state else {
            return Err(crate::Error::InvalidArgument(
                "implicit layer given a recorded state".into(),
            ));
        };
        let mut gx = self.layer.backward(p, gout)?;
        let gp = gx.split_off(self.input_dim);
        Ok((gx, gp))
    }

    fn diagnose(&self, state: &LayerState) -> Option<WellPosedness> {
        match state {
            LayerState::Solved(p) => Some(check_wellposed(self.layer.residual(), p, self.wellposed)),
            LayerState::Recorded(_) => None,
        }
    }
}
