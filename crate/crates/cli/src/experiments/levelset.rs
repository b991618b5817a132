//! Fits the zero contour of a sampled field to a target circle by gradient
//! descent on the grid values.

use anyhow::Result;
use implicit_core::implicit::{check_wellposed, WellPosedTol, WellPosedness};
use implicit_core::layers::levelset::{levelset_forward, levelset_layer, EdgeDir, LevelSetGrid2D, LevelSetResidual};
use implicit_core::train::{Adam, Layer, LayerState, Loss, Network, Optimizer, RunLog, Split, Target};
use implicit_core::{Error, Result as CoreResult};

use super::{Outcome, Table};
use crate::config::ExperimentConfig;

pub const SPACING: f64 = 0.1;
pub const RADIUS: f64 = 0.4;
/// Raster resolution per grid cell for the IOU estimate.
const RASTER: usize = 8;

/// The circle centre at the middle of a `size × size` grid.
pub fn centre(size: usize) -> (f64, f64) {
    let m = (size - 1) as f64 * SPACING / 2.0;
    (m, m)
}

/// An elliptical approximate distance field, offset from the target.
pub fn initial_field(size: usize) -> Vec<f64> {
    let (cx, cy) = centre(size);
    let (ex, ey, ax, ay) = (cx - 0.1, cy + 0.05, 0.45, 0.3);
    let g = LevelSetGrid2D::from_fn(size, size, SPACING, |x, y| {
        ((((x - ex) / ax).powi(2) + ((y - ey) / ay).powi(2)).sqrt() - 1.0) * ax.min(ay)
    })
    .expect("valid grid");
    g.values().to_vec()
}

/// Mean over contour vertices of `(‖p − c‖² − r²)²`. The grid values are
/// this layer's parameters; it takes no input.
pub struct ContourFit {
    pub size: usize,
    pub forward_tol: f64,
}

impl ContourFit {
    fn grid(&self, values: &[f64]) -> CoreResult<LevelSetGrid2D> {
        LevelSetGrid2D::new(self.size, self.size, values.to_vec(), SPACING)
    }

    /// Objective and its gradient with respect to the crossing fractions.
    fn objective(&self, g: &LevelSetGrid2D, t: &[f64]) -> CoreResult<(f64, Vec<f64>)> {
        let contour = levelset_forward(g)?;
        let (cx, cy) = centre(self.size);
        let k = contour.vertices.len() as f64;
        let mut loss = 0.0;
        let mut grad = Vec::with_capacity(t.len());
        for (v, &tv) in contour.vertices.iter().zip(t) {
            let mut v = *v;
            v.t = tv;
            let (x, y) = v.position(SPACING);
            let e = (x - cx).powi(2) + (y - cy).powi(2) - RADIUS * RADIUS;
            loss += e * e / k;
            let d = match v.edge.dir {
                EdgeDir::Horizontal => 2.0 * (x - cx),
                EdgeDir::Vertical => 2.0 * (y - cy),
            };
            grad.push(2.0 * e * d * SPACING / k);
        }
        Ok((loss, grad))
    }
}

impl Layer for ContourFit {
    fn name(&self) -> &str {
        "field"
    }

    fn input_dim(&self) -> usize {
        0
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        self.size * self.size
    }

    fn forward(&self, _input: &[f64], params: &[f64]) -> CoreResult<(Vec<f64>, LayerState)> {
        let g = self.grid(params)?;
        let contour = levelset_forward(&g)?;
        let layer = levelset_layer(&g, &contour, self.forward_tol);
        let p = layer.forward(params)?;
        let (loss, _) = self.objective(&g, &p.y)?;
        Ok((vec![loss], LayerState::Solved(p)))
    }

    fn backward(&self, state: &mut LayerState, gout: &[f64]) -> CoreResult<(Vec<f64>, Vec<f64>)> {
        let LayerState::Solved(p) = state else {
            return Err(Error::InvalidArgument("contour fit given a recorded state".into()));
        };
        let g = self.grid(&p.x)?;
        let contour = levelset_forward(&g)?;
        let (_, mut gt) = self.objective(&g, &p.y)?;
        gt.iter_mut().for_each(|v| *v *= gout[0]);
        let gphi = levelset_layer(&g, &contour, self.forward_tol).backward(p, &gt)?;
        Ok((vec![], gphi))
    }

    fn diagnose(&self, state: &LayerState) -> Option<WellPosedness> {
        let LayerState::Solved(p) = state else {
            return None;
        };
        let g = self.grid(&p.x).ok()?;
        let contour = levelset_forward(&g).ok()?;
        let tol = WellPosedTol {
            residual: self.forward_tol,
            ..WellPosedTol::default()
        };
        Some(check_wellposed(&LevelSetResidual::new(&g, &contour.edges()), p, tol))
    }
}

/// Uses a scalar network output as the loss itself.
pub struct Objective;

impl Loss for Objective {
    fn eval(&self, output: &[f64], _: &Target) -> CoreResult<(f64, Vec<f64>)> {
        if output.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "objective",
                expected: 1,
                found: output.len(),
            });
        }
        Ok((output[0], vec![1.0]))
    }
}

pub fn network(size: usize, forward_tol: f64) -> CoreResult<Network> {
    Network::new(0).with(ContourFit { size, forward_tol }, initial_field(size))
}

/// Bilinear interpolation of the field at `(x, y)`.
fn bilinear(g: &LevelSetGrid2D, x: f64, y: f64) -> f64 {
    let h = g.spacing();
    let c = ((x / h).floor() as usize).min(g.cols() - 2);
    let r = ((y / h).floor() as usize).min(g.rows() - 2);
    let (u, v) = (x / h - c as f64, y / h - r as f64);
    let top = g.value(r, c) * (1.0 - u) + g.value(r, c + 1) * u;
    let bottom = g.value(r + 1, c) * (1.0 - u) + g.value(r + 1, c + 1) * u;
    top * (1.0 - v) + bottom * v
}

/// IOU of `{φ < 0}` under bilinear interpolation against the target disc,
/// on a raster of cell centres.
pub fn disc_iou(values: &[f64], size: usize) -> CoreResult<f64> {
    let g = LevelSetGrid2D::new(size, size, values.to_vec(), SPACING)?;
    let (cx, cy) = centre(size);
    let steps = (size - 1) * RASTER;
    let d = SPACING / RASTER as f64;
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..steps {
        for j in 0..steps {
            let (x, y) = ((j as f64 + 0.5) * d, (i as f64 + 0.5) * d);
            let inside = bilinear(&g, x, y) < 0.0;
            let disc = (x - cx).powi(2) + (y - cy).powi(2) < RADIUS * RADIUS;
            inter += (inside && disc) as usize;
            union += (inside || disc) as usize;
        }
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Largest `|‖p − c‖ − r|` over the contour vertices.
pub fn max_radial_error(values: &[f64], size: usize) -> CoreResult<f64> {
    let g = LevelSetGrid2D::new(size, size, values.to_vec(), SPACING)?;
    let (cx, cy) = centre(size);
    let contour = levelset_forward(&g)?;
    Ok(contour
        .vertices
        .iter()
        .map(|v| {
            let (x, y) = v.position(SPACING);
            ((x - cx).hypot(y - cy) - RADIUS).abs()
        })
        .fold(0.0, f64::max))
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    if cfg.size < 3 || (cfg.size - 1) as f64 * SPACING < 2.0 * RADIUS {
        anyhow::bail!("grid of side {} cannot hold the target circle", cfg.size);
    }
    let mut net = network(cfg.size, cfg.forward_tol)?;
    let mut opt = Adam::new(cfg.lr);
    let mut log = RunLog::new();
    let target = Target::Vector(vec![]);
    let initial_iou = disc_iou(&net.params()[0].values, cfg.size)?;
    let mut rows = Vec::with_capacity(cfg.epochs);
    let mut loss = f64::NAN;
    for it in 0..cfg.epochs {
        let mut pass = net.forward(&[])?;
        let (l, g) = Objective.eval(&pass.output, &target)?;
        let grads = net.backward(&mut pass, &g)?;
        opt.step(net.params_mut(), &grads)?;
        loss = l;
        let values = &net.params()[0].values;
        let iou = disc_iou(values, cfg.size)?;
        let vertices = levelset_forward(&LevelSetGrid2D::new(cfg.size, cfg.size, values.clone(), SPACING)?)?
            .vertices
            .len();
        log.push(it, Split::Train, l, "iou", iou)?;
        log::debug!("iteration {it}: loss {l:.3e}, iou {iou:.4}, {vertices} vertices");
        rows.push(vec![
            it.to_string(),
            l.to_string(),
            iou.to_string(),
            vertices.to_string(),
        ]);
    }
    let values = &net.params()[0].values;
    let final_loss = net.predict(&[]).map(|o| o[0]).unwrap_or(loss);
    let metrics = vec![
        ("initial_iou".into(), initial_iou),
        ("final_loss".into(), final_loss),
        ("final_iou".into(), disc_iou(values, cfg.size)?),
        ("max_radial_error".into(), max_radial_error(values, cfg.size)?),
        ("cell_diagonal".into(), SPACING * 2f64.sqrt()),
    ];
    Ok(Outcome {
        log,
        metrics,
        tables: vec![Table {
            file: "iterations.csv".into(),
            header: ["iteration", "loss", "iou", "vertices"].map(String::from).to_vec(),
            rows,
        }],
        failure: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_field_scores_near_one() {
        let size = 11;
        let (cx, cy) = centre(size);
        let g = LevelSetGrid2D::from_fn(size, size, SPACING, |x, y| (x - cx).hypot(y - cy) - RADIUS).unwrap();
        assert!(disc_iou(g.values(), size).unwrap() > 0.97);
        assert!(max_radial_error(g.values(), size).unwrap() < 0.01);
    }
}
