//! Zero level set of a sampled 2D field as an implicit layer.
//!
//! Marching squares places one contour vertex on every grid edge whose
//! endpoint values `a`, `b` differ in sign, at fraction `t = a/(a − b)` from
//! the first endpoint. The implicit form is the linear interpolation
//! residual `(1 − t)·a + t·b = 0`, with the grid values as input and the
//! crossing fractions as output.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{check_len, Error, Result};
use crate::implicit::{ForwardSolver, ImplicitLayer, ResidualSystem};

/// Grid values exactly equal to zero are moved up by this amount before
/// contouring.
pub const ZERO_NUDGE: f64 = 1e-12;

/// Samples of a scalar field on a `rows × cols` grid with uniform spacing.
/// Sample `(r, c)` sits at `x = c·spacing`, `y = r·spacing`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetGrid2D {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    spacing: f64,
}

impl LevelSetGrid2D {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, spacing: f64) -> Result<Self> {
        check_len("level-set grid", rows * cols, values.len())?;
        if rows < 2 || cols < 2 || !(spacing > 0.0) {
            return Err(Error::InvalidArgument(
                "level-set grid needs at least 2×2 samples and positive spacing".into(),
            ));
        }
        if !crate::mat::all_finite(&values) {
            return Err(Error::NonFinite {
                context: "level-set grid",
            });
        }
        Ok(LevelSetGrid2D {
            rows,
            cols,
            values,
            spacing,
        })
    }

    /// Samples `f(x, y)` at the grid points.
    pub fn from_fn(rows: usize, cols: usize, spacing: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(c as f64 * spacing, r as f64 * spacing));
            }
        }
        Self::new(rows, cols, values, spacing)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    fn nudged(&self, k: usize) -> f64 {
        nudge(self.values[k])
    }
}

fn nudge(v: f64) -> f64 {
    if v == 0.0 {
        ZERO_NUDGE
    } else {
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeDir {
    /// From `(r, c)` to `(r, c + 1)`.
    Horizontal,
    /// From `(r, c)` to `(r + 1, c)`.
    Vertical,
}

/// A grid edge identified by its first endpoint and direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EdgeId {
    pub row: usize,
    pub col: usize,
    pub dir: EdgeDir,
}

impl EdgeId {
    /// Flat sample indices of the two endpoints.
    pub fn endpoints(&self, cols: usize) -> (usize, usize) {
        let a = self.row * cols + self.col;
        match self.dir {
            EdgeDir::Horizontal => (a, a + 1),
            EdgeDir::Vertical => (a, a + cols),
        }
    }
}

/// A contour vertex at fraction `t` along `edge`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourVertex {
    pub edge: EdgeId,
    pub t: f64,
}

impl ContourVertex {
    /// World coordinates `(x, y)`.
    pub fn position(&self, spacing: f64) -> (f64, f64) {
        let (r, c) = (self.edge.row as f64, self.edge.col as f64);
        match self.edge.dir {
            EdgeDir::Horizontal => ((c + self.t) * spacing, r * spacing),
            EdgeDir::Vertical => (c * spacing, (r + self.t) * spacing),
        }
    }
}

/// Contour vertices and the segments joining them (vertex index pairs).
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    pub vertices: Vec<ContourVertex>,
    pub segments: Vec<(usize, usize)>,
}

impl Contour {
    pub fn edges(&self) -> Vec<EdgeId> {
        self.vertices.iter().map(|v| v.edge).collect()
    }
}

/// Marching squares. Vertices are ordered horizontal edges first, then
/// vertical, each row-major. In a saddle cell (all four edges crossing) the
/// sign of the mean of the four corners decides which diagonal pair of
/// corners is connected.
pub fn levelset_forward(g: &LevelSetGrid2D) -> Result<Contour> {
    let (rows, cols) = (g.rows, g.cols);
    let first = g.nudged(0) > 0.0;
    if (0..g.values.len()).all(|k| (g.nudged(k) > 0.0) == first) {
        return Err(Error::NoContour);
    }
    let mut vertices = Vec::new();
    let mut h_index = alloc::vec![usize::MAX; rows * cols];
    let mut v_index = alloc::vec![usize::MAX; rows * cols];
    for (dir, index) in [(EdgeDir::Horizontal, &mut h_index), (EdgeDir::Vertical, &mut v_index)] {
        for row in 0..rows {
            for col in 0..cols {
                let edge = EdgeId { row, col, dir };
                if (dir == EdgeDir::Horizontal && col + 1 == cols) || (dir == EdgeDir::Vertical && row + 1 == rows) {
                    continue;
                }
                let (i, j) = edge.endpoints(cols);
                let (a, b) = (g.nudged(i), g.nudged(j));
                if (a > 0.0) != (b > 0.0) {
                    index[row * cols + col] = vertices.len();
                    vertices.push(ContourVertex { edge, t: a / (a - b) });
                }
            }
        }
    }

    let mut segments = Vec::new();
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let top = h_index[r * cols + c];
            let bottom = h_index[(r + 1) * cols + c];
            let left = v_index[r * cols + c];
            let right = v_index[r * cols + c + 1];
            let hits: Vec<usize> = [top, right, bottom, left]
                .into_iter()
                .filter(|&k| k != usize::MAX)
                .collect();
            match hits.len() {
                2 => segments.push((hits[0], hits[1])),
                4 => {
                    let v00 = g.nudged(r * cols + c);
                    let mean = (v00
                        + g.nudged(r * cols + c + 1)
                        + g.nudged((r + 1) * cols + c)
                        + g.nudged((r + 1) * cols + c + 1))
                        / 4.0;
                    if (mean > 0.0) == (v00 > 0.0) {
                        // Centre joins (r, c) and (r+1, c+1); isolate the other two corners.
                        segments.push((top, right));
                        segments.push((bottom, left));
                    } else {
                        segments.push((top, left));
                        segments.push((right, bottom));
                    }
                }
                _ => {}
            }
        }
    }
    Ok(Contour { vertices, segments })
}

/// Interpolation residual `(1 − t)·a + t·b` for each vertex, with the grid
/// values as input and the fractions `t` as output.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetResidual {
    pub samples: usize,
    pub endpoints: Vec<(usize, usize)>,
}

impl LevelSetResidual {
    pub fn new(g: &LevelSetGrid2D, edges: &[EdgeId]) -> Self {
        LevelSetResidual {
            samples: g.values.len(),
            endpoints: edges.iter().map(|e| e.endpoints(g.cols)).collect(),
        }
    }
}

impl ResidualSystem for LevelSetResidual {
    fn input_dim(&self) -> usize {
        self.samples
    }

    fn output_dim(&self) -> usize {
        self.endpoints.len()
    }

    fn residual(&self, tp: &mut Tape, values: Var, t: Var) -> Result<Var> {
        let ia: Vec<usize> = self.endpoints.iter().map(|e| e.0).collect();
        let ib: Vec<usize> = self.endpoints.iter().map(|e| e.1).collect();
        let a = tp.gather(values, &ia)?;
        let b = tp.gather(values, &ib)?;
        let slope = tp.sub(b, a)?;
        let step = tp.mul(t, slope)?;
        tp.add(a, step)
    }
}

/// Residual of a single vertex; rejects edges without a strict sign change.
pub fn levelset_residual(g: &LevelSetGrid2D, vertex: &ContourVertex) -> Result<f64> {
    let (i, j) = vertex.edge.endpoints(g.cols);
    let (a, b) = (g.values[i], g.values[j]);
    if !(a * b < 0.0) {
        return Err(Error::DegenerateEdge);
    }
    Ok(LevelSetResidual::new(g, &[vertex.edge]).eval(&g.values, &[vertex.t])?[0])
}

/// Crossing fractions for a fixed set of edges.
#[derive(Clone, Debug)]
pub struct LevelSetSolver {
    pub endpoints: Vec<(usize, usize)>,
}

impl ForwardSolver for LevelSetSolver {
    fn solve(&self, _: &dyn ResidualSystem, values: &[f64]) -> Result<Vec<f64>> {
        self.endpoints
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (nudge(values[i]), nudge(values[j]));
                if !(a * b < 0.0) {
                    return Err(Error::DegenerateEdge);
                }
                Ok(a / (a - b))
            })
            .collect()
    }
}

/// Level-set layer tracking the vertices of `contour` on `g`'s grid.
pub fn levelset_layer(g: &LevelSetGrid2D, contour: &Contour, forward_tol: f64) -> ImplicitLayer {
    let sys = LevelSetResidual::new(g, &contour.edges());
    let solver = LevelSetSolver {
        endpoints: sys.endpoints.clone(),
    };
    ImplicitLayer::new(Box::new(sys), Box::new(solver), forward_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit::{implicit_vjp, SolvedPoint};

    fn edge_grid(a: f64, b: f64) -> LevelSetGrid2D {
        LevelSetGrid2D::new(2, 2, alloc::vec![a, b, a, b], 1.0).unwrap()
    }

    #[test]
    fn linear_field_contour_row() {
        let g = LevelSetGrid2D::from_fn(4, 5, 1.0, |_, y| y - 1.5).unwrap();
        let c = levelset_forward(&g).unwrap();
        assert_eq!(c.vertices.len(), 5);
        for v in &c.vertices {
            assert_eq!(v.edge.dir, EdgeDir::Vertical);
            assert!((v.position(1.0).1 - 1.5).abs() < 1e-15);
        }
        assert_eq!(c.segments.len(), 4);
    }

    #[test]
    fn symmetric_edge_midpoint() {
        let c = levelset_forward(&edge_grid(-0.5, 0.5)).unwrap();
        assert!(c.vertices.iter().all(|v| (v.t - 0.5).abs() < 1e-15));
    }

    #[test]
    fn uniform_sign_has_no_contour() {
        let g = LevelSetGrid2D::new(2, 2, alloc::vec![1.0, 2.0, 3.0, 4.0], 1.0).unwrap();
        assert_eq!(levelset_forward(&g), Err(Error::NoContour));
    }

    #[test]
    fn closed_form_derivatives() {
        for (a, b, dta) in [(-0.5, 0.5, -0.5), (-1.0, 1.0, -0.25)] {
            let g = LevelSetGrid2D::new(1 + 1, 2, alloc::vec![a, b, 1.0, 1.0], 1.0).unwrap();
            let vert = levelset_forward(&g).unwrap().vertices[0];
            assert_eq!(vert.edge.dir, EdgeDir::Horizontal);
            assert!(levelset_residual(&g, &vert).unwrap().abs() < 1e-15);
            let sys = LevelSetResidual::new(&g, &[vert.edge]);
            let p = SolvedPoint::new(&sys, g.values.clone(), alloc::vec![vert.t]).unwrap();
            let grad = implicit_vjp(&sys, &p, &[1.0]).unwrap();
            assert!((grad[0] - dta).abs() < 1e-12);
            assert!((grad[1] - a / ((a - b) * (a - b))).abs() < 1e-12);
            assert_eq!(grad[2], 0.0);
        }
    }

    #[test]
    fn degenerate_edge_rejected() {
        let g = edge_grid(0.0, 1.0);
        let vert = ContourVertex {
            edge: EdgeId {
                row: 0,
                col: 0,
                dir: EdgeDir::Horizontal,
            },
            t: 0.0,
        };
        assert_eq!(levelset_residual(&g, &vert), Err(Error::DegenerateEdge));
    }

    #[test]
    fn saddle_resolved_by_centre() {
        // Corners (0,0) and (1,1) positive, mean positive: they connect.
        let g = LevelSetGrid2D::new(2, 2, alloc::vec![1.0, -0.5, -0.5, 1.0], 1.0).unwrap();
        let c = levelset_forward(&g).unwrap();
        assert_eq!(c.segments.len(), 2);
        let g = LevelSetGrid2D::new(2, 2, alloc::vec![0.5, -1.0, -1.0, 0.5], 1.0).unwrap();
        let d = levelset_forward(&g).unwrap();
        assert_ne!(c.segments, d.segments);
    }

    #[test]
    fn radial_field_hugs_circle() {
        let h = 0.1;
        let g = LevelSetGrid2D::from_fn(31, 31, h, |x, y| libm::hypot(x - 1.5, y - 1.5) - 1.0).unwrap();
        let c = levelset_forward(&g).unwrap();
        assert!(c.vertices.len() > 20);
        for v in &c.vertices {
            let (x, y) = v.position(h);
            let r = libm::hypot(x - 1.5, y - 1.5);
            assert!((r - 1.0).abs() <= h * core::f64::consts::SQRT_2);
        }
    }
}
