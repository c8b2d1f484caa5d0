//! Axis-aligned tensor-product grids and multilinear interpolation on them
//! (piecewise-linear in 1D, bilinear in 2D).
//!
//! Output vectors may stack several fields (e.g. two velocity components); each field
//! occupies a contiguous block of the output vector and carries its own grid.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named block of the stacked output vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputField {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Tensor-product grid over the coordinates of a single field.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorGrid {
    /// Strictly increasing ticks per axis.
    axes: Vec<Vec<f64>>,
    /// Row (relative to the field block) of each node, indexed by the row-major
    /// multi-index over `axes` (last axis fastest).
    node_rows: Vec<usize>,
}

impl TensorGrid {
    /// Recover the tick vectors from a list of coordinates and verify that the points
    /// are exactly the tensor product of those ticks, each node appearing once.
    pub fn from_coords(coords: ArrayView2<f64>) -> Result<Self> {
        let (m, dim) = coords.dim();
        if dim == 0 {
            return Err(Error::NotTensorGrid("coordinates have zero dimensions".into()));
        }
        if !coords.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("grid coordinates".into()));
        }
        let mut axes = Vec::with_capacity(dim);
        for a in 0..dim {
            let mut ticks: Vec<f64> = coords.column(a).to_vec();
            ticks.sort_by(f64::total_cmp);
            ticks.dedup();
            if ticks.len() < 2 {
                return Err(Error::NotTensorGrid(format!(
                    "axis {a} has {} distinct value(s); at least 2 are required",
                    ticks.len()
                )));
            }
            axes.push(ticks);
        }
        let nodes: usize = axes.iter().map(Vec::len).product();
        if nodes != m {
            return Err(Error::NotTensorGrid(format!(
                "{m} points but the per-axis ticks span {nodes} nodes"
            )));
        }
        let mut node_rows = vec![usize::MAX; m];
        for (row, point) in coords.rows().into_iter().enumerate() {
            let mut flat = 0;
            for (a, ticks) in axes.iter().enumerate() {
                let pos = ticks
                    .binary_search_by(|t| t.total_cmp(&point[a]))
                    .expect("tick taken from this column");
                flat = flat * ticks.len() + pos;
            }
            if node_rows[flat] != usize::MAX {
                return Err(Error::NotTensorGrid(format!(
                    "duplicate node at rows {} and {row}",
                    node_rows[flat]
                )));
            }
            node_rows[flat] = row;
        }
        Ok(TensorGrid { axes, node_rows })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.node_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_rows.is_empty()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    /// Coordinates of every node in the original row order.
    pub fn coords(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), self.dim()));
        for (flat, &row) in self.node_rows.iter().enumerate() {
            let mut rem = flat;
            for a in (0..self.dim()).rev() {
                let n = self.axes[a].len();
                out[[row, a]] = self.axes[a][rem % n];
                rem /= n;
            }
        }
        out
    }

    /// Interpolation stencil for `point`: `(row, weight)` pairs with nonzero weight.
    /// At a grid node the stencil is exactly `[(row, 1.0)]`.
    pub fn stencil(&self, point: &[f64]) -> Result<Vec<(usize, f64)>> {
        Error::check_dim("query point dimension", self.dim(), point.len())?;
        let mut per_axis: Vec<[(usize, f64); 2]> = Vec::with_capacity(self.dim());
        for (ticks, &y) in self.axes.iter().zip(point) {
            let (lo, hi) = (ticks[0], ticks[ticks.len() - 1]);
            if !(y >= lo && y <= hi) {
                return Err(Error::OutOfDomain {
                    point: point.to_vec(),
                });
            }
            // First interval [t_i, t_{i+1}] with y <= t_{i+1}.
            let upper = ticks.partition_point(|&t| t < y).max(1);
            let i = upper - 1;
            let w = if y == ticks[i + 1] {
                1.0
            } else if y == ticks[i] {
                0.0
            } else {
                (y - ticks[i]) / (ticks[i + 1] - ticks[i])
            };
            per_axis.push([(i, 1.0 - w), (i + 1, w)]);
        }
        let mut stencil = Vec::with_capacity(1 << self.dim());
        for corner in 0..(1usize << self.dim()) {
            let mut flat = 0;
            let mut weight = 1.0;
            for (a, choices) in per_axis.iter().enumerate() {
                let (idx, w) = choices[(corner >> (self.dim() - 1 - a)) & 1];
                flat = flat * self.axes[a].len() + idx;
                weight *= w;
            }
            if weight != 0.0 {
                stencil.push((self.node_rows[flat], weight));
            }
        }
        Ok(stencil)
    }
}

/// Grids for every field of a stacked output vector.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputGrid {
    fields: Vec<OutputField>,
    grids: Vec<TensorGrid>,
    coords: Array2<f64>,
}

impl OutputGrid {
    pub fn new(coords: Array2<f64>, fields: Vec<OutputField>) -> Result<Self> {
        let m = coords.nrows();
        let mut next = 0;
        for f in &fields {
            if f.offset != next || f.len == 0 {
                return Err(Error::InvalidParameter(format!(
                    "field '{}' at offset {} (len {}) does not continue the partition at {next}",
                    f.name, f.offset, f.len
                )));
            }
            next += f.len;
        }
        Error::check_dim("field partition of output length", m, next)?;
        let grids = fields
            .iter()
            .map(|f| {
                TensorGrid::from_coords(coords.slice(ndarray::s![f.offset..f.offset + f.len, ..]))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OutputGrid {
            fields,
            grids,
            coords,
        })
    }

    /// Single unnamed field spanning all rows.
    pub fn single(coords: Array2<f64>) -> Result<Self> {
        let len = coords.nrows();
        Self::new(
            coords,
            vec![OutputField {
                name: "v".into(),
                offset: 0,
                len,
            }],
        )
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn coords(&self) -> &Array2<f64> {
        &self.coords
    }

    pub fn fields(&self) -> &[OutputField] {
        &self.fields
    }

    pub fn field_grids(&self) -> &[TensorGrid] {
        &self.grids
    }

    /// Stencils (absolute rows) for every field at every query point:
    /// `result[field][point]`.
    pub fn stencils(&self, points: ArrayView2<f64>) -> Result<Vec<Vec<Vec<(usize, f64)>>>> {
        self.fields
            .iter()
            .zip(&self.grids)
            .map(|(field, grid)| {
                points
                    .rows()
                    .into_iter()
                    .map(|p| {
                        let p = p.to_vec();
                        grid.stencil(&p).map(|s| {
                            s.into_iter().map(|(r, w)| (r + field.offset, w)).collect()
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Interpolate a grid-sampled output vector to arbitrary points;
    /// result shape is `(fields, points)`.
    pub fn interpolate(&self, values: &[f64], points: ArrayView2<f64>) -> Result<Array2<f64>> {
        Error::check_dim("grid values", self.len(), values.len())?;
        let stencils = self.stencils(points)?;
        let mut out = Array2::zeros((self.fields.len(), points.nrows()));
        for (f, per_point) in stencils.iter().enumerate() {
            for (j, st) in per_point.iter().enumerate() {
                out[[f, j]] = st.iter().fold(0.0, |acc, &(r, w)| acc + w * values[r]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn grid_2d(xs: &[f64], ys: &[f64]) -> Array2<f64> {
        let mut c = Array2::zeros((xs.len() * ys.len(), 2));
        let mut r = 0;
        for &x in xs {
            for &y in ys {
                c[[r, 0]] = x;
                c[[r, 1]] = y;
                r += 1;
            }
        }
        c
    }

    #[test]
    fn recovers_ticks_and_coords() {
        let c = grid_2d(&[0.0, 0.5, 1.0], &[-1.0, 2.0]);
        let g = TensorGrid::from_coords(c.view()).unwrap();
        assert_eq!(g.axes()[0], vec![0.0, 0.5, 1.0]);
        assert_eq!(g.axes()[1], vec![-1.0, 2.0]);
        assert_eq!(g.coords(), c);
    }

    #[test]
    fn shuffled_rows_are_accepted() {
        let c = array![[1.0], [0.0], [0.5]];
        let g = TensorGrid::from_coords(c.view()).unwrap();
        assert_eq!(g.coords(), c);
        assert_eq!(g.stencil(&[0.5]).unwrap(), vec![(2, 1.0)]);
    }

    #[test]
    fn scattered_points_rejected() {
        let c = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.5]];
        assert!(matches!(TensorGrid::from_coords(c.view()), Err(Error::NotTensorGrid(_))));
        let dup = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        assert!(TensorGrid::from_coords(dup.view()).is_err());
    }

    #[test]
    fn node_stencil_is_exact() {
        let c = grid_2d(&[0.0, 0.3, 1.0], &[0.0, 1.0]);
        let g = TensorGrid::from_coords(c.view()).unwrap();
        for (row, p) in c.rows().into_iter().enumerate() {
            assert_eq!(g.stencil(&p.to_vec()).unwrap(), vec![(row, 1.0)]);
        }
    }

    #[test]
    fn linear_field_reproduced() {
        let xs: Vec<f64> = (0..5).map(|i| i as f64 * 0.25).collect();
        let coords = Array2::from_shape_fn((5, 1), |(i, _)| xs[i]);
        let grid = OutputGrid::single(coords).unwrap();
        let vals: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let q = array![[0.125], [0.6], [1.0]];
        let out = grid.interpolate(&vals, q.view()).unwrap();
        for (j, &x) in [0.125, 0.6, 1.0].iter().enumerate() {
            assert!((out[[0, j]] - (3.0 * x - 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn bilinear_reproduces_bilinear_functions() {
        let c = grid_2d(&[0.0, 0.4, 1.0], &[0.0, 0.5, 1.0]);
        let grid = OutputGrid::single(c.clone()).unwrap();
        let f = |x: f64, y: f64| 1.0 + 2.0 * x - y + 0.5 * x * y;
        let vals: Vec<f64> = c.rows().into_iter().map(|r| f(r[0], r[1])).collect();
        let q = array![[0.2, 0.7], [0.9, 0.1], [0.4, 0.25]];
        let out = grid.interpolate(&vals, q.view()).unwrap();
        for j in 0..3 {
            assert!((out[[0, j]] - f(q[[j, 0]], q[[j, 1]])).abs() < 1e-13);
        }
    }

    #[test]
    fn outside_box_is_an_error() {
        let grid = OutputGrid::single(array![[0.0], [1.0]]).unwrap();
        let err = grid.interpolate(&[0.0, 1.0], array![[1.5]].view()).unwrap_err();
        assert!(matches!(err, Error::OutOfDomain { .. }));
    }

    #[test]
    fn multi_field_partition() {
        let c = array![[0.0], [1.0], [0.0], [1.0]];
        let fields = vec![
            OutputField { name: "vx".into(), offset: 0, len: 2 },
            OutputField { name: "vy".into(), offset: 2, len: 2 },
        ];
        let grid = OutputGrid::new(c.clone(), fields).unwrap();
        let out = grid.interpolate(&[0.0, 2.0, 10.0, 20.0], array![[0.5]].view()).unwrap();
        assert_eq!(out, array![[1.0], [15.0]]);
        let bad = vec![OutputField { name: "vx".into(), offset: 0, len: 3 }];
        assert!(OutputGrid::new(c, bad).is_err());
    }
}
