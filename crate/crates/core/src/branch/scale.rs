use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// How columns are rescaled before training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    /// Leave the data as is.
    Identity,
    /// Centre each column and divide all columns by one common standard deviation,
    /// preserving the relative magnitude of the columns.
    #[default]
    Global,
    /// Centre and scale every column to unit variance.
    PerColumn,
}

/// Affine column transform `x -> (x - mean) / scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: Array1::zeros(dim),
            scale: Array1::ones(dim),
        }
    }

    pub fn fit(data: ArrayView2<f64>, mode: Scaling) -> Self {
        let dim = data.ncols();
        if mode == Scaling::Identity || data.nrows() == 0 {
            return Self::identity(dim);
        }
        let mean = data.mean_axis(Axis(0)).expect("nonempty");
        let centered = &data - &mean;
        let nonzero = |s: f64| if s > 0.0 && s.is_finite() { s } else { 1.0 };
        let scale = match mode {
            Scaling::PerColumn => centered
                .map_axis(Axis(0), |c| c.mapv(|x| x * x).mean().unwrap_or(0.0).sqrt())
                .mapv(nonzero),
            _ => {
                let s = centered.mapv(|x| x * x).mean().unwrap_or(0.0).sqrt();
                Array1::from_elem(dim, nonzero(s))
            }
        };
        Standardizer { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, data: ArrayView2<f64>) -> Array2<f64> {
        (&data - &self.mean) / &self.scale
    }

    pub fn apply_row(&self, row: ArrayView1<f64>) -> Array1<f64> {
        (&row - &self.mean) / &self.scale
    }

    pub fn invert(&self, data: ArrayView2<f64>) -> Array2<f64> {
        &data * &self.scale + &self.mean
    }

    pub fn invert_row(&self, row: ArrayView1<f64>) -> Array1<f64> {
        &row * &self.scale + &self.mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn per_column_is_unit_variance() {
        let x = array![[1.0, 10.0], [3.0, 30.0], [5.0, 20.0]];
        let s = Standardizer::fit(x.view(), Scaling::PerColumn);
        let y = s.apply(x.view());
        for c in y.columns() {
            assert!(c.mean().unwrap().abs() < 1e-15);
            assert!((c.mapv(|v| v * v).mean().unwrap() - 1.0).abs() < 1e-14);
        }
        let back = s.invert(y.view());
        assert!((&back - &x).iter().all(|d| d.abs() < 1e-13));
    }

    #[test]
    fn global_keeps_ratios() {
        let x = array![[1.0, 10.0], [-1.0, -10.0]];
        let s = Standardizer::fit(x.view(), Scaling::Global);
        assert_eq!(s.scale[0], s.scale[1]);
        let y = s.apply(x.view());
        assert!((y[[0, 1]] / y[[0, 0]] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn constant_columns_are_safe() {
        let x = array![[2.0, 1.0], [2.0, 3.0]];
        let s = Standardizer::fit(x.view(), Scaling::PerColumn);
        assert_eq!(s.scale[0], 1.0);
        assert!(s.apply(x.view()).iter().all(|v| v.is_finite()));
        let id = Standardizer::fit(x.view(), Scaling::Identity);
        assert_eq!(id.apply(x.view()), x);
    }
}
