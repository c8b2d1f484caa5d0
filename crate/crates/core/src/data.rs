//! Paired samples of discretised input and output functions, the benchmark generators, and
//! dataset persistence.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{self, ContainerReader, ContainerWriter, DATASET_MAGIC, FORMAT_VERSION};
use crate::grid::{OutputField, OutputGrid};

/// `N` input samples (`N x n`) paired with `N` output samples (`N x m`) and the output
/// collocation points (`m x q'`).
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDataset {
    inputs: Array2<f64>,
    outputs: Array2<f64>,
    out_coords: Array2<f64>,
    in_coords: Option<Array2<f64>>,
    fields: Vec<OutputField>,
}

impl FieldDataset {
    pub fn new(
        inputs: Array2<f64>,
        outputs: Array2<f64>,
        out_coords: Array2<f64>,
        in_coords: Option<Array2<f64>>,
        fields: Vec<OutputField>,
    ) -> Result<Self> {
        Error::check_dim("paired sample count", inputs.nrows(), outputs.nrows())?;
        Error::check_dim("output coordinates rows", outputs.ncols(), out_coords.nrows())?;
        if let Some(ic) = &in_coords {
            Error::check_dim("input coordinates rows", inputs.ncols(), ic.nrows())?;
        }
        for (name, a) in [("inputs", &inputs), ("outputs", &outputs), ("output coordinates", &out_coords)] {
            if !a.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("dataset {name}")));
            }
        }
        if in_coords.as_ref().is_some_and(|c| !c.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("dataset input coordinates".into()));
        }
        // validates the tensor-grid structure of every field
        OutputGrid::new(out_coords.clone(), fields.clone())?;
        Ok(FieldDataset {
            inputs,
            outputs,
            out_coords,
            in_coords,
            fields,
        })
    }

    /// Dataset with a single output field.
    pub fn single_field(inputs: Array2<f64>, outputs: Array2<f64>, out_coords: Array2<f64>) -> Result<Self> {
        let m = outputs.ncols();
        Self::new(
            inputs,
            outputs,
            out_coords,
            None,
            vec![OutputField {
                name: "v".into(),
                offset: 0,
                len: m,
            }],
        )
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &Array2<f64> {
        &self.outputs
    }

    pub fn out_coords(&self) -> &Array2<f64> {
        &self.out_coords
    }

    pub fn in_coords(&self) -> Option<&Array2<f64>> {
        self.in_coords.as_ref()
    }

    pub fn fields(&self) -> &[OutputField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn n_in(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn m(&self) -> usize {
        self.outputs.ncols()
    }

    pub fn output_grid(&self) -> Result<OutputGrid> {
        OutputGrid::new(self.out_coords.clone(), self.fields.clone())
    }

    /// Samples at the given indices, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidParameter(format!(
                "sample index {bad} out of range for {} samples",
                self.len()
            )));
        }
        Ok(FieldDataset {
            inputs: self.inputs.select(Axis(0), indices),
            outputs: self.outputs.select(Axis(0), indices),
            out_coords: self.out_coords.clone(),
            in_coords: self.in_coords.clone(),
            fields: self.fields.clone(),
        })
    }

    /// Deterministic split: alternate samples between train and test (even positions to
    /// train) until one side is full, then give the rest to the other.
    pub fn split(&self, split: &SplitSpec) -> Result<(Self, Self)> {
        let (train, test) = split.indices(self.len())?;
        Ok((self.subset(&train)?, self.subset(&test)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&format::read_file(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = DatasetMeta {
            format_version: FORMAT_VERSION,
            kind: "dataset".into(),
            samples: self.len(),
            fields: self.fields.clone(),
            has_in_coords: self.in_coords.is_some(),
        };
        let mut w = ContainerWriter::new(DATASET_MAGIC, format::render_meta(&meta));
        w.array2(&self.inputs);
        w.array2(&self.outputs);
        w.array2(&self.out_coords);
        if let Some(ic) = &self.in_coords {
            w.array2(ic);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, meta) = ContainerReader::open(bytes, DATASET_MAGIC)?;
        let meta: DatasetMeta = format::parse_meta(&meta)?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: meta.format_version,
                supported: FORMAT_VERSION,
            });
        }
        let inputs = r.array2("inputs")?;
        let outputs = r.array2("outputs")?;
        let out_coords = r.array2("output coordinates")?;
        let in_coords = if meta.has_in_coords {
            Some(r.array2("input coordinates")?)
        } else {
            None
        };
        r.finish()?;
        if inputs.nrows() != meta.samples {
            return Err(Error::Corrupt(format!(
                "header declares {} samples, inputs hold {}",
                meta.samples,
                inputs.nrows()
            )));
        }
        Self::new(inputs, outputs, out_coords, in_coords, meta.fields)
    }

    /// Import 1-D data from two CSV files. The input file has a header row naming its
    /// columns and one sample per row. The output file holds the companion rows in the same
    /// order; its header row gives the output coordinate of each column.
    pub fn import_csv(inputs_path: &Path, outputs_path: &Path) -> Result<Self> {
        let (_, inputs) = read_csv_matrix(inputs_path)?;
        let (header, outputs) = read_csv_matrix(outputs_path)?;
        let coords = header
            .iter()
            .map(|h| {
                h.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidParameter(format!(
                        "output CSV header '{h}' is not a coordinate value"
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = coords.len();
        Self::single_field(inputs, outputs, Array2::from_shape_vec((m, 1), coords).expect("m x 1"))
    }
}

fn read_csv_matrix(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Corrupt(format!("{}: {other:?}", path.display())),
        })?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let cols = header.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Corrupt(format!("{}: row {} has non-numeric value '{field}'", path.display(), line + 1))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let m = Array2::from_shape_vec((rows, cols), data).expect("csv enforces equal row lengths");
    Ok((header, m))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetMeta {
    format_version: u32,
    kind: String,
    samples: usize,
    fields: Vec<OutputField>,
    has_in_coords: bool,
}

/// Train/test sizes for a deterministic interleaved split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub test: usize,
}

impl SplitSpec {
    pub fn indices(&self, total: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if self.train + self.test > total {
            return Err(Error::InvalidParameter(format!(
                "split {}+{} exceeds {total} samples",
                self.train, self.test
            )));
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for i in 0..self.train + self.test {
            let prefer_train = i % 2 == 0;
            if (prefer_train && train.len() < self.train) || test.len() == self.test {
                train.push(i);
            } else {
                test.push(i);
            }
        }
        Ok((train, test))
    }
}

/// Parameter interval of the 1-D benchmark.
pub const MU_RANGE: (f64, f64) = (1.0, PI);
/// Spatial interval of the 1-D benchmark.
pub const X_RANGE: (f64, f64) = (-1.0, 1.0);
pub const DEFAULT_1D_GRID: usize = 100;
pub const DEFAULT_1D_TRAIN: usize = 51;
pub const DEFAULT_1D_TEST: usize = 51;

/// Nonlinear parametrised function of Chaturantabut & Sorensen (SIAM J. Sci. Comput. 2010,
/// "Nonlinear model reduction via discrete empirical interpolation", Sec. 3.3.1):
///
/// ```text
/// s(x; mu) = (1 - x) cos(3 pi mu (x + 1)) exp(-(1 + x) mu),   x in [-1, 1], mu in [1, pi]
/// ```
pub fn nonlinear_1d(x: f64, mu: f64) -> f64 {
    let a = 1.0 - x;
    let b = (3.0 * PI * mu * (x + 1.0)).cos();
    let c = (-(1.0 + x) * mu).exp();
    a * b * c
}

/// 1-D nonlinear benchmark. `n_train + n_test` parameter values are spaced evenly over
/// `[1, pi]` and interleaved (even positions train, odd positions test); each sample's
/// branch input is its scalar parameter and its output is `s(.; mu)` on `grid_size`
/// uniform points of `[-1, 1]`.
pub fn gen_1d_nonlinear(n_train: usize, n_test: usize, grid_size: usize) -> Result<(FieldDataset, FieldDataset)> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter(format!("grid_size must be at least 2, got {grid_size}")));
    }
    if n_train == 0 || n_test == 0 {
        return Err(Error::InvalidParameter("train and test counts must be at least 1".into()));
    }
    let total = n_train + n_test;
    let (mu_lo, mu_hi) = MU_RANGE;
    let mus: Vec<f64> = (0..total)
        .map(|i| mu_lo + (mu_hi - mu_lo) * i as f64 / (total - 1).max(1) as f64)
        .collect();
    let (x_lo, x_hi) = X_RANGE;
    let xs: Vec<f64> = (0..grid_size)
        .map(|j| x_lo + (x_hi - x_lo) * j as f64 / (grid_size - 1) as f64)
        .collect();
    let inputs = Array2::from_shape_fn((total, 1), |(i, _)| mus[i]);
    let outputs = Array2::from_shape_fn((total, grid_size), |(i, j)| nonlinear_1d(xs[j], mus[i]));
    let coords = Array2::from_shape_vec((grid_size, 1), xs).expect("grid_size x 1");
    let all = FieldDataset::single_field(inputs, outputs, coords)?;
    all.split(&SplitSpec {
        train: n_train,
        test: n_test,
    })
}

/// Description of the 2-D synthetic family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synthetic2dSpec {
    pub samples: usize,
    pub nx: usize,
    pub ny: usize,
    /// Points of the input function on `[0, 1]`.
    pub input_points: usize,
    /// 1 or 2 output fields.
    pub fields: usize,
}

impl Default for Synthetic2dSpec {
    fn default() -> Self {
        Synthetic2dSpec {
            samples: 64,
            nx: 16,
            ny: 12,
            input_points: 16,
            fields: 2,
        }
    }
}

/// Parameters of synthetic sample `s`, from the additive recurrence with the plastic
/// number (an evenly spread 2-D low-discrepancy sequence), mapped to `[0.5, 1.5]^2`.
pub fn synthetic_params(s: usize) -> (f64, f64) {
    const G1: f64 = 0.754_877_666_246_692_7;
    const G2: f64 = 0.569_840_290_998_053_2;
    let k = (s + 1) as f64;
    (0.5 + (0.5 + G1 * k).fract(), 0.5 + (0.5 + G2 * k).fract())
}

/// Input function `u(x) = a sin(pi x) + b cos(pi x)` on `[0, 1]`.
pub fn synthetic_input(a: f64, b: f64, x: f64) -> f64 {
    a * (PI * x).sin() + b * (PI * x).cos()
}

/// Field `u`: `sin(pi a x) cos(pi b y)`.
pub fn synthetic_field_u(a: f64, b: f64, x: f64, y: f64) -> f64 {
    (PI * a * x).sin() * (PI * b * y).cos()
}

/// Field `v`: `exp(-a x) sin(pi b y) + a b x y`.
pub fn synthetic_field_v(a: f64, b: f64, x: f64, y: f64) -> f64 {
    (-a * x).exp() * (PI * b * y).sin() + a * b * x * y
}

/// Smooth parametrised 2-D fields on an `nx x ny` tensor grid of `[0, 1]^2`, driven by the
/// input function [`synthetic_input`] whose two coefficients determine every output.
pub fn make_synthetic_2d(spec: &Synthetic2dSpec) -> Result<FieldDataset> {
    if spec.nx < 2 || spec.ny < 2 {
        return Err(Error::InvalidParameter("synthetic grid must be at least 2 x 2".into()));
    }
    if !(1..=2).contains(&spec.fields) || spec.samples == 0 || spec.input_points < 2 {
        return Err(Error::InvalidParameter(format!("invalid synthetic spec {spec:?}")));
    }
    let node = |i: usize, n: usize| i as f64 / (n - 1) as f64;
    let per_field = spec.nx * spec.ny;
    let m = per_field * spec.fields;
    let mut coords = Array2::zeros((m, 2));
    for f in 0..spec.fields {
        for ix in 0..spec.nx {
            for iy in 0..spec.ny {
                let r = f * per_field + ix * spec.ny + iy;
                coords[[r, 0]] = node(ix, spec.nx);
                coords[[r, 1]] = node(iy, spec.ny);
            }
        }
    }
    let xin: Array1<f64> = (0..spec.input_points).map(|i| node(i, spec.input_points)).collect();
    let mut inputs = Array2::zeros((spec.samples, spec.input_points));
    let mut outputs = Array2::zeros((spec.samples, m));
    for s in 0..spec.samples {
        let (a, b) = synthetic_params(s);
        for (i, &x) in xin.iter().enumerate() {
            inputs[[s, i]] = synthetic_input(a, b, x);
        }
        for r in 0..m {
            let (x, y) = (coords[[r, 0]], coords[[r, 1]]);
            outputs[[s, r]] = if r < per_field {
                synthetic_field_u(a, b, x, y)
            } else {
                synthetic_field_v(a, b, x, y)
            };
        }
    }
    let names = ["u", "v"];
    let fields = (0..spec.fields)
        .map(|f| OutputField {
            name: names[f].into(),
            offset: f * per_field,
            len: per_field,
        })
        .collect();
    let in_coords = xin.insert_axis(Axis(1));
    FieldDataset::new(inputs, outputs, coords, Some(in_coords), fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn default_1d_sizes_and_sanity() {
        let (train, test) =
            gen_1d_nonlinear(DEFAULT_1D_TRAIN, DEFAULT_1D_TEST, DEFAULT_1D_GRID).unwrap();
        assert_eq!(train.len(), 51);
        assert_eq!(test.len(), 51);
        assert_eq!(train.m(), 100);
        assert_eq!(train.n_in(), 1);
        for row in train.outputs().rows().into_iter().chain(test.outputs().rows()) {
            assert!(row.iter().all(|v| v.is_finite()));
            let first = row[0];
            assert!(row.iter().any(|&v| v != first));
        }
        // interleaving: smallest parameter trains, the next tests
        assert_eq!(train.inputs()[[0, 0]], 1.0);
        assert!(test.inputs()[[0, 0]] > 1.0 && test.inputs()[[0, 0]] < train.inputs()[[1, 0]]);
        assert_eq!(test.inputs()[[50, 0]], PI);
        let (t2, _) = gen_1d_nonlinear(51, 51, 100).unwrap();
        assert_eq!(t2, train);
    }

    #[test]
    fn generator_matches_closed_form() {
        let (train, _) = gen_1d_nonlinear(3, 2, 5).unwrap();
        for i in 0..3 {
            let mu = train.inputs()[[i, 0]];
            for j in 0..5 {
                let x = train.out_coords()[[j, 0]];
                let s = (1.0 - x) * (3.0 * PI * mu * (x + 1.0)).cos() * (-(1.0 + x) * mu).exp();
                assert_eq!(train.outputs()[[i, j]], s);
            }
        }
        assert!(gen_1d_nonlinear(3, 2, 1).is_err());
        assert!(gen_1d_nonlinear(0, 2, 5).is_err());
    }

    #[test]
    fn split_spec_interleaves() {
        let (tr, te) = SplitSpec { train: 3, test: 2 }.indices(5).unwrap();
        assert_eq!((tr, te), (vec![0, 2, 4], vec![1, 3]));
        let (tr, te) = SplitSpec { train: 4, test: 1 }.indices(6).unwrap();
        assert_eq!((tr, te), (vec![0, 2, 3, 4], vec![1]));
        assert!(SplitSpec { train: 4, test: 3 }.indices(6).is_err());
    }

    #[test]
    fn mismatched_rows_rejected() {
        let err = FieldDataset::single_field(
            Array2::zeros((3, 1)),
            Array2::zeros((2, 2)),
            array![[0.0], [1.0]],
        );
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        let nan = FieldDataset::single_field(
            array![[f64::NAN]],
            array![[0.0, 1.0]],
            array![[0.0], [1.0]],
        );
        assert!(matches!(nan, Err(Error::NonFinite(_))));
    }

    #[test]
    fn synthetic_2d_closed_form_and_fields() {
        let spec = Synthetic2dSpec { samples: 5, nx: 4, ny: 3, input_points: 6, fields: 2 };
        let ds = make_synthetic_2d(&spec).unwrap();
        assert_eq!(ds.m(), 24);
        assert_eq!(ds.fields().len(), 2);
        assert_eq!(ds.fields()[0].len + ds.fields()[1].len, 24);
        assert_eq!(ds.fields()[1].offset, 12);
        for s in 0..5 {
            let (a, b) = synthetic_params(s);
            for r in 0..24 {
                let (x, y) = (ds.out_coords()[[r, 0]], ds.out_coords()[[r, 1]]);
                let expect = if r < 12 { synthetic_field_u(a, b, x, y) } else { synthetic_field_v(a, b, x, y) };
                assert_eq!(ds.outputs()[[s, r]], expect);
            }
            assert_eq!(ds.inputs()[[s, 5]], synthetic_input(a, b, 1.0));
        }
        let grid = ds.output_grid().unwrap();
        assert_eq!(grid.field_grids()[0].axes()[0].len(), 4);
        assert!(make_synthetic_2d(&Synthetic2dSpec { nx: 1, ..spec }).is_err());
    }

    #[test]
    fn synthetic_params_spread() {
        let ps: Vec<(f64, f64)> = (0..50).map(synthetic_params).collect();
        assert!(ps.iter().all(|&(a, b)| (0.5..1.5).contains(&a) && (0.5..1.5).contains(&b)));
        let mut a: Vec<f64> = ps.iter().map(|p| p.0).collect();
        a.sort_by(f64::total_cmp);
        a.dedup();
        assert_eq!(a.len(), 50);
    }
}
