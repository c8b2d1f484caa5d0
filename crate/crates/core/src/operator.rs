//! End-to-end operator surrogates.
//!
//! Training runs the pipeline in a fixed order: fit the reducer on the training outputs,
//! take its latent codes of the training samples as regression targets, fit the branch net
//! from inputs to latents, and (KPCA only) fit kernel ridge regression from latents back to
//! outputs. Prediction maps an input through the branch net and then decodes:
//!
//! ```text
//! kpca: G(u)(y_j) = sum_i alpha_ij k_z(b(u), z_i) + phi_0(y_j)
//! pod:  G(u)(y_j) = sum_k b_k(u) phi_k(y_j)     + phi_0(y_j)
//! ```

use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::branch::{BranchNet, Dense, LossReport, MlpParams, Scaling, Standardizer, TrainConfig};
use crate::data::FieldDataset;
use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};
use crate::format::{self, ContainerReader, ContainerWriter, FORMAT_VERSION, MODEL_MAGIC};
use crate::grid::{OutputField, OutputGrid};
use crate::kernels::KernelSpec;
use crate::reconstruction::{fit_kridge, RidgeModel};
use crate::reduction::{fit_kpca_with, fit_pod, KpcaModel, PodModel, Reducer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Kpca,
    Pod,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Kpca => "kpca",
            Variant::Pod => "pod",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kpca" => Ok(Variant::Kpca),
            "pod" => Ok(Variant::Pod),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant '{other}' (expected kpca or pod)"
            ))),
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![64; 4]
}

/// Everything needed to train one operator model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub variant: Variant,
    pub p: usize,
    /// Output-space kernel; only the KPCA variant uses it.
    #[serde(default = "KernelSpec::linear")]
    pub kernel_v: KernelSpec,
    /// Latent-space kernel of the ridge reconstruction (KPCA only).
    #[serde(default)]
    pub kernel_z: Option<KernelSpec>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub latent_scaling: Scaling,
    #[serde(default)]
    pub train: TrainConfig,
}

impl OperatorConfig {
    /// KPCA configuration with the default branch and training settings.
    pub fn kpca(p: usize, kernel_v: KernelSpec, kernel_z: KernelSpec, lambda: f64) -> Self {
        OperatorConfig {
            variant: Variant::Kpca,
            p,
            kernel_v,
            kernel_z: Some(kernel_z),
            lambda: Some(lambda),
            hidden: default_hidden(),
            latent_scaling: Scaling::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn pod(p: usize) -> Self {
        OperatorConfig {
            variant: Variant::Pod,
            p,
            kernel_v: KernelSpec::linear(),
            kernel_z: None,
            lambda: None,
            hidden: default_hidden(),
            latent_scaling: Scaling::default(),
            train: TrainConfig::default(),
        }
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidParameter("latent dimension p must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidParameter("hidden layer widths must be positive".into()));
        }
        self.train.validate()?;
        if self.variant == Variant::Kpca {
            self.kernel_v.validate()?;
            let kz = self.kernel_z.ok_or_else(|| {
                Error::InvalidParameter("the kpca variant needs kernel_z".into())
            })?;
            kz.validate()?;
            match self.lambda {
                Some(l) if l.is_finite() && l > 0.0 => {}
                Some(l) => {
                    return Err(Error::InvalidParameter(format!(
                        "ridge regularization lambda must be positive, got {l}"
                    )))
                }
                None => return Err(Error::InvalidParameter("the kpca variant needs lambda".into())),
            }
        }
        Ok(())
    }
}

/// Trained surrogate. Immutable; all prediction methods are pure.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorModel {
    config: OperatorConfig,
    reducer: Reducer,
    branch: BranchNet,
    ridge: Option<RidgeModel>,
    grid: OutputGrid,
    loss_history: Vec<f64>,
}

/// Train a model on `dataset` following `config` (the seed is `config.train.seed`).
pub fn train_operator(dataset: &FieldDataset, config: &OperatorConfig) -> Result<(OperatorModel, LossReport)> {
    train_operator_with(dataset, config, Execution::Sequential)
}

pub fn train_operator_with(
    dataset: &FieldDataset,
    config: &OperatorConfig,
    exec: Execution,
) -> Result<(OperatorModel, LossReport)> {
    config.validate()?;
    let grid = dataset.output_grid()?;
    let outputs = dataset.outputs().view();
    let reducer = match config.variant {
        Variant::Pod => Reducer::Pod(fit_pod(outputs, config.p)?),
        Variant::Kpca => Reducer::Kpca(fit_kpca_with(outputs, &config.kernel_v, config.p, exec)?),
    };
    let latents = reducer.latent_codes().clone();
    let (branch, report) = BranchNet::fit(
        dataset.inputs().view(),
        latents.view(),
        &config.hidden,
        config.latent_scaling,
        &config.train,
    )?;
    let ridge = match config.variant {
        Variant::Pod => None,
        Variant::Kpca => Some(fit_kridge(
            latents.view(),
            outputs,
            reducer.mean_fn().view(),
            &config.kernel_z.expect("validated"),
            config.lambda.expect("validated"),
            &grid,
        )?),
    };
    let model = OperatorModel {
        config: config.clone(),
        reducer,
        branch,
        ridge,
        grid,
        loss_history: report.epoch_loss.clone(),
    };
    Ok((model, report))
}

impl OperatorModel {
    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn config(&self) -> &OperatorConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.config.train.seed
    }

    pub fn p(&self) -> usize {
        self.reducer.p()
    }

    pub fn m(&self) -> usize {
        self.reducer.m()
    }

    pub fn n_in(&self) -> usize {
        self.branch.input_dim()
    }

    pub fn reducer(&self) -> &Reducer {
        &self.reducer
    }

    pub fn branch(&self) -> &BranchNet {
        &self.branch
    }

    pub fn ridge(&self) -> Option<&RidgeModel> {
        self.ridge.as_ref()
    }

    pub fn grid(&self) -> &OutputGrid {
        &self.grid
    }

    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    /// Latent codes the branch net predicts for a batch of inputs.
    pub fn latents(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.branch.predict(inputs)
    }

    /// Latent codes obtained by projecting known outputs with the reducer, bypassing the
    /// branch net. Isolates reconstruction error from regression error.
    pub fn oracle_latents(&self, outputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        Error::check_dim("output length", self.m(), outputs.ncols())?;
        let mut z = Array2::zeros((outputs.nrows(), self.p()));
        for (i, v) in outputs.rows().into_iter().enumerate() {
            z.row_mut(i).assign(&self.reducer.project(v)?);
        }
        Ok(z)
    }

    /// Output on the training grid for a latent code.
    pub fn decode(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        match (&self.reducer, &self.ridge) {
            (_, Some(ridge)) => ridge.reconstruct_on_grid(z),
            (Reducer::Pod(pod), None) => pod.reconstruct(z),
            (Reducer::Kpca(_), None) => unreachable!("kpca models always carry a ridge map"),
        }
    }

    pub fn decode_batch(&self, z: ArrayView2<f64>, exec: Execution) -> Result<Array2<f64>> {
        Error::check_dim("latent length", self.p(), z.ncols())?;
        let rows = map_indices(exec, z.nrows(), |i| self.decode(z.row(i)));
        let mut out = Array2::zeros((z.nrows(), self.m()));
        for (i, row) in rows.into_iter().enumerate() {
            out.row_mut(i).assign(&row?);
        }
        Ok(out)
    }

    /// Output at arbitrary coordinates for a latent code; shape `(fields, points)`.
    pub fn decode_at(&self, z: ArrayView1<f64>, coords: ArrayView2<f64>) -> Result<Array2<f64>> {
        match &self.ridge {
            Some(ridge) => ridge.reconstruct_at(z, coords),
            None => {
                // The POD expansion is linear in the basis, so interpolating the assembled
                // grid vector equals interpolating every basis column and the mean.
                let on_grid = self.decode(z)?;
                self.grid.interpolate(on_grid.as_slice().expect("owned"), coords)
            }
        }
    }

    pub fn predict_on_grid(&self, input: ArrayView1<f64>) -> Result<Array1<f64>> {
        let z = self.branch.predict_one(input)?;
        self.decode(z.view())
    }

    pub fn predict_batch(&self, inputs: ArrayView2<f64>, exec: Execution) -> Result<Array2<f64>> {
        let z = self.branch.predict(inputs)?;
        self.decode_batch(z.view(), exec)
    }

    pub fn predict_at(&self, input: ArrayView1<f64>, coords: ArrayView2<f64>) -> Result<Array2<f64>> {
        let z = self.branch.predict_one(input)?;
        self.decode_at(z.view(), coords)
    }

    /// Predictions for every sample of a dataset, checking that the grids agree.
    pub fn predict_dataset(&self, dataset: &FieldDataset, oracle: bool, exec: Execution) -> Result<Array2<f64>> {
        Error::check_dim("dataset output length", self.m(), dataset.m())?;
        if dataset.out_coords() != self.grid.coords() {
            return Err(Error::InvalidParameter(
                "dataset output coordinates differ from the model grid".into(),
            ));
        }
        if oracle {
            let z = self.oracle_latents(dataset.outputs().view())?;
            self.decode_batch(z.view(), exec)
        } else {
            Error::check_dim("dataset input width", self.n_in(), dataset.n_in())?;
            self.predict_batch(dataset.inputs().view(), exec)
        }
    }

    /// Bytes held by each model component's arrays.
    pub fn resident_bytes(&self) -> Vec<(&'static str, usize)> {
        const F: usize = std::mem::size_of::<f64>();
        let branch = self.branch.mlp.num_params()
            + 2 * self.branch.input_scaler.dim()
            + 2 * self.branch.latent_scaler.dim();
        let reducer = match &self.reducer {
            Reducer::Pod(p) => p.mean_fn.len() + p.basis.len() + p.singular_values.len(),
            Reducer::Kpca(k) => {
                k.mean_fn.len()
                    + k.training_outputs_centered.len()
                    + k.gram_row_means.len()
                    + k.eigvals.len()
                    + k.scaled_eigvecs.len()
            }
        };
        let mut out = vec![("branch", branch * F), ("reducer", reducer * F)];
        if let Some(r) = &self.ridge {
            out.push(("ridge", (r.alpha.len() + r.train_latents.len() + r.mean_fn.len()) * F));
        }
        out.push(("grid", self.grid.coords().len() * F));
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&format::read_file(path)?)
    }

    /// Load and insist on a particular variant.
    pub fn load_expecting(path: &Path, variant: Variant) -> Result<Self> {
        let model = Self::load(path)?;
        if model.variant() != variant {
            return Err(Error::VariantMismatch {
                expected: variant.to_string(),
                found: model.variant().to_string(),
            });
        }
        Ok(model)
    }

    /// Deterministic serialisation: identical models give identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = ModelMeta {
            format_version: FORMAT_VERSION,
            kind: "model".into(),
            variant: self.variant(),
            m: self.m(),
            p: self.p(),
            n_layers: self.branch.mlp.layers.len(),
            fields: self.grid.fields().to_vec(),
            config: self.config.clone(),
        };
        let mut w = ContainerWriter::new(MODEL_MAGIC, format::render_meta(&meta));
        w.array2(self.grid.coords());
        w.array1(&self.branch.input_scaler.mean);
        w.array1(&self.branch.input_scaler.scale);
        w.array1(&self.branch.latent_scaler.mean);
        w.array1(&self.branch.latent_scaler.scale);
        for layer in &self.branch.mlp.layers {
            w.array2(&layer.weights);
            w.array1(&layer.bias);
        }
        w.scalars(&self.loss_history);
        match &self.reducer {
            Reducer::Pod(pod) => {
                w.array1(&pod.mean_fn);
                w.array2(&pod.basis);
                w.array1(&pod.singular_values);
                w.array2(pod.latent_codes());
            }
            Reducer::Kpca(k) => {
                w.array1(&k.mean_fn);
                w.array2(&k.training_outputs_centered);
                w.array1(&k.gram_row_means);
                w.scalars(&[k.gram_total_mean, k.centered_trace]);
                w.array1(&k.eigvals);
                w.array2(&k.scaled_eigvecs);
                w.array2(k.latent_codes());
                let ridge = self.ridge.as_ref().expect("kpca models always carry a ridge map");
                w.array2(&ridge.alpha);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, meta) = ContainerReader::open(bytes, MODEL_MAGIC)?;
        let meta: ModelMeta = format::parse_meta(&meta)?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: meta.format_version,
                supported: FORMAT_VERSION,
            });
        }
        if meta.variant != meta.config.variant {
            return Err(Error::Corrupt("header variant disagrees with the stored config".into()));
        }
        meta.config
            .validate()
            .map_err(|e| Error::Corrupt(format!("stored config is invalid: {e}")))?;
        let (m, p) = (meta.m, meta.p);
        let coords = r.array2("grid coordinates")?;
        if coords.nrows() != m {
            return Err(Error::Corrupt(format!("grid has {} rows, header says m = {m}", coords.nrows())));
        }
        let grid = OutputGrid::new(coords, meta.fields)?;
        let in_mean = r.array1("input scaler mean")?;
        let in_scale = r.array1_len("input scaler scale", in_mean.len())?;
        let lat_mean = r.array1_len("latent scaler mean", p)?;
        let lat_scale = r.array1_len("latent scaler scale", p)?;
        let mut layers = Vec::with_capacity(meta.n_layers);
        for _ in 0..meta.n_layers {
            let weights = r.array2("layer weights")?;
            let bias = r.array1("layer bias")?;
            layers.push(Dense { weights, bias });
        }
        let mlp = MlpParams::from_layers(layers).map_err(|e| Error::Corrupt(format!("branch net: {e}")))?;
        if mlp.input_dim() != in_mean.len() || mlp.output_dim() != p {
            return Err(Error::Corrupt("branch net shape disagrees with its scalers".into()));
        }
        let loss_history = r.array1("loss history")?.to_vec();
        let branch = BranchNet {
            input_scaler: Standardizer {
                mean: in_mean,
                scale: in_scale,
            },
            latent_scaler: Standardizer {
                mean: lat_mean,
                scale: lat_scale,
            },
            mlp,
        };
        let (reducer, ridge) = match meta.variant {
            Variant::Pod => {
                let mean_fn = r.array1_len("mean function", m)?;
                let basis = r.array2_shape("POD basis", m, p)?;
                let sv = r.array1_len("singular values", p)?;
                let latents = r.array2("POD latents")?;
                if latents.ncols() != p {
                    return Err(Error::Corrupt("POD latents have the wrong width".into()));
                }
                (Reducer::Pod(PodModel::from_parts(mean_fn, basis, sv, latents)), None)
            }
            Variant::Kpca => {
                let mean_fn = r.array1_len("mean function", m)?;
                let centered = r.array2("training outputs")?;
                let n = centered.nrows();
                if centered.ncols() != m {
                    return Err(Error::Corrupt("training outputs have the wrong width".into()));
                }
                let row_means = r.array1_len("gram row means", n)?;
                let scalars = r.array1_len("gram scalars", 2)?;
                let eigvals = r.array1_len("eigenvalues", p)?;
                let scaled = r.array2_shape("scaled eigenvectors", n, p)?;
                let latents = r.array2_shape("KPCA latents", n, p)?;
                let alpha = r.array2_shape("ridge coefficients", n, m)?;
                let kpca = KpcaModel::from_parts(
                    mean_fn.clone(),
                    meta.config.kernel_v,
                    centered,
                    row_means,
                    scalars[0],
                    scalars[1],
                    eigvals,
                    scaled,
                    latents.clone(),
                );
                let ridge = RidgeModel {
                    alpha,
                    train_latents: latents,
                    kernel_z: meta.config.kernel_z.expect("validated"),
                    lambda: meta.config.lambda.expect("validated"),
                    mean_fn,
                    grid: grid.clone(),
                };
                (Reducer::Kpca(kpca), Some(ridge))
            }
        };
        r.finish()?;
        Ok(OperatorModel {
            config: meta.config,
            reducer,
            branch,
            ridge,
            grid,
            loss_history,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelMeta {
    format_version: u32,
    kind: String,
    variant: Variant,
    m: usize,
    p: usize,
    n_layers: usize,
    fields: Vec<OutputField>,
    config: OperatorConfig,
}
