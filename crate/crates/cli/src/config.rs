//! Run configuration: a TOML file layered over a problem preset, with command-line flags
//! layered over both.
//!
//! ```toml
//! problem = "1d-nonlinear"      # preset supplying every default below
//! variant = "kpca"
//! p = [4, 8, 12, 16]
//! seeds = [0, 1, 2, 3, 4]
//! hidden = [64, 64, 64, 64]
//! latent_scaling = "global"     # identity | global | per-column
//! lambda = 1e-3
//! kernel_v = { gamma = 1.0, c = 0.0, d = 1 }
//! kernel_z = { gamma = 1.0, c = 0.0, d = 2 }
//!
//! [train]                       # any subset of the training fields
//! epochs = 20000
//!
//! [paths]
//! train_data = "data/train.kpcadat"
//! test_data = "data/test.kpcadat"
//! out = "runs/1d"
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use kpca_deeponet::branch::{Scaling, TrainConfig};
use kpca_deeponet::presets::{preset, Preset, PRESET_NAMES};
use kpca_deeponet::{KernelSpec, OperatorConfig, Variant};
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: Option<String>,
    pub variant: Option<Variant>,
    pub p: Option<Vec<usize>>,
    pub seeds: Option<Vec<u64>>,
    pub hidden: Option<Vec<usize>>,
    pub latent_scaling: Option<Scaling>,
    pub lambda: Option<f64>,
    pub kernel_v: Option<KernelSpec>,
    pub kernel_z: Option<KernelSpec>,
    pub train: Option<toml::Table>,
    #[serde(default)]
    pub paths: PathsFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsFile {
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Fully resolved settings for one command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub variant: Variant,
    pub p: Vec<usize>,
    pub seeds: Vec<u64>,
    pub hidden: Vec<usize>,
    pub latent_scaling: Scaling,
    pub lambda: f64,
    pub kernel_v: KernelSpec,
    pub kernel_z: KernelSpec,
    pub train: TrainConfig,
    pub train_data: PathBuf,
    pub test_data: PathBuf,
    pub out: PathBuf,
}

pub const DEFAULT_P: [usize; 4] = [4, 8, 12, 16];
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

pub fn lookup_preset(name: &str) -> Result<Preset, UsageError> {
    preset(name).ok_or_else(|| {
        UsageError(format!(
            "unknown problem '{name}' (known: {})",
            PRESET_NAMES.join(", ")
        ))
    })
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Result<Self, UsageError> {
        let pr = lookup_preset(name)?;
        let data = PathBuf::from("data").join(name);
        Ok(RunConfig {
            problem: name.to_string(),
            variant: Variant::Kpca,
            p: DEFAULT_P.to_vec(),
            seeds: DEFAULT_SEEDS.to_vec(),
            hidden: pr.hidden.clone(),
            latent_scaling: Scaling::default(),
            lambda: pr.lambda,
            kernel_v: pr.kernel_v,
            kernel_z: pr.kernel_z,
            train: pr.train_config(),
            train_data: data.join("train.kpcadat"),
            test_data: data.join("test.kpcadat"),
            out: PathBuf::from("runs").join(name),
        })
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| UsageError(format!("config: {e}")))?;
        let problem = file.problem.clone().unwrap_or_else(|| "1d-nonlinear".into());
        let mut cfg = Self::from_preset(&problem)?;
        if let Some(v) = file.variant {
            cfg.variant = v;
        }
        if let Some(p) = file.p {
            cfg.p = p;
        }
        if let Some(s) = file.seeds {
            cfg.seeds = s;
        }
        if let Some(h) = file.hidden {
            cfg.hidden = h;
        }
        if let Some(s) = file.latent_scaling {
            cfg.latent_scaling = s;
        }
        if let Some(l) = file.lambda {
            cfg.lambda = l;
        }
        if let Some(k) = file.kernel_v {
            cfg.kernel_v = k;
        }
        if let Some(k) = file.kernel_z {
            cfg.kernel_z = k;
        }
        if let Some(table) = file.train {
            // Overlay the given keys on the preset's training settings.
            let mut base = toml::Table::try_from(&cfg.train).context("serialising training defaults")?;
            base.extend(table);
            cfg.train = toml::Value::Table(base)
                .try_into()
                .map_err(|e| UsageError(format!("config [train]: {e}")))?;
        }
        if let Some(p) = file.paths.train_data {
            cfg.train_data = p;
        }
        if let Some(p) = file.paths.test_data {
            cfg.test_data = p;
        }
        if let Some(p) = file.paths.out {
            cfg.out = p;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Operator settings for one variant, latent size and seed.
    pub fn operator_config(&self, variant: Variant, p: usize, seed: u64) -> OperatorConfig {
        let mut train = self.train.clone();
        train.seed = seed;
        OperatorConfig {
            variant,
            p,
            kernel_v: if variant == Variant::Kpca { self.kernel_v } else { KernelSpec::linear() },
            kernel_z: (variant == Variant::Kpca).then_some(self.kernel_z),
            lambda: (variant == Variant::Kpca).then_some(self.lambda),
            hidden: self.hidden.clone(),
            latent_scaling: self.latent_scaling,
            train,
        }
    }

    /// Validate everything that can be checked before touching data, for the variants a
    /// command will train.
    pub fn validate_for(&self, variants: &[Variant]) -> Result<(), UsageError> {
        if self.p.is_empty() {
            return Err(UsageError("the p list is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(UsageError("the seed list is empty".into()));
        }
        let paths = [&self.train_data, &self.test_data, &self.out];
        for (i, a) in paths.iter().enumerate() {
            if paths[i + 1..].contains(a) {
                return Err(UsageError(format!("path {} is used twice", a.display())));
            }
        }
        for &variant in variants {
            for &p in &self.p {
                self.operator_config(variant, p, self.seeds[0])
                    .validate()
                    .map_err(|e| UsageError(e.to_string()))?;
            }
        }
        Ok(())
    }
}

/// Parse `1,2,5` or `1-4` (inclusive range) or a mix.
pub fn parse_list(s: &str) -> Result<Vec<u64>, UsageError> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || UsageError(format!("cannot parse '{part}' in list '{s}'"));
        if let Some((a, b)) = part.split_once('-') {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(UsageError(format!("empty list '{s}'")));
    }
    Ok(out)
}

pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, UsageError> {
    parse_list(s)?
        .into_iter()
        .map(|v| usize::try_from(v).map_err(|_| UsageError(format!("{v} is too large"))))
        .collect()
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_defaults_and_overrides() {
        let cfg = RunConfig::parse(
            r#"
problem = "1d-nonlinear"
p = [2, 3]
kernel_v = { gamma = 1.0, c = 0.0, d = 2 }
[train]
epochs = 10
"#,
        )
        .unwrap();
        assert_eq!(cfg.p, vec![2, 3]);
        assert_eq!(cfg.kernel_v.degree, 2);
        assert_eq!(cfg.train.epochs, 10);
        assert_eq!(cfg.train.base_lr, TrainConfig::default().base_lr);
        assert_eq!(cfg.lambda, 1e-3);
        cfg.validate_for(&[Variant::Kpca, Variant::Pod]).unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lambda() {
        assert!(RunConfig::parse("colour = 1").is_err());
        assert!(RunConfig::parse("[train]\nbogus = 1").is_err());
        assert!(RunConfig::parse("problem = \"burgers\"").is_err());
        let cfg = RunConfig::parse("lambda = 0.0").unwrap();
        assert!(cfg.validate_for(&[Variant::Kpca]).is_err());
        assert!(cfg.validate_for(&[Variant::Pod]).is_ok());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list("0-2,7").unwrap(), vec![0, 1, 2, 7]);
        assert_eq!(parse_usize_list("4, 8").unwrap(), vec![4, 8]);
        assert!(parse_list("x").is_err());
        assert!(parse_list("").is_err());
        assert!(parse_list("3-1").is_err());
    }
}
