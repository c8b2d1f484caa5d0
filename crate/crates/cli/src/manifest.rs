//! Scripted experiments: an ordered list of CLI invocations plus checks on the CSV files
//! they produce.
//!
//! ```toml
//! name = "repro-1d"
//! description = "..."
//! requires = ["data/cavity/train.kpcadat"]   # missing files mark the experiment SKIPPED
//! skip_note = "how to obtain the data"
//!
//! [[steps]]
//! command = "gen-data"
//! args = ["1d-nonlinear", "{out}/data"]    # {out} is the run directory
//!
//! [[expect]]
//! label = "best KPCA error"
//! check = "best-mean"                       # best-mean | kpca-le-pod-fraction | degree-not-worse
//! file = "sweep/sweep.csv"
//! variant = "kpca"
//! d_v = 1
//! max = 1e-3
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

use crate::UsageError;

pub const BUILTIN: [(&str, &str); 3] = [
    ("repro-1d", include_str!("../../../manifests/repro-1d.toml")),
    ("repro-cavity", include_str!("../../../manifests/repro-cavity.toml")),
    ("repro-navier-stokes", include_str!("../../../manifests/repro-navier-stokes.toml")),
];

pub const COMMANDS: [&str; 5] = ["gen-data", "train", "eval", "sweep", "bench-time"];

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub requires: Vec<String>,
    #[serde(default)]
    pub skip_note: String,
    pub steps: Vec<Step>,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    /// Smallest `mean_rel_l2` over the rows matching `variant` / `d_v` is at most `max`.
    BestMean,
    /// Among p >= `min_p`, the fraction of p where KPCA (`d_v`) has mean error no larger
    /// than POD is at least `min`.
    KpcaLePodFraction,
    /// Best mean of KPCA with degree `d_v` is at most the best mean with degree
    /// `baseline_d_v` plus the pooled standard deviation of the two best rows.
    DegreeNotWorse,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub label: String,
    pub check: Check,
    pub file: String,
    #[serde(default)]
    pub variant: Option<String>,
    #[serde(default)]
    pub d_v: Option<u32>,
    #[serde(default)]
    pub baseline_d_v: Option<u32>,
    #[serde(default)]
    pub min_p: Option<usize>,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default)]
    pub min: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skipped => "SKIPPED",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct ManifestReport {
    pub name: String,
    pub verdict: Verdict,
    pub checks: Vec<CheckOutcome>,
    pub note: String,
}

impl ManifestReport {
    pub fn render(&self) -> String {
        let mut s = format!("{}: {}\n", self.name, self.verdict);
        if !self.note.is_empty() {
            s.push_str(&format!("  {}\n", self.note));
        }
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            s.push_str(&format!("  [{tag}] {}: {}\n", c.label, c.detail));
        }
        s
    }
}

impl Manifest {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| UsageError(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    /// Resolve a built-in name or a file path.
    pub fn resolve(name_or_path: &str) -> anyhow::Result<Self> {
        let path = Path::new(name_or_path);
        if path.is_file() {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return Self::parse(&text).with_context(|| format!("in manifest {}", path.display()));
        }
        match BUILTIN.iter().find(|(n, _)| *n == name_or_path) {
            Some((_, text)) => Self::parse(text),
            None => bail!(UsageError(format!(
                "no manifest '{name_or_path}' (built in: {})",
                BUILTIN.map(|(n, _)| n).join(", ")
            ))),
        }
    }

    /// Side-effect-free checks run before anything executes.
    pub fn validate(&self) -> Result<(), UsageError> {
        if self.steps.is_empty() {
            return Err(UsageError(format!("manifest '{}' has no steps", self.name)));
        }
        for (i, step) in self.steps.iter().enumerate() {
            if !COMMANDS.contains(&step.command.as_str()) {
                return Err(UsageError(format!(
                    "manifest '{}' step {} uses unknown command '{}'",
                    self.name,
                    i + 1,
                    step.command
                )));
            }
            for a in &step.args {
                let stripped = a.replace("{out}", "");
                if stripped.contains('{') || stripped.contains('}') {
                    return Err(UsageError(format!(
                        "manifest '{}' step {} has an unknown placeholder in '{a}'",
                        self.name,
                        i + 1
                    )));
                }
            }
            // Parse without running so flag typos surface up front.
            crate::parse_args(self.step_argv(step, Path::new("out")))
                .map_err(|e| UsageError(format!("manifest '{}' step {}: {e}", self.name, i + 1)))?;
        }
        for e in &self.expect {
            let ok = match e.check {
                Check::BestMean => e.max.is_some() && e.variant.is_some(),
                Check::KpcaLePodFraction => e.min.is_some(),
                Check::DegreeNotWorse => e.d_v.is_some() && e.baseline_d_v.is_some(),
            };
            if !ok {
                return Err(UsageError(format!(
                    "manifest '{}' check '{}' is missing required fields",
                    self.name, e.label
                )));
            }
        }
        Ok(())
    }

    fn step_argv(&self, step: &Step, out: &Path) -> Vec<String> {
        let out = out.to_string_lossy();
        let mut argv = vec!["kpcadon".to_string(), step.command.clone()];
        argv.extend(step.args.iter().map(|a| a.replace("{out}", &out)));
        argv
    }

    /// Execute every step in order, then evaluate the checks.
    pub fn run(&self, out: &Path) -> anyhow::Result<ManifestReport> {
        self.validate()?;
        let missing: Vec<&String> = self.requires.iter().filter(|r| !Path::new(r).exists()).collect();
        if !missing.is_empty() {
            return Ok(ManifestReport {
                name: self.name.clone(),
                verdict: Verdict::Skipped,
                checks: Vec::new(),
                note: format!(
                    "missing {}. {}",
                    missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
                    self.skip_note
                ),
            });
        }
        for (i, step) in self.steps.iter().enumerate() {
            let argv = self.step_argv(step, out);
            let cli = crate::parse_args(argv.clone()).map_err(|e| anyhow::anyhow!("{e}"))?;
            crate::execute(cli).with_context(|| format!("step {} ({})", i + 1, argv[1..].join(" ")))?;
        }
        let checks: Vec<CheckOutcome> = self
            .expect
            .iter()
            .map(|e| evaluate(e, out))
            .collect::<anyhow::Result<_>>()?;
        let verdict = if checks.iter().all(|c| c.passed) { Verdict::Pass } else { Verdict::Fail };
        Ok(ManifestReport {
            name: self.name.clone(),
            verdict,
            checks,
            note: self.description.clone(),
        })
    }
}

/// One row of a sweep CSV.
#[derive(Clone, Debug, Deserialize)]
pub struct SweepCsvRow {
    pub variant: String,
    pub d_v: Option<u32>,
    pub p: usize,
    pub trials: usize,
    pub mean_rel_l2: Option<f64>,
    pub std_rel_l2: Option<f64>,
    pub mean_rel_l2_flat: Option<f64>,
    pub std_rel_l2_flat: Option<f64>,
    pub status: String,
}

pub fn read_sweep_csv(path: &Path) -> anyhow::Result<Vec<SweepCsvRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .map(|row| row.with_context(|| format!("parsing {}", path.display())))
        .collect()
}

fn best<'a>(rows: &'a [SweepCsvRow], variant: &str, d_v: Option<u32>) -> Option<&'a SweepCsvRow> {
    rows.iter()
        .filter(|r| r.variant == variant && r.d_v == d_v && r.mean_rel_l2.is_some())
        .min_by(|a, b| a.mean_rel_l2.unwrap().total_cmp(&b.mean_rel_l2.unwrap()))
}

fn evaluate(e: &Expectation, out: &Path) -> anyhow::Result<CheckOutcome> {
    let path: PathBuf = out.join(&e.file);
    let rows = read_sweep_csv(&path)?;
    let (passed, detail) = match e.check {
        Check::BestMean => {
            let variant = e.variant.as_deref().unwrap_or("kpca");
            let max = e.max.expect("validated");
            match best(&rows, variant, e.d_v) {
                Some(r) => {
                    let m = r.mean_rel_l2.unwrap();
                    (
                        m <= max,
                        format!(
                            "best p = {}: mean {:.4}% +/- {:.4}% (limit {:.4}%)",
                            r.p,
                            100.0 * m,
                            100.0 * r.std_rel_l2.unwrap_or(0.0),
                            100.0 * max
                        ),
                    )
                }
                None => (false, "no successful rows".into()),
            }
        }
        Check::KpcaLePodFraction => {
            let min_p = e.min_p.unwrap_or(4);
            let min = e.min.expect("validated");
            let pod: BTreeMap<usize, f64> = rows
                .iter()
                .filter(|r| r.variant == "pod")
                .filter_map(|r| r.mean_rel_l2.map(|m| (r.p, m)))
                .collect();
            let kpca = rows
                .iter()
                .filter(|r| r.variant == "kpca" && r.d_v == e.d_v.or(Some(1)) && r.p >= min_p);
            let mut total = 0;
            let mut wins = 0;
            for r in kpca {
                total += 1;
                if let (Some(k), Some(pm)) = (r.mean_rel_l2, pod.get(&r.p)) {
                    if k <= *pm {
                        wins += 1;
                    }
                }
            }
            let frac = if total == 0 { 0.0 } else { wins as f64 / total as f64 };
            (total > 0 && frac >= min, format!("KPCA <= POD at {wins} of {total} p values >= {min_p}"))
        }
        Check::DegreeNotWorse => {
            let (d, base) = (e.d_v, e.baseline_d_v);
            match (best(&rows, "kpca", d), best(&rows, "kpca", base)) {
                (Some(a), Some(b)) => {
                    let (ma, mb) = (a.mean_rel_l2.unwrap(), b.mean_rel_l2.unwrap());
                    let (sa, sb) = (a.std_rel_l2.unwrap_or(0.0), b.std_rel_l2.unwrap_or(0.0));
                    let pooled = ((sa * sa + sb * sb) / 2.0).sqrt();
                    (
                        ma <= mb + pooled,
                        format!(
                            "d_v={}: {:.4}% vs d_v={}: {:.4}% (pooled std {:.4}%)",
                            d.unwrap(),
                            100.0 * ma,
                            base.unwrap(),
                            100.0 * mb,
                            100.0 * pooled
                        ),
                    )
                }
                _ => (false, "missing rows".into()),
            }
        }
    };
    Ok(CheckOutcome {
        label: e.label.clone(),
        passed,
        detail,
    })
}
