//! Experiment files.
//!
//! ```json
//! {
//!   "source_models": ["cnn_s0.json", ["cnn_s1.json", "mlp_s1.json"]],
//!   "target_models": ["mlp_s2.json"],
//!   "attacks": [
//!     {"method": "mifgsm"},
//!     {"method": "vmifgsm", "beta": 1.5, "samples": 20,
//!      "transforms": {"dim_prob": 0.5, "tim_k": 7, "sim_copies": 5}}
//!   ],
//!   "n_images": 500, "master_seed": 7, "filter_correct": true, "quantize": false,
//!   "data": {"kind": "blobs", "n": 1000, "seed": 99}
//! }
//! ```
//!
//! A nested list in `source_models` is an ensemble attacked through its
//! averaged logits. Relative paths resolve against the experiment file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{gen_blobs_with, load_idx, BlobParams, Dataset};
use crate::attacks::{make_config, AttackConfig, Method, VariancePoint};
use crate::diffnet::{load_model, Model};
use crate::error::{Error, Result};
use crate::providers::{CtmParams, DEFAULT_MIN_SCALE, DEFAULT_TIM_SIGMA};
use crate::tensor::Rng;

pub const DEFAULT_N_IMAGES: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceEntry {
    Single(PathBuf),
    Ensemble(Vec<PathBuf>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub dim_prob: Option<f64>,
    pub min_scale: Option<f64>,
    pub tim_k: Option<usize>,
    pub tim_sigma: Option<f64>,
    pub sim_copies: Option<usize>,
}

impl TransformSpec {
    /// Missing components stay at their pass-through setting. A missing
    /// `tim_sigma` defaults to 3 for a 7x7 kernel and to the kernel radius otherwise.
    pub fn to_params(&self) -> CtmParams {
        let id = CtmParams::identity();
        let tim_k = self.tim_k.unwrap_or(id.tim_k);
        let default_sigma = if tim_k == 7 {
            DEFAULT_TIM_SIGMA
        } else {
            ((tim_k / 2) as f64).max(1.0)
        };
        CtmParams {
            dim_prob: self.dim_prob.unwrap_or(id.dim_prob),
            min_scale: self.min_scale.unwrap_or(DEFAULT_MIN_SCALE),
            tim_k,
            tim_sigma: self.tim_sigma.unwrap_or(default_sigma),
            sim_copies: self.sim_copies.unwrap_or(id.sim_copies),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub method: Method,
    /// Row label; defaults to the method name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub epsilon_255: Option<f64>,
    pub steps: Option<usize>,
    pub step_size_255: Option<f64>,
    pub decay: Option<f64>,
    pub beta: Option<f64>,
    pub samples: Option<usize>,
    pub nesterov: Option<bool>,
    pub clip_range: Option<bool>,
    pub project_ball: Option<bool>,
    pub variance_point: Option<VariancePoint>,
    pub transforms: Option<TransformSpec>,
}

impl AttackSpec {
    pub fn new(method: Method) -> Self {
        AttackSpec {
            method,
            name: None,
            epsilon_255: None,
            steps: None,
            step_size_255: None,
            decay: None,
            beta: None,
            samples: None,
            nesterov: None,
            clip_range: None,
            project_ball: None,
            variance_point: None,
            transforms: None,
        }
    }

    pub fn plan(&self) -> Result<AttackPlan> {
        let mut cfg = make_config(
            self.method,
            self.epsilon_255.unwrap_or(16.0),
            self.steps.unwrap_or(10),
        );
        if let Some(a) = self.step_size_255 {
            cfg.step_size_255 = a;
        }
        if let Some(v) = self.decay {
            cfg.decay = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        if let Some(v) = self.nesterov {
            cfg.nesterov = v;
        }
        if let Some(v) = self.clip_range {
            cfg.clip_range = v;
        }
        if let Some(v) = self.project_ball {
            cfg.project_ball = v;
        }
        if let Some(v) = self.variance_point {
            cfg.variance_point = v;
        }
        cfg.validate()?;
        Ok(AttackPlan {
            label: self
                .name
                .clone()
                .unwrap_or_else(|| self.method.name().to_string()),
            method: self.method,
            config: cfg,
            transforms: self.transforms.as_ref().map(TransformSpec::to_params),
        })
    }
}

/// A fully resolved attack row.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    pub label: String,
    pub method: Method,
    pub config: AttackConfig,
    pub transforms: Option<CtmParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSpec {
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Blobs {
        #[serde(default = "default_blob_n")]
        n: usize,
        #[serde(default = "default_blob_classes")]
        classes: usize,
        #[serde(default = "default_blob_side")]
        side: usize,
        separation: Option<f64>,
        noise: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

fn default_blob_n() -> usize {
    1000
}
fn default_blob_classes() -> usize {
    10
}
fn default_blob_side() -> usize {
    28
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::Blobs {
            n: default_blob_n(),
            classes: default_blob_classes(),
            side: default_blob_side(),
            separation: None,
            noise: None,
            seed: EVAL_DATA_SEED,
        }
    }
}

/// Seed of the default evaluation blobs; training uses other seeds.
pub const EVAL_DATA_SEED: u64 = 0x5eed_e7a1;

impl DataSpec {
    pub fn load(&self, base: &Path) -> Result<Dataset> {
        match self {
            DataSpec::Idx { images, labels } => load_idx(base.join(images), base.join(labels)),
            DataSpec::Blobs {
                n,
                classes,
                side,
                separation,
                noise,
                seed,
            } => {
                let d = BlobParams::default();
                let p = BlobParams {
                    separation: separation.unwrap_or(d.separation),
                    noise: noise.unwrap_or(d.noise),
                    ..d
                };
                gen_blobs_with(*n, *classes, *side, p, &mut Rng::new(*seed, 0))
            }
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_n_images() -> usize {
    DEFAULT_N_IMAGES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub source_models: Vec<SourceEntry>,
    pub target_models: Vec<PathBuf>,
    pub attacks: Vec<AttackSpec>,
    #[serde(default = "default_n_images")]
    pub n_images: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_true")]
    pub filter_correct: bool,
    #[serde(default)]
    pub quantize: bool,
    #[serde(default)]
    pub data: DataSpec,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("experiment spec: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let spec = Self::from_json(&fs::read_to_string(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((spec, base))
    }

    /// Loads every model and the dataset, and validates the whole matrix.
    pub fn resolve(&self, base: &Path) -> Result<Experiment> {
        let load = |p: &PathBuf| -> Result<(String, Model)> {
            Ok((model_name(p), load_model(base.join(p))?))
        };
        let sources = self
            .source_models
            .iter()
            .map(|entry| {
                let members = match entry {
                    SourceEntry::Single(p) => vec![load(p)?],
                    SourceEntry::Ensemble(ps) => ps.iter().map(load).collect::<Result<Vec<_>>>()?,
                };
                let name = members
                    .iter()
                    .map(|(n, _)| n.as_str())
                    .collect::<Vec<_>>()
                    .join("+");
                Ok(Source {
                    name,
                    members: members.into_iter().map(|(_, m)| m).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let targets = self
            .target_models
            .iter()
            .map(|p| load(p).map(|(name, model)| Target { name, model }))
            .collect::<Result<Vec<_>>>()?;
        let attacks = self
            .attacks
            .iter()
            .map(AttackSpec::plan)
            .collect::<Result<Vec<_>>>()?;
        let exp = Experiment {
            sources,
            targets,
            attacks,
            dataset: self.data.load(base)?,
            n_images: self.n_images,
            master_seed: self.master_seed,
            filter_correct: self.filter_correct,
            quantize: self.quantize,
        };
        exp.validate()?;
        Ok(exp)
    }
}

fn model_name(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// A source row: one model, or several fused into an ensemble.
#[derive(Debug, Clone)]
pub struct Source {
    pub name: String,
    pub members: Vec<Model>,
}

#[derive(Debug, Clone)]
pub struct Target {
    pub name: String,
    pub model: Model,
}

/// An experiment with all models and data in memory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub sources: Vec<Source>,
    pub targets: Vec<Target>,
    pub attacks: Vec<AttackPlan>,
    pub dataset: Dataset,
    pub n_images: usize,
    pub master_seed: u64,
    pub filter_correct: bool,
    pub quantize: bool,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() || self.sources.iter().any(|s| s.members.is_empty()) {
            return Err(Error::invalid("experiment needs at least one source model"));
        }
        if self.targets.is_empty() {
            return Err(Error::invalid("experiment needs at least one target model"));
        }
        if self.attacks.is_empty() {
            return Err(Error::invalid("experiment needs at least one attack"));
        }
        if self.n_images == 0 {
            return Err(Error::invalid("n_images must be at least 1"));
        }
        let shape = self.dataset.image_shape();
        let classes = self.targets[0].model.num_classes();
        let models = self
            .sources
            .iter()
            .flat_map(|s| s.members.iter().map(move |m| (s.name.as_str(), m)))
            .chain(self.targets.iter().map(|t| (t.name.as_str(), &t.model)));
        for (name, m) in models {
            if m.input_shape() != shape {
                return Err(Error::invalid(format!(
                    "model {name} takes {:?} but the data is {:?}",
                    m.input_shape(),
                    shape
                )));
            }
            if m.num_classes() != classes {
                return Err(Error::invalid(format!(
                    "model {name} has {} classes, expected {classes}",
                    m.num_classes()
                )));
            }
        }
        if self.dataset.num_classes() > classes {
            return Err(Error::invalid(format!(
                "data has labels up to {}, models have {classes} classes",
                self.dataset.num_classes() - 1
            )));
        }
        for a in &self.attacks {
            a.config.validate()?;
            if let Some(t) = a.transforms {
                if t.tim_k > shape[1].min(shape[2]) {
                    return Err(Error::invalid(format!(
                        "{}: TIM kernel larger than the image",
                        a.label
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_spec_with_defaults() {
        let s = ExperimentSpec::from_json(
            r#"{"source_models":["a.json",["b.json","c.json"]],"target_models":["d.json"],
                "attacks":[{"method":"vmifgsm","transforms":{"tim_k":7}}]}"#,
        )
        .unwrap();
        assert_eq!(s.n_images, 500);
        assert!(s.filter_correct);
        assert!(!s.quantize);
        assert!(matches!(s.source_models[1], SourceEntry::Ensemble(ref v) if v.len() == 2));
        let plan = s.attacks[0].plan().unwrap();
        assert_eq!(plan.config, make_config(Method::Vmifgsm, 16.0, 10));
        let t = plan.transforms.unwrap();
        assert_eq!(
            (t.tim_k, t.tim_sigma, t.sim_copies, t.dim_prob),
            (7, 3.0, 1, 0.0)
        );
    }

    #[test]
    fn overrides_apply() {
        let mut a = AttackSpec::new(Method::Mifgsm);
        a.epsilon_255 = Some(8.0);
        a.steps = Some(4);
        a.decay = Some(0.5);
        let c = a.plan().unwrap().config;
        assert_eq!(
            (c.epsilon_255, c.steps, c.step_size_255, c.decay),
            (8.0, 4, 2.0, 0.5)
        );
    }

    #[test]
    fn unknown_keys_and_methods_rejected() {
        assert!(ExperimentSpec::from_json(
            r#"{"source_models":[],"target_models":[],"attacks":[],"bogus":1}"#
        )
        .is_err());
        assert!(ExperimentSpec::from_json(
            r#"{"source_models":[],"target_models":[],"attacks":[{"method":"pgd"}]}"#
        )
        .is_err());
    }
}
