use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::results::{ResultRow, ResultTable, SweepEntry, SweepTable};
use super::spec::{Experiment, ExperimentSpec, Source};
use crate::attacks::{run_attack, AttackConfig, BUDGET_TOL};
use crate::error::{Error, Result};
use crate::providers::{ctm_wrap, model_provider, CtmParams, EnsembleProvider, GradientProvider};
use crate::tensor::{Rng, Tensor};

/// Whether one target misclassified one adversarial image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub source: usize,
    pub attack: usize,
    pub target: usize,
    /// Index into the dataset.
    pub image: usize,
    pub misclassified: bool,
}

/// Adversarial examples crafted for one (source, attack) pair, in
/// evaluation order.
#[derive(Debug, Clone)]
pub struct Crafted {
    pub source: usize,
    pub attack: usize,
    pub x_adv: Vec<Tensor>,
    pub queries: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MatrixRun {
    pub table: ResultTable,
    /// Dataset indices of the evaluated images.
    pub eval_images: Vec<usize>,
    pub outcomes: Vec<Outcome>,
    pub crafted: Vec<Crafted>,
}

/// Stream for image `image` under attack `attack`. Depends only on these
/// keys, never on scheduling.
pub fn image_rng(master_seed: u64, attack: usize, image: usize) -> Rng {
    Rng::new(master_seed, 0)
        .child(attack as u64)
        .child(image as u64)
}

/// Prediction with ties broken towards the lowest class index.
fn predict(m: &crate::diffnet::Model, x: &Tensor) -> usize {
    m.predict(x).expect("validated shapes")
}

fn quantize(x: &Tensor) -> Tensor {
    x.map(|v| (v * 255.0).round() / 255.0)
}

pub fn build_provider<'a>(
    source: &'a Source,
    transforms: Option<CtmParams>,
) -> Result<Box<dyn GradientProvider + 'a>> {
    let base: Box<dyn GradientProvider + 'a> = match source.members.as_slice() {
        [m] => Box::new(model_provider(m)),
        many => Box::new(EnsembleProvider::new(many.iter().collect(), None)?),
    };
    Ok(match transforms {
        None => base,
        Some(p) => Box::new(ctm_wrap(base, p)?),
    })
}

/// Dataset indices eligible for evaluation, capped at `n_images`.
pub fn eligible_images(exp: &Experiment) -> Vec<usize> {
    let models: Vec<_> = exp
        .sources
        .iter()
        .flat_map(|s| s.members.iter())
        .chain(exp.targets.iter().map(|t| &t.model))
        .collect();
    (0..exp.dataset.len())
        .filter(|&i| {
            if !exp.filter_correct {
                return true;
            }
            let x = exp.dataset.image(i);
            let y = exp.dataset.labels()[i];
            models.iter().all(|m| predict(m, &x) == y)
        })
        .take(exp.n_images)
        .collect()
}

/// Independent re-check of the L∞ budget and pixel range.
fn audit(label: &str, cfg: &AttackConfig, x: &Tensor, x_adv: &Tensor) -> Result<()> {
    let bound = if cfg.budget_guaranteed() {
        cfg.epsilon()
    } else {
        cfg.alpha() * cfg.steps as f64
    };
    let dist = x_adv.sub(x).norm_linf();
    if dist > bound + BUDGET_TOL {
        return Err(Error::Budget(format!(
            "{label}: ‖x_adv − x‖∞ = {dist} exceeds {bound}"
        )));
    }
    if cfg.clip_range && x_adv.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Budget(format!(
            "{label}: adversarial pixel outside [0,1]"
        )));
    }
    Ok(())
}

pub fn run_experiment(exp: &Experiment) -> Result<MatrixRun> {
    exp.validate()?;
    let eval_images = eligible_images(exp);
    if eval_images.is_empty() {
        return Err(Error::invalid("no images are eligible for evaluation"));
    }
    let n_eval = eval_images.len();

    let mut crafted = Vec::with_capacity(exp.sources.len() * exp.attacks.len());
    let mut outcomes = Vec::new();
    let mut rows = Vec::new();

    for (si, source) in exp.sources.iter().enumerate() {
        for (ai, plan) in exp.attacks.iter().enumerate() {
            let gp = build_provider(source, plan.transforms)?;
            let results = eval_images
                .par_iter()
                .map(|&img| {
                    let x = exp.dataset.image(img);
                    let y = exp.dataset.labels()[img];
                    let mut rng = image_rng(exp.master_seed, ai, img);
                    let res = run_attack(&x, y, gp.as_ref(), &plan.config, &mut rng)?;
                    audit(&plan.label, &plan.config, &x, &res.x_adv)?;
                    Ok((res.x_adv, res.queries))
                })
                .collect::<Result<Vec<_>>>()?;
            let (x_adv, queries): (Vec<Tensor>, Vec<usize>) = results.into_iter().unzip();
            let total_queries: usize = queries.iter().sum();

            for (ti, target) in exp.targets.iter().enumerate() {
                let mut fooled = 0;
                for (k, &img) in eval_images.iter().enumerate() {
                    let probe = if exp.quantize {
                        quantize(&x_adv[k])
                    } else {
                        x_adv[k].clone()
                    };
                    let misclassified = predict(&target.model, &probe) != exp.dataset.labels()[img];
                    fooled += misclassified as usize;
                    outcomes.push(Outcome {
                        source: si,
                        attack: ai,
                        target: ti,
                        image: img,
                        misclassified,
                    });
                }
                rows.push(ResultRow {
                    source: source.name.clone(),
                    attack: plan.label.clone(),
                    target: target.name.clone(),
                    success_rate: fooled as f64 / n_eval as f64,
                    n_eval,
                    queries_mean: total_queries as f64 / n_eval as f64,
                    seed: exp.master_seed,
                });
            }
            crafted.push(Crafted {
                source: si,
                attack: ai,
                x_adv,
                queries,
            });
        }
    }

    Ok(MatrixRun {
        table: ResultTable { rows },
        eval_images,
        outcomes,
        crafted,
    })
}

/// Loads, validates and runs an experiment file's matrix.
pub fn run_matrix(spec: &ExperimentSpec, base: &Path) -> Result<ResultTable> {
    Ok(run_experiment(&spec.resolve(base)?)?.table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Beta,
    Samples,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::Samples => "samples",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(SweepParam::Beta),
            "samples" => Ok(SweepParam::Samples),
            other => Err(Error::invalid(format!(
                "cannot sweep {other:?}; expected beta or samples"
            ))),
        }
    }
}

/// Sample count held fixed while sweeping β.
pub const SWEEP_FIXED_SAMPLES: usize = 20;
/// β held fixed while sweeping the sample count.
pub const SWEEP_FIXED_BETA: f64 = 1.5;

/// Re-runs the matrix once per value. Only variance-tuned attacks are
/// changed; everything else in the experiment stays as given.
pub fn ablation_sweep_experiment(
    exp: &Experiment,
    param: SweepParam,
    values: &[f64],
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    for &v in values {
        let ok = match param {
            SweepParam::Beta => v.is_finite() && v >= 0.0,
            SweepParam::Samples => v.is_finite() && v >= 0.0 && v.fract() == 0.0,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "invalid {} value {v}",
                param.name()
            )));
        }
    }
    let mut entries = Vec::with_capacity(values.len());
    for &value in values {
        let mut swept = exp.clone();
        for plan in swept
            .attacks
            .iter_mut()
            .filter(|p| p.method.is_variance_tuned())
        {
            match param {
                SweepParam::Beta => {
                    plan.config.beta = value;
                    plan.config.samples = SWEEP_FIXED_SAMPLES;
                }
                SweepParam::Samples => {
                    plan.config.samples = value as usize;
                    plan.config.beta = SWEEP_FIXED_BETA;
                }
            }
        }
        entries.push(SweepEntry {
            value,
            table: run_experiment(&swept)?.table,
        });
    }
    Ok(SweepTable {
        param: param.name().to_string(),
        entries,
    })
}

pub fn ablation_sweep(
    spec: &ExperimentSpec,
    base: &Path,
    param: SweepParam,
    values: &[f64],
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    ablation_sweep_experiment(&spec.resolve(base)?, param, values)
}
