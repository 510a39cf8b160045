//! One iterative engine covering FGSM, I-FGSM, MI-FGSM, NI-FGSM and their
//! variance-tuned forms VMI-FGSM / VNI-FGSM.
//!
//! Each method is a setting of [`AttackConfig`]: momentum `decay`,
//! neighborhood factor `beta`, sample count `samples` and the `nesterov`
//! flag. With `beta == 0` or `samples == 0` the variance term vanishes and
//! the engine takes exactly the MI/NI path; with `decay == 0` it takes the
//! I-FGSM path; a single step of size ε is FGSM.

mod config;

pub use config::{make_config, AttackConfig, Method, VariancePoint};

use crate::error::{Error, Result};
use crate::providers::GradientProvider;
use crate::tensor::{Rng, Tensor};

/// Slack allowed on the L∞ budget for accumulated rounding.
pub const BUDGET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// Provider loss at the gradient evaluation point.
    pub loss: f64,
    /// ‖g‖₁ after the momentum update.
    pub momentum_l1: f64,
    /// ‖v‖₁ of the variance computed this iteration.
    pub variance_l1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub x_adv: Tensor,
    pub trace: Vec<IterationRecord>,
    /// Base gradient queries consumed.
    pub queries: usize,
}

/// Sampled gradient variance around `x`:
/// `(1/N) Σᵢ ∇J(x + rᵢ) − ∇J(x)` with `rᵢ ~ U[−βε, βε]ᵈ`.
///
/// With `n == 0` or `beta == 0` this is the zero tensor, and neither `rng`
/// nor the provider is touched.
pub fn gradient_variance<P: GradientProvider + ?Sized>(
    x: &Tensor,
    y: usize,
    gp: &P,
    beta: f64,
    epsilon: f64,
    n: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("beta {beta} must be non-negative")));
    }
    if n == 0 || beta == 0.0 {
        return Ok(Tensor::zeros(x.shape()));
    }
    let center = gp.evaluate(x, y, rng)?.grad;
    neighborhood_variance(x, y, gp, &center, beta * epsilon, n, rng)
}

fn neighborhood_variance<P: GradientProvider + ?Sized>(
    x: &Tensor,
    y: usize,
    gp: &P,
    center: &Tensor,
    radius: f64,
    n: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    let mut sum: Option<Tensor> = None;
    for _ in 0..n {
        let r = Tensor::uniform_perturbation(rng, x.shape(), radius);
        let g = gp.evaluate(&x.add(&r), y, rng)?.grad;
        match sum.as_mut() {
            None => sum = Some(g),
            Some(s) => s.axpy(1.0, &g),
        }
    }
    Ok(sum.expect("n >= 1").scale(1.0 / n as f64).sub(center))
}

/// Closed-form gradient query count of [`run_attack`] for a provider whose
/// evaluations cost `provider_cost` each.
pub fn expected_queries(cfg: &AttackConfig, provider_cost: usize) -> usize {
    let mut per_step = 1;
    if cfg.variance_enabled() {
        per_step += cfg.samples;
        if cfg.nesterov && cfg.variance_point == VariancePoint::Current {
            per_step += 1;
        }
    }
    cfg.steps * per_step * provider_cost
}

/// Runs the iterative attack from clean input `x` with true label `y`.
pub fn run_attack<P: GradientProvider + ?Sized>(
    x: &Tensor,
    y: usize,
    gp: &P,
    cfg: &AttackConfig,
    rng: &mut Rng,
) -> Result<AttackResult> {
    cfg.validate()?;
    if x.shape() != gp.input_shape() {
        return Err(Error::invalid(format!(
            "input shape {:?} does not match provider input {:?}",
            x.shape(),
            gp.input_shape()
        )));
    }
    if y >= gp.num_classes() {
        return Err(Error::invalid(format!(
            "label {y} outside 0..{}",
            gp.num_classes()
        )));
    }

    let eps = cfg.epsilon();
    let alpha = cfg.alpha();
    let lookahead = alpha * cfg.decay;
    let cost = gp.query_cost();

    let mut x_adv = x.clone();
    let mut g = Tensor::zeros(x.shape());
    let mut v: Option<Tensor> = None;
    let mut queries = 0;
    let mut trace = Vec::with_capacity(cfg.steps);

    for _ in 0..cfg.steps {
        let x_eval = if cfg.nesterov {
            x_adv.add(&g.scale(lookahead))
        } else {
            x_adv.clone()
        };
        let e = gp.evaluate(&x_eval, y, rng)?;
        queries += cost;

        let tuned = match &v {
            Some(v) => e.grad.add(v),
            None => e.grad.clone(),
        };
        let step_dir = tuned.l1_normalize();
        g = g.scale(cfg.decay).add(&step_dir);

        if cfg.variance_enabled() {
            let radius = cfg.beta * eps;
            let next = match (cfg.nesterov, cfg.variance_point) {
                (true, VariancePoint::Current) => {
                    let center = gp.evaluate(&x_adv, y, rng)?.grad;
                    queries += cost;
                    neighborhood_variance(&x_adv, y, gp, &center, radius, cfg.samples, rng)?
                }
                _ => neighborhood_variance(&x_eval, y, gp, &e.grad, radius, cfg.samples, rng)?,
            };
            queries += cfg.samples * cost;
            v = Some(next);
        }

        x_adv = x_adv.add(&g.sign().scale(alpha));
        if cfg.project_ball {
            x_adv = project_linf(&x_adv, x, eps);
        }
        if cfg.clip_range {
            x_adv = x_adv.clamp(0.0, 1.0);
        }

        trace.push(IterationRecord {
            loss: e.loss,
            momentum_l1: g.norm_l1(),
            variance_l1: v.as_ref().map_or(0.0, Tensor::norm_l1),
        });
    }

    Ok(AttackResult {
        x_adv,
        trace,
        queries,
    })
}

fn project_linf(x_adv: &Tensor, x: &Tensor, eps: f64) -> Tensor {
    let data = x_adv
        .data()
        .iter()
        .zip(x.data())
        .map(|(&a, &c)| a.clamp(c - eps, c + eps))
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape as x")
}
