use super::{Evaluation, GradientProvider};
use crate::diffnet::{cross_entropy, Model};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// Several models attacked at once through the cross-entropy of their
/// weighted-average logits.
#[derive(Debug, Clone)]
pub struct EnsembleProvider<'a> {
    models: Vec<&'a Model>,
    weights: Vec<f64>,
}

impl<'a> EnsembleProvider<'a> {
    /// `weights` defaults to uniform and must otherwise sum to one.
    pub fn new(models: Vec<&'a Model>, weights: Option<Vec<f64>>) -> Result<Self> {
        let first = *models
            .first()
            .ok_or_else(|| Error::invalid("ensemble needs at least one model"))?;
        for (i, m) in models.iter().enumerate() {
            if m.input_shape() != first.input_shape() || m.num_classes() != first.num_classes() {
                return Err(Error::invalid(format!(
                    "ensemble member {i} has input {:?} / {} classes, member 0 has {:?} / {}",
                    m.input_shape(),
                    m.num_classes(),
                    first.input_shape(),
                    first.num_classes()
                )));
            }
        }
        let weights = match weights {
            None => vec![1.0 / models.len() as f64; models.len()],
            Some(w) => {
                if w.len() != models.len() {
                    return Err(Error::invalid(format!(
                        "{} weights for {} models",
                        w.len(),
                        models.len()
                    )));
                }
                if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::invalid(
                        "ensemble weights must be finite and non-negative",
                    ));
                }
                let s: f64 = w.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "ensemble weights sum to {s}, expected 1"
                    )));
                }
                w
            }
        };
        Ok(EnsembleProvider { models, weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ wᵢ · logitsᵢ`
    pub fn fused_logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut fused = Tensor::zeros(&[self.num_classes()]);
        for (m, &w) in self.models.iter().zip(&self.weights) {
            fused.axpy(w, &m.forward_logits(x)?);
        }
        Ok(fused)
    }
}

impl GradientProvider for EnsembleProvider<'_> {
    fn evaluate(&self, x: &Tensor, y: usize, _rng: &mut Rng) -> Result<Evaluation> {
        if y >= self.num_classes() {
            return Err(Error::invalid(format!(
                "label {y} outside 0..{}",
                self.num_classes()
            )));
        }
        let traces = self
            .models
            .iter()
            .map(|m| m.forward_trace(x))
            .collect::<Result<Vec<_>>>()?;
        let mut fused = traces[0].logits().scale(self.weights[0]);
        for (t, &w) in traces.iter().zip(&self.weights).skip(1) {
            fused.axpy(w, t.logits());
        }
        let (loss, dfused) = cross_entropy(&fused, y);
        let mut grad: Option<Tensor> = None;
        for ((m, t), &w) in self.models.iter().zip(&traces).zip(&self.weights) {
            let (g, _) = m.backward(t, &dfused.scale(w), false);
            match grad.as_mut() {
                None => grad = Some(g),
                Some(acc) => acc.axpy(1.0, &g),
            }
        }
        Ok(Evaluation {
            loss,
            grad: grad.expect("ensemble is nonempty"),
        })
    }

    fn query_cost(&self) -> usize {
        1
    }

    fn input_shape(&self) -> [usize; 3] {
        self.models[0].input_shape()
    }

    fn num_classes(&self) -> usize {
        self.models[0].num_classes()
    }
}
