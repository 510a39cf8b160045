//! Sources of `(loss, input gradient)` pairs.
//!
//! Attacks only see a [`GradientProvider`]. A plain model, an ensemble with
//! fused logits, and the input-transformation decorators (DIM, TIM, SIM and
//! their composition) all present the same interface and stack freely.

mod ensemble;
mod transforms;

pub use ensemble::EnsembleProvider;
pub use transforms::{
    ctm_wrap, gaussian_kernel, CtmParams, DimWrap, SimWrap, TimKernel, TimWrap, DEFAULT_MIN_SCALE,
    DEFAULT_TIM_K, DEFAULT_TIM_SIGMA,
};

use crate::diffnet::Model;
use crate::error::Result;
use crate::tensor::{Rng, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub grad: Tensor,
}

pub trait GradientProvider: Send + Sync {
    /// Loss and input gradient at `x`. Randomized providers draw from `rng`;
    /// deterministic ones leave it untouched.
    fn evaluate(&self, x: &Tensor, y: usize, rng: &mut Rng) -> Result<Evaluation>;

    /// Base gradient queries consumed by one call to `evaluate`.
    fn query_cost(&self) -> usize;

    fn input_shape(&self) -> [usize; 3];

    fn num_classes(&self) -> usize;
}

impl<P: GradientProvider + ?Sized> GradientProvider for &P {
    fn evaluate(&self, x: &Tensor, y: usize, rng: &mut Rng) -> Result<Evaluation> {
        (**self).evaluate(x, y, rng)
    }
    fn query_cost(&self) -> usize {
        (**self).query_cost()
    }
    fn input_shape(&self) -> [usize; 3] {
        (**self).input_shape()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
}

impl<P: GradientProvider + ?Sized> GradientProvider for Box<P> {
    fn evaluate(&self, x: &Tensor, y: usize, rng: &mut Rng) -> Result<Evaluation> {
        (**self).evaluate(x, y, rng)
    }
    fn query_cost(&self) -> usize {
        (**self).query_cost()
    }
    fn input_shape(&self) -> [usize; 3] {
        (**self).input_shape()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
}

/// Thin adapter over [`Model::loss_and_input_gradient`].
#[derive(Debug, Clone, Copy)]
pub struct ModelProvider<'a> {
    model: &'a Model,
}

pub fn model_provider(model: &Model) -> ModelProvider<'_> {
    ModelProvider { model }
}

impl<'a> ModelProvider<'a> {
    pub fn model(&self) -> &'a Model {
        self.model
    }
}

impl GradientProvider for ModelProvider<'_> {
    fn evaluate(&self, x: &Tensor, y: usize, _rng: &mut Rng) -> Result<Evaluation> {
        let (lv, grad) = self.model.loss_and_input_gradient(x, y)?;
        Ok(Evaluation {
            loss: lv.loss,
            grad,
        })
    }

    fn query_cost(&self) -> usize {
        1
    }

    fn input_shape(&self) -> [usize; 3] {
        self.model.input_shape()
    }

    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::Arch;

    #[test]
    fn model_provider_is_a_thin_adapter() {
        let mut rng = Rng::new(1, 0);
        let m = Arch::Mlp.build([1, 4, 4], 3, &mut rng).unwrap();
        let gp = model_provider(&m);
        let x = Tensor::uniform_perturbation(&mut rng, &[1, 4, 4], 1.0).map(|v| 0.5 + 0.5 * v);
        let before = rng.clone();
        let a = gp.evaluate(&x, 1, &mut rng).unwrap();
        assert_eq!(rng, before);
        let b = gp.evaluate(&x, 1, &mut rng).unwrap();
        let (lv, g) = m.loss_and_input_gradient(&x, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.loss, lv.loss);
        assert_eq!(a.grad, g);
        assert_eq!(gp.query_cost(), 1);
    }
}
