//! Input-transformation decorators.
//!
//! * [`DimWrap`] evaluates the inner provider on a randomly shrunk and
//!   zero-padded copy of the input, then pulls the gradient back through the
//!   exact adjoints of the pad and resize.
//! * [`TimWrap`] smooths the inner gradient with a Gaussian kernel.
//! * [`SimWrap`] averages gradients over copies of the input scaled by `1/2^i`.
//!
//! DIM here shrinks into a canvas of the original size rather than enlarging,
//! so the wrapped model keeps its input contract.

use super::{Evaluation, GradientProvider};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

pub const DEFAULT_TIM_K: usize = 7;
pub const DEFAULT_TIM_SIGMA: f64 = 3.0;
pub const DEFAULT_MIN_SCALE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct TimKernel {
    size: usize,
    sigma: f64,
    weights: Tensor,
}

impl TimKernel {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }
}

/// Normalized `k x k` Gaussian, `w[i][j] ∝ exp(-((i-c)² + (j-c)²) / 2σ²)`.
pub fn gaussian_kernel(k: usize, sigma: f64) -> Result<TimKernel> {
    if k.is_multiple_of(2) {
        return Err(Error::invalid(format!("kernel size {k} must be odd")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "kernel sigma {sigma} must be positive"
        )));
    }
    let c = (k / 2) as f64;
    let mut raw = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            raw.push((-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = raw.iter().sum();
    let weights = Tensor::new(vec![k, k], raw.into_iter().map(|v| v / total).collect())?;
    Ok(TimKernel {
        size: k,
        sigma,
        weights,
    })
}

pub struct TimWrap<P> {
    inner: P,
    kernel: TimKernel,
}

impl<P: GradientProvider> TimWrap<P> {
    pub fn new(inner: P, kernel: TimKernel) -> Self {
        TimWrap { inner, kernel }
    }
}

impl<P: GradientProvider> GradientProvider for TimWrap<P> {
    fn evaluate(&self, x: &Tensor, y: usize, rng: &mut Rng) -> Result<Evaluation> {
        let e = self.inner.evaluate(x, y, rng)?;
        Ok(Evaluation {
            loss: e.loss,
            grad: e.grad.conv2d_same(&self.kernel.weights)?,
        })
    }

    fn query_cost(&self) -> usize {
        self.inner.query_cost()
    }

    fn input_shape(&self) -> [usize; 3] {
        self.inner.input_shape()
    }

    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }
}

pub struct SimWrap<P> {
    inner: P,
    copies: usize,
}

impl<P: GradientProvider> SimWrap<P> {
    pub fn new(inner: P, copies: usize) -> Result<Self> {
        if copies == 0 {
            return Err(Error::invalid("SIM needs at least one scale copy"));
        }
        Ok(SimWrap { inner, copies })
    }

    /// `[1, 1/2, 1/4, ...]`, one per copy.
    pub fn scales(&self) -> Vec<f64> {
        (0..self.copies).map(|i| 0.5f64.powi(i as i32)).collect()
    }
}

impl<P: GradientProvider> GradientProvider for SimWrap<P> {
    fn evaluate(&self, x: &Tensor, y: usize, rng: &mut Rng) -> Result<Evaluation> {
        let mut loss = 0.0;
        let mut grad: Option<Tensor> = None;
        for (i, s) in self.scales().into_iter().enumerate() {
            let e = self.inner.evaluate(&x.scale(s), y, rng)?;
            if i == 0 {
                loss = e.loss;
            }
            // chain rule through x ↦ s·x
            match grad.as_mut() {
                None => grad = Some(e.grad.scale(s)),
                Some(acc) => acc.axpy(s, &e.grad),
            }
        }
        let grad = grad.expect("copies >= 1").scale(1.0 / self.copies as f64);
        Ok(Evaluation { loss, grad })
    }

    fn query_cost(&self) -> usize {
        self.copies * self.inner.query_cost()
    }

    fn input_shape(&self) -> [usize; 3] {
        self.inner.input_shape()
    }

    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }
}

/// One concrete draw of the DIM transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimDraw {
    pub height: usize,
    pub width: usize,
    pub top: usize,
    pub left: usize,
}

pub struct DimWrap<P> {
    inner: P,
    prob: f64,
    min_scale: f64,
}

impl<P: GradientProvider> DimWrap<P> {
    pub fn new(inner: P, prob: f64, min_scale: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::invalid(format!(
                "DIM probability {prob} outside [0,1]"
            )));
        }
        if !(min_scale > 0.0 && min_scale <= 1.0) {
            return Err(Error::invalid(format!(
                "DIM min_scale {min_scale} outside (0,1]"
            )));
        }
        Ok(DimWrap {
            inner,
            prob,
            min_scale,
        })
    }

    /// Draws whether to transform and, if so, the geometry. With `prob == 0`
    /// nothing is drawn.
    pub fn draw(&self, rng: &mut Rng) -> Option<DimDraw> {
        if self.prob <= 0.0 || rng.next_f64() >= self.prob {
            return None;
        }
        let [_, h, w] = self.inner.input_shape();
        let lo = ((self.min_scale * h as f64).ceil() as usize).clamp(1, h);
        let height = rng.range_inclusive(lo, h);
        let width = ((height as f64 * w as f64 / h as f64).round() as usize).clamp(1, w);
        let top = rng.range_inclusive(0, h - height);
        let left = rng.range_inclusive(0, w - width);
        Some(DimDraw {
            height,
            width,
            top,
            left,
        })
    }

    /// Applies a draw: resize, then pad back to the input extents.
    pub fn transform(&self, x: &Tensor, d: DimDraw) -> Result<Tensor> {
        let [_, h, w] = self.inner.input_shape();
        x.bilinear_resize(d.height, d.width)?
            .pad_embed(h, w, d.top, d.left)
    }

    /// Adjoint of [`DimWrap::transform`] applied to a gradient on the canvas.
    pub fn pull_back(&self, g: &Tensor, d: DimDraw) -> Result<Tensor> {
        let [_, h, w] = self.inner.input_shape();
        g.crop(d.height, d.width, d.top, d.left)?
            .bilinear_resize_adjoint(h, w)
    }
}

impl<P: GradientProvider> GradientProvider for DimWrap<P> {
    fn evaluate(&self, x: &Tensor, y: usize, rng: &mut Rng) -> Result<Evaluation> {
        match self.draw(rng) {
            None => self.inner.evaluate(x, y, rng),
            Some(d) => {
                let e = self.inner.evaluate(&self.transform(x, d)?, y, rng)?;
                Ok(Evaluation {
                    loss: e.loss,
                    grad: self.pull_back(&e.grad, d)?,
                })
            }
        }
    }

    fn query_cost(&self) -> usize {
        self.inner.query_cost()
    }

    fn input_shape(&self) -> [usize; 3] {
        self.inner.input_shape()
    }

    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }
}

/// Settings of the composite transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtmParams {
    pub dim_prob: f64,
    pub min_scale: f64,
    pub tim_k: usize,
    pub tim_sigma: f64,
    pub sim_copies: usize,
}

impl CtmParams {
    /// Every component at its pass-through setting.
    pub fn identity() -> Self {
        CtmParams {
            dim_prob: 0.0,
            min_scale: DEFAULT_MIN_SCALE,
            tim_k: 1,
            tim_sigma: 1.0,
            sim_copies: 1,
        }
    }
}

impl Default for CtmParams {
    fn default() -> Self {
        CtmParams {
            dim_prob: 0.5,
            min_scale: DEFAULT_MIN_SCALE,
            tim_k: DEFAULT_TIM_K,
            tim_sigma: DEFAULT_TIM_SIGMA,
            sim_copies: 5,
        }
    }
}

/// `tim(sim(dim(inner)))`: DIM meets the inner provider, SIM averages the
/// DIM gradients over scales, TIM smooths the aggregate.
pub fn ctm_wrap<P: GradientProvider>(
    inner: P,
    p: CtmParams,
) -> Result<TimWrap<SimWrap<DimWrap<P>>>> {
    let dim = DimWrap::new(inner, p.dim_prob, p.min_scale)?;
    let sim = SimWrap::new(dim, p.sim_copies)?;
    Ok(TimWrap::new(sim, gaussian_kernel(p.tim_k, p.tim_sigma)?))
}
