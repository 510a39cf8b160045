#![allow(dead_code)]

use vtbench::diffnet::{LayerSpec, Model};
use vtbench::tensor::Tensor;

/// True when a central difference of step `h` in any one input coordinate
/// cannot move a ReLU pre-activation across zero, so finite differences
/// are a valid oracle at `x`. Only ReLUs fed directly by an affine layer
/// are supported, which covers the built-in architectures.
pub fn fd_admissible(m: &Model, x: &Tensor, h: f64) -> bool {
    let trace = m.forward_trace(x).unwrap();
    let acts = trace.activations();
    let mut params = m.params();
    let mut last = None;
    for (i, layer) in m.layers().iter().enumerate() {
        if layer.param_shape().is_some() {
            last = params.next();
        }
        if *layer == LayerSpec::Relu {
            let reach = 2.0 * h * last.expect("affine layer before relu").weight.norm_linf();
            if acts[i].data().iter().any(|v| v.abs() <= reach) {
                return false;
            }
        }
    }
    true
}

use vtbench::error::Result;
use vtbench::providers::{Evaluation, GradientProvider};
use vtbench::tensor::Rng;

fn grad(m: &Model, x: &[f64], y: usize) -> Vec<f64> {
    let t = Tensor::new(m.input_shape().to_vec(), x.to_vec()).unwrap();
    m.loss_and_input_gradient(&t, y).unwrap().1.into_data()
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Momentum iteration, optionally with a Nesterov lookahead and variance
/// tuning, written out on plain vectors. Budgets are in 0-255 units and the
/// step is `(ε₂₅₅ / T) / 255`.
#[allow(clippy::too_many_arguments)]
pub fn reference_momentum(
    m: &Model,
    x0: &[f64],
    y: usize,
    eps_255: f64,
    steps: usize,
    mu: f64,
    beta: f64,
    n: usize,
    nesterov: bool,
    rng: &mut Rng,
) -> Vec<f64> {
    let shape = m.input_shape();
    let eps = eps_255 / 255.0;
    let alpha = eps_255 / steps as f64 / 255.0;
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut v = vec![0.0; x.len()];
    for _ in 0..steps {
        let at: Vec<f64> = if nesterov {
            x.iter()
                .zip(&g)
                .map(|(a, b)| a + b * (alpha * mu))
                .collect()
        } else {
            x.clone()
        };
        let gr = grad(m, &at, y);
        let tuned: Vec<f64> = gr.iter().zip(&v).map(|(a, b)| a + b).collect();
        let denom = tuned.iter().map(|a| a.abs()).sum::<f64>() + 1e-12;
        for i in 0..g.len() {
            g[i] = g[i] * mu + tuned[i] / denom;
        }
        if n > 0 && beta > 0.0 {
            let mut sum: Option<Vec<f64>> = None;
            for _ in 0..n {
                let r = Tensor::uniform_perturbation(rng, &shape, beta * eps);
                let p: Vec<f64> = at.iter().zip(r.data()).map(|(a, b)| a + b).collect();
                let gi = grad(m, &p, y);
                sum = Some(match sum {
                    None => gi,
                    Some(s) => s.iter().zip(&gi).map(|(a, b)| a + b).collect(),
                });
            }
            v = sum
                .unwrap()
                .iter()
                .zip(&gr)
                .map(|(s, c)| s * (1.0 / n as f64) - c)
                .collect();
        }
        for i in 0..x.len() {
            x[i] = (x[i] + sgn(g[i]) * alpha).clamp(0.0, 1.0);
        }
    }
    x
}

pub fn reference_ifgsm(m: &Model, x0: &[f64], y: usize, eps_255: f64, steps: usize) -> Vec<f64> {
    let alpha = eps_255 / steps as f64 / 255.0;
    let mut x = x0.to_vec();
    for _ in 0..steps {
        let gr = grad(m, &x, y);
        for i in 0..x.len() {
            x[i] = (x[i] + sgn(gr[i]) * alpha).clamp(0.0, 1.0);
        }
    }
    x
}

pub fn reference_fgsm(m: &Model, x0: &[f64], y: usize, eps_255: f64) -> Vec<f64> {
    let eps = eps_255 / 255.0;
    let gr = grad(m, x0, y);
    x0.iter()
        .zip(&gr)
        .map(|(a, g)| (a + sgn(*g) * eps).clamp(0.0, 1.0))
        .collect()
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|a| a.to_bits()).collect()
}

/// `J(x) = ½‖Ax − b‖²`, whose gradient `Aᵀ(Ax − b)` is affine in `x`.
pub struct Quadratic {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Quadratic {
    /// Random 6x16 instance and a point in `[0,1]^16`.
    pub fn random(seed: u64) -> (Quadratic, Tensor) {
        let mut rng = Rng::new(seed, 0);
        let a = (0..6)
            .map(|_| Tensor::uniform_perturbation(&mut rng, &[16], 1.0).into_data())
            .collect();
        let b = Tensor::uniform_perturbation(&mut rng, &[6], 1.0).into_data();
        let x = Tensor::uniform_perturbation(&mut rng, &[1, 4, 4], 0.5).map(|v| v + 0.5);
        (Quadratic { a, b }, x)
    }
}

impl GradientProvider for Quadratic {
    fn evaluate(&self, x: &Tensor, _y: usize, _rng: &mut Rng) -> Result<Evaluation> {
        let r: Vec<f64> = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(x.data()).map(|(p, q)| p * q).sum::<f64>() - b)
            .collect();
        let mut g = vec![0.0; x.len()];
        for (row, ri) in self.a.iter().zip(&r) {
            for (gj, aj) in g.iter_mut().zip(row) {
                *gj += aj * ri;
            }
        }
        Ok(Evaluation {
            loss: 0.5 * r.iter().map(|v| v * v).sum::<f64>(),
            grad: Tensor::new(x.shape().to_vec(), g)?,
        })
    }

    fn query_cost(&self) -> usize {
        1
    }

    fn input_shape(&self) -> [usize; 3] {
        [1, 4, 4]
    }

    fn num_classes(&self) -> usize {
        1
    }
}
