//! Invariant self-check.
//!
//! A quick battery over small random models that exercises the exact
//! identities the engine relies on. Used by the `check` subcommand.

use crate::attacks::{gradient_variance, make_config, run_attack, Method, BUDGET_TOL};
use crate::diffnet::{finite_diff_gradient, Arch, Model};
use crate::error::Result;
use crate::providers::{
    gaussian_kernel, model_provider, DimWrap, EnsembleProvider, GradientProvider, SimWrap, TimWrap,
};
use crate::tensor::{Rng, Tensor};

const SHAPE: [usize; 3] = [1, 8, 8];
const CLASSES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn image(rng: &mut Rng) -> Tensor {
    Tensor::uniform_perturbation(rng, &SHAPE, 0.5).map(|v| v + 0.5)
}

fn models(rng: &mut Rng) -> Result<Vec<Model>> {
    Arch::ALL
        .iter()
        .map(|a| a.build(SHAPE, CLASSES, &mut rng.child(*a as u64)))
        .collect()
}

fn outcome(name: &'static str, r: Result<(bool, String)>) -> CheckOutcome {
    match r {
        Ok((passed, detail)) => CheckOutcome {
            name,
            passed,
            detail,
        },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Runs every check with models and inputs derived from `seed`.
pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    let root = Rng::new(seed, 0);
    vec![
        outcome("degeneration", degeneration(root.child(0))),
        outcome("gradient", gradients(root.child(1))),
        outcome("zero-variance", zero_variance(root.child(2))),
        outcome("kernel", kernel()),
        outcome("adjoint", adjoints(root.child(4))),
        outcome("wrapper-identity", wrapper_identities(root.child(5))),
        outcome("budget", budget(root.child(6))),
    ]
}

fn degeneration(mut rng: Rng) -> Result<(bool, String)> {
    let ms = models(&mut rng)?;
    let (mut same, mut total) = (0, 0);
    for m in &ms {
        let gp = model_provider(m);
        for case in 0..4u64 {
            let x = image(&mut rng);
            let y = case as usize % CLASSES;
            for (tuned, plain) in [
                (Method::Vmifgsm, Method::Mifgsm),
                (Method::Vnifgsm, Method::Nifgsm),
            ] {
                let base = run_attack(
                    &x,
                    y,
                    &gp,
                    &make_config(plain, 16.0, 10),
                    &mut Rng::new(case, 1),
                )?;
                let mut no_beta = make_config(tuned, 16.0, 10);
                no_beta.beta = 0.0;
                let mut no_samples = make_config(tuned, 16.0, 10);
                no_samples.samples = 0;
                for cfg in [no_beta, no_samples] {
                    let r = run_attack(&x, y, &gp, &cfg, &mut Rng::new(case, 1))?;
                    total += 1;
                    same += bit_equal(&r.x_adv, &base.x_adv) as usize;
                }
            }
        }
    }
    Ok((
        same == total,
        format!("{same}/{total} zero-variance runs bit-identical to the momentum baseline"),
    ))
}

fn bit_equal(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(p, q)| p.to_bits() == q.to_bits())
}

fn gradients(mut rng: Rng) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for m in models(&mut rng)? {
        for case in 0..3 {
            let x = image(&mut rng);
            let (_, g) = m.loss_and_input_gradient(&x, case % CLASSES)?;
            let fd = finite_diff_gradient(&m, &x, case % CLASSES, 1e-5)?;
            worst = worst.max(g.sub(&fd).norm_l2() / fd.norm_l2().max(1e-300));
        }
    }
    let w = worst;
    Ok((
        w <= 1e-6,
        format!("worst relative error vs finite differences {w:.2e}"),
    ))
}

fn zero_variance(mut rng: Rng) -> Result<(bool, String)> {
    let m = Arch::Mlp.build(SHAPE, CLASSES, &mut rng)?;
    let gp = model_provider(&m);
    let x = image(&mut rng);
    let zero = Tensor::zeros(x.shape());
    let before = rng.clone();
    let a = gradient_variance(&x, 0, &gp, 0.0, 16.0 / 255.0, 20, &mut rng)?;
    let b = gradient_variance(&x, 0, &gp, 1.5, 16.0 / 255.0, 0, &mut rng)?;
    let ok = a == zero && b == zero && rng == before;
    Ok((
        ok,
        format!("beta=0 and N=0 return exact zeros without drawing: {ok}"),
    ))
}

fn kernel() -> Result<(bool, String)> {
    let k = gaussian_kernel(7, 3.0)?;
    let w = k.weights().data();
    let symmetric = (0..7).all(|i| {
        (0..7).all(|j| w[i * 7 + j] == w[j * 7 + i] && w[i * 7 + j] == w[(6 - i) * 7 + j])
    });
    let (err, sym, nonneg) = (
        (k.weights().sum() - 1.0).abs(),
        symmetric,
        w.iter().all(|&v| v >= 0.0),
    );
    Ok((
        err <= 1e-12 && sym && nonneg,
        format!("7x7 sum error {err:.1e}, symmetric {sym}, nonnegative {nonneg}"),
    ))
}

fn adjoints(mut rng: Rng) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (h, w) = (rng.range_inclusive(2, 12), rng.range_inclusive(2, 12));
        let (oh, ow) = (rng.range_inclusive(1, h), rng.range_inclusive(1, w));
        let (top, left) = (
            rng.range_inclusive(0, h - oh),
            rng.range_inclusive(0, w - ow),
        );
        let x = Tensor::uniform_perturbation(&mut rng, &[1, h, w], 1.0);
        let u = Tensor::uniform_perturbation(&mut rng, &[1, oh, ow], 1.0);
        let big = Tensor::uniform_perturbation(&mut rng, &[1, h, w], 1.0);
        let lhs = x.bilinear_resize(oh, ow)?.dot(&u);
        let rhs = x.dot(&u.bilinear_resize_adjoint(h, w)?);
        worst = worst.max((lhs - rhs).abs());
        let lhs = u.pad_embed(h, w, top, left)?.dot(&big);
        let rhs = u.dot(&big.crop(oh, ow, top, left)?);
        worst = worst.max((lhs - rhs).abs());
    }
    let w = worst;
    Ok((
        w <= 1e-9,
        format!("worst inner-product gap for resize and pad {w:.1e}"),
    ))
}

fn wrapper_identities(mut rng: Rng) -> Result<(bool, String)> {
    let m = Arch::Cnn.build(SHAPE, CLASSES, &mut rng)?;
    let base = model_provider(&m);
    let dim = DimWrap::new(base, 0.0, 0.9)?;
    let tim = TimWrap::new(base, gaussian_kernel(1, 1.0)?);
    let sim = SimWrap::new(base, 1)?;
    let ens = EnsembleProvider::new(vec![&m], None)?;
    let wrapped: [&dyn GradientProvider; 4] = [&dim, &tim, &sim, &ens];
    let (mut same, mut total) = (0, 0);
    for case in 0..10 {
        let x = image(&mut rng);
        let want = base.evaluate(&x, case % CLASSES, &mut Rng::new(0, 0))?;
        for w in wrapped {
            let got = w.evaluate(&x, case % CLASSES, &mut Rng::new(0, 0))?;
            total += 1;
            same += (got.loss.to_bits() == want.loss.to_bits() && bit_equal(&got.grad, &want.grad))
                as usize;
        }
    }
    Ok((
        same == total,
        format!("{same}/{total} pass-through evaluations bit-identical"),
    ))
}

fn budget(mut rng: Rng) -> Result<(bool, String)> {
    let m = Arch::Cnn.build(SHAPE, CLASSES, &mut rng)?;
    let gp = model_provider(&m);
    let mut worst = 0.0f64;
    for method in Method::ALL {
        let cfg = make_config(method, 16.0, 10);
        for case in 0..3 {
            let x = image(&mut rng);
            let r = run_attack(&x, case % CLASSES, &gp, &cfg, &mut rng.child(case as u64))?;
            if r.x_adv.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Ok((false, format!("{method}: pixel outside [0,1]")));
            }
            worst = worst.max(r.x_adv.sub(&x).norm_linf() - cfg.epsilon());
        }
    }
    Ok((
        worst <= BUDGET_TOL,
        format!("largest excess over 16/255 is {worst:.1e}, all pixels in [0,1]"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_checks(2024) {
            assert!(c.passed, "{c}");
        }
    }
}
