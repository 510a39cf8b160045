use super::{cross_entropy, Model, Params};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 8,
            lr: 0.05,
            batch: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss before the first epoch.
    pub initial_loss: f64,
    /// Mean training loss after each epoch.
    pub epoch_losses: Vec<f64>,
    pub final_accuracy: f64,
}

/// Minibatch SGD on mean cross-entropy. The sample order is reshuffled from
/// `rng` every epoch; nothing else is random, so a fixed seed and data order
/// reproduce the weights bit for bit.
pub fn train_sgd(
    model: &Model,
    data: &[(Tensor, usize)],
    cfg: TrainConfig,
    rng: &mut Rng,
) -> Result<(Model, TrainReport)> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if !(cfg.lr >= 0.0) || !cfg.lr.is_finite() {
        return Err(Error::invalid(format!(
            "learning rate {} must be finite and non-negative",
            cfg.lr
        )));
    }
    if cfg.batch == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    for (x, y) in data {
        if x.shape() != model.input_shape() || *y >= model.num_classes() {
            return Err(Error::invalid(format!(
                "training sample with shape {:?} / label {y} does not fit the model",
                x.shape()
            )));
        }
    }

    let mut model = model.clone();
    let initial_loss = mean_loss(&model, data);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch) {
            let mut acc: Option<Vec<Option<Params>>> = None;
            for &i in chunk {
                let (x, y) = &data[i];
                let trace = model.forward_trace(x)?;
                let (_, dlogits) = cross_entropy(trace.logits(), *y);
                let (_, grads) = model.backward(&trace, &dlogits, true);
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(sum) => {
                        for (s, g) in sum.iter_mut().zip(grads) {
                            if let (Some(s), Some(g)) = (s.as_mut(), g) {
                                s.weight.axpy(1.0, &g.weight);
                                s.bias.axpy(1.0, &g.bias);
                            }
                        }
                    }
                }
            }
            let step = -cfg.lr / chunk.len() as f64;
            if step == 0.0 {
                continue;
            }
            for (p, g) in model.params_mut().zip(acc.unwrap_or_default()) {
                if let (Some(p), Some(g)) = (p.as_mut(), g) {
                    p.weight.axpy(step, &g.weight);
                    p.bias.axpy(step, &g.bias);
                }
            }
        }
        epoch_losses.push(mean_loss(&model, data));
    }

    let final_accuracy = accuracy(&model, data);
    Ok((
        model,
        TrainReport {
            initial_loss,
            epoch_losses,
            final_accuracy,
        },
    ))
}

fn mean_loss(model: &Model, data: &[(Tensor, usize)]) -> f64 {
    let total: f64 = data
        .iter()
        .map(|(x, y)| cross_entropy(&model.forward_logits(x).expect("validated input"), *y).0)
        .sum();
    total / data.len() as f64
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn accuracy(model: &Model, data: &[(Tensor, usize)]) -> f64 {
    let correct = data
        .iter()
        .filter(|(x, y)| model.predict(x).map(|p| p == *y).unwrap_or(false))
        .count();
    correct as f64 / data.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::Arch;

    fn two_blobs(rng: &mut Rng, n: usize) -> Vec<(Tensor, usize)> {
        // Two classes in 4-D, means ±1.5 on every axis, unit noise scaled to 0.5.
        (0..n)
            .map(|i| {
                let y = i % 2;
                let mu = if y == 0 { -1.5 } else { 1.5 };
                let x: Vec<f64> = (0..4).map(|_| mu + 0.5 * rng.next_gaussian()).collect();
                (Tensor::new(vec![1, 2, 2], x).unwrap(), y)
            })
            .collect()
    }

    #[test]
    fn logreg_separates_blobs() {
        let mut rng = Rng::new(21, 0);
        let data = two_blobs(&mut rng, 200);
        let m = Arch::Logreg.build([1, 2, 2], 2, &mut rng).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            lr: 0.1,
            batch: 8,
        };
        let (trained, report) = train_sgd(&m, &data, cfg, &mut rng).unwrap();
        assert!(report.final_accuracy >= 0.99, "{report:?}");
        assert!(accuracy(&trained, &data) >= 0.99);
        for w in report.epoch_losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{report:?}");
        }
        assert!(report.epoch_losses[0] < report.initial_loss);
    }

    #[test]
    fn zero_lr_keeps_weights() {
        let mut rng = Rng::new(22, 0);
        let data = two_blobs(&mut rng, 20);
        let m = Arch::Mlp.build([1, 2, 2], 2, &mut rng).unwrap();
        let (trained, _) = train_sgd(
            &m,
            &data,
            TrainConfig {
                epochs: 2,
                lr: 0.0,
                batch: 4,
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(trained, m);
    }

    #[test]
    fn same_seed_same_weights() {
        let mut rng = Rng::new(23, 0);
        let data = two_blobs(&mut rng, 40);
        let m = Arch::Cnn.build([1, 2, 2], 2, &mut rng).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            lr: 0.05,
            batch: 5,
        };
        let (a, _) = train_sgd(&m, &data, cfg, &mut Rng::new(5, 1)).unwrap();
        let (b, _) = train_sgd(&m, &data, cfg, &mut Rng::new(5, 1)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn empty_data_and_zero_batch_rejected() {
        let mut rng = Rng::new(24, 0);
        let m = Arch::Logreg.build([1, 2, 2], 2, &mut rng).unwrap();
        assert!(train_sgd(&m, &[], TrainConfig::default(), &mut rng).is_err());
        let data = two_blobs(&mut rng, 4);
        let cfg = TrainConfig {
            batch: 0,
            ..TrainConfig::default()
        };
        assert!(train_sgd(&m, &data, cfg, &mut rng).is_err());
    }
}
