use super::dataset::Dataset;
use crate::diffnet::{train_sgd, Arch, Model, TrainConfig, TrainReport};
use crate::error::Result;
use crate::tensor::Rng;

/// Initializes `arch` from `seed` (stream 1) and trains it with minibatch
/// order drawn from `seed` (stream 2).
pub fn train_model(
    arch: Arch,
    data: &Dataset,
    seed: u64,
    cfg: TrainConfig,
) -> Result<(Model, TrainReport)> {
    let model = arch.build(
        data.image_shape(),
        data.num_classes(),
        &mut Rng::new(seed, 1),
    )?;
    train_sgd(&model, &data.samples(), cfg, &mut Rng::new(seed, 2))
}
