//! Variance-tuned gradient attacks on toy classifiers.
//!
//! * [`tensor`]: dense `f64` tensors, image ops with exact adjoints, SplitMix64 streams.
//! * [`diffnet`]: small differentiable classifiers, SGD training, JSON model files.
//! * [`providers`]: gradient sources: models, logit-fused ensembles, DIM/TIM/SIM/CTM.
//! * [`attacks`]: the FGSM family and the variance-tuned VMI/VNI-FGSM.
//! * [`bench`]: datasets, experiment matrices, sweeps and result files.

pub mod attacks;
pub mod bench;
pub mod check;
pub mod diffnet;
pub mod error;
pub mod providers;
pub mod tensor;

pub use error::{Error, Result};
