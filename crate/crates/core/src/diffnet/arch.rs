use std::fmt;
use std::str::FromStr;

use super::{LayerSpec, Model};
use crate::error::{Error, Result};
use crate::tensor::Rng;

/// Hidden width of the MLP.
pub const MLP_HIDDEN: usize = 64;
/// Output channels of the CNN's convolution.
pub const CNN_CHANNELS: usize = 4;

/// The built-in architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    /// flatten → dense
    Logreg,
    /// flatten → dense(64) → relu → dense
    Mlp,
    /// conv3x3(4) → relu → avgpool2 → flatten → dense
    Cnn,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Logreg, Arch::Mlp, Arch::Cnn];

    pub fn layers(self, input_shape: [usize; 3], classes: usize) -> Vec<LayerSpec> {
        let [c, h, w] = input_shape;
        let n = c * h * w;
        match self {
            Arch::Logreg => vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: n,
                    outputs: classes,
                },
            ],
            Arch::Mlp => vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: n,
                    outputs: MLP_HIDDEN,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    inputs: MLP_HIDDEN,
                    outputs: classes,
                },
            ],
            Arch::Cnn => vec![
                LayerSpec::Conv3x3 {
                    in_channels: c,
                    out_channels: CNN_CHANNELS,
                },
                LayerSpec::Relu,
                LayerSpec::AvgPool2,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: CNN_CHANNELS * (h / 2) * (w / 2),
                    outputs: classes,
                },
            ],
        }
    }

    pub fn build(self, input_shape: [usize; 3], classes: usize, rng: &mut Rng) -> Result<Model> {
        Model::init(input_shape, self.layers(input_shape, classes), rng)
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::Logreg => "logreg",
            Arch::Mlp => "mlp",
            Arch::Cnn => "cnn",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(Arch::Logreg),
            "mlp" => Ok(Arch::Mlp),
            "cnn" => Ok(Arch::Cnn),
            other => Err(Error::invalid(format!("unknown architecture {other:?}"))),
        }
    }
}
