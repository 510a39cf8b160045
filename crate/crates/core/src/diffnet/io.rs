//! JSON model files.
//!
//! ```json
//! {"format_version":1,"input_shape":[1,28,28],"num_classes":10,
//!  "layers":[{"kind":"flatten"},{"kind":"dense","in":784,"out":10}],
//!  "weights":[[w00, w01, ..., b0, b1, ...]]}
//! ```
//!
//! `weights` holds one flat array per parameterized layer: the row-major
//! weight tensor followed by the bias vector.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerSpec, Model, Params};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
    pub weights: Vec<Vec<f64>>,
}

impl From<&Model> for ModelFile {
    fn from(m: &Model) -> Self {
        let weights = m
            .params()
            .map(|p| {
                p.weight
                    .data()
                    .iter()
                    .chain(p.bias.data())
                    .copied()
                    .collect()
            })
            .collect();
        ModelFile {
            format_version: FORMAT_VERSION,
            input_shape: m.input_shape(),
            num_classes: m.num_classes(),
            layers: m.layers().to_vec(),
            weights,
        }
    }
}

impl TryFrom<ModelFile> for Model {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Model> {
        if f.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "format_version: unsupported value {} (expected {FORMAT_VERSION})",
                f.format_version
            )));
        }
        let parameterized: Vec<(usize, Vec<usize>, usize)> = f
            .layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.param_shape().map(|(ws, b)| (i, ws, b)))
            .collect();
        if parameterized.len() != f.weights.len() {
            return Err(Error::Validation(format!(
                "weights: {} arrays for {} parameterized layers",
                f.weights.len(),
                parameterized.len()
            )));
        }
        let mut params = Vec::with_capacity(f.weights.len());
        for ((layer, wshape, blen), flat) in parameterized.into_iter().zip(f.weights) {
            let nw: usize = wshape.iter().product();
            if flat.len() != nw + blen {
                return Err(Error::Validation(format!(
                    "layer {layer}: expected {} weight values, found {}",
                    nw + blen,
                    flat.len()
                )));
            }
            if flat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "layer {layer}: non-finite weight"
                )));
            }
            let bias = flat[nw..].to_vec();
            let mut weight = flat;
            weight.truncate(nw);
            params.push(Params {
                weight: Tensor::new(wshape, weight)?,
                bias: Tensor::from_vec(bias),
            });
        }
        let model = Model::from_parts(f.input_shape, f.layers, params)?;
        if model.num_classes() != f.num_classes {
            return Err(Error::Validation(format!(
                "num_classes: file says {}, layers produce {}",
                f.num_classes,
                model.num_classes()
            )));
        }
        Ok(model)
    }
}

impl Model {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile::from(self)).expect("model file serializes")
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Model::try_from(file)
    }
}

pub fn save_model(m: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, m.to_json())?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    Model::from_json(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::Arch;
    use crate::tensor::Rng;

    #[test]
    fn truncated_file_is_a_parse_error() {
        let m = Arch::Logreg
            .build([1, 4, 4], 3, &mut Rng::new(1, 0))
            .unwrap();
        let json = m.to_json();
        let cut = &json[..json.len() / 2];
        assert!(matches!(Model::from_json(cut), Err(Error::Parse(_))));
    }

    #[test]
    fn wrong_weight_length_names_layer() {
        let m = Arch::Mlp.build([1, 4, 4], 3, &mut Rng::new(1, 0)).unwrap();
        let mut file = ModelFile::from(&m);
        file.weights[1].pop();
        let err = Model::try_from(file).unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("layer 3"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_named() {
        let text = r#"{"format_version":1,"input_shape":[1,2,2],"layers":[],"weights":[]}"#;
        match Model::from_json(text) {
            Err(Error::Parse(msg)) => assert!(msg.contains("num_classes"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let m = Arch::Logreg
            .build([1, 2, 2], 2, &mut Rng::new(1, 0))
            .unwrap();
        let mut file = ModelFile::from(&m);
        file.format_version = 2;
        assert!(matches!(Model::try_from(file), Err(Error::Parse(_))));
    }
}
