//! Small differentiable classifiers with hand-written reverse mode.
//!
//! A [`Model`] is a straight pipeline of [`LayerSpec`]s over a `[C,H,W]`
//! input ending in a logits vector. Gradients are exact: every layer has an
//! explicit backward rule, and the loss is softmax cross-entropy.

mod arch;
mod io;
mod train;

pub use arch::Arch;
pub use io::{load_model, save_model, ModelFile, FORMAT_VERSION};
pub use train::{accuracy, train_sgd, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    #[serde(rename = "dense")]
    Dense {
        #[serde(rename = "in")]
        inputs: usize,
        #[serde(rename = "out")]
        outputs: usize,
    },
    #[serde(rename = "conv3x3-same")]
    Conv3x3 {
        in_channels: usize,
        out_channels: usize,
    },
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "avgpool2")]
    AvgPool2,
    #[serde(rename = "flatten")]
    Flatten,
}

impl LayerSpec {
    /// Output shape for `input`, or an error if the layer cannot accept it.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match (*self, input) {
            (LayerSpec::Dense { inputs, outputs }, &[n]) if n == inputs && outputs > 0 => {
                Ok(vec![outputs])
            }
            (
                LayerSpec::Conv3x3 {
                    in_channels,
                    out_channels,
                },
                &[c, h, w],
            ) if c == in_channels && out_channels > 0 => Ok(vec![out_channels, h, w]),
            (LayerSpec::AvgPool2, &[c, h, w]) if h >= 2 && w >= 2 => Ok(vec![c, h / 2, w / 2]),
            (LayerSpec::Relu, s) => Ok(s.to_vec()),
            (LayerSpec::Flatten, s) => Ok(vec![s.iter().product()]),
            (layer, s) => Err(Error::invalid(format!(
                "layer {layer:?} cannot take input of shape {s:?}"
            ))),
        }
    }

    /// `(weight shape, bias length)` for parameterized layers.
    pub fn param_shape(&self) -> Option<(Vec<usize>, usize)> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some((vec![outputs, inputs], outputs)),
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => Some((vec![out_channels, in_channels, 3, 3], out_channels)),
            _ => None,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv3x3 { in_channels, .. } => in_channels * 9,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Cross-entropy loss together with the logits it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub logits: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: [usize; 3],
    num_classes: usize,
    layers: Vec<LayerSpec>,
    params: Vec<Option<Params>>,
}

/// Activations of one forward pass, input first, logits last.
pub struct Trace {
    acts: Vec<Tensor>,
}

impl Trace {
    /// Input to each layer, followed by the logits.
    pub fn activations(&self) -> &[Tensor] {
        &self.acts
    }

    pub fn logits(&self) -> &Tensor {
        self.acts.last().expect("trace holds at least the input")
    }
}

impl Model {
    /// Fresh model with He-uniform weights, `U[-sqrt(6/fan_in), sqrt(6/fan_in)]`, and zero biases.
    pub fn init(input_shape: [usize; 3], layers: Vec<LayerSpec>, rng: &mut Rng) -> Result<Model> {
        let num_classes = Self::check_layers(input_shape, &layers)?;
        let params = layers
            .iter()
            .map(|layer| {
                layer.param_shape().map(|(wshape, blen)| {
                    let bound = (6.0 / layer.fan_in() as f64).sqrt();
                    Params {
                        weight: Tensor::uniform_perturbation(rng, &wshape, bound),
                        bias: Tensor::zeros(&[blen]),
                    }
                })
            })
            .collect();
        Ok(Model {
            input_shape,
            num_classes,
            layers,
            params,
        })
    }

    /// Model from explicit parameters, one entry per parameterized layer in order.
    pub fn from_parts(
        input_shape: [usize; 3],
        layers: Vec<LayerSpec>,
        params: Vec<Params>,
    ) -> Result<Model> {
        let num_classes = Self::check_layers(input_shape, &layers)?;
        let mut supplied = params.into_iter();
        let mut slots = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            match layer.param_shape() {
                Some((wshape, blen)) => {
                    let p = supplied.next().ok_or_else(|| {
                        Error::Validation(format!("layer {i}: missing parameters"))
                    })?;
                    if p.weight.shape() != wshape.as_slice() || p.bias.shape() != [blen] {
                        return Err(Error::Validation(format!(
                            "layer {i}: parameter shapes {:?}/{:?} do not match {:?}/[{blen}]",
                            p.weight.shape(),
                            p.bias.shape(),
                            wshape
                        )));
                    }
                    slots.push(Some(p));
                }
                None => slots.push(None),
            }
        }
        if supplied.next().is_some() {
            return Err(Error::Validation(
                "more parameter sets than parameterized layers".into(),
            ));
        }
        Ok(Model {
            input_shape,
            num_classes,
            layers,
            params: slots,
        })
    }

    fn check_layers(input_shape: [usize; 3], layers: &[LayerSpec]) -> Result<usize> {
        if input_shape.contains(&0) {
            return Err(Error::invalid(format!(
                "input shape {input_shape:?} has a zero extent"
            )));
        }
        let mut shape = input_shape.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer
                .output_shape(&shape)
                .map_err(|e| Error::Validation(format!("layer {i}: {e}")))?;
        }
        match shape[..] {
            [k] if k >= 1 => Ok(k),
            _ => Err(Error::Validation(format!(
                "network ends in shape {shape:?}, expected a logits vector"
            ))),
        }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Parameters of each parameterized layer, in layer order.
    pub fn params(&self) -> impl Iterator<Item = &Params> {
        self.params.iter().flatten()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape {
            return Err(Error::invalid(format!(
                "input shape {:?} does not match model input {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.num_classes {
            return Err(Error::invalid(format!(
                "label {y} outside 0..{}",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn forward_trace(&self, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (layer, params) in self.layers.iter().zip(&self.params) {
            let next = layer_forward(layer, params.as_ref(), acts.last().unwrap());
            acts.push(next);
        }
        Ok(Trace { acts })
    }

    pub fn forward_logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(x)?.acts.pop().unwrap())
    }

    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(self.forward_logits(x)?.argmax())
    }

    /// Reverse pass from a logits gradient. Returns the input gradient and,
    /// when `want_params`, per-layer parameter gradients.
    pub fn backward(
        &self,
        trace: &Trace,
        dlogits: &Tensor,
        want_params: bool,
    ) -> (Tensor, Vec<Option<Params>>) {
        let mut grad = dlogits.clone();
        let mut pgrads: Vec<Option<Params>> = vec![None; self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let (gin, gp) = layer_backward(
                &self.layers[i],
                self.params[i].as_ref(),
                &trace.acts[i],
                &grad,
                want_params,
            );
            pgrads[i] = gp;
            grad = gin;
        }
        (grad, pgrads)
    }

    pub fn loss(&self, x: &Tensor, y: usize) -> Result<f64> {
        self.check_label(y)?;
        Ok(cross_entropy(&self.forward_logits(x)?, y).0)
    }

    pub fn loss_and_input_gradient(&self, x: &Tensor, y: usize) -> Result<(LossValue, Tensor)> {
        self.check_label(y)?;
        let trace = self.forward_trace(x)?;
        let (loss, dlogits) = cross_entropy(trace.logits(), y);
        let (dx, _) = self.backward(&trace, &dlogits, false);
        Ok((
            LossValue {
                loss,
                logits: trace.logits().clone(),
            },
            dx,
        ))
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut Option<Params>> {
        self.params.iter_mut()
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &Tensor) -> Tensor {
    let m = logits
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|v| (v - m).exp());
    let s = e.sum();
    e.scale(1.0 / s)
}

/// `-log softmax(logits)[y]` and its gradient `softmax(logits) - onehot(y)`.
pub fn cross_entropy(logits: &Tensor, y: usize) -> (f64, Tensor) {
    let m = logits
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits
        .data()
        .iter()
        .map(|v| (v - m).exp())
        .sum::<f64>()
        .ln();
    let mut grad = softmax(logits);
    grad.data_mut()[y] -= 1.0;
    (lse - logits.data()[y], grad)
}

/// Central differences `(J(x+h e_i) - J(x-h e_i)) / 2h` for every coordinate.
pub fn finite_diff_gradient(m: &Model, x: &Tensor, y: usize, h: f64) -> Result<Tensor> {
    finite_diff(|p| m.loss(p, y), x, h)
}

/// Central-difference gradient of an arbitrary scalar function.
pub fn finite_diff(f: impl Fn(&Tensor) -> Result<f64>, x: &Tensor, h: f64) -> Result<Tensor> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("step {h} must be positive")));
    }
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

fn layer_forward(layer: &LayerSpec, params: Option<&Params>, x: &Tensor) -> Tensor {
    match *layer {
        LayerSpec::Dense { inputs, outputs } => {
            let p = params.expect("dense layer has parameters");
            let w = p.weight.data();
            let xin = x.data();
            let out = (0..outputs)
                .map(|o| {
                    let row = &w[o * inputs..(o + 1) * inputs];
                    p.bias.data()[o] + row.iter().zip(xin).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            Tensor::from_vec(out)
        }
        LayerSpec::Conv3x3 {
            in_channels,
            out_channels,
        } => {
            let p = params.expect("conv layer has parameters");
            let (h, w) = (x.shape()[1], x.shape()[2]);
            let mut out = vec![0.0; out_channels * h * w];
            let wt = p.weight.data();
            let xin = x.data();
            for o in 0..out_channels {
                let dst = &mut out[o * h * w..(o + 1) * h * w];
                dst.fill(p.bias.data()[o]);
                for c in 0..in_channels {
                    let src = &xin[c * h * w..(c + 1) * h * w];
                    let k = &wt[(o * in_channels + c) * 9..(o * in_channels + c + 1) * 9];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let kv = k[ky * 3 + kx];
                            for i in 0..h {
                                let si = i as isize + ky as isize - 1;
                                if si < 0 || si >= h as isize {
                                    continue;
                                }
                                let srow = &src[si as usize * w..(si as usize + 1) * w];
                                let drow = &mut dst[i * w..(i + 1) * w];
                                // output column j reads input column j + kx - 1
                                let (j0, j1) = match kx {
                                    0 => (1, w),
                                    1 => (0, w),
                                    _ => (0, w - 1),
                                };
                                for j in j0..j1 {
                                    drow[j] += kv * srow[j + kx - 1];
                                }
                            }
                        }
                    }
                }
            }
            Tensor::new(vec![out_channels, h, w], out).unwrap()
        }
        LayerSpec::Relu => x.map(|v| v.max(0.0)),
        LayerSpec::AvgPool2 => {
            let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (oh, ow) = (h / 2, w / 2);
            let xin = x.data();
            let mut out = vec![0.0; c * oh * ow];
            for ch in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let base = ch * h * w + 2 * i * w + 2 * j;
                        out[ch * oh * ow + i * ow + j] =
                            0.25 * (xin[base] + xin[base + 1] + xin[base + w] + xin[base + w + 1]);
                    }
                }
            }
            Tensor::new(vec![c, oh, ow], out).unwrap()
        }
        LayerSpec::Flatten => {
            let n = x.len();
            x.clone().reshape(&[n]).unwrap()
        }
    }
}

fn layer_backward(
    layer: &LayerSpec,
    params: Option<&Params>,
    x: &Tensor,
    gout: &Tensor,
    want_params: bool,
) -> (Tensor, Option<Params>) {
    match *layer {
        LayerSpec::Dense { inputs, outputs } => {
            let p = params.expect("dense layer has parameters");
            let w = p.weight.data();
            let g = gout.data();
            let mut gin = vec![0.0; inputs];
            for o in 0..outputs {
                let go = g[o];
                if go == 0.0 {
                    continue;
                }
                for (gi, wv) in gin.iter_mut().zip(&w[o * inputs..(o + 1) * inputs]) {
                    *gi += go * wv;
                }
            }
            let pg = want_params.then(|| {
                let mut gw = vec![0.0; outputs * inputs];
                for o in 0..outputs {
                    for (dst, xv) in gw[o * inputs..(o + 1) * inputs].iter_mut().zip(x.data()) {
                        *dst = g[o] * xv;
                    }
                }
                Params {
                    weight: Tensor::new(vec![outputs, inputs], gw).unwrap(),
                    bias: gout.clone(),
                }
            });
            (Tensor::new(x.shape().to_vec(), gin).unwrap(), pg)
        }
        LayerSpec::Conv3x3 {
            in_channels,
            out_channels,
        } => {
            let p = params.expect("conv layer has parameters");
            let (h, w) = (x.shape()[1], x.shape()[2]);
            let wt = p.weight.data();
            let xin = x.data();
            let g = gout.data();
            let mut gin = vec![0.0; in_channels * h * w];
            let mut gw = if want_params {
                vec![0.0; wt.len()]
            } else {
                Vec::new()
            };
            for o in 0..out_channels {
                let gplane = &g[o * h * w..(o + 1) * h * w];
                for c in 0..in_channels {
                    let src = &xin[c * h * w..(c + 1) * h * w];
                    let kofs = (o * in_channels + c) * 9;
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let kv = wt[kofs + ky * 3 + kx];
                            let mut acc = 0.0;
                            let (j0, j1) = match kx {
                                0 => (1, w),
                                1 => (0, w),
                                _ => (0, w - 1),
                            };
                            for i in 0..h {
                                let si = i as isize + ky as isize - 1;
                                if si < 0 || si >= h as isize {
                                    continue;
                                }
                                let si = si as usize;
                                let grow = &gplane[i * w..(i + 1) * w];
                                let dst = &mut gin[c * h * w + si * w..c * h * w + (si + 1) * w];
                                for j in j0..j1 {
                                    dst[j + kx - 1] += kv * grow[j];
                                }
                                if want_params {
                                    let srow = &src[si * w..(si + 1) * w];
                                    for j in j0..j1 {
                                        acc += grow[j] * srow[j + kx - 1];
                                    }
                                }
                            }
                            if want_params {
                                gw[kofs + ky * 3 + kx] += acc;
                            }
                        }
                    }
                }
            }
            let pg = want_params.then(|| {
                let gb = (0..out_channels)
                    .map(|o| g[o * h * w..(o + 1) * h * w].iter().sum())
                    .collect();
                Params {
                    weight: Tensor::new(p.weight.shape().to_vec(), gw).unwrap(),
                    bias: Tensor::from_vec(gb),
                }
            });
            (Tensor::new(x.shape().to_vec(), gin).unwrap(), pg)
        }
        LayerSpec::Relu => {
            let data = x
                .data()
                .iter()
                .zip(gout.data())
                .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                .collect();
            (Tensor::new(x.shape().to_vec(), data).unwrap(), None)
        }
        LayerSpec::AvgPool2 => {
            let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (oh, ow) = (h / 2, w / 2);
            let g = gout.data();
            let mut gin = vec![0.0; c * h * w];
            for ch in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let v = 0.25 * g[ch * oh * ow + i * ow + j];
                        let base = ch * h * w + 2 * i * w + 2 * j;
                        gin[base] += v;
                        gin[base + 1] += v;
                        gin[base + w] += v;
                        gin[base + w + 1] += v;
                    }
                }
            }
            (Tensor::new(x.shape().to_vec(), gin).unwrap(), None)
        }
        LayerSpec::Flatten => (gout.clone().reshape(x.shape()).unwrap(), None),
    }
}
