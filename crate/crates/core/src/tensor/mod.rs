//! Dense row-major `f64` tensors and the handful of image operations the
//! attacks and transforms are built from.

mod rng;

pub use rng::{mix64, Rng};

use crate::error::{Error, Result};

/// Added to the L1 norm before dividing, so the zero tensor normalizes to zero.
pub const L1_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::invalid(format!("zero extent in shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::invalid(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "shape mismatch in elementwise op");
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "shape mismatch in axpy");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        assert_eq!(self.len(), other.len(), "length mismatch in dot");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm_l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_linf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.sub(other).norm_linf()
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise sign with `sign(0) = 0`.
    pub fn sign(&self) -> Tensor {
        self.map(|v| {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// `t / (‖t‖₁ + L1_GUARD)`
    pub fn l1_normalize(&self) -> Tensor {
        let denom = self.norm_l1() + L1_GUARD;
        self.map(|v| v / denom)
    }

    /// Index of the largest element; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    fn chw(&self, what: &str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::invalid(format!(
                "{what} expects a [C,H,W] tensor, got {:?}",
                self.shape
            ))),
        }
    }

    /// Per-channel 2-D cross-correlation with zero padding `(k-1)/2`.
    pub fn conv2d_same(&self, kernel: &Tensor) -> Result<Tensor> {
        let (c, h, w) = self.chw("conv2d_same")?;
        let k = match kernel.shape[..] {
            [a, b] if a == b => a,
            _ => {
                return Err(Error::invalid(format!(
                    "kernel must be square, got {:?}",
                    kernel.shape
                )))
            }
        };
        if k % 2 == 0 {
            return Err(Error::invalid(format!("kernel size {k} is even")));
        }
        if k > h.min(w) {
            return Err(Error::invalid(format!(
                "kernel size {k} exceeds image {h}x{w}"
            )));
        }
        if k == 1 {
            return Ok(self.scale(kernel.data[0]));
        }
        let r = (k / 2) as isize;
        let mut out = vec![0.0; self.data.len()];
        for ch in 0..c {
            let plane = &self.data[ch * h * w..(ch + 1) * h * w];
            let dst = &mut out[ch * h * w..(ch + 1) * h * w];
            for i in 0..h {
                for j in 0..w {
                    let mut acc = 0.0;
                    for ki in 0..k {
                        let si = i as isize + ki as isize - r;
                        if si < 0 || si >= h as isize {
                            continue;
                        }
                        for kj in 0..k {
                            let sj = j as isize + kj as isize - r;
                            if sj < 0 || sj >= w as isize {
                                continue;
                            }
                            acc += kernel.data[ki * k + kj] * plane[si as usize * w + sj as usize];
                        }
                    }
                    dst[i * w + j] = acc;
                }
            }
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: out,
        })
    }

    /// Bilinear resampling to `out_h x out_w`, half-pixel centres, edges clamped.
    pub fn bilinear_resize(&self, out_h: usize, out_w: usize) -> Result<Tensor> {
        let (c, h, w) = self.chw("bilinear_resize")?;
        if out_h == 0 || out_w == 0 {
            return Err(Error::invalid("resize target has a zero extent"));
        }
        let rows = resize_taps(h, out_h);
        let cols = resize_taps(w, out_w);
        let mut out = vec![0.0; c * out_h * out_w];
        for ch in 0..c {
            let src = &self.data[ch * h * w..(ch + 1) * h * w];
            for (i, ri) in rows.iter().enumerate() {
                for (j, cj) in cols.iter().enumerate() {
                    let top =
                        src[ri.lo * w + cj.lo] * (1.0 - cj.frac) + src[ri.lo * w + cj.hi] * cj.frac;
                    let bot =
                        src[ri.hi * w + cj.lo] * (1.0 - cj.frac) + src[ri.hi * w + cj.hi] * cj.frac;
                    out[ch * out_h * out_w + i * out_w + j] = top * (1.0 - ri.frac) + bot * ri.frac;
                }
            }
        }
        Ok(Tensor {
            shape: vec![c, out_h, out_w],
            data: out,
        })
    }

    /// Transpose of [`Tensor::bilinear_resize`] from `h x w` to this tensor's extents.
    pub fn bilinear_resize_adjoint(&self, h: usize, w: usize) -> Result<Tensor> {
        let (c, out_h, out_w) = self.chw("bilinear_resize_adjoint")?;
        if h == 0 || w == 0 {
            return Err(Error::invalid("resize source has a zero extent"));
        }
        let rows = resize_taps(h, out_h);
        let cols = resize_taps(w, out_w);
        let mut out = vec![0.0; c * h * w];
        for ch in 0..c {
            let dst = &mut out[ch * h * w..(ch + 1) * h * w];
            for (i, ri) in rows.iter().enumerate() {
                for (j, cj) in cols.iter().enumerate() {
                    let g = self.data[ch * out_h * out_w + i * out_w + j];
                    let gt = g * (1.0 - ri.frac);
                    let gb = g * ri.frac;
                    dst[ri.lo * w + cj.lo] += gt * (1.0 - cj.frac);
                    dst[ri.lo * w + cj.hi] += gt * cj.frac;
                    dst[ri.hi * w + cj.lo] += gb * (1.0 - cj.frac);
                    dst[ri.hi * w + cj.hi] += gb * cj.frac;
                }
            }
        }
        Ok(Tensor {
            shape: vec![c, h, w],
            data: out,
        })
    }

    /// Zero canvas of `h x w` with this image placed at `(top, left)`.
    pub fn pad_embed(&self, h: usize, w: usize, top: usize, left: usize) -> Result<Tensor> {
        let (c, ih, iw) = self.chw("pad_embed")?;
        if top + ih > h || left + iw > w {
            return Err(Error::invalid(format!(
                "{ih}x{iw} image at ({top},{left}) does not fit a {h}x{w} canvas"
            )));
        }
        let mut out = vec![0.0; c * h * w];
        for ch in 0..c {
            for i in 0..ih {
                let src = &self.data[ch * ih * iw + i * iw..ch * ih * iw + (i + 1) * iw];
                let at = ch * h * w + (top + i) * w + left;
                out[at..at + iw].copy_from_slice(src);
            }
        }
        Ok(Tensor {
            shape: vec![c, h, w],
            data: out,
        })
    }

    /// The `h x w` window at `(top, left)`; transpose of [`Tensor::pad_embed`].
    pub fn crop(&self, h: usize, w: usize, top: usize, left: usize) -> Result<Tensor> {
        let (c, ch_h, ch_w) = self.chw("crop")?;
        if h == 0 || w == 0 || top + h > ch_h || left + w > ch_w {
            return Err(Error::invalid(format!(
                "{h}x{w} window at ({top},{left}) exceeds a {ch_h}x{ch_w} canvas"
            )));
        }
        let mut out = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            for i in 0..h {
                let at = ch * ch_h * ch_w + (top + i) * ch_w + left;
                out.extend_from_slice(&self.data[at..at + w]);
            }
        }
        Ok(Tensor {
            shape: vec![c, h, w],
            data: out,
        })
    }

    /// i.i.d. elements `a * (2u - 1)`, one `u64` draw per element.
    pub fn uniform_perturbation(rng: &mut Rng, shape: &[usize], a: f64) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| a * (2.0 * rng.next_f64() - 1.0)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn resize_taps(src: usize, dst: usize) -> Vec<Tap> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            Tap {
                lo,
                hi,
                frac: pos - lo as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rng: &mut Rng, shape: &[usize]) -> Tensor {
        Tensor::uniform_perturbation(rng, shape, 1.0)
    }

    #[test]
    fn sign_examples() {
        let t = Tensor::from_vec(vec![3.2, -0.5, 0.0]);
        assert_eq!(t.sign().data(), &[1.0, -1.0, 0.0]);
        assert_eq!(Tensor::zeros(&[2, 3]).sign(), Tensor::zeros(&[2, 3]));
        let mut rng = Rng::new(3, 0);
        let r = random(&mut rng, &[5, 4]);
        assert_eq!(r.sign().sign(), r.sign());
    }

    #[test]
    fn l1_normalize_examples() {
        let t = Tensor::from_vec(vec![3.0, -1.0]).l1_normalize();
        assert!((t.data()[0] - 0.75).abs() < 1e-12 && (t.data()[1] + 0.25).abs() < 1e-12);
        assert_eq!(Tensor::zeros(&[4]).l1_normalize(), Tensor::zeros(&[4]));
        let mut rng = Rng::new(4, 0);
        for _ in 0..20 {
            let r = random(&mut rng, &[3, 7]);
            assert!((r.l1_normalize().norm_l1() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn new_rejects_bad_lengths() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
    }

    fn conv_reference(img: &Tensor, k: &Tensor) -> Tensor {
        let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
        let ks = k.shape()[0];
        let r = (ks / 2) as i64;
        let mut out = Tensor::zeros(img.shape());
        for ch in 0..c {
            for i in 0..h as i64 {
                for j in 0..w as i64 {
                    let mut s = 0.0;
                    for a in -r..=r {
                        for b in -r..=r {
                            let (y, x) = (i + a, j + b);
                            if (0..h as i64).contains(&y) && (0..w as i64).contains(&x) {
                                s += k.data()[((a + r) * ks as i64 + b + r) as usize]
                                    * img.data()[ch * h * w + (y * w as i64 + x) as usize];
                            }
                        }
                    }
                    out.data_mut()[ch * h * w + (i * w as i64 + j) as usize] = s;
                }
            }
        }
        out
    }

    #[test]
    fn conv_identity_constant_and_reference() {
        let mut rng = Rng::new(8, 0);
        let img = random(&mut rng, &[2, 6, 5]);
        let id = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        assert_eq!(img.conv2d_same(&id).unwrap(), img);

        let c = Tensor::full(&[1, 7, 7], 0.3);
        let avg = Tensor::full(&[3, 3], 1.0 / 9.0);
        let out = c.conv2d_same(&avg).unwrap();
        for i in 1..6 {
            for j in 1..6 {
                assert!((out.data()[i * 7 + j] - 0.3).abs() < 1e-12);
            }
        }

        let img = random(&mut rng, &[1, 5, 5]);
        let k = random(&mut rng, &[3, 3]);
        assert!(
            img.conv2d_same(&k)
                .unwrap()
                .max_abs_diff(&conv_reference(&img, &k))
                < 1e-12
        );
    }

    #[test]
    fn conv_rejects_even_or_oversized_kernels() {
        let img = Tensor::zeros(&[1, 4, 4]);
        assert!(matches!(
            img.conv2d_same(&Tensor::zeros(&[2, 2])),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            img.conv2d_same(&Tensor::zeros(&[5, 5])),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn resize_constant_and_identity() {
        let c = Tensor::full(&[2, 5, 7], 0.42);
        for (h, w) in [(1, 1), (3, 9), (10, 4)] {
            let r = c.bilinear_resize(h, w).unwrap();
            assert!(r.data().iter().all(|v| (v - 0.42).abs() < 1e-12));
        }
        let mut rng = Rng::new(9, 0);
        let img = random(&mut rng, &[3, 6, 4]);
        assert_eq!(img.bilinear_resize(6, 4).unwrap(), img);
        assert!(img.bilinear_resize(0, 4).is_err());
    }

    #[test]
    fn pad_crop_pair() {
        let mut rng = Rng::new(10, 0);
        let img = random(&mut rng, &[2, 3, 4]);
        assert_eq!(img.pad_embed(3, 4, 0, 0).unwrap(), img);
        let padded = img.pad_embed(6, 7, 2, 1).unwrap();
        assert_eq!(padded.crop(3, 4, 2, 1).unwrap(), img);
        assert!(img.pad_embed(4, 4, 2, 0).is_err());
    }

    #[test]
    fn uniform_perturbation_bounds_and_zero() {
        let mut rng = Rng::new(11, 0);
        assert_eq!(
            Tensor::uniform_perturbation(&mut rng, &[3, 3], 0.0),
            Tensor::zeros(&[3, 3])
        );
        let t = Tensor::uniform_perturbation(&mut rng, &[1000], 0.25);
        assert!(t.data().iter().all(|v| v.abs() <= 0.25));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(Tensor::from_vec(vec![1.0, 3.0, 3.0, 2.0]).argmax(), 1);
    }
}
