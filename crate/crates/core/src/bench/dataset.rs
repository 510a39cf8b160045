use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Labelled images in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
}

impl Dataset {
    /// `images` is `[n,C,H,W]` with one label per image.
    pub fn new(images: Tensor, labels: Vec<usize>) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::invalid(format!(
                "images must be [n,C,H,W], got {:?}",
                images.shape()
            )));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::invalid(format!(
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("pixel values must lie in [0,1]"));
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn image(&self, i: usize) -> Tensor {
        let [c, h, w] = self.image_shape();
        let n = c * h * w;
        Tensor::new(
            vec![c, h, w],
            self.images.data()[i * n..(i + 1) * n].to_vec(),
        )
        .expect("in-bounds image")
    }

    pub fn samples(&self) -> Vec<(Tensor, usize)> {
        (0..self.len())
            .map(|i| (self.image(i), self.labels[i]))
            .collect()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl Reader<'_> {
    fn u32_be(&mut self, field: &str) -> Result<u32> {
        let end = self.pos + 4;
        let b = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::Parse(format!(
                "{}: truncated {field} at byte offset {}",
                self.what, self.pos
            ))
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn payload(&mut self, len: usize) -> Result<&[u8]> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(Error::Parse(format!(
                "{}: payload truncated at byte offset {} (need {len} bytes from offset {})",
                self.what,
                self.bytes.len(),
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

/// Parses an IDX image file (`0x00000803`, `[n,rows,cols]`) and label file
/// (`0x00000801`, `[n]`). Pixels map to `byte / 255`.
pub fn parse_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader {
        bytes: image_bytes,
        pos: 0,
        what: "image file",
    };
    let magic = r.u32_be("magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Parse(format!(
            "image file: bad magic {magic:#010x} at byte offset 0"
        )));
    }
    let n = r.u32_be("image count")? as usize;
    let rows = r.u32_be("row count")? as usize;
    let cols = r.u32_be("column count")? as usize;
    if n == 0 || rows == 0 || cols == 0 {
        return Err(Error::Parse(
            "image file: zero dimension at byte offset 4".into(),
        ));
    }
    let pixels = r.payload(n * rows * cols)?;
    let data = pixels.iter().map(|&b| b as f64 / 255.0).collect();

    let mut r = Reader {
        bytes: label_bytes,
        pos: 0,
        what: "label file",
    };
    let magic = r.u32_be("magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Parse(format!(
            "label file: bad magic {magic:#010x} at byte offset 0"
        )));
    }
    let m = r.u32_be("label count")? as usize;
    if m != n {
        return Err(Error::Parse(format!(
            "label file: count {m} at byte offset 4 does not match {n} images"
        )));
    }
    let labels = r.payload(m)?.iter().map(|&b| b as usize).collect();

    Dataset::new(Tensor::new(vec![n, 1, rows, cols], data)?, labels)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    parse_idx(&fs::read(images_path)?, &fs::read(labels_path)?)
}

/// Encodes a single-channel dataset as IDX image and label files. Pixels
/// are rounded to the nearest byte.
pub fn encode_idx(ds: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let [c, h, w] = ds.image_shape();
    if c != 1 {
        return Err(Error::invalid(format!(
            "IDX holds single-channel images, dataset has {c} channels"
        )));
    }
    if ds.labels.iter().any(|&l| l > 255) {
        return Err(Error::invalid("IDX labels must fit in a byte"));
    }
    let mut img = Vec::with_capacity(16 + ds.images.len());
    for v in [IDX_IMAGES_MAGIC, ds.len() as u32, h as u32, w as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend(ds.images.data().iter().map(|&v| (v * 255.0).round() as u8));
    let mut lab = Vec::with_capacity(8 + ds.len());
    for v in [IDX_LABELS_MAGIC, ds.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend(ds.labels.iter().map(|&l| l as u8));
    Ok((img, lab))
}

pub fn write_idx(
    ds: &Dataset,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let (img, lab) = encode_idx(ds)?;
    fs::write(images_path, img)?;
    fs::write(labels_path, lab)?;
    Ok(())
}

/// Geometry of the synthetic blob task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobParams {
    /// Std-dev of the i.i.d. pixel noise.
    pub noise: f64,
    /// Peak height of the class bump, in units of `noise`.
    pub separation: f64,
    /// Background intensity.
    pub background: f64,
    /// Bump width as a fraction of the side length.
    pub width_frac: f64,
    /// Maximum per-sample shift of the bump centre, in pixels.
    pub jitter: f64,
}

impl Default for BlobParams {
    fn default() -> Self {
        BlobParams {
            noise: 0.05,
            separation: 6.0,
            background: 0.3,
            width_frac: 0.125,
            jitter: 1.0,
        }
    }
}

/// Bump centre of class `c`: evenly spaced on a circle of radius `side/4`.
fn class_center(c: usize, classes: usize, side: usize) -> (f64, f64) {
    let mid = (side as f64 - 1.0) / 2.0;
    let radius = side as f64 / 4.0;
    let angle = std::f64::consts::TAU * c as f64 / classes as f64;
    (mid + radius * angle.sin(), mid + radius * angle.cos())
}

/// `n` single-channel `side x side` images, label `i % classes`. Class `c`
/// is a Gaussian bump at a fixed class location (shifted by a small random
/// jitter) over a flat background with pixel noise, clamped to `[0,1]`.
pub fn gen_blobs(
    n: usize,
    classes: usize,
    side: usize,
    separation: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    gen_blobs_with(
        n,
        classes,
        side,
        BlobParams {
            separation,
            ..BlobParams::default()
        },
        rng,
    )
}

pub fn gen_blobs_with(
    n: usize,
    classes: usize,
    side: usize,
    p: BlobParams,
    rng: &mut Rng,
) -> Result<Dataset> {
    if classes < 2 || n < classes {
        return Err(Error::invalid(format!(
            "need n >= classes >= 2, got n={n}, classes={classes}"
        )));
    }
    if side < 4 {
        return Err(Error::invalid(format!("side {side} must be at least 4")));
    }
    if !(p.noise >= 0.0 && p.separation >= 0.0 && p.width_frac > 0.0 && p.jitter >= 0.0) {
        return Err(Error::invalid(
            "blob parameters must be non-negative with positive width",
        ));
    }
    let amp = p.separation * p.noise;
    let s = p.width_frac * side as f64;
    let mut data = Vec::with_capacity(n * side * side);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % classes;
        let (cy, cx) = class_center(y, classes, side);
        let cy = cy + p.jitter * (2.0 * rng.next_f64() - 1.0);
        let cx = cx + p.jitter * (2.0 * rng.next_f64() - 1.0);
        for r in 0..side {
            for c in 0..side {
                let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                let v = p.background
                    + amp * (-d2 / (2.0 * s * s)).exp()
                    + p.noise * rng.next_gaussian();
                data.push(v.clamp(0.0, 1.0));
            }
        }
        labels.push(y);
    }
    Dataset::new(Tensor::new(vec![n, 1, side, side], data)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn parses_two_images() {
        let mut img = header(0x803, &[2, 28, 28]);
        img.extend((0..1568).map(|i| if i == 0 { 255 } else { 0 }));
        let mut lab = header(0x801, &[2]);
        lab.extend([3, 7]);
        let ds = parse_idx(&img, &lab).unwrap();
        assert_eq!(ds.images().shape(), &[2, 1, 28, 28]);
        assert_eq!(ds.images().data()[0], 1.0);
        assert_eq!(ds.images().data()[1], 0.0);
        assert_eq!(ds.labels(), &[3, 7]);
    }

    #[test]
    fn bad_magic_truncation_and_count_mismatch() {
        let mut img = header(0x803, &[1, 2, 2]);
        img.extend([0, 1, 2, 3]);
        let mut lab = header(0x801, &[1]);
        lab.push(0);
        assert!(parse_idx(&img, &lab).is_ok());

        let bad = header(0x801, &[1, 2, 2]);
        match parse_idx(&bad, &lab) {
            Err(Error::Parse(m)) => assert!(m.contains("offset 0"), "{m}"),
            other => panic!("{other:?}"),
        }
        match parse_idx(&img[..img.len() - 1], &lab) {
            Err(Error::Parse(m)) => assert!(m.contains("offset"), "{m}"),
            other => panic!("{other:?}"),
        }
        let mut lab2 = header(0x801, &[2]);
        lab2.extend([0, 1]);
        assert!(matches!(parse_idx(&img, &lab2), Err(Error::Parse(_))));
        assert!(matches!(parse_idx(&img[..6], &lab), Err(Error::Parse(_))));
    }

    #[test]
    fn idx_round_trip_on_byte_grid() {
        let data: Vec<f64> = (0..2 * 9).map(|i| (i * 13 % 256) as f64 / 255.0).collect();
        let ds = Dataset::new(Tensor::new(vec![2, 1, 3, 3], data).unwrap(), vec![1, 0]).unwrap();
        let (img, lab) = encode_idx(&ds).unwrap();
        assert_eq!(parse_idx(&img, &lab).unwrap(), ds);
    }

    #[test]
    fn blobs_are_deterministic_and_in_range() {
        let a = gen_blobs(30, 3, 8, 6.0, &mut Rng::new(4, 0)).unwrap();
        let b = gen_blobs(30, 3, 8, 6.0, &mut Rng::new(4, 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.images().data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.num_classes(), 3);
        assert!(gen_blobs(2, 3, 8, 6.0, &mut Rng::new(4, 0)).is_err());
        assert!(gen_blobs(6, 3, 3, 6.0, &mut Rng::new(4, 0)).is_err());
    }
}
