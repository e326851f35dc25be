//! Seeded toy datasets, the train/val/test split, and two file formats: IDX
//! image/label pairs and the `ASAUKIT-DATA v1` tensor container.
//!
//! Every generator is a pure function of its arguments. Randomness comes
//! from [`SplitMix64`], whose stream is fully specified in [`crate::rng`].

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Anything that can be sliced by sample index.
pub trait Dataset: Sized {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// New set holding samples `idx`, in that order.
    fn subset(&self, idx: &[usize]) -> Self;
}

/// Features `[N, ...]` with one class label per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    features: Tensor,
    labels: Vec<usize>,
    k: usize,
}

impl LabeledSet {
    pub fn new(features: Tensor, labels: Vec<usize>, k: usize) -> Result<Self> {
        if features.shape().len() < 2 {
            return Err(Error::Shape(
                "features need a leading sample axis and at least one feature axis".into(),
            ));
        }
        if features.rows() != labels.len() {
            return Err(Error::Misaligned(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Empty("labeled set has no samples".into()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label, k });
        }
        Ok(Self { features, labels, k })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Per-feature z-scoring with statistics taken from one set, usually the
/// training split, and applied unchanged to the others.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of every flattened feature.
    /// Constant features get scale 1 so they map to zero instead of NaN.
    pub fn fit(set: &LabeledSet) -> Self {
        let f = set.features();
        let n = f.rows();
        let d = f.len() / n;
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, x) in mean.iter_mut().zip(f.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((v, x), m) in var.iter_mut().zip(f.row(i)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn apply(&self, set: &LabeledSet) -> Result<LabeledSet> {
        let f = set.features();
        let d = self.mean.len();
        if f.len() / f.rows() != d {
            return Err(Error::Shape(format!(
                "standardizer fitted on {d} features, set has {}",
                f.len() / f.rows()
            )));
        }
        let data = f
            .data()
            .iter()
            .enumerate()
            .map(|(k, x)| (x - self.mean[k % d]) / self.scale[k % d])
            .collect();
        LabeledSet::new(Tensor::new(f.shape().to_vec(), data)?, set.labels.clone(), set.k)
    }
}

impl Dataset for LabeledSet {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.gather_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
        }
    }
}

/// Images `[N, 1, H, W]` with binary masks of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    images: Tensor,
    masks: Tensor,
}

impl MaskSet {
    pub fn new(images: Tensor, masks: Tensor) -> Result<Self> {
        if images.shape().len() != 4 || images.shape()[1] != 1 {
            return Err(Error::Shape(format!(
                "images must be [N, 1, H, W], got {:?}",
                images.shape()
            )));
        }
        images.check_same_shape(&masks, "image/mask pair")?;
        if masks.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Format("masks must hold only 0 and 1".into()));
        }
        Ok(Self { images, masks })
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn masks(&self) -> &Tensor {
        &self.masks
    }

    /// Mask of sample `i` as a `[1, H, W]` tensor.
    pub fn mask(&self, i: usize) -> Tensor {
        Tensor::new(self.masks.shape()[1..].to_vec(), self.masks.row(i).to_vec()).expect("row of a valid mask tensor")
    }
}

impl Dataset for MaskSet {
    fn len(&self) -> usize {
        self.images.rows()
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            images: self.images.gather_rows(idx),
            masks: self.masks.gather_rows(idx),
        }
    }
}

/// Two interleaved half circles. Class 0 sits on the upper unit half circle,
/// class 1 on the lower one shifted by `(1, 0.5)`; samples come out in a
/// seeded random order.
pub fn gen_two_moons(n: usize, noise_sd: f64, seed: u64) -> Result<LabeledSet> {
    if n == 0 || n % 2 == 1 {
        return Err(Error::param(format!(
            "two moons needs a positive even sample count, got {n}"
        )));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::param(format!("noise sd must be non-negative, got {noise_sd}")));
    }
    let half = n / 2;
    let mut rng = SplitMix64::new(seed);
    let order = rng.permutation(n);
    let mut data = vec![0.0; n * 2];
    let mut labels = vec![0; n];
    for (slot, &src) in order.iter().enumerate() {
        let class = src / half;
        let j = src % half;
        let theta = if half == 1 {
            0.0
        } else {
            PI * j as f64 / (half - 1) as f64
        };
        let (x, y) = if class == 0 {
            (theta.cos(), theta.sin())
        } else {
            (1.0 - theta.cos(), 0.5 - theta.sin())
        };
        labels[slot] = class;
        data[2 * slot] = x;
        data[2 * slot + 1] = y;
    }
    if noise_sd > 0.0 {
        for v in &mut data {
            *v += noise_sd * rng.normal();
        }
    }
    LabeledSet::new(Tensor::new(vec![n, 2], data)?, labels, 2)
}

/// `k` isotropic 2-D Gaussian clusters. Centres are drawn in `[-10, 10]²`
/// at least 1 apart; labels cycle so class sizes differ by at most one.
pub fn gen_blobs(n: usize, k: usize, spread: f64, seed: u64) -> Result<LabeledSet> {
    if k < 2 || n < k {
        return Err(Error::param(format!("blobs need k >= 2 and n >= k, got n={n}, k={k}")));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::param(format!("spread must be non-negative, got {spread}")));
    }
    let mut rng = SplitMix64::new(seed);
    let mut centres: Vec<(f64, f64)> = Vec::with_capacity(k);
    let mut min_gap = 1.0;
    while centres.len() < k {
        // Shrink the separation requirement if the box keeps rejecting.
        for _ in 0..1000 {
            let c = (rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0));
            if centres.iter().all(|d| (d.0 - c.0).hypot(d.1 - c.1) >= min_gap) {
                centres.push(c);
                break;
            }
        }
        min_gap /= 2.0;
    }
    let order = rng.permutation(n);
    let mut data = vec![0.0; n * 2];
    let mut labels = vec![0; n];
    for (slot, &src) in order.iter().enumerate() {
        let class = src % k;
        labels[slot] = class;
        data[2 * slot] = centres[class].0 + spread * rng.normal();
        data[2 * slot + 1] = centres[class].1 + spread * rng.normal();
    }
    LabeledSet::new(Tensor::new(vec![n, 2], data)?, labels, k)
}

pub const MIN_FOREGROUND: f64 = 0.05;
pub const MAX_FOREGROUND: f64 = 0.6;

/// One filled ellipse or rectangle per image on a noisy dark background.
/// Shapes whose foreground fraction falls outside
/// [`MIN_FOREGROUND`, `MAX_FOREGROUND`] are redrawn.
pub fn gen_shapes_seg(n: usize, h: usize, w: usize, seed: u64) -> Result<MaskSet> {
    if n == 0 {
        return Err(Error::param("shapes dataset needs at least one sample"));
    }
    if h < 16 || w < 16 || h % 2 == 1 || w % 2 == 1 {
        return Err(Error::param(format!(
            "image sides must be even and at least 16, got {h}x{w}"
        )));
    }
    let plane = h * w;
    let mut rng = SplitMix64::new(seed);
    let mut images = Vec::with_capacity(n * plane);
    let mut masks = Vec::with_capacity(n * plane);
    let mut mask = vec![0.0; plane];
    for _ in 0..n {
        loop {
            let ellipse = rng.next_f64() < 0.5;
            let cy = rng.uniform(0.25, 0.75) * h as f64;
            let cx = rng.uniform(0.25, 0.75) * w as f64;
            let ry = rng.uniform(0.12, 0.4) * h as f64;
            let rx = rng.uniform(0.12, 0.4) * w as f64;
            let mut fg = 0usize;
            for i in 0..h {
                for j in 0..w {
                    let dy = (i as f64 + 0.5 - cy) / ry;
                    let dx = (j as f64 + 0.5 - cx) / rx;
                    let inside = if ellipse {
                        dx * dx + dy * dy <= 1.0
                    } else {
                        dx.abs() <= 1.0 && dy.abs() <= 1.0
                    };
                    mask[i * w + j] = inside as u8 as f64;
                    fg += inside as usize;
                }
            }
            let frac = fg as f64 / plane as f64;
            if (MIN_FOREGROUND..=MAX_FOREGROUND).contains(&frac) {
                break;
            }
        }
        let fg_level = rng.uniform(0.55, 0.95);
        let bg_level = rng.uniform(0.0, 0.25);
        for &m in &mask {
            let base = if m == 1.0 { fg_level } else { bg_level };
            images.push((base + 0.05 * rng.normal()).clamp(0.0, 1.0));
        }
        masks.extend_from_slice(&mask);
    }
    MaskSet::new(
        Tensor::new(vec![n, 1, h, w], images)?,
        Tensor::new(vec![n, 1, h, w], masks)?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            fractions: [0.8, 0.1, 0.1],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.fractions.iter().sum();
        if self.fractions.iter().any(|f| f.is_nan() || *f <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!(
                "split fractions must be positive and sum to 1, got {:?}",
                self.fractions
            )));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes: floor, floor, remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon keeps products such as 0.1 * 30 from rounding below an
        // integer they equal exactly.
        let part = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = part(self.fractions[0]).min(n);
        let val = part(self.fractions[1]).min(n - train);
        (train, val, n - train - val)
    }
}

pub const MIN_SPLIT_SIZE: usize = 10;

/// Seeded permutation, then contiguous slices at the fraction boundaries.
pub fn split_dataset<D: Dataset>(set: &D, spec: &SplitSpec) -> Result<(D, D, D)> {
    spec.validate()?;
    let n = set.len();
    if n < MIN_SPLIT_SIZE {
        return Err(Error::param(format!(
            "need at least {MIN_SPLIT_SIZE} samples to split, got {n}"
        )));
    }
    let (a, b, c) = spec.sizes(n);
    if a == 0 || b == 0 || c == 0 {
        return Err(Error::param(format!(
            "split of {n} samples leaves an empty part ({a}, {b}, {c})"
        )));
    }
    let perm = SplitMix64::new(spec.seed).permutation(n);
    Ok((
        set.subset(&perm[..a]),
        set.subset(&perm[a..a + b]),
        set.subset(&perm[a + b..]),
    ))
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("four bytes")))
        .ok_or_else(|| Error::Truncated(format!("{what} header ends at byte {}", bytes.len())))
}

fn checked_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let found = be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

/// Parses an IDX image file (`[N, rows, cols]` unsigned bytes) and its label
/// file. Pixels are scaled to `[0, 1]`; `k` is one more than the largest
/// label.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<LabeledSet> {
    checked_magic(images, IDX_IMAGES_MAGIC, "image file")?;
    checked_magic(labels, IDX_LABELS_MAGIC, "label file")?;
    let n = be_u32(images, 4, "image file")? as usize;
    let rows = be_u32(images, 8, "image file")? as usize;
    let cols = be_u32(images, 12, "image file")? as usize;
    let n_labels = be_u32(labels, 4, "label file")? as usize;
    if n != n_labels {
        return Err(Error::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }
    if n == 0 || rows == 0 || cols == 0 {
        return Err(Error::Empty(format!("IDX header declares {n} images of {rows}x{cols}")));
    }
    let pixels = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Format("IDX image dimensions overflow".into()))?;
    let body = &images[16..];
    if body.len() < pixels {
        return Err(Error::Truncated(format!(
            "image file promises {pixels} pixels, holds {}",
            body.len()
        )));
    }
    let label_body = &labels[8..];
    if label_body.len() < n {
        return Err(Error::Truncated(format!(
            "label file promises {n} labels, holds {}",
            label_body.len()
        )));
    }
    let data = body[..pixels].iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = label_body[..n].iter().map(|&b| b as usize).collect();
    let k = labels.iter().max().map_or(1, |m| m + 1);
    LabeledSet::new(Tensor::new(vec![n, 1, rows, cols], data)?, labels, k)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledSet> {
    parse_idx(&std::fs::read(images_path)?, &std::fs::read(labels_path)?)
}

pub fn encode_idx(set: &LabeledSet) -> Result<(Vec<u8>, Vec<u8>)> {
    let shape = set.features().shape();
    let (rows, cols) = match shape {
        [_, 1, r, c] | [_, r, c] => (*r, *c),
        _ => return Err(Error::Shape(format!("IDX needs [N, rows, cols] images, got {shape:?}"))),
    };
    if set.k() > 256 {
        return Err(Error::param("IDX labels are single bytes"));
    }
    let n = set.len() as u32;
    let mut images = Vec::with_capacity(16 + set.features().len());
    for v in [IDX_IMAGES_MAGIC, n, rows as u32, cols as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend(
        set.features()
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    let mut labels = Vec::with_capacity(8 + set.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&n.to_be_bytes());
    labels.extend(set.labels().iter().map(|&l| l as u8));
    Ok((images, labels))
}

pub const DATA_MAGIC: &str = "ASAUKIT-DATA v1";

/// Upper bound on elements per tensor accepted by the decoder.
const MAX_CONTAINER_ELEMS: usize = 1 << 28;

/// Names are nonempty and free of whitespace and control characters.
fn valid_tensor_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(|c| c.is_whitespace() || c.is_control())
}

/// Serializes named tensors.
///
/// ```text
/// ASAUKIT-DATA v1
/// tensor features 1000,2
/// tensor labels 1000
/// end
/// <f64 little-endian values of every tensor, in header order>
/// ```
pub fn encode_container(tensors: &[(&str, &Tensor)]) -> Result<Vec<u8>> {
    let mut header = format!("{DATA_MAGIC}\n");
    for (name, t) in tensors {
        if !valid_tensor_name(name) {
            return Err(Error::param(format!("bad tensor name {name:?}")));
        }
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(header, "tensor {name} {}", dims.join(","));
    }
    header.push_str("end\n");
    let mut out = header.into_bytes();
    for (_, t) in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_container(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut next_line = || -> Result<&str> {
        line_no += 1;
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Truncated("container header is not terminated".into()))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| Error::parse(line_no, "header is not UTF-8"))
    };
    if next_line()? != DATA_MAGIC {
        return Err(Error::parse(1, format!("missing {DATA_MAGIC:?} header")));
    }
    let mut shapes = Vec::new();
    let mut total = 0usize;
    loop {
        let line = next_line()?;
        if line == "end" {
            break;
        }
        let ln = shapes.len() + 2;
        let mut words = line.split(' ');
        let (Some("tensor"), Some(name), Some(dims), None) = (words.next(), words.next(), words.next(), words.next())
        else {
            return Err(Error::parse(
                ln,
                format!("expected `tensor <name> <dims>`, got {line:?}"),
            ));
        };
        if !valid_tensor_name(name) {
            return Err(Error::parse(ln, format!("bad tensor name {name:?}")));
        }
        let shape = dims
            .split(',')
            .map(|d| d.parse::<usize>().ok().filter(|v| *v > 0))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::parse(ln, format!("bad dimensions {dims:?}")))?;
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c <= MAX_CONTAINER_ELEMS)
            .ok_or_else(|| Error::parse(ln, format!("tensor {name:?} is too large")))?;
        total = total
            .checked_add(count)
            .ok_or_else(|| Error::parse(ln, "container is too large"))?;
        shapes.push((name.to_string(), shape, count));
    }
    let body = &bytes[pos..];
    if body.len() != total * 8 {
        let msg = format!("header promises {} data bytes, found {}", total * 8, body.len());
        return Err(if body.len() < total * 8 {
            Error::Truncated(msg)
        } else {
            Error::Format(msg)
        });
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")));
    shapes
        .into_iter()
        .map(|(name, shape, count)| {
            let data: Vec<f64> = values.by_ref().take(count).collect();
            Ok((name, Tensor::new(shape, data)?))
        })
        .collect()
}

fn take_tensor(tensors: &mut Vec<(String, Tensor)>, name: &str) -> Result<Tensor> {
    let i = tensors
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::Format(format!("container lacks tensor {name:?}")))?;
    Ok(tensors.remove(i).1)
}

fn as_index(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Format(format!("{what} must be a non-negative integer, got {v}")))
    }
}

impl LabeledSet {
    /// Container with tensors `features`, `labels` and `classes`.
    pub fn to_container(&self) -> Vec<u8> {
        let labels = Tensor::new(vec![self.len()], self.labels.iter().map(|&l| l as f64).collect())
            .expect("one label per sample");
        let classes = Tensor::new(vec![1], vec![self.k as f64]).expect("scalar");
        encode_container(&[("features", &self.features), ("labels", &labels), ("classes", &classes)])
            .expect("fixed tensor names")
    }

    pub fn from_container(bytes: &[u8]) -> Result<Self> {
        let mut t = decode_container(bytes)?;
        let features = take_tensor(&mut t, "features")?;
        let labels = take_tensor(&mut t, "labels")?
            .data()
            .iter()
            .map(|&v| as_index(v, "label"))
            .collect::<Result<Vec<_>>>()?;
        let classes = take_tensor(&mut t, "classes")?;
        let k = match classes.data() {
            [k] => as_index(*k, "class count")?,
            _ => return Err(Error::Format("class count must be a single value".into())),
        };
        Self::new(features, labels, k)
    }
}

impl MaskSet {
    /// Container with tensors `images` and `masks`.
    pub fn to_container(&self) -> Vec<u8> {
        encode_container(&[("images", &self.images), ("masks", &self.masks)]).expect("fixed tensor names")
    }

    pub fn from_container(bytes: &[u8]) -> Result<Self> {
        let mut t = decode_container(bytes)?;
        let images = take_tensor(&mut t, "images")?;
        let masks = take_tensor(&mut t, "masks")?;
        Self::new(images, masks)
    }
}
