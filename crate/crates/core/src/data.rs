//! In-memory labeled image datasets and the synthetic generators used for
//! search and retraining runs.

use stretchnas_autodiff::rng::Rng;
use stretchnas_autodiff::Tensor;

use crate::error::{Error, Result};

/// A labeled dataset of equally-shaped images.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<Tensor>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::data(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if n_classes < 2 {
            return Err(Error::data(format!("need at least 2 classes, got {n_classes}")));
        }
        if let Some(first) = images.first() {
            if first.shape().len() != 3 {
                return Err(Error::data(format!(
                    "images must be shaped [channels, height, width], got {:?}",
                    first.shape()
                )));
            }
            for img in &images {
                if img.shape() != first.shape() {
                    return Err(Error::data("images have mixed shapes".to_string()));
                }
            }
        }
        for &label in &labels {
            if label >= n_classes {
                return Err(Error::data(format!(
                    "label {label} out of range for {n_classes} classes"
                )));
            }
        }
        Ok(Dataset {
            images,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Shape of one image, `[channels, height, width]`.
    pub fn image_shape(&self) -> Result<&[usize]> {
        self.images
            .first()
            .map(|img| img.shape())
            .ok_or_else(|| Error::data("dataset is empty".to_string()))
    }

    /// Stacks the given samples into one `[batch, channels, height, width]`
    /// tensor plus their labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::data("empty batch".to_string()));
        }
        let shape = self.image_shape()?.to_vec();
        let per = shape.iter().product::<usize>();
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &idx in indices {
            let img = self
                .images
                .get(idx)
                .ok_or_else(|| Error::data(format!("sample {idx} out of range")))?;
            data.extend_from_slice(img.data());
            labels.push(self.labels[idx]);
        }
        let mut full = vec![indices.len()];
        full.extend_from_slice(&shape);
        Ok((Tensor::new(full, data)?, labels))
    }

    /// New dataset holding copies of the given samples, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut images = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &idx in indices {
            let img = self
                .images
                .get(idx)
                .ok_or_else(|| Error::data(format!("sample {idx} out of range")))?;
            images.push(img.clone());
            labels.push(self.labels[idx]);
        }
        Dataset::new(images, labels, self.n_classes)
    }

    /// Concatenation of two datasets over the same label space.
    pub fn concat(a: &Dataset, b: &Dataset) -> Result<Dataset> {
        if a.n_classes != b.n_classes {
            return Err(Error::data(format!(
                "cannot concatenate {}-class and {}-class datasets",
                a.n_classes, b.n_classes
            )));
        }
        let mut images = a.images.clone();
        images.extend(b.images.iter().cloned());
        let mut labels = a.labels.clone();
        labels.extend_from_slice(&b.labels);
        Dataset::new(images, labels, a.n_classes)
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &label in &self.labels {
            counts[label] += 1;
        }
        counts
    }
}

/// Families of synthetic datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Two concentric noisy rings in the plane, one class each.
    TwoRings,
    /// Points in the square labeled by the sign product of their coordinates.
    XorGrid,
    /// Isotropic Gaussian clusters on a circle, one class each.
    GaussianBlobs,
    /// Small grayscale gratings whose orientation encodes the class.
    TinyImages,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::TwoRings => "two-rings",
            GeneratorKind::XorGrid => "xor-grid",
            GeneratorKind::GaussianBlobs => "gaussian-blobs",
            GeneratorKind::TinyImages => "tiny-images",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "two-rings" => Some(GeneratorKind::TwoRings),
            "xor-grid" => Some(GeneratorKind::XorGrid),
            "gaussian-blobs" => Some(GeneratorKind::GaussianBlobs),
            "tiny-images" => Some(GeneratorKind::TinyImages),
            _ => None,
        }
    }
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub kind: GeneratorKind,
    pub n_samples: usize,
    pub n_classes: usize,
    pub noise: f64,
    pub image_size: usize,
}

/// Encodes a planar point as a two-channel image of constant planes, one
/// coordinate per channel. Convolution padding breaks spatial uniformity, so
/// downstream cells still see structure.
fn encode_point(x: f64, y: f64, size: usize) -> Result<Tensor> {
    let plane = size * size;
    let mut data = Vec::with_capacity(2 * plane);
    data.extend(std::iter::repeat(x).take(plane));
    data.extend(std::iter::repeat(y).take(plane));
    Tensor::new(vec![2, size, size], data).map_err(Error::from)
}

/// Draws a deterministic synthetic dataset. Class counts are balanced to
/// within one sample, and the same spec plus seed always yields the same
/// bytes.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    if spec.n_samples == 0 {
        return Err(Error::data("n_samples must be positive".to_string()));
    }
    if spec.image_size == 0 {
        return Err(Error::data("image_size must be positive".to_string()));
    }
    if spec.noise < 0.0 {
        return Err(Error::data(format!("noise must be non-negative, got {}", spec.noise)));
    }
    match spec.kind {
        GeneratorKind::TwoRings => {
            require_classes(spec, 2)?;
            let mut rng = Rng::derive(seed, "data-two-rings", 0);
            let mut images = Vec::new();
            let mut labels = Vec::new();
            for sample in 0..spec.n_samples {
                let label = sample % 2;
                let radius_base = if label == 0 { 0.4 } else { 1.0 };
                let angle = rng.uniform() * std::f64::consts::TAU;
                let radius = radius_base + spec.noise * rng.normal();
                images.push(encode_point(
                    radius * angle.cos(),
                    radius * angle.sin(),
                    spec.image_size,
                )?);
                labels.push(label);
            }
            Dataset::new(images, labels, 2)
        }
        GeneratorKind::XorGrid => {
            require_classes(spec, 2)?;
            let mut rng = Rng::derive(seed, "data-xor-grid", 0);
            let mut quota = [spec.n_samples.div_ceil(2), spec.n_samples / 2];
            let mut images = Vec::new();
            let mut labels = Vec::new();
            while images.len() < spec.n_samples {
                let x = rng.uniform_in(-1.0, 1.0);
                let y = rng.uniform_in(-1.0, 1.0);
                let label = usize::from((x > 0.0) != (y > 0.0));
                if quota[label] == 0 {
                    continue;
                }
                quota[label] -= 1;
                let x = x + spec.noise * rng.normal();
                let y = y + spec.noise * rng.normal();
                images.push(encode_point(x, y, spec.image_size)?);
                labels.push(label);
            }
            Dataset::new(images, labels, 2)
        }
        GeneratorKind::GaussianBlobs => {
            if spec.n_classes < 2 {
                return Err(Error::data("gaussian-blobs needs at least 2 classes".to_string()));
            }
            let mut rng = Rng::derive(seed, "data-gaussian-blobs", 0);
            let mut images = Vec::new();
            let mut labels = Vec::new();
            for sample in 0..spec.n_samples {
                let label = sample % spec.n_classes;
                let angle = std::f64::consts::TAU * label as f64 / spec.n_classes as f64;
                let x = angle.cos() + spec.noise * rng.normal();
                let y = angle.sin() + spec.noise * rng.normal();
                images.push(encode_point(x, y, spec.image_size)?);
                labels.push(label);
            }
            Dataset::new(images, labels, spec.n_classes)
        }
        GeneratorKind::TinyImages => {
            if spec.n_classes < 2 {
                return Err(Error::data("tiny-images needs at least 2 classes".to_string()));
            }
            let mut rng = Rng::derive(seed, "data-tiny-images", 0);
            let size = spec.image_size;
            let mut images = Vec::new();
            let mut labels = Vec::new();
            for sample in 0..spec.n_samples {
                let label = sample % spec.n_classes;
                let theta = std::f64::consts::PI * label as f64 / spec.n_classes as f64;
                let freq = std::f64::consts::TAU * 1.5 / size as f64;
                let phase = rng.uniform() * std::f64::consts::TAU;
                let mut data = Vec::with_capacity(size * size);
                for row in 0..size {
                    for col in 0..size {
                        let u = col as f64 - (size as f64 - 1.0) / 2.0;
                        let v = row as f64 - (size as f64 - 1.0) / 2.0;
                        let ridge = (freq * (u * theta.cos() + v * theta.sin()) + phase).sin();
                        data.push(0.5 + 0.5 * ridge + spec.noise * rng.normal());
                    }
                }
                images.push(Tensor::new(vec![1, size, size], data)?);
                labels.push(label);
            }
            Dataset::new(images, labels, spec.n_classes)
        }
    }
}

fn require_classes(spec: &SyntheticSpec, expected: usize) -> Result<()> {
    if spec.n_classes != expected {
        return Err(Error::data(format!(
            "{} is a {expected}-class problem, got n_classes = {}",
            spec.kind.name(),
            spec.n_classes
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: GeneratorKind, n: usize, classes: usize) -> SyntheticSpec {
        SyntheticSpec {
            kind,
            n_samples: n,
            n_classes: classes,
            noise: 0.05,
            image_size: 4,
        }
    }

    #[test]
    fn generators_balance_classes_within_one() {
        for (kind, classes) in [
            (GeneratorKind::TwoRings, 2),
            (GeneratorKind::XorGrid, 2),
            (GeneratorKind::GaussianBlobs, 3),
            (GeneratorKind::TinyImages, 4),
        ] {
            let data = generate(&spec(kind, 101, classes), 7).unwrap();
            let counts = data.class_counts();
            let lo = counts.iter().min().unwrap();
            let hi = counts.iter().max().unwrap();
            assert!(hi - lo <= 1, "{}: {counts:?}", kind.name());
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate(&spec(GeneratorKind::TwoRings, 40, 2), 11).unwrap();
        let b = generate(&spec(GeneratorKind::TwoRings, 40, 2), 11).unwrap();
        let c = generate(&spec(GeneratorKind::TwoRings, 40, 2), 12).unwrap();
        let (batch_a, labels_a) = a.batch(&(0..40).collect::<Vec<_>>()).unwrap();
        let (batch_b, labels_b) = b.batch(&(0..40).collect::<Vec<_>>()).unwrap();
        let (batch_c, _) = c.batch(&(0..40).collect::<Vec<_>>()).unwrap();
        assert_eq!(batch_a.data(), batch_b.data());
        assert_eq!(labels_a, labels_b);
        assert_ne!(batch_a.data(), batch_c.data());
    }

    #[test]
    fn two_rings_radii_separate_classes() {
        let data = generate(&spec(GeneratorKind::TwoRings, 200, 2), 3).unwrap();
        let (batch, labels) = data.batch(&(0..200).collect::<Vec<_>>()).unwrap();
        let plane = 16;
        for (idx, &label) in labels.iter().enumerate() {
            let x = batch.data()[idx * 2 * plane];
            let y = batch.data()[idx * 2 * plane + plane];
            let r = (x * x + y * y).sqrt();
            if label == 0 {
                assert!(r < 0.7, "inner ring sample at radius {r}");
            } else {
                assert!(r > 0.7, "outer ring sample at radius {r}");
            }
        }
    }

    #[test]
    fn batch_shape_and_subset_roundtrip() {
        let data = generate(&spec(GeneratorKind::TinyImages, 10, 2), 5).unwrap();
        let (batch, labels) = data.batch(&[0, 3, 4]).unwrap();
        assert_eq!(batch.shape(), &[3, 1, 4, 4]);
        assert_eq!(labels.len(), 3);
        let sub = data.subset(&[0, 3, 4]).unwrap();
        assert_eq!(sub.len(), 3);
        let (sub_batch, sub_labels) = sub.batch(&[0, 1, 2]).unwrap();
        assert_eq!(sub_batch.data(), batch.data());
        assert_eq!(sub_labels, labels);
    }

    #[test]
    fn wrong_class_count_is_rejected() {
        let err = generate(&spec(GeneratorKind::TwoRings, 10, 3), 1).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}
