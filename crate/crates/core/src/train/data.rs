use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::Matrix;
use crate::error::{bail, Result};
use crate::rng::{derive_seed, rng_from_seed, stream, SimRng};

/// Synthetic Gaussian-mixture classification task.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DatasetSpec {
    pub n_classes: usize,
    /// Input dimension `Q`.
    pub dims: usize,
    pub samples_per_device: usize,
    pub classes_per_device: usize,
    /// Standard deviation of the class-mean coordinates.
    pub class_sep: f64,
    /// Standard deviation of the within-class noise.
    pub noise_std: f64,
    pub test_per_class: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_classes: 10,
            dims: 20,
            samples_per_device: 180,
            classes_per_device: 3,
            class_sep: 0.6,
            noise_std: 1.0,
            test_per_class: 100,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.dims == 0 {
            bail!(Validation, "need at least two classes and one input dimension");
        }
        if self.classes_per_device == 0 || self.classes_per_device > self.n_classes {
            bail!(Validation, "classes_per_device must lie in 1..={}", self.n_classes);
        }
        if self.samples_per_device < self.classes_per_device {
            bail!(Validation, "each device needs at least one sample per class");
        }
        if !(self.class_sep >= 0.0 && self.noise_std >= 0.0) {
            bail!(Validation, "spreads must be non-negative");
        }
        Ok(())
    }
}

/// Labeled samples; the row index is the sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset { x: self.x.select_rows(idx), y: idx.iter().map(|&i| self.y[i]).collect(), n_classes: self.n_classes }
    }
}

fn normal(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

fn draw(means: &Matrix, per_class: usize, noise: f64, rng: &mut SimRng) -> Dataset {
    let (k, q) = (means.rows(), means.cols());
    let mut data = Vec::with_capacity(k * per_class * q);
    let mut y = Vec::with_capacity(k * per_class);
    for c in 0..k {
        for _ in 0..per_class {
            data.extend(means.row(c).iter().map(|m| m + noise * normal(rng)));
            y.push(c);
        }
    }
    Dataset { x: Matrix::from_vec(k * per_class, q, data).unwrap_or_else(|_| Matrix::zeros(0, q)), y, n_classes: k }
}

/// Training pool (class-sorted, large enough for any non-IID partition of
/// `n_devices`) and a class-balanced test set drawn from the same mixture.
pub fn generate(spec: &DatasetSpec, n_devices: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = rng_from_seed(derive_seed(seed, stream::DATA, 0));
    let means: Vec<f64> = (0..spec.n_classes * spec.dims).map(|_| spec.class_sep * normal(&mut rng)).collect();
    let means = Matrix::from_vec(spec.n_classes, spec.dims, means)?;
    let per_class = n_devices * spec.samples_per_device.div_ceil(spec.classes_per_device);
    let train = draw(&means, per_class, spec.noise_std, &mut rng);
    let test = draw(&means, spec.test_per_class, spec.noise_std, &mut rng);
    Ok((train, test))
}

/// Disjoint per-device index sets: each device picks `classes_per_device`
/// distinct classes at random and takes an (almost) equal share of its
/// samples from each.
pub fn partition_non_iid(
    dataset: &Dataset,
    n_devices: usize,
    classes_per_device: usize,
    samples_per_device: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if classes_per_device == 0 || classes_per_device > dataset.n_classes {
        bail!(Validation, "classes_per_device must lie in 1..={}", dataset.n_classes);
    }
    if samples_per_device < classes_per_device {
        bail!(Validation, "each device needs at least one sample per class");
    }
    let mut rng = rng_from_seed(derive_seed(seed, stream::PARTITION, 0));
    let mut pools: Vec<Vec<usize>> = alloc::vec![Vec::new(); dataset.n_classes];
    for (i, &y) in dataset.y.iter().enumerate() {
        pools[y].push(i);
    }
    for p in &mut pools {
        p.shuffle(&mut rng);
    }
    let mut classes: Vec<usize> = (0..dataset.n_classes).collect();
    let mut parts = Vec::with_capacity(n_devices);
    for d in 0..n_devices {
        let mut chosen = classes.partial_shuffle(&mut rng, classes_per_device).0.to_vec();
        chosen.sort_unstable();
        let mut part = Vec::with_capacity(samples_per_device);
        for (i, &c) in chosen.iter().enumerate() {
            let take = samples_per_device / classes_per_device + usize::from(i < samples_per_device % classes_per_device);
            if pools[c].len() < take {
                bail!(Validation, "class {} has {} samples left, device {} needs {}", c, pools[c].len(), d, take);
            }
            let at = pools[c].len() - take;
            part.extend(pools[c].drain(at..));
        }
        parts.push(part);
    }
    Ok(parts)
}

/// Minibatches drawn without replacement; the order is reshuffled whenever
/// the local data runs out.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    indices: Vec<usize>,
    cursor: usize,
    rng: SimRng,
}

impl BatchSampler {
    pub fn new(indices: Vec<usize>, seed: u64) -> Self {
        let mut s = Self { indices, cursor: 0, rng: rng_from_seed(seed) };
        s.indices.shuffle(&mut s.rng);
        s
    }

    pub fn next_batch(&mut self, b: usize) -> Result<Vec<usize>> {
        if b == 0 || b > self.indices.len() {
            bail!(Validation, "batch of {} from {} samples", b, self.indices.len());
        }
        if self.cursor + b > self.indices.len() {
            self.indices.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let out = self.indices[self.cursor..self.cursor + b].to_vec();
        self.cursor += b;
        Ok(out)
    }
}
