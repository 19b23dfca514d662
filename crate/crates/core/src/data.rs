//! Labeled datasets and batch sampling.

use crate::error::{Error, Result};
use crate::image::{Image, ImageShape};
use crate::rng::RandomSource;

/// Category index in `[0, num_categories)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CategoryLabel(pub usize);

impl CategoryLabel {
    pub fn index(&self) -> usize {
        self.0
    }
}

impl std::fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Ordered collection of labeled images sharing one shape.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    samples: Vec<(Image, CategoryLabel)>,
    split: Split,
    num_categories: usize,
    shape: ImageShape,
}

impl LabeledDataset {
    pub fn new(
        samples: Vec<(Image, CategoryLabel)>,
        split: Split,
        num_categories: usize,
    ) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::param("dataset must contain at least one sample"))?;
        let shape = first.0.shape();
        for (i, (img, label)) in samples.iter().enumerate() {
            if img.shape() != shape {
                return Err(Error::shape(shape, img.shape()));
            }
            if label.index() >= num_categories {
                return Err(Error::param(format!(
                    "label {} out of range at sample {i} (num_categories = {num_categories})",
                    label.index()
                )));
            }
        }
        Ok(Self {
            samples,
            split,
            num_categories,
            shape,
        })
    }

    pub fn samples(&self) -> &[(Image, CategoryLabel)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn image(&self, i: usize) -> &Image {
        &self.samples[i].0
    }

    pub fn label(&self, i: usize) -> CategoryLabel {
        self.samples[i].1
    }

    /// New dataset restricted to the given sample indices (order preserved).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::param(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(samples, self.split, self.num_categories)
    }

    /// Indices of samples carrying `label`.
    pub fn indices_of(&self, label: CategoryLabel) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, (_, l))| *l == label)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Draw `count` samples uniformly without replacement.
///
/// Deterministic given the state of `rng`; `count` greater than the dataset
/// size is a parameter error.
pub fn batch_sample(
    dataset: &LabeledDataset,
    count: usize,
    rng: &mut RandomSource,
) -> Result<Vec<(Image, CategoryLabel)>> {
    sample_indices(dataset.len(), count, rng)
        .map(|idx| idx.into_iter().map(|i| dataset.samples[i].clone()).collect())
}

/// Index form of [`batch_sample`]: a uniform draw of `count` distinct indices
/// from `0..n` (partial Fisher-Yates, so `count == n` yields a permutation).
pub fn sample_indices(n: usize, count: usize, rng: &mut RandomSource) -> Result<Vec<usize>> {
    if count > n {
        return Err(Error::param(format!(
            "requested {count} samples from a pool of {n}"
        )));
    }
    let mut pool: Vec<usize> = (0..n).collect();
    let mut picked = Vec::with_capacity(count);
    for k in 0..count {
        let j = k + rng.index(n - k);
        pool.swap(k, j);
        picked.push(pool[k]);
    }
    Ok(picked)
}
