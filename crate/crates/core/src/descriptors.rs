//! Descriptor sets, activation grids, corpora, and the synthetic generator.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::l2_normalize;

/// One sample: `len()` local descriptors of width `dim()`, stored row-major.
///
/// Values are kept in single precision so that every set round-trips through
/// the on-disk format bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    set_id: String,
    label: u32,
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorSet {
    pub fn new(set_id: impl Into<String>, label: u32, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("descriptor dimension"));
        }
        if data.is_empty() {
            return Err(Error::Empty("descriptor set"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim * (data.len() / dim + 1),
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            set_id: set_id.into(),
            label,
            dim,
            data,
        })
    }

    /// Builds a set from `f64` rows, rounding to single precision.
    pub fn from_rows<R: AsRef<[f64]>>(set_id: impl Into<String>, label: u32, rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            data.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(set_id, label, dim, data)
    }

    pub fn set_id(&self) -> &str {
        &self.set_id
    }

    pub fn label(&self) -> u32 {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of descriptors (`T_x`).
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn row_f64(&self, t: usize) -> Vec<f64> {
        self.row(t).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn rows_f64(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.rows().map(|r| r.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Copy of this set with every descriptor L2-normalized.
    pub fn l2_normalized(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows_f64() {
            data.extend(l2_normalize(&row).into_iter().map(|v| v as f32));
        }
        Self {
            set_id: self.set_id.clone(),
            label: self.label,
            dim: self.dim,
            data,
        }
    }

    /// Splits the descriptors into consecutive subsets at row `at`.
    pub fn split_at(&self, at: usize) -> Result<(Self, Self)> {
        if at == 0 || at >= self.len() {
            return Err(Error::Empty("split half"));
        }
        let (a, b) = self.data.split_at(at * self.dim);
        Ok((
            Self::new(self.set_id.clone(), self.label, self.dim, a.to_vec())?,
            Self::new(self.set_id.clone(), self.label, self.dim, b.to_vec())?,
        ))
    }
}

/// Activation tensor of shape `height × width × channels`, channel-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl DescriptorGrid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Empty("grid extent"));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch {
                expected: height * width * channels,
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Channel vector at spatial position `(h, w)`.
    pub fn at(&self, h: usize, w: usize) -> &[f32] {
        let start = (h * self.width + w) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// An ordered collection of sets sharing one descriptor width.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    sets: Vec<DescriptorSet>,
    dim: usize,
    num_classes: u32,
    split: Split,
}

impl Corpus {
    pub fn new(sets: Vec<DescriptorSet>, dim: usize, num_classes: u32, split: Split) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("descriptor dimension"));
        }
        for set in &sets {
            if set.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: set.dim() });
            }
            if set.label() >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: set.label(),
                    num_classes,
                });
            }
        }
        Ok(Self {
            sets,
            dim,
            num_classes,
            split,
        })
    }

    pub fn sets(&self) -> &[DescriptorSet] {
        &self.sets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn labels(&self) -> Vec<u32> {
        self.sets.iter().map(DescriptorSet::label).collect()
    }

    pub fn num_descriptors(&self) -> usize {
        self.sets.iter().map(DescriptorSet::len).sum()
    }

    /// All descriptors of all sets, in order, as an `N × d` matrix.
    pub fn stacked(&self) -> crate::Matrix {
        let data = self
            .sets
            .iter()
            .flat_map(|s| s.as_slice().iter().map(|&v| f64::from(v)))
            .collect();
        crate::Matrix::from_vec(self.num_descriptors(), self.dim, data).expect("consistent shapes")
    }

    /// Applies per-descriptor L2 normalization to every set.
    pub fn l2_normalized(&self) -> Self {
        Self {
            sets: self.sets.iter().map(DescriptorSet::l2_normalized).collect(),
            dim: self.dim,
            num_classes: self.num_classes,
            split: self.split,
        }
    }
}

/// Parameters of the class-conditional Gaussian mixture generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: u32,
    /// Training sets per class.
    pub sets_per_class: usize,
    /// Test sets per class; defaults to `sets_per_class`.
    #[serde(default)]
    pub test_sets_per_class: Option<usize>,
    pub descriptors_per_set: usize,
    pub d: usize,
    pub components_per_class: usize,
    pub separation: f64,
    pub noise_sigma: f64,
    /// Added to every mean coordinate; a large offset keeps descriptors
    /// nonnegative like rectified activations.
    #[serde(default)]
    pub offset: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// The reference configuration used by the acceptance suite.
    pub fn reference() -> Self {
        Self {
            num_classes: 4,
            sets_per_class: 100,
            test_sets_per_class: Some(50),
            descriptors_per_set: 20,
            d: 16,
            components_per_class: 2,
            separation: 4.0,
            noise_sigma: 1.0,
            offset: 0.0,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.num_classes as usize,
            self.sets_per_class,
            self.test_sets_per_class.unwrap_or(self.sets_per_class),
            self.descriptors_per_set,
            self.d,
            self.components_per_class,
        ];
        if counts.contains(&0) {
            return Err(Error::InvalidConfig("synthetic counts must be at least 1".into()));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidConfig("separation must be positive".into()));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be positive".into()));
        }
        if !self.offset.is_finite() {
            return Err(Error::InvalidConfig("offset must be finite".into()));
        }
        Ok(())
    }
}

/// Component means of the synthetic mixture, indexed `[class][component]`.
///
/// Each coordinate is drawn from `N(offset, separation² / (2d))`, so the
/// expected squared distance between two means is `separation²`.
pub fn synthetic_means(spec: &SyntheticSpec) -> Result<Vec<Vec<Vec<f64>>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(draw_means(spec, &mut rng))
}

fn draw_means(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<f64>>> {
    let scale = spec.separation / libm::sqrt(2.0 * spec.d as f64);
    (0..spec.num_classes)
        .map(|_| {
            (0..spec.components_per_class)
                .map(|_| {
                    (0..spec.d)
                        .map(|_| spec.offset + scale * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Draws a train and a test corpus from per-class Gaussian mixtures.
///
/// Set ids are `train-c{class}-s{index}` / `test-c{class}-s{index}`, so the
/// two splits are disjoint by id.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Corpus, Corpus)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = draw_means(spec, &mut rng);

    let mut draw_split = |prefix: &str, per_class: usize, split: Split| -> Result<Corpus> {
        let mut sets = Vec::with_capacity(per_class * spec.num_classes as usize);
        for (class, class_means) in means.iter().enumerate() {
            for s in 0..per_class {
                let mut data = Vec::with_capacity(spec.descriptors_per_set * spec.d);
                for _ in 0..spec.descriptors_per_set {
                    let mean = &class_means[rng.random_range(0..class_means.len())];
                    data.extend(mean.iter().map(|&m| {
                        let noise: f64 = rng.sample(StandardNormal);
                        (m + spec.noise_sigma * noise) as f32
                    }));
                }
                let id = format!("{prefix}-c{class}-s{s}");
                sets.push(DescriptorSet::new(id, class as u32, spec.d, data)?);
            }
        }
        Corpus::new(sets, spec.d, spec.num_classes, split)
    };

    let train = draw_split("train", spec.sets_per_class, Split::Train)?;
    let test = draw_split(
        "test",
        spec.test_sets_per_class.unwrap_or(spec.sets_per_class),
        Split::Test,
    )?;
    Ok((train, test))
}
