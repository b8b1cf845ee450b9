//! Datasets: IDX (MNIST) images with zero padding to 32×32, seeded 2-D
//! synthetic benchmarks, and the shuffled full-batch iterator used in
//! training.

mod idx;
mod synth;

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels};
pub use synth::{synth_dataset, SynthKind, RING_CENTER, RING_RADIUS, RING_STD};

use crate::error::{EaeError, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputShape {
    Image { height: usize, width: usize },
    Flat { dims: usize },
}

impl InputShape {
    pub fn size(&self) -> usize {
        match *self {
            InputShape::Image { height, width } => height * width,
            InputShape::Flat { dims } => dims,
        }
    }
}

/// Examples are rows of an `N × input_dim` matrix with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Tensor,
    pub input_shape: InputShape,
    pub name: String,
    pub labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(
        examples: Tensor,
        input_shape: InputShape,
        name: impl Into<String>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        if examples.rows() == 0 {
            return Err(EaeError::SampleSize { needed: 1, got: 0 });
        }
        if examples.cols() != input_shape.size() {
            return Err(EaeError::dim("Dataset::new", input_shape.size(), examples.cols()));
        }
        if let Some(bad) = examples.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(EaeError::Domain(format!("dataset entry {bad} outside [0, 1]")));
        }
        if let Some(l) = &labels {
            if l.len() != examples.rows() {
                return Err(EaeError::dim("Dataset labels", examples.rows(), l.len()));
            }
        }
        Ok(Dataset {
            examples,
            input_shape,
            name: name.into(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.examples.cols()
    }

    /// First `n` examples (or all of them).
    pub fn truncate(mut self, n: usize) -> Self {
        if n < self.len() {
            self.examples = self.examples.slice_rows(0, n);
            if let Some(l) = &mut self.labels {
                l.truncate(n);
            }
        }
        self
    }

    /// Pixel bytes, `round(v · 255)`; inverse of the IDX loader's scaling.
    pub fn to_pixel_bytes(&self) -> Vec<u8> {
        self.examples
            .data()
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect()
    }

    /// `x,y` rows; only for 2-D flat datasets.
    pub fn to_csv(&self) -> Result<String> {
        if self.input_dim() != 2 {
            return Err(EaeError::dim("Dataset::to_csv", 2, self.input_dim()));
        }
        Ok(points_to_csv(&self.examples))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| EaeError::io(path, e))
    }
}

/// `x,y[,…]` header plus one row per point, shortest round-trip formatting.
pub fn points_to_csv(points: &Tensor) -> String {
    let d = points.cols();
    let names = ["x", "y", "z"];
    let header: Vec<String> = (0..d)
        .map(|j| names.get(j).map_or_else(|| format!("x{j}"), |s| s.to_string()))
        .collect();
    let mut out = header.join(",");
    out.push('\n');
    for r in points.iter_rows() {
        let row: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Adds a 2-pixel zero border around 28×28 images.
pub fn pad_to_32(ds: &Dataset) -> Result<Dataset> {
    let InputShape::Image {
        height: 28,
        width: 28,
    } = ds.input_shape
    else {
        return Err(EaeError::dim("pad_to_32", "28x28 images", format!("{:?}", ds.input_shape)));
    };
    let n = ds.len();
    let mut out = Tensor::zeros(&[n, 32 * 32]);
    for i in 0..n {
        let src = ds.examples.row(i);
        let dst = out.row_mut(i);
        for r in 0..28 {
            dst[(r + 2) * 32 + 2..(r + 2) * 32 + 30].copy_from_slice(&src[r * 28..(r + 1) * 28]);
        }
    }
    Dataset::new(
        out,
        InputShape::Image {
            height: 32,
            width: 32,
        },
        ds.name.clone(),
        ds.labels.clone(),
    )
}

/// Inverse of [`pad_to_32`]: keeps the central 28×28 window.
pub fn crop_to_28(ds: &Dataset) -> Result<Dataset> {
    let InputShape::Image {
        height: 32,
        width: 32,
    } = ds.input_shape
    else {
        return Err(EaeError::dim("crop_to_28", "32x32 images", format!("{:?}", ds.input_shape)));
    };
    let n = ds.len();
    let mut out = Tensor::zeros(&[n, 28 * 28]);
    for i in 0..n {
        let src = ds.examples.row(i);
        let dst = out.row_mut(i);
        for r in 0..28 {
            dst[r * 28..(r + 1) * 28].copy_from_slice(&src[(r + 2) * 32 + 2..(r + 2) * 32 + 30]);
        }
    }
    Dataset::new(
        out,
        InputShape::Image {
            height: 28,
            width: 28,
        },
        ds.name.clone(),
        ds.labels.clone(),
    )
}

/// Seeded per-epoch shuffles yielding full batches only.
#[derive(Debug, Clone)]
pub struct BatchIterator {
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
}

impl BatchIterator {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || n < batch_size {
            return Err(EaeError::Config(format!(
                "dataset of {n} examples cannot fill a batch of {batch_size}"
            )));
        }
        Ok(BatchIterator {
            n,
            batch_size,
            seed,
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n / self.batch_size
    }

    /// Index sets for the next epoch; the trailing short batch is dropped.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        let mut rng = crate::seeded_rng(self.seed);
        rng.set_stream(self.epoch);
        self.epoch += 1;
        let mut perm: Vec<usize> = (0..self.n).collect();
        perm.shuffle(&mut rng);
        perm.chunks_exact(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }

    /// The next epoch's batches materialized from `examples`.
    pub fn batches<'a>(&mut self, examples: &'a Tensor) -> impl Iterator<Item = Tensor> + 'a {
        self.next_epoch()
            .into_iter()
            .map(move |idx| examples.select_rows(&idx))
    }
}
