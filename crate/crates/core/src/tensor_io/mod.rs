//! Interchange formats between the feature extractor, the engine and the
//! evaluator.
//!
//! Tensors travel as NPY v1.0 files restricted to little-endian `float32`,
//! C-order, rank 3. Masks travel as binary PGM (`P5`, maxval 255) with one
//! byte per pixel and labels `0` (in-distribution), `1` (OoD) and `255`
//! (ignore).

mod npy;
mod pgm;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub use npy::{read_npy, write_npy};
pub use pgm::{read_pgm, write_pgm};

/// Ground-truth label for an in-distribution pixel.
pub const LABEL_ID: u8 = 0;
/// Ground-truth label for an out-of-distribution pixel.
pub const LABEL_OOD: u8 = 1;
/// Ground-truth label for a pixel excluded from evaluation.
pub const LABEL_IGNORE: u8 = 255;

/// Dense rank-3 `float32` tensor in C order (`[rows, cols, channels]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    shape: [usize; 3],
    data: Vec<f32>,
}

impl Tensor3 {
    /// Builds a tensor, checking that the shape is non-empty, matches the
    /// payload length and that every value is finite.
    pub fn new(shape: [usize; 3], data: Vec<f32>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidTensor(format!(
                "every dimension must be at least 1, got {shape:?}"
            )));
        }
        let expected = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidTensor(format!("shape {shape:?} overflows")))?;
        if expected != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {expected} values, payload has {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn channels(&self) -> usize {
        self.shape[2]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Channel vector at pixel `(row, col)`.
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let c = self.shape[2];
        let start = (row * self.shape[1] + col) * c;
        &self.data[start..start + c]
    }

    /// Iterates over per-pixel channel vectors in row-major order.
    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.shape[2])
    }
}

/// Low-resolution backbone features, one `D`-dimensional vector per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap(Tensor3);

impl FeatureMap {
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        Tensor3::new([height, width, dim], data).map(Self)
    }

    pub fn height(&self) -> usize {
        self.0.rows()
    }

    pub fn width(&self) -> usize {
        self.0.cols()
    }

    pub fn dim(&self) -> usize {
        self.0.channels()
    }

    pub fn num_pixels(&self) -> usize {
        self.height() * self.width()
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.0
    }
}

impl TryFrom<Tensor3> for FeatureMap {
    type Error = Error;

    fn try_from(t: Tensor3) -> Result<Self> {
        Ok(Self(t))
    }
}

/// Full-resolution decoder logits, `C ≥ 2` classes per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMap(Tensor3);

impl LogitMap {
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<f32>) -> Result<Self> {
        Tensor3::new([height, width, classes], data).and_then(Self::try_from)
    }

    pub fn height(&self) -> usize {
        self.0.rows()
    }

    pub fn width(&self) -> usize {
        self.0.cols()
    }

    pub fn classes(&self) -> usize {
        self.0.channels()
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.0
    }
}

impl TryFrom<Tensor3> for LogitMap {
    type Error = Error;

    fn try_from(t: Tensor3) -> Result<Self> {
        if t.channels() < 2 {
            return Err(Error::InvalidTensor(format!(
                "logits need at least 2 classes, got {}",
                t.channels()
            )));
        }
        Ok(Self(t))
    }
}

/// Per-pixel labels in `{0, 1, 255}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl GroundTruthMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || labels.len() != height * width {
            return Err(Error::InvalidTensor(format!(
                "mask {height}x{width} cannot hold {} labels",
                labels.len()
            )));
        }
        if let Some(index) = labels
            .iter()
            .position(|&v| !matches!(v, LABEL_ID | LABEL_OOD | LABEL_IGNORE))
        {
            return Err(Error::IllegalLabelValue {
                value: labels[index],
                index,
            });
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    /// Binary mask with `true` mapped to [`LABEL_OOD`].
    pub fn from_binary(height: usize, width: usize, mask: &[bool]) -> Result<Self> {
        Self::new(
            height,
            width,
            mask.iter()
                .map(|&m| if m { LABEL_OOD } else { LABEL_ID })
                .collect(),
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(Error::MissingFile(path.to_owned())),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn create(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Loads a rank-3 little-endian `float32` NPY file.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor3> {
    let path = path.as_ref();
    read_npy(&mut open(path)?).map_err(|e| match e {
        Error::IoFailure { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMap> {
    load_tensor(path).and_then(FeatureMap::try_from)
}

pub fn load_logits(path: impl AsRef<Path>) -> Result<LogitMap> {
    load_tensor(path).and_then(LogitMap::try_from)
}

pub fn save_tensor(tensor: &Tensor3, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    create(path, |w| write_npy(w, tensor))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<GroundTruthMask> {
    let path = path.as_ref();
    read_pgm(&mut open(path)?).map_err(|e| match e {
        Error::IoFailure { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn save_mask(mask: &GroundTruthMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    create(path, |w| write_pgm(w, mask))
}
