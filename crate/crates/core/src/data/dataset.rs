use std::io::{Read, Write};
use std::path::Path;

use super::idx::BinaryTask;
use crate::error::{Error, Result};
use crate::numerics::{l2_norm, DenseMatrix};

/// Training set satisfying the box and minimum-norm conditions: every
/// coordinate lies in `[epsilon, 1]` and `xi = min_i ||x_i||_2 > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DenseMatrix,
    y: Vec<f64>,
    epsilon: f64,
    xi: f64,
}

impl Dataset {
    /// Validates the invariants and computes `xi`.
    pub fn new(x: DenseMatrix, y: Vec<f64>, epsilon: f64) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::Dimension(format!(
                "{} labels for {} examples",
                y.len(),
                x.rows()
            )));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!(
                "normalization epsilon must lie in [0, 1), got {epsilon}"
            )));
        }
        if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::Dataset(format!(
                "label {} at row {i} is not +-1",
                y[i]
            )));
        }
        if let Some(pos) = x
            .as_slice()
            .iter()
            .position(|&v| !(epsilon..=1.0).contains(&v))
        {
            let d = x.cols();
            return Err(Error::Dataset(format!(
                "entry ({}, {}) = {} outside [{epsilon}, 1]",
                pos / d,
                pos % d,
                x.as_slice()[pos]
            )));
        }
        let xi = min_row_norm(&x);
        if x.rows() > 0 && xi <= 0.0 {
            return Err(Error::Dataset(
                "an example has zero norm (an all-black image at epsilon = 0); \
                 drop such rows or normalize with epsilon > 0"
                    .into(),
            ));
        }
        Ok(Self { x, y, epsilon, xi })
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn example(&self, i: usize) -> (&[f64], f64) {
        (self.x.row(i), self.y[i])
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// The perturbation radius the data range was built for.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Rows `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "row {i} out of range for {} examples",
                    self.len()
                )));
            }
            data.extend_from_slice(self.x.row(i));
            y.push(self.y[i]);
        }
        Dataset::new(
            DenseMatrix::from_vec(indices.len(), d, data)?,
            y,
            self.epsilon,
        )
    }

    pub fn head(&self, n: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn labels_balanced(&self) -> (usize, usize) {
        let pos = self.y.iter().filter(|&&v| v > 0.0).count();
        (pos, self.len() - pos)
    }

    /// Binary cache: `n, d` as u64, `epsilon, xi` as f64, row-major f64
    /// features, then labels as i8. All little-endian.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + 8 * self.x.as_slice().len() + self.len());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.dim() as u64).to_le_bytes());
        buf.extend_from_slice(&self.epsilon.to_le_bytes());
        buf.extend_from_slice(&self.xi.to_le_bytes());
        for v in self.x.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend(self.y.iter().map(|&v| (v as i8) as u8));
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Reads a cache file and re-validates it; the stored `xi` must match
    /// the recomputed minimum norm.
    pub fn read_cache(path: &Path) -> Result<Dataset> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        let truncated = |detail: &str| Error::Truncated {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        };
        if buf.len() < 32 {
            return Err(truncated("header"));
        }
        let word = |k: usize| -> [u8; 8] { buf[8 * k..8 * k + 8].try_into().unwrap() };
        let n = u64::from_le_bytes(word(0)) as usize;
        let d = u64::from_le_bytes(word(1)) as usize;
        let epsilon = f64::from_le_bytes(word(2));
        let xi = f64::from_le_bytes(word(3));
        let body = n
            .checked_mul(d)
            .and_then(|nd| nd.checked_mul(8))
            .and_then(|b| b.checked_add(32 + n))
            .ok_or_else(|| truncated("header dimensions overflow"))?;
        if buf.len() != body {
            return Err(truncated(&format!(
                "expected {body} bytes for n={n}, d={d}, found {}",
                buf.len()
            )));
        }
        let data: Vec<f64> = buf[32..32 + 8 * n * d]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let y: Vec<f64> = buf[32 + 8 * n * d..]
            .iter()
            .map(|&b| f64::from(b as i8))
            .collect();
        let ds = Dataset::new(DenseMatrix::from_vec(n, d, data)?, y, epsilon)?;
        if ds.xi.to_bits() != xi.to_bits() {
            return Err(Error::Dataset(format!(
                "cached xi {xi} differs from recomputed {}",
                ds.xi
            )));
        }
        Ok(ds)
    }
}

fn min_row_norm(x: &DenseMatrix) -> f64 {
    x.row_iter().map(l2_norm).fold(f64::INFINITY, f64::min)
}

/// Maps each pixel `p` to `epsilon + (1 - epsilon) * p / 255`, so every
/// coordinate lands in `[epsilon, 1]`.
pub fn normalize_assumption1(task: &BinaryTask, epsilon: f64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "normalization epsilon must lie in [0, 1), got {epsilon}"
        )));
    }
    let data: Vec<f64> = task
        .pixels
        .iter()
        .map(|&p| pixel_to_unit(p, epsilon))
        .collect();
    let x = DenseMatrix::from_vec(task.len(), task.dim(), data)?;
    let y = task.labels.iter().map(|&l| f64::from(l)).collect();
    Dataset::new(x, y, epsilon)
}

#[inline]
fn pixel_to_unit(p: u8, epsilon: f64) -> f64 {
    if p == 255 {
        // exact upper endpoint regardless of rounding in the affine map
        1.0
    } else {
        epsilon + (1.0 - epsilon) * (f64::from(p) / 255.0)
    }
}
