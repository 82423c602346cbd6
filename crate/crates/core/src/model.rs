//! Two-layer ReLU network `f(x) = m^{-1/2} sum_r a_r relu(w_r . x)` with a
//! frozen `+-1` output layer.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{
    dot, logistic_loss, logistic_loss_derivative, pairwise_sum, relu, DenseMatrix, Rng,
};

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    /// Hidden weights, one row per neuron (`m x d`).
    pub w: DenseMatrix,
    a: Vec<f64>,
    seed: u64,
}

impl NetworkParams {
    pub fn new(w: DenseMatrix, a: Vec<f64>, seed: u64) -> Result<Self> {
        if a.len() != w.rows() {
            return Err(Error::Dimension(format!(
                "{} output signs for {} hidden neurons",
                a.len(),
                w.rows()
            )));
        }
        if a.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidArgument("output weights must be +-1".into()));
        }
        if !w.all_finite() {
            return Err(Error::InvalidArgument(
                "hidden weights must be finite".into(),
            ));
        }
        Ok(Self { w, a, seed })
    }

    pub fn width(&self) -> usize {
        self.w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub(crate) fn inv_sqrt_width(&self) -> f64 {
        1.0 / (self.width() as f64).sqrt()
    }

    pub(crate) fn check_input(&self, d: usize) -> Result<()> {
        if d != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects inputs of length {}, got {d}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Checkpoint: `m, d, seed` as little-endian u64, row-major `W` as f64,
    /// then `a` as i8.
    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + 8 * self.w.as_slice().len() + self.width());
        buf.extend_from_slice(&(self.width() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.input_dim() as u64).to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        for v in self.w.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend(self.a.iter().map(|&s| (s as i8) as u8));
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let truncated = |detail: String| Error::Truncated {
            path: path.to_path_buf(),
            detail,
        };
        if buf.len() < 24 {
            return Err(truncated("checkpoint header".into()));
        }
        let word = |k: usize| u64::from_le_bytes(buf[8 * k..8 * k + 8].try_into().unwrap());
        let (m, d, seed) = (word(0) as usize, word(1) as usize, word(2));
        let expected = m
            .checked_mul(d)
            .and_then(|md| md.checked_mul(8))
            .and_then(|b| b.checked_add(24 + m))
            .ok_or_else(|| truncated("header dimensions overflow".into()))?;
        if buf.len() != expected {
            return Err(truncated(format!(
                "expected {expected} bytes for m={m}, d={d}, found {}",
                buf.len()
            )));
        }
        let w: Vec<f64> = buf[24..24 + 8 * m * d]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let a = buf[24 + 8 * m * d..]
            .iter()
            .map(|&b| f64::from(b as i8))
            .collect();
        Self::new(DenseMatrix::from_vec(m, d, w)?, a, seed)
    }
}

/// `w_r ~ N(0, I)` and `a_r ~ unif{+1, -1}`, each from its own stream.
pub fn init_network(m: usize, d: usize, seed: u64) -> Result<NetworkParams> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "width and input dimension must be positive, got m={m} d={d}"
        )));
    }
    let base = Rng::new(seed);
    let mut wr = base.fork(0);
    let mut ar = base.fork(1);
    let w: Vec<f64> = (0..m * d).map(|_| wr.standard_normal()).collect();
    let a: Vec<f64> = (0..m).map(|_| ar.uniform_sign()).collect();
    NetworkParams::new(DenseMatrix::from_vec(m, d, w)?, a, seed)
}

pub fn forward(params: &NetworkParams, x: &[f64]) -> Result<f64> {
    params.check_input(x.len())?;
    let s: f64 = params
        .w
        .row_iter()
        .zip(params.a())
        .map(|(w, &a)| a * relu(dot(w, x)))
        .sum();
    Ok(s * params.inv_sqrt_width())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginKind {
    Standard,
    IbpLower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginVector {
    pub values: Vec<f64>,
    pub kind: MarginKind,
}

impl MarginVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        pairwise_sum(&self.values) / self.values.len() as f64
    }
}

/// `W x_i` for every example, laid out `m x n`.
pub fn preactivations(params: &NetworkParams, dataset: &Dataset) -> Result<DenseMatrix> {
    params.check_input(dataset.dim())?;
    let n = dataset.len();
    let mut p = DenseMatrix::zeros(params.width(), n);
    p.as_mut_slice()
        .par_chunks_mut(n.max(1))
        .zip(params.w.as_slice().par_chunks(params.input_dim()))
        .for_each(|(out, w)| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(w, dataset.x().row(i));
            }
        });
    Ok(p)
}

/// `u_i = y_i f(x_i)`.
pub fn standard_margins(params: &NetworkParams, dataset: &Dataset) -> Result<MarginVector> {
    let pre = preactivations(params, dataset)?;
    let scale = params.inv_sqrt_width();
    let values = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let y = dataset.y()[i];
            let mut s = 0.0;
            for (r, &a) in params.a().iter().enumerate() {
                s += (y * a) * relu(pre[(r, i)]);
            }
            s * scale
        })
        .collect();
    Ok(MarginVector {
        values,
        kind: MarginKind::Standard,
    })
}

/// `sum_i log(1 + exp(-u_i))`.
pub fn standard_loss(params: &NetworkParams, dataset: &Dataset) -> Result<f64> {
    let u = standard_margins(params, dataset)?;
    Ok(loss_from_margins(&u.values))
}

pub(crate) fn loss_from_margins(u: &[f64]) -> f64 {
    let terms: Vec<f64> = u.iter().map(|&v| logistic_loss(v)).collect();
    pairwise_sum(&terms)
}

/// `dL/dW` with ReLU subgradient `1(w_r . x_i > 0)`.
pub fn standard_loss_gradient(params: &NetworkParams, dataset: &Dataset) -> Result<DenseMatrix> {
    let pre = preactivations(params, dataset)?;
    let u = standard_margins(params, dataset)?;
    let scale = params.inv_sqrt_width();
    let lprime: Vec<f64> = u
        .values
        .iter()
        .map(|&v| logistic_loss_derivative(v))
        .collect();
    let d = params.input_dim();
    let mut grad = DenseMatrix::zeros(params.width(), d);
    grad.as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(r, g)| {
            let a = params.a()[r];
            for i in 0..dataset.len() {
                if pre[(r, i)] > 0.0 {
                    let (x, y) = dataset.example(i);
                    let c = lprime[i] * scale * a * y;
                    for (gk, xk) in g.iter_mut().zip(x) {
                        *gk += c * xk;
                    }
                }
            }
        });
    Ok(grad)
}

/// Fraction of examples with `u_i <= 0`.
pub fn standard_error(margins: &MarginVector) -> f64 {
    if margins.is_empty() {
        return 0.0;
    }
    margins.values.iter().filter(|&&u| u <= 0.0).count() as f64 / margins.len() as f64
}
