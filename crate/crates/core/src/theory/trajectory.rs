//! Quantities measured along a training run relative to initialization:
//! weight drift, indicator flips and the movement of the Gram matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ibp::IndicatorSnapshot;
use crate::model::NetworkParams;
use crate::numerics::{l2_norm, symmetric_eigenvalues, DenseMatrix, Rng};

/// Exhaustive triple enumeration is used up to this many examples.
pub const EXHAUSTIVE_FLIP_MAX_N: usize = 64;
pub const SAMPLED_FLIP_TRIPLES: usize = 100_000;

/// `max_r ||w_r(t) - w_r(0)||_2`.
pub fn measure_drift(now: &NetworkParams, init: &NetworkParams) -> Result<f64> {
    if now.w.shape() != init.w.shape() {
        return Err(Error::Dimension(format!(
            "drift between {:?} and {:?} weights",
            now.w.shape(),
            init.w.shape()
        )));
    }
    let mut worst = 0.0f64;
    let mut diff = vec![0.0; now.input_dim()];
    for (a, b) in now.w.row_iter().zip(init.w.row_iter()) {
        for ((d, x), y) in diff.iter_mut().zip(a).zip(b) {
            *d = x - y;
        }
        worst = worst.max(l2_norm(&diff));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipCounts {
    /// Changed `(r, i)` bits of `A+` and `A-`.
    pub a_plus: usize,
    pub a_minus: usize,
    /// Changed `(r, i, j)` coefficients of the Gram closed form.
    pub alpha: usize,
    pub beta: usize,
    pub gamma: usize,
    pub triples_examined: usize,
    pub sampled: bool,
}

impl FlipCounts {
    /// Share of `(r, i)` pairs whose activation pattern changed.
    pub fn indicator_fraction(&self, m: usize, n: usize) -> f64 {
        if m * n == 0 {
            return 0.0;
        }
        // a pair can flip in at most one of the two bit arrays
        (self.a_plus + self.a_minus) as f64 / (m * n) as f64
    }
}

/// Compares two indicator snapshots. Every `(r, i, j)` triple is checked
/// when `n <= EXHAUSTIVE_FLIP_MAX_N`; otherwise a fixed-seed sample of
/// [`SAMPLED_FLIP_TRIPLES`] triples is used.
pub fn count_indicator_flips(
    now: &IndicatorSnapshot,
    init: &IndicatorSnapshot,
    seed: u64,
) -> Result<FlipCounts> {
    let (m, n) = (now.width(), now.examples());
    if (m, n) != (init.width(), init.examples()) {
        return Err(Error::Dimension(format!(
            "indicator snapshots {m}x{n} vs {}x{}",
            init.width(),
            init.examples()
        )));
    }
    let mut out = FlipCounts {
        a_plus: 0,
        a_minus: 0,
        alpha: 0,
        beta: 0,
        gamma: 0,
        triples_examined: 0,
        sampled: n > EXHAUSTIVE_FLIP_MAX_N,
    };
    for r in 0..m {
        for i in 0..n {
            out.a_plus += (now.plus(r, i) != init.plus(r, i)) as usize;
            out.a_minus += (now.minus(r, i) != init.minus(r, i)) as usize;
        }
    }
    let mut visit = |r: usize, i: usize, j: usize| {
        let (l0i, l0j) = (init.live(r, i), init.live(r, j));
        let (s0i, s0j) = (init.signed(r, i), init.signed(r, j));
        let (l1i, l1j) = (now.live(r, i), now.live(r, j));
        let (s1i, s1j) = (now.signed(r, i), now.signed(r, j));
        out.alpha += (l0i * l0j != l1i * l1j) as usize;
        out.beta += (l0i * s0j != l1i * s1j) as usize;
        out.gamma += (s0i * s0j != s1i * s1j) as usize;
        out.triples_examined += 1;
    };
    if n <= EXHAUSTIVE_FLIP_MAX_N {
        for r in 0..m {
            for i in 0..n {
                for j in 0..n {
                    visit(r, i, j);
                }
            }
        }
    } else {
        let mut rng = Rng::new(seed);
        for _ in 0..SAMPLED_FLIP_TRIPLES {
            let r = rng.below(m);
            let i = rng.below(n);
            let j = rng.below(n);
            visit(r, i, j);
        }
    }
    Ok(out)
}

/// Spectral norm of `a - b` for symmetric `a`, `b`.
pub fn gram_shift(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    let mut diff = a.clone();
    diff.axpy(-1.0, b)?;
    let ev = symmetric_eigenvalues(&diff)?;
    Ok(ev.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_dataset;
    use crate::ibp::{indicator_snapshot, PerturbationSpec};
    use crate::model::init_network;

    #[test]
    fn drift_is_largest_row_change() {
        let a = init_network(3, 2, 1).unwrap();
        let mut b = a.clone();
        b.w[(1, 0)] += 3.0;
        b.w[(1, 1)] += 4.0;
        b.w[(2, 0)] += 1.0;
        assert_eq!(measure_drift(&b, &a).unwrap(), 5.0);
        assert_eq!(measure_drift(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn flips_zero_for_identical_and_counted_for_one_bit() {
        let ds = synthetic_dataset(4, 3, 0.3, 1).unwrap();
        let p = init_network(5, 3, 2).unwrap();
        let s = indicator_snapshot(&p, &ds, PerturbationSpec::new(0.01).unwrap()).unwrap();
        let f = count_indicator_flips(&s, &s, 0).unwrap();
        assert_eq!(
            (f.a_plus, f.a_minus, f.alpha, f.beta, f.gamma),
            (0, 0, 0, 0, 0)
        );
        assert_eq!(f.triples_examined, 5 * 16);

        // find an (r, i) in the plus half and toggle it
        let (r, i) = (0..5)
            .flat_map(|r| (0..4).map(move |i| (r, i)))
            .find(|&(r, i)| s.plus(r, i) || (!s.minus(r, i) && p.a()[r] * ds.y()[i] > 0.0))
            .unwrap();
        let mut t = s.clone();
        t.set_plus(r, i, !s.plus(r, i));
        let f = count_indicator_flips(&t, &s, 0).unwrap();
        assert_eq!(f.a_plus, 1);
        // alpha changes on (i, j) and (j, i) for every live j, plus (i, i)
        assert!(f.alpha >= 1);
        assert!(f.gamma >= 1);
    }

    #[test]
    fn gram_shift_of_diagonal() {
        let a = DenseMatrix::from_diag(&[1.0, 2.0]);
        let b = DenseMatrix::from_diag(&[1.5, -1.0]);
        assert!((gram_shift(&a, &b).unwrap() - 3.0).abs() < 1e-15);
    }
}
