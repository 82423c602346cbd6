//! Monte Carlo estimate of the infinite-width Gram `H_inf = E_w[H(0)]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gram::gram_closed_form;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ibp::{IbpForward, PerturbationSpec};
use crate::model::init_network;
use crate::numerics::{derive_seed, smallest_eigenvalue, DenseMatrix};

pub const DEFAULT_M_PROBE: usize = 256;
pub const DEFAULT_NUM_INITS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HInfinityEstimate {
    #[serde(skip)]
    pub h: Option<DenseMatrix>,
    pub lambda0: f64,
    pub m_probe: usize,
    pub num_inits: usize,
    pub seed: u64,
}

/// Averages the closed-form `H(0)` over `num_inits` independent width-`m_probe`
/// initializations. Since `H(0)` is itself an average over neurons, this is
/// the same estimator as one network of width `m_probe * num_inits`.
pub fn estimate_h_infinity(
    dataset: &Dataset,
    spec: PerturbationSpec,
    m_probe: usize,
    num_inits: usize,
    seed: u64,
) -> Result<HInfinityEstimate> {
    if m_probe == 0 || num_inits == 0 {
        return Err(Error::InvalidArgument(
            "H_inf estimate needs m_probe > 0 and num_inits > 0".into(),
        ));
    }
    let n = dataset.len();
    let mut sum = DenseMatrix::zeros(n, n);
    // Bounded memory: materialize one chunk of Grams at a time and add
    // them in index order so the result does not depend on thread count.
    const CHUNK: usize = 32;
    for start in (0..num_inits).step_by(CHUNK) {
        let end = (start + CHUNK).min(num_inits);
        let grams: Vec<Result<DenseMatrix>> = (start..end)
            .into_par_iter()
            .map(|k| {
                let p = init_network(m_probe, dataset.dim(), derive_seed(seed, k as u64))?;
                let fwd = IbpForward::new(&p, dataset, spec)?;
                Ok(gram_closed_form(&fwd))
            })
            .collect();
        for g in grams {
            sum.axpy(1.0, &g?)?;
        }
    }
    sum.scale(1.0 / num_inits as f64);
    let lambda0 = if n == 0 {
        f64::NAN
    } else {
        smallest_eigenvalue(&sum)?
    };
    Ok(HInfinityEstimate {
        h: Some(sum),
        lambda0,
        m_probe,
        num_inits,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_dataset;

    #[test]
    fn zero_epsilon_single_point_is_half_squared_norm() {
        // E[1(w.x > 0)] = 1/2 for Gaussian w, so H_inf = |x|^2 / 2
        let x = DenseMatrix::from_rows(&[vec![0.6, 0.8]]).unwrap();
        let ds = Dataset::new(x, vec![1.0], 0.0).unwrap();
        let est = estimate_h_infinity(&ds, PerturbationSpec::zero(), 256, 256, 3).unwrap();
        assert!((est.lambda0 - 0.5).abs() < 0.01, "{}", est.lambda0);
    }

    #[test]
    fn duplicated_example_is_singular() {
        let ds = synthetic_dataset(3, 4, 0.3, 1).unwrap();
        let dup = ds.subset(&[0, 1, 2, 0]).unwrap();
        let est =
            estimate_h_infinity(&dup, PerturbationSpec::new(0.01).unwrap(), 64, 16, 2).unwrap();
        assert!(est.lambda0.abs() < 1e-10);
    }

    #[test]
    fn deterministic_in_seed() {
        let ds = synthetic_dataset(5, 3, 0.3, 1).unwrap();
        let spec = PerturbationSpec::new(0.02).unwrap();
        let a = estimate_h_infinity(&ds, spec, 32, 40, 9).unwrap();
        let b = estimate_h_infinity(&ds, spec, 32, 40, 9).unwrap();
        assert_eq!(a.h, b.h);
    }
}
