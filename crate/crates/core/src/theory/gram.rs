//! The margin Gram matrix `H_ij = sum_r <d u_i / d w_r, d u_j / d w_r>`.
//!
//! Two independent routes are implemented. [`gram_jacobian`] materializes
//! every per-neuron Jacobian row and takes inner products. [`gram_closed_form`]
//! only looks at the indicator bits and `sign(w_r)`:
//!
//! ```text
//! H_ij = (1/m) y_i y_j ( x_i.x_j sum_r alpha_rij
//!                        - eps sum_r (beta_rij x_i + beta_rji x_j) . sign(w_r)
//!                        + eps^2 sum_r gamma_rij |sign(w_r)|^2 )
//! alpha_rij = (A+_ri + A-_ri)(A+_rj + A-_rj)
//! beta_rij  = (A+_ri + A-_ri)(A+_rj - A-_rj)
//! gamma_rij = (A+_ri - A-_ri)(A+_rj - A-_rj)
//! ```
//!
//! `|sign(w_r)|^2` equals `d` unless some weight coordinate is exactly zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ibp::{IbpForward, PerturbationSpec};
use crate::model::{preactivations, NetworkParams};
use crate::numerics::{dot, sign, smallest_eigenvalue, DenseMatrix};

/// Elementwise tolerance between the two Gram routes.
pub const GRAM_CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramSnapshot {
    #[serde(skip)]
    pub h: Option<DenseMatrix>,
    pub lambda_min: f64,
    pub time: f64,
    pub step_index: usize,
}

/// Jacobian inner-product route.
pub fn gram_jacobian(fwd: &IbpForward<'_>) -> DenseMatrix {
    let n = fwd.dataset().len();
    let d = fwd.dataset().dim();
    let m = fwd.params().width();
    // Each worker owns a block of neurons and a private accumulator; blocks
    // are summed in a fixed order afterwards.
    const BLOCK: usize = 64;
    let partials: Vec<Vec<f64>> = (0..m.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; n * n];
            let mut jac = vec![0.0; n * d];
            for r in b * BLOCK..((b + 1) * BLOCK).min(m) {
                for i in 0..n {
                    fwd.margin_jacobian(i, r, &mut jac[i * d..(i + 1) * d]);
                }
                for i in 0..n {
                    let ji = &jac[i * d..(i + 1) * d];
                    for j in i..n {
                        acc[i * n + j] += dot(ji, &jac[j * d..(j + 1) * d]);
                    }
                }
            }
            acc
        })
        .collect();
    let mut h = DenseMatrix::zeros(n, n);
    for part in &partials {
        for i in 0..n {
            for j in i..n {
                h[(i, j)] += part[i * n + j];
            }
        }
    }
    mirror_upper(&mut h);
    h
}

/// Indicator closed-form route.
pub fn gram_closed_form(fwd: &IbpForward<'_>) -> DenseMatrix {
    let params = fwd.params();
    let ds = fwd.dataset();
    let (n, m) = (ds.len(), params.width());
    let eps = fwd.epsilon();
    let snap = fwd.indicators();

    // per (r, i): live bit, signed bit and sign(w_r) . x_i
    let mut live = vec![0.0; m * n];
    let mut signed = vec![0.0; m * n];
    let mut sx = vec![0.0; m * n];
    let mut nnz = vec![0.0; m];
    for r in 0..m {
        let s: Vec<f64> = params.w.row(r).iter().map(|&v| sign(v)).collect();
        nnz[r] = s.iter().filter(|&&v| v != 0.0).count() as f64;
        for i in 0..n {
            live[r * n + i] = snap.live(r, i);
            signed[r * n + i] = snap.signed(r, i);
            sx[r * n + i] = dot(&s, ds.x().row(i));
        }
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (xi, yi) = ds.example(i);
            let mut out = vec![0.0; n];
            for (j, o) in out.iter_mut().enumerate().skip(i) {
                let (xj, yj) = ds.example(j);
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for r in 0..m {
                    let (li, lj) = (live[r * n + i], live[r * n + j]);
                    let (si, sj) = (signed[r * n + i], signed[r * n + j]);
                    alpha += li * lj;
                    beta += li * sj * sx[r * n + i] + lj * si * sx[r * n + j];
                    gamma += si * sj * nnz[r];
                }
                *o = yi * yj * (dot(xi, xj) * alpha - eps * beta + eps * eps * gamma) / m as f64;
            }
            out
        })
        .collect();
    let mut h = DenseMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for j in i..n {
            h[(i, j)] = row[j];
        }
    }
    mirror_upper(&mut h);
    h
}

fn mirror_upper(h: &mut DenseMatrix) {
    let n = h.rows();
    for i in 0..n {
        for j in 0..i {
            h[(i, j)] = h[(j, i)];
        }
    }
}

/// Computes `H` both ways, fails if they disagree beyond
/// [`GRAM_CONSISTENCY_TOL`], and records the least eigenvalue.
pub fn gram_matrix(
    params: &NetworkParams,
    dataset: &Dataset,
    spec: PerturbationSpec,
    time: f64,
    step_index: usize,
) -> Result<GramSnapshot> {
    let fwd = IbpForward::new(params, dataset, spec)?;
    let by_jacobian = gram_jacobian(&fwd);
    let closed = gram_closed_form(&fwd);
    let n = dataset.len();
    for i in 0..n {
        for j in 0..n {
            if (by_jacobian[(i, j)] - closed[(i, j)]).abs() > GRAM_CONSISTENCY_TOL {
                return Err(Error::GramMismatch {
                    row: i,
                    col: j,
                    jacobian: by_jacobian[(i, j)],
                    closed: closed[(i, j)],
                });
            }
        }
    }
    snapshot(closed, time, step_index)
}

/// Closed-form Gram only; used on hot paths where the dual check is too
/// expensive.
pub fn gram_snapshot_fast(
    params: &NetworkParams,
    dataset: &Dataset,
    spec: PerturbationSpec,
    time: f64,
    step_index: usize,
) -> Result<GramSnapshot> {
    let fwd = IbpForward::new(params, dataset, spec)?;
    snapshot(gram_closed_form(&fwd), time, step_index)
}

fn snapshot(h: DenseMatrix, time: f64, step_index: usize) -> Result<GramSnapshot> {
    let lambda_min = if h.rows() == 0 {
        f64::NAN
    } else {
        smallest_eigenvalue(&h)?
    };
    Ok(GramSnapshot {
        h: Some(h),
        lambda_min,
        time,
        step_index,
    })
}

/// The unperturbed two-layer NTK Gram,
/// `H_ij = (1/m) y_i y_j x_i.x_j sum_r 1(w_r.x_i > 0) 1(w_r.x_j > 0)`,
/// coded directly from pre-activations without indicator bookkeeping.
pub fn standard_gram(params: &NetworkParams, dataset: &Dataset) -> Result<DenseMatrix> {
    let pre = preactivations(params, dataset)?;
    let (n, m) = (dataset.len(), params.width());
    let mut h = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let both = (0..m)
                .filter(|&r| pre[(r, i)] > 0.0 && pre[(r, j)] > 0.0)
                .count() as f64;
            let (xi, yi) = dataset.example(i);
            let (xj, yj) = dataset.example(j);
            h[(i, j)] = yi * yj * dot(xi, xj) * both / m as f64;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_dataset;
    use crate::model::init_network;
    use crate::numerics::symmetric_eigenvalues;

    #[test]
    fn single_neuron_hand_value() {
        let w = DenseMatrix::from_rows(&[vec![2.0, 1.0]]).unwrap();
        let p = NetworkParams::new(w, vec![1.0], 0).unwrap();
        let x = DenseMatrix::from_rows(&[vec![0.6, 0.8]]).unwrap();
        let ds = Dataset::new(x, vec![1.0], 0.0).unwrap();
        let g = gram_matrix(&p, &ds, PerturbationSpec::new(0.1).unwrap(), 0.0, 0).unwrap();
        let h = g.h.unwrap();
        // |x - eps sign(w)|^2 = 0.5^2 + 0.7^2
        assert!((h[(0, 0)] - 0.74).abs() < 1e-15);
        assert!((g.lambda_min - 0.74).abs() < 1e-15);
    }

    #[test]
    fn routes_agree_on_random_instances() {
        for (k, eps) in [0.0, 0.01, 0.1].into_iter().enumerate() {
            let ds = synthetic_dataset(10, 5, 0.15, 20 + k as u64).unwrap();
            let p = init_network(40, 5, k as u64).unwrap();
            let fwd = IbpForward::new(&p, &ds, PerturbationSpec::new(eps).unwrap()).unwrap();
            let a = gram_jacobian(&fwd);
            let b = gram_closed_form(&fwd);
            assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
        }
    }

    #[test]
    fn zero_epsilon_matches_standard_gram() {
        let ds = synthetic_dataset(9, 4, 0.2, 4).unwrap();
        let p = init_network(50, 4, 6).unwrap();
        let g = gram_matrix(&p, &ds, PerturbationSpec::zero(), 0.0, 0).unwrap();
        let s = standard_gram(&p, &ds).unwrap();
        assert!(g.h.unwrap().max_abs_diff(&s).unwrap() < 1e-12);
    }

    #[test]
    fn dead_example_zero_row_and_psd() {
        let ds = synthetic_dataset(6, 3, 0.2, 2).unwrap();
        let mut p = init_network(20, 3, 1).unwrap();
        // make every neuron dead on example 0 by pointing it away from the data
        for r in 0..20 {
            p.w.row_mut(r).iter_mut().for_each(|v| *v = -v.abs());
        }
        let g = gram_matrix(&p, &ds, PerturbationSpec::new(0.01).unwrap(), 0.0, 0).unwrap();
        let h = g.h.unwrap();
        assert!((0..6).all(|j| h[(0, j)] == 0.0 && h[(j, 0)] == 0.0));
        assert_eq!(h.asymmetry(), 0.0);
        assert!(symmetric_eigenvalues(&h).unwrap()[0] >= -1e-8);
    }
}
