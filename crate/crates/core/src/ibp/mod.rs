//! Interval bound propagation through the two-layer network.
//!
//! For an `l_inf` ball of radius `epsilon` around `x_i`, neuron `r` has
//! pre-activation bounds `w_r . x_i -+ epsilon ||w_r||_1`. The certified
//! lower margin takes the lower bound where `y_i a_r = +1` and the upper
//! bound where `y_i a_r = -1`:
//!
//! ```text
//! lower_u_i = m^{-1/2} sum_r y_i a_r relu(w_r . x_i - y_i a_r epsilon ||w_r||_1)
//! ```

mod attack;

pub use attack::{grid_margin_oracle, pgd_attack_margin, PgdConfig, GRID_MAX_DIM};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{loss_from_margins, preactivations, MarginKind, MarginVector, NetworkParams};
use crate::numerics::{l1_norm, logistic_loss_derivative, relu, sign, DenseMatrix};

/// `l_inf` perturbation radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    epsilon: f64,
}

impl PerturbationSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!(
                "perturbation radius must lie in [0, 1], got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn zero() -> Self {
        Self { epsilon: 0.0 }
    }
}

/// Activation bits of the interval bounds: `a_plus[r][i]` is set when
/// `y_i a_r = 1` and the lower bound is positive, `a_minus[r][i]` when
/// `y_i a_r = -1` and the upper bound is positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorSnapshot {
    m: usize,
    n: usize,
    a_plus: Vec<bool>,
    a_minus: Vec<bool>,
}

impl IndicatorSnapshot {
    pub fn width(&self) -> usize {
        self.m
    }

    pub fn examples(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn plus(&self, r: usize, i: usize) -> bool {
        self.a_plus[r * self.n + i]
    }

    #[inline]
    pub fn minus(&self, r: usize, i: usize) -> bool {
        self.a_minus[r * self.n + i]
    }

    /// `A+ + A-` as 0/1.
    #[inline]
    pub fn live(&self, r: usize, i: usize) -> f64 {
        f64::from(u8::from(self.plus(r, i)) + u8::from(self.minus(r, i)))
    }

    /// `A+ - A-` as -1/0/1.
    #[inline]
    pub fn signed(&self, r: usize, i: usize) -> f64 {
        f64::from(i8::from(self.plus(r, i)) - i8::from(self.minus(r, i)))
    }

    pub fn set_plus(&mut self, r: usize, i: usize, v: bool) {
        self.a_plus[r * self.n + i] = v;
    }

    pub fn set_minus(&mut self, r: usize, i: usize, v: bool) {
        self.a_minus[r * self.n + i] = v;
    }

    pub fn plus_count(&self) -> usize {
        self.a_plus.iter().filter(|&&b| b).count()
    }

    pub fn minus_count(&self) -> usize {
        self.a_minus.iter().filter(|&&b| b).count()
    }
}

/// Everything needed to evaluate margins, loss and Jacobians at one point
/// in parameter space.
#[derive(Debug, Clone)]
pub struct IbpForward<'a> {
    params: &'a NetworkParams,
    dataset: &'a Dataset,
    epsilon: f64,
    pre: DenseMatrix,
    l1: Vec<f64>,
}

impl<'a> IbpForward<'a> {
    pub fn new(
        params: &'a NetworkParams,
        dataset: &'a Dataset,
        spec: PerturbationSpec,
    ) -> Result<Self> {
        let pre = preactivations(params, dataset)?;
        let l1 = params.w.row_iter().map(l1_norm).collect();
        Ok(Self {
            params,
            dataset,
            epsilon: spec.epsilon(),
            pre,
            l1,
        })
    }

    pub fn params(&self) -> &NetworkParams {
        self.params
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `y_i a_r`.
    #[inline]
    fn multiplier(&self, r: usize, i: usize) -> f64 {
        self.dataset.y()[i] * self.params.a()[r]
    }

    /// The pre-activation bound used by the certified margin: the lower
    /// bound when `y_i a_r = 1`, the upper bound otherwise.
    #[inline]
    pub fn bound(&self, r: usize, i: usize) -> f64 {
        if self.multiplier(r, i) > 0.0 {
            self.pre[(r, i)] - self.epsilon * self.l1[r]
        } else {
            self.pre[(r, i)] + self.epsilon * self.l1[r]
        }
    }

    pub fn margins(&self) -> MarginVector {
        let scale = self.params.inv_sqrt_width();
        let m = self.params.width();
        let values = (0..self.dataset.len())
            .into_par_iter()
            .map(|i| {
                let mut s = 0.0;
                for r in 0..m {
                    s += self.multiplier(r, i) * relu(self.bound(r, i));
                }
                s * scale
            })
            .collect();
        MarginVector {
            values,
            kind: MarginKind::IbpLower,
        }
    }

    pub fn indicators(&self) -> IndicatorSnapshot {
        let (m, n) = (self.params.width(), self.dataset.len());
        let mut a_plus = vec![false; m * n];
        let mut a_minus = vec![false; m * n];
        for r in 0..m {
            for i in 0..n {
                let active = self.bound(r, i) > 0.0;
                if self.multiplier(r, i) > 0.0 {
                    a_plus[r * n + i] = active;
                } else {
                    a_minus[r * n + i] = active;
                }
            }
        }
        IndicatorSnapshot {
            m,
            n,
            a_plus,
            a_minus,
        }
    }

    /// `d lower_u_i / d w_r`, written into `out` (length `d`).
    pub fn margin_jacobian(&self, i: usize, r: usize, out: &mut [f64]) {
        let scale = self.params.inv_sqrt_width() * self.multiplier(r, i);
        let b = self.bound(r, i);
        out.iter_mut().for_each(|v| *v = 0.0);
        if b <= 0.0 {
            return;
        }
        // A+ branch: x - eps sign(w); A- branch: x + eps sign(w)
        let shift = if self.multiplier(r, i) > 0.0 {
            -self.epsilon
        } else {
            self.epsilon
        };
        let x = self.dataset.x().row(i);
        for ((o, &xk), &wk) in out.iter_mut().zip(x).zip(self.params.w.row(r)) {
            *o = scale * (xk + shift * sign(wk));
        }
    }

    pub fn loss(&self) -> f64 {
        loss_from_margins(&self.margins().values)
    }

    /// `dL/dW = sum_i l'(lower_u_i) d lower_u_i / dW`, given the margins.
    pub fn loss_gradient_with(&self, margins: &MarginVector) -> DenseMatrix {
        let lprime: Vec<f64> = margins
            .values
            .iter()
            .map(|&u| logistic_loss_derivative(u))
            .collect();
        self.weighted_jacobian_sum(&lprime, None)
    }

    /// `sum_{i in batch} coef_i d lower_u_i / dW`. With `batch = None` all
    /// examples contribute, in index order.
    pub fn weighted_jacobian_sum(&self, coef: &[f64], batch: Option<&[usize]>) -> DenseMatrix {
        let d = self.params.input_dim();
        let scale = self.params.inv_sqrt_width();
        let all: Vec<usize>;
        let idx = match batch {
            Some(b) => b,
            None => {
                all = (0..self.dataset.len()).collect();
                &all
            }
        };
        let mut grad = DenseMatrix::zeros(self.params.width(), d);
        grad.as_mut_slice()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(r, g)| {
                let a = self.params.a()[r];
                // live part: sum c_i y_i (A+ + A-) x_i ; signed part: sum c_i y_i (A+ - A-)
                let mut signed = 0.0;
                for &i in idx {
                    if self.bound(r, i) <= 0.0 {
                        continue;
                    }
                    let (x, y) = self.dataset.example(i);
                    let c = coef[i] * y;
                    for (gk, xk) in g.iter_mut().zip(x) {
                        *gk += c * xk;
                    }
                    signed += if self.multiplier(r, i) > 0.0 { c } else { -c };
                }
                let w = self.params.w.row(r);
                for (gk, &wk) in g.iter_mut().zip(w) {
                    *gk = scale * a * (*gk - self.epsilon * sign(wk) * signed);
                }
            });
        grad
    }
}

pub fn ibp_margins(
    params: &NetworkParams,
    dataset: &Dataset,
    spec: PerturbationSpec,
) -> Result<MarginVector> {
    Ok(IbpForward::new(params, dataset, spec)?.margins())
}

/// `sum_i log(1 + exp(-lower_u_i))`.
pub fn robust_loss(
    params: &NetworkParams,
    dataset: &Dataset,
    spec: PerturbationSpec,
) -> Result<f64> {
    Ok(IbpForward::new(params, dataset, spec)?.loss())
}

pub fn robust_loss_gradient(
    params: &NetworkParams,
    dataset: &Dataset,
    spec: PerturbationSpec,
) -> Result<DenseMatrix> {
    let fwd = IbpForward::new(params, dataset, spec)?;
    let u = fwd.margins();
    Ok(fwd.loss_gradient_with(&u))
}

pub fn indicator_snapshot(
    params: &NetworkParams,
    dataset: &Dataset,
    spec: PerturbationSpec,
) -> Result<IndicatorSnapshot> {
    Ok(IbpForward::new(params, dataset, spec)?.indicators())
}

/// Fraction of examples that are not certified, i.e. `lower_u_i <= 0`.
pub fn certified_error(margins: &MarginVector) -> f64 {
    if margins.is_empty() {
        return 0.0;
    }
    margins.values.iter().filter(|&&u| u <= 0.0).count() as f64 / margins.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_dataset;
    use crate::model::{init_network, standard_loss, standard_margins};
    use crate::numerics::softplus;

    fn single(w: &[f64], a: f64) -> NetworkParams {
        NetworkParams::new(DenseMatrix::from_rows(&[w.to_vec()]).unwrap(), vec![a], 0).unwrap()
    }

    fn one_example(x: &[f64], y: f64) -> Dataset {
        Dataset::new(DenseMatrix::from_rows(&[x.to_vec()]).unwrap(), vec![y], 0.0).unwrap()
    }

    fn eps(e: f64) -> PerturbationSpec {
        PerturbationSpec::new(e).unwrap()
    }

    #[test]
    fn spec_bounds() {
        assert!(PerturbationSpec::new(-0.1).is_err());
        assert!(PerturbationSpec::new(1.1).is_err());
        assert!(PerturbationSpec::new(1.0).is_ok());
    }

    #[test]
    fn single_neuron_hand_values() {
        let ds = one_example(&[0.6, 0.8], 1.0);
        let u = ibp_margins(&single(&[2.0, 1.0], 1.0), &ds, eps(0.1)).unwrap();
        assert!((u.values[0] - 1.7).abs() < 1e-15);
        assert_eq!(u.kind, MarginKind::IbpLower);

        let u = ibp_margins(&single(&[1.0, -1.0], 1.0), &ds, eps(0.1)).unwrap();
        assert_eq!(u.values[0], 0.0);

        let l = robust_loss(&single(&[2.0, 1.0], 1.0), &ds, eps(0.1)).unwrap();
        assert!((l - 0.167_786_029_386_265_9).abs() < 1e-15);
    }

    #[test]
    fn negative_multiplier_uses_upper_bound() {
        // y a = -1: contribution is -relu(w.x + eps |w|_1)
        let ds = one_example(&[0.6, 0.8], -1.0);
        let u = ibp_margins(&single(&[2.0, 1.0], 1.0), &ds, eps(0.1)).unwrap();
        assert!((u.values[0] + 2.3).abs() < 1e-15);
        let snap = indicator_snapshot(&single(&[2.0, 1.0], 1.0), &ds, eps(0.1)).unwrap();
        assert!(!snap.plus(0, 0) && snap.minus(0, 0));
    }

    #[test]
    fn gradient_hand_value() {
        let ds = one_example(&[0.6, 0.8], 1.0);
        let g = robust_loss_gradient(&single(&[2.0, 1.0], 1.0), &ds, eps(0.1)).unwrap();
        let lp = -0.154_465_265_083_534_7; // l'(1.7)
        assert!((g[(0, 0)] - lp * 0.5).abs() < 1e-15);
        assert!((g[(0, 1)] - lp * 0.7).abs() < 1e-15);
    }

    #[test]
    fn dead_row_has_zero_gradient() {
        let w = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![-3.0, -3.0]]).unwrap();
        let p = NetworkParams::new(w, vec![1.0, 1.0], 0).unwrap();
        let ds = synthetic_dataset(6, 2, 0.05, 1).unwrap();
        let pos: Vec<usize> = (0..6).filter(|&i| ds.y()[i] > 0.0).collect();
        let ds = ds.subset(&pos).unwrap();
        let g = robust_loss_gradient(&p, &ds, eps(0.01)).unwrap();
        assert_eq!(g.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn indicators_hand_and_strictness() {
        let ds = one_example(&[0.6, 0.8], 1.0);
        let s = indicator_snapshot(&single(&[2.0, 1.0], 1.0), &ds, eps(0.1)).unwrap();
        assert!(s.plus(0, 0) && !s.minus(0, 0));
        // w.x - eps |w|_1 = 0.5 - 0.5 * 1 = 0 exactly
        let ds = one_example(&[0.5, 0.5], 1.0);
        let s = indicator_snapshot(&single(&[0.5, 0.5], 1.0), &ds, eps(0.5)).unwrap();
        assert!(!s.plus(0, 0) && !s.minus(0, 0));
        // flipping a moves the live bit from A+ to A-
        let ds = one_example(&[0.6, 0.8], 1.0);
        let s = indicator_snapshot(&single(&[2.0, 1.0], -1.0), &ds, eps(0.1)).unwrap();
        assert!(!s.plus(0, 0) && s.minus(0, 0));
    }

    #[test]
    fn certified_error_strict() {
        let mv = |v: Vec<f64>| MarginVector {
            values: v,
            kind: MarginKind::IbpLower,
        };
        assert_eq!(certified_error(&mv(vec![0.1, 2.0])), 0.0);
        assert!((certified_error(&mv(vec![1.0, 0.0, -0.5])) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_epsilon_reduces_to_standard() {
        let ds = synthetic_dataset(12, 4, 0.2, 8).unwrap();
        let p = init_network(32, 4, 3).unwrap();
        let u = ibp_margins(&p, &ds, PerturbationSpec::zero()).unwrap();
        let s = standard_margins(&p, &ds).unwrap();
        assert_eq!(u.values, s.values);
        assert_eq!(
            robust_loss(&p, &ds, PerturbationSpec::zero())
                .unwrap()
                .to_bits(),
            standard_loss(&p, &ds).unwrap().to_bits()
        );
        let three = one_example(&[0.5, 0.5], 1.0);
        let zero = NetworkParams::new(DenseMatrix::zeros(2, 2), vec![1.0, -1.0], 0).unwrap();
        assert_eq!(robust_loss(&zero, &three, eps(0.1)).unwrap(), softplus(0.0));
    }

    #[test]
    fn jacobian_rows_sum_to_gradient() {
        let ds = synthetic_dataset(8, 3, 0.2, 5).unwrap();
        let p = init_network(6, 3, 1).unwrap();
        let fwd = IbpForward::new(&p, &ds, eps(0.03)).unwrap();
        let u = fwd.margins();
        let g = fwd.loss_gradient_with(&u);
        let mut buf = vec![0.0; 3];
        for r in 0..6 {
            let mut acc = [0.0; 3];
            for i in 0..ds.len() {
                fwd.margin_jacobian(i, r, &mut buf);
                let lp = logistic_loss_derivative(u.values[i]);
                for k in 0..3 {
                    acc[k] += lp * buf[k];
                }
            }
            for k in 0..3 {
                assert!((acc[k] - g[(r, k)]).abs() < 1e-14);
            }
        }
    }
}
