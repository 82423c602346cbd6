//! First-order margin dynamics: `d lower_u / dt = H (-l'(lower_u))` along the
//! gradient flow of the certified loss.
//!
//! While no activation bit and no weight sign changes, `lower_u` is linear
//! in `W`, so one explicit Euler step reproduces the first-order prediction
//! to rounding error. The quadratic term only shows up when the flow is
//! resolved more finely than the prediction, so the residual is measured
//! over an interval `eta` integrated with `substeps` equal Euler steps.

use serde::{Deserialize, Serialize};

use super::gram::gram_closed_form;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ibp::{IbpForward, PerturbationSpec};
use crate::model::NetworkParams;
use crate::numerics::{l2_norm, logistic_loss_derivative, sign};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsResidual {
    pub eta: f64,
    pub substeps: usize,
    /// `|| delta_u - eta H (-l') ||_2`.
    pub residual: f64,
    /// `|| eta H (-l') ||_2`.
    pub predicted_norm: f64,
    /// Some activation bit or weight sign changed within the interval.
    pub pattern_changed: bool,
}

fn sign_pattern(p: &NetworkParams) -> Vec<f64> {
    p.w.as_slice().iter().map(|&v| sign(v)).collect()
}

pub fn dynamics_residual(
    params: &NetworkParams,
    dataset: &Dataset,
    spec: PerturbationSpec,
    eta: f64,
    substeps: usize,
) -> Result<DynamicsResidual> {
    if eta.is_nan() || eta <= 0.0 || substeps == 0 {
        return Err(Error::InvalidArgument(format!(
            "dynamics check needs eta > 0 and substeps >= 1 (got {eta}, {substeps})"
        )));
    }
    let fwd = IbpForward::new(params, dataset, spec)?;
    let u0 = fwd.margins();
    let bits0 = fwd.indicators();
    let signs0 = sign_pattern(params);
    let h = gram_closed_form(&fwd);
    let neg_lprime: Vec<f64> = u0
        .values
        .iter()
        .map(|&u| -logistic_loss_derivative(u))
        .collect();
    let predicted: Vec<f64> = h
        .mul_vec(&neg_lprime)?
        .into_iter()
        .map(|v| eta * v)
        .collect();

    let mut cur = params.clone();
    let mut changed = false;
    let h_step = eta / substeps as f64;
    for _ in 0..substeps {
        let f = IbpForward::new(&cur, dataset, spec)?;
        let g = f.loss_gradient_with(&f.margins());
        cur.w.axpy(-h_step, &g)?;
        let f = IbpForward::new(&cur, dataset, spec)?;
        changed |= f.indicators() != bits0 || sign_pattern(&cur) != signs0;
    }
    let u1 = IbpForward::new(&cur, dataset, spec)?.margins();
    let resid: Vec<f64> = u1
        .values
        .iter()
        .zip(&u0.values)
        .zip(&predicted)
        .map(|((a, b), p)| a - b - p)
        .collect();
    Ok(DynamicsResidual {
        eta,
        substeps,
        residual: l2_norm(&resid),
        predicted_norm: l2_norm(&predicted),
        pattern_changed: changed,
    })
}

/// Residual ratios `r(eta) / r(eta / 2)` over `halvings` successive halvings.
pub fn halving_ratios(
    params: &NetworkParams,
    dataset: &Dataset,
    spec: PerturbationSpec,
    eta: f64,
    halvings: usize,
    substeps: usize,
) -> Result<(Vec<f64>, bool)> {
    let mut res = Vec::with_capacity(halvings + 1);
    let mut changed = false;
    let mut e = eta;
    for _ in 0..=halvings {
        let r = dynamics_residual(params, dataset, spec, e, substeps)?;
        changed |= r.pattern_changed;
        res.push(r.residual);
        e /= 2.0;
    }
    Ok((res.windows(2).map(|w| w[0] / w[1]).collect(), changed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_dataset;
    use crate::model::init_network;

    #[test]
    fn single_euler_step_is_exact_to_rounding() {
        let ds = synthetic_dataset(6, 4, 0.2, 2).unwrap();
        let p = init_network(64, 4, 3).unwrap();
        let spec = PerturbationSpec::new(0.01).unwrap();
        let r = dynamics_residual(&p, &ds, spec, 1e-4, 1).unwrap();
        assert!(!r.pattern_changed);
        assert!(r.residual <= 1e-10 * r.predicted_norm.max(1e-300), "{r:?}");
    }

    #[test]
    fn resolved_flow_residual_is_quadratic() {
        let ds = synthetic_dataset(6, 4, 0.2, 2).unwrap();
        let p = init_network(64, 4, 3).unwrap();
        let spec = PerturbationSpec::new(0.01).unwrap();
        let (ratios, changed) = halving_ratios(&p, &ds, spec, 1e-3, 2, 16).unwrap();
        assert!(!changed);
        for q in ratios {
            assert!((3.5..=4.5).contains(&q), "{q}");
        }
    }
}
