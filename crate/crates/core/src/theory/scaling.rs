//! How the certified loss at initialization grows with width and radius.
//! The expected form is `L(0) ~ c1 n sqrt(m) d eps + c2 n`.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ibp::{robust_loss, PerturbationSpec};
use crate::model::init_network;
use crate::numerics::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCell {
    pub width: usize,
    pub epsilon: f64,
    /// `n sqrt(m) d eps`.
    pub regressor: f64,
    pub mean: f64,
    pub std: f64,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L0ScalingReport {
    pub n: usize,
    pub d: usize,
    pub cells: Vec<ScalingCell>,
    /// Cell means regressed on `n sqrt(m) d eps`.
    pub fit: LinearFit,
    pub c1: f64,
    pub c2: f64,
    /// Per-seed `eps = 0` losses regressed on `sqrt(m)`; `None` when zero is
    /// not on the grid.
    pub zero_eps_fit: Option<LinearFit>,
    /// Cell means regressed on `sqrt(m)` for each positive radius.
    pub positive_eps_slopes: Vec<(f64, f64)>,
    /// `|slope| <= 3 se` for the `eps = 0` fit.
    pub zero_eps_within_noise: bool,
    /// `|slope_0| / min positive slope`.
    pub zero_eps_slope_ratio: Option<f64>,
}

/// Ordinary least squares of `y` on `x` with intercept.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let k = x.len();
    if k != y.len() || k < 3 {
        return Err(Error::InvalidArgument(format!(
            "regression needs at least 3 paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let kf = k as f64;
    let mx = x.iter().sum::<f64>() / kf;
    let my = y.iter().sum::<f64>() / kf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("regressor has no spread".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_se = (sse / (kf - 2.0) / sxx).sqrt();
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        slope_se,
    })
}

/// Evaluates `L(0)` for `seed_count` initializations at every
/// `(width, epsilon)` pair and fits the linear scaling law.
pub fn check_l0_scaling(
    dataset: &Dataset,
    widths: &[usize],
    epsilons: &[f64],
    seed_count: usize,
    seed: u64,
) -> Result<L0ScalingReport> {
    if widths.len() < 3 || epsilons.len() < 3 || seed_count == 0 {
        return Err(Error::InvalidArgument(format!(
            "scaling grid needs >= 3 widths, >= 3 radii and >= 1 seed (got {}, {}, {seed_count})",
            widths.len(),
            epsilons.len()
        )));
    }
    let (n, d) = (dataset.len(), dataset.dim());
    let mut cells = Vec::with_capacity(widths.len() * epsilons.len());
    for &m in widths {
        for &eps in epsilons {
            let spec = PerturbationSpec::new(eps)?;
            let mut samples = Vec::with_capacity(seed_count);
            // the same initializations are reused across radii
            for s in 0..seed_count {
                let p = init_network(m, d, derive_seed(seed, (m as u64) << 20 | s as u64))?;
                samples.push(robust_loss(&p, dataset, spec)?);
            }
            let mean = samples.iter().sum::<f64>() / seed_count as f64;
            let var = if seed_count > 1 {
                samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (seed_count - 1) as f64
            } else {
                0.0
            };
            cells.push(ScalingCell {
                width: m,
                epsilon: eps,
                regressor: n as f64 * (m as f64).sqrt() * d as f64 * eps,
                mean,
                std: var.sqrt(),
                samples,
            });
        }
    }

    let xs: Vec<f64> = cells.iter().map(|c| c.regressor).collect();
    let ys: Vec<f64> = cells.iter().map(|c| c.mean).collect();
    let fit = linear_fit(&xs, &ys)?;

    let zero_eps_fit = if epsilons.contains(&0.0) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for c in cells.iter().filter(|c| c.epsilon == 0.0) {
            for &v in &c.samples {
                x.push((c.width as f64).sqrt());
                y.push(v);
            }
        }
        Some(linear_fit(&x, &y)?)
    } else {
        None
    };

    let mut positive_eps_slopes = Vec::new();
    for &eps in epsilons.iter().filter(|&&e| e > 0.0) {
        let row: Vec<&ScalingCell> = cells.iter().filter(|c| c.epsilon == eps).collect();
        let x: Vec<f64> = row.iter().map(|c| (c.width as f64).sqrt()).collect();
        let y: Vec<f64> = row.iter().map(|c| c.mean).collect();
        positive_eps_slopes.push((eps, linear_fit(&x, &y)?.slope));
    }

    let zero_eps_within_noise = zero_eps_fit
        .map(|f| f.slope.abs() <= 3.0 * f.slope_se)
        .unwrap_or(false);
    let min_positive = positive_eps_slopes
        .iter()
        .map(|&(_, s)| s.abs())
        .fold(f64::INFINITY, f64::min);
    let zero_eps_slope_ratio = zero_eps_fit
        .filter(|_| min_positive.is_finite() && min_positive > 0.0)
        .map(|f| f.slope.abs() / min_positive);

    Ok(L0ScalingReport {
        n,
        d,
        c1: fit.slope,
        c2: if n > 0 {
            fit.intercept / n as f64
        } else {
            f64::NAN
        },
        fit,
        cells,
        zero_eps_fit,
        positive_eps_slopes,
        zero_eps_within_noise,
        zero_eps_slope_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_dataset;

    #[test]
    fn exact_line_recovered() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept - 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        assert!(f.slope_se < 1e-12);
    }

    #[test]
    fn degenerate_grid_rejected() {
        let ds = synthetic_dataset(4, 3, 0.3, 1).unwrap();
        assert!(check_l0_scaling(&ds, &[4, 16], &[0.0, 0.01, 0.02], 2, 0).is_err());
        assert!(linear_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn loss_grows_with_width_at_positive_radius() {
        let ds = synthetic_dataset(8, 16, 0.1, 3).unwrap();
        let rep = check_l0_scaling(&ds, &[64, 256, 1024], &[0.0, 0.02, 0.04], 4, 5).unwrap();
        assert!(rep.positive_eps_slopes.iter().all(|&(_, s)| s > 0.0));
        assert!(rep.c1 > 0.0);
    }
}
