//! Empirical upper bounds on the worst-case margin inside the `l_inf` box:
//! a signed-gradient PGD attack and an exhaustive grid for tiny inputs.

use serde::{Deserialize, Serialize};

use super::PerturbationSpec;
use crate::error::{Error, Result};
use crate::model::NetworkParams;
use crate::numerics::{dot, relu, Rng};

pub const GRID_MAX_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub steps: usize,
    pub restarts: usize,
    /// Step size as a fraction of epsilon.
    pub step_fraction: f64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            steps: 40,
            restarts: 5,
            step_fraction: 0.1,
        }
    }
}

fn margin_at(params: &NetworkParams, x: &[f64], y: f64) -> f64 {
    let s: f64 = params
        .w
        .row_iter()
        .zip(params.a())
        .map(|(w, &a)| a * relu(dot(w, x)))
        .sum();
    y * s * params.inv_sqrt_width()
}

/// Signed direction of `d u / d x` (up to the positive `m^{-1/2}` factor).
fn margin_input_gradient(params: &NetworkParams, x: &[f64], y: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (w, &a) in params.w.row_iter().zip(params.a()) {
        if dot(w, x) > 0.0 {
            for (o, &wk) in out.iter_mut().zip(w) {
                *o += y * a * wk;
            }
        }
    }
}

/// Lowest margin `y f(x + delta)` found by projected signed-gradient descent
/// over `||delta||_inf <= epsilon`. The clean point is always evaluated, and
/// each restart begins at a uniform point of the box.
pub fn pgd_attack_margin(
    params: &NetworkParams,
    x: &[f64],
    y: f64,
    spec: PerturbationSpec,
    config: &PgdConfig,
    seed: u64,
) -> Result<f64> {
    params.check_input(x.len())?;
    let eps = spec.epsilon();
    let mut best = margin_at(params, x, y);
    if eps == 0.0 {
        return Ok(best);
    }
    let step = eps * config.step_fraction;
    let base = Rng::new(seed);
    let mut cur = vec![0.0; x.len()];
    let mut grad = vec![0.0; x.len()];
    for restart in 0..config.restarts {
        let mut rng = base.fork(restart as u64);
        for (c, &xk) in cur.iter_mut().zip(x) {
            *c = xk + rng.uniform(-eps, eps);
        }
        best = best.min(margin_at(params, &cur, y));
        for _ in 0..config.steps {
            margin_input_gradient(params, &cur, y, &mut grad);
            for ((c, &g), &xk) in cur.iter_mut().zip(&grad).zip(x) {
                let moved = *c - step * crate::numerics::sign(g);
                *c = moved.clamp(xk - eps, xk + eps);
            }
            best = best.min(margin_at(params, &cur, y));
        }
    }
    Ok(best)
}

/// Minimum margin over a uniform grid of the box, corners included.
pub fn grid_margin_oracle(
    params: &NetworkParams,
    x: &[f64],
    y: f64,
    spec: PerturbationSpec,
    points_per_dim: usize,
) -> Result<f64> {
    params.check_input(x.len())?;
    let d = x.len();
    if d > GRID_MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "grid oracle limited to d <= {GRID_MAX_DIM}, got {d}"
        )));
    }
    let eps = spec.epsilon();
    if eps == 0.0 {
        return Ok(margin_at(params, x, y));
    }
    if points_per_dim < 2 {
        return Err(Error::InvalidArgument(
            "grid needs at least 2 points per dimension".into(),
        ));
    }
    let offsets: Vec<f64> = (0..points_per_dim)
        .map(|j| -eps + 2.0 * eps * j as f64 / (points_per_dim - 1) as f64)
        .collect();
    let total = points_per_dim.pow(d as u32);
    let mut point = vec![0.0; d];
    let mut best = f64::INFINITY;
    for idx in 0..total {
        let mut rest = idx;
        for (k, p) in point.iter_mut().enumerate() {
            *p = x[k] + offsets[rest % points_per_dim];
            rest /= points_per_dim;
        }
        best = best.min(margin_at(params, &point, y));
    }
    Ok(best)
}
