//! Non-parallelism of perturbed examples.
//!
//! Two checks are provided. `ExactCorner` (for `d <= 12`) decides exactly
//! whether two `l_inf` boxes contain parallel vectors by intersecting the
//! feasible scale factors `c` with `c * a = b` coordinatewise, and reports
//! the smallest angle over all pairs of box corners. `SufficientAngle` uses
//! the fact that an `l_inf` perturbation of size `epsilon` tilts a vector of
//! norm at least `xi` by at most `asin(epsilon * sqrt(d) / xi)`.

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::numerics::{l2_norm, DenseMatrix};

/// Angles at or below this count as parallel.
pub const PARALLEL_TOL: f64 = 1e-9;
/// Largest dimension for which corner enumeration is attempted.
pub const EXACT_MAX_DIM: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assumption2Method {
    ExactCorner,
    SufficientAngle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption2Report {
    pub epsilon: f64,
    pub min_pairwise_angle: f64,
    pub angle_threshold: f64,
    pub verified: bool,
    pub method: Assumption2Method,
    /// First offending pair, if any.
    pub worst_pair: Option<(usize, usize)>,
}

pub fn check_assumption2(dataset: &Dataset, epsilon: f64) -> Assumption2Report {
    check_points(dataset.x(), epsilon)
}

/// Picks `ExactCorner` for `d <= 12`, `SufficientAngle` otherwise.
pub fn check_points(x: &DenseMatrix, epsilon: f64) -> Assumption2Report {
    let method = if x.cols() <= EXACT_MAX_DIM {
        Assumption2Method::ExactCorner
    } else {
        Assumption2Method::SufficientAngle
    };
    check_points_with(x, epsilon, method)
}

pub fn check_points_with(
    x: &DenseMatrix,
    epsilon: f64,
    method: Assumption2Method,
) -> Assumption2Report {
    match method {
        Assumption2Method::SufficientAngle => sufficient_angle(x, epsilon),
        Assumption2Method::ExactCorner => exact_corner(x, epsilon),
    }
}

fn sufficient_angle(x: &DenseMatrix, epsilon: f64) -> Assumption2Report {
    let d = x.cols() as f64;
    let xi = x.row_iter().map(l2_norm).fold(f64::INFINITY, f64::min);
    let tilt = if xi > 0.0 {
        (epsilon * d.sqrt() / xi).min(1.0)
    } else {
        1.0
    };
    let threshold = 2.0 * tilt.asin();
    let mut min_angle = f64::INFINITY;
    let mut worst = None;
    for i in 0..x.rows() {
        for j in (i + 1)..x.rows() {
            let a = angle_between(x.row(i), x.row(j));
            if a < min_angle {
                min_angle = a;
                worst = Some((i, j));
            }
        }
    }
    let verified = min_angle > threshold && min_angle > PARALLEL_TOL;
    Assumption2Report {
        epsilon,
        min_pairwise_angle: min_angle,
        angle_threshold: threshold,
        verified,
        method: Assumption2Method::SufficientAngle,
        worst_pair: (!verified).then_some(worst).flatten(),
    }
}

fn exact_corner(x: &DenseMatrix, epsilon: f64) -> Assumption2Report {
    assert!(
        x.cols() <= EXACT_MAX_DIM,
        "corner enumeration limited to d <= {EXACT_MAX_DIM}"
    );
    let corners: Vec<Vec<Vec<f64>>> = x.row_iter().map(|r| box_corners(r, epsilon)).collect();
    let mut min_angle = f64::INFINITY;
    let mut verified = true;
    let mut worst = None;
    for i in 0..x.rows() {
        for j in (i + 1)..x.rows() {
            let parallel = boxes_contain_parallel(x.row(i), x.row(j), epsilon);
            let mut a = f64::INFINITY;
            for ci in &corners[i] {
                for cj in &corners[j] {
                    a = a.min(angle_between(ci, cj));
                }
            }
            if parallel {
                a = 0.0;
            }
            if a < min_angle {
                min_angle = a;
            }
            if (parallel || a <= PARALLEL_TOL) && verified {
                verified = false;
                worst = Some((i, j));
            }
        }
    }
    Assumption2Report {
        epsilon,
        min_pairwise_angle: min_angle,
        angle_threshold: PARALLEL_TOL,
        verified,
        method: Assumption2Method::ExactCorner,
        worst_pair: worst,
    }
}

fn box_corners(center: &[f64], epsilon: f64) -> Vec<Vec<f64>> {
    let d = center.len();
    if epsilon == 0.0 {
        return vec![center.to_vec()];
    }
    (0..1usize << d)
        .map(|mask| {
            center
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    if mask >> k & 1 == 1 {
                        v + epsilon
                    } else {
                        v - epsilon
                    }
                })
                .collect()
        })
        .collect()
}

/// True when some `a` in `B(p, eps)` and `b` in `B(q, eps)` satisfy
/// `b = c * a` for a real `c != 0`, or either box contains the origin.
pub fn boxes_contain_parallel(p: &[f64], q: &[f64], epsilon: f64) -> bool {
    let contains_origin = |v: &[f64]| v.iter().all(|&t| t.abs() <= epsilon);
    if contains_origin(p) || contains_origin(q) {
        return true;
    }
    let neg_q: Vec<f64> = q.iter().map(|t| -t).collect();
    positive_scale_feasible(p, q, epsilon) || positive_scale_feasible(p, &neg_q, epsilon)
}

/// Whether `c * [p - eps, p + eps]` meets `[q - eps, q + eps]` in every
/// coordinate for a common `c > 0`. Each coordinate restricts `c` to an
/// interval, so the answer is an interval intersection.
fn positive_scale_feasible(p: &[f64], q: &[f64], epsilon: f64) -> bool {
    let mut lo = 0.0f64; // open at 0
    let mut hi = f64::INFINITY;
    let mut lo_open = true;
    for (&pk, &qk) in p.iter().zip(q) {
        let (a_lo, a_hi) = (pk - epsilon, pk + epsilon);
        let (b_lo, b_hi) = (qk - epsilon, qk + epsilon);
        // c * a_hi >= b_lo
        if a_hi > 0.0 {
            let bound = b_lo / a_hi;
            if bound > lo || (bound == lo && lo_open) {
                lo = bound;
                lo_open = false;
            }
        } else if a_hi < 0.0 {
            hi = hi.min(b_lo / a_hi);
        } else if b_lo > 0.0 {
            return false;
        }
        // c * a_lo <= b_hi
        if a_lo > 0.0 {
            hi = hi.min(b_hi / a_lo);
        } else if a_lo < 0.0 {
            let bound = b_hi / a_lo;
            if bound > lo || (bound == lo && lo_open) {
                lo = bound;
                lo_open = false;
            }
        } else if b_hi < 0.0 {
            return false;
        }
    }
    if lo_open {
        hi > lo
    } else {
        hi >= lo && hi > 0.0
    }
}

/// Angle between two vectors, stable near 0 and pi.
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let mut diff = 0.0;
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn pts(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn orthogonal_unit_vectors_pass_sufficient_check() {
        let x = pts(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = check_points_with(&x, 0.1, Assumption2Method::SufficientAngle);
        assert!(r.verified);
        assert!((r.min_pairwise_angle - FRAC_PI_2).abs() < 1e-15);
        // 2 asin(0.1 sqrt 2)
        assert!((r.angle_threshold - 0.283_794_109_208_327_8).abs() < 1e-15);
        assert!(check_points_with(&x, 0.1, Assumption2Method::ExactCorner).verified);
    }

    #[test]
    fn parallel_points_fail_both_checks() {
        let x = pts(&[&[0.5, 0.5], &[0.6, 0.6]]);
        for eps in [0.0, 0.01, 0.2] {
            for m in [
                Assumption2Method::ExactCorner,
                Assumption2Method::SufficientAngle,
            ] {
                let r = check_points_with(&x, eps, m);
                assert!(!r.verified, "{m:?} eps={eps}");
                assert_eq!(r.worst_pair, Some((0, 1)));
            }
        }
    }

    #[test]
    fn zero_epsilon_has_zero_threshold() {
        let x = pts(&[&[0.5, 0.2], &[0.2, 0.5]]);
        let r = check_points_with(&x, 0.0, Assumption2Method::SufficientAngle);
        assert_eq!(r.angle_threshold, 0.0);
        assert!(r.verified);
    }

    #[test]
    fn exact_check_sees_interior_parallels_that_corners_miss() {
        // Corner slopes of B((1,2), 0.5) are {1, 5/3, 3, 5} and of
        // B((3,5), 0.5) are {9/7, 11/7, 9/5, 11/5}: no corner pair is
        // parallel, but the slope ranges [1, 5] and [9/7, 11/5] overlap.
        let (p, q) = ([1.0, 2.0], [3.0, 5.0]);
        assert!(boxes_contain_parallel(&p, &q, 0.5));
        let corner_min = box_corners(&p, 0.5)
            .iter()
            .flat_map(|a| {
                box_corners(&q, 0.5)
                    .into_iter()
                    .map(move |b| angle_between(a, &b))
            })
            .fold(f64::INFINITY, f64::min);
        assert!(corner_min > 1e-3);
        let r = check_points_with(&pts(&[&p, &q]), 0.5, Assumption2Method::ExactCorner);
        assert!(!r.verified);
        assert!(!boxes_contain_parallel(&p, &q, 0.05));
    }

    #[test]
    fn anti_parallel_detected() {
        assert!(boxes_contain_parallel(&[1.0, 1.0], &[-2.0, -2.0], 0.0));
    }

    #[test]
    fn angle_of_parallel_vectors_is_tiny() {
        assert!(angle_between(&[0.5, 0.5], &[0.6, 0.6]) < 1e-15);
        assert!((angle_between(&[1.0, 0.0], &[-1.0, 0.0]) - std::f64::consts::PI).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn sufficient_implies_exact(
            d in 2usize..6,
            raw in prop::collection::vec(0.05f64..1.0, 18),
            eps in 0.0f64..0.05,
        ) {
            let n = raw.len() / d;
            prop_assume!(n >= 2);
            let rows: Vec<Vec<f64>> = raw.chunks_exact(d).take(n).map(|c| c.to_vec()).collect();
            let x = DenseMatrix::from_rows(&rows).unwrap();
            let suff = check_points_with(&x, eps, Assumption2Method::SufficientAngle);
            let exact = check_points_with(&x, eps, Assumption2Method::ExactCorner);
            if suff.verified {
                prop_assert!(exact.verified);
            }
        }

        #[test]
        fn exact_agrees_with_scaled_witness(
            p in prop::collection::vec(0.1f64..1.0, 3),
            scale in 0.3f64..3.0,
            eps in 0.0f64..0.05,
        ) {
            // q is an exact positive multiple of p: always parallel
            let q: Vec<f64> = p.iter().map(|v| v * scale).collect();
            prop_assert!(boxes_contain_parallel(&p, &q, eps));
        }
    }
}
