use super::assumption::angle_between;
use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm, DenseMatrix, Rng};

/// Lower bound on every coordinate of a synthetic point; the dataset is
/// valid for any perturbation radius up to this value.
pub const DEFAULT_FLOOR: f64 = 0.05;

/// Consecutive rejections tolerated before giving up.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    /// Minimum pairwise angle in radians.
    pub separation: f64,
    pub floor: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, d: usize, separation: f64, seed: u64) -> Self {
        Self {
            n,
            d,
            separation,
            floor: DEFAULT_FLOOR,
            seed,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }
}

pub fn synthetic_dataset(n: usize, d: usize, separation: f64, seed: u64) -> Result<Dataset> {
    generate(&SyntheticSpec::new(n, d, separation, seed))
}

/// Unit vectors in the positive orthant with every coordinate at least
/// `floor`, pairwise angles at least `separation`, labelled by a random
/// hyperplane through the median projection so both classes appear.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n < 2 || spec.d < 2 {
        return Err(Error::InvalidArgument(format!(
            "synthetic data needs n >= 2 and d >= 2, got n={} d={}",
            spec.n, spec.d
        )));
    }
    if !(0.0..1.0).contains(&spec.floor) || spec.floor * (spec.d as f64).sqrt() >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "floor {} leaves no room for unit vectors in dimension {}",
            spec.floor, spec.d
        )));
    }
    let mut rng = Rng::new(spec.seed);
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(spec.n);
    let mut attempts = 0usize;
    let mut streak = 0usize;
    while points.len() < spec.n {
        attempts += 1;
        let mut v: Vec<f64> = (0..spec.d).map(|_| rng.standard_normal().abs()).collect();
        let norm = l2_norm(&v);
        if norm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|t| *t /= norm);
        let ok = v.iter().all(|&t| t >= spec.floor)
            && points
                .iter()
                .all(|p| angle_between(p, &v) >= spec.separation);
        if ok {
            points.push(v);
            streak = 0;
        } else {
            streak += 1;
            if streak >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(Error::RejectionFailed {
                    attempts,
                    placed: points.len(),
                    wanted: spec.n,
                });
            }
        }
    }

    let normal: Vec<f64> = (0..spec.d).map(|_| rng.standard_normal()).collect();
    let proj: Vec<f64> = points.iter().map(|p| dot(p, &normal)).collect();
    let mut sorted = proj.clone();
    sorted.sort_by(f64::total_cmp);
    let cut = 0.5 * (sorted[spec.n / 2 - 1] + sorted[spec.n / 2]);
    let y = proj
        .iter()
        .map(|&p| if p > cut { 1.0 } else { -1.0 })
        .collect();

    let x = DenseMatrix::from_rows(&points)?;
    Dataset::new(x, y, spec.floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn two_points_respect_separation() {
        let ds = synthetic_dataset(2, 2, FRAC_PI_4, 1).unwrap();
        assert!(angle_between(ds.x().row(0), ds.x().row(1)) >= FRAC_PI_4);
        assert_eq!(ds.labels_balanced(), (1, 1));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = synthetic_dataset(16, 4, 0.3, 9).unwrap();
        let b = synthetic_dataset(16, 4, 0.3, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synthetic_dataset(16, 4, 0.3, 10).unwrap());
    }

    #[test]
    fn points_live_in_box_with_unit_norm() {
        let ds = synthetic_dataset(16, 4, 0.3, 2).unwrap();
        for row in ds.x().row_iter() {
            assert!((l2_norm(row) - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| (DEFAULT_FLOOR..=1.0).contains(&v)));
        }
        assert!((ds.xi() - 1.0).abs() < 1e-12);
        assert_eq!(ds.epsilon(), DEFAULT_FLOOR);
    }

    #[test]
    fn pigeonhole_rejection() {
        let err = synthetic_dataset(1_000_000, 2, FRAC_PI_4, 3).unwrap_err();
        match err {
            Error::RejectionFailed { placed, wanted, .. } => {
                assert!(placed <= 3);
                assert_eq!(wanted, 1_000_000);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_sizes_rejected() {
        assert!(synthetic_dataset(1, 4, 0.1, 0).is_err());
        assert!(synthetic_dataset(4, 1, 0.1, 0).is_err());
    }
}
