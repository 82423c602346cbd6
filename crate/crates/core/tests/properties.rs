use ibplab_core::data::synthetic_dataset;
use ibplab_core::ibp::{
    grid_margin_oracle, ibp_margins, indicator_snapshot, pgd_attack_margin, robust_loss, PgdConfig,
};
use ibplab_core::model::{forward, init_network};
use ibplab_core::numerics::{smallest_eigenvalue, symmetric_eigenvalues, DenseMatrix, Rng};
use ibplab_core::theory::gram_matrix;
use ibplab_core::{train, Dataset, NetworkParams, PerturbationSpec, TrainConfig};
use proptest::prelude::*;

fn random_dataset(seed: u64, n: usize, d: usize) -> Dataset {
    let mut rng = Rng::new(seed);
    let data: Vec<f64> = (0..n * d).map(|_| rng.uniform(0.0, 1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.uniform_sign()).collect();
    Dataset::new(DenseMatrix::from_vec(n, d, data).unwrap(), y, 0.0).unwrap()
}

fn random_symmetric(seed: u64, n: usize) -> DenseMatrix {
    let mut rng = Rng::new(seed);
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.uniform(-3.0, 3.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lower_margin_monotone_in_radius(seed in 0u64..10_000, e1 in 0.0f64..0.3, e2 in 0.0f64..0.3) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let ds = random_dataset(seed, 6, 4);
        let p = init_network(24, 4, seed).unwrap();
        let a = ibp_margins(&p, &ds, PerturbationSpec::new(lo).unwrap()).unwrap();
        let b = ibp_margins(&p, &ds, PerturbationSpec::new(hi).unwrap()).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            prop_assert!(u >= v);
        }
        let la = robust_loss(&p, &ds, PerturbationSpec::new(lo).unwrap()).unwrap();
        let lb = robust_loss(&p, &ds, PerturbationSpec::new(hi).unwrap()).unwrap();
        prop_assert!(la <= lb);
    }

    #[test]
    fn single_neuron_bound_is_the_box_minimum(seed in 0u64..10_000, eps in 0.0f64..0.3, d in 1usize..=4) {
        let ds = random_dataset(seed, 3, d);
        let p = init_network(1, d, seed).unwrap();
        let spec = PerturbationSpec::new(eps).unwrap();
        let lower = ibp_margins(&p, &ds, spec).unwrap();
        for i in 0..3 {
            let (x, y) = ds.example(i);
            // the margin of one ReLU unit is monotone along each axis, so
            // its minimum over the box sits at a corner
            let corners = grid_margin_oracle(&p, x, y, spec, 2).unwrap();
            prop_assert!((corners - lower.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn attack_never_beats_certificate(seed in 0u64..10_000, eps in 0.0f64..0.2) {
        let ds = random_dataset(seed, 4, 5);
        let p = init_network(32, 5, seed).unwrap();
        let spec = PerturbationSpec::new(eps).unwrap();
        let lower = ibp_margins(&p, &ds, spec).unwrap();
        let cfg = PgdConfig { steps: 10, restarts: 2, step_fraction: 0.25 };
        for i in 0..4 {
            let (x, y) = ds.example(i);
            let attacked = pgd_attack_margin(&p, x, y, spec, &cfg, seed).unwrap();
            let clean = y * forward(&p, x).unwrap();
            prop_assert!(attacked >= lower.values[i] - 1e-9);
            prop_assert!(attacked <= clean);
        }
    }

    #[test]
    fn indicator_bits_are_exclusive(seed in 0u64..10_000, eps in 0.0f64..0.5) {
        let ds = random_dataset(seed, 5, 3);
        let p = init_network(20, 3, seed).unwrap();
        let s = indicator_snapshot(&p, &ds, PerturbationSpec::new(eps).unwrap()).unwrap();
        for r in 0..20 {
            for i in 0..5 {
                prop_assert!(!(s.plus(r, i) && s.minus(r, i)));
            }
        }
    }

    #[test]
    fn gram_is_symmetric_psd(seed in 0u64..10_000, k in 0usize..3) {
        let eps = [0.0, 0.01, 0.1][k];
        let ds = random_dataset(seed, 7, 4);
        let p = init_network(30, 4, seed).unwrap();
        let g = gram_matrix(&p, &ds, PerturbationSpec::new(eps).unwrap(), 0.0, 0).unwrap();
        let h = g.h.unwrap();
        prop_assert_eq!(h.asymmetry(), 0.0);
        prop_assert!(g.lambda_min >= -1e-8);
    }

    #[test]
    fn eigenvalues_match_nalgebra(seed in 0u64..10_000, n in 1usize..12) {
        let m = random_symmetric(seed, n);
        let mut ours = symmetric_eigenvalues(&m).unwrap();
        let oracle = nalgebra::DMatrix::from_row_slice(n, n, m.as_slice());
        let mut theirs: Vec<f64> = oracle.symmetric_eigenvalues().iter().copied().collect();
        ours.sort_by(f64::total_cmp);
        theirs.sort_by(f64::total_cmp);
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn smallest_eigenvalue_matches_2x2_formula(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
        let m = DenseMatrix::from_rows(&[vec![a, b], vec![b, c]]).unwrap();
        let expected = (a + c) / 2.0 - (((a - c) / 2.0).powi(2) + b * b).sqrt();
        prop_assert!((smallest_eigenvalue(&m).unwrap() - expected).abs() < 1e-10);
    }
}

#[test]
fn smallest_eigenvalue_matches_3x3_trigonometric_formula() {
    for seed in 0..200 {
        let m = random_symmetric(seed, 3);
        let (a, b, c) = (m[(0, 0)], m[(1, 1)], m[(2, 2)]);
        let (d, e, f) = (m[(0, 1)], m[(1, 2)], m[(0, 2)]);
        let q = (a + b + c) / 3.0;
        let p1 = d * d + e * e + f * f;
        let p2 = (a - q).powi(2) + (b - q).powi(2) + (c - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let mut bm = m.clone();
        for i in 0..3 {
            bm[(i, i)] -= q;
        }
        bm.scale(1.0 / p);
        let det = bm[(0, 0)] * (bm[(1, 1)] * bm[(2, 2)] - bm[(1, 2)] * bm[(2, 1)])
            - bm[(0, 1)] * (bm[(1, 0)] * bm[(2, 2)] - bm[(1, 2)] * bm[(2, 0)])
            + bm[(0, 2)] * (bm[(1, 0)] * bm[(2, 1)] - bm[(1, 1)] * bm[(2, 0)]);
        let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
        let smallest = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        assert!((smallest_eigenvalue(&m).unwrap() - smallest).abs() < 1e-10);
    }
}

#[test]
fn training_is_bit_reproducible_and_output_layer_frozen() {
    let ds = synthetic_dataset(12, 4, 0.2, 3).unwrap();
    let p: NetworkParams = init_network(64, 4, 4).unwrap();
    for mut cfg in [TrainConfig::gd_flow(0.01, 30), TrainConfig::sgd(0.01, 4)] {
        cfg.batch_size = 5;
        cfg.log_every = 3;
        cfg.gram_every = 6;
        cfg.seed = 11;
        let a = train(&p, &ds, &cfg).unwrap();
        let b = train(&p, &ds, &cfg).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.params, b.params);
        assert_eq!(a.params.a(), p.a());
        assert_ne!(a.params.w, p.w);
    }
}
