//! Shared fixtures for the kernel benchmarks.

use ibplab_core::numerics::Rng;
use ibplab_core::{init_network, Dataset, DenseMatrix, NetworkParams};

/// Random inputs in `[epsilon, 1]^d` with alternating labels, and a fresh
/// width-`m` network.
pub fn fixture(n: usize, d: usize, m: usize, epsilon: f64, seed: u64) -> (Dataset, NetworkParams) {
    let mut rng = Rng::new(seed);
    let x: Vec<f64> = (0..n * d).map(|_| rng.uniform(epsilon, 1.0)).collect();
    let y = (0..n)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let ds = Dataset::new(DenseMatrix::from_vec(n, d, x).unwrap(), y, epsilon).unwrap();
    let params = init_network(m, d, seed ^ 0x9e37).unwrap();
    (ds, params)
}
