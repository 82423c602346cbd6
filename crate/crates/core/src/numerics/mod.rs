//! Dense linear algebra, seeded randomness and stable scalar loss primitives.

mod eigen;
mod matrix;
mod rng;

pub use eigen::{largest_eigenvalue, smallest_eigenvalue, symmetric_eigenvalues};
pub use matrix::{dot, l1_norm, l2_norm, pairwise_sum, sign, sign_vector, DenseMatrix};
pub use rng::{derive_seed, Rng};

/// `log(1 + exp(z))` without overflow for any finite `z`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic loss of a margin, `log(1 + exp(-u))`.
#[inline]
pub fn logistic_loss(u: f64) -> f64 {
    softplus(-u)
}

/// Derivative of [`logistic_loss`]: `-1 / (1 + exp(u))`.
#[inline]
pub fn logistic_loss_derivative(u: f64) -> f64 {
    if u >= 0.0 {
        let e = (-u).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + u.exp())
    }
}

#[inline]
pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}
