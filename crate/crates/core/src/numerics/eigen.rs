//! Dense symmetric eigenvalues: Householder reduction to tridiagonal form
//! followed by the implicit-shift QL iteration.

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const MAX_QL_SWEEPS: usize = 64;

/// All eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DenseMatrix) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    let n = m.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    // Work on the symmetrized lower triangle as nested rows.
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (m[(i, j)] + m[(j, i)])).collect())
        .collect();
    let (mut diag, mut off) = tridiagonalize(&mut a);
    tridiagonal_ql(&mut diag, &mut off)?;
    diag.sort_by(f64::total_cmp);
    Ok(diag)
}

pub fn smallest_eigenvalue(m: &DenseMatrix) -> Result<f64> {
    let ev = symmetric_eigenvalues(m)?;
    ev.first()
        .copied()
        .ok_or_else(|| Error::Dimension("empty matrix has no eigenvalues".into()))
}

pub fn largest_eigenvalue(m: &DenseMatrix) -> Result<f64> {
    let ev = symmetric_eigenvalues(m)?;
    ev.last()
        .copied()
        .ok_or_else(|| Error::Dimension("empty matrix has no eigenvalues".into()))
}

fn check_symmetric(m: &DenseMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let scale = m.as_slice().iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let n = m.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (m[(i, j)] - m[(j, i)]).abs();
            if gap > SYMMETRY_TOL * scale {
                return Err(Error::Asymmetric {
                    row: i,
                    col: j,
                    gap,
                });
            }
        }
    }
    Ok(())
}

/// Householder tridiagonalization (eigenvalues only). Returns the diagonal
/// and the subdiagonal, with `off[i]` coupling rows `i - 1` and `i`.
#[allow(clippy::needless_range_loop)]
fn tridiagonalize(a: &mut [Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = a[i][..=l].iter().map(|v| v.abs()).sum();
            if scale == 0.0 {
                e[i] = a[i][l];
            } else {
                for k in 0..=l {
                    a[i][k] /= scale;
                    h += a[i][k] * a[i][k];
                }
                let f = a[i][l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i][l] = f - g;
                let mut f = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[j][k] * a[i][k];
                    }
                    for k in (j + 1)..=l {
                        g += a[k][j] * a[i][k];
                    }
                    e[j] = g / h;
                    f += e[j] * a[i][j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[i][j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[j][k] -= f * e[k] + g * a[i][k];
                    }
                }
            }
        } else {
            e[i] = a[i][l];
        }
        d[i] = h;
    }
    for (i, di) in d.iter_mut().enumerate() {
        *di = a[i][i];
    }
    (d, e)
}

/// Implicit QL with Wilkinson-style shifts on a symmetric tridiagonal
/// matrix. On return `d` holds the (unsorted) eigenvalues.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_QL_SWEEPS {
                return Err(Error::InvalidArgument(format!(
                    "QL iteration did not converge for eigenvalue {l}"
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        assert_eq!(smallest_eigenvalue(&DenseMatrix::identity(3)).unwrap(), 1.0);
        let d = DenseMatrix::from_diag(&[5.0, 2.0, 9.0]);
        assert_eq!(smallest_eigenvalue(&d).unwrap(), 2.0);
        assert_eq!(largest_eigenvalue(&d).unwrap(), 9.0);
    }

    #[test]
    fn two_by_two_closed_form() {
        // (2 - l)^2 - 1 = 0  =>  l in {1, 3}
        let m = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let ev = symmetric_eigenvalues(&m).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14);
        assert!((ev[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        assert!(matches!(
            smallest_eigenvalue(&DenseMatrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
        let m = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).unwrap();
        assert!(matches!(
            smallest_eigenvalue(&m),
            Err(Error::Asymmetric { .. })
        ));
    }

    #[test]
    fn one_by_one_and_empty() {
        let m = DenseMatrix::from_diag(&[-4.5]);
        assert_eq!(smallest_eigenvalue(&m).unwrap(), -4.5);
        assert!(symmetric_eigenvalues(&DenseMatrix::zeros(0, 0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn rank_one_matrix() {
        // v v^T has eigenvalues {|v|^2, 0, 0, 0}
        let v = [1.0, 2.0, 3.0, 4.0];
        let mut m = DenseMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = v[i] * v[j];
            }
        }
        let ev = symmetric_eigenvalues(&m).unwrap();
        assert!(ev[0].abs() < 1e-12);
        assert!((ev[3] - 30.0).abs() < 1e-12);
    }
}
