//! Bounds on the factorization norm
//! `‖A‖ = min { max squared row norm of P, Q : A = PQᵀ }` and the rank lower
//! bounds it implies.
//!
//! `‖A‖∞ ≤ ‖A‖ ≤ σ_max(A)`, `‖A‖` is at most the largest row or column
//! Euclidean norm, and equals `‖A‖∞` for symmetric positive semidefinite `A`.
//! The exact value is a semidefinite program and is not computed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::FactorPair;
use crate::matrix::{dot, spectral_norm, uniform_norm, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpperSource {
    Spectral,
    Rows,
    Cols,
    Factor,
    Psd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub lower: f64,
    pub upper: f64,
    pub upper_source: UpperSource,
}

impl NormBounds {
    /// `lower ≤ upper ≤ √min(m, n)·lower`, up to `slack`.
    pub fn corridor_ok(&self, m: usize, n: usize, slack: f64) -> bool {
        self.lower <= self.upper + slack && self.upper <= (m.min(n) as f64).sqrt() * self.lower + slack
    }
}

/// Lower bound `‖A‖∞`; upper bound the smallest of `σ_max` (power iteration
/// to relative accuracy `tol`, inflated by `1 + tol`), the largest row and
/// column Euclidean norms, or `‖A‖∞` itself when `A` is symmetric PSD.
pub fn norm_bounds(a: &Matrix, tol: f64) -> NormBounds {
    let lower = uniform_norm(a);
    if is_psd(a) {
        return NormBounds {
            lower,
            upper: lower,
            upper_source: UpperSource::Psd,
        };
    }
    let mut best = (a.max_row_norm(), UpperSource::Rows);
    let cols = a.max_col_norm();
    if cols < best.0 {
        best = (cols, UpperSource::Cols);
    }
    if let Ok(s) = spectral_norm(a, tol.max(f64::EPSILON)) {
        let s = s * (1.0 + tol);
        if s < best.0 {
            best = (s, UpperSource::Spectral);
        }
    }
    NormBounds {
        lower,
        upper: best.0.max(lower),
        upper_source: best.1,
    }
}

/// Symmetric with `λ_min ≥ −10⁻⁸‖A‖∞`, tested by attempting a Cholesky
/// factorization of `A + 10⁻⁸‖A‖∞ I`.
pub(crate) fn is_psd(a: &Matrix) -> bool {
    if !a.is_square() || !a.is_symmetric() {
        return false;
    }
    let n = a.rows();
    let shift = 1e-8 * uniform_norm(a);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = a.get(i, j) - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            if i == j {
                let d = s + shift;
                if d < 0.0 {
                    return false;
                }
                l[i * n + i] = d.sqrt();
            } else if l[j * n + j] > 0.0 {
                l[i * n + j] = s / l[j * n + j];
            } else if s.abs() > shift {
                return false;
            }
        }
    }
    true
}

/// `D` of the factorization: an upper bound on `‖PQᵀ‖`.
pub fn norm_upper_from_factor(f: &FactorPair) -> f64 {
    f.d()
}

/// No rank-`k` matrix is closer than `1/(2√k)` to `I_n` in the uniform
/// norm when `n ≥ 2k`.
pub fn identity_rank_lb(n: usize, k: usize) -> Result<f64> {
    if k == 0 || n < 2 * k {
        return Err(Error::Precondition(format!(
            "needs 1 ≤ k and n ≥ 2k, got n = {n}, k = {k}"
        )));
    }
    Ok(1.0 / (2.0 * (k as f64).sqrt()))
}

/// No rank-`k` matrix is closer than `√(1 − k/n)` to `H_ν`, `n = 2^ν`.
pub fn hadamard_rank_lb(n: usize, k: usize) -> Result<f64> {
    if !n.is_power_of_two() || k >= n {
        return Err(Error::Precondition(format!(
            "needs n a power of 2 and k < n, got n = {n}, k = {k}"
        )));
    }
    Ok((1.0 - k as f64 / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::factor_via_svd;
    use crate::hadamard::build_hadamard;
    use crate::rng::RandomSource;

    #[test]
    fn examples() {
        let b = norm_bounds(&Matrix::identity(5), 1e-10);
        assert_eq!((b.lower, b.upper), (1.0, 1.0));
        let ones = Matrix::from_fn(2, 2, |_, _| 1.0);
        let b = norm_bounds(&ones, 1e-10);
        assert_eq!((b.lower, b.upper, b.upper_source), (1.0, 1.0, UpperSource::Psd));
        let b = norm_bounds(build_hadamard(1).unwrap().matrix(), 1e-12);
        assert_eq!(b.lower, 1.0);
        assert!((b.upper - 2f64.sqrt()).abs() <= 1e-10);
    }

    #[test]
    fn psd_detection() {
        assert!(is_psd(&Matrix::diag(&[1.0, 0.0, 2.0])));
        assert!(!is_psd(&Matrix::diag(&[1.0, -0.1])));
        assert!(!is_psd(build_hadamard(1).unwrap().matrix()));
        assert!(!is_psd(&Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap()));
        // singular PSD with a zero pivot and nonzero coupling is indefinite
        assert!(!is_psd(&Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()));
        let mut rng = RandomSource::new(2, 0);
        for _ in 0..20 {
            let b = Matrix::gaussian(6, 3, &mut rng);
            let g = b.matmul(&b.transpose()).unwrap();
            let g = Matrix::from_fn(6, 6, |i, j| 0.5 * (g.get(i, j) + g.get(j, i)));
            assert!(is_psd(&g));
        }
    }

    #[test]
    fn factor_bound() {
        let f = FactorPair::new(Matrix::identity(3), Matrix::identity(3), None).unwrap();
        assert_eq!(norm_upper_from_factor(&f), 1.0);
        let p = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let q = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(norm_upper_from_factor(&FactorPair::new(p, q, None).unwrap()), 25.0);
        let mut rng = RandomSource::new(4, 0);
        let a = Matrix::gaussian(7, 5, &mut rng);
        let d = norm_upper_from_factor(&factor_via_svd(&a, 1e-10).unwrap());
        assert!(d <= spectral_norm(&a, 1e-12).unwrap() + 1e-8);
        assert!(d >= norm_bounds(&a, 1e-10).lower);
    }

    #[test]
    fn rank_lower_bounds() {
        assert!((identity_rank_lb(8, 2).unwrap() - 0.3535533905932738).abs() <= 1e-15);
        assert_eq!(identity_rank_lb(2, 1).unwrap(), 0.5);
        assert!(identity_rank_lb(3, 2).is_err());
        assert!((hadamard_rank_lb(8, 2).unwrap() - 0.8660254037844386).abs() <= 1e-15);
        assert_eq!(hadamard_rank_lb(8, 0).unwrap(), 1.0);
        assert_eq!(hadamard_rank_lb(8, 6).unwrap(), 0.5);
        assert!(hadamard_rank_lb(8, 8).is_err());
        assert!(hadamard_rank_lb(6, 1).is_err());
    }
}
