//! Sylvester–Hadamard matrices.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Largest supported order exponent; a 2¹⁴ square of doubles is already 2 GiB.
pub const MAX_NU: u32 = 14;

/// `H_ν`, the ±1 matrix of order `2^ν` with `HᵀH = 2^ν I`.
#[derive(Clone, Debug, PartialEq)]
pub struct HadamardMatrix {
    nu: u32,
    matrix: Matrix,
}

impl HadamardMatrix {
    pub fn nu(&self) -> u32 {
        self.nu
    }

    pub fn order(&self) -> usize {
        1 << self.nu
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }
}

/// Builds `H_ν` by the doubling recurrence `H_{s+1} = [[H_s, H_s], [H_s, −H_s]]`.
///
/// Entry `(r, c)` equals `(−1)^popcount(r & c)`; row `r` is the character of
/// `[Z₂]^ν` indexed by `r`.
pub fn build_hadamard(nu: u32) -> Result<HadamardMatrix> {
    if nu > MAX_NU {
        return Err(Error::Capacity(format!("nu = {nu} exceeds the limit {MAX_NU}")));
    }
    let n = 1usize << nu;
    let mut data = vec![0.0; n * n];
    data[0] = 1.0;
    let mut size = 1;
    while size < n {
        for i in 0..size {
            for j in 0..size {
                let v = data[i * n + j];
                data[i * n + j + size] = v;
                data[(i + size) * n + j] = v;
                data[(i + size) * n + j + size] = -v;
            }
        }
        size *= 2;
    }
    Ok(HadamardMatrix {
        nu,
        matrix: Matrix::new(n, n, data)?,
    })
}

/// Closed-form certificate `Y = 2^{−ν} H_ν`, for which `YᵀH_ν = I` exactly.
pub fn hadamard_certificate(h: &HadamardMatrix) -> Matrix {
    h.matrix.scaled(1.0 / h.order() as f64)
}

/// Whether `row` is a character of `[Z₂]^ν` in the natural column ordering:
/// ±1 entries with `row[g ⊕ h] = row[g]·row[h]`.
pub(crate) fn is_character(row: &[f64]) -> bool {
    let n = row.len();
    if !n.is_power_of_two() || row[0] != 1.0 {
        return false;
    }
    if row.iter().any(|&v| v != 1.0 && v != -1.0) {
        return false;
    }
    // multiplicativity on the binary basis determines the whole row
    (1..n).all(|g| {
        let low = g & g.wrapping_neg();
        row[g] == row[g ^ low] * row[low]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::uniform_norm;

    #[test]
    fn small_orders() {
        assert_eq!(build_hadamard(0).unwrap().matrix().as_slice(), &[1.0]);
        assert_eq!(build_hadamard(1).unwrap().matrix().as_slice(), &[1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn orthogonality_and_symmetry() {
        for nu in 0..=10 {
            let h = build_hadamard(nu).unwrap();
            let m = h.matrix();
            let n = h.order();
            assert!(m.as_slice().iter().all(|&v| v == 1.0 || v == -1.0));
            assert!(m.is_symmetric());
            if nu <= 7 {
                let g = m.t_matmul(m).unwrap();
                assert_eq!(g, Matrix::identity(n).scaled(n as f64), "nu={nu}");
            }
        }
    }

    #[test]
    fn entries_follow_parity_formula() {
        let h = build_hadamard(5).unwrap();
        for r in 0..32usize {
            for c in 0..32usize {
                let want = if (r & c).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                assert_eq!(h.matrix().get(r, c), want);
            }
        }
    }

    #[test]
    fn capacity_guard() {
        assert!(matches!(build_hadamard(15), Err(Error::Capacity(_))));
    }

    #[test]
    fn certificate_is_exact() {
        let y = hadamard_certificate(&build_hadamard(1).unwrap());
        assert_eq!(y.as_slice(), &[0.5, 0.5, 0.5, -0.5]);
        for nu in [1, 3, 6] {
            let h = build_hadamard(nu).unwrap();
            let y = hadamard_certificate(&h);
            let w = y.t_matmul(h.matrix()).unwrap();
            let resid = Matrix::identity(h.order()).sub(&w).unwrap();
            assert_eq!(uniform_norm(&resid), 0.0);
        }
    }

    #[test]
    fn rows_are_characters() {
        let h = build_hadamard(4).unwrap();
        assert!(h.matrix().row_iter().all(is_character));
        assert!(!is_character(&[1.0, 1.0, -1.0, 1.0]));
        assert!(!is_character(&[1.0, 0.5]));
        assert!(!is_character(&[1.0, 1.0, 1.0]));
    }
}
