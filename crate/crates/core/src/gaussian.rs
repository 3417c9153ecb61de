//! Randomized rank-k approximation from a factorization `A = PQᵀ`.
//!
//! With `ξ_1, …, ξ_k` standard normal in `R^d`,
//! `A_k = (1/k) Σ (Pξ_i)(Qξ_i)ᵀ` is unbiased for `A`, and when every row of
//! `P` and `Q` has squared norm at most `D`,
//! `‖A_k − A‖∞ ≤ √(8 ln(4mn)) D/√k` with probability at least 1/2.

use crate::error::{dim, Error, Result};
use crate::matrix::{dot, Matrix};
use crate::rng::RandomSource;

/// `A = PQᵀ` with every row of `P` and `Q` of squared Euclidean norm `≤ D`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    p: Matrix,
    q: Matrix,
    d: f64,
}

impl FactorPair {
    /// Validates a user-supplied factorization. With `claimed = None` the
    /// bound `D` is computed from the rows.
    pub fn new(p: Matrix, q: Matrix, claimed: Option<f64>) -> Result<Self> {
        if p.cols() != q.cols() {
            return Err(dim(format!("P has {} columns, Q has {}", p.cols(), q.cols())));
        }
        let actual = max_sq_row(&p).max(max_sq_row(&q));
        let d = match claimed {
            Some(d) if !(d >= 0.0) => {
                return Err(Error::Validation(format!(
                    "claimed D = {d} is not a nonnegative number"
                )))
            }
            Some(d) if actual.sqrt() > d.sqrt() + 1e-12 => {
                return Err(Error::Validation(format!(
                    "a factor row has squared norm {actual}, above the claimed D = {d}"
                )))
            }
            Some(d) => d,
            None => actual,
        };
        Ok(Self { p, q, d })
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    /// Squared row-norm bound `D`.
    pub fn d(&self) -> f64 {
        self.d
    }

    /// Inner dimension.
    pub fn inner(&self) -> usize {
        self.p.cols()
    }

    pub fn product(&self) -> Matrix {
        self.p.matmul(&self.q.transpose()).expect("inner dimensions agree")
    }
}

fn max_sq_row(a: &Matrix) -> f64 {
    a.row_iter().map(|r| dot(r, r)).fold(0.0, f64::max)
}

/// Off-diagonal tolerance for the Jacobi sweeps.
const JACOBI_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U diag(σ) Vᵀ` by one-sided (Hestenes) Jacobi: plane
/// rotations orthogonalize the columns of `A` until every normalized pair
/// inner product is below `1e-10`. Returns `(U, σ, V)` with `U` m×r, `V`
/// n×r, `r = min(m, n)`.
pub fn svd(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    if a.cols() > a.rows() {
        let (u, s, v) = svd(&a.transpose())?;
        return Ok((v, s, u));
    }
    let (m, n) = a.shape();
    // columns of A stored as rows for contiguous access
    let mut cols = a.transpose();
    let mut v = Matrix::identity(n);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = dot(cols.row(i), cols.row(i));
                let beta = dot(cols.row(j), cols.row(j));
                let gamma = dot(cols.row(i), cols.row(j));
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let ratio = gamma.abs() / (alpha * beta).sqrt();
                off = off.max(ratio);
                if ratio <= JACOBI_TOL * 1e-2 {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if off <= JACOBI_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::IterationLimit {
            iterations: JACOBI_MAX_SWEEPS,
            estimate: f64::NAN,
        });
    }
    let sigma: Vec<f64> = cols.row_iter().map(|c| dot(c, c).sqrt()).collect();
    let mut u = Matrix::zeros(m, n);
    for (j, &s) in sigma.iter().enumerate() {
        if s > 0.0 {
            for (r, &x) in cols.row(j).iter().enumerate() {
                u.set(r, j, x / s);
            }
        }
    }
    // v holds Vᵀ row-wise after rotating rows; store V column-wise
    Ok((u, sigma, v.transpose()))
}

/// Applies the rotation to rows `i`, `j`.
fn rotate(a: &mut Matrix, i: usize, j: usize, c: f64, s: f64) {
    let n = a.cols();
    for k in 0..n {
        let x = a.get(i, k);
        let y = a.get(j, k);
        a.set(i, k, c * x - s * y);
        a.set(j, k, s * x + c * y);
    }
}

/// Balanced factorization `P = UΣ^{1/2}`, `Q = VΣ^{1/2}`; `D` is the largest
/// squared row norm, which never exceeds `σ_max`.
pub fn factor_via_svd(a: &Matrix, tol: f64) -> Result<FactorPair> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tol must be positive, got {tol}")));
    }
    let (u, sigma, v) = svd(a)?;
    let root: Vec<f64> = sigma.iter().map(|s| s.sqrt()).collect();
    let scale = |m: &Matrix| Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) * root[j]);
    FactorPair::new(scale(&u), scale(&v), None)
}

/// `A_k = scale · Σ_i left_i right_iᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankKFactor {
    pub left: Matrix,
    pub right: Matrix,
    pub scale: f64,
}

impl RankKFactor {
    /// Number of terms, an upper bound on the rank.
    pub fn k(&self) -> usize {
        self.left.rows()
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        Ok(self.left.t_matmul(&self.right)?.scaled(self.scale))
    }
}

/// Draws `ξ_1, …, ξ_k` and returns the factor with rows `(Pξ_i)ᵀ`, `(Qξ_i)ᵀ`
/// and scale `1/k`.
pub fn gaussian_rank_k(f: &FactorPair, k: usize, rng: &mut RandomSource) -> Result<RankKFactor> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let mut left = Matrix::zeros(k, f.p.rows());
    let mut right = Matrix::zeros(k, f.q.rows());
    for i in 0..k {
        let xi = rng.gaussian_vector(f.inner());
        left.row_mut(i).copy_from_slice(&f.p.mul_vec(&xi));
        right.row_mut(i).copy_from_slice(&f.q.mul_vec(&xi));
    }
    Ok(RankKFactor {
        left,
        right,
        scale: 1.0 / k as f64,
    })
}

/// `√(8 ln(4mn)) D/√k`.
pub fn gaussian_error_bound(m: usize, n: usize, d: f64, k: usize) -> f64 {
    (8.0 * (4.0 * m as f64 * n as f64).ln()).sqrt() * d / (k as f64).sqrt()
}

/// Largest `m·n` materialized by [`approx_error`].
pub const MAX_DENSE_ENTRIES: usize = 1 << 26;

/// `‖A_k − A‖∞` with `A_k` formed explicitly.
pub fn approx_error(f: &RankKFactor, a: &Matrix) -> Result<f64> {
    let (m, n) = a.shape();
    if f.left.cols() != m || f.right.cols() != n {
        return Err(dim(format!(
            "factor is {}x{}, matrix is {m}x{n}",
            f.left.cols(),
            f.right.cols()
        )));
    }
    if m.saturating_mul(n) > MAX_DENSE_ENTRIES {
        return Err(Error::Capacity(format!("{m}x{n} exceeds the dense limit")));
    }
    f.to_matrix()?.uniform_distance(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{spectral_norm, uniform_norm};

    #[test]
    fn identity_factors() {
        let f = factor_via_svd(&Matrix::identity(2), 1e-10).unwrap();
        assert!((f.d() - 1.0).abs() <= 1e-12);
        assert!(f.product().uniform_distance(&Matrix::identity(2)).unwrap() <= 1e-12);
    }

    #[test]
    fn diagonal_d() {
        let f = factor_via_svd(&Matrix::diag(&[4.0, 1.0]), 1e-10).unwrap();
        assert!((f.d() - 4.0).abs() <= 1e-12);
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = RandomSource::new(3, 0);
        for (m, n) in [(8, 5), (5, 8), (12, 12), (1, 4)] {
            let a = Matrix::gaussian(m, n, &mut rng);
            let f = factor_via_svd(&a, 1e-10).unwrap();
            assert!(f.product().uniform_distance(&a).unwrap() <= 1e-8, "{m}x{n}");
            let smax = spectral_norm(&a, 1e-12).unwrap();
            assert!(f.d() <= smax + 1e-8);
        }
    }

    #[test]
    fn singular_values_are_sorted_out_correctly() {
        // rank-one input: one nonzero singular value equal to ‖u‖‖v‖
        let a = Matrix::from_fn(6, 4, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
        let (_, s, _) = svd(&a).unwrap();
        let mut s = s;
        s.sort_by(|a, b| b.total_cmp(a));
        let expect = (1..=6).map(|i| (i * i) as f64).sum::<f64>().sqrt() * 5.0f64.sqrt();
        assert!((s[0] - expect).abs() <= 1e-10 * expect);
        assert!(s[1..].iter().all(|&v| v <= 1e-9));
    }

    #[test]
    fn claimed_d_validated() {
        let p = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let q = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(FactorPair::new(p.clone(), q.clone(), None).unwrap().d(), 25.0);
        assert!(FactorPair::new(p.clone(), q.clone(), Some(30.0)).is_ok());
        assert!(matches!(FactorPair::new(p, q, Some(24.0)), Err(Error::Validation(_))));
    }

    #[test]
    fn zero_factor_gives_zero() {
        let f = FactorPair::new(Matrix::zeros(3, 2), Matrix::zeros(4, 2), None).unwrap();
        let ak = gaussian_rank_k(&f, 5, &mut RandomSource::new(1, 0)).unwrap();
        assert_eq!(uniform_norm(&ak.to_matrix().unwrap()), 0.0);
        let a = Matrix::from_fn(3, 4, |i, j| (i + j) as f64);
        assert_eq!(approx_error(&ak, &a).unwrap(), uniform_norm(&a));
    }

    #[test]
    fn rows_are_p_xi() {
        let mut rng = RandomSource::new(5, 0);
        let p = Matrix::gaussian(3, 4, &mut rng);
        let q = Matrix::gaussian(2, 4, &mut rng);
        let f = FactorPair::new(p.clone(), q.clone(), None).unwrap();
        let ak = gaussian_rank_k(&f, 3, &mut RandomSource::new(11, 2)).unwrap();
        let mut again = RandomSource::new(11, 2);
        for i in 0..3 {
            let xi = again.gaussian_vector(4);
            assert_eq!(ak.left.row(i), p.mul_vec(&xi).as_slice());
            assert_eq!(ak.right.row(i), q.mul_vec(&xi).as_slice());
        }
        assert_eq!(ak.scale, 1.0 / 3.0);
    }

    #[test]
    fn exact_factor_has_zero_error() {
        let a = Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        let f = RankKFactor {
            left: Matrix::identity(2),
            right: a.clone(),
            scale: 1.0,
        };
        assert_eq!(approx_error(&f, &a).unwrap(), 0.0);
        assert!(approx_error(&f, &Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn k_must_be_positive() {
        let f = factor_via_svd(&Matrix::identity(2), 1e-10).unwrap();
        assert!(gaussian_rank_k(&f, 0, &mut RandomSource::new(0, 0)).is_err());
    }

    #[test]
    fn entrywise_unbiased() {
        let f = FactorPair::new(Matrix::identity(4), Matrix::identity(4), None).unwrap();
        let trials = 10_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for seed in 0..trials {
            let ak = gaussian_rank_k(&f, 1, &mut RandomSource::new(seed, 0)).unwrap();
            let v = ak.to_matrix().unwrap().get(0, 0);
            s += v;
            s2 += v * v;
        }
        let mean = s / trials as f64;
        let se = ((s2 / trials as f64 - mean * mean) / trials as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn bound_formula() {
        // k = ⌈8 ln(4·64·64)⌉ = 78 gives a threshold just under 1
        let k = (8.0 * (4.0f64 * 64.0 * 64.0).ln()).ceil() as usize;
        assert_eq!(k, 78);
        assert!((gaussian_error_bound(64, 64, 1.0, k) - 0.99764).abs() <= 1e-5);
    }
}
