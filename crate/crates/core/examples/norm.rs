//! Bounds on the factorization norm for a few matrices, and the factor-based
//! upper bound from an SVD split.
//!
//!     cargo run --example norm

use ulra::gaussian::factor_via_svd;
use ulra::hadamard::build_hadamard;
use ulra::matrix::Matrix;
use ulra::norm::{norm_bounds, norm_upper_from_factor};
use ulra::rng::RandomSource;

fn main() -> ulra::error::Result<()> {
    let mut rng = RandomSource::new(3, 0);
    let g = Matrix::gaussian(12, 5, &mut rng);
    let gram = g.matmul(&g.transpose())?;
    let cases = [
        ("I_8", Matrix::identity(8)),
        ("H_4", build_hadamard(4)?.into_matrix()),
        ("Gaussian 12x5", g),
        ("Gram 12x12", gram),
    ];
    for (name, a) in &cases {
        let b = norm_bounds(a, 1e-10);
        let svd = norm_upper_from_factor(&factor_via_svd(a, 1e-10)?);
        println!(
            "{name:>14}: {:.4} ≤ ‖A‖ ≤ {:.4} ({:?}); SVD factor gives {svd:.4}; corridor ok: {}",
            b.lower,
            b.upper,
            b.upper_source,
            b.corridor_ok(a.rows(), a.cols(), 1e-8)
        );
    }
    Ok(())
}
