//! Gaussian rank-k approximation of I_64 from the trivial factorization
//! P = Q = I, against the bound √(8 ln(4mn))·D/√k and the rank lower bound
//! 1/(2√k).
//!
//!     cargo run --release --example gaussian -- [k] [trials]

use ulra::gaussian::{approx_error, gaussian_error_bound, gaussian_rank_k, FactorPair};
use ulra::matrix::Matrix;
use ulra::norm::identity_rank_lb;
use ulra::rng::RandomSource;

fn main() -> ulra::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(78);
    let trials: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let n = 64;
    let f = FactorPair::new(Matrix::identity(n), Matrix::identity(n), None)?;
    let target = f.product();
    let bound = gaussian_error_bound(n, n, f.d(), k);

    let mut met = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..trials {
        let a = gaussian_rank_k(&f, k, &mut RandomSource::new(seed, 0))?;
        let err = approx_error(&a, &target)?;
        worst = worst.max(err);
        met += usize::from(err <= bound);
    }
    print!("k = {k}: bound {bound:.4} met in {met}/{trials} trials, worst error {worst:.4}");
    match identity_rank_lb(n, k) {
        Ok(lb) => println!(", no rank-{k} matrix beats {lb:.4}"),
        Err(_) => println!(),
    }
    Ok(())
}
