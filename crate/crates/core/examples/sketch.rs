//! The random sampling algorithm on H_6: average k i.i.d. rank-one atoms and
//! compare the error with the expectation bound 2L√(2 ln(2n²)/k).
//!
//!     cargo run --release --example sketch -- [k] [trials]

use ulra::goodness::certified_s;
use ulra::hadamard::{build_hadamard, hadamard_certificate};
use ulra::rng::RandomSource;
use ulra::sampler::{build_ensemble, sample_sketch, sketch_certificate};

fn main() -> ulra::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(128);
    let trials: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);

    let h = build_hadamard(6)?;
    let e = build_ensemble(&hadamard_certificate(&h), h.matrix())?;
    let n = e.n();
    let mean_bound = 2.0 * e.l() * (2.0 * (2.0 * (n * n) as f64).ln() / k as f64).sqrt();

    let (mut total, mut rows) = (0.0, 0);
    for seed in 0..trials {
        let s = sample_sketch(&e, k, &mut RandomSource::new(seed, 0))?;
        total += s.err;
        rows += s.mk;
        if seed == 0 {
            let (cert, level) = sketch_certificate(&s, e.l(), 0.0)?;
            println!(
                "seed 0: m_k = {}, ‖I − W_k‖∞ = {:.4} (s = {}), good-event level {level:.4}",
                s.mk,
                cert.mu,
                certified_s(cert.mu)
            );
        }
    }
    println!(
        "k = {k}: mean error {:.4} over {trials} seeds, bound {mean_bound:.4}, mean m_k {:.1}",
        total / trials as f64,
        rows as f64 / trials as f64
    );
    Ok(())
}
