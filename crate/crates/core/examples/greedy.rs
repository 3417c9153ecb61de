//! Derandomized policies on H_5 with the fixed β schedule: after k steps the
//! error never exceeds 2√(2 ln(2n²)/k), with no randomness involved.
//!
//!     cargo run --release --example greedy -- [k]

use ulra::greedy::{run_derandomized, GreedyConfig, Policy};
use ulra::hadamard::{build_hadamard, hadamard_certificate};
use ulra::rng::RandomSource;

fn main() -> ulra::error::Result<()> {
    let k: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    let h = build_hadamard(5)?;
    let y = hadamard_certificate(&h);
    let n = h.order();
    let bound = 2.0 * (2.0 * (2.0 * (n * n) as f64).ln() / k as f64).sqrt();

    for policy in [Policy::A, Policy::ABest, Policy::APrime, Policy::B, Policy::C] {
        let cfg = GreedyConfig::new(policy, k);
        let mut rng = RandomSource::new(1, 0);
        let out = run_derandomized(&y, h.matrix(), &cfg, Some(&mut rng))?;
        let last = out.history.last().expect("k ≥ 1");
        println!(
            "{policy:?}: μ_{k} = {:.4} ≤ {bound:.4}, distinct rows {}, Σδ = {:.4}",
            last.mu,
            out.rows.len(),
            out.state.deltasum()
        );
    }
    Ok(())
}
