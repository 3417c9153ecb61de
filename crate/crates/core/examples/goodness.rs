//! Certifies random row subsets of H_4: the full n-column solve against the
//! one-problem Hadamard shortcut, plus the weaker mutual-incoherence test.
//!
//!     cargo run --release --example goodness -- [rows]

use ulra::goodness::{mutual_incoherence, opt_certificate};
use ulra::hadamard::build_hadamard;
use ulra::rng::RandomSource;

fn main() -> ulra::error::Result<()> {
    let m: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let h = build_hadamard(4)?;
    let mut rng = RandomSource::new(11, 0);
    for trial in 0..4 {
        let mut rows = rng.permutation(h.order());
        rows.truncate(m);
        rows.sort_unstable();
        let a_m = h.matrix().select_rows(&rows);
        let full = opt_certificate(&a_m, 1e-8, false)?;
        let fast = opt_certificate(&a_m, 1e-8, true)?;
        let (mu_b, s_b) = mutual_incoherence(&a_m)?;
        let spread = full.per_i.as_ref().map_or(0.0, |v| {
            v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
        });
        println!("trial {trial}: Opt = {:.6} (shortcut {:.6}, spread over i {spread:.1e}) → s = {}; incoherence μ = {mu_b:.3} → s = {s_b}",
            full.mu, fast.mu, full.s_max);
    }
    Ok(())
}
