//! Builds 3-good submatrices of H_8 (n = 256) with the blind and the active
//! policy and prints how many rows each needed per certified level.
//!
//!     cargo run --release --example synthesis -- [seed] [s]

use std::time::Instant;

use ulra::goodness::mutual_incoherence;
use ulra::greedy::Policy;
use ulra::hadamard::{build_hadamard, hadamard_certificate};
use ulra::rng::RandomSource;
use ulra::synth::{synthesize, SynthConfig, SynthPolicy};

fn main() -> ulra::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let s: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);

    let h = build_hadamard(8)?;
    let y = hadamard_certificate(&h);
    let a = h.matrix();
    let n = h.order();

    for policy in [SynthPolicy::Blind, SynthPolicy::Greedy(Policy::APrime)] {
        let mut cfg = SynthConfig::new(policy, s, 4 * n);
        cfg.shortcut = true;
        let started = Instant::now();
        let out = synthesize(&y, a, &cfg, &mut RandomSource::new(seed, 0))?;
        let ranks: Vec<String> = out.profile.iter().map(|p| format!("s={}:{}", p.s, p.rank)).collect();
        let sub = a.select_rows(&out.rows);
        let (_, incoherent) = mutual_incoherence(&sub)?;
        println!(
            "{policy:?}: m = {} of {n}, mu = {:.5}, certified = {}, incoherence certifies s = {incoherent}  [{}]  {:.2}s",
            out.rows.len(),
            out.certificate.mu,
            out.certified,
            ranks.join(" "),
            started.elapsed().as_secs_f64(),
        );
    }
    Ok(())
}
