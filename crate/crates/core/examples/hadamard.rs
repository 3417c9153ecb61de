//! Builds H_ν, checks HᵀH = nI, and shows that the closed-form
//! certificate Y = H/n reproduces the identity exactly.
//!
//!     cargo run --example hadamard -- [nu]

use ulra::goodness::residual;
use ulra::hadamard::{build_hadamard, hadamard_certificate};
use ulra::io::format_matrix;
use ulra::matrix::Matrix;

fn main() -> ulra::error::Result<()> {
    let nu: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let h = build_hadamard(nu)?;
    let n = h.order();
    if n <= 16 {
        print!("{}", format_matrix(h.matrix()));
    }
    let gram = h.matrix().t_matmul(h.matrix())?;
    let off = gram.uniform_distance(&Matrix::identity(n).scaled(n as f64))?;
    println!("H_{nu}: order {n}, ‖HᵀH − nI‖∞ = {off}");
    let y = hadamard_certificate(&h);
    println!("‖I − YᵀH‖∞ with Y = H/n: {}", residual(&y, h.matrix())?);
    Ok(())
}
