//! Certification of s-goodness through `‖I − YᵀA_m‖∞ < 1/(2s)`.
//!
//! Any witness `Y` certifies the level it achieves, so a suboptimal solver
//! can only make the certified `s` conservative; it never makes it wrong.

use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};
use crate::hadamard::is_character;
use crate::matrix::{axpy, dot, max_abs, Matrix};
use crate::potential::smooth_max_grad;

/// Largest certified sparsity, or unbounded when `μ = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SparsityLevel {
    Finite(u64),
    Unbounded,
}

impl SparsityLevel {
    pub fn finite(self) -> Option<u64> {
        match self {
            Self::Finite(s) => Some(s),
            Self::Unbounded => None,
        }
    }

    /// Whether this level certifies sparsity `s`.
    pub fn covers(self, s: u64) -> bool {
        match self {
            Self::Finite(v) => v >= s,
            Self::Unbounded => true,
        }
    }
}

impl std::fmt::Display for SparsityLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Finite(s) => write!(f, "{s}"),
            Self::Unbounded => write!(f, "unbounded"),
        }
    }
}

/// Largest integer `s` with `μ < 1/(2s)` (strict); zero when `μ ≥ 1/2`.
pub fn certified_s(mu: f64) -> SparsityLevel {
    if mu <= 0.0 {
        return SparsityLevel::Unbounded;
    }
    let ok = |s: u64| s == 0 || mu < 1.0 / (2.0 * s as f64);
    let mut s = (1.0 / (2.0 * mu)).floor().min(u64::MAX as f64 / 2.0) as u64;
    while !ok(s) {
        s -= 1;
    }
    while ok(s + 1) {
        s += 1;
    }
    SparsityLevel::Finite(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoodnessCertificate {
    /// `Y_m`, one row per row of `A_m`.
    pub witness: Matrix,
    /// Achieved `‖I_n − Y_mᵀ A_m‖∞`.
    pub mu: f64,
    pub s_max: SparsityLevel,
    /// Set when every regression closed its duality gap to `tol`.
    pub exact: bool,
    /// `Opt_i` per column when all columns were solved separately.
    pub per_i: Option<Vec<f64>>,
}

impl GoodnessCertificate {
    /// Recomputes `‖I − witnessᵀ A_m‖∞`.
    pub fn residual(&self, a_m: &Matrix) -> Result<f64> {
        residual(&self.witness, a_m)
    }
}

/// `‖I_n − YᵀA_m‖∞`.
pub fn residual(y: &Matrix, a_m: &Matrix) -> Result<f64> {
    if y.shape() != a_m.shape() {
        return Err(dim("witness and A_m differ in shape"));
    }
    let w = y.t_matmul(a_m)?;
    Matrix::identity(a_m.cols()).uniform_distance(&w)
}

#[derive(Clone, Debug)]
pub struct LinfSolution {
    pub y: Vec<f64>,
    /// `‖c − By‖∞` at the returned `y`.
    pub value: f64,
    /// Dual lower bound on the optimum.
    pub lower_bound: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// `min_y ‖c − By‖∞`.
///
/// Minimizes the smoothed surrogate `V_β(c − By)` by accelerated gradient
/// with adaptive restart, halving β stage by stage from
/// `‖c − By₀‖∞ / ln(2n)` with warm starts. Each gradient yields a dual point
/// (the potential's gradient projected onto `ker Bᵀ`) and hence a lower
/// bound; the solve stops once the exact objective at the best iterate is
/// within `tol` of it. If the stage or iteration caps are hit first the best
/// point is returned with `converged = false`; its value is still a valid
/// upper bound.
pub fn linf_regression(b: &Matrix, c: &[f64], tol: f64) -> Result<LinfSolution> {
    if c.len() != b.rows() {
        return Err(dim(format!("c has length {}, B has {} rows", c.len(), b.rows())));
    }
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tol must be positive, got {tol}")));
    }
    if max_abs(b.as_slice()) == 0.0 {
        return Err(Error::Precondition("B must be nonzero".into()));
    }
    let solver = LinfSolver::new(b, Projector::general(b));
    Ok(solver.solve(c, tol, None))
}

enum Projector {
    /// Columns of B are mutually orthogonal with these squared norms.
    Orthogonal(Vec<f64>),
    /// Cholesky factor (row-major lower triangle) of BᵀB.
    Cholesky(Vec<f64>),
    Unavailable,
}

impl Projector {
    fn general(b: &Matrix) -> Self {
        let m = b.cols();
        let gram = b.t_matmul(b).expect("same row count");
        let scale = (0..m).map(|i| gram.get(i, i)).fold(0.0, f64::max);
        let diagonal = (0..m).all(|i| (0..m).all(|j| i == j || gram.get(i, j) == 0.0));
        if diagonal && (0..m).all(|i| gram.get(i, i) > 0.0) {
            return Self::Orthogonal((0..m).map(|i| gram.get(i, i)).collect());
        }
        for ridge in [0.0, 1e-13, 1e-10] {
            if let Some(l) = cholesky(gram.as_slice(), m, ridge * scale) {
                return Self::Cholesky(l);
            }
        }
        Self::Unavailable
    }

    /// Solves `BᵀB λ = rhs` in place.
    fn solve(&self, rhs: &mut [f64]) -> bool {
        match self {
            Self::Orthogonal(norms) => {
                rhs.iter_mut().zip(norms).for_each(|(x, n)| *x /= n);
                true
            }
            Self::Cholesky(l) => {
                let m = rhs.len();
                for i in 0..m {
                    let s = rhs[i] - dot(&l[i * m..i * m + i], &rhs[..i]);
                    rhs[i] = s / l[i * m + i];
                }
                for i in (0..m).rev() {
                    let mut s = rhs[i];
                    for j in i + 1..m {
                        s -= l[j * m + i] * rhs[j];
                    }
                    rhs[i] = s / l[i * m + i];
                }
                true
            }
            Self::Unavailable => false,
        }
    }
}

fn cholesky(a: &[f64], m: usize, ridge: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i * m + j] - dot(&l[i * m..i * m + j], &l[j * m..j * m + j]);
            if i == j {
                s += ridge;
                if !(s > 0.0) {
                    return None;
                }
                l[i * m + i] = s.sqrt();
            } else {
                l[i * m + j] = s / l[j * m + j];
            }
        }
    }
    Some(l)
}

const MAX_STAGES: usize = 90;
const STAGE_ITERS: usize = 4000;
const TOTAL_ITERS: usize = 5_000;
const GAP_CHECK_EVERY: usize = 10;

struct LinfSolver<'a> {
    b: &'a Matrix,
    projector: Projector,
    row_norm2: f64,
}

impl<'a> LinfSolver<'a> {
    fn new(b: &'a Matrix, projector: Projector) -> Self {
        let row_norm2 = b.row_iter().map(|r| dot(r, r)).fold(0.0, f64::max);
        Self {
            b,
            projector,
            row_norm2,
        }
    }

    fn residual_into(&self, c: &[f64], y: &[f64], r: &mut [f64]) {
        for ((ri, row), &ci) in r.iter_mut().zip(self.b.row_iter()).zip(c) {
            *ri = ci - dot(row, y);
        }
    }

    /// Lower bound `⟨c, w⟩/max(1, ‖w‖₁)` with `w = p − Bλ`, `BᵀBλ = Bᵀp`.
    fn dual_bound(&self, c: &[f64], p: &[f64]) -> Option<f64> {
        let mut lambda = self.b.t_mul_vec(p);
        if !self.projector.solve(&mut lambda) {
            return None;
        }
        let mut w1 = 0.0;
        let mut cw = 0.0;
        for ((row, &pi), &ci) in self.b.row_iter().zip(p).zip(c) {
            let wi = pi - dot(row, &lambda);
            w1 += wi.abs();
            cw += ci * wi;
        }
        Some(cw / w1.max(1.0))
    }

    fn solve(&self, c: &[f64], tol: f64, warm: Option<&[f64]>) -> LinfSolution {
        let n = self.b.rows();
        let m = self.b.cols();
        let log2n = (2.0 * n as f64).ln();

        let mut best_y = match warm {
            Some(w) if w.len() == m => w.to_vec(),
            _ => vec![0.0; m],
        };
        let mut r = vec![0.0; n];
        self.residual_into(c, &best_y, &mut r);
        let mut best = max_abs(&r);
        // least squares is exact when c lies in the range of B
        let mut ls = self.b.t_mul_vec(c);
        if self.projector.solve(&mut ls) {
            self.residual_into(c, &ls, &mut r);
            let v = max_abs(&r);
            if v < best {
                best = v;
                best_y = ls;
            }
        }
        let mut lower: f64 = 0.0;
        let mut iterations = 0;
        if best <= tol {
            return LinfSolution {
                y: best_y,
                value: best,
                lower_bound: lower,
                converged: true,
                iterations,
            };
        }

        let mut p = vec![0.0; n];
        let mut beta = best / log2n;
        let mut x = best_y.clone();
        let mut x_prev = x.clone();
        let mut w = vec![0.0; m];
        let mut x_next = vec![0.0; m];

        for _stage in 0..MAX_STAGES {
            let step = beta / self.row_norm2;
            x.copy_from_slice(&best_y);
            x_prev.copy_from_slice(&best_y);
            let mut t = 1.0f64;
            let mut stage_best = f64::INFINITY;
            let mut stall = 0;
            for it in 0..STAGE_ITERS {
                iterations += 1;
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let mom = (t - 1.0) / t_next;
                for ((wi, &xi), &xp) in w.iter_mut().zip(&x).zip(&x_prev) {
                    *wi = xi + mom * (xi - xp);
                }
                self.residual_into(c, &w, &mut r);
                let fw = max_abs(&r);
                if fw < best {
                    best = fw;
                    best_y.copy_from_slice(&w);
                }
                let v = smooth_max_grad(&r, beta, &mut p);
                if it % GAP_CHECK_EVERY == 0 {
                    if let Some(lb) = self.dual_bound(c, &p) {
                        lower = lower.max(lb);
                    }
                    if best - lower <= tol {
                        return LinfSolution {
                            y: best_y,
                            value: best,
                            lower_bound: lower,
                            converged: true,
                            iterations,
                        };
                    }
                    // the smoothing error dominates once the gap is this small
                    if best - lower <= 3.0 * beta * log2n {
                        break;
                    }
                }
                if v < stage_best - 1e-15 * stage_best.abs() {
                    stage_best = v;
                    stall = 0;
                } else {
                    stall += 1;
                    if stall > 400 {
                        break;
                    }
                }
                // gradient of y ↦ V_β(c − By) is −Bᵀp
                let g = self.b.t_mul_vec(&p);
                x_next.copy_from_slice(&w);
                axpy(step, &g, &mut x_next);
                // restart momentum when the step opposes the previous motion
                let restart = g
                    .iter()
                    .zip(x_next.iter().zip(&x))
                    .map(|(gi, (xn, xo))| -gi * (xn - xo))
                    .sum::<f64>()
                    > 0.0;
                std::mem::swap(&mut x_prev, &mut x);
                std::mem::swap(&mut x, &mut x_next);
                t = if restart { 1.0 } else { t_next };
                if iterations >= TOTAL_ITERS {
                    break;
                }
            }
            if iterations >= TOTAL_ITERS {
                break;
            }
            beta *= 0.5;
            if beta * log2n < 1e-3 * tol && best - lower > tol {
                // smoothing is far below tolerance; further stages cannot help
                break;
            }
        }
        if best - lower > tol {
            if let Some((y, value, lb)) = self.exact(c) {
                if value < best {
                    best = value;
                    best_y = y;
                }
                lower = lower.max(lb);
            }
        }
        LinfSolution {
            y: best_y,
            value: best,
            lower_bound: lower,
            converged: best - lower <= tol,
            iterations,
        }
    }

    /// Simplex solve of `min t` s.t. `−t ≤ c_h − b_h·y ≤ t`. Returns the
    /// point, its exact value, and the LP optimum as a lower bound.
    fn exact(&self, c: &[f64]) -> Option<(Vec<f64>, f64, f64)> {
        use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let t = lp.add_var(1.0, (0.0, f64::INFINITY));
        let ys: Vec<_> = (0..self.b.cols())
            .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
            .collect();
        for (row, &ch) in self.b.row_iter().zip(c) {
            let mut upper: Vec<_> = ys
                .iter()
                .zip(row)
                .filter(|(_, &v)| v != 0.0)
                .map(|(&y, &v)| (y, -v))
                .collect();
            upper.push((t, -1.0));
            lp.add_constraint(upper.iter().copied(), ComparisonOp::Le, -ch);
            let lower = upper.iter().map(|&(v, a)| if v == t { (v, -1.0) } else { (v, -a) });
            lp.add_constraint(lower, ComparisonOp::Le, ch);
        }
        let SolveOutcome::Solution(sol) = lp.solve().ok()? else {
            return None;
        };
        let y: Vec<f64> = ys.iter().map(|&v| sol[v]).collect();
        let mut r = vec![0.0; c.len()];
        self.residual_into(c, &y, &mut r);
        let value = max_abs(&r);
        // the simplex works to ~1e-9 feasibility; discount the bound by the
        // observed violation so it stays conservative
        let lb = sol.objective() - (value - sol.objective()).abs() - 1e-12;
        Some((y, value, lb))
    }
}

/// Removes repeated rows, returning the distinct rows and, per original row,
/// its index among them.
fn dedupe_rows(a: &Matrix) -> (Matrix, Vec<usize>) {
    let mut uniq: Vec<usize> = Vec::new();
    let mut map = Vec::with_capacity(a.rows());
    for i in 0..a.rows() {
        match uniq.iter().position(|&u| a.row(u) == a.row(i)) {
            Some(pos) => map.push(pos),
            None => {
                map.push(uniq.len());
                uniq.push(i);
            }
        }
    }
    (a.select_rows(&uniq), map)
}

/// Solver for `Opt(A_m) = min_Y ‖I − YᵀA_m‖∞` that carries warm starts from
/// one call to the next, as when rows are appended one at a time.
#[derive(Clone, Debug)]
pub struct Certifier {
    tol: f64,
    shortcut: bool,
    warm: Vec<Vec<f64>>,
}

impl Certifier {
    pub fn new(tol: f64, shortcut: bool) -> Self {
        Self {
            tol,
            shortcut,
            warm: Vec::new(),
        }
    }

    pub fn certify(&mut self, a_m: &Matrix) -> Result<GoodnessCertificate> {
        let (m, n) = a_m.shape();
        if m > n {
            return Err(Error::Precondition(format!("A_m has {m} rows but only {n} columns")));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Precondition(format!("tol must be positive, got {}", self.tol)));
        }
        let (uniq, map) = dedupe_rows(a_m);
        let b = uniq.transpose();
        let mu_count = uniq.rows();

        let warm_for = |warm: &Vec<Vec<f64>>, i: usize| -> Vec<f64> {
            let mut v = warm.get(i).cloned().unwrap_or_default();
            v.resize(mu_count, 0.0);
            v
        };

        if self.shortcut {
            if let Some(bad) = (0..m).find(|&i| !is_character(a_m.row(i))) {
                return Err(Error::Validation(format!(
                    "row {bad} is not a Hadamard row; the shortcut needs ±1 characters"
                )));
            }
            let norms = vec![n as f64; mu_count];
            let solver = LinfSolver::new(&b, Projector::Orthogonal(norms));
            let mut e0 = vec![0.0; n];
            e0[0] = 1.0;
            let start = warm_for(&self.warm, 0);
            let sol = solver.solve(&e0, self.tol, Some(&start));
            // Problem g is problem 0 shifted by g in [Z₂]^ν: y_ξ ↦ y_ξ·ξ(g).
            let mut witness = Matrix::zeros(m, n);
            for (i, &u) in map.iter().enumerate() {
                if map[..i].contains(&u) {
                    continue;
                }
                let coef = sol.y[u];
                for (dst, &chi) in witness.row_mut(i).iter_mut().zip(a_m.row(i)) {
                    *dst = coef * chi;
                }
            }
            self.warm = vec![sol.y];
            return Ok(GoodnessCertificate {
                witness,
                mu: sol.value,
                s_max: certified_s(sol.value),
                exact: sol.converged,
                per_i: None,
            });
        }

        let solver = LinfSolver::new(&b, Projector::general(&b));
        let mut witness = Matrix::zeros(m, n);
        let mut per_i = Vec::with_capacity(n);
        let mut exact = true;
        let mut warm = Vec::with_capacity(n);
        let mut e = vec![0.0; n];
        for col in 0..n {
            e[col] = 1.0;
            let start = warm_for(&self.warm, col);
            let sol = solver.solve(&e, self.tol, Some(&start));
            e[col] = 0.0;
            exact &= sol.converged;
            per_i.push(sol.value);
            for (i, &u) in map.iter().enumerate() {
                if !map[..i].contains(&u) {
                    witness.set(i, col, sol.y[u]);
                }
            }
            warm.push(sol.y);
        }
        self.warm = warm;
        let mu = per_i.iter().copied().fold(0.0, f64::max);
        Ok(GoodnessCertificate {
            witness,
            mu,
            s_max: certified_s(mu),
            exact,
            per_i: Some(per_i),
        })
    }
}

/// `Opt(A_m)` with a witness. Without the shortcut all `n` column problems
/// `min_y ‖e_i − A_mᵀy‖∞` are solved. With it, `A_m` must consist of rows of
/// a Sylvester–Hadamard matrix; only the identity-element problem is solved
/// and the other columns follow by the group shift.
pub fn opt_certificate(a_m: &Matrix, tol: f64, shortcut: bool) -> Result<GoodnessCertificate> {
    Certifier::new(tol, shortcut).certify(a_m)
}

/// Re-optimizes the witness for the current rows; same contract as
/// [`opt_certificate`].
pub fn reoptimize(a_m: &Matrix, tol: f64, shortcut: bool) -> Result<GoodnessCertificate> {
    opt_certificate(a_m, tol, shortcut)
}

/// Mutual incoherence `μ(B) = max_{i≠j} |b_iᵀb_j| / b_iᵀb_i` over columns,
/// and the level it certifies: the largest `s < (1 + μ)/(2μ)`.
pub fn mutual_incoherence(b: &Matrix) -> Result<(f64, SparsityLevel)> {
    let bt = b.transpose();
    let sq: Vec<f64> = bt.row_iter().map(|c| dot(c, c)).collect();
    if let Some(j) = sq.iter().position(|&v| v == 0.0) {
        return Err(Error::Validation(format!("column {j} is zero")));
    }
    let mut mu: f64 = 0.0;
    for i in 0..bt.rows() {
        for j in 0..i {
            let ip = dot(bt.row(i), bt.row(j)).abs();
            mu = mu.max(ip / sq[i]).max(ip / sq[j]);
        }
    }
    if mu == 0.0 {
        return Ok((0.0, SparsityLevel::Unbounded));
    }
    let bound = (1.0 + mu) / (2.0 * mu);
    let mut s = bound.floor() as u64;
    while s > 0 && !((s as f64) < bound) {
        s -= 1;
    }
    Ok((mu, SparsityLevel::Finite(s)))
}
