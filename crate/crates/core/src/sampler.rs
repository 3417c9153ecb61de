//! Importance sampling of rank-one atoms `z_i a_iᵀ` whose average
//! approximates `W = YᵀA` in the uniform norm.
//!
//! Row `i` gets weight `θ_i = ‖y_i‖∞‖a_i‖∞`; with `L = Σθ_i`, `π_i = θ_i/L`
//! and `z_i = (L/θ_i) y_i` every atom has uniform norm exactly `L` and
//! `Σ π_i z_i a_iᵀ = W`.

use crate::error::{dim, Error, Result};
use crate::goodness::{certified_s, GoodnessCertificate};
use crate::matrix::{max_abs, Matrix};
use crate::rng::RandomSource;

/// Largest `n` for which the dense `n × n` target `W` is formed.
pub const MAX_TARGET_ORDER: usize = 4096;

#[derive(Clone, Debug)]
pub struct RowEnsemble {
    theta: Vec<f64>,
    l: f64,
    pi: Vec<f64>,
    zrows: Matrix,
    arows: Matrix,
    active: Vec<usize>,
    cdf: Vec<f64>,
    w: Matrix,
}

impl RowEnsemble {
    /// Number of rows `M`.
    pub fn m(&self) -> usize {
        self.arows.rows()
    }

    pub fn n(&self) -> usize {
        self.arows.cols()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// `L = Σ θ_i`.
    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Scaled rows `z_i`; rows with `θ_i = 0` are zero.
    pub fn z(&self, i: usize) -> &[f64] {
        self.zrows.row(i)
    }

    pub fn a(&self, i: usize) -> &[f64] {
        self.arows.row(i)
    }

    pub fn a_matrix(&self) -> &Matrix {
        &self.arows
    }

    /// Rows with `θ_i > 0`, ascending.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// The target `W = YᵀA`.
    pub fn target(&self) -> &Matrix {
        &self.w
    }

    /// Draws one row index from `π` by inverse CDF over the active rows.
    /// A uniform draw landing exactly on a CDF boundary goes to the lower
    /// index.
    pub fn draw(&self, rng: &mut RandomSource) -> usize {
        let u = rng.uniform();
        let pos = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        self.active[pos]
    }
}

pub fn build_ensemble(y: &Matrix, a: &Matrix) -> Result<RowEnsemble> {
    if y.shape() != a.shape() {
        return Err(dim(format!(
            "Y is {}x{} but A is {}x{}",
            y.rows(),
            y.cols(),
            a.rows(),
            a.cols()
        )));
    }
    let n = a.cols();
    if n > MAX_TARGET_ORDER {
        return Err(Error::Capacity(format!(
            "n = {n} exceeds {MAX_TARGET_ORDER} for the dense target"
        )));
    }
    let theta: Vec<f64> = y
        .row_iter()
        .zip(a.row_iter())
        .map(|(yi, ai)| max_abs(yi) * max_abs(ai))
        .collect();
    let l: f64 = theta.iter().sum();
    if !(l > 0.0) {
        return Err(Error::Degenerate("every row has θ_i = 0 (L = 0)".into()));
    }
    let active: Vec<usize> = (0..theta.len()).filter(|&i| theta[i] > 0.0).collect();
    let pi: Vec<f64> = theta.iter().map(|t| t / l).collect();

    let mut zrows = Matrix::zeros(y.rows(), n);
    for &i in &active {
        let scale = l / theta[i];
        for (z, &yv) in zrows.row_mut(i).iter_mut().zip(y.row(i)) {
            *z = scale * yv;
        }
    }

    let mut cdf = Vec::with_capacity(active.len());
    let mut acc = 0.0;
    for &i in &active {
        acc += pi[i];
        cdf.push(acc);
    }
    *cdf.last_mut().expect("at least one active row") = 1.0;

    let w = y.t_matmul(a)?;
    Ok(RowEnsemble {
        theta,
        l,
        pi,
        zrows,
        arows: a.clone(),
        active,
        cdf,
        w,
    })
}

#[derive(Clone, Debug)]
pub struct SketchResult {
    /// Drawn indices `i_1, …, i_k` in draw order.
    pub selected: Vec<usize>,
    /// Distinct drawn rows in order of first appearance.
    pub rows: Vec<usize>,
    /// Aggregated coefficient `c_i/k` per entry of `rows`.
    pub coeff: Vec<f64>,
    /// `Y_k`: rows `(c_i/k) z_i`.
    pub yk: Matrix,
    /// `A_k`: rows `a_i`.
    pub ak: Matrix,
    /// `W_k = Y_kᵀ A_k = (1/k) Σ z_{i_ℓ} a_{i_ℓ}ᵀ`.
    pub wk: Matrix,
    /// `‖W_k − W‖∞`.
    pub err: f64,
    /// Number of distinct rows `m_k ≤ k`.
    pub mk: usize,
}

/// Draws `k` atoms i.i.d. from `π` and assembles their average.
pub fn sample_sketch(e: &RowEnsemble, k: usize, rng: &mut RandomSource) -> Result<SketchResult> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let selected: Vec<usize> = (0..k).map(|_| e.draw(rng)).collect();
    assemble(e, selected)
}

pub(crate) fn assemble(e: &RowEnsemble, selected: Vec<usize>) -> Result<SketchResult> {
    let k = selected.len();
    let mut slot = vec![usize::MAX; e.m()];
    let mut rows = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for &i in &selected {
        if slot[i] == usize::MAX {
            slot[i] = rows.len();
            rows.push(i);
            counts.push(0);
        }
        counts[slot[i]] += 1;
    }
    let coeff: Vec<f64> = counts.iter().map(|&c| c as f64 / k as f64).collect();
    let n = e.n();
    let mut yk = Matrix::zeros(rows.len(), n);
    for (r, (&i, &c)) in rows.iter().zip(&coeff).enumerate() {
        for (dst, &z) in yk.row_mut(r).iter_mut().zip(e.z(i)) {
            *dst = c * z;
        }
    }
    let ak = e.arows.select_rows(&rows);
    let wk = yk.t_matmul(&ak)?;
    let err = wk.uniform_distance(&e.w)?;
    let mk = rows.len();
    Ok(SketchResult {
        selected,
        rows,
        coeff,
        yk,
        ak,
        wk,
        err,
        mk,
    })
}

/// `μ + 4L k^{−1/2} √(2 ln(2n²))`: with probability at least 1/2 the sketch
/// certifies this level.
pub fn sketch_error_bound(l: f64, n: usize, k: usize, mu: f64) -> f64 {
    mu + 4.0 * l * (2.0 * (2.0 * (n * n) as f64).ln() / k as f64).sqrt()
}

/// Certificate carried by the sketch itself: witness `Y_k` with achieved
/// `‖I − W_k‖∞`. Also returns the a-priori level
/// [`sketch_error_bound`] the sketch meets whenever the good event holds.
pub fn sketch_certificate(s: &SketchResult, l: f64, mu: f64) -> Result<(GoodnessCertificate, f64)> {
    if !s.wk.is_square() {
        return Err(dim(format!("W_k is {}x{}, not square", s.wk.rows(), s.wk.cols())));
    }
    let n = s.wk.cols();
    let achieved = Matrix::identity(n).uniform_distance(&s.wk)?;
    let cert = GoodnessCertificate {
        witness: s.yk.clone(),
        mu: achieved,
        s_max: certified_s(achieved),
        exact: false,
        per_i: None,
    };
    Ok((cert, sketch_error_bound(l, n, s.selected.len(), mu)))
}
