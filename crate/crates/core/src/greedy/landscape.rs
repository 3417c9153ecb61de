//! Candidate evaluation for one greedy step.
//!
//! Every candidate `X + v a_iᵀ` with `X = S_k − W` changes entry `(j, l)` by
//! `v_j a_il`. Grouping the columns `l` by the distinct values `c_q` of
//! `a_i` (and, for rank-one moves, the rows `j` by the distinct values of
//! `z_i`) turns `Σ cosh` into a handful of weighted exponentials, so each
//! candidate costs a few log-sum-exps once the class sums
//! `G±_{jq} = Σ_{l ∈ q} exp(±X_jl/β)` are known.
//!
//! The class sums are kept in log form. When `2 max|X| / β` is moderate they
//! come from shifted exponentials times 0/1 class masks (one matrix product
//! for all candidates); otherwise each candidate computes its own with a
//! per-class log-sum-exp, which cannot underflow.

use crate::matrix::Matrix;
use crate::sampler::RowEnsemble;

/// Bracket doubling stops here.
pub(crate) const BRACKET_CAP: f64 = (1u64 << 60) as f64;
/// Largest `2 max|X| / β` for which shifted exponentials are used.
const FAST_RANGE: f64 = 600.0;

/// Distinct values of a vector (ascending) and each entry's class.
#[derive(Clone, Debug)]
pub(crate) struct Classes {
    pub vals: Vec<f64>,
    pub member: Vec<u32>,
}

impl Classes {
    pub fn of(v: &[f64]) -> Self {
        let mut vals = v.to_vec();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        let member = v
            .iter()
            .map(|x| vals.partition_point(|c| c.total_cmp(x).is_lt()) as u32)
            .collect();
        Self { vals, member }
    }
}

/// Per-ensemble data reused across steps.
pub(crate) struct Prepared {
    pub a: Vec<Classes>,
    pub z: Vec<Classes>,
    /// 0/1 indicators of the first and second class of every row, n×M;
    /// present when no row has more than two classes.
    masks: Option<[Matrix; 2]>,
}

impl Prepared {
    pub fn new(e: &RowEnsemble) -> Self {
        let a: Vec<Classes> = (0..e.m()).map(|i| Classes::of(e.a(i))).collect();
        let z: Vec<Classes> = (0..e.m()).map(|i| Classes::of(e.z(i))).collect();
        let masks = e.active().iter().all(|&i| a[i].vals.len() <= 2).then(|| {
            let mk = |q: u32| {
                Matrix::from_fn(e.n(), e.m(), |l, i| {
                    let c = &a[i];
                    f64::from(e.theta()[i] > 0.0 && c.member[l] == q && (q as usize) < c.vals.len())
                })
            };
            [mk(0), mk(1)]
        });
        Self { a, z, masks }
    }
}

/// Log class sums for one candidate row: `lp[j·Q + q] = ln G+_{jq}`.
pub(crate) struct Groups {
    pub vals: Vec<f64>,
    pub lp: Vec<f64>,
    pub lm: Vec<f64>,
}

pub(crate) struct Landscape<'a> {
    e: &'a RowEnsemble,
    prep: &'a Prepared,
    x: Matrix,
    beta: f64,
    /// `ln 2 + ln d`, so that `V = β(φ − ln_norm)` with `φ = ln Σ e^{±x/β}`.
    ln_norm: f64,
    /// ln of class sums `[+q0, +q1, −q0, −q1]`, row-major n×M each; an
    /// empty class gives `−∞`.
    fast: Option<[Vec<f64>; 4]>,
}

impl<'a> Landscape<'a> {
    pub fn new(e: &'a RowEnsemble, prep: &'a Prepared, x: Matrix, beta: f64, precompute: bool) -> Self {
        let n = x.rows();
        let ln_norm = std::f64::consts::LN_2 + ((n * n) as f64).ln();
        let m0 = crate::matrix::max_abs(x.as_slice());
        let fast = match &prep.masks {
            Some(masks) if precompute && 2.0 * m0 / beta <= FAST_RANGE => {
                let ep = Matrix::from_fn(n, n, |j, l| ((x.get(j, l) - m0) / beta).exp());
                let em = Matrix::from_fn(n, n, |j, l| ((-x.get(j, l) - m0) / beta).exp());
                let shift = m0 / beta;
                let log = |g: Matrix| -> Vec<f64> { g.as_slice().iter().map(|v| v.ln() + shift).collect() };
                let mul = |a: &Matrix, b: &Matrix| a.matmul(b).expect("n×n by n×M");
                Some([
                    log(mul(&ep, &masks[0])),
                    log(mul(&ep, &masks[1])),
                    log(mul(&em, &masks[0])),
                    log(mul(&em, &masks[1])),
                ])
            }
            _ => None,
        };
        Self {
            e,
            prep,
            x,
            beta,
            ln_norm,
            fast,
        }
    }

    fn value(&self, phi: f64) -> f64 {
        self.beta * (phi - self.ln_norm)
    }

    pub fn groups(&self, i: usize) -> Groups {
        let a = &self.prep.a[i];
        let q = a.vals.len();
        let n = self.x.rows();
        let mut lp = vec![0.0; n * q];
        let mut lm = vec![0.0; n * q];
        if let Some(f) = &self.fast {
            let m = self.e.m();
            for j in 0..n {
                for c in 0..q {
                    lp[j * q + c] = f[c][j * m + i];
                    lm[j * q + c] = f[2 + c][j * m + i];
                }
            }
        } else {
            let mut mp = vec![f64::NEG_INFINITY; q];
            let mut mm = vec![f64::NEG_INFINITY; q];
            let mut sp = vec![0.0; q];
            let mut sm = vec![0.0; q];
            for j in 0..n {
                let row = self.x.row(j);
                mp.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
                mm.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
                for (l, &v) in row.iter().enumerate() {
                    let c = a.member[l] as usize;
                    mp[c] = mp[c].max(v / self.beta);
                    mm[c] = mm[c].max(-v / self.beta);
                }
                sp.iter_mut().for_each(|v| *v = 0.0);
                sm.iter_mut().for_each(|v| *v = 0.0);
                for (l, &v) in row.iter().enumerate() {
                    let c = a.member[l] as usize;
                    sp[c] += (v / self.beta - mp[c]).exp();
                    sm[c] += (-v / self.beta - mm[c]).exp();
                }
                for c in 0..q {
                    lp[j * q + c] = mp[c] + sp[c].ln();
                    lm[j * q + c] = mm[c] + sm[c].ln();
                }
            }
        }
        Groups {
            vals: a.vals.clone(),
            lp,
            lm,
        }
    }

    /// Terms `(log weight, slope)` of `t ↦ φ(X + t z_i a_iᵀ)`.
    fn rank1_terms(&self, i: usize, g: &Groups) -> (Vec<f64>, Vec<f64>) {
        let z = &self.prep.z[i];
        let q = g.vals.len();
        let p = z.vals.len();
        // log-sum-exp over the rows of each z-class, per a-class
        let mut hi_p = vec![f64::NEG_INFINITY; p * q];
        let mut hi_m = vec![f64::NEG_INFINITY; p * q];
        for (j, &zc) in z.member.iter().enumerate() {
            for c in 0..q {
                let k = zc as usize * q + c;
                hi_p[k] = hi_p[k].max(g.lp[j * q + c]);
                hi_m[k] = hi_m[k].max(g.lm[j * q + c]);
            }
        }
        let mut sp = vec![0.0; p * q];
        let mut sm = vec![0.0; p * q];
        for (j, &zc) in z.member.iter().enumerate() {
            for c in 0..q {
                let k = zc as usize * q + c;
                if hi_p[k] > f64::NEG_INFINITY {
                    sp[k] += (g.lp[j * q + c] - hi_p[k]).exp();
                }
                if hi_m[k] > f64::NEG_INFINITY {
                    sm[k] += (g.lm[j * q + c] - hi_m[k]).exp();
                }
            }
        }
        let mut w = Vec::with_capacity(2 * p * q);
        let mut s = Vec::with_capacity(2 * p * q);
        for zp in 0..p {
            for c in 0..q {
                let k = zp * q + c;
                let slope = z.vals[zp] * g.vals[c] / self.beta;
                // a class may underflow entirely for one sign at tiny β
                if hi_p[k] > f64::NEG_INFINITY {
                    w.push(hi_p[k] + sp[k].ln());
                    s.push(slope);
                }
                if hi_m[k] > f64::NEG_INFINITY {
                    w.push(hi_m[k] + sm[k].ln());
                    s.push(-slope);
                }
            }
        }
        (w, s)
    }

    /// `V_β(X + t z_i a_iᵀ)`.
    pub fn rank1_value(&self, i: usize, t: f64) -> f64 {
        let (w, s) = self.rank1_terms(i, &self.groups(i));
        let shifted: Vec<f64> = w.iter().zip(&s).map(|(w, s)| w + s * t).collect();
        self.value(lse(&shifted))
    }

    /// Minimizes `V_β(X + t z_i a_iᵀ)` over `t ≥ 0`.
    pub fn linesearch(&self, i: usize, tol: f64) -> (f64, f64) {
        let (w, s) = self.rank1_terms(i, &self.groups(i));
        let (t, phi) = minimize_lse(&w, &s, Some(0.0), tol);
        (t, self.value(phi))
    }

    /// Minimizes `V_β(X + u a_iᵀ)` over `u ∈ Rⁿ`: one scalar problem per row.
    pub fn row_solve(&self, i: usize, tol: f64) -> (Vec<f64>, f64) {
        let g = self.groups(i);
        self.row_solve_groups(&g, tol)
    }

    pub fn row_solve_groups(&self, g: &Groups, tol: f64) -> (Vec<f64>, f64) {
        let q = g.vals.len();
        let n = self.x.rows();
        let mut u = vec![0.0; n];
        let mut phis = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(2 * q);
        let mut s = Vec::with_capacity(2 * q);
        for j in 0..n {
            w.clear();
            s.clear();
            for c in 0..q {
                w.push(g.lp[j * q + c]);
                s.push(g.vals[c] / self.beta);
                w.push(g.lm[j * q + c]);
                s.push(-g.vals[c] / self.beta);
            }
            let (uj, phi) = minimize_lse(&w, &s, None, tol);
            u[j] = uj;
            phis.push(phi);
        }
        (u, self.value(lse(&phis)))
    }

    /// Groups for an arbitrary row `a` (not necessarily from the ensemble).
    pub fn groups_for_row(&self, a: &[f64]) -> Groups {
        let cls = Classes::of(a);
        let q = cls.vals.len();
        let n = self.x.rows();
        let mut lp = vec![f64::NEG_INFINITY; n * q];
        let mut lm = vec![f64::NEG_INFINITY; n * q];
        for j in 0..n {
            for c in 0..q {
                let vals = self.x.row(j).iter().zip(&cls.member).filter(|(_, &m)| m as usize == c);
                let plus: Vec<f64> = vals.clone().map(|(v, _)| v / self.beta).collect();
                let minus: Vec<f64> = vals.map(|(v, _)| -v / self.beta).collect();
                lp[j * q + c] = lse(&plus);
                lm[j * q + c] = lse(&minus);
            }
        }
        Groups { vals: cls.vals, lp, lm }
    }
}

/// `ln Σ e^{w_i}`; `−∞` for an empty slice.
pub(crate) fn lse(w: &[f64]) -> f64 {
    let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + w.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `φ(u) = ln Σ e^{w_i + s_i u}` with its first two derivatives.
fn eval(w: &[f64], s: &[f64], u: f64) -> (f64, f64, f64) {
    let m = w
        .iter()
        .zip(s)
        .map(|(w, s)| w + s * u)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut z1, mut z2) = (0.0, 0.0, 0.0);
    for (w, s) in w.iter().zip(s) {
        let p = (w + s * u - m).exp();
        z += p;
        z1 += p * s;
        z2 += p * s * s;
    }
    let d1 = z1 / z;
    (m + z.ln(), d1, (z2 / z - d1 * d1).max(0.0))
}

/// Combines terms with equal slopes and drops empty ones.
fn merge(w: &[f64], s: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..w.len()).filter(|&i| w[i] > f64::NEG_INFINITY).collect();
    idx.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let (mut mw, mut ms): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut group: Vec<f64> = Vec::new();
    for (pos, &i) in idx.iter().enumerate() {
        group.push(w[i]);
        if pos + 1 == idx.len() || s[idx[pos + 1]] != s[i] {
            mw.push(lse(&group));
            ms.push(s[i]);
            group.clear();
        }
    }
    (mw, ms)
}

/// Minimizes the convex `φ(u) = ln Σ e^{w_i + s_i u}` over `u ≥ lower`
/// (or all of R). Returns `(u*, φ(u*))`.
///
/// Two opposite slopes have a closed-form minimizer. Otherwise the
/// minimizer is bracketed by doubling from 1 (capped at 2⁶⁰) and located by
/// Newton steps safeguarded by bisection, to relative width `tol` or
/// derivative `10⁻³·tol·max|s|`.
pub(crate) fn minimize_lse(w: &[f64], s: &[f64], lower: Option<f64>, tol: f64) -> (f64, f64) {
    let (w, s) = merge(w, s);
    let start = lower.unwrap_or(0.0);
    let smax = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if w.is_empty() {
        return (start, f64::NEG_INFINITY);
    }
    if smax == 0.0 {
        return (start, lse(&w));
    }
    if s.len() == 2 && s[0] < 0.0 && s[1] > 0.0 {
        // w0 + s0 u + ln(−s0) = w1 + s1 u + ln s1
        let mut u = (w[0] - w[1] + (-s[0]).ln() - s[1].ln()) / (s[1] - s[0]);
        if let Some(lo) = lower {
            u = u.max(lo);
        }
        return (u, eval(&w, &s, u).0);
    }
    let (phi0, d0, _) = eval(&w, &s, start);
    if d0 == 0.0 || (lower.is_some() && d0 >= 0.0) {
        return (start, phi0);
    }
    let dir = if d0 < 0.0 { 1.0 } else { -1.0 };
    let mut inner = start;
    let mut step = 1.0;
    let outer = loop {
        let cand = start + dir * step;
        let (phi, d, _) = eval(&w, &s, cand);
        if d * dir >= 0.0 {
            break cand;
        }
        inner = cand;
        step *= 2.0;
        if step > BRACKET_CAP {
            return (cand, phi);
        }
    };
    let (mut a, mut b) = if dir > 0.0 { (inner, outer) } else { (outer, inner) };
    let mut u = 0.5 * (a + b);
    for _ in 0..300 {
        let (_, d1, d2) = eval(&w, &s, u);
        if d1.abs() <= 1e-3 * tol * smax {
            break;
        }
        if d1 < 0.0 {
            a = u;
        } else {
            b = u;
        }
        let newton = if d2 > 0.0 { u - d1 / d2 } else { f64::NAN };
        let next = if newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if b - a <= tol * 1e-3 * u.abs().max(1.0) || next == u {
            u = next;
            break;
        }
        u = next;
    }
    (u, eval(&w, &s, u).0)
}
