//! Derandomized selection of atoms `v a_iᵀ` approximating `W = YᵀA`.
//!
//! The running sum `S_k = Σ_j (v_j a_{ℓ_j}ᵀ − W)` is steered by the smoothed
//! norm `V_β`. A step may raise the potential by at most `2L²/β_k`:
//!
//! ```text
//! δ_k = V_{β_{k+1}}(S_{k+1}) − V_{β_k}(S_k) ≤ 2L²/β_k
//! ```
//!
//! which, summed, gives `‖S_k‖∞ ≤ β_k ln(2d) + Σδ` and, for the fixed
//! schedule with horizon `k`, `‖Y_kᵀA_k − I‖∞ ≤ μ + 2L√(2 ln(2d)/k)`.
//!
//! Policies:
//! - A: any row whose atom does not increase the linearized potential
//!   (first hit in index order, or the best of all such moves at `t = 1`);
//! - A′: as A but candidates drawn from `π`;
//! - B: best rank-one move `t z_i a_iᵀ`, `t ≥ 0`;
//! - C: best move `u a_iᵀ` over all `u ∈ Rⁿ`;
//! - joint: B with β optimized alongside `t`.

mod landscape;

use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};
use crate::gaussian::RankKFactor;
use crate::goodness::{certified_s, Certifier, GoodnessCertificate};
use crate::matrix::{dot, Matrix};
use crate::potential::{beta_at, joint_beta_derivative, smooth_max, smooth_max_grad, BetaSchedule, ScheduleKind};
use crate::rng::RandomSource;
use crate::sampler::{build_ensemble, RowEnsemble};

use landscape::{Landscape, Prepared};

/// Slack on the step condition for rounding.
pub const CONDITION_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Policy A, first row in index order passing the descent test.
    A,
    /// Policy A, best value at `t = 1` over all rows.
    ABest,
    APrime,
    B,
    C,
    Joint,
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(Self::A),
            "abest" => Ok(Self::ABest),
            "aprime" => Ok(Self::APrime),
            "b" => Ok(Self::B),
            "c" => Ok(Self::C),
            "joint" => Ok(Self::Joint),
            other => Err(Error::Validation(format!("unknown greedy policy {other:?}"))),
        }
    }
}

/// One accepted atom `v a_rowᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pick {
    pub row: usize,
    pub coeff: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub k: usize,
    /// `‖I − Y_kᵀA_k‖∞` for the greedy witness.
    pub mu: f64,
    pub beta: f64,
    pub delta: f64,
    pub pick: usize,
    /// Re-optimized `Opt(A_m)` when a refinement ran at this step.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub refined_mu: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct GreedyState {
    s: Matrix,
    k: usize,
    beta: f64,
    value: f64,
    deltasum: f64,
    allowance_sum: f64,
    picks: Vec<Pick>,
    schedule: BetaSchedule,
}

impl GreedyState {
    /// `S_k`.
    pub fn s(&self) -> &Matrix {
        &self.s
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `β_k`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `V_{β_k}(S_k)`.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// `Σ δ_ℓ`.
    pub fn deltasum(&self) -> f64 {
        self.deltasum
    }

    /// `Σ 2L²/β_ℓ` over the steps taken.
    pub fn allowance_sum(&self) -> f64 {
        self.allowance_sum
    }

    pub fn picks(&self) -> &[Pick] {
        &self.picks
    }

    pub fn schedule(&self) -> &BetaSchedule {
        &self.schedule
    }

    /// `β_k ln(2d) + Σδ`, the a-priori bound on `‖S_k‖∞`.
    pub fn norm_bound(&self) -> f64 {
        self.beta * (2.0 * self.s.as_slice().len() as f64).ln() + self.deltasum
    }

    /// `U_k = S_k/k + W = Y_kᵀA_k`.
    pub fn approximation(&self, w: &Matrix) -> Result<Matrix> {
        if self.k == 0 {
            return Err(Error::Precondition("no steps taken".into()));
        }
        self.s.scaled(1.0 / self.k as f64).add(w)
    }

    /// `S_k` rebuilt from the picks.
    pub fn recompute_sum(&self, e: &RowEnsemble) -> Matrix {
        let mut s = e.target().scaled(-(self.k as f64));
        for p in &self.picks {
            s.add_outer(1.0, &p.coeff, e.a(p.row));
        }
        s
    }

    /// Distinct rows in order of first use, with aggregated witness rows
    /// `y_r = (1/k) Σ_{ℓ_j = r} v_j`.
    pub fn witness(&self, n: usize) -> (Vec<usize>, Matrix) {
        let mut rows: Vec<usize> = Vec::new();
        let mut sums: Vec<Vec<f64>> = Vec::new();
        for p in &self.picks {
            let slot = match rows.iter().position(|&r| r == p.row) {
                Some(s) => s,
                None => {
                    rows.push(p.row);
                    sums.push(vec![0.0; n]);
                    rows.len() - 1
                }
            };
            sums[slot].iter_mut().zip(&p.coeff).for_each(|(a, b)| *a += b);
        }
        let inv = 1.0 / self.k.max(1) as f64;
        let mut y = Matrix::zeros(rows.len().max(1), n);
        for (r, s) in sums.iter().enumerate() {
            y.row_mut(r).iter_mut().zip(s).for_each(|(d, v)| *d = v * inv);
        }
        (rows, y)
    }
}

/// What a step did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub pick: usize,
    pub delta: f64,
    pub allowance: f64,
    /// Candidate value the policy optimized, where it has one.
    pub value: Option<f64>,
}

/// The greedy engine bound to one ensemble.
pub struct Greedy<'a> {
    e: &'a RowEnsemble,
    prep: Prepared,
    tol: f64,
    ln2d: f64,
}

impl<'a> Greedy<'a> {
    pub fn new(e: &'a RowEnsemble, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::Precondition(format!("tol must be positive, got {tol}")));
        }
        let n = e.n();
        Ok(Self {
            e,
            prep: Prepared::new(e),
            tol,
            ln2d: (2.0 * (n * n) as f64).ln(),
        })
    }

    pub fn ensemble(&self) -> &RowEnsemble {
        self.e
    }

    /// `S_0 = 0`, `β_0` from the schedule.
    pub fn init(&self, schedule: BetaSchedule) -> Result<GreedyState> {
        let n = self.e.n();
        if schedule.d != n * n {
            return Err(dim(format!("schedule has d = {}, expected n² = {}", schedule.d, n * n)));
        }
        Ok(GreedyState {
            s: Matrix::zeros(n, n),
            k: 0,
            beta: beta_at(&schedule, 0)?,
            value: 0.0,
            deltasum: 0.0,
            allowance_sum: 0.0,
            picks: Vec::new(),
            schedule,
        })
    }

    fn next_beta(&self, st: &GreedyState) -> f64 {
        st.schedule.next_after(st.beta, st.k + 1)
    }

    fn base(&self, st: &GreedyState) -> Matrix {
        st.s.sub(self.e.target()).expect("same shape")
    }

    /// Applies `S += v a_iᵀ − W` and checks the step condition.
    fn commit(&self, st: &mut GreedyState, i: usize, v: Vec<f64>, beta_next: f64, enforce: bool) -> Result<StepReport> {
        let mut s = self.base(st);
        s.add_outer(1.0, &v, self.e.a(i));
        let value = smooth_max(s.as_slice(), beta_next);
        let delta = value - st.value;
        let l = self.e.l();
        let allowance = 2.0 * l * l / st.beta;
        if enforce && delta > allowance + CONDITION_SLACK {
            return Err(Error::ConditionViolated {
                k: st.k,
                increase: delta,
                allowance,
            });
        }
        st.s = s;
        st.k += 1;
        st.beta = beta_next;
        st.value = value;
        st.deltasum += delta;
        st.allowance_sum += allowance;
        st.picks.push(Pick { row: i, coeff: v });
        Ok(StepReport {
            pick: i,
            delta,
            allowance,
            value: None,
        })
    }

    /// `⟨∇V_{β_k}(S_k), z_i a_iᵀ − W⟩` for every requested row, lazily.
    fn descent_test(&self, st: &GreedyState) -> impl Fn(usize) -> f64 + '_ {
        let n = self.e.n();
        let mut g = vec![0.0; n * n];
        smooth_max_grad(st.s.as_slice(), st.beta, &mut g);
        let gw = dot(&g, self.e.target().as_slice());
        let g = Matrix::new(n, n, g).unwrap_or_else(|_| Matrix::zeros(n, n));
        move |i| {
            let ga = g.mul_vec(self.e.a(i));
            dot(self.e.z(i), &ga) - gw
        }
    }

    fn scan_first_hit(&self, test: &dyn Fn(usize) -> f64) -> usize {
        let mut best = (f64::INFINITY, self.e.active()[0]);
        for &i in self.e.active() {
            let v = test(i);
            if v <= 0.0 {
                return i;
            }
            if v < best.0 {
                best = (v, i);
            }
        }
        // rounding can leave every inner product marginally positive
        best.1
    }

    /// Policy A, first hit: the lowest-index row passing the descent test.
    pub fn step_policy_a(&self, st: &mut GreedyState) -> Result<StepReport> {
        let test = self.descent_test(st);
        let i = self.scan_first_hit(&test);
        let beta_next = self.next_beta(st);
        self.commit(st, i, self.e.z(i).to_vec(), beta_next, true)
    }

    /// Policy A, best of all: minimizes `V_{β_{k+1}}(S_k + z_i a_iᵀ − W)`.
    pub fn step_policy_a_best(&self, st: &mut GreedyState) -> Result<StepReport> {
        let beta_next = self.next_beta(st);
        let land = Landscape::new(self.e, &self.prep, self.base(st), beta_next, true);
        let (i, v) = argmin(self.e.active(), |i| land.rank1_value(i, 1.0));
        let mut r = self.commit(st, i, self.e.z(i).to_vec(), beta_next, true)?;
        r.value = Some(v);
        Ok(r)
    }

    /// Policy A′: rows drawn from `π` until one passes the descent test;
    /// after `max_draws` failures, the policy-A scan.
    pub fn step_policy_a_prime(
        &self,
        st: &mut GreedyState,
        rng: &mut RandomSource,
        max_draws: usize,
    ) -> Result<StepReport> {
        let test = self.descent_test(st);
        let i = (0..max_draws)
            .map(|_| self.e.draw(rng))
            .find(|&i| test(i) <= 0.0)
            .unwrap_or_else(|| self.scan_first_hit(&test));
        let beta_next = self.next_beta(st);
        self.commit(st, i, self.e.z(i).to_vec(), beta_next, true)
    }

    /// `argmin_{t ≥ 0} V_{β_k}(S_k + t z_i a_iᵀ − W)` and its value.
    pub fn linesearch_rank1(&self, st: &GreedyState, i: usize) -> (f64, f64) {
        Landscape::new(self.e, &self.prep, self.base(st), st.beta, false).linesearch(i, self.tol)
    }

    /// Policy B: the best rank-one move over all rows.
    pub fn step_policy_b(&self, st: &mut GreedyState) -> Result<StepReport> {
        let land = Landscape::new(self.e, &self.prep, self.base(st), st.beta, true);
        let mut ts = vec![0.0; self.e.m()];
        let (i, v) = argmin(self.e.active(), |i| {
            let (t, v) = land.linesearch(i, self.tol);
            ts[i] = t;
            v
        });
        let coeff = self.e.z(i).iter().map(|z| ts[i] * z).collect();
        let beta_next = self.next_beta(st);
        let mut r = self.commit(st, i, coeff, beta_next, true)?;
        r.value = Some(v);
        Ok(r)
    }

    /// `argmin_u V_{β_k}(S_k + u aᵀ − W)` for an arbitrary nonzero row `a`.
    pub fn solve_policy_c_row(&self, st: &GreedyState, a: &[f64]) -> Result<(Vec<f64>, f64)> {
        if a.len() != self.e.n() {
            return Err(dim(format!("row has length {}, expected {}", a.len(), self.e.n())));
        }
        if a.iter().all(|&v| v == 0.0) {
            return Err(Error::Precondition("row is identically zero".into()));
        }
        let land = Landscape::new(self.e, &self.prep, self.base(st), st.beta, false);
        Ok(land.row_solve_groups(&land.groups_for_row(a), self.tol))
    }

    /// Policy C: the best move `u a_iᵀ` over all rows.
    pub fn step_policy_c(&self, st: &mut GreedyState) -> Result<StepReport> {
        let land = Landscape::new(self.e, &self.prep, self.base(st), st.beta, true);
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for &i in self.e.active() {
            let (u, v) = land.row_solve(i, self.tol);
            if best.as_ref().map_or(true, |b| better(v, b.0)) {
                best = Some((v, i, u));
            }
        }
        let (v, i, u) = best.expect("ensemble has an active row");
        let beta_next = self.next_beta(st);
        let mut r = self.commit(st, i, u, beta_next, true)?;
        r.value = Some(v);
        Ok(r)
    }

    /// Lower end of the β search in the joint step.
    pub fn joint_beta_floor(&self) -> f64 {
        self.tol / self.ln2d
    }

    /// Joint objective `β ln(2d) + V_β(S_k + t z_i a_iᵀ − W)`.
    pub fn joint_objective(&self, st: &GreedyState, i: usize, t: f64, beta: f64) -> f64 {
        let mut x = self.base(st);
        x.add_outer(t, self.e.z(i), self.e.a(i));
        beta * self.ln2d + smooth_max(x.as_slice(), beta)
    }

    /// Minimizes the joint objective over `t ≥ 0`, `β ≥` [`Self::joint_beta_floor`]
    /// for row `i` by alternating exact minimizations, starting from
    /// `(1, β_ref)`. Returns `(t, β, objective)` and the objective after each
    /// alternation.
    pub fn joint_minimize(&self, st: &GreedyState, i: usize, beta_ref: f64) -> (f64, f64, f64, Vec<f64>) {
        let floor = self.joint_beta_floor();
        let base = self.base(st);
        let (mut t, mut beta) = (1.0, beta_ref.max(floor));
        let mut obj = self.joint_objective(st, i, t, beta);
        let mut trace = vec![obj];
        let mut scratch = vec![0.0; base.as_slice().len()];
        for _ in 0..50 {
            // β-step: the objective is convex in β; bisect its derivative
            let mut x = base.clone();
            x.add_outer(t, self.e.z(i), self.e.a(i));
            let deriv = |b: f64, sc: &mut [f64]| joint_beta_derivative(x.as_slice(), b, sc);
            beta = if deriv(floor, &mut scratch) >= 0.0 {
                floor
            } else {
                let (mut lo, mut hi) = (floor, beta.max(floor) * 2.0);
                while deriv(hi, &mut scratch) < 0.0 && hi < landscape::BRACKET_CAP {
                    lo = hi;
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if deriv(mid, &mut scratch) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= self.tol * hi {
                        break;
                    }
                }
                hi
            };
            // t-step
            let land = Landscape::new(self.e, &self.prep, base.clone(), beta, false);
            t = land.linesearch(i, self.tol).0;
            let next = self.joint_objective(st, i, t, beta);
            trace.push(next);
            let decrease = obj - next;
            obj = obj.min(next);
            if decrease < self.tol {
                break;
            }
        }
        (t, beta, obj, trace)
    }

    /// Joint (t, β) step. β_{k+1} is the optimizing β of the chosen row; the
    /// step condition is reported but not enforced since no schedule fixes β.
    pub fn step_joint_beta(&self, st: &mut GreedyState) -> Result<StepReport> {
        let beta_ref = self.next_beta(st);
        let mut best: Option<(f64, usize, f64, f64)> = None;
        for &i in self.e.active() {
            let (t, b, obj, _) = self.joint_minimize(st, i, beta_ref);
            if best.map_or(true, |x| better(obj, x.0)) {
                best = Some((obj, i, t, b));
            }
        }
        let (obj, i, t, b) = best.expect("ensemble has an active row");
        let coeff = self.e.z(i).iter().map(|z| t * z).collect();
        let mut r = self.commit(st, i, coeff, b, false)?;
        r.value = Some(obj);
        Ok(r)
    }

    pub fn step(
        &self,
        st: &mut GreedyState,
        policy: Policy,
        rng: Option<&mut RandomSource>,
        max_draws: usize,
    ) -> Result<StepReport> {
        match policy {
            Policy::A => self.step_policy_a(st),
            Policy::ABest => self.step_policy_a_best(st),
            Policy::APrime => {
                let rng = rng.ok_or_else(|| Error::Precondition("policy A′ needs a random source".into()))?;
                self.step_policy_a_prime(st, rng, max_draws)
            }
            Policy::B => self.step_policy_b(st),
            Policy::C => self.step_policy_c(st),
            Policy::Joint => self.step_joint_beta(st),
        }
    }
}

/// Strictly better beyond rounding, so near-ties go to the earlier index.
fn better(v: f64, best: f64) -> bool {
    v < best - 1e-12 * best.abs().max(1.0)
}

fn argmin(rows: &[usize], mut f: impl FnMut(usize) -> f64) -> (usize, f64) {
    let mut best = (rows[0], f(rows[0]));
    for &i in &rows[1..] {
        let v = f(i);
        if better(v, best.1) {
            best = (i, v);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub policy: Policy,
    pub schedule: ScheduleKind,
    pub k_max: usize,
    pub target_s: Option<u64>,
    pub tol: f64,
    /// Re-optimize the witness every this many steps; 0 disables.
    pub refine_every: usize,
    /// Rows are Hadamard characters; certify through the shift shortcut.
    pub shortcut: bool,
    pub max_draws: usize,
}

impl GreedyConfig {
    pub fn new(policy: Policy, k_max: usize) -> Self {
        Self {
            policy,
            schedule: ScheduleKind::Fixed,
            k_max,
            target_s: None,
            tol: 1e-8,
            refine_every: 0,
            shortcut: false,
            max_draws: 1000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GreedyOutcome {
    /// `Y_kᵀA_k` as a sum over distinct rows (`left = Y_k`, `right = A_k`).
    pub factor: RankKFactor,
    /// Distinct rows in order of first use.
    pub rows: Vec<usize>,
    /// Best certificate seen; its witness rows are `rows[..cert_rank]`.
    pub certificate: GoodnessCertificate,
    pub cert_rank: usize,
    /// Whether `target_s` was certified.
    pub certified: bool,
    pub history: Vec<HistoryEntry>,
    pub state: GreedyState,
}

/// Runs a greedy policy until `target_s` is certified or `k_max` steps.
pub fn run_derandomized(
    y: &Matrix,
    a: &Matrix,
    cfg: &GreedyConfig,
    mut rng: Option<&mut RandomSource>,
) -> Result<GreedyOutcome> {
    if cfg.k_max == 0 {
        return Err(Error::Precondition("k_max must be at least 1".into()));
    }
    if !a.is_square() {
        return Err(dim(format!("A must be square, got {}x{}", a.rows(), a.cols())));
    }
    let e = build_ensemble(y, a)?;
    let n = e.n();
    let horizon = (cfg.schedule == ScheduleKind::Fixed).then_some(cfg.k_max);
    let schedule = BetaSchedule::new(cfg.schedule, e.l(), n * n, horizon)?;
    let engine = Greedy::new(&e, cfg.tol)?;
    let mut st = engine.init(schedule)?;
    let mut certifier = Certifier::new(cfg.tol, cfg.shortcut);
    let identity = Matrix::identity(n);
    let target_met = |mu: f64| cfg.target_s.map_or(false, |s| certified_s(mu).covers(s));

    let mut history = Vec::new();
    let mut best: Option<(GoodnessCertificate, usize)> = None;
    let mut certified_rows = 0;
    let mut certified = false;
    while st.k < cfg.k_max {
        let report = engine.step(&mut st, cfg.policy, rng.as_deref_mut(), cfg.max_draws)?;
        let mu = st.approximation(e.target())?.uniform_distance(&identity)?;
        let (rows, witness) = st.witness(n);
        let mut entry = HistoryEntry {
            k: st.k,
            mu,
            beta: st.beta,
            delta: report.delta,
            pick: report.pick,
            refined_mu: None,
        };

        if best.as_ref().map_or(true, |(c, _)| mu < c.mu) {
            let cert = GoodnessCertificate {
                witness,
                mu,
                s_max: certified_s(mu),
                exact: false,
                per_i: None,
            };
            best = Some((cert, rows.len()));
        }
        let refine_now = cfg.refine_every > 0 && st.k % cfg.refine_every == 0 && rows.len() > certified_rows;
        if refine_now && rows.len() <= n {
            certified_rows = rows.len();
            let cert = certifier.certify(&a.select_rows(&rows))?;
            entry.refined_mu = Some(cert.mu);
            if best.as_ref().map_or(true, |(c, _)| cert.mu < c.mu) {
                best = Some((cert, rows.len()));
            }
        }
        history.push(entry);
        if target_met(best.as_ref().expect("set above").0.mu) {
            certified = true;
            break;
        }
    }
    let (rows, witness) = st.witness(n);
    let ak = a.select_rows(&rows);
    let (certificate, cert_rank) = best.expect("at least one step");
    Ok(GreedyOutcome {
        factor: RankKFactor {
            left: witness,
            right: ak,
            scale: 1.0,
        },
        rows,
        certificate,
        cert_rank,
        certified,
        history,
        state: st,
    })
}

#[cfg(test)]
mod tests;
