//! Row-by-row synthesis of s-good submatrices.
//!
//! Both drivers grow `A_m` one row at a time and certify prefixes. The blind
//! driver takes rows in the order of a random draw from `π` (a uniform random
//! permutation for Hadamard inputs); with refinement each prefix is judged by
//! its best witness `Opt(A_m)` instead of the sampling average. The active
//! drivers take rows in the order a greedy policy first uses them.
//!
//! The profile records, for `s = 1, …, target`, the shortest certified
//! prefix. Between checkpoints it is located by bisection, which relies on
//! `Opt` being nonincreasing as rows are appended; every reported rank is
//! backed by a certificate actually computed at that prefix.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goodness::{certified_s, Certifier, GoodnessCertificate};
use crate::greedy::{run_derandomized, GreedyConfig, Policy};
use crate::matrix::Matrix;
use crate::potential::ScheduleKind;
use crate::rng::RandomSource;
use crate::sampler::build_ensemble;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthPolicy {
    Blind,
    Greedy(Policy),
}

impl FromStr for SynthPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blind" => Ok(Self::Blind),
            other => other.parse().map(Self::Greedy),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub policy: SynthPolicy,
    pub schedule: ScheduleKind,
    pub target_s: u64,
    /// Step budget: greedy steps, distinct rows for refined blind runs, or
    /// draws for unrefined blind runs.
    pub k_max: usize,
    pub tol: f64,
    /// Certify the best witness every this many steps; 0 keeps the
    /// algorithm's own witness.
    pub refine_every: usize,
    pub shortcut: bool,
    pub max_draws: usize,
}

impl SynthConfig {
    pub fn new(policy: SynthPolicy, target_s: u64, k_max: usize) -> Self {
        Self {
            policy,
            schedule: ScheduleKind::Fixed,
            target_s,
            k_max,
            tol: 1e-8,
            refine_every: 1,
            shortcut: false,
            max_draws: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub s: u64,
    /// Shortest certified prefix.
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub k: usize,
    /// Distinct rows so far.
    pub m: usize,
    pub mu: f64,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub pick: usize,
    pub refined_mu: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SynthOutcome {
    /// Rows of the reported submatrix: the shortest prefix certifying the
    /// target, or the best prefix found when the budget ran out.
    pub rows: Vec<usize>,
    pub certificate: GoodnessCertificate,
    pub certified: bool,
    pub profile: Vec<ProfileEntry>,
    pub history: Vec<TraceEntry>,
    /// All rows in the order they were taken.
    pub order: Vec<usize>,
}

/// Grows a submatrix of `a` until it is certified `target_s`-good or the
/// budget runs out. `y` is a certificate for `a` itself (`‖I − YᵀA‖∞`
/// small); it fixes the sampling weights and the greedy target `W = YᵀA`.
pub fn synthesize(y: &Matrix, a: &Matrix, cfg: &SynthConfig, rng: &mut RandomSource) -> Result<SynthOutcome> {
    if cfg.target_s == 0 {
        return Err(Error::Precondition("target s must be at least 1".into()));
    }
    if cfg.k_max == 0 {
        return Err(Error::Precondition("k_max must be at least 1".into()));
    }
    match cfg.policy {
        SynthPolicy::Blind if cfg.refine_every == 0 => blind_plain(y, a, cfg, rng),
        SynthPolicy::Blind => blind_refined(y, a, cfg, rng),
        SynthPolicy::Greedy(p) => active(y, a, cfg, p, rng),
    }
}

/// Weighted random order without replacement: row `i` gets the key
/// `ln(u)/π_i` and rows are taken by decreasing key, which is the same
/// as drawing from `π` and skipping repeats.
fn draw_order(pi: &[f64], active: &[usize], rng: &mut RandomSource) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = active
        .iter()
        .map(|&i| ((1.0 - rng.uniform()).ln() / pi[i], i))
        .collect();
    keyed.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Prefix certificates, computed on demand and kept.
struct Prefixes<'a> {
    a: &'a Matrix,
    order: Vec<usize>,
    certifier: Certifier,
    done: BTreeMap<usize, GoodnessCertificate>,
}

impl<'a> Prefixes<'a> {
    fn new(a: &'a Matrix, order: Vec<usize>, cfg: &SynthConfig) -> Self {
        Self {
            a,
            order,
            certifier: Certifier::new(cfg.tol, cfg.shortcut),
            done: BTreeMap::new(),
        }
    }

    fn get(&mut self, m: usize) -> Result<&GoodnessCertificate> {
        if !self.done.contains_key(&m) {
            let cert = self.certifier.certify(&self.a.select_rows(&self.order[..m]))?;
            self.done.insert(m, cert);
        }
        Ok(&self.done[&m])
    }

    fn covers(&mut self, m: usize, s: u64) -> Result<bool> {
        Ok(self.get(m)?.s_max.covers(s))
    }

    /// Shortest prefixes certifying `1..=target` given checkpoint values
    /// `(m, mu)` in increasing `m`. Levels never reached are left out.
    fn profile(&mut self, checkpoints: &[(usize, f64)], target: u64) -> Result<Vec<ProfileEntry>> {
        let mut out: Vec<ProfileEntry> = Vec::new();
        for s in 1..=target {
            let Some(j) = checkpoints.iter().position(|&(_, mu)| certified_s(mu).covers(s)) else {
                break;
            };
            let floor = out.last().map_or(0, |e| e.rank - 1);
            let mut lo = if j == 0 { 0 } else { checkpoints[j - 1].0 }.max(floor);
            let mut hi = checkpoints[j].0;
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if self.covers(mid, s)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(ProfileEntry { s, rank: hi });
        }
        Ok(out)
    }
}

fn blind_refined(y: &Matrix, a: &Matrix, cfg: &SynthConfig, rng: &mut RandomSource) -> Result<SynthOutcome> {
    let e = build_ensemble(y, a)?;
    let mut order = draw_order(e.pi(), e.active(), rng);
    order.truncate(cfg.k_max.min(a.cols()));
    let mut pre = Prefixes::new(a, order.clone(), cfg);

    let mut checkpoints = Vec::new();
    let mut history = Vec::new();
    let mut certified = false;
    let last = order.len();
    let mut m = 0;
    while m < last {
        m = (m + cfg.refine_every).min(last);
        let mu = pre.get(m)?.mu;
        checkpoints.push((m, mu));
        history.push(TraceEntry {
            k: m,
            m,
            mu,
            beta: None,
            delta: None,
            pick: order[m - 1],
            refined_mu: Some(mu),
        });
        if certified_s(mu).covers(cfg.target_s) {
            certified = true;
            break;
        }
    }
    finish(pre, &checkpoints, cfg.target_s, certified, history)
}

/// The sampling algorithm without refinement: `k` i.i.d. draws, judged by
/// the average `W_k` itself.
fn blind_plain(y: &Matrix, a: &Matrix, cfg: &SynthConfig, rng: &mut RandomSource) -> Result<SynthOutcome> {
    let e = build_ensemble(y, a)?;
    let n = e.n();
    let mut sum = Matrix::zeros(n, n);
    let mut counts = vec![0usize; e.m()];
    let mut order = Vec::new();
    let mut history = Vec::new();
    let mut profile = Vec::new();
    let mut best: Option<(f64, usize, usize)> = None;
    let identity = Matrix::identity(n);
    for k in 1..=cfg.k_max {
        let i = e.draw(rng);
        if counts[i] == 0 {
            order.push(i);
        }
        counts[i] += 1;
        sum.add_outer(1.0, e.z(i), e.a(i));
        let mu = identity.uniform_distance(&sum.scaled(1.0 / k as f64))?;
        history.push(TraceEntry {
            k,
            m: order.len(),
            mu,
            beta: None,
            delta: None,
            pick: i,
            refined_mu: None,
        });
        while let Some(s) = (profile.len() as u64 + 1..=cfg.target_s).next() {
            if !certified_s(mu).covers(s) {
                break;
            }
            profile.push(ProfileEntry { s, rank: order.len() });
        }
        if best.map_or(true, |b| mu < b.0) {
            best = Some((mu, k, order.len()));
        }
        if certified_s(mu).covers(cfg.target_s) {
            break;
        }
    }
    let (_, k_best, m_best) = best.expect("k_max ≥ 1");
    // rebuild the witness of the best average from its draw counts
    let mut counts = vec![0usize; e.m()];
    for h in &history[..k_best] {
        counts[h.pick] += 1;
    }
    let rows = order[..m_best].to_vec();
    let mut witness = Matrix::zeros(m_best, n);
    for (r, &i) in rows.iter().enumerate() {
        let c = counts[i] as f64 / k_best as f64;
        for (dst, &z) in witness.row_mut(r).iter_mut().zip(e.z(i)) {
            *dst = c * z;
        }
    }
    let mu = crate::goodness::residual(&witness, &a.select_rows(&rows))?;
    let certificate = GoodnessCertificate {
        witness,
        mu,
        s_max: certified_s(mu),
        exact: false,
        per_i: None,
    };
    let certified = certificate.s_max.covers(cfg.target_s);
    Ok(SynthOutcome {
        rows,
        certificate,
        certified,
        profile,
        history,
        order,
    })
}

fn active(y: &Matrix, a: &Matrix, cfg: &SynthConfig, policy: Policy, rng: &mut RandomSource) -> Result<SynthOutcome> {
    let mut gc = GreedyConfig::new(policy, cfg.k_max);
    gc.schedule = cfg.schedule;
    gc.target_s = Some(cfg.target_s);
    gc.tol = cfg.tol;
    gc.refine_every = cfg.refine_every;
    gc.shortcut = cfg.shortcut;
    gc.max_draws = cfg.max_draws;
    let out = run_derandomized(y, a, &gc, Some(rng))?;

    let mut seen = vec![false; a.rows()];
    let mut m = 0;
    let mut history = Vec::with_capacity(out.history.len());
    let mut checkpoints: Vec<(usize, f64)> = Vec::new();
    for h in &out.history {
        if !seen[h.pick] {
            seen[h.pick] = true;
            m += 1;
        }
        let mu = h.refined_mu.map_or(h.mu, |r| r.min(h.mu));
        match checkpoints.last_mut() {
            Some(last) if last.0 == m => last.1 = last.1.min(mu),
            _ => checkpoints.push((m, mu)),
        }
        history.push(TraceEntry {
            k: h.k,
            m,
            mu: h.mu,
            beta: Some(h.beta),
            delta: Some(h.delta),
            pick: h.pick,
            refined_mu: h.refined_mu,
        });
    }
    // a running minimum keeps the checkpoint sequence monotone
    for j in 1..checkpoints.len() {
        checkpoints[j].1 = checkpoints[j].1.min(checkpoints[j - 1].1);
    }
    let order = out.rows.clone();

    if cfg.refine_every == 0 {
        // without refinement only the greedy witnesses exist
        let profile = checkpoints
            .iter()
            .fold(Vec::new(), |mut acc: Vec<ProfileEntry>, &(m, mu)| {
                while let Some(s) = (acc.len() as u64 + 1..=cfg.target_s).next() {
                    if !certified_s(mu).covers(s) {
                        break;
                    }
                    acc.push(ProfileEntry { s, rank: m });
                }
                acc
            });
        let rows = order[..out.cert_rank].to_vec();
        return Ok(SynthOutcome {
            rows,
            certificate: out.certificate,
            certified: out.certified,
            profile,
            history,
            order,
        });
    }
    let pre = Prefixes::new(a, order, cfg);
    finish(pre, &checkpoints, cfg.target_s, out.certified, history)
}

fn finish(
    mut pre: Prefixes<'_>,
    checkpoints: &[(usize, f64)],
    target: u64,
    certified: bool,
    history: Vec<TraceEntry>,
) -> Result<SynthOutcome> {
    let profile = pre.profile(checkpoints, target)?;
    let rank = match profile.last() {
        Some(p) if certified && p.s == target => p.rank,
        _ => {
            // best checkpoint prefix, shortest among ties
            let best = checkpoints.iter().fold(None::<(usize, f64)>, |b, &(m, mu)| match b {
                Some((_, bm)) if bm <= mu => b,
                _ => Some((m, mu)),
            });
            best.map_or(0, |b| b.0)
        }
    };
    if rank == 0 || rank > pre.order.len() {
        return Err(Error::Degenerate("no rows were selected".into()));
    }
    let certificate = pre.get(rank)?.clone();
    let rows = pre.order[..rank].to_vec();
    let certified = certified && certificate.s_max.covers(target);
    Ok(SynthOutcome {
        rows,
        certificate,
        certified,
        profile,
        history,
        order: pre.order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goodness::residual;
    use crate::hadamard::{build_hadamard, hadamard_certificate};

    fn h(nu: u32) -> (Matrix, Matrix) {
        let h = build_hadamard(nu).unwrap();
        (hadamard_certificate(&h), h.into_matrix())
    }

    #[test]
    fn policy_names() {
        assert_eq!("blind".parse::<SynthPolicy>().unwrap(), SynthPolicy::Blind);
        assert_eq!(
            "aprime".parse::<SynthPolicy>().unwrap(),
            SynthPolicy::Greedy(Policy::APrime)
        );
        assert!("random".parse::<SynthPolicy>().is_err());
    }

    #[test]
    fn weighted_order_is_a_permutation_of_active_rows() {
        let pi = [0.5, 0.0, 0.25, 0.25];
        let mut rng = RandomSource::new(5, 0);
        let mut o = draw_order(&pi, &[0, 2, 3], &mut rng);
        o.sort_unstable();
        assert_eq!(o, vec![0, 2, 3]);
        // heavier rows come first more often
        let mut first = [0usize; 4];
        for _ in 0..2000 {
            first[draw_order(&pi, &[0, 2, 3], &mut rng)[0]] += 1;
        }
        assert!((first[0] as f64 / 2000.0 - 0.5).abs() < 0.05, "{first:?}");
    }

    #[test]
    fn blind_refined_certifies_and_profile_is_tight() {
        let (y, a) = h(4);
        let mut cfg = SynthConfig::new(SynthPolicy::Blind, 2, 16);
        cfg.shortcut = true;
        cfg.refine_every = 3;
        let out = synthesize(&y, &a, &cfg, &mut RandomSource::new(1, 0)).unwrap();
        assert!(out.certified);
        assert_eq!(out.profile.len(), 2);
        let sub = a.select_rows(&out.rows);
        assert!((residual(&out.certificate.witness, &sub).unwrap() - out.certificate.mu).abs() <= 1e-10);
        assert!(out.certificate.mu < 0.25);
        assert_eq!(out.rows.len(), out.profile[1].rank);
        // one row shorter is not certified
        for p in &out.profile {
            if p.rank > 1 {
                let shorter = a.select_rows(&out.order[..p.rank - 1]);
                let c = Certifier::new(1e-8, true).certify(&shorter).unwrap();
                assert!(!c.s_max.covers(p.s), "s={} rank={}", p.s, p.rank);
            }
        }
        // every=1 finds the same profile
        cfg.refine_every = 1;
        let again = synthesize(&y, &a, &cfg, &mut RandomSource::new(1, 0)).unwrap();
        assert_eq!(again.profile, out.profile);
        assert_eq!(again.rows, out.rows);
    }

    #[test]
    fn blind_plain_uses_the_sample_average() {
        let (y, a) = h(3);
        let mut cfg = SynthConfig::new(SynthPolicy::Blind, 1, 200);
        cfg.refine_every = 0;
        let out = synthesize(&y, &a, &cfg, &mut RandomSource::new(2, 0)).unwrap();
        let sub = a.select_rows(&out.rows);
        assert!((residual(&out.certificate.witness, &sub).unwrap() - out.certificate.mu).abs() <= 1e-12);
        assert_eq!(out.certified, out.certificate.mu < 0.5);
        assert_eq!(out.history.last().unwrap().mu, out.certificate.mu);
    }

    #[test]
    fn active_run_certifies_target() {
        let (y, a) = h(3);
        let mut cfg = SynthConfig::new(SynthPolicy::Greedy(Policy::A), 1, 64);
        cfg.shortcut = true;
        let out = synthesize(&y, &a, &cfg, &mut RandomSource::new(1, 0)).unwrap();
        assert!(out.certified);
        assert!(out.certificate.mu < 0.5);
        assert_eq!(
            out.profile,
            vec![ProfileEntry {
                s: 1,
                rank: out.rows.len()
            }]
        );
        assert!(out.history.iter().all(|h| h.beta.is_some()));
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let (y, a) = h(4);
        let mut cfg = SynthConfig::new(SynthPolicy::Blind, 8, 3);
        cfg.shortcut = true;
        let out = synthesize(&y, &a, &cfg, &mut RandomSource::new(1, 0)).unwrap();
        assert!(!out.certified);
        assert!(out.rows.len() <= 3);
    }

    #[test]
    fn deterministic() {
        let (y, a) = h(4);
        let mut cfg = SynthConfig::new(SynthPolicy::Greedy(Policy::APrime), 2, 128);
        cfg.shortcut = true;
        let x = synthesize(&y, &a, &cfg, &mut RandomSource::new(9, 0)).unwrap();
        let z = synthesize(&y, &a, &cfg, &mut RandomSource::new(9, 0)).unwrap();
        assert_eq!(x.rows, z.rows);
        assert_eq!(x.history, z.history);
        assert_eq!(x.certificate.mu.to_bits(), z.certificate.mu.to_bits());
    }
}
