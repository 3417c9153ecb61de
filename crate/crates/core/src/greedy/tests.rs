use super::*;
use crate::hadamard::{build_hadamard, hadamard_certificate};
use crate::potential::ScheduleKind;

fn hadamard_ensemble(nu: u32) -> RowEnsemble {
    let h = build_hadamard(nu).unwrap();
    build_ensemble(&hadamard_certificate(&h), h.matrix()).unwrap()
}

fn random_ensemble(n: usize, seed: u64) -> RowEnsemble {
    let mut rng = RandomSource::new(seed, 0);
    let a = Matrix::gaussian(n, n, &mut rng);
    let y = Matrix::gaussian(n, n, &mut rng).scaled(0.3);
    build_ensemble(&y, &a).unwrap()
}

fn fixed(e: &RowEnsemble, horizon: usize) -> BetaSchedule {
    BetaSchedule::new(ScheduleKind::Fixed, e.l(), e.n() * e.n(), Some(horizon)).unwrap()
}

fn closed(e: &RowEnsemble) -> BetaSchedule {
    BetaSchedule::new(ScheduleKind::Closed, e.l(), e.n() * e.n(), None).unwrap()
}

const BOUND_32: f64 = 1.1013662;

#[test]
fn first_step_takes_lowest_active_row() {
    let e = hadamard_ensemble(3);
    let g = Greedy::new(&e, 1e-8).unwrap();
    let mut st = g.init(fixed(&e, 32)).unwrap();
    assert_eq!(g.step_policy_a(&mut st).unwrap().pick, 0);
    let mut st = g.init(fixed(&e, 32)).unwrap();
    let mut rng = RandomSource::new(3, 0);
    let first = e.draw(&mut RandomSource::new(3, 0));
    assert_eq!(g.step_policy_a_prime(&mut st, &mut rng, 10).unwrap().pick, first);
}

fn run_policy(policy: Policy, nu: u32, k: usize) -> GreedyState {
    let e = hadamard_ensemble(nu);
    let g = Greedy::new(&e, 1e-8).unwrap();
    let mut st = g.init(fixed(&e, k)).unwrap();
    let mut rng = RandomSource::new(1, 0);
    for _ in 0..k {
        let r = g
            .step(&mut st, policy, Some(&mut rng), 1000)
            .unwrap_or_else(|e| panic!("{policy:?}: {e:?}"));
        assert!(r.delta <= r.allowance + CONDITION_SLACK, "{policy:?} {r:?}");
    }
    st
}

#[test]
fn fixed_schedule_bound_on_h3() {
    let e = hadamard_ensemble(3);
    for policy in [Policy::A, Policy::ABest, Policy::APrime, Policy::B, Policy::C] {
        let st = run_policy(policy, 3, 32);
        let mu = st
            .approximation(e.target())
            .unwrap()
            .uniform_distance(&Matrix::identity(8))
            .unwrap();
        assert!(mu <= BOUND_32, "{policy:?}: {mu}");
        assert!(crate::matrix::uniform_norm(st.s()) <= st.norm_bound() + 1e-9);
        assert!(st.deltasum() <= st.allowance_sum() + 32.0 * CONDITION_SLACK);
    }
}

#[test]
fn state_reconstructs_from_picks() {
    for policy in [Policy::A, Policy::B, Policy::C] {
        let e = random_ensemble(6, 5);
        let g = Greedy::new(&e, 1e-8).unwrap();
        let mut st = g.init(closed(&e)).unwrap();
        for _ in 0..20 {
            g.step(&mut st, policy, None, 0).unwrap();
        }
        let diff = st.recompute_sum(&e).uniform_distance(st.s()).unwrap();
        assert!(diff <= 1e-8, "{policy:?}: {diff}");
    }
}

#[test]
fn condition_holds_on_general_ensembles() {
    for seed in 0..4 {
        let e = random_ensemble(5, seed);
        let g = Greedy::new(&e, 1e-8).unwrap();
        for policy in [Policy::A, Policy::ABest, Policy::B, Policy::C] {
            for sched in [closed(&e), fixed(&e, 15)] {
                let mut st = g.init(sched).unwrap();
                for _ in 0..15 {
                    let r = g.step(&mut st, policy, None, 0).unwrap();
                    assert!(r.delta <= r.allowance + CONDITION_SLACK);
                }
            }
        }
    }
}

#[test]
fn linesearch_exact_cancellation() {
    let e = hadamard_ensemble(2);
    let g = Greedy::new(&e, 1e-10).unwrap();
    let mut st = g.init(closed(&e)).unwrap();
    // S_k − W = −z_1 a_1ᵀ
    let mut s = e.target().clone();
    s.add_outer(-1.0, e.z(1), e.a(1));
    st.s = s;
    let (t, v) = g.linesearch_rank1(&st, 1);
    assert!((t - 1.0).abs() <= 1e-8, "{t}");
    assert!(v.abs() <= 1e-8, "{v}");
    // S_k = W: the move only grows the argument
    st.s = e.target().clone();
    let (t, v) = g.linesearch_rank1(&st, 2);
    assert_eq!(t, 0.0);
    assert!(v.abs() <= 1e-12);
}

#[test]
fn linesearch_beats_grid() {
    let e = random_ensemble(5, 9);
    let g = Greedy::new(&e, 1e-10).unwrap();
    let mut st = g.init(closed(&e)).unwrap();
    for _ in 0..3 {
        g.step_policy_a(&mut st).unwrap();
    }
    for i in 0..5 {
        let (t, v) = g.linesearch_rank1(&st, i);
        assert!(t >= 0.0);
        for k in 0..=20 {
            let tt = 4.0 * k as f64 / 20.0;
            let mut x = st.s().sub(e.target()).unwrap();
            x.add_outer(tt, e.z(i), e.a(i));
            assert!(v <= smooth_max(x.as_slice(), st.beta()) + 1e-10);
        }
    }
}

#[test]
fn row_solve_examples() {
    let e = hadamard_ensemble(2);
    let g = Greedy::new(&e, 1e-10).unwrap();
    let mut st = g.init(closed(&e)).unwrap();
    st.s = e.target().clone();
    let (u, _) = g.solve_policy_c_row(&st, e.a(3)).unwrap();
    assert!(u.iter().all(|v| v.abs() <= 1e-12), "{u:?}");
    assert!(g.solve_policy_c_row(&st, &[0.0; 4]).is_err());
}

#[test]
fn row_solve_is_stationary() {
    let e = random_ensemble(5, 2);
    let g = Greedy::new(&e, 1e-10).unwrap();
    let mut st = g.init(closed(&e)).unwrap();
    for _ in 0..4 {
        g.step_policy_b(&mut st).unwrap();
    }
    for i in 0..5 {
        let (u, v) = g.solve_policy_c_row(&st, e.a(i)).unwrap();
        let mut x = st.s().sub(e.target()).unwrap();
        x.add_outer(1.0, &u, e.a(i));
        let mut grad = vec![0.0; 25];
        let exact = smooth_max_grad(x.as_slice(), st.beta(), &mut grad);
        assert!((exact - v).abs() <= 1e-10);
        let gm = Matrix::new(5, 5, grad).unwrap();
        let contracted = gm.mul_vec(e.a(i));
        assert!(contracted.iter().all(|c| c.abs() <= 1e-10), "{contracted:?}");
    }
}

#[test]
fn policy_values_nest() {
    // fixed schedule: β_{k+1} = β_k, so all three optimize the same function
    for seed in 0..3 {
        let e = random_ensemble(5, 20 + seed);
        let g = Greedy::new(&e, 1e-10).unwrap();
        let mut st = g.init(fixed(&e, 10)).unwrap();
        for _ in 0..5 {
            let va = g.step_policy_a_best(&mut st.clone()).unwrap().value.unwrap();
            let vb = g.step_policy_b(&mut st.clone()).unwrap().value.unwrap();
            let vc = g.step_policy_c(&mut st.clone()).unwrap().value.unwrap();
            assert!(vb <= va + 1e-9 && vc <= vb + 1e-9, "{va} {vb} {vc}");
            g.step_policy_a(&mut st).unwrap();
        }
    }
}

#[test]
fn candidate_values_match_direct_evaluation() {
    let e = random_ensemble(6, 4);
    let g = Greedy::new(&e, 1e-10).unwrap();
    let mut st = g.init(fixed(&e, 8)).unwrap();
    for _ in 0..4 {
        let mut probe = st.clone();
        let r = g.step_policy_a_best(&mut probe).unwrap();
        assert!((r.value.unwrap() - probe.value()).abs() <= 1e-9);
        let mut probe = st.clone();
        let r = g.step_policy_c(&mut probe).unwrap();
        assert!((r.value.unwrap() - probe.value()).abs() <= 1e-9);
        g.step_policy_b(&mut st).unwrap();
    }
}

#[test]
fn reruns_are_identical() {
    for policy in [Policy::APrime, Policy::B, Policy::C] {
        let a = run_policy(policy, 3, 12);
        let b = run_policy(policy, 3, 12);
        assert_eq!(a.picks(), b.picks());
    }
}

#[test]
fn joint_step_dominates_start_and_descends() {
    let e = hadamard_ensemble(3);
    let g = Greedy::new(&e, 1e-8).unwrap();
    let mut st = g.init(closed(&e)).unwrap();
    for _ in 0..3 {
        g.step_policy_b(&mut st).unwrap();
    }
    let beta_ref = st.schedule().next_after(st.beta(), st.k() + 1);
    for i in 0..8 {
        let start = g.joint_objective(&st, i, 1.0, beta_ref);
        let (_, b, obj, trace) = g.joint_minimize(&st, i, beta_ref);
        assert!(obj <= start + 1e-12);
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{trace:?}");
        assert!(b >= g.joint_beta_floor());
    }
    g.step_joint_beta(&mut st).unwrap();
    assert_eq!(st.k(), 4);
}

#[test]
fn run_stops_at_target() {
    let h = build_hadamard(3).unwrap();
    let y = hadamard_certificate(&h);
    let mut cfg = GreedyConfig::new(Policy::A, 64);
    cfg.target_s = Some(1);
    let out = run_derandomized(&y, h.matrix(), &cfg, None).unwrap();
    assert!(out.certified);
    let last = out.history.last().unwrap();
    assert!(last.mu < 0.5);
    assert!(out.history[..out.history.len() - 1].iter().all(|h| h.mu >= 0.5));
    assert!(
        out.certificate
            .residual(&h.matrix().select_rows(&out.rows[..out.cert_rank]))
            .unwrap()
            <= last.mu + 1e-12
    );
}

#[test]
fn run_with_refinement_certifies() {
    let h = build_hadamard(4).unwrap();
    let y = hadamard_certificate(&h);
    let mut cfg = GreedyConfig::new(Policy::APrime, 200);
    cfg.schedule = ScheduleKind::Closed;
    cfg.target_s = Some(2);
    cfg.refine_every = 1;
    cfg.shortcut = true;
    let mut rng = RandomSource::new(7, 0);
    let out = run_derandomized(&y, h.matrix(), &cfg, Some(&mut rng)).unwrap();
    assert!(out.certified);
    assert!(out.certificate.mu < 0.25);
    let am = h.matrix().select_rows(&out.rows[..out.cert_rank]);
    assert!((out.certificate.residual(&am).unwrap() - out.certificate.mu).abs() <= 1e-10);
}

#[test]
fn aprime_needs_rng() {
    let h = build_hadamard(2).unwrap();
    let cfg = GreedyConfig::new(Policy::APrime, 4);
    assert!(run_derandomized(&hadamard_certificate(&h), h.matrix(), &cfg, None).is_err());
}
