mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use regret_sls::lifted::{lift, LtvSystem};
use regret_sls::regret::*;
use regret_sls::sls::{self, open_loop_response, response_from_gain};
use regret_sls::Error;

fn spec(a: f64) -> StealthSpec<f64> {
    StealthSpec::new(a).unwrap()
}

#[test]
fn zero_budget_rejected() {
    assert!(StealthSpec::<f64>::new(0.0).is_err());
    assert!(StealthSpec::<f64>::new(-1.0).is_err());
    assert!(StealthSpec::<f64>::new(f64::NAN).is_err());
    assert!(StealthSpec::<f64>::new(ALPHA_FLOOR).is_ok());
}

#[test]
fn no_regulated_output_means_no_regret() {
    let mut r = rng(40);
    let sys = random_system(&mut r, 2, 2, 1, 1, 2, 1);
    let mut p = sys.to_parts();
    for m in p.cz.iter_mut().chain(p.dzu.iter_mut()) {
        m.fill(0.0);
    }
    let l = lift(&LtvSystem::new(p).unwrap());
    let cert = regret_metric(&open_loop_response(&l), &l, &spec(0.1)).unwrap();
    assert_eq!(cert.lambda, 0.0);
    assert_eq!(cert.mu, 0.0);
    assert_eq!(cert.attack.as_ref().unwrap().amax(), 0.0);
    assert_eq!(cert.achieved_regret, 0.0);
}

#[test]
fn diagonal_closed_form() {
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5, 1.0]));
    let w = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.4, -3.0]));
    let k = RegretKernels { g, w };
    let alpha = 0.1;
    let cert = regret_from_kernels(&k, &spec(alpha)).unwrap();
    let want = alpha * (0.4f64 / 0.5);
    assert!((cert.mu - want).abs() <= 1e-8);
    let a = cert.attack.unwrap();
    let expect = (alpha / 0.5f64).sqrt();
    assert!((a[1] - expect).abs() <= 1e-6 && a[0].abs() <= 1e-6 && a[2].abs() <= 1e-6, "{a}");
    assert!((qcqp_oracle(&k, &spec(alpha)).unwrap() - want).abs() <= 1e-12);
}

#[test]
fn oracle_trivial_cases() {
    let mut r = rng(41);
    let m = mat(&mut r, 5, 5, 1.0);
    let g = &m * m.transpose() + DMatrix::identity(5, 5);
    let k = RegretKernels { g: g.clone(), w: -&g };
    assert_eq!(qcqp_oracle(&k, &spec(0.3)).unwrap(), 0.0);
    let k = RegretKernels { g: g.clone(), w: g };
    assert!((qcqp_oracle(&k, &spec(0.3)).unwrap() - 0.3).abs() <= 1e-12);
    let big = RegretKernels {
        g: DMatrix::identity(41, 41),
        w: DMatrix::identity(41, 41),
    };
    assert!(matches!(qcqp_oracle(&big, &spec(0.1)), Err(Error::DimensionGuard { .. })));
}

#[test]
fn oracle_dominates_rejection_sampling() {
    let mut r = rng(42);
    let m = mat(&mut r, 8, 8, 1.0);
    let g = &m * m.transpose() + DMatrix::identity(8, 8) * 0.5;
    let wm = mat(&mut r, 8, 8, 1.0);
    let w = &wm + wm.transpose();
    let k = RegretKernels { g: g.clone(), w: w.clone() };
    let alpha = 0.1;
    let oracle = qcqp_oracle(&k, &spec(alpha)).unwrap();
    let l = g.cholesky().unwrap().l();
    let mut best = f64::NEG_INFINITY;
    for _ in 0..1_000_000 {
        let u: DVector<f64> = DVector::from_fn(8, |_, _| StandardNormal.sample(&mut r));
        let u = &u * (alpha.sqrt() / u.norm());
        let a = l.transpose().solve_upper_triangular(&u).unwrap();
        best = best.max((a.transpose() * &w * &a)[(0, 0)]);
    }
    assert!(best <= oracle * (1.0 + 1e-12));
    assert!(best >= 0.95 * oracle, "{best} vs {oracle}");
}

#[test]
fn strong_duality_on_random_instances() {
    let mut r = rng(43);
    for case in 0..50 {
        let n = 1 + case % 2;
        let t = 1 + case % 3;
        let sys = random_system(&mut r, t, n, 1, 1, n + 1, 1 + case % 2);
        let l = lift(&sys);
        let k = random_causal_gain(&mut r, &l, 0.5);
        let om = response_from_gain(&k, &l).unwrap();
        let s = spec(r.gen_range(0.05..2.0));
        let cert = regret_metric(&om, &l, &s).unwrap();
        let oracle = qcqp_oracle_for(&om, &l, &s).unwrap();
        assert!((cert.mu - oracle).abs() <= 1e-5 * oracle.max(1.0), "case {case}: {} vs {oracle}", cert.mu);
    }
}

#[test]
fn attack_is_budget_tight_and_attains_regret() {
    let mut r = rng(44);
    for case in 0..20 {
        let sys = random_system(&mut r, 2, 2, 1, 1, 3, 2);
        let l = lift(&sys);
        let k = random_causal_gain(&mut r, &l, 0.5);
        let om = response_from_gain(&k, &l).unwrap();
        let s = spec(0.1);
        let cert = regret_metric(&om, &l, &s).unwrap();
        assert!(cert.slack_min_eig >= -1e-6);
        if cert.lambda > 0.0 {
            assert!((cert.stealth - 0.1).abs() <= 1e-6, "case {case}");
            assert!((cert.achieved_regret - cert.mu).abs() <= 1e-4 * cert.mu.max(1.0), "case {case}");
            let a = cert.attack.as_ref().unwrap();
            let first = a.iter().find(|v| v.abs() > 1e-12 * a.amax()).unwrap();
            assert!(*first > 0.0);
        }
    }
}

#[test]
fn sampled_stealthy_attacks_respect_the_bound() {
    let mut r = rng(45);
    let sys = random_system(&mut r, 2, 2, 1, 1, 3, 2);
    let l = lift(&sys);
    let k = random_causal_gain(&mut r, &l, 0.5);
    let om = response_from_gain(&k, &l).unwrap();
    let s = spec(0.1);
    let cert = regret_metric(&om, &l, &s).unwrap();
    let maps = sls::closed_loop_maps(&om, &l).unwrap();
    let clair = sls::clairvoyant(&l);
    for _ in 0..1000 {
        let mut a = vec(&mut r, l.na(), 1.0);
        let st = maps.stealth(&a);
        a *= (0.1 * r.gen::<f64>() / st).sqrt();
        let regret = maps.cost(&a) - clair.optimal_cost(&a);
        assert!(regret <= cert.mu + 1e-6);
    }
}

#[test]
fn larger_budget_never_lowers_regret() {
    let mut r = rng(46);
    let sys = random_system(&mut r, 2, 2, 1, 1, 2, 2);
    let l = lift(&sys);
    let om = response_from_gain(&random_causal_gain(&mut r, &l, 0.5), &l).unwrap();
    let mut prev = 0.0;
    for alpha in [0.01, 0.05, 0.1, 0.5, 1.0, 3.0] {
        let mu = regret_metric(&om, &l, &spec(alpha)).unwrap().mu;
        assert!(mu >= prev - 1e-9);
        prev = mu;
    }
}

#[test]
fn undetectable_direction_gives_unbounded_regret() {
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
    let w = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0]));
    let k = RegretKernels { g, w };
    assert!(matches!(regret_from_kernels(&k, &spec(0.1)), Err(Error::UnboundedRegret)));
}

#[test]
fn degenerate_gram_falls_back_to_generalized_problem() {
    // The top direction of W is invisible in G only up to a tiny component.
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-3]));
    let w = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 1e-3]));
    let k = RegretKernels { g, w };
    let cert = regret_from_kernels(&k, &spec(0.1)).unwrap();
    assert!((cert.mu - 0.1).abs() <= 1e-6, "{}", cert.mu);
    assert!((cert.stealth - 0.1).abs() <= 1e-6);
}

#[test]
fn non_achievable_response_rejected() {
    let (_, l) = demo(2);
    let mut om = open_loop_response(&l);
    om.l[(0, 0)] = 0.0;
    om.n[(l.nx() - 1, 0)] = 1.0;
    assert!(matches!(
        regret_metric(&om, &l, &spec(0.1)),
        Err(Error::NotAchievable { .. })
    ));
}
