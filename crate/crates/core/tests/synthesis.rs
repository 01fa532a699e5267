mod common;

use common::{demo, mat, rng, vec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use regret_sls::lifted::{lift, LtvParts, LtvSystem};
use regret_sls::linalg;
use regret_sls::regret::StealthSpec;
use regret_sls::sdp::SdpOptions;
use regret_sls::sls::{closed_loop_maps, SparsityPattern, TopologyMask};
use regret_sls::synthesis::{
    self, fixed_lambda_synthesis, fixed_lambda_trace, hinf_level, hinf_synthesis, propagate_sparsity,
    rank1_lift_check, shor_fixed_lambda, shor_relax, shor_relax_sdp, synthesize, LiftingMode, Strategy,
    SynthesisContext, SynthesisOptions,
};

fn ctx_for(lifted: &regret_sls::LiftedSystemF64, alpha: f64) -> SynthesisContext<f64> {
    SynthesisContext::new(lifted, StealthSpec::new(alpha).unwrap(), None, SynthesisOptions::default()).unwrap()
}

#[test]
fn rank1_lift_accepts_outer_products() {
    let mut r = rng(1);
    for _ in 0..100 {
        let n = r.gen_range(1..8);
        let a = vec(&mut r, n, 2.0);
        let s = &a * a.transpose();
        assert!(rank1_lift_check(&s, &a));
    }
}

#[test]
fn rank1_lift_rejects_rank_two_perturbations() {
    let mut r = rng(2);
    for _ in 0..100 {
        let n = r.gen_range(2..8);
        let a = vec(&mut r, n, 2.0);
        let v = vec(&mut r, n, 1.0).normalize();
        let eps = 10f64.powf(r.gen_range(-3.0..0.0));
        let s = &a * a.transpose() + &v * v.transpose() * eps;
        assert!(!rank1_lift_check(&s, &a), "eps {eps}");
    }
}

#[test]
fn rank1_lift_rejects_identity() {
    let mut e1 = DVector::zeros(4);
    e1[0] = 1.0;
    assert!(!rank1_lift_check(&DMatrix::identity(4, 4), &e1));
    // A scaled outer product is rank one but not a lifting of a.
    let s = &e1 * e1.transpose() * 2.0;
    assert!(!rank1_lift_check(&s, &e1));
    assert!(!rank1_lift_check(&DMatrix::zeros(3, 3), &e1));
}

#[test]
fn sparsity_propagation_counts() {
    let p = propagate_sparsity(&[3], 5);
    assert_eq!(p.vec_entries, vec![3]);
    assert_eq!(p.diagonal_count(), 1);
    assert_eq!(p.x_entries.len() - p.diagonal_count(), 8);
    assert!(p.x_entries.iter().all(|&(i, j)| i == 3 || j == 3));

    let empty = propagate_sparsity(&[], 5);
    assert!(empty.x_entries.is_empty() && empty.vec_entries.is_empty());

    let two = propagate_sparsity(&[0, 4, 9], 5);
    assert_eq!(two.vec_entries, vec![0, 4]);
    assert_eq!(two.x_entries.len(), 25 - 9);
}

#[test]
fn hinf_level_of_fixed_maps_is_top_eigenvalue() {
    let mut r = rng(3);
    for _ in 0..10 {
        let na = r.gen_range(1..6);
        let (nz, nu) = (r.gen_range(1..5), r.gen_range(1..5));
        let psi = mat(&mut r, nz, na, 1.0);
        let phu = mat(&mut r, nu, na, 1.0);
        let want = linalg::max_eigenvalue(&(psi.transpose() * &psi + phu.transpose() * &phu));
        let tight = SdpOptions {
            tol_gap: 1e-12,
            tol_abs: 1e-12,
            tol_feas: 1e-12,
            ..SdpOptions::default()
        };
        let got = hinf_level(&psi, &phu, &tight).unwrap();
        assert!((got - want).abs() <= 1e-8 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn hinf_certificate_matches_program_level() {
    let (_, lifted) = demo(2);
    let ctx = ctx_for(&lifted, 0.1);
    let h = hinf_synthesis(&ctx).unwrap();
    let maps = closed_loop_maps(&h.omega, &lifted).unwrap();
    let level = hinf_level(&maps.psi, &maps.phi_u, &SdpOptions::default()).unwrap();
    assert!((level - h.lambda).abs() <= 1e-5 * h.lambda, "{level} vs {}", h.lambda);
    let c = &h.certificate;
    assert!((c.mu - c.lambda * 0.1).abs() <= 1e-9 * c.mu.max(1e-9));
    assert!(c.slack_min_eig >= -1e-8);
}

#[test]
fn relaxation_bound_sits_at_floor() {
    let (_, lifted) = demo(2);
    let ctx = ctx_for(&lifted, 0.1);
    let s = shor_relax(&ctx).unwrap();
    assert!((s.lower_bound - 1e-8 * 0.1).abs() < 1e-20);
    assert!(s.min_relative_eig >= -1e-9);
    // Numerical check of the same relaxation at a moderate floor.
    let (obj, lv) = shor_relax_sdp(&ctx, 1e-2).unwrap();
    assert!((obj - 1e-2 * 0.1).abs() <= 1e-6, "{obj}");
    let (l, li) = lv.lambda_pair.unwrap();
    assert!(l >= 1e-2 * (1.0 - 1e-6) && li > 0.0);
}

#[test]
fn huge_lambda_is_feasible() {
    let (_, lifted) = demo(2);
    let ctx = ctx_for(&lifted, 0.1);
    let r = shor_fixed_lambda(&ctx, 1e6).unwrap();
    assert!(r.certificate.mu.is_finite());
    assert!(r.certificate.mu >= -1e-9);
}

#[test]
fn irm_reaches_rank_one_and_certifies_lambda() {
    let (_, lifted) = demo(2);
    let ctx = ctx_for(&lifted, 0.1);
    let h = hinf_synthesis(&ctx).unwrap();
    let lambda = 0.7 * h.certificate.lambda;
    let r = fixed_lambda_synthesis(&ctx, lambda).unwrap();
    assert!(r.rank_one, "log {:?}", r.irm_log);
    assert!(*r.irm_log.last().unwrap() <= 1e-6);
    let lv = r.lifted.as_ref().unwrap();
    let rec = lv.reconstruct_phi();
    let err = (&rec - &lv.vec_phi).norm() / lv.vec_phi.norm().max(1.0);
    assert!(err <= 1e-4, "reconstruction error {err}");
    // A rank-one lifting certifies the fixed level.
    assert!(r.certificate.mu <= lambda * 0.1 * (1.0 + 1e-4), "{} vs {}", r.certificate.mu, lambda * 0.1);
    assert!(r.certificate.mu < h.certificate.mu);
}

#[test]
fn zero_elimination_keeps_the_relaxed_objective() {
    let (_, lifted) = demo(2);
    let d = lifted.dims;
    // Each input may only read the first sensor.
    let mut l = SparsityPattern::full(d.m_u, d.p_y);
    for i in 0..d.m_u {
        for j in 1..d.p_y {
            l.allowed[i * d.p_y + j] = false;
        }
    }
    let mask = TopologyMask {
        l: Some(l),
        ..Default::default()
    };
    let spec = StealthSpec::new(0.1).unwrap();
    let with = SynthesisContext::new(&lifted, spec, Some(&mask), SynthesisOptions::default()).unwrap();
    let without = SynthesisContext::new(
        &lifted,
        spec,
        Some(&mask),
        SynthesisOptions {
            eliminate_zeros: false,
            ..SynthesisOptions::default()
        },
    )
    .unwrap();
    assert!(!with.layout.zeros.is_empty());
    assert!(with.layout.total_vars() < without.layout.total_vars());
    let lambda = hinf_synthesis(&with).unwrap().certificate.lambda * 0.5;
    let (a, _) = fixed_lambda_trace(&with, lambda).unwrap();
    let (b, lv) = fixed_lambda_trace(&without, lambda).unwrap();
    assert!((a - b).abs() <= 1e-7 * a.abs().max(1.0), "{a} vs {b}");
    // The eliminated entries vanish anyway.
    for &z in &with.layout.zeros {
        assert!(lv.x[(z, z)].abs() <= 1e-6);
    }
}

#[test]
fn chordal_and_full_liftings_agree() {
    let (_, lifted) = demo(2);
    let spec = StealthSpec::new(0.1).unwrap();
    let chordal = SynthesisContext::new(&lifted, spec, None, SynthesisOptions::default()).unwrap();
    let full = SynthesisContext::new(
        &lifted,
        spec,
        None,
        SynthesisOptions {
            lifting: LiftingMode::Full,
            ..SynthesisOptions::default()
        },
    )
    .unwrap();
    let lambda = hinf_synthesis(&chordal).unwrap().certificate.lambda * 0.5;
    let (a, _) = fixed_lambda_trace(&chordal, lambda).unwrap();
    let (b, _) = fixed_lambda_trace(&full, lambda).unwrap();
    assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
}

fn regulation_free_plant(seed: u64) -> LtvSystem<f64> {
    let mut r = rng(seed);
    let t = 2;
    let (n, mu, ma, py, pz) = (2, 1, 1, 1, 1);
    let seq = |r: &mut rand_chacha::ChaCha8Rng, len: usize, a: usize, b: usize| {
        (0..len).map(|_| mat(r, a, b, 1.0)).collect::<Vec<_>>()
    };
    LtvSystem::new(LtvParts {
        a: seq(&mut r, t, n, n),
        bu: seq(&mut r, t, n, mu),
        ba: seq(&mut r, t, n, ma),
        cy: seq(&mut r, t + 1, py, n),
        cz: vec![DMatrix::zeros(pz, n); t + 1],
        dya: seq(&mut r, t + 1, py, ma),
        dzu: vec![DMatrix::zeros(pz, mu); t + 1],
    })
    .unwrap()
}

#[test]
fn plant_without_regulated_output_has_zero_regret() {
    let lifted = lift(&regulation_free_plant(4));
    let ctx = ctx_for(&lifted, 0.1);
    for s in [Strategy::Hinf, Strategy::FixedLambdaIRM, Strategy::ShorPlusEval] {
        let r = synthesize(&ctx, s).unwrap();
        assert!(r.mu().abs() <= 1e-9, "{s}: {}", r.mu());
        assert!(r.gain.amax() <= 1e-6, "{s}: gain {}", r.gain.amax());
    }
}

#[test]
fn strategies_are_ordered_on_short_demo() {
    let (_, lifted) = demo(2);
    let ctx = ctx_for(&lifted, 0.1);
    let h = synthesize(&ctx, Strategy::Hinf).unwrap();
    let irm = synthesize(&ctx, Strategy::FixedLambdaIRM).unwrap();
    let sh = synthesize(&ctx, Strategy::ShorPlusEval).unwrap();
    let bound = irm.shor_lower_bound;
    let slack = 1e-6 * h.mu();
    assert!(bound <= irm.mu() + slack);
    assert!(bound <= sh.mu() + slack);
    assert!(irm.mu() <= h.mu() + slack, "irm {} hinf {}", irm.mu(), h.mu());
    assert!(sh.mu() <= h.mu() + slack, "shor {} hinf {}", sh.mu(), h.mu());
    assert!(irm.rank_one);
    assert!(!irm.evaluations.is_empty());
    // Every reported number is the certified one.
    for r in [&h, &irm, &sh] {
        assert_eq!(r.mu(), r.certificate.mu);
        assert!(r.certificate.slack_min_eig >= -1e-7 * r.certificate.lambda.max(1.0));
    }
}

#[test]
fn joint_program_returns_certified_controller() {
    let (_, lifted) = demo(2);
    let ctx = ctx_for(&lifted, 0.1);
    let h = hinf_synthesis(&ctx).unwrap();
    let j = synthesis::joint_synthesis(&ctx).unwrap();
    assert!(j.mu().is_finite());
    assert!(j.mu() <= h.mu() * (1.0 + 1e-4), "{} vs {}", j.mu(), h.mu());
    assert!(!j.irm_log.is_empty());
    assert!(j.lifted.as_ref().unwrap().lambda_pair.is_some());
}

#[test]
fn synthesis_rejects_bad_lambda() {
    let (_, lifted) = demo(2);
    let ctx = ctx_for(&lifted, 0.1);
    assert!(fixed_lambda_synthesis(&ctx, 0.0).is_err());
    assert!(fixed_lambda_synthesis(&ctx, -1.0).is_err());
}

#[test]
fn strategy_names_round_trip() {
    for s in [Strategy::Hinf, Strategy::FixedLambdaIRM, Strategy::ShorPlusEval] {
        let parsed: Strategy = s.name().parse().unwrap();
        assert_eq!(parsed, s);
        assert_eq!(s.to_string(), s.name());
    }
    assert!("nonsense".parse::<Strategy>().is_err());
}
