#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regret_sls::lifted::{lift, spring_damper_demo_plant, DemoPlantParams, LiftedSystem, LtvParts, LtvSystem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.gen_range(-1.0..1.0))
}

pub fn vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.gen_range(-1.0..1.0))
}

/// Time-varying plant with random matrices of the given sizes.
pub fn random_system(rng: &mut ChaCha8Rng, t: usize, n: usize, m_u: usize, m_a: usize, p_y: usize, p_z: usize) -> LtvSystem<f64> {
    let seq = |rng: &mut ChaCha8Rng, len: usize, r: usize, c: usize, s: f64| (0..len).map(|_| mat(rng, r, c, s)).collect::<Vec<_>>();
    let parts = LtvParts {
        a: seq(rng, t, n, n, 0.8),
        bu: seq(rng, t, n, m_u, 1.0),
        ba: seq(rng, t, n, m_a, 1.0),
        cy: seq(rng, t + 1, p_y, n, 1.0),
        cz: seq(rng, t + 1, p_z, n, 1.0),
        dya: seq(rng, t + 1, p_y, m_a, 0.5),
        dzu: seq(rng, t + 1, p_z, m_u, 0.5),
    };
    LtvSystem::new(parts).unwrap()
}

/// Random gain supported on the causal block pattern.
pub fn random_causal_gain(rng: &mut ChaCha8Rng, lifted: &LiftedSystem<f64>, scale: f64) -> DMatrix<f64> {
    let d = lifted.dims;
    DMatrix::from_fn(lifted.nu(), lifted.ny(), |i, j| {
        if j / d.p_y.max(1) <= i / d.m_u.max(1) {
            scale * rng.gen_range(-1.0..1.0)
        } else {
            0.0
        }
    })
}

pub fn demo(t: usize) -> (LtvSystem<f64>, LiftedSystem<f64>) {
    let sys = spring_damper_demo_plant::<f64>(&DemoPlantParams {
        horizon: t,
        ..Default::default()
    })
    .unwrap();
    let lifted = lift(&sys);
    (sys, lifted)
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}
