//! Regenerates the frozen oracle corpus under `tests/corpus/`.
//! Run explicitly when the oracle or the case set changes:
//! `cargo test -p hypermotion --test corpus_gen -- --ignored --nocapture`

mod common;

use common::OracleCase;
use hypermotion::{oracles, Configuration, Coords, MassSystem};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn assemble_pair(sys: &MassSystem, w: &[f64; 2]) -> Vec<f64> {
    let m = sys.masses();
    let mtot = sys.total_mass();
    vec![
        m[1] / mtot * w[0],
        m[1] / mtot * w[1],
        -m[0] / mtot * w[0],
        -m[0] / mtot * w[1],
    ]
}

#[test]
#[ignore = "writes the frozen corpus; run on demand"]
fn regenerate_corpus() {
    let dir = common::corpus_dir();
    std::fs::create_dir_all(&dir).unwrap();
    let mass_sets = [
        vec![1.0, 1.0],
        vec![1.0, 2.0],
        vec![0.5, 1.5],
        vec![2.0, 3.0],
    ];
    let h_set = [0.5, 1.0, 2.0];
    let mut cases: Vec<OracleCase> = Vec::new();

    // 12 generic transfers checked by the conic-shooting oracle
    for i in 0..12u64 {
        let seed = 1000 + i;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let masses = mass_sets[i as usize % mass_sets.len()].clone();
        let h = h_set[i as usize % h_set.len()];
        let sys = MassSystem::new(masses.clone(), 2).unwrap();
        let r0 = rng.random_range(0.8..3.5);
        let th0 = rng.random_range(0.0..std::f64::consts::TAU);
        let r1 = rng.random_range(1.5..6.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let th1 = th0 + sign * rng.random_range(0.3..2.8);
        let w0 = [r0 * th0.cos(), r0 * th0.sin()];
        let w1 = [r1 * th1.cos(), r1 * th1.sin()];
        let x = assemble_pair(&sys, &w0);
        let y = assemble_pair(&sys, &w1);
        let xc = Configuration::from_flat(x.clone(), 2).unwrap();
        let yc = Configuration::from_flat(y.clone(), 2).unwrap();
        let arc = oracles::kepler_bvp_action(&sys, &xc, &yc, h).unwrap();
        cases.push(OracleCase {
            name: format!("case_{:02}_bvp", i),
            kind: "kepler_bvp".into(),
            seed,
            masses,
            dim: 2,
            h,
            x,
            y,
            oracle_value: arc.action,
            oracle_tof: Some(arc.tof),
        });
    }

    // 8 radial same-ray transfers checked by the quadrature oracle
    for i in 0..8u64 {
        let seed = 2000 + i;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let masses = mass_sets[(i as usize + 1) % mass_sets.len()].clone();
        let h = h_set[(i as usize + 2) % h_set.len()];
        let sys = MassSystem::new(masses.clone(), 2).unwrap();
        let r0 = rng.random_range(0.5..2.0);
        let r1 = rng.random_range(2.5..8.0);
        let th = rng.random_range(0.0..std::f64::consts::TAU);
        let dir = [th.cos(), th.sin()];
        let x = assemble_pair(&sys, &[r0 * dir[0], r0 * dir[1]]);
        let y = assemble_pair(&sys, &[r1 * dir[0], r1 * dir[1]]);
        let value = oracles::radial_two_body_action(&sys, r0, r1, h).unwrap();
        cases.push(OracleCase {
            name: format!("case_{:02}_radial", 12 + i),
            kind: "radial".into(),
            seed,
            masses,
            dim: 2,
            h,
            x,
            y,
            oracle_value: value,
            oracle_tof: None,
        });
    }

    for case in &cases {
        // sanity: endpoints collision-free and distinct
        let sys = case.system();
        let (x, y) = case.endpoints();
        assert!(sys.is_collision_free(&x) && sys.is_collision_free(&y));
        assert!(sys.mass_distance(x.coords(), y.coords()) > 0.1);
        // lower bound must hold for the frozen value
        let dist = sys.mass_distance(x.coords(), y.coords());
        assert!(case.oracle_value >= (2.0 * case.h).sqrt() * dist * (1.0 - 1e-12));
        std::fs::write(dir.join(format!("{}.case", case.name)), case.render()).unwrap();
    }
    println!("wrote {} cases to {}", cases.len(), dir.display());
    let _ = Coords::zeros(2, 2);
}
