mod common;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reachkit::certify::{imb_invariance, kalman_rank, krener_chain, numerical_rank, ChainLink, RankCertificate};
use reachkit::fixtures;
use reachkit::flow::IntegratorConfig;
use reachkit::reach::{classify_point, ReachConfig, Variant, Verdict};
use reachkit::system::ControlSystem;
use reachkit::{Direction, KrenerConfig, LinearSystem};

use common::{random_invertible, random_matrix};

/// Pairs with known structure plus random ones, across ranks 0 to n.
fn linear_cases(rng: &mut ChaCha8Rng) -> Vec<LinearSystem> {
    let mut out = vec![
        fixtures::example21_linear(),
        LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 1, &[1.0, 0.0])).unwrap(),
        LinearSystem::new(DMatrix::identity(3, 3), DMatrix::zeros(3, 1)).unwrap(),
        // shift chain of length 3 driven at the end: rank 3
        LinearSystem::new(
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]),
        )
        .unwrap(),
        // block diagonal with an undriven block: rank 2 of 3
        LinearSystem::new(
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 2.0]),
            DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 0.0]),
        )
        .unwrap(),
    ];
    for n in 2..5 {
        let m = rng.random_range(1..n);
        out.push(LinearSystem::new(random_matrix(rng, n, n), random_matrix(rng, n, m)).unwrap());
    }
    out
}

#[test]
fn kalman_rank_is_basis_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for lin in linear_cases(&mut rng) {
        let n = lin.state_dim();
        let reference = kalman_rank(&lin);
        for _ in 0..20 {
            let p = random_invertible(&mut rng, n);
            let p_inv = p.clone().try_inverse().unwrap();
            let conj = LinearSystem::new(&p * lin.a() * &p_inv, &p * lin.b()).unwrap();
            assert_eq!(kalman_rank(&conj), reference, "A = {}, B = {}", lin.a(), lin.b());
        }
    }
}

#[test]
fn imb_invariance_ignores_input_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let mut cases = linear_cases(&mut rng);
    // invariant subspace: A maps span{e1, e2} into itself
    cases.push(
        LinearSystem::new(
            DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 0.2, 0.0, 0.0, 1.0]),
            DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0]),
        )
        .unwrap(),
    );
    let mut saw = [false, false];
    for lin in cases {
        let m = lin.b().ncols();
        let reference = imb_invariance(&lin);
        saw[reference as usize] = true;
        for _ in 0..20 {
            let c = random_invertible(&mut rng, m);
            let scaled = LinearSystem::new(lin.a().clone(), lin.b() * &c).unwrap();
            assert_eq!(imb_invariance(&scaled), reference, "A = {}, B = {}", lin.a(), lin.b());
        }
    }
    assert_eq!(saw, [true, true]);
}

#[test]
fn full_kalman_rank_gives_st_witness() {
    let lin = fixtures::example21_linear();
    assert_eq!(kalman_rank(&lin), (2, true));
    let sys = fixtures::example21();
    let cfg = ReachConfig::for_system(&sys, 0).with_depth(40).with_prune_cell(0.005);
    let c = classify_point(&sys, &[0.0, 0.0], &Variant::St { t: 1.0 }, &cfg, 0.05, 0.01, 0).unwrap();
    let Verdict::YesWithWitness { witnesses } = &c.verdict else { panic!("{:?}", c.verdict.name()) };
    for w in witnesses {
        assert!(w.word.total_time() <= 1.0 + 1e-9);
        let end = reachkit::flow::endpoint(&sys, &[0.0, 0.0], &w.word, &cfg.integrator).unwrap();
        assert_eq!(end, w.reached);
    }
}

/// Rebuilds the certificate's differential by central differences in the
/// link magnitudes, stepping by one integrator step.
fn fd_certificate(sys: &ControlSystem, cert: &RankCertificate, cfg: &IntegratorConfig) -> DMatrix<f64> {
    let n = cert.base_point.len();
    let k = cert.chain.len();
    let endpoint_with = |j: usize, delta: f64| {
        let chain: Vec<ChainLink> = cert
            .chain
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mut l = l.clone();
                if i == j {
                    l.time += l.time.signum() * delta;
                }
                l
            })
            .collect();
        RankCertificate { chain, ..cert.clone() }.replay(sys, cfg).unwrap()
    };
    let mut out = DMatrix::zeros(n, k);
    for j in 0..k {
        let (p, m) = (endpoint_with(j, cfg.h), endpoint_with(j, -cfg.h));
        for i in 0..n {
            out[(i, j)] = (p[i] - m[i]) / (2.0 * cfg.h);
        }
    }
    out
}

fn nonzero_points(seed: u64, count: usize) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let r = rng.random_range(0.1..2.0);
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

#[test]
fn krener_certificates_check_independently() {
    let sys = fixtures::example22();
    let cfg = KrenerConfig::for_system(&sys, 0);
    for x in nonzero_points(61, 20) {
        for direction in [Direction::Backward, Direction::Forward] {
            let cert = krener_chain(&sys, &x, direction, &cfg).unwrap();
            assert_eq!(cert.achieved_rank, 2);
            let replay = cert.replay(&sys, &cfg.integrator).unwrap();
            assert_eq!(replay, cert.endpoint);
            let fd = fd_certificate(&sys, &cert, &cfg.integrator);
            assert_eq!(numerical_rank(&fd, 1e-8), cert.achieved_rank);
            let scale = cert.differential.amax().max(1.0);
            assert!((&fd - &cert.differential).amax() <= 1e-3 * scale, "{fd} vs {}", cert.differential);
        }
    }
}

#[test]
fn krener_at_origin_starts_from_the_drift() {
    let sys = fixtures::example22();
    let cfg = KrenerConfig::for_system(&sys, 0);
    let cert = krener_chain(&sys, &[0.0, 0.0], Direction::Backward, &cfg).unwrap();
    assert_eq!(cert.achieved_rank, 2);
    // rotation and dilation vanish at the origin; only u1 moves it
    assert!(cert.chain[0].control[0] > 0.0);
    let fd = fd_certificate(&sys, &cert, &cfg.integrator);
    assert_eq!(numerical_rank(&fd, 1e-8), 2);
}
