use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ghz_detect::quantum::{
    bell_value_quantum, joint_probability, threshold_from_oracle, DenseGhz, EvalMode, MeasurementAngles,
    QuantumScenario, MAX_DENSE_PARTIES,
};

const TOL: f64 = 1e-12;

#[test]
fn dense_outcomes_follow_parity_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=6usize {
        for _ in 0..20 {
            let v: f64 = rng.gen_range(0.0..=1.0);
            let state = DenseGhz::new(n, v).unwrap();
            let phis: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let total: f64 = phis.iter().sum();
            for bits in 0..1u32 << n {
                let plus: Vec<bool> = (0..n).map(|q| bits >> q & 1 == 0).collect();
                let sign = if bits.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                let expected = (1.0 + sign * v * total.cos()) / f64::powi(2.0, n as i32);
                assert!((state.outcome_probability(&phis, &plus) - expected).abs() < TOL);
            }
        }
    }
}

#[test]
fn dense_joint_matches_closed_form_all_settings() {
    for n in 2..=6usize {
        for m in 2..=7usize {
            for v in [0.0, 0.35, 0.7, 1.0] {
                let q = QuantumScenario::new(n, m, v);
                let state = DenseGhz::new(n, v).unwrap();
                let angles = MeasurementAngles::equatorial(n, m);
                let mut settings = vec![0usize; n];
                'tuples: loop {
                    let diff = (state.joint(&angles, &settings) - joint_probability(&q, &settings)).abs();
                    assert!(diff < TOL, "n={n} m={m} v={v} {settings:?}");
                    for d in settings.iter_mut().rev() {
                        *d += 1;
                        if *d < m {
                            continue 'tuples;
                        }
                        *d = 0;
                    }
                    break;
                }
            }
        }
    }
}

#[test]
fn dense_limit_enforced() {
    assert!(DenseGhz::new(MAX_DENSE_PARTIES, 0.5).is_ok());
    assert!(DenseGhz::new(MAX_DENSE_PARTIES + 1, 0.5).is_err());
}

#[test]
fn direct_sum_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 2..=5usize {
        for m in 2..=6usize {
            for _ in 0..10 {
                let q = QuantumScenario::new(n, m, rng.gen_range(0.3..=1.0));
                let (x, y, eta) = (rng.gen_range(0.0..20.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..=1.0));
                let direct = bell_value_quantum(&q, x, y, eta, EvalMode::default()).unwrap();
                let closed = bell_value_quantum(&q, x, y, eta, EvalMode::ClosedForm).unwrap();
                assert!((direct - closed).abs() < 1e-9 * closed.abs().max(1.0), "n={n} m={m}");
            }
        }
    }
}

#[test]
fn oracle_root_matches_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 200 {
        let (n, m) = (rng.gen_range(2..=5usize), rng.gen_range(2..=6usize));
        let q = QuantumScenario::new(n, m, rng.gen_range(0.5..=1.0));
        let (x, y) = (rng.gen_range(0.0..10.0), rng.gen_range(0.0..8.0));
        let d = m as f64 * y - (1.0 - q.v) * x;
        if d <= 2.0 * n as f64 {
            continue;
        }
        let root = threshold_from_oracle(&q, x, y).unwrap();
        assert!((root - 2.0 * n as f64 / d).abs() < 1e-9);
        checked += 1;
    }
}
