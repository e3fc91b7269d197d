mod common;

use common::kappa_tail_oracle;
use mghs_core::selection::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, ContinuousCDF};

const TOY: [(f64, f64); 3] = [(1.5, 0.4), (0.3, -1.0), (4.0, 2.0)];

#[test]
fn documented_tail_value() {
    let got = kappa_tail_prob(1.5, 0.4, 0.5).unwrap();
    assert!((got - kappa_tail_oracle(1.5, 0.4, 0.5)).abs() < 1e-9, "{got}");
}

/// Stationary acceptance rate of the corrected threshold update. With the
/// prior as proposal and likelihood-only acceptance, `t^α` is Beta(a, b)
/// marginally, so the rate is
/// `∫∫ Beta(t) Beta(t*) Σ_z p(z|t) min(1, p(z|t*)/p(z|t)) dt dt*`.
fn acceptance_oracle(a: f64, b: f64) -> f64 {
    let nodes = 400;
    let beta = Beta::new(a, b).unwrap();
    let ts: Vec<f64> = (0..nodes).map(|i| beta.inverse_cdf((i as f64 + 0.5) / nodes as f64)).collect();
    let qs: Vec<Vec<f64>> = ts.iter().map(|&t| TOY.iter().map(|&(al, be)| kappa_tail_oracle(al, be, t)).collect()).collect();
    let lik = |q: &[f64], z: usize| -> f64 {
        (0..TOY.len()).map(|e| if z >> e & 1 == 1 { q[e] } else { 1.0 - q[e] }).product()
    };
    let mut acc = 0.0;
    for q in &qs {
        for q_star in &qs {
            for z in 0..1 << TOY.len() {
                let (l, l_star) = (lik(q, z), lik(q_star, z));
                acc += l * (l_star / l).min(1.0);
            }
        }
    }
    acc / (nodes * nodes) as f64
}

#[test]
fn corrected_acceptance_rate_matches_oracle() {
    let config = SelectionConfig { hastings_correction: true, ..SelectionConfig::default() };
    let mut sel = CutState::new(TOY.len(), &config);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let steps = 200_000;
    let mut t_sum = 0.0;
    for _ in 0..steps {
        cut_step(&TOY, &mut sel, &config, &mut rng).unwrap();
        assert!(sel.t_alpha > 0.0 && sel.t_alpha < 1.0);
        t_sum += sel.t_alpha;
    }
    let rate = sel.accepted as f64 / steps as f64;
    let want = acceptance_oracle(config.a, config.b);
    assert!((rate - want).abs() < 0.01, "rate {rate} vs oracle {want}");
    let mean = t_sum / steps as f64;
    assert!((mean - 30.0 / 55.0).abs() < 0.005, "t^α mean {mean}");
}

#[test]
fn certain_edges_are_always_drawn() {
    let config = SelectionConfig::default();
    let mut sel = CutState::new(2, &config);
    sel.t_alpha = 0.0;
    // z is drawn before t moves, and every q is 1 at t = 0
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    cut_step(&[(1.0, 0.0), (2.0, 1.0)], &mut sel, &config, &mut rng).unwrap();
    assert_eq!(sel.z, vec![true, true]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tail_is_nonincreasing_in_t(
        alpha in 0.01f64..20.0,
        beta in -8.0f64..8.0,
        t1 in 0.0f64..=1.0,
        t2 in 0.0f64..=1.0,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (q_lo, q_hi) = (kappa_tail_prob(alpha, beta, lo).unwrap(), kappa_tail_prob(alpha, beta, hi).unwrap());
        prop_assert!((0.0..=1.0).contains(&q_lo) && (0.0..=1.0).contains(&q_hi));
        prop_assert!(q_hi <= q_lo + 1e-12, "q({hi}) = {q_hi} > q({lo}) = {q_lo}");
    }
}
