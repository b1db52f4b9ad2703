use gamn_core::cdiff::{ComplexTensor, Tape};
use gamn_core::channel::{ChannelSet, Point2};
use gamn_core::metrics::{self, SystemParams, SystemState};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexTensor {
    let data = (0..rows * cols)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        })
        .collect();
    ComplexTensor::matrix(rows, cols, data).unwrap()
}

/// Unit-scale instance with noticeable interference.
fn instance(seed: u64, n: usize, m: usize, k: usize) -> (ChannelSet, SystemState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = ChannelSet {
        h_br: gaussian(&mut rng, n, m),
        h_ru: gaussian(&mut rng, k, n),
        user_positions: vec![Point2::new(0.0, 0.0); k],
        seed,
    };
    let theta: Vec<Complex64> = (0..n)
        .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    let power: f64 = rng.random_range(0.1..10.0);
    let raw = gaussian(&mut rng, m, k);
    let w = raw.scaled(Complex64::new(power.sqrt() / raw.norm(), 0.0));
    let mut weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|c| *c /= total);
    let sigma2 = rng.random_range(0.01..2.0);
    let params = SystemParams {
        weights,
        sigma2,
        power,
    };
    let state = SystemState::new(theta, w, params).unwrap();
    (channels, state)
}

fn theta_column(state: &SystemState) -> ComplexTensor {
    ComplexTensor::column(state.theta.clone())
}

fn graph_wsr(state: &SystemState, channels: &ChannelSet) -> f64 {
    let mut tape = Tape::new();
    let t = tape.leaf(theta_column(state));
    let w = tape.leaf(state.w.clone());
    let r = metrics::wsr_graph(&mut tape, t, w, channels, &state.params).unwrap();
    tape.value(r).data()[0].re
}

#[test]
fn graph_matches_plain_evaluator_on_100_instances() {
    for seed in 0..100 {
        let n = 2 + (seed as usize % 7);
        let m = 1 + (seed as usize % 4);
        let k = 1 + (seed as usize % 3);
        let (ch, state) = instance(seed, n, m, k);
        let plain = metrics::wsr(&state, &ch).unwrap();
        let graph = graph_wsr(&state, &ch);
        assert!(
            (plain - graph).abs() <= 1e-12 * plain.abs().max(1.0),
            "seed {seed}: {plain} vs {graph}"
        );
    }
}

#[test]
fn loss_gradient_is_negated_rate_gradient() {
    let (ch, state) = instance(5, 6, 3, 3);
    let theta = theta_column(&state);
    let g = metrics::wsr_gradients(&theta, &state.w, &ch, &state.params).unwrap();
    let mut tape = Tape::new();
    let t = tape.leaf(theta.clone());
    let w = tape.leaf(state.w.clone());
    let r = metrics::wsr_graph(&mut tape, t, w, &ch, &state.params).unwrap();
    let l = tape.scale(r, Complex64::new(-1.0, 0.0)).unwrap();
    let grads = tape.backward(l).unwrap();
    for (a, b) in grads.get(t).unwrap().data().iter().zip(g.theta.data()) {
        assert_eq!(*a, -*b);
    }
    for (a, b) in grads.get(w).unwrap().data().iter().zip(g.w.data()) {
        assert_eq!(*a, -*b);
    }
    assert_eq!(
        metrics::loss(&state, &ch).unwrap(),
        -metrics::wsr(&state, &ch).unwrap()
    );
}

#[test]
fn single_user_rate_is_capacity_formula() {
    let (ch, state) = instance(9, 5, 2, 1);
    let g = metrics::effective_channel(&state, &ch).unwrap();
    let gain: f64 = (0..2)
        .map(|m| g.at(0, m) * state.w.at(m, 0))
        .sum::<Complex64>()
        .norm_sqr();
    let expected = (1.0 + gain / state.params.sigma2).log2();
    let got = metrics::wsr(&state, &ch).unwrap();
    assert!((got - expected).abs() < 1e-12 * expected.max(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn common_phase_rotation_leaves_rate_unchanged(seed in any::<u64>(), phi in 0.0..std::f64::consts::TAU, psi in 0.0..std::f64::consts::TAU) {
        let (ch, state) = instance(seed, 5, 3, 2);
        let base = metrics::wsr(&state, &ch).unwrap();
        let mut rotated = state.clone();
        rotated.w = state.w.scaled(Complex64::from_polar(1.0, phi));
        rotated.theta = state.theta.iter().map(|z| z * Complex64::from_polar(1.0, psi)).collect();
        let r = metrics::wsr(&rotated, &ch).unwrap();
        prop_assert!((r - base).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn per_user_column_phase_leaves_rate_unchanged(seed in any::<u64>(), phi in 0.0..std::f64::consts::TAU) {
        let (ch, state) = instance(seed, 4, 2, 3);
        let base = metrics::wsr(&state, &ch).unwrap();
        let mut rotated = state.clone();
        for m in 0..2 {
            let z = state.w.at(m, 1) * Complex64::from_polar(1.0, phi);
            rotated.w.set(m, 1, z);
        }
        let r = metrics::wsr(&rotated, &ch).unwrap();
        prop_assert!((r - base).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn rate_strictly_decreases_with_noise(seed in any::<u64>(), factor in 1.01..100.0f64) {
        let (ch, state) = instance(seed, 4, 3, 2);
        let base = metrics::wsr(&state, &ch).unwrap();
        let mut noisier = state.clone();
        noisier.params.sigma2 *= factor;
        let r = metrics::wsr(&noisier, &ch).unwrap();
        prop_assert!(r < base, "{} !< {}", r, base);
    }

    #[test]
    fn rate_is_nonnegative_and_finite(seed in any::<u64>()) {
        let (ch, state) = instance(seed, 3, 2, 2);
        let r = metrics::wsr(&state, &ch).unwrap();
        prop_assert!(r.is_finite() && r >= 0.0);
        for k in 0..2 {
            prop_assert!(metrics::sinr(&state, &ch, k).unwrap() >= 0.0);
        }
    }

    #[test]
    fn joint_rescaling_of_noise_and_power_is_invariant(seed in any::<u64>(), a in 0.1..10.0f64) {
        let (ch, state) = instance(seed, 4, 2, 2);
        let base = metrics::wsr(&state, &ch).unwrap();
        let mut scaled = state.clone();
        scaled.w = state.w.scaled(Complex64::new(a.sqrt(), 0.0));
        scaled.params.power *= a;
        scaled.params.sigma2 *= a;
        let r = metrics::wsr(&scaled, &ch).unwrap();
        prop_assert!((r - base).abs() <= 1e-11 * base.max(1.0));
    }
}
