use gamn_core::cdiff::ComplexTensor;
use gamn_core::manifold::{Manifold, RadamState};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> ComplexTensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    ComplexTensor::new(shape.to_vec(), data).unwrap()
}

fn circle_point(rng: &mut ChaCha8Rng, n: usize) -> ComplexTensor {
    ComplexTensor::column(
        (0..n)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
            .collect(),
    )
}

fn sphere_point(rng: &mut ChaCha8Rng, m: usize, k: usize, power: f64) -> ComplexTensor {
    let raw = gaussian(rng, &[m, k], 1.0);
    raw.scaled(Complex64::new(power.sqrt() / raw.norm(), 0.0))
}

#[test]
fn ten_thousand_retractions_stay_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let circle = Manifold::CircleProduct(6);
    let sphere = Manifold::PowerSphere {
        m: 3,
        k: 2,
        power: 2.5,
    };
    for i in 0..10_000 {
        let scale = 10f64.powf(rng.random_range(-6.0..1.0));
        let x = circle_point(&mut rng, 6);
        let v = gaussian(&mut rng, &[6, 1], scale);
        let y = circle.retract(&x, &v).unwrap();
        for z in y.data() {
            assert!((z.norm() - 1.0).abs() <= 1e-12, "draw {i}: {}", z.norm());
        }
        let w = sphere_point(&mut rng, 3, 2, 2.5);
        let u = gaussian(&mut rng, &[3, 2], scale);
        let r = sphere.retract(&w, &u).unwrap();
        assert!(
            (r.norm_sqr() - 2.5).abs() <= 1e-12 * 2.5,
            "draw {i}: {}",
            r.norm_sqr()
        );
    }
}

#[test]
fn euclidean_radam_is_adam_over_100_steps() {
    // Reference recursion written out independently, one complex entry at a
    // time, with the second moment tracking |g|^2.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 7;
    let man = Manifold::Euclidean(dim);
    let (b1, b2, eps, lr) = (0.9_f64, 0.999_f64, 1e-8_f64, 0.01_f64);
    let mut x = gaussian(&mut rng, &[dim, 1], 1.0);
    let mut state = RadamState::new(&man, x.shape());
    let mut ref_x: Vec<Complex64> = x.data().to_vec();
    let mut ref_m = vec![Complex64::new(0.0, 0.0); dim];
    let mut ref_v = vec![0.0_f64; dim];
    for t in 1..=100 {
        let g = gaussian(&mut rng, &[dim, 1], 1.0);
        x = man.radam_step(&x, &g, &mut state, lr).unwrap();
        for i in 0..dim {
            let gi = g.data()[i];
            ref_m[i] = b1 * ref_m[i] + (1.0 - b1) * gi;
            ref_v[i] = b2 * ref_v[i] + (1.0 - b2) * gi.norm_sqr();
            let m_hat = ref_m[i] / (1.0 - b1.powi(t));
            let v_hat = ref_v[i] / (1.0 - b2.powi(t));
            ref_x[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        for (a, b) in x.data().iter().zip(&ref_x) {
            assert!((a - b).norm() <= 1e-12, "step {t}: {a} vs {b}");
        }
    }
    assert_eq!(state.step, 100);
}

#[test]
fn real_parameters_follow_textbook_adam() {
    let man = Manifold::Euclidean(1);
    let mut x = ComplexTensor::column(vec![Complex64::new(0.5, 0.0)]);
    let mut state = RadamState::new(&man, x.shape());
    let (mut xr, mut m, mut v) = (0.5_f64, 0.0_f64, 0.0_f64);
    for t in 1..=100 {
        // gradient of (x - 2)^2
        let g = 2.0 * (xr - 2.0);
        x = man
            .radam_step(
                &x,
                &ComplexTensor::column(vec![Complex64::new(g, 0.0)]),
                &mut state,
                0.05,
            )
            .unwrap();
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let step =
            0.05 * (m / (1.0 - 0.9_f64.powi(t))) / ((v / (1.0 - 0.999_f64.powi(t))).sqrt() + 1e-8);
        xr -= step;
        assert!((x.data()[0].re - xr).abs() <= 1e-12);
        assert_eq!(x.data()[0].im, 0.0);
    }
}

#[test]
fn sphere_descent_reaches_negative_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (m, k, power) = (3, 2, 4.0);
    let man = Manifold::PowerSphere { m, k, power };
    let a = gaussian(&mut rng, &[m, k], 1.0);
    let target = a.scaled(Complex64::new(-power.sqrt() / a.norm(), 0.0));
    let mut x = sphere_point(&mut rng, m, k, power);
    let mut state = RadamState::new(&man, x.shape());
    let dist = |x: &ComplexTensor| {
        x.data()
            .iter()
            .zip(target.data())
            .map(|(p, q)| (p - q).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let start = dist(&x);
    // f(x) = <a, x> has ambient gradient a.
    for _ in 0..500 {
        x = man.radam_step(&x, &a, &mut state, 0.05).unwrap();
        man.check_point(&x, 1e-12).unwrap();
    }
    let end = dist(&x);
    assert!(end < 1e-2, "distance {end} (started at {start})");
    assert!(x.real_inner(&a) < 0.0);
}

#[test]
fn zero_gradient_keeps_point_and_counts_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let man = Manifold::CircleProduct(4);
    let x = circle_point(&mut rng, 4);
    let mut state = RadamState::new(&man, x.shape());
    let y = man
        .radam_step(&x, &ComplexTensor::zeros(&[4, 1]), &mut state, 0.1)
        .unwrap();
    assert_eq!(state.step, 1);
    for (a, b) in x.data().iter().zip(y.data()) {
        assert!((a - b).norm() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn circle_projection_tangent_idempotent_self_adjoint(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let man = Manifold::CircleProduct(8);
        let x = circle_point(&mut rng, 8);
        let g = gaussian(&mut rng, &[8, 1], 3.0);
        let h = gaussian(&mut rng, &[8, 1], 3.0);
        let pg = man.tangent_project(&x, &g).unwrap();
        let ph = man.tangent_project(&x, &h).unwrap();
        for (xn, vn) in x.data().iter().zip(pg.data()) {
            prop_assert!((xn.conj() * vn).re.abs() <= 1e-10);
        }
        let twice = man.tangent_project(&x, &pg).unwrap();
        for (a, b) in pg.data().iter().zip(twice.data()) {
            prop_assert!((a - b).norm() <= 1e-12);
        }
        prop_assert!((man.inner(&pg, &h) - man.inner(&g, &ph)).abs() <= 1e-10);
    }

    #[test]
    fn sphere_projection_tangent_idempotent_self_adjoint(seed in any::<u64>(), power in 0.01..100.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let man = Manifold::PowerSphere { m: 4, k: 3, power };
        let x = sphere_point(&mut rng, 4, 3, power);
        let g = gaussian(&mut rng, &[4, 3], 1.0);
        let h = gaussian(&mut rng, &[4, 3], 1.0);
        let pg = man.tangent_project(&x, &g).unwrap();
        let ph = man.tangent_project(&x, &h).unwrap();
        prop_assert!(x.real_inner(&pg).abs() <= 1e-10 * power.sqrt().max(1.0));
        let twice = man.tangent_project(&x, &pg).unwrap();
        for (a, b) in pg.data().iter().zip(twice.data()) {
            prop_assert!((a - b).norm() <= 1e-12);
        }
        prop_assert!((man.inner(&pg, &h) - man.inner(&g, &ph)).abs() <= 1e-10);
        let along = man.tangent_project(&x, &x.scaled(Complex64::new(2.0, 0.0))).unwrap();
        prop_assert!(along.norm() <= 1e-12 * power.sqrt().max(1.0));
    }

    #[test]
    fn retract_zero_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let circle = Manifold::CircleProduct(5);
        let x = circle_point(&mut rng, 5);
        let y = circle.retract(&x, &ComplexTensor::zeros(&[5, 1])).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            prop_assert!((a - b).norm() <= 1e-15);
        }
    }

    #[test]
    fn circle_radam_steps_stay_on_manifold(seed in any::<u64>(), lr in 1e-4..0.5f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let man = Manifold::CircleProduct(6);
        let mut x = circle_point(&mut rng, 6);
        let mut state = RadamState::new(&man, x.shape());
        for _ in 0..20 {
            let g = gaussian(&mut rng, &[6, 1], 1.0);
            x = man.radam_step(&x, &g, &mut state, lr).unwrap();
            prop_assert!(man.check_point(&x, 1e-12).is_ok());
            prop_assert!(state.v.iter().all(|v| *v >= 0.0));
        }
    }
}
