use gamn_core::channel::{db_to_amplitude, generate, Geometry, RicianParams};

fn rayleigh() -> RicianParams {
    RicianParams {
        kappa_br: 0.0,
        kappa_ru: 0.0,
        ..RicianParams::default()
    }
}

fn nlos_amplitude_br(geometry: &Geometry, rician: &RicianParams) -> f64 {
    let d = geometry.bs_pos.distance(geometry.ris_pos);
    db_to_amplitude(rician.nlos.loss_db(d, geometry.carrier_freq).unwrap())
}

/// Normalised `H_BR` entries `h / L_NLoS` over `seeds` realizations of a
/// 100 × 10 link.
fn normalised_entries(seeds: u64) -> Vec<(f64, f64)> {
    let geometry = Geometry::default();
    let rician = rayleigh();
    let amp = nlos_amplitude_br(&geometry, &rician);
    let mut out = Vec::with_capacity(seeds as usize * 1000);
    for seed in 0..seeds {
        let ch = generate(seed, &geometry, &rician, 100, 10, 1).unwrap();
        out.extend(ch.h_br.data().iter().map(|z| (z.re / amp, z.im / amp)));
    }
    out
}

#[test]
fn rayleigh_entry_variance_matches_pathloss() {
    // 10^5 draws of |h|^2 should average L_NLoS^2.
    let geometry = Geometry::default();
    let rician = rayleigh();
    let amp = nlos_amplitude_br(&geometry, &rician);
    let mut sum = 0.0;
    let mut count = 0usize;
    for seed in 0..100 {
        let ch = generate(seed, &geometry, &rician, 100, 10, 1).unwrap();
        for z in ch.h_br.data() {
            sum += z.norm_sqr();
            count += 1;
        }
    }
    assert_eq!(count, 100_000);
    let var = sum / count as f64;
    let expected = amp * amp;
    assert!(
        (var / expected - 1.0).abs() < 0.05,
        "variance {var:e} vs {expected:e}"
    );
}

#[test]
fn normalised_entries_are_standard_complex_gaussian() {
    let samples = normalised_entries(1000);
    assert_eq!(samples.len(), 1_000_000);
    let n = samples.len() as f64;
    let mean_re = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_im = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let var_re = samples.iter().map(|s| (s.0 - mean_re).powi(2)).sum::<f64>() / n;
    let var_im = samples.iter().map(|s| (s.1 - mean_im).powi(2)).sum::<f64>() / n;
    assert!(
        mean_re.abs() < 0.01 && mean_im.abs() < 0.01,
        "{mean_re} {mean_im}"
    );
    assert!((var_re / 0.5 - 1.0).abs() < 0.03, "{var_re}");
    assert!((var_im / 0.5 - 1.0).abs() < 0.03, "{var_im}");
    let cross = samples
        .iter()
        .map(|s| (s.0 - mean_re) * (s.1 - mean_im))
        .sum::<f64>()
        / n;
    assert!(cross.abs() < 0.01, "re/im correlation {cross}");
}

#[test]
fn user_channels_use_their_own_distance() {
    // Pure NLoS, many realizations: mean |h_RU|^2 per user tracks that user's
    // own pathloss, which varies with the drop.
    let geometry = Geometry::default();
    let rician = rayleigh();
    let mut ratio_sum = 0.0;
    let mut count = 0usize;
    for seed in 0..200 {
        let ch = generate(seed, &geometry, &rician, 256, 1, 3).unwrap();
        for (k, user) in ch.user_positions.iter().enumerate() {
            let d = geometry.ris_pos.distance(*user);
            let amp = db_to_amplitude(rician.nlos.loss_db(d, geometry.carrier_freq).unwrap());
            let row: f64 = (0..256).map(|n| ch.h_ru.at(k, n).norm_sqr()).sum::<f64>() / 256.0;
            ratio_sum += row / (amp * amp);
            count += 1;
        }
    }
    let mean_ratio = ratio_sum / count as f64;
    assert!((mean_ratio - 1.0).abs() < 0.02, "{mean_ratio}");
}

#[test]
fn users_fall_inside_the_disc() {
    let geometry = Geometry::default();
    for seed in 0..200 {
        let ch = generate(seed, &geometry, &RicianParams::default(), 4, 2, 5).unwrap();
        for p in &ch.user_positions {
            assert!(p.distance(geometry.user_center) <= geometry.user_radius + 1e-12);
        }
    }
}

#[test]
fn distinct_seeds_give_distinct_channels() {
    let g = Geometry::default();
    let r = RicianParams::default();
    let a = generate(1, &g, &r, 8, 2, 2).unwrap();
    let b = generate(2, &g, &r, 8, 2, 2).unwrap();
    assert_ne!(a.h_br, b.h_br);
    assert_eq!(a, generate(1, &g, &r, 8, 2, 2).unwrap());
}
