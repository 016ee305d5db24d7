mod common;

use std::time::Instant;

use common::{integrate_rates, log_uniform};
use flipflop_core::kinetics::{
    class_curve, ensemble_level_decay, evolve, InitialPopulations, Normalization,
};
use flipflop_core::rates::RateTriple;
use flipflop_core::spinham::Manifold;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_triple(rng: &mut ChaCha8Rng, id: usize) -> RateTriple {
    let mut r = || log_uniform(rng.random(), 1e-7, 1e2);
    RateTriple::new(id, r(), r(), r())
}

#[test]
fn closed_form_matches_integration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let times = [1.0, 10.0, 100.0, 1000.0, 3000.0];
    let mut worst: f64 = 0.0;
    for id in 0..1000 {
        let t = random_triple(&mut rng, id);
        let init = [
            InitialPopulations::A,
            InitialPopulations::B,
            InitialPopulations::C,
        ][id % 3];
        let reference = integrate_rates(t.as_array(), init.as_array(), &times, 1e-12, 1e-14);
        for (time, want) in times.iter().zip(&reference) {
            let got = evolve(&t, &init, *time).unwrap();
            for k in 0..3 {
                worst = worst.max((got[k] - want[k]).abs());
            }
        }
    }
    assert!(worst < 1e-8, "max error {worst:e}");
    assert!(start.elapsed().as_secs() < 30);
}

#[test]
fn class_curve_is_a_difference_of_solutions() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let peaks = [
        InitialPopulations::A,
        InitialPopulations::B,
        InitialPopulations::C,
    ];
    let backgrounds = [
        InitialPopulations::C,
        InitialPopulations::C,
        InitialPopulations::A,
    ];
    for id in 0..100 {
        let t = random_triple(&mut rng, id);
        for level in Manifold::ALL {
            let k = level.index();
            for time in [0.0, 0.01, 1.0, 37.0, 1000.0] {
                let direct = class_curve(&t, level, time).unwrap();
                let diff = evolve(&t, &peaks[k], time).unwrap()[k]
                    - evolve(&t, &backgrounds[k], time).unwrap()[k];
                assert!((direct - diff).abs() < 1e-12, "{level:?} t={time}");
            }
        }
    }
}

#[test]
fn conservation_and_equilibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for id in 0..200 {
        let t = random_triple(&mut rng, id);
        let init = InitialPopulations::new(rng.random(), rng.random(), rng.random());
        let total: f64 = init.as_array().iter().sum();
        let mut last = f64::INFINITY;
        for k in 0..400 {
            let time = 1e-3 * 1.05f64.powi(k);
            let n = evolve(&t, &init, time).unwrap();
            assert!((n.iter().sum::<f64>() - total).abs() < 1e-12);
            let dev = n
                .iter()
                .map(|v| (v - total / 3.0).abs())
                .fold(0.0, f64::max);
            assert!(dev <= last + 1e-13);
            last = dev;
        }
    }
}

#[test]
fn ensemble_curve_of_a_mixture_is_log_convex() {
    let triples = [
        RateTriple::new(0, 1.0, 0.5, 0.2),
        RateTriple::new(1, 1e-3, 5e-4, 2e-4),
    ];
    let times: Vec<f64> = (0..200).map(|k| 0.05 * k as f64 + 0.05).collect();
    let curve =
        ensemble_level_decay(&triples, Manifold::A, &times, None, Normalization::ExactOne).unwrap();
    let logs: Vec<f64> = curve.iter().map(|v| v.ln()).collect();
    for w in logs.windows(3) {
        assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-12);
    }
    let single = ensemble_level_decay(
        &triples[..1],
        Manifold::A,
        &times,
        None,
        Normalization::ExactOne,
    )
    .unwrap();
    for (t, v) in times.iter().zip(&single) {
        assert!((v - class_curve(&triples[0], Manifold::A, *t).unwrap()).abs() < 1e-14);
    }
}
