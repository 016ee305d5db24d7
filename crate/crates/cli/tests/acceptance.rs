//! Acceptance checks, one line per criterion.
//!
//! Exits non-zero on any failure only when `ACCEPTANCE_STRICT=1`; otherwise the
//! report is informational and the verdicts are in the printed lines.

#[path = "../../core/tests/common/mod.rs"]
#[allow(dead_code)]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::{
    coupling_from_operator, dipolar_operator, integrate_rates, log_uniform, product_space_element,
};
use flipflop_cli::config::DEFAULT_CONFIG;
use flipflop_core::crystal::{
    generate_ensemble, y2sio5, DopedEnsemble, EnsembleSource, Ion, NeighborIndex,
};
use flipflop_core::dipole::{coupling_tensor, flipflop_amplitude, CouplingModel};
use flipflop_core::fit::{
    optimize, synthetic_experiments, Bounds, FitOptions, FitParams, ModelContext, PARAM_NAMES,
};
use flipflop_core::holeburn::{class_table, simulate_spectrum, SpectrumConfig, SpectrumState};
use flipflop_core::kinetics::{
    biexponential_fit, class_curve, ensemble_levels_decay, evolve, single_exponential_fit,
    InitialPopulations, Normalization,
};
use flipflop_core::rates::{
    density_of_states, element_sums, ensemble_reduced_sums, triples_from_sums, DensityParams,
    FieldRegime, LevelPair, LogHistogram, RateOptions, RateTriple, ReducedSums, SystemTable,
    RATE_PREFACTOR,
};
use flipflop_core::spinham::{
    build_tensors, eigensystem, hamiltonian, spin_operators, EulerAngles, Level, Manifold,
    SpinParams,
};
use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = (bool, String);

fn random_triple(rng: &mut ChaCha8Rng, id: usize) -> RateTriple {
    let mut r = || log_uniform(rng.random(), 1e-7, 1e2);
    RateTriple::new(id, r(), r(), r())
}

fn random_displacement(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n * rng.random_range(0.4..8.0);
        }
    }
}

fn random_field(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
    )
}

fn criterion_1() -> Verdict {
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
    let secs = start.elapsed().as_secs_f64();
    (
        worst < 1e-8 && secs < 30.0,
        format!("1000 triples, max error {worst:.2e}, {secs:.1} s"),
    )
}

fn criterion_2() -> Verdict {
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
    let mut worst: f64 = 0.0;
    for id in 0..100 {
        let t = random_triple(&mut rng, id);
        for level in Manifold::ALL {
            let k = level.index();
            for time in [0.0, 0.01, 1.0, 37.0, 1000.0, 3000.0] {
                let direct = class_curve(&t, level, time).unwrap();
                let diff = evolve(&t, &peaks[k], time).unwrap()[k]
                    - evolve(&t, &backgrounds[k], time).unwrap()[k];
                worst = worst.max((direct - diff).abs());
            }
        }
    }
    (
        worst < 1e-12,
        format!("100 triples x 3 levels, max difference {worst:.2e}"),
    )
}

fn criterion_3() -> Verdict {
    let spin = SpinParams::pr_yso_site1();
    let ops = spin_operators(2.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let (ci, cj) = (rng.random_range(0..4u8), rng.random_range(0..4u8));
        let field = if trial % 4 == 0 {
            Vector3::zeros()
        } else {
            random_field(&mut rng) * 0.5
        };
        let sys_i = eigensystem(&spin, ci, &field).unwrap();
        let sys_j = eigensystem(&spin, cj, &field).unwrap();
        let (mi, mj) = (
            build_tensors(&spin, ci).unwrap().0,
            build_tensors(&spin, cj).unwrap().0,
        );
        let c = coupling_tensor(&mi, &mj, &random_displacement(&mut rng)).unwrap();
        let h = dipolar_operator(&c, &ops);
        worst = worst.max((coupling_from_operator(&h, &ops) - c).norm() / c.norm());
        for x in 0..6 {
            for y in 0..6 {
                if x / 2 == y / 2 {
                    continue;
                }
                let fast = flipflop_amplitude(&sys_i, &sys_j, &c, x, y).unwrap();
                let slow = product_space_element(&h, &sys_i, &sys_j, x, y);
                worst = worst.max((fast - slow).norm() / slow.norm().max(1e-6 * c.norm()));
            }
        }
    }
    (
        worst < 1e-10,
        format!("100 pairs, 36-dim product space, max relative error {worst:.2e}"),
    )
}

fn hand_built(positions: &[[f64; 3]]) -> DopedEnsemble {
    DopedEnsemble {
        ions: positions
            .iter()
            .enumerate()
            .map(|(id, p)| Ion {
                id,
                position: Vector3::from(*p),
                orientation_class: 0,
            })
            .collect(),
        sphere_radius: 100.0,
        source: EnsembleSource::Continuous {
            density_per_nm3: 1e-3,
        },
        rng_seed: 0,
    }
}

fn criterion_4() -> Verdict {
    let spin = SpinParams::pr_yso_site1();
    let field = Vector3::new(0.0, 0.0, 7.33);
    let sys = [
        eigensystem(&spin, 0, &field).unwrap(),
        eigensystem(&spin, 1, &field).unwrap(),
    ];
    let m = [
        build_tensors(&spin, 0).unwrap().0,
        build_tensors(&spin, 1).unwrap().0,
    ];
    let params = DensityParams::zero_field(0.5e-3, [0.618, 3.309, 2.664]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut amp_err, mut rate_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let r = random_displacement(&mut rng);
        let c1 = coupling_tensor(&m[0], &m[1], &r).unwrap();
        let c2 = coupling_tensor(&m[0], &m[1], &(r * 2.0)).unwrap();
        for x in 0..6 {
            for y in 0..6 {
                if x / 2 == y / 2 {
                    continue;
                }
                let a1 = flipflop_amplitude(&sys[0], &sys[1], &c1, x, y).unwrap();
                let a2 = flipflop_amplitude(&sys[0], &sys[1], &c2, x, y).unwrap();
                if a1.norm() < 1e-9 * c1.norm() {
                    continue;
                }
                amp_err = amp_err.max((a2 * 8.0 - a1).norm() / a1.norm());
                let level = |k: usize| Level::from_index(k).unwrap().manifold();
                let f = density_of_states(LevelPair::of(level(x), level(y)).unwrap(), &params);
                let (r1, r2) = (
                    RATE_PREFACTOR * f * a1.norm_sqr(),
                    RATE_PREFACTOR * f * a2.norm_sqr(),
                );
                rate_err = rate_err.max((r2 * 64.0 - r1).abs() / r1);
            }
        }
    }

    let table = SystemTable::new(&spin, &Vector3::zeros()).unwrap();
    let positions: Vec<[f64; 3]> = (0..300)
        .map(|_| {
            [
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
            ]
        })
        .collect();
    let ens = hand_built(&positions);
    let index = NeighborIndex::new(&ens);
    let mut iso_err: f64 = 0.0;
    let mut reference: Option<[f64; 3]> = None;
    for id in 0..100 {
        let nb = index.nearest_neighbors(id, 20).unwrap();
        let s = element_sums(&ens, &nb, &table, CouplingModel::Isotropic).unwrap();
        let r6: f64 = nb.neighbors.iter().map(|n| n.distance.powi(-6)).sum();
        let ratios = [(0, 2), (2, 5), (1, 4)].map(|(x, y)| s.sums[x][y] / r6);
        let first = *reference.get_or_insert(ratios);
        for (q, r) in ratios.iter().zip(first) {
            iso_err = iso_err.max((q / r - 1.0).abs());
        }
    }
    (
        amp_err < 1e-12 && rate_err < 1e-12 && iso_err < 1e-10,
        format!("r->2r amplitude {amp_err:.1e}, rate {rate_err:.1e}; isotropic rate vs sum r^-6 {iso_err:.1e}"),
    )
}

/// The full-scale ensemble shared by criteria 5 to 9.
struct FullScale {
    zero: Vec<ReducedSums>,
    field: Vec<ReducedSums>,
    times: Vec<f64>,
    rate_seconds: f64,
}

impl FullScale {
    fn new() -> FullScale {
        let start = Instant::now();
        let ensemble = generate_ensemble(&y2sio5(), 1, 100.0, 5e-4, 42).unwrap();
        let spin = SpinParams::pr_yso_site1();
        let opts = RateOptions::default();
        let zero = ensemble_reduced_sums(&ensemble, &spin, &Vector3::zeros(), &opts).unwrap();
        let rate_seconds = start.elapsed().as_secs_f64();
        let field =
            ensemble_reduced_sums(&ensemble, &spin, &Vector3::new(0.0, 0.0, 7.33), &opts).unwrap();
        let times = (0..40)
            .map(|k| 0.005 * (2700.0f64 / 0.005).powf(k as f64 / 39.0))
            .collect();
        FullScale {
            zero,
            field,
            times,
            rate_seconds,
        }
    }

    fn context(&self) -> ModelContext {
        ModelContext::new(self.zero.clone(), self.field.clone(), 0.5e-3, 6e-3, 4.6).unwrap()
    }

    fn zero_triples(&self) -> Vec<RateTriple> {
        triples_from_sums(
            &self.zero,
            &DensityParams::zero_field(0.5e-3, FitParams::pr_yso().gamma_khz),
        )
    }

    fn field_triples(&self) -> Vec<RateTriple> {
        let p = FitParams::pr_yso();
        triples_from_sums(
            &self.field,
            &DensityParams::applied_field(6e-3, p.gamma_khz, p.kappa),
        )
    }
}

fn modes(triples: &[RateTriple]) -> [f64; 3] {
    LevelPair::ALL.map(|p| {
        LogHistogram::new(triples.iter().map(|t| t.get(p)), 0.1)
            .unwrap()
            .mode()
            .unwrap()
    })
}

fn criterion_5(full: &FullScale) -> Verdict {
    let m = modes(&full.zero_triples());
    let want = [-2.0, -4.0, 2e-6f64.log10()];
    let ok = m.iter().zip(want).all(|(a, b)| (a - b).abs() <= 1.0)
        && full.zero.len() >= 500
        && full.rate_seconds < 300.0;
    (
        ok,
        format!(
            "{} centers, log10 modes ab {:.2} bc {:.2} ac {:.2} (targets -2, -4, -5.70), {:.0} s",
            full.zero.len(),
            m[0],
            m[1],
            m[2],
            full.rate_seconds
        ),
    )
}

fn criterion_6(full: &FullScale) -> Verdict {
    let (z, f) = (modes(&full.zero_triples()), modes(&full.field_triples()));
    let shift: Vec<f64> = z.iter().zip(&f).map(|(a, b)| a - b).collect();
    (
        shift.iter().all(|s| (1.5..=2.5).contains(s)),
        format!(
            "mode shifts ab {:.2} bc {:.2} ac {:.2} decades",
            shift[0], shift[1], shift[2]
        ),
    )
}

fn criterion_7(full: &FullScale) -> Verdict {
    let zero = full.zero_triples();
    let times = &full.times;
    let curves =
        ensemble_levels_decay(&zero, &Manifold::ALL, times, None, Normalization::ExactOne).unwrap();
    let overlap = curves[0]
        .iter()
        .zip(&curves[1])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let at100 = ensemble_levels_decay(
        &zero,
        &[Manifold::A, Manifold::C],
        &[100.0],
        None,
        Normalization::ExactOne,
    )
    .unwrap();
    let slower = at100[1][0] - at100[0][0];

    let data = synthetic_experiments(
        &FitParams::pr_yso(),
        &full.context(),
        times,
        &[FieldRegime::ZeroField],
        0.02,
        9,
    )
    .unwrap();
    let noisy = data[0].level(Manifold::A).unwrap();
    let model_sse: f64 = noisy
        .iter()
        .zip(&curves[0])
        .map(|(y, m)| (y - m).powi(2))
        .sum();
    let single = single_exponential_fit(times, noisy).unwrap();
    let ratio = single.residual / model_sse;
    (
        overlap < 0.05 && slower > 0.2 && ratio > 5.0,
        format!(
            "max |a-b| {overlap:.4}; c - a at 100 s {slower:.3}; single-exponential SSE {:.3e} vs model {model_sse:.3e} ({ratio:.0}x)",
            single.residual
        ),
    )
}

fn criterion_8(full: &FullScale) -> Verdict {
    let zero = full.zero_triples();
    let a = ensemble_levels_decay(
        &zero,
        &[Manifold::A],
        &full.times,
        None,
        Normalization::ExactOne,
    )
    .unwrap();
    let fit = biexponential_fit(&full.times, &a[0]).unwrap();
    let within = |got: f64, want: f64| got >= want / 3.0 && got <= want * 3.0;
    (
        within(fit.tau1, 5.52) && within(fit.tau2, 2193.0),
        format!(
            "{:.3} e^(-t/{:.2}) + {:.3} e^(-t/{:.0}); targets 5.52 s and 2193 s within x3",
            fit.w1, fit.tau1, fit.w2, fit.tau2
        ),
    )
}

fn criterion_9(full: &FullScale) -> Verdict {
    let start = Instant::now();
    let ctx = full.context();
    let truth = FitParams::pr_yso();
    let data = synthetic_experiments(
        &truth,
        &ctx,
        &full.times,
        &[FieldRegime::ZeroField, FieldRegime::AppliedField],
        0.02,
        9,
    )
    .unwrap();
    let result = optimize(&data, &ctx, &Bounds::default(), &FitOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64() + full.rate_seconds * 2.0;
    let err = (result.params.gamma_khz[0] / truth.gamma_khz[0] - 1.0).abs();
    let s: Vec<f64> = result.sensitivity.iter().map(|x| x.magnitude()).collect();
    let (g_ab, g_bc, k_ab, k_bc) = (s[0], s[1], s[3], s[4]);
    let close = |a: f64, b: f64| a.max(b) <= 3.0 * a.min(b);
    let ordered = g_ab > g_bc.max(k_ab) && close(g_bc, k_ab) && g_bc.min(k_ab) > k_bc;
    let table: Vec<String> = PARAM_NAMES
        .iter()
        .zip(&s)
        .map(|(n, v)| format!("{n} {:.1}%", 100.0 * v))
        .collect();
    (
        err < 0.2 && ordered && secs < 900.0,
        format!(
            "Gamma_ab {:.3} kHz (error {:.1}%); sensitivity {}; ordering {}; {secs:.0} s",
            result.params.gamma_khz[0],
            100.0 * err,
            table.join(", "),
            if ordered {
                "reproduced"
            } else {
                "not reproduced"
            }
        ),
    )
}

fn criterion_10() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let spin = SpinParams::pr_yso_site1();
    let mut failures = Vec::new();
    let trials = 1000;

    let mut herm: f64 = 0.0;
    let mut ortho: f64 = 0.0;
    for _ in 0..trials {
        let (b, class) = (random_field(&mut rng), rng.random_range(0..4u8));
        let h = hamiltonian(&spin, class, &b).unwrap();
        herm = herm.max((&h - h.adjoint()).norm() / h.norm());
        let sys = eigensystem(&spin, class, &b).unwrap();
        let gram = sys.states.adjoint() * &sys.states;
        for r in 0..6 {
            for c in 0..6 {
                let want = Complex64::new(if r == c { 1.0 } else { 0.0 }, 0.0);
                ortho = ortho.max((gram[(r, c)] - want).norm());
            }
        }
    }
    if herm > 1e-14 {
        failures.push(format!("hermiticity {herm:.1e}"));
    }
    if ortho > 1e-12 {
        failures.push(format!("orthonormality {ortho:.1e}"));
    }

    let mut traceless: f64 = 0.0;
    for _ in 0..trials {
        let mut r = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let p = SpinParams {
            g_principal: [r(1.0, 150.0), r(1.0, 150.0), r(1.0, 150.0)],
            zeeman_euler: EulerAngles::from_degrees(
                r(-180.0, 180.0),
                r(0.0, 180.0),
                r(-180.0, 180.0),
            ),
            d_mhz: r(-10.0, 10.0),
            e_mhz: r(-3.0, 3.0),
            quad_euler: EulerAngles::from_degrees(
                r(-180.0, 180.0),
                r(0.0, 180.0),
                r(-180.0, 180.0),
            ),
            ..SpinParams::pr_yso_site1()
        };
        let (_, q) = build_tensors(&p, rng.random_range(0..4u8)).unwrap();
        traceless = traceless
            .max(q.trace().abs() / q.norm())
            .max((q - q.transpose()).norm() / q.norm());
    }
    if traceless > 1e-12 {
        failures.push(format!("traceless Q {traceless:.1e}"));
    }

    let mut pair: f64 = 0.0;
    for _ in 0..trials {
        let b = random_field(&mut rng);
        let r = random_displacement(&mut rng);
        let (ci, cj) = (rng.random_range(0..4u8), rng.random_range(0..4u8));
        let (x, y) = loop {
            let (x, y) = (rng.random_range(0..6usize), rng.random_range(0..6usize));
            if x / 2 != y / 2 {
                break (x, y);
            }
        };
        let (si, sj) = (
            eigensystem(&spin, ci, &b).unwrap(),
            eigensystem(&spin, cj, &b).unwrap(),
        );
        let (mi, mj) = (
            build_tensors(&spin, ci).unwrap().0,
            build_tensors(&spin, cj).unwrap().0,
        );
        let c_ij = coupling_tensor(&mi, &mj, &r).unwrap();
        let c_ji = coupling_tensor(&mj, &mi, &(-r)).unwrap();
        let forward = flipflop_amplitude(&si, &sj, &c_ij, x, y).unwrap();
        let reverse = flipflop_amplitude(&si, &sj, &c_ij, y, x).unwrap();
        let swapped = flipflop_amplitude(&sj, &si, &c_ji, y, x).unwrap();
        pair = pair
            .max((forward - reverse.conj()).norm() / c_ij.norm())
            .max((forward - swapped).norm() / c_ij.norm());
    }
    if pair > 1e-12 {
        failures.push(format!("pair symmetry {pair:.1e}"));
    }

    let mut conservation: f64 = 0.0;
    for id in 0..trials {
        let t = random_triple(&mut rng, id);
        let init = InitialPopulations::new(rng.random(), rng.random(), rng.random_range(0.01..1.0));
        let n = evolve(&t, &init, rng.random_range(0.0..3000.0)).unwrap();
        conservation =
            conservation.max((n.iter().sum::<f64>() - init.as_array().iter().sum::<f64>()).abs());
    }
    if conservation > 1e-12 {
        failures.push(format!("conservation {conservation:.1e}"));
    }

    let table = SystemTable::new(&spin, &Vector3::zeros()).unwrap();
    let ens = generate_ensemble(&y2sio5(), 1, 50.0, 0.005, 21).unwrap();
    let index = NeighborIndex::new(&ens);
    let core = ens.core_ids(20.0);
    let mut reduction: f64 = 0.0;
    for &id in core.iter().take(trials) {
        let nb = index.nearest_neighbors(id, 20).unwrap();
        let s = element_sums(&ens, &nb, &table, CouplingModel::Dipolar).unwrap();
        for (p, q) in [(0, 2), (2, 4), (0, 4)] {
            let plus = s.sums[p][q] + s.sums[p][q + 1];
            let minus = s.sums[p + 1][q] + s.sums[p + 1][q + 1];
            reduction = reduction.max((plus - minus).abs() / plus.max(minus));
        }
    }
    let reduction_trials = core.len().min(trials);
    if reduction > 1e-10 || reduction_trials < trials {
        failures.push(format!(
            "zero-field reduction {reduction:.1e} over {reduction_trials} ions"
        ));
    }

    let detail = format!(
        "{trials} trials each: hermiticity {herm:.0e}, traceless Q {traceless:.0e}, orthonormality {ortho:.0e}, pair symmetry {pair:.0e}, conservation {conservation:.0e}, (I+II)=(III+IV) {reduction:.0e}"
    );
    if failures.is_empty() {
        (true, detail)
    } else {
        (false, format!("{detail}; failed: {}", failures.join(", ")))
    }
}

fn criterion_11() -> Verdict {
    use Manifold::{A, B, C};
    let cfg = SpectrumConfig::default();
    // (peak, background) initial level of classes I..IX
    let expected = [
        (
            0.0,
            2.0,
            [
                (A, C),
                (C, C),
                (C, C),
                (C, C),
                (A, A),
                (A, A),
                (A, A),
                (A, A),
                (A, A),
            ],
        ),
        (
            14.7,
            12.2,
            [
                (C, C),
                (C, C),
                (C, C),
                (C, C),
                (B, C),
                (C, C),
                (A, A),
                (A, A),
                (A, A),
            ],
        ),
        (
            36.9,
            38.9,
            [
                (C, C),
                (C, C),
                (C, C),
                (C, C),
                (C, C),
                (C, C),
                (A, A),
                (A, A),
                (C, A),
            ],
        ),
    ];
    let mut tables_ok = true;
    for (burn, background, classes) in expected {
        let t = class_table(&cfg, burn).unwrap();
        let got: Vec<_> = t
            .classes
            .iter()
            .map(|c| (c.peak_init, c.background_init))
            .collect();
        let want: Vec<_> = classes
            .iter()
            .map(|(p, b)| {
                (
                    InitialPopulations::in_level(*p),
                    InitialPopulations::in_level(*b),
                )
            })
            .collect();
        tables_ok &= got == want && t.background_frequency == background;
    }

    let table = class_table(&cfg, 0.0).unwrap();
    let state = SpectrumState::probed_class_only(&table);
    let nu: Vec<f64> = (0..4001)
        .map(|k| -10.0 + 30.0 * k as f64 / 4000.0)
        .collect();
    let a = simulate_spectrum(&cfg, &state, &nu).unwrap();
    let top = a.iter().cloned().fold(0.0, f64::max);
    let mut peaks = Vec::new();
    for k in 1..a.len() - 1 {
        if a[k] > a[k - 1] && a[k] >= a[k + 1] && a[k] > 0.01 * top {
            peaks.push(nu[k]);
        }
    }
    let at = |x: f64| a[((x + 10.0) / 30.0 * 4000.0).round() as usize];
    let positions = peaks.len() == 3
        && peaks
            .iter()
            .zip([0.0, 4.6, 9.4])
            .all(|(p, w)| (p - w).abs() < 0.01);
    // isolated: absorption between neighbouring peaks falls below 5% of the smaller peak
    let isolated = positions
        && peaks
            .windows(2)
            .all(|w| at(0.5 * (w[0] + w[1])) < 0.05 * at(w[0]).min(at(w[1])));
    (
        tables_ok && positions && isolated,
        format!(
            "class tables for burns at 0, 14.7, 36.9 MHz {}; probed-class peaks at {:?} MHz{}",
            if tables_ok { "match" } else { "differ" },
            peaks
                .iter()
                .map(|p| (p * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>(),
            if isolated {
                ", isolated"
            } else {
                ", not isolated"
            }
        ),
    )
}

fn run_cli(dir: &Path, config: &Path, workers: &str, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_flipflop"))
        .args([
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            dir.to_str().unwrap(),
            "--workers",
            workers,
        ])
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_12() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.toml");
    let text = DEFAULT_CONFIG
        .replace("radius_nm = 100.0", "radius_nm = 35.0")
        .replace("doping_fraction = 0.0005", "doping_fraction = 0.005")
        .replace("core_margin_nm = 20.0", "core_margin_nm = 10.0")
        .replace("budget = 5000", "budget = 400")
        .replace("restarts = 16", "restarts = 4")
        .replace("points = 2001", "points = 501");
    std::fs::write(&config, text).unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    if let Err(e) = run_cli(&data, &config, "1", &["decay", "--seed", "5"]) {
        return (false, e);
    }
    let data_file = data.join("decay_zero-field.csv");
    let commands: Vec<Vec<&str>> = vec![
        vec!["rates"],
        vec!["decay"],
        vec!["decay", "--regime", "applied-field"],
        vec!["decay", "--single-ion", "3"],
        vec!["fit", "--zero-field", data_file.to_str().unwrap()],
        vec!["spectrum", "--level", "b"],
        vec!["gen-lattice-demo"],
    ];
    let mut runs = Vec::new();
    for (k, workers) in ["1", "8", "1"].iter().enumerate() {
        let dir = tmp.path().join(format!("run{k}"));
        for args in &commands {
            // ion 3 may not be a center; fall back to the ensemble run only
            if let Err(e) = run_cli(&dir, &config, workers, args) {
                if !(args.contains(&"--single-ion") && e.contains("not a center")) {
                    return (false, e);
                }
            }
        }
        runs.push(csv_files(&dir));
    }
    let identical = runs[0] == runs[1] && runs[0] == runs[2];
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    (
        identical && names.len() >= 10,
        format!(
            "{} CSVs from rates, decay, fit, spectrum and gen-lattice-demo {} at 1, 8 and 1 workers",
            names.len(),
            if identical { "byte-identical" } else { "DIFFER" }
        ),
    )
}

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut results: Vec<(usize, Verdict)> = Vec::new();
    let mut report = |n: usize, v: Verdict| {
        println!(
            "criterion {n:>2}: {} - {}",
            if v.0 { "PASS" } else { "FAIL" },
            v.1
        );
        results.push((n, v));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    let full = FullScale::new();
    report(5, criterion_5(&full));
    report(6, criterion_6(&full));
    report(7, criterion_7(&full));
    report(8, criterion_8(&full));
    report(9, criterion_9(&full));
    report(10, criterion_10());
    report(11, criterion_11());
    report(12, criterion_12());
    let failed: Vec<usize> = results.iter().filter(|r| !r.1 .0).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        if strict {
            std::process::exit(1);
        }
    }
}
