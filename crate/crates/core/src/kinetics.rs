//! Closed-form three-level population kinetics and ensemble decay curves.
//!
//! The rate equations are `dN_a/dt = R_ab N_b + R_ac N_c − (R_ab + R_ac) N_a`
//! and cyclic. The generator has eigenvalues 0, −(K − σ), −(K + σ) with
//! `K = R_ab + R_bc + R_ac` and `σ² = R_ab² + R_bc² + R_ac² − R_ab R_bc − R_ab R_ac − R_bc R_ac`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions, NelderMeadResult};
use crate::rates::{FieldRegime, RateTriple};
use crate::spinham::Manifold;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialPopulations {
    pub n_a: f64,
    pub n_b: f64,
    pub n_c: f64,
}

impl InitialPopulations {
    pub const A: InitialPopulations = InitialPopulations::new(1.0, 0.0, 0.0);
    pub const B: InitialPopulations = InitialPopulations::new(0.0, 1.0, 0.0);
    pub const C: InitialPopulations = InitialPopulations::new(0.0, 0.0, 1.0);

    pub const fn new(n_a: f64, n_b: f64, n_c: f64) -> Self {
        InitialPopulations { n_a, n_b, n_c }
    }

    pub fn in_level(level: Manifold) -> Self {
        [Self::A, Self::B, Self::C][level.index()]
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.n_a, self.n_b, self.n_c]
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.as_array();
        if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || v.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid(format!(
                "initial populations {v:?} must be non-negative with a positive total"
            )));
        }
        Ok(())
    }
}

/// Constants of the closed-form solution for one rate triple, all in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticsSolution {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub k: f64,
    pub sigma: f64,
    /// K − σ, computed without cancellation.
    pub slow: f64,
}

impl KineticsSolution {
    pub fn new(triple: &RateTriple) -> Result<Self> {
        let [ab, bc, ac] = triple.as_array();
        if [ab, bc, ac].iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::invalid(format!(
                "ion {}: rates must be finite and non-negative",
                triple.ion_id
            )));
        }
        let k = ab + bc + ac;
        let sigma2 = 0.5 * ((ab - bc).powi(2) + (ab - ac).powi(2) + (bc - ac).powi(2));
        let sigma = sigma2.sqrt();
        let pairs = ab * bc + ab * ac + bc * ac;
        // (K − σ)(K + σ) = 3 Σ pair products
        let slow = if k + sigma > 0.0 {
            3.0 * pairs / (k + sigma)
        } else {
            0.0
        };
        Ok(KineticsSolution {
            a1: ab + ac - 2.0 * bc,
            a2: ab + bc - 2.0 * ac,
            a3: bc + ac - 2.0 * ab,
            k,
            sigma,
            slow,
        })
    }

    /// `(cosh σt, sinh σt / σ)` times `e^{−Kt}`, evaluated without overflow or 0/0.
    fn kernels(&self, t: f64) -> (f64, f64) {
        let st = self.sigma * t;
        let e_slow = (-t * self.slow).exp();
        if st < 1e-8 {
            let e = (-t * self.k).exp();
            (e * (1.0 + 0.5 * st * st), t * e * (1.0 + st * st / 6.0))
        } else {
            let e_fast = (-t * (self.slow + 2.0 * self.sigma)).exp();
            (
                0.5 * (e_slow + e_fast),
                e_slow * (-(-2.0 * st).exp_m1()) / (2.0 * self.sigma),
            )
        }
    }

    /// Populations at t from an arbitrary real initial vector (not necessarily non-negative).
    pub fn propagate(&self, n: [f64; 3], t: f64) -> [f64; 3] {
        let (c, s) = self.kernels(t);
        self.combine(n, c, s)
    }

    fn combine(&self, n: [f64; 3], c: f64, s: f64) -> [f64; 3] {
        let [na, nb, nc] = n;
        let total = na + nb + nc;
        let p = [
            na * self.a1 + nb * self.a3 + nc * self.a2,
            na * self.a3 + nb * self.a2 + nc * self.a1,
            na * self.a2 + nb * self.a1 + nc * self.a3,
        ];
        let q = [2.0 * na - nb - nc, 2.0 * nb - na - nc, 2.0 * nc - na - nb];
        [0, 1, 2].map(|k| total / 3.0 + (q[k] * c - p[k] * s) / 3.0)
    }
}

/// `(N_a, N_b, N_c)` at time t.
pub fn evolve(triple: &RateTriple, init: &InitialPopulations, t: f64) -> Result<[f64; 3]> {
    init.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid("time must be finite and non-negative"));
    }
    let sol = KineticsSolution::new(triple)?;
    if t == 0.0 {
        return Ok(init.as_array());
    }
    Ok(sol.propagate(init.as_array(), t))
}

/// Peak-minus-background initial vector for the class probing `level`.
pub fn class_difference(level: Manifold) -> [f64; 3] {
    match level {
        Manifold::A => [1.0, 0.0, -1.0],
        Manifold::B => [0.0, 1.0, -1.0],
        Manifold::C => [-1.0, 0.0, 1.0],
    }
}

/// Per-ion peak-minus-background population of `level` at time t.
pub fn class_curve(triple: &RateTriple, level: Manifold, t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid("time must be finite and non-negative"));
    }
    let sol = KineticsSolution::new(triple)?;
    let (c, s) = sol.kernels(t);
    let RateTriple {
        r_ab, r_bc, r_ac, ..
    } = *triple;
    Ok(match level {
        Manifold::A => c - (r_ac - r_bc) * s,
        Manifold::B => c + (r_ac - r_bc) * s,
        Manifold::C => c - (r_ac - r_ab) * s,
    })
}

/// Zero-field evolution up to `t0`, then the applied-field rates from each ion's state at `t0`.
#[derive(Debug, Clone, Copy)]
pub struct Ramp<'a> {
    pub t0: f64,
    pub zero_field_triples: &'a [RateTriple],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Normalization {
    /// Curves start at exactly 1.
    #[default]
    ExactOne,
    /// Curves are divided by their own value at this time.
    AtTime(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    /// s, strictly increasing.
    pub times: Vec<f64>,
    /// Per level a, b, c; `None` where a level was not measured or simulated.
    pub populations: [Option<Vec<f64>>; 3],
    /// Per-point standard deviations, same layout as `populations`.
    pub weights: [Option<Vec<f64>>; 3],
    pub regime: FieldRegime,
    pub t0: Option<f64>,
}

impl DecayCurve {
    pub fn new(times: Vec<f64>, regime: FieldRegime) -> Self {
        DecayCurve {
            times,
            populations: [None, None, None],
            weights: [None, None, None],
            regime,
            t0: None,
        }
    }

    pub fn level(&self, level: Manifold) -> Option<&[f64]> {
        self.populations[level.index()].as_deref()
    }

    pub fn validate(&self) -> Result<()> {
        check_times(&self.times)?;
        let n = self.times.len();
        for (k, pops) in self.populations.iter().enumerate() {
            if let Some(p) = pops {
                if p.len() != n {
                    return Err(Error::DimensionMismatch(p.len(), n));
                }
                if let Some(i) = p.iter().position(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!(
                        "level {k}: non-finite population at index {i}"
                    )));
                }
            }
            if let Some(w) = &self.weights[k] {
                if w.len() != n {
                    return Err(Error::DimensionMismatch(w.len(), n));
                }
            }
        }
        Ok(())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    if let Some(i) = times.iter().position(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::invalid(format!(
            "time at index {i} is negative or not finite"
        )));
    }
    let bad: Vec<usize> = (1..times.len())
        .filter(|&i| times[i] <= times[i - 1])
        .collect();
    if !bad.is_empty() {
        return Err(Error::invalid(format!(
            "times are not strictly increasing at indices {bad:?}"
        )));
    }
    Ok(())
}

/// Ensemble-averaged class curve of `level` over `times`.
pub fn ensemble_level_decay(
    triples: &[RateTriple],
    level: Manifold,
    times: &[f64],
    ramp: Option<&Ramp>,
    normalization: Normalization,
) -> Result<Vec<f64>> {
    Ok(ensemble_levels_decay(triples, &[level], times, ramp, normalization)?.remove(0))
}

/// Ensemble-averaged class curves of several levels, sharing the exponentials.
///
/// Each time point sums its ions in id order, so the result does not depend on
/// how time points are spread over workers.
pub fn ensemble_levels_decay(
    triples: &[RateTriple],
    levels: &[Manifold],
    times: &[f64],
    ramp: Option<&Ramp>,
    normalization: Normalization,
) -> Result<Vec<Vec<f64>>> {
    if triples.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    check_times(times)?;
    let d0: Vec<[f64; 3]> = levels.iter().map(|l| class_difference(*l)).collect();
    let field: Vec<KineticsSolution> = triples
        .iter()
        .map(KineticsSolution::new)
        .collect::<Result<_>>()?;
    let n = triples.len() as f64;
    let average =
        |sols: &[KineticsSolution], starts: Option<&[Vec<[f64; 3]>]>, t: f64| -> Vec<f64> {
            let mut sums = vec![0.0; levels.len()];
            for (i, sol) in sols.iter().enumerate() {
                let (c, s) = sol.kernels(t);
                for (j, level) in levels.iter().enumerate() {
                    let start = starts.map_or(d0[j], |v| v[i][j]);
                    sums[j] += sol.combine(start, c, s)[level.index()];
                }
            }
            sums.iter().map(|x| x / n).collect()
        };

    let eval: Box<dyn Fn(f64) -> Vec<f64> + Sync> = match ramp {
        None => Box::new(|t| average(&field, None, t)),
        Some(r) => {
            if !(r.t0 >= 0.0) || !r.t0.is_finite() {
                return Err(Error::invalid("ramp time must be finite and non-negative"));
            }
            if r.zero_field_triples.len() != triples.len()
                || r.zero_field_triples
                    .iter()
                    .zip(triples)
                    .any(|(a, b)| a.ion_id != b.ion_id)
            {
                return Err(Error::invalid(
                    "zero-field and applied-field triples cover different ions",
                ));
            }
            let zero: Vec<KineticsSolution> = r
                .zero_field_triples
                .iter()
                .map(KineticsSolution::new)
                .collect::<Result<_>>()?;
            let at_t0: Vec<Vec<[f64; 3]>> = zero
                .iter()
                .map(|s| {
                    let (c, sn) = s.kernels(r.t0);
                    d0.iter().map(|d| s.combine(*d, c, sn)).collect()
                })
                .collect();
            // rescale the continuation so that it meets the zero-field curve at t0
            let target = average(&zero, None, r.t0);
            let reached = average(&field, Some(&at_t0), 0.0);
            let scale: Vec<f64> = target
                .iter()
                .zip(&reached)
                .map(|(a, b)| if *b != 0.0 { a / b } else { 1.0 })
                .collect();
            let t0 = r.t0;
            Box::new(move |t| {
                if t <= t0 {
                    average(&zero, None, t)
                } else {
                    let v = average(&field, Some(&at_t0), t - t0);
                    v.iter().zip(&scale).map(|(x, s)| x * s).collect()
                }
            })
        }
    };
    let rows: Vec<Vec<f64>> = times.par_iter().map(|&t| eval(t)).collect();
    let norm = match normalization {
        Normalization::ExactOne => vec![1.0; levels.len()],
        Normalization::AtTime(tn) => eval(tn),
    };
    Ok((0..levels.len())
        .map(|j| rows.iter().map(|row| row[j] / norm[j]).collect())
        .collect())
}

/// All three ensemble class curves as a [`DecayCurve`].
pub fn ensemble_decay(
    triples: &[RateTriple],
    times: &[f64],
    ramp: Option<&Ramp>,
    normalization: Normalization,
    regime: FieldRegime,
) -> Result<DecayCurve> {
    let mut curve = DecayCurve::new(times.to_vec(), regime);
    curve.t0 = ramp.map(|r| r.t0);
    let curves = ensemble_levels_decay(triples, &Manifold::ALL, times, ramp, normalization)?;
    for (slot, c) in curve.populations.iter_mut().zip(curves) {
        *slot = Some(c);
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiexponentialFit {
    pub w1: f64,
    /// s, the shorter time constant.
    pub tau1: f64,
    pub w2: f64,
    pub tau2: f64,
    /// Sum of squared residuals.
    pub residual: f64,
    pub converged: bool,
    /// Set when the data support only one exponential: w1 = 1, w2 = 0, τ2 = τ1.
    pub degenerate: bool,
}

impl BiexponentialFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.w1 * (-t / self.tau1).exp() + self.w2 * (-t / self.tau2).exp()
    }
}

fn check_series(times: &[f64], values: &[f64], min: usize) -> Result<()> {
    check_times(times)?;
    if values.len() != times.len() {
        return Err(Error::DimensionMismatch(values.len(), times.len()));
    }
    if times.len() < min {
        return Err(Error::invalid(format!("at least {min} points are needed")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("values must be finite"));
    }
    Ok(())
}

/// Best w1 in [0, 1] for fixed time constants and its residual.
fn biexp_weight(times: &[f64], values: &[f64], tau1: f64, tau2: f64) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for (&t, &y) in times.iter().zip(values) {
        let (e1, e2) = ((-t / tau1).exp(), (-t / tau2).exp());
        num += (y - e2) * (e1 - e2);
        den += (e1 - e2) * (e1 - e2);
    }
    let w = if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let r = times
        .iter()
        .zip(values)
        .map(|(&t, &y)| {
            let m = w * (-t / tau1).exp() + (1.0 - w) * (-t / tau2).exp();
            (y - m).powi(2)
        })
        .sum();
    (w, r)
}

/// Least-squares fit of `w1 e^{−t/τ1} + (1 − w1) e^{−t/τ2}`.
pub fn biexponential_fit(times: &[f64], values: &[f64]) -> Result<BiexponentialFit> {
    check_series(times, values, 4)?;
    let t_lo = times.iter().copied().find(|t| *t > 0.0).unwrap_or(1.0);
    let t_hi = *times.last().unwrap();
    let (lo, hi) = ((t_lo / 10.0).ln(), (t_hi * 10.0).ln());
    let objective = |x: &[f64]| {
        if x.iter()
            .any(|v| !v.is_finite() || *v < lo - 10.0 || *v > hi + 10.0)
        {
            return f64::INFINITY;
        }
        biexp_weight(times, values, x[0].exp(), x[1].exp()).1
    };
    // coarse grid for the starting simplex
    let grid: Vec<f64> = (0..=12).map(|k| lo + (hi - lo) * k as f64 / 12.0).collect();
    let mut start = [grid[0], grid[1]];
    let mut best = f64::INFINITY;
    for (i, &a) in grid.iter().enumerate() {
        for &b in &grid[i + 1..] {
            let v = objective(&[a, b]);
            if v < best {
                best = v;
                start = [a, b];
            }
        }
    }
    let opts = NelderMeadOptions {
        max_evals: 4000,
        ftol: 0.0,
        xtol: 1e-13,
        initial_step: 0.3,
    };
    let mut r = nelder_mead(objective, &start, &opts);
    // a restart from the first optimum removes simplex collapse artefacts
    let r2 = nelder_mead(
        objective,
        &r.x,
        &NelderMeadOptions {
            initial_step: 0.05,
            ..opts
        },
    );
    if r2.f <= r.f {
        r = NelderMeadResult {
            converged: r.converged || r2.converged,
            ..r2
        };
    }
    let (mut t1, mut t2) = (r.x[0].exp(), r.x[1].exp());
    if t1 > t2 {
        std::mem::swap(&mut t1, &mut t2);
    }
    let (w, residual) = biexp_weight(times, values, t1, t2);
    let collapsed = (t2 / t1 - 1.0).abs() < 1e-3;
    let fit = if collapsed || w >= 1.0 || w <= 0.0 {
        // one exponential carries the data
        let tau = if w <= 0.0 && !collapsed { t2 } else { t1 };
        BiexponentialFit {
            w1: 1.0,
            tau1: tau,
            w2: 0.0,
            tau2: tau,
            residual,
            converged: r.converged,
            degenerate: true,
        }
    } else {
        BiexponentialFit {
            w1: w,
            tau1: t1,
            w2: 1.0 - w,
            tau2: t2,
            residual,
            converged: r.converged,
            degenerate: false,
        }
    };
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub tau: f64,
    pub residual: f64,
}

/// Least-squares fit of `e^{−t/τ}`.
pub fn single_exponential_fit(times: &[f64], values: &[f64]) -> Result<ExponentialFit> {
    check_series(times, values, 2)?;
    let sse = |tau: f64| -> f64 {
        times
            .iter()
            .zip(values)
            .map(|(&t, &y)| (y - (-t / tau).exp()).powi(2))
            .sum()
    };
    let t_lo = times.iter().copied().find(|t| *t > 0.0).unwrap_or(1.0);
    let t_hi = *times.last().unwrap();
    let (lo, hi) = ((t_lo / 100.0).ln(), (t_hi * 100.0).ln());
    let grid: Vec<f64> = (0..=200)
        .map(|k| lo + (hi - lo) * k as f64 / 200.0)
        .collect();
    let start = grid
        .iter()
        .copied()
        .min_by(|a, b| sse(a.exp()).total_cmp(&sse(b.exp())))
        .unwrap();
    let r = nelder_mead(
        |x| sse(x[0].exp()),
        &[start],
        &NelderMeadOptions {
            max_evals: 500,
            ftol: 0.0,
            xtol: 1e-12,
            initial_step: (hi - lo) / 200.0,
        },
    );
    Ok(ExponentialFit {
        tau: r.x[0].exp(),
        residual: r.f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(ab: f64, bc: f64, ac: f64) -> RateTriple {
        RateTriple::new(0, ab, bc, ac)
    }

    #[test]
    fn initial_condition_exact() {
        let tr = t(0.3, 0.02, 1e-4);
        let init = InitialPopulations::new(0.2, 0.5, 0.3);
        assert_eq!(evolve(&tr, &init, 0.0).unwrap(), [0.2, 0.5, 0.3]);
    }

    #[test]
    fn long_time_equilibrium() {
        let tr = t(0.3, 0.02, 1e-3);
        let n = evolve(&tr, &InitialPopulations::new(1.0, 0.0, 2.0), 1e5).unwrap();
        for v in n {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_rates() {
        let r = 0.01;
        let tr = t(r, r, r);
        for time in [0.0, 1.0, 50.0, 700.0] {
            let n = evolve(&tr, &InitialPopulations::A, time).unwrap();
            let want = 1.0 / 3.0 + (2.0 / 3.0) * (-3.0 * r * time).exp();
            assert!((n[0] - want).abs() < 1e-15);
            let c = class_curve(&tr, Manifold::A, time).unwrap();
            assert!((c - (-3.0 * r * time).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn class_curves_start_at_one() {
        let tr = t(0.1, 0.003, 2e-5);
        for l in Manifold::ALL {
            assert_eq!(class_curve(&tr, l, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn all_zero_rates() {
        let tr = t(0.0, 0.0, 0.0);
        assert_eq!(
            evolve(&tr, &InitialPopulations::B, 10.0).unwrap(),
            [0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(evolve(&t(-1.0, 0.0, 0.0), &InitialPopulations::A, 1.0).is_err());
        assert!(evolve(&t(1.0, 0.0, 0.0), &InitialPopulations::A, -1.0).is_err());
        assert!(evolve(
            &t(1.0, 0.0, 0.0),
            &InitialPopulations::new(0.0, 0.0, 0.0),
            1.0
        )
        .is_err());
    }

    #[test]
    fn degenerate_limit() {
        let r: f64 = 0.02;
        let time = 10.0;
        let limit = [
            1.0 / 3.0 + (2.0 / 3.0) * (-3.0 * r * time).exp(),
            1.0 / 3.0 - (1.0 / 3.0) * (-3.0 * r * time).exp(),
        ];
        for eps in [1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12] {
            let tr = t(r * (1.0 + eps), r, r * (1.0 - eps));
            let n = evolve(&tr, &InitialPopulations::A, time).unwrap();
            let s = KineticsSolution::new(&tr).unwrap();
            let err = (n[0] - limit[0])
                .abs()
                .max((n[1] - limit[1]).abs())
                .max((n[2] - limit[1]).abs());
            assert!(err <= 2.0 * s.sigma / s.k + 1e-15, "eps {eps}: error {err}");
        }
    }

    #[test]
    fn single_ion_ensemble_is_class_curve() {
        let tr = [t(0.1, 0.004, 3e-6)];
        let times = [0.0, 0.5, 3.0, 40.0, 900.0];
        let v =
            ensemble_level_decay(&tr, Manifold::B, &times, None, Normalization::ExactOne).unwrap();
        for (x, &time) in v.iter().zip(&times) {
            assert!((x - class_curve(&tr[0], Manifold::B, time).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn ramp_is_continuous_at_t0() {
        let zero = [t(0.1, 0.004, 3e-6), t(0.01, 0.2, 1e-3)];
        let field = [t(0.001, 4e-5, 1e-7), t(1e-4, 0.002, 1e-5)];
        let ramp = Ramp {
            t0: 4.6,
            zero_field_triples: &zero,
        };
        let times = [4.6 - 1e-9, 4.6, 4.6 + 1e-9];
        let v = ensemble_level_decay(
            &field,
            Manifold::A,
            &times,
            Some(&ramp),
            Normalization::ExactOne,
        )
        .unwrap();
        assert!((v[0] - v[1]).abs() < 1e-9 && (v[2] - v[1]).abs() < 1e-9);
        let mismatch = [t(1.0, 1.0, 1.0)];
        let ramp = Ramp {
            t0: 1.0,
            zero_field_triples: &mismatch,
        };
        assert!(ensemble_level_decay(
            &field,
            Manifold::A,
            &times,
            Some(&ramp),
            Normalization::ExactOne
        )
        .is_err());
    }

    #[test]
    fn normalization_at_time() {
        let tr = [t(0.1, 0.004, 3e-6)];
        let times = [0.005, 1.0, 10.0];
        let v = ensemble_level_decay(&tr, Manifold::A, &times, None, Normalization::AtTime(0.005))
            .unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mixture_is_convex_in_log() {
        let tr = [t(1.0, 0.0, 0.0), t(1e-3, 0.0, 0.0)];
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let v =
            ensemble_level_decay(&tr, Manifold::A, &times, None, Normalization::ExactOne).unwrap();
        let l: Vec<f64> = v.iter().map(|x| x.ln()).collect();
        for w in l.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] > 0.0);
        }
    }

    #[test]
    fn biexponential_recovers_exact_model() {
        let times: Vec<f64> = (0..60).map(|k| 0.005 * 1.2f64.powi(k)).collect();
        let truth = (0.52, 5.52, 0.48, 2193.0);
        let y: Vec<f64> = times
            .iter()
            .map(|t| truth.0 * (-t / truth.1).exp() + truth.2 * (-t / truth.3).exp())
            .collect();
        let f = biexponential_fit(&times, &y).unwrap();
        assert!(!f.degenerate);
        assert!((f.w1 / truth.0 - 1.0).abs() < 1e-6, "{f:?}");
        assert!((f.tau1 / truth.1 - 1.0).abs() < 1e-6, "{f:?}");
        assert!((f.w2 / truth.2 - 1.0).abs() < 1e-6, "{f:?}");
        assert!((f.tau2 / truth.3 - 1.0).abs() < 1e-6, "{f:?}");
    }

    #[test]
    fn biexponential_of_single_exponential() {
        let times: Vec<f64> = (0..40).map(|k| 0.1 * k as f64).collect();
        let y: Vec<f64> = times.iter().map(|t| (-t / 1.7).exp()).collect();
        let f = biexponential_fit(&times, &y).unwrap();
        assert!(
            f.degenerate || f.w2 < 1e-6 || (f.tau2 / f.tau1 - 1.0).abs() < 1e-3,
            "{f:?}"
        );
        assert!((f.eval(2.0) - (-2.0f64 / 1.7).exp()).abs() < 1e-6);
    }

    #[test]
    fn single_exponential_recovery() {
        let times: Vec<f64> = (0..30).map(|k| 0.2 * k as f64).collect();
        let y: Vec<f64> = times.iter().map(|t| (-t / 2.5).exp()).collect();
        let f = single_exponential_fit(&times, &y).unwrap();
        assert!((f.tau / 2.5 - 1.0).abs() < 1e-8);
    }
}
