//! Fitting the six linewidth parameters to measured decay curves.
//!
//! Squared matrix elements do not depend on Γ or κ, so a [`ModelContext`] keeps
//! the per-ion [`ReducedSums`] for each field regime and every candidate only
//! rescales them by the density of states.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kinetics::{ensemble_levels_decay, DecayCurve, Normalization, Ramp};
use crate::optim::{latin_hypercube, nelder_mead, NelderMeadOptions};
use crate::rates::{triples_from_sums, DensityParams, FieldRegime, RateTriple, ReducedSums};
use crate::spinham::Manifold;

pub const PARAM_NAMES: [&str; 6] = [
    "Gamma_ab", "Gamma_bc", "Gamma_ac", "kappa_ab", "kappa_bc", "kappa_ac",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    /// kHz, ordered ab, bc, ac.
    pub gamma_khz: [f64; 3],
    pub kappa: [f64; 3],
}

impl FitParams {
    /// Best fit reported for Pr:YSO.
    pub fn pr_yso() -> Self {
        FitParams {
            gamma_khz: [0.618, 3.309, 2.664],
            kappa: [2.6, 3.6, 1.5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        let [g0, g1, g2] = self.gamma_khz;
        let [k0, k1, k2] = self.kappa;
        [g0, g1, g2, k0, k1, k2]
    }

    pub fn from_array(x: [f64; 6]) -> Self {
        FitParams {
            gamma_khz: [x[0], x[1], x[2]],
            kappa: [x[3], x[4], x[5]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma_khz.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(Error::invalid("inhomogeneous linewidths must be positive"));
        }
        if self.kappa.iter().any(|k| !(*k >= 1.0) || !k.is_finite()) {
            return Err(Error::invalid(
                "field broadening factors must be at least 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: [f64; 6],
    pub upper: [f64; 6],
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            lower: [0.01, 0.01, 0.01, 1.0, 1.0, 1.0],
            upper: [100.0, 100.0, 100.0, 20.0, 20.0, 20.0],
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        for k in 0..6 {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!(
                    "bounds for {} are empty",
                    PARAM_NAMES[k]
                )));
            }
        }
        if self.lower[..3].iter().any(|g| !(*g > 0.0)) {
            return Err(Error::invalid("linewidth lower bounds must be positive"));
        }
        if self.lower[3..].iter().any(|k| !(*k >= 1.0)) {
            return Err(Error::invalid(
                "field factor lower bounds must be at least 1",
            ));
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64; 6]) -> bool {
        (0..6).all(|k| x[k] >= self.lower[k] && x[k] <= self.upper[k])
    }

    /// Unit-cube coordinate to parameter: logarithmic for the linewidths, linear for κ.
    fn from_unit(&self, u: &[f64]) -> [f64; 6] {
        let mut x = [0.0; 6];
        for k in 0..6 {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            let v = u[k].clamp(0.0, 1.0);
            x[k] = if k < 3 {
                (lo.ln() + v * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
            } else {
                (lo + v * (hi - lo)).clamp(lo, hi)
            };
        }
        x
    }
}

/// Cached ensemble data shared by every score evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelContext {
    pub zero_field: Vec<ReducedSums>,
    pub applied_field: Vec<ReducedSums>,
    /// s
    pub t2_zero_field: f64,
    /// s
    pub t2_applied_field: f64,
    /// Field switch-on time used when a curve does not carry its own, s.
    pub t0: f64,
    pub normalization: Normalization,
}

impl ModelContext {
    pub fn new(
        zero_field: Vec<ReducedSums>,
        applied_field: Vec<ReducedSums>,
        t2_zero_field: f64,
        t2_applied_field: f64,
        t0: f64,
    ) -> Result<Self> {
        if zero_field.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if zero_field.len() != applied_field.len()
            || zero_field
                .iter()
                .zip(&applied_field)
                .any(|(a, b)| a.ion_id != b.ion_id)
        {
            return Err(Error::invalid(
                "zero-field and applied-field sums cover different ions",
            ));
        }
        if !(t2_zero_field > 0.0) || !(t2_applied_field > 0.0) {
            return Err(Error::invalid("coherence times must be positive"));
        }
        if !(t0 >= 0.0) || !t0.is_finite() {
            return Err(Error::invalid(
                "field switch-on time must be finite and non-negative",
            ));
        }
        Ok(ModelContext {
            zero_field,
            applied_field,
            t2_zero_field,
            t2_applied_field,
            t0,
            normalization: Normalization::ExactOne,
        })
    }

    pub fn density_params(&self, params: &FitParams, regime: FieldRegime) -> DensityParams {
        match regime {
            FieldRegime::ZeroField => {
                DensityParams::zero_field(self.t2_zero_field, params.gamma_khz)
            }
            FieldRegime::AppliedField => {
                DensityParams::applied_field(self.t2_applied_field, params.gamma_khz, params.kappa)
            }
        }
    }

    pub fn triples(&self, params: &FitParams, regime: FieldRegime) -> Vec<RateTriple> {
        let sums = match regime {
            FieldRegime::ZeroField => &self.zero_field,
            FieldRegime::AppliedField => &self.applied_field,
        };
        triples_from_sums(sums, &self.density_params(params, regime))
    }

    /// Model curves on the time grid of `experiment`, for the levels it contains.
    pub fn model_curve(&self, params: &FitParams, experiment: &DecayCurve) -> Result<DecayCurve> {
        params.validate()?;
        let zero = self.triples(params, FieldRegime::ZeroField);
        let field = match experiment.regime {
            FieldRegime::ZeroField => Vec::new(),
            FieldRegime::AppliedField => self.triples(params, FieldRegime::AppliedField),
        };
        model_curve_from_triples(experiment, &zero, &field, self.t0, self.normalization)
    }
}

fn model_curve_from_triples(
    experiment: &DecayCurve,
    zero: &[RateTriple],
    field: &[RateTriple],
    default_t0: f64,
    normalization: Normalization,
) -> Result<DecayCurve> {
    let mut out = DecayCurve::new(experiment.times.clone(), experiment.regime);
    let levels: Vec<Manifold> = Manifold::ALL
        .into_iter()
        .filter(|l| experiment.populations[l.index()].is_some())
        .collect();
    if levels.is_empty() {
        return Ok(out);
    }
    let curves = match experiment.regime {
        FieldRegime::ZeroField => {
            ensemble_levels_decay(zero, &levels, &experiment.times, None, normalization)?
        }
        FieldRegime::AppliedField => {
            let t0 = experiment.t0.unwrap_or(default_t0);
            out.t0 = Some(t0);
            let ramp = Ramp {
                t0,
                zero_field_triples: zero,
            };
            ensemble_levels_decay(
                field,
                &levels,
                &experiment.times,
                Some(&ramp),
                normalization,
            )?
        }
    };
    for (level, curve) in levels.iter().zip(curves) {
        out.populations[level.index()] = Some(curve);
    }
    Ok(out)
}

/// Rejects curves the score cannot use: zero or negative populations or weights.
pub fn validate_experiments(experiments: &[DecayCurve]) -> Result<()> {
    if experiments.is_empty() {
        return Err(Error::invalid("no experimental curves"));
    }
    for (n, e) in experiments.iter().enumerate() {
        e.validate()?;
        if e.populations.iter().all(Option::is_none) {
            return Err(Error::invalid(format!("curve {n} holds no populations")));
        }
        for level in Manifold::ALL {
            let k = level.index();
            if let Some(p) = &e.populations[k] {
                if let Some(i) = p.iter().position(|v| !(*v > 0.0)) {
                    return Err(Error::invalid(format!(
                        "curve {n}, level {}: population at index {i} is not positive",
                        level.name()
                    )));
                }
            }
            if let Some(w) = &e.weights[k] {
                if let Some(i) = w.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(Error::invalid(format!(
                        "curve {n}, level {}: weight at index {i} is not positive",
                        level.name()
                    )));
                }
            }
        }
    }
    Ok(())
}

/// `Σ ((p_e − p_m) / (w p_e))²` for one experimental series; w = 1 without weights.
pub fn series_score(measured: &[f64], model: &[f64], weights: Option<&[f64]>) -> f64 {
    let mut s = 0.0;
    for (i, (&pe, &pm)) in measured.iter().zip(model).enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        s += ((pe - pm) / (w * pe)).powi(2);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveResidual {
    pub curve: usize,
    pub regime: FieldRegime,
    pub level: Manifold,
    pub score: f64,
}

/// Per-series contributions to the score, given precomputed rates.
pub fn residuals_from_triples(
    experiments: &[DecayCurve],
    zero: &[RateTriple],
    field: &[RateTriple],
    t0: f64,
    normalization: Normalization,
) -> Result<Vec<CurveResidual>> {
    let mut out = Vec::new();
    for (n, e) in experiments.iter().enumerate() {
        let model = model_curve_from_triples(e, zero, field, t0, normalization)?;
        for level in Manifold::ALL {
            let k = level.index();
            if let (Some(pe), Some(pm)) = (&e.populations[k], &model.populations[k]) {
                out.push(CurveResidual {
                    curve: n,
                    regime: e.regime,
                    level,
                    score: series_score(pe, pm, e.weights[k].as_deref()),
                });
            }
        }
    }
    Ok(out)
}

pub fn residuals(
    params: &FitParams,
    experiments: &[DecayCurve],
    context: &ModelContext,
) -> Result<Vec<CurveResidual>> {
    params.validate()?;
    let zero = context.triples(params, FieldRegime::ZeroField);
    let needs_field = experiments
        .iter()
        .any(|e| e.regime == FieldRegime::AppliedField);
    let field = if needs_field {
        context.triples(params, FieldRegime::AppliedField)
    } else {
        Vec::new()
    };
    residuals_from_triples(
        experiments,
        &zero,
        &field,
        context.t0,
        context.normalization,
    )
}

/// Total score over all curves, levels and field regimes.
pub fn score(
    params: &FitParams,
    experiments: &[DecayCurve],
    context: &ModelContext,
) -> Result<f64> {
    Ok(residuals(params, experiments, context)?
        .iter()
        .map(|r| r.score)
        .sum())
}

/// Model curves for `params` with multiplicative Gaussian noise of relative size
/// `noise`; the weights are set to `noise` (or 1 when it is zero).
pub fn synthetic_experiments(
    params: &FitParams,
    context: &ModelContext,
    times: &[f64],
    regimes: &[FieldRegime],
    noise: f64,
    seed: u64,
) -> Result<Vec<DecayCurve>> {
    if !(noise >= 0.0) || !(noise < 0.5) {
        return Err(Error::invalid("noise must lie in [0, 0.5)"));
    }
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &regime in regimes {
        let mut template = DecayCurve::new(times.to_vec(), regime);
        template.populations = [Some(Vec::new()), Some(Vec::new()), Some(Vec::new())];
        let mut curve = context.model_curve(params, &template)?;
        for k in 0..3 {
            if let Some(p) = curve.populations[k].as_mut() {
                for v in p.iter_mut() {
                    *v *= 1.0 + noise * normal.sample(&mut rng);
                }
            }
            let w = if noise > 0.0 { noise } else { 1.0 };
            curve.weights[k] = Some(vec![w; times.len()]);
        }
        out.push(curve);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Total objective evaluations across all restarts.
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            budget: 5000,
            restarts: 16,
            seed: 1,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveFit {
    pub x: [f64; 6],
    pub value: f64,
    /// (evaluation, best value so far)
    pub trace: Vec<(usize, f64)>,
    /// No local search improved on the best starting point.
    pub no_improvement: bool,
    pub evaluations: usize,
}

/// Multi-start Nelder–Mead over `bounds`, exposed for substitute objectives.
///
/// Local searches work in unit-cube coordinates (log scale for the linewidths).
/// A share of the budget is spent on the Latin-hypercube restarts, the rest on
/// polishing the best of them.
pub fn optimize_objective<F>(
    objective: F,
    bounds: &Bounds,
    options: &FitOptions,
) -> Result<ObjectiveFit>
where
    F: Fn(&[f64; 6]) -> f64 + Sync,
{
    bounds.validate()?;
    if options.budget < 100 {
        return Err(Error::invalid("evaluation budget must be at least 100"));
    }
    if options.restarts == 0 {
        return Err(Error::invalid("at least one restart is needed"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let starts = latin_hypercube(options.restarts, 6, &mut rng);
    let unit_objective = |u: &[f64]| {
        // outside the cube: value at the clamped point plus a penalty
        let excess: f64 = u.iter().map(|v| (v - v.clamp(0.0, 1.0)).powi(2)).sum();
        let f = objective(&bounds.from_unit(u));
        if excess > 0.0 {
            f + 1e3 * excess * (1.0 + f.abs())
        } else {
            f
        }
    };
    let per_start = ((options.budget * 3 / 5) / options.restarts).max(7);
    let local = NelderMeadOptions {
        max_evals: per_start,
        ftol: 1e-10,
        xtol: 1e-7,
        initial_step: 0.1,
    };
    let runs = crate::rates::with_workers(options.workers, || {
        starts
            .par_iter()
            .map(|u0| nelder_mead(unit_objective, u0, &local))
            .collect::<Vec<_>>()
    })?;
    let start_best = runs
        .iter()
        .map(|r| r.trace[0])
        .fold(f64::INFINITY, f64::min);
    // lowest value wins; ties go to the earlier restart
    let mut best = 0;
    for (k, r) in runs.iter().enumerate() {
        if r.f < runs[best].f {
            best = k;
        }
    }
    let used: usize = runs.iter().map(|r| r.evals).sum();
    let polish_budget = options.budget.saturating_sub(used);
    let mut trace = Vec::new();
    let mut running = f64::INFINITY;
    let mut n = 0;
    for r in &runs {
        for v in &r.trace {
            n += 1;
            running = running.min(*v);
            trace.push((n, running));
        }
    }
    let (mut u, mut value) = (runs[best].x.clone(), runs[best].f);
    if polish_budget > 7 {
        let polish = nelder_mead(
            unit_objective,
            &u,
            &NelderMeadOptions {
                max_evals: polish_budget,
                initial_step: 0.02,
                ..local
            },
        );
        for v in &polish.trace {
            n += 1;
            running = running.min(*v);
            trace.push((n, running));
        }
        if polish.f < value {
            u = polish.x;
            value = polish.f;
        }
    }
    let x = bounds.from_unit(&u);
    // the objective at the clamped point actually returned
    let value = if u.iter().all(|v| (0.0..=1.0).contains(v)) {
        value
    } else {
        objective(&x)
    };
    Ok(ObjectiveFit {
        x,
        value,
        trace,
        no_improvement: !(value < start_best),
        evaluations: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    pub parameter: &'static str,
    /// Relative score change for +5% and −5%.
    pub plus: f64,
    pub minus: f64,
}

impl Sensitivity {
    pub fn magnitude(&self) -> f64 {
        self.plus.abs().max(self.minus.abs())
    }
}

/// Relative score change when each parameter is moved by ±5%.
///
/// κ is not clamped at 1 here, so the table stays symmetric at the lower bound.
pub fn sensitivity_table(
    params: &FitParams,
    experiments: &[DecayCurve],
    context: &ModelContext,
) -> Result<Vec<Sensitivity>> {
    let base = score(params, experiments, context)?;
    let x = params.to_array();
    let eval = |k: usize, factor: f64| -> Result<f64> {
        let mut y = x;
        y[k] *= factor;
        let p = FitParams::from_array(y);
        let zero = context.triples(&p, FieldRegime::ZeroField);
        let field = context.triples(&p, FieldRegime::AppliedField);
        let r = residuals_from_triples(
            experiments,
            &zero,
            &field,
            context.t0,
            context.normalization,
        )?;
        Ok(r.iter().map(|c| c.score).sum())
    };
    (0..6)
        .map(|k| {
            let rel = |v: f64| if base > 0.0 { (v - base) / base } else { v };
            Ok(Sensitivity {
                parameter: PARAM_NAMES[k],
                plus: rel(eval(k, 1.05)?),
                minus: rel(eval(k, 0.95)?),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: FitParams,
    pub score: f64,
    pub residuals: Vec<CurveResidual>,
    pub trace: Vec<(usize, f64)>,
    pub sensitivity: Vec<Sensitivity>,
    pub no_improvement: bool,
}

pub fn optimize(
    experiments: &[DecayCurve],
    context: &ModelContext,
    bounds: &Bounds,
    options: &FitOptions,
) -> Result<FitResult> {
    validate_experiments(experiments)?;
    let objective = |x: &[f64; 6]| {
        score(&FitParams::from_array(*x), experiments, context).unwrap_or(f64::INFINITY)
    };
    let fit = optimize_objective(objective, bounds, options)?;
    let params = FitParams::from_array(fit.x);
    let residuals = residuals(&params, experiments, context)?;
    let score = residuals.iter().map(|r| r.score).sum();
    if !f64::is_finite(score) {
        return Err(Error::Numerical(
            "score is not finite at the optimum".into(),
        ));
    }
    Ok(FitResult {
        params,
        score,
        residuals,
        trace: fit.trace,
        sensitivity: sensitivity_table(&params, experiments, context)?,
        no_improvement: fit.no_improvement,
    })
}
