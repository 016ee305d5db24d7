//! Subcommand implementations. Each writes its CSVs under `out_dir` and returns
//! the lines it wants printed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use flipflop_core::crystal::{generate_ensemble, DopedEnsemble};
use flipflop_core::fit::{self, ModelContext, PARAM_NAMES};
use flipflop_core::holeburn::{class_table, simulate_spectrum, ClassTable, SpectrumState};
use flipflop_core::kinetics::{class_curve, ensemble_decay, DecayCurve, Normalization, Ramp};
use flipflop_core::rates::{
    ensemble_reduced_sums, triples_from_sums, FieldRegime, LevelPair, LogHistogram, RateTriple,
    ReducedSums,
};
use flipflop_core::spinham::Manifold;
use log::{info, warn};
use nalgebra::Vector3;

use crate::config::RunConfig;
use crate::io::{self, IngestOptions};
use crate::svg::{Plot, Series, Style};
use crate::CliError;

pub struct Context {
    pub config: RunConfig,
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
    pub svg: bool,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn plot(&self, name: &str, plot: &Plot) -> Result<(), CliError> {
        if self.svg {
            io::write_text(&self.path(name), &plot.render())?;
        }
        Ok(())
    }

    fn ensemble(&self) -> Result<DopedEnsemble, CliError> {
        let c = &self.config;
        let lattice = c.lattice_definition()?;
        let e = generate_ensemble(
            &lattice,
            c.lattice.site_label,
            c.ensemble.radius_nm,
            c.ensemble.doping_fraction,
            c.ensemble.seed,
        )?;
        let core = e.core_ids(c.ensemble.core_margin_nm).len();
        info!("ensemble: {} ions, {} centers", e.len(), core);
        if core == 0 {
            return Err(CliError::Input(
                "no ions inside the core region; increase radius_nm or doping_fraction".into(),
            ));
        }
        Ok(e)
    }

    fn sums(
        &self,
        ensemble: &DopedEnsemble,
        regime: FieldRegime,
    ) -> Result<Vec<ReducedSums>, CliError> {
        let field = match regime {
            FieldRegime::ZeroField => Vector3::zeros(),
            FieldRegime::AppliedField => self.config.field(),
        };
        info!("element sums, {}", regime.name());
        Ok(ensemble_reduced_sums(
            ensemble,
            &self.config.spin_params(),
            &field,
            &self.config.rate_options(self.workers),
        )?)
    }

    fn triples(&self, sums: &[ReducedSums], regime: FieldRegime) -> Vec<RateTriple> {
        triples_from_sums(sums, &self.config.density(regime))
    }
}

fn regimes(choice: Option<FieldRegime>) -> Vec<FieldRegime> {
    match choice {
        Some(r) => vec![r],
        None => vec![FieldRegime::ZeroField, FieldRegime::AppliedField],
    }
}

pub fn rates(ctx: &Context, regime: Option<FieldRegime>) -> Result<Vec<String>, CliError> {
    let ensemble = ctx.ensemble()?;
    let mut out = Vec::new();
    for regime in regimes(regime) {
        let sums = ctx.sums(&ensemble, regime)?;
        let triples = ctx.triples(&sums, regime);
        let name = regime.name();
        io::write_rates(&ctx.path(&format!("rates_{name}.csv")), &triples)?;
        let mut series = Vec::new();
        for pair in LevelPair::ALL {
            let h = LogHistogram::new(
                triples.iter().map(|t| t.get(pair)),
                ctx.config.histogram.bin_width_decades,
            )?;
            io::write_histogram(
                &ctx.path(&format!("histogram_{name}_{}.csv", pair.name())),
                &h,
            )?;
            let mode = h.mode().map_or("none".to_string(), |m| format!("{m:.3}"));
            out.push(format!(
                "{name} R_{}: mode log10(R/Hz) = {mode}, {} ions",
                pair.name(),
                triples.len()
            ));
            if h.skipped > 0 {
                warn!(
                    "{name} R_{}: {} non-positive rates left out of the histogram",
                    pair.name(),
                    h.skipped
                );
            }
            series.push(Series {
                name: format!("R_{}", pair.name()),
                points: h.bins.iter().map(|(c, n)| (*c, *n as f64)).collect(),
                style: Style::Step,
            });
        }
        ctx.plot(
            &format!("histogram_{name}.svg"),
            &Plot {
                title: format!("Flip-flop rates, {name}"),
                x_label: "log10(R / Hz)".into(),
                y_label: "ions".into(),
                log_x: false,
                series,
            },
        )?;
    }
    Ok(out)
}

fn decay_plot(title: String, curves: &[(&str, &DecayCurve)]) -> Plot {
    let mut series = Vec::new();
    for (label, c) in curves {
        for l in Manifold::ALL {
            if let Some(p) = c.level(l) {
                series.push(Series {
                    name: format!("{label}{}", l.name()),
                    points: c.times.iter().copied().zip(p.iter().copied()).collect(),
                    style: Style::Line,
                });
            }
        }
    }
    Plot {
        title,
        x_label: "time (s)".into(),
        y_label: "class population".into(),
        log_x: true,
        series,
    }
}

pub fn decay(
    ctx: &Context,
    regime: FieldRegime,
    single_ion: Option<usize>,
) -> Result<Vec<String>, CliError> {
    let ensemble = ctx.ensemble()?;
    let times = ctx.config.times();
    let zero_sums = ctx.sums(&ensemble, FieldRegime::ZeroField)?;
    let zero = ctx.triples(&zero_sums, FieldRegime::ZeroField);
    let triples = match regime {
        FieldRegime::ZeroField => zero.clone(),
        FieldRegime::AppliedField => ctx.triples(&ctx.sums(&ensemble, regime)?, regime),
    };
    let name = regime.name();
    let (curve, file) = match single_ion {
        Some(id) => {
            let t = triples.iter().find(|t| t.ion_id == id).ok_or_else(|| {
                CliError::Input(format!("ion {id} is not a center ion of this ensemble"))
            })?;
            let mut curve = DecayCurve::new(times.clone(), regime);
            for l in Manifold::ALL {
                let p = times
                    .iter()
                    .map(|&s| class_curve(t, l, s))
                    .collect::<Result<Vec<_>, _>>()?;
                curve.populations[l.index()] = Some(p);
            }
            (curve, format!("decay_{name}_ion{id}.csv"))
        }
        None => {
            let ramp = Ramp {
                t0: ctx.config.kinetics.t0_s,
                zero_field_triples: &zero,
            };
            let ramp = (regime == FieldRegime::AppliedField).then_some(&ramp);
            let curve = ensemble_decay(&triples, &times, ramp, ctx.config.normalization(), regime)?;
            (curve, format!("decay_{name}.csv"))
        }
    };
    io::write_decay(&ctx.path(&file), &curve)?;
    ctx.plot(
        &file.replace(".csv", ".svg"),
        &decay_plot(format!("Class decay, {name}"), &[("", &curve)]),
    )?;
    let mut out = vec![format!(
        "{file}: {} points, {} ions",
        times.len(),
        triples.len()
    )];
    let last = times.len() - 1;
    for l in Manifold::ALL {
        if let Some(p) = curve.level(l) {
            out.push(format!(
                "level {}: {} at {} s",
                l.name(),
                p[last],
                times[last]
            ));
        }
    }
    Ok(out)
}

pub struct FitInputs {
    pub zero_field: Option<PathBuf>,
    pub applied_field: Option<PathBuf>,
    pub ingest: IngestOptions,
    pub dry_run: bool,
    pub budget: Option<usize>,
    pub restarts: Option<usize>,
}

fn load_experiments(
    ctx: &Context,
    inputs: &FitInputs,
) -> Result<(Vec<DecayCurve>, Option<f64>), CliError> {
    let mut experiments = Vec::new();
    let mut norm: Option<f64> = None;
    let files = [
        (FieldRegime::ZeroField, &inputs.zero_field),
        (FieldRegime::AppliedField, &inputs.applied_field),
    ];
    for (regime, file) in files {
        let Some(path) = file else { continue };
        let ingested = io::ingest_decay(path, regime, &inputs.ingest)?;
        for w in &ingested.warnings {
            warn!("{w}");
        }
        if let Some(t) = ingested.normalized_at {
            if norm.is_some_and(|n| n != t) {
                return Err(CliError::Input(format!(
                    "data files are normalized at different times ({} s and {t} s)",
                    norm.unwrap_or_default()
                )));
            }
            norm = Some(t);
        }
        let mut curve = ingested.curve;
        if regime == FieldRegime::AppliedField {
            curve.t0 = Some(ctx.config.kinetics.t0_s);
        }
        experiments.push(curve);
    }
    if experiments.is_empty() {
        return Err(CliError::Input(
            "fit needs --zero-field and/or --applied-field data".into(),
        ));
    }
    fit::validate_experiments(&experiments)?;
    Ok((experiments, norm))
}

pub fn fit(ctx: &Context, inputs: &FitInputs) -> Result<Vec<String>, CliError> {
    let (experiments, normalized_at) = load_experiments(ctx, inputs)?;
    let points: usize = experiments
        .iter()
        .map(|e| e.times.len() * e.populations.iter().flatten().count())
        .sum();
    let mut options = ctx.config.fit_options(ctx.workers);
    options.budget = inputs.budget.unwrap_or(options.budget);
    options.restarts = inputs.restarts.unwrap_or(options.restarts);
    if options.budget < 100 || options.restarts == 0 {
        return Err(CliError::Input(
            "fit: budget must be at least 100 and restarts at least 1".into(),
        ));
    }
    if inputs.dry_run {
        return Ok(vec![format!(
            "dry run: config valid, {} curves with {points} points, budget {} over {} restarts",
            experiments.len(),
            options.budget,
            options.restarts
        )]);
    }
    let ensemble = ctx.ensemble()?;
    let c = &ctx.config;
    let mut model = ModelContext::new(
        ctx.sums(&ensemble, FieldRegime::ZeroField)?,
        ctx.sums(&ensemble, FieldRegime::AppliedField)?,
        c.zero_field.t2_ms * 1e-3,
        c.applied_field.t2_ms * 1e-3,
        c.kinetics.t0_s,
    )?;
    model.normalization = match normalized_at {
        Some(t) => Normalization::AtTime(t),
        None => c.normalization(),
    };
    info!("fitting {points} points, budget {}", options.budget);
    let result = fit::optimize(&experiments, &model, &ctx.config.bounds(), &options)?;

    let mut report = String::new();
    let _ = writeln!(report, "score {}", result.score);
    let _ = writeln!(
        report,
        "evaluations {}",
        result.trace.last().map_or(0, |t| t.0)
    );
    let _ = writeln!(report, "no_improvement {}", result.no_improvement);
    let _ = writeln!(report, "\nparameter value");
    for (name, v) in PARAM_NAMES.iter().zip(result.params.to_array()) {
        let unit = if name.starts_with("Gamma") {
            " kHz"
        } else {
            ""
        };
        let _ = writeln!(report, "{name} {v}{unit}");
    }
    let _ = writeln!(report, "\nsensitivity (relative score change at +5% / -5%)");
    for s in &result.sensitivity {
        let _ = writeln!(report, "{} {:+.4} {:+.4}", s.parameter, s.plus, s.minus);
    }
    let _ = writeln!(report, "\ncurve level score");
    for r in &result.residuals {
        let _ = writeln!(report, "{} {} {}", r.regime.name(), r.level.name(), r.score);
    }
    io::write_text(&ctx.path("fit_report.txt"), &report)?;
    let trace: Vec<Vec<String>> = result
        .trace
        .iter()
        .map(|(k, v)| vec![k.to_string(), v.to_string()])
        .collect();
    io::write_table(
        &ctx.path("fit_trace.csv"),
        &["evaluation", "best_score"],
        trace,
    )?;

    for exp in &experiments {
        let m = model.model_curve(&result.params, exp)?;
        let name = exp.regime.name();
        io::write_decay(&ctx.path(&format!("fit_model_{name}.csv")), &m)?;
        ctx.plot(
            &format!("fit_{name}.svg"),
            &decay_plot(format!("Fit, {name}"), &[("data ", exp), ("model ", &m)]),
        )?;
    }
    ctx.plot(
        "fit_trace.svg",
        &Plot {
            title: "Best score".into(),
            x_label: "evaluation".into(),
            y_label: "log10 score".into(),
            log_x: false,
            series: vec![Series {
                name: "best".into(),
                points: result
                    .trace
                    .iter()
                    .map(|(k, v)| (*k as f64, v.log10()))
                    .collect(),
                style: Style::Step,
            }],
        },
    )?;
    if result.no_improvement {
        warn!("no local search improved on the best starting point");
    }
    let mut out = vec![format!("score {}", result.score)];
    for (name, v) in PARAM_NAMES.iter().zip(result.params.to_array()) {
        out.push(format!("{name} = {v:.4}"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMode {
    /// Every class window after the burn.
    Full,
    /// Only the probed class.
    ClassOnly,
    /// Before any burn.
    NoBurn,
}

pub fn format_class_table(table: &ClassTable) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "burn {} MHz, background {} MHz, prepared level {}",
        table.burn_frequency,
        table.background_frequency,
        table.prepared_level.name()
    );
    let _ = writeln!(
        s,
        "class ground excited ground_offset_MHz excited_offset_MHz peak_init background_init"
    );
    let init = |p: [f64; 3]| p.map(|v| v.to_string()).join("/");
    for c in &table.classes {
        let _ = writeln!(
            s,
            "{} {} {}e {} {} {} {}",
            c.name,
            c.ground.name(),
            c.excited.name(),
            c.ground_offset,
            c.excited_offset,
            init(c.peak_init.as_array()),
            init(c.background_init.as_array())
        );
    }
    s
}

pub fn spectrum(
    ctx: &Context,
    burn: Option<f64>,
    level: Option<Manifold>,
    mode: SpectrumMode,
) -> Result<Vec<String>, CliError> {
    let config = ctx.config.spectrum_config()?;
    let burn = match (burn, level) {
        (Some(f), None) => f,
        (None, level) => {
            let level = level.unwrap_or(Manifold::A);
            config
                .preparations
                .iter()
                .find(|p| p.level == level)
                .map(|p| p.peak_frequency)
                .ok_or_else(|| {
                    CliError::Input(format!("no preparation for level {}", level.name()))
                })?
        }
        (Some(_), Some(_)) => {
            return Err(CliError::Input(
                "give either --burn or --level, not both".into(),
            ))
        }
    };
    let (lo, hi) = config.scan_range;
    let n = ctx.config.spectrum.points;
    let grid: Vec<f64> = (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect();
    let mut out = Vec::new();
    let state = match mode {
        SpectrumMode::NoBurn => SpectrumState::uniform([1.0 / 3.0; 3]),
        _ => {
            let table = class_table(&config, burn)?;
            let text = format_class_table(&table);
            io::write_text(&ctx.path("spectrum_classes.txt"), &text)?;
            out.extend(text.lines().map(str::to_string));
            if mode == SpectrumMode::Full {
                SpectrumState::after_burn(&table)
            } else {
                SpectrumState::probed_class_only(&table)
            }
        }
    };
    let absorption = simulate_spectrum(&config, &state, &grid)?;
    io::write_spectrum(&ctx.path("spectrum.csv"), &grid, &absorption)?;
    ctx.plot(
        "spectrum.svg",
        &Plot {
            title: format!("Absorption, burn at {burn} MHz"),
            x_label: "detuning (MHz)".into(),
            y_label: "absorption (a.u.)".into(),
            log_x: false,
            series: vec![Series {
                name: "absorption".into(),
                points: grid
                    .iter()
                    .copied()
                    .zip(absorption.iter().copied())
                    .collect(),
                style: Style::Line,
            }],
        },
    )?;
    out.push(format!("spectrum.csv: {n} points over [{lo}, {hi}] MHz"));
    Ok(out)
}

pub fn gen_lattice_demo(ctx: &Context, radius_nm: f64) -> Result<Vec<String>, CliError> {
    let c = &ctx.config;
    let lattice = c.lattice_definition()?;
    let lattice_path = ctx.path("lattice_demo.toml");
    io::write_text(&lattice_path, &lattice.to_toml_string())?;
    let e = generate_ensemble(
        &lattice,
        c.lattice.site_label,
        radius_nm,
        c.ensemble.doping_fraction,
        c.ensemble.seed,
    )?;
    io::write_ions(&ctx.path("ensemble_demo.csv"), &e)?;
    Ok(vec![
        format!(
            "{}: {} sites per cell",
            display(&lattice_path),
            lattice.sites.len()
        ),
        format!(
            "ensemble_demo.csv: {} ions in a {radius_nm} nm sphere",
            e.len()
        ),
    ])
}

fn display(p: &Path) -> String {
    p.file_name().map_or_else(
        || p.display().to_string(),
        |f| f.to_string_lossy().into_owned(),
    )
}
