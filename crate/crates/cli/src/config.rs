//! Run configuration: one TOML file with a `version = 1` header.

use std::path::{Path, PathBuf};

use flipflop_core::crystal::{y2sio5, LatticeDefinition};
use flipflop_core::fit::{Bounds, FitOptions, FitParams};
use flipflop_core::holeburn::{Preparation, SpectrumConfig};
use flipflop_core::kinetics::Normalization;
use flipflop_core::rates::{DensityParams, RateOptions};
use flipflop_core::spinham::{
    EulerAngles, SpinParams, PR_YSO_ORIENTATION_EULER_DEG, PR_YSO_QUAD_EULER_DEG,
    PR_YSO_ZEEMAN_EULER_DEG,
};
use nalgebra::Vector3;
use serde::Deserialize;

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

/// The Pr:YSO configuration shipped with the tool.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/pr_yso.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub spin: SpinSection,
    pub ensemble: EnsembleSection,
    pub field: FieldSection,
    pub zero_field: ZeroFieldSection,
    pub applied_field: AppliedFieldSection,
    pub kinetics: KineticsSection,
    #[serde(default)]
    pub histogram: HistogramSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub fit: FitSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    /// Lattice definition file, relative to the config file; the bundled Y2SiO5 lattice when absent.
    pub file: Option<PathBuf>,
    #[serde(default = "default_site_label")]
    pub site_label: u32,
}

fn default_site_label() -> u32 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinSection {
    pub nuclear_spin: f64,
    pub g_principal: [f64; 3],
    pub zeeman_euler_deg: [f64; 3],
    pub d_mhz: f64,
    pub e_mhz: f64,
    pub quad_euler_deg: [f64; 3],
    pub orientation_euler_deg: [[f64; 3]; 4],
}

impl Default for SpinSection {
    fn default() -> Self {
        let p = SpinParams::pr_yso_site1();
        SpinSection {
            nuclear_spin: p.nuclear_spin,
            g_principal: p.g_principal,
            zeeman_euler_deg: PR_YSO_ZEEMAN_EULER_DEG,
            d_mhz: p.d_mhz,
            e_mhz: p.e_mhz,
            quad_euler_deg: PR_YSO_QUAD_EULER_DEG,
            orientation_euler_deg: PR_YSO_ORIENTATION_EULER_DEG,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub radius_nm: f64,
    pub doping_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_neighbors")]
    pub neighbor_count: usize,
    #[serde(default = "default_margin")]
    pub core_margin_nm: f64,
}

fn default_neighbors() -> usize {
    20
}

fn default_margin() -> f64 {
    20.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    /// In the D1/D2/b frame, mT.
    pub applied_mt: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroFieldSection {
    pub t2_ms: f64,
    pub gamma_khz: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppliedFieldSection {
    pub t2_ms: f64,
    pub gamma_khz: [f64; 3],
    pub kappa: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsSection {
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub points: usize,
    /// Field switch-on time for applied-field curves.
    pub t0_s: f64,
    /// Divide simulated curves by their value at this time instead of starting at exactly 1.
    pub normalize_at_s: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramSection {
    pub bin_width_decades: f64,
}

impl Default for HistogramSection {
    fn default() -> Self {
        HistogramSection {
            bin_width_decades: 0.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreparationSection {
    /// "a", "b" or "c".
    pub level: String,
    pub peak_mhz: f64,
    pub background_mhz: f64,
    /// Three strings of three letters: the shelf level of class (ground, excited).
    pub shelf: [String; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub ground_splittings_mhz: [f64; 2],
    pub excited_splittings_mhz: [f64; 2],
    pub strengths: [[f64; 3]; 3],
    pub linewidth_mhz: f64,
    pub scan_range_mhz: [f64; 2],
    pub burn_interval_mhz: f64,
    pub points: usize,
    pub preparations: Option<Vec<PreparationSection>>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        let c = SpectrumConfig::default();
        SpectrumSection {
            ground_splittings_mhz: c.ground_splittings,
            excited_splittings_mhz: c.excited_splittings,
            strengths: c.strengths,
            linewidth_mhz: c.linewidth,
            scan_range_mhz: [c.scan_range.0, c.scan_range.1],
            burn_interval_mhz: c.burn_interval,
            points: 2001,
            preparations: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub budget: usize,
    pub restarts: usize,
    /// Γ_ab, Γ_bc, Γ_ac (kHz), κ_ab, κ_bc, κ_ac.
    pub lower: [f64; 6],
    pub upper: [f64; 6],
}

impl Default for FitSection {
    fn default() -> Self {
        let b = Bounds::default();
        FitSection {
            budget: 5000,
            restarts: 16,
            lower: b.lower,
            upper: b.upper,
        }
    }
}

fn manifold(name: &str) -> Result<flipflop_core::spinham::Manifold, CliError> {
    use flipflop_core::spinham::Manifold;
    match name {
        "a" => Ok(Manifold::A),
        "b" => Ok(Manifold::B),
        "c" => Ok(Manifold::C),
        other => Err(CliError::Input(format!(
            "unknown level {other:?}, expected a, b or c"
        ))),
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| CliError::Input(format!("{}: {}", origin.display(), e.message())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Input(format!(
                "{}: config version {} is not supported (expected {CONFIG_VERSION})",
                origin.display(),
                cfg.version
            )));
        }
        let mut cfg = cfg;
        if let Some(file) = &cfg.lattice.file {
            if file.is_relative() {
                let base = origin.parent().unwrap_or(Path::new("."));
                cfg.lattice.file = Some(base.join(file));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CONFIG, Path::new("configs/pr_yso.toml"))
            .expect("bundled config is valid")
    }

    /// Every section against its invariants; referenced files must exist.
    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(f) = &self.lattice.file {
            if !f.is_file() {
                return Err(CliError::Input(format!(
                    "lattice file {} does not exist",
                    f.display()
                )));
            }
        }
        self.lattice_definition()?;
        self.spin_params().validate()?;
        let e = &self.ensemble;
        if !(e.radius_nm > 0.0) || !e.radius_nm.is_finite() {
            return Err(CliError::Input(
                "ensemble.radius_nm must be positive".into(),
            ));
        }
        if !(e.doping_fraction > 0.0 && e.doping_fraction < 1.0) {
            return Err(CliError::Input(
                "ensemble.doping_fraction must lie in (0, 1)".into(),
            ));
        }
        if e.neighbor_count == 0 {
            return Err(CliError::Input(
                "ensemble.neighbor_count must be at least 1".into(),
            ));
        }
        if !(e.core_margin_nm >= 0.0) || e.core_margin_nm >= e.radius_nm {
            return Err(CliError::Input(
                "ensemble.core_margin_nm must lie in [0, radius_nm)".into(),
            ));
        }
        if !self.field.applied_mt.iter().all(|b| b.is_finite()) {
            return Err(CliError::Input("field.applied_mt must be finite".into()));
        }
        self.density(flipflop_core::rates::FieldRegime::ZeroField)
            .validate()?;
        self.density(flipflop_core::rates::FieldRegime::AppliedField)
            .validate()?;
        let k = &self.kinetics;
        if !(k.t_start_s > 0.0) || !(k.t_end_s > k.t_start_s) || k.points < 2 {
            return Err(CliError::Input(
                "kinetics: need 0 < t_start_s < t_end_s and at least two points".into(),
            ));
        }
        if !(k.t0_s >= 0.0) || !k.t0_s.is_finite() {
            return Err(CliError::Input("kinetics.t0_s must be non-negative".into()));
        }
        if let Some(t) = k.normalize_at_s {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(CliError::Input(
                    "kinetics.normalize_at_s must be non-negative".into(),
                ));
            }
        }
        if !(self.histogram.bin_width_decades > 0.0) {
            return Err(CliError::Input(
                "histogram.bin_width_decades must be positive".into(),
            ));
        }
        self.spectrum_config()?.validate()?;
        if self.spectrum.points < 2 {
            return Err(CliError::Input("spectrum.points must be at least 2".into()));
        }
        self.bounds().validate()?;
        if self.fit.budget < 100 || self.fit.restarts == 0 {
            return Err(CliError::Input(
                "fit: budget must be at least 100 and restarts at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn lattice_definition(&self) -> Result<LatticeDefinition, CliError> {
        let lattice = match &self.lattice.file {
            Some(f) => LatticeDefinition::load(f)?,
            None => y2sio5(),
        };
        if lattice.sites_with_label(self.lattice.site_label).is_empty() {
            return Err(CliError::Input(format!(
                "lattice {:?} has no sites with label {}",
                lattice.name, self.lattice.site_label
            )));
        }
        Ok(lattice)
    }

    pub fn spin_params(&self) -> SpinParams {
        let s = &self.spin;
        let euler = |a: [f64; 3]| EulerAngles::from_degrees(a[0], a[1], a[2]);
        SpinParams {
            nuclear_spin: s.nuclear_spin,
            g_principal: s.g_principal,
            zeeman_euler: euler(s.zeeman_euler_deg),
            d_mhz: s.d_mhz,
            e_mhz: s.e_mhz,
            quad_euler: euler(s.quad_euler_deg),
            orientation_transforms: s.orientation_euler_deg.map(euler),
        }
    }

    pub fn field(&self) -> Vector3<f64> {
        Vector3::from(self.field.applied_mt)
    }

    pub fn rate_options(&self, workers: Option<usize>) -> RateOptions {
        RateOptions {
            neighbor_count: self.ensemble.neighbor_count,
            core_margin_nm: self.ensemble.core_margin_nm,
            workers,
            ..Default::default()
        }
    }

    pub fn params(&self) -> FitParams {
        FitParams {
            gamma_khz: self.applied_field.gamma_khz,
            kappa: self.applied_field.kappa,
        }
    }

    pub fn density(&self, regime: flipflop_core::rates::FieldRegime) -> DensityParams {
        use flipflop_core::rates::FieldRegime;
        match regime {
            FieldRegime::ZeroField => {
                DensityParams::zero_field(self.zero_field.t2_ms * 1e-3, self.zero_field.gamma_khz)
            }
            FieldRegime::AppliedField => DensityParams::applied_field(
                self.applied_field.t2_ms * 1e-3,
                self.applied_field.gamma_khz,
                self.applied_field.kappa,
            ),
        }
    }

    /// Logarithmic time grid from `t_start_s` to `t_end_s`.
    pub fn times(&self) -> Vec<f64> {
        let k = &self.kinetics;
        let n = k.points;
        let ratio = k.t_end_s / k.t_start_s;
        let mut t: Vec<f64> = (0..n)
            .map(|i| k.t_start_s * ratio.powf(i as f64 / (n - 1) as f64))
            .collect();
        t[n - 1] = k.t_end_s;
        t
    }

    pub fn normalization(&self) -> Normalization {
        match self.kinetics.normalize_at_s {
            Some(t) => Normalization::AtTime(t),
            None => Normalization::ExactOne,
        }
    }

    pub fn spectrum_config(&self) -> Result<SpectrumConfig, CliError> {
        let s = &self.spectrum;
        let preparations = match &s.preparations {
            None => Preparation::defaults(),
            Some(list) => list
                .iter()
                .map(|p| {
                    let mut shelf = [[flipflop_core::spinham::Manifold::A; 3]; 3];
                    for (g, row) in p.shelf.iter().enumerate() {
                        if row.len() != 3 {
                            return Err(CliError::Input(format!(
                                "shelf row {row:?} must have three letters"
                            )));
                        }
                        for (e, ch) in row.chars().enumerate() {
                            shelf[g][e] = manifold(&ch.to_string())?;
                        }
                    }
                    Ok(Preparation {
                        level: manifold(&p.level)?,
                        peak_frequency: p.peak_mhz,
                        background_frequency: p.background_mhz,
                        shelf,
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        Ok(SpectrumConfig {
            ground_splittings: s.ground_splittings_mhz,
            excited_splittings: s.excited_splittings_mhz,
            strengths: s.strengths,
            linewidth: s.linewidth_mhz,
            scan_range: (s.scan_range_mhz[0], s.scan_range_mhz[1]),
            burn_interval: s.burn_interval_mhz,
            preparations,
        })
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            lower: self.fit.lower,
            upper: self.fit.upper,
        }
    }

    pub fn fit_options(&self, workers: Option<usize>) -> FitOptions {
        FitOptions {
            budget: self.fit.budget,
            restarts: self.fit.restarts,
            seed: self.ensemble.seed,
            workers,
        }
    }
}
