//! Class bookkeeping after optical initialization and six-level absorption spectra.
//!
//! An ion is characterised by ν0, the frequency of its `a → a_e` transition.
//! Its `g → e` line then sits at `ν0 + E_e − E_g` with energies measured from
//! `a` and `a_e`. At a laser frequency f, class (g, e) holds the ions whose
//! `g → e` line is at f.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kinetics::InitialPopulations;
use crate::spinham::Manifold;

/// Burn recipe for isolating one ground level.
#[derive(Debug, Clone, PartialEq)]
pub struct Preparation {
    pub level: Manifold,
    /// MHz
    pub peak_frequency: f64,
    /// MHz
    pub background_frequency: f64,
    /// Level each class is shelved in, `[ground][excited]`.
    pub shelf: [[Manifold; 3]; 3],
}

fn shelf_rows(rows: [&str; 3]) -> [[Manifold; 3]; 3] {
    rows.map(|r| {
        let b = r.as_bytes();
        [0, 1, 2].map(|k| match b[k] {
            b'a' => Manifold::A,
            b'b' => Manifold::B,
            _ => Manifold::C,
        })
    })
}

impl Preparation {
    /// The three recipes used for Pr:YSO.
    pub fn defaults() -> Vec<Preparation> {
        vec![
            Preparation {
                level: Manifold::A,
                peak_frequency: 0.0,
                background_frequency: 2.0,
                shelf: shelf_rows(["ccc", "caa", "aaa"]),
            },
            Preparation {
                level: Manifold::B,
                peak_frequency: 14.7,
                background_frequency: 12.2,
                shelf: shelf_rows(["ccc", "ccc", "aaa"]),
            },
            Preparation {
                level: Manifold::C,
                peak_frequency: 36.9,
                background_frequency: 38.9,
                shelf: shelf_rows(["ccc", "ccc", "aaa"]),
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumConfig {
    /// a→b and b→c, MHz.
    pub ground_splittings: [f64; 2],
    /// a_e→b_e and b_e→c_e, MHz.
    pub excited_splittings: [f64; 2],
    /// `[ground][excited]` relative strengths; rows sum to 1.
    pub strengths: [[f64; 3]; 3],
    /// Optical FWHM, MHz.
    pub linewidth: f64,
    /// MHz
    pub scan_range: (f64, f64),
    /// Width of the initialized spectral region, MHz.
    pub burn_interval: f64,
    pub preparations: Vec<Preparation>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            ground_splittings: [10.19, 17.31],
            excited_splittings: [4.6, 4.8],
            strengths: [[0.55, 0.38, 0.07], [0.39, 0.60, 0.01], [0.06, 0.02, 0.92]],
            linewidth: 0.1,
            scan_range: (-40.0, 60.0),
            burn_interval: 1.0,
            preparations: Preparation::defaults(),
        }
    }
}

impl SpectrumConfig {
    pub fn validate(&self) -> Result<()> {
        if self
            .ground_splittings
            .iter()
            .chain(&self.excited_splittings)
            .any(|s| !(*s > 0.0) || !s.is_finite())
        {
            return Err(Error::invalid("hyperfine splittings must be positive"));
        }
        for (g, row) in self.strengths.iter().enumerate() {
            if row.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
                return Err(Error::invalid(format!(
                    "strength row {g} has a negative entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "strength row {g} sums to {sum}, not 1"
                )));
            }
        }
        if !(self.linewidth > 0.0) || !self.linewidth.is_finite() {
            return Err(Error::invalid("optical linewidth must be positive"));
        }
        if !(self.scan_range.0 < self.scan_range.1) {
            return Err(Error::invalid("scan range must be increasing"));
        }
        if !(self.burn_interval > 0.0) {
            return Err(Error::invalid("burn interval must be positive"));
        }
        Ok(())
    }

    /// Energy of ground level g above a, MHz.
    pub fn ground_offset(&self, g: Manifold) -> f64 {
        let [ab, bc] = self.ground_splittings;
        [0.0, ab, ab + bc][g.index()]
    }

    /// Energy of excited level e above a_e, MHz.
    pub fn excited_offset(&self, e: Manifold) -> f64 {
        let [ab, bc] = self.excited_splittings;
        [0.0, ab, ab + bc][e.index()]
    }

    /// Line position of `g → e` relative to ν0.
    pub fn transition_offset(&self, g: Manifold, e: Manifold) -> f64 {
        self.excited_offset(e) - self.ground_offset(g)
    }
}

const NUMERALS: [&str; 9] = ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX"];

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEntry {
    /// "I" to "IX".
    pub name: &'static str,
    pub ground: Manifold,
    pub excited: Manifold,
    /// MHz, relative to a and a_e.
    pub ground_offset: f64,
    pub excited_offset: f64,
    pub peak_init: InitialPopulations,
    pub background_init: InitialPopulations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassTable {
    pub burn_frequency: f64,
    pub background_frequency: f64,
    pub prepared_level: Manifold,
    /// Ordered I..IX, i.e. by (ground, excited).
    pub classes: Vec<ClassEntry>,
}

impl ClassTable {
    pub fn class(&self, ground: Manifold, excited: Manifold) -> &ClassEntry {
        &self.classes[3 * ground.index() + excited.index()]
    }

    /// The class whose peak and background differ.
    pub fn probed(&self) -> &ClassEntry {
        self.class(self.prepared_level, self.prepared_level)
    }
}

pub fn class_table(config: &SpectrumConfig, burn_frequency: f64) -> Result<ClassTable> {
    config.validate()?;
    let (lo, hi) = config.scan_range;
    if !(burn_frequency >= lo && burn_frequency <= hi) {
        return Err(Error::invalid(format!(
            "burn frequency {burn_frequency} MHz outside scan range [{lo}, {hi}] MHz"
        )));
    }
    let half = 0.5 * config.burn_interval;
    let prep = config
        .preparations
        .iter()
        .find(|p| (p.peak_frequency - burn_frequency).abs() <= half)
        .ok_or_else(|| {
            let mut near: Vec<&Preparation> = config.preparations.iter().collect();
            near.sort_by(|a, b| {
                (a.peak_frequency - burn_frequency)
                    .abs()
                    .total_cmp(&(b.peak_frequency - burn_frequency).abs())
            });
            Error::NoResonance {
                frequency: burn_frequency,
                nearest: near
                    .iter()
                    .map(|p| format!("{} MHz (level {})", p.peak_frequency, p.level.name()))
                    .collect::<Vec<_>>()
                    .join(", "),
            }
        })?;
    let mut classes = Vec::with_capacity(9);
    for g in Manifold::ALL {
        for e in Manifold::ALL {
            let shelf = InitialPopulations::in_level(prep.shelf[g.index()][e.index()]);
            let peak = if g == prep.level && e == prep.level {
                InitialPopulations::in_level(prep.level)
            } else {
                shelf
            };
            classes.push(ClassEntry {
                name: NUMERALS[3 * g.index() + e.index()],
                ground: g,
                excited: e,
                ground_offset: config.ground_offset(g),
                excited_offset: config.excited_offset(e),
                peak_init: peak,
                background_init: shelf,
            });
        }
    }
    Ok(ClassTable {
        burn_frequency,
        background_frequency: prep.background_frequency,
        prepared_level: prep.level,
        classes,
    })
}

/// Ground populations as a function of ν0: `ambient` everywhere except inside
/// each class window of width `burn_interval` around the burn frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumState {
    pub burn_frequency: f64,
    /// Populations outside every class window (all zero inside a transmission pit).
    pub ambient: [f64; 3],
    /// `[ground][excited]` populations of each class window.
    pub classes: [[[f64; 3]; 3]; 3],
}

impl SpectrumState {
    /// Every ion has the same populations; no window structure.
    pub fn uniform(populations: [f64; 3]) -> Self {
        SpectrumState {
            burn_frequency: 0.0,
            ambient: populations,
            classes: [[populations; 3]; 3],
        }
    }

    /// Peak populations of every class inside an empty pit.
    pub fn after_burn(table: &ClassTable) -> Self {
        let mut classes = [[[0.0; 3]; 3]; 3];
        for c in &table.classes {
            classes[c.ground.index()][c.excited.index()] = c.peak_init.as_array();
        }
        SpectrumState {
            burn_frequency: table.burn_frequency,
            ambient: [0.0; 3],
            classes,
        }
    }

    /// Only the probed class populated, in the prepared level.
    pub fn probed_class_only(table: &ClassTable) -> Self {
        let mut classes = [[[0.0; 3]; 3]; 3];
        let p = table.probed();
        classes[p.ground.index()][p.excited.index()] = p.peak_init.as_array();
        SpectrumState {
            burn_frequency: table.burn_frequency,
            ambient: [0.0; 3],
            classes,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut s = self.clone();
        s.ambient.iter_mut().for_each(|x| *x *= k);
        s.classes
            .iter_mut()
            .flatten()
            .flatten()
            .for_each(|x| *x *= k);
        s
    }
}

/// `∫_lo^hi L(ν − ν0 − shift) dν0` for a unit-area Lorentzian of half width γ.
fn window_integral(nu: f64, lo: f64, hi: f64, shift: f64, gamma: f64) -> f64 {
    (((nu - lo - shift) / gamma).atan() - ((nu - hi - shift) / gamma).atan()) / PI
}

/// Contribution of one class window to the absorption at ν, relative to ambient.
fn class_contribution(
    config: &SpectrumConfig,
    state: &SpectrumState,
    g0: Manifold,
    e0: Manifold,
    nu: f64,
) -> f64 {
    let gamma = 0.5 * config.linewidth;
    let center = state.burn_frequency - config.transition_offset(g0, e0);
    let (lo, hi) = (
        center - 0.5 * config.burn_interval,
        center + 0.5 * config.burn_interval,
    );
    let pops = state.classes[g0.index()][e0.index()];
    let mut a = 0.0;
    for g in Manifold::ALL {
        let dp = pops[g.index()] - state.ambient[g.index()];
        if dp == 0.0 {
            continue;
        }
        for e in Manifold::ALL {
            let s = config.strengths[g.index()][e.index()];
            a += s * dp * window_integral(nu, lo, hi, config.transition_offset(g, e), gamma);
        }
    }
    a
}

/// Absorption in arbitrary units at each detuning (MHz).
pub fn simulate_spectrum(
    config: &SpectrumConfig,
    state: &SpectrumState,
    detunings: &[f64],
) -> Result<Vec<f64>> {
    config.validate()?;
    let (lo, hi) = config.scan_range;
    if let Some(i) = detunings.iter().position(|v| !(*v >= lo && *v <= hi)) {
        return Err(Error::invalid(format!(
            "detuning {} MHz at index {i} outside scan range [{lo}, {hi}] MHz",
            detunings[i]
        )));
    }
    // the ambient population fills the whole line, and each line integrates to its strength
    let base: f64 = Manifold::ALL
        .iter()
        .map(|g| state.ambient[g.index()] * config.strengths[g.index()].iter().sum::<f64>())
        .sum();
    Ok(detunings
        .iter()
        .map(|&nu| {
            let mut a = base;
            for g0 in Manifold::ALL {
                for e0 in Manifold::ALL {
                    a += class_contribution(config, state, g0, e0, nu);
                }
            }
            a
        })
        .collect())
}

/// Absorption from a single class window, ambient excluded.
pub fn class_spectrum(
    config: &SpectrumConfig,
    state: &SpectrumState,
    ground: Manifold,
    excited: Manifold,
    detunings: &[f64],
) -> Vec<f64> {
    detunings
        .iter()
        .map(|&nu| class_contribution(config, state, ground, excited, nu))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationEstimate {
    /// Area above the edge-to-edge baseline, absorption × MHz.
    pub area: f64,
    /// Absorption at the background anchor.
    pub background: f64,
}

fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let k = grid.partition_point(|g| *g <= x).clamp(1, grid.len() - 1);
    let (x0, x1) = (grid[k - 1], grid[k]);
    let t = (x - x0) / (x1 - x0);
    values[k - 1] + t * (values[k] - values[k - 1])
}

/// Area of a peak above the straight line through the window edges, by the
/// trapezoid rule, plus the absorption read at `background_anchor`.
pub fn evaluate_population(
    grid: &[f64],
    absorption: &[f64],
    peak_window: (f64, f64),
    background_anchor: f64,
) -> Result<PopulationEstimate> {
    if grid.len() != absorption.len() {
        return Err(Error::DimensionMismatch(grid.len(), absorption.len()));
    }
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(
            "frequency grid must be strictly increasing with at least two points",
        ));
    }
    let (first, last) = (grid[0], grid[grid.len() - 1]);
    let (lo, hi) = peak_window;
    if !(lo < hi) || lo < first || hi > last {
        return Err(Error::invalid(format!(
            "peak window [{lo}, {hi}] MHz is not inside the grid [{first}, {last}] MHz"
        )));
    }
    if !(background_anchor >= first && background_anchor <= last) {
        return Err(Error::invalid(format!(
            "background anchor {background_anchor} MHz is outside the grid"
        )));
    }
    let (a_lo, a_hi) = (
        interpolate(grid, absorption, lo),
        interpolate(grid, absorption, hi),
    );
    let baseline = |x: f64| a_lo + (a_hi - a_lo) * (x - lo) / (hi - lo);
    let mut xs = vec![lo];
    let mut ys = vec![0.0];
    for (&x, &y) in grid.iter().zip(absorption) {
        if x > lo && x < hi {
            xs.push(x);
            ys.push(y - baseline(x));
        }
    }
    xs.push(hi);
    ys.push(0.0);
    let area = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum();
    Ok(PopulationEstimate {
        area,
        background: interpolate(grid, absorption, background_anchor),
    })
}
