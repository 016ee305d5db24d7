//! Golden-rule flip-flop rates per ion and their reduction to three effective rates.
//!
//! For a center going x → y while a neighbour goes y → x,
//! `R(x→y) = Σ_j 4π² |⟨y⊗x|H_dd|x⊗y⟩|² f_xy / 6`, with the element in Hz and
//! f in Hz⁻¹. Only f depends on the linewidth parameters, so the squared
//! elements can be summed once per ensemble and reused.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::constants::KHZ_TO_HZ;
use crate::crystal::{DopedEnsemble, NeighborIndex, NeighborSet};
use crate::dipole::{coupling_tensor_with, flipflop_amplitude, CouplingModel};
use crate::error::{Error, Result};
use crate::spinham::{build_tensors, eigensystem, HyperfineSystem, Level, Manifold, SpinParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldRegime {
    ZeroField,
    AppliedField,
}

impl FieldRegime {
    pub fn name(self) -> &'static str {
        match self {
            FieldRegime::ZeroField => "zero-field",
            FieldRegime::AppliedField => "applied-field",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LevelPair {
    AB,
    BC,
    AC,
}

impl LevelPair {
    pub const ALL: [LevelPair; 3] = [LevelPair::AB, LevelPair::BC, LevelPair::AC];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["ab", "bc", "ac"][self as usize]
    }

    pub fn manifolds(self) -> (Manifold, Manifold) {
        match self {
            LevelPair::AB => (Manifold::A, Manifold::B),
            LevelPair::BC => (Manifold::B, Manifold::C),
            LevelPair::AC => (Manifold::A, Manifold::C),
        }
    }

    pub fn of(x: Manifold, y: Manifold) -> Option<LevelPair> {
        use Manifold::*;
        match (x.min(y), x.max(y)) {
            (A, B) => Some(LevelPair::AB),
            (B, C) => Some(LevelPair::BC),
            (A, C) => Some(LevelPair::AC),
            _ => None,
        }
    }
}

/// Linewidth parameters for one field regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityParams {
    pub regime: FieldRegime,
    /// Homogeneous coherence time, s.
    pub t2_s: f64,
    /// Γ_ab, Γ_bc, Γ_ac in kHz.
    pub gamma_khz: [f64; 3],
    /// κ_ab, κ_bc, κ_ac.
    pub kappa: [f64; 3],
}

impl DensityParams {
    pub fn zero_field(t2_s: f64, gamma_khz: [f64; 3]) -> Self {
        DensityParams {
            regime: FieldRegime::ZeroField,
            t2_s,
            gamma_khz,
            kappa: [1.0; 3],
        }
    }

    pub fn applied_field(t2_s: f64, gamma_khz: [f64; 3], kappa: [f64; 3]) -> Self {
        DensityParams {
            regime: FieldRegime::AppliedField,
            t2_s,
            gamma_khz,
            kappa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t2_s > 0.0) || !self.t2_s.is_finite() {
            return Err(Error::invalid("T2 must be positive"));
        }
        if self
            .gamma_khz
            .iter()
            .any(|g| !(*g >= 0.0) || !g.is_finite())
        {
            return Err(Error::invalid(
                "inhomogeneous linewidths must be non-negative",
            ));
        }
        match self.regime {
            FieldRegime::ZeroField if self.kappa != [1.0; 3] => {
                Err(Error::invalid("kappa must be 1 at zero field"))
            }
            _ if self.kappa.iter().any(|k| !(*k >= 1.0) || !k.is_finite()) => {
                Err(Error::invalid("kappa must be at least 1"))
            }
            _ => Ok(()),
        }
    }

    /// Γ_hom = 1/(π T2) in Hz.
    pub fn gamma_hom_hz(&self) -> f64 {
        1.0 / (PI * self.t2_s)
    }
}

/// `(1/π) Γ_hom / (Γ_hom² + (κ Γ_xy)²)` in Hz⁻¹.
pub fn density_of_states(pair: LevelPair, params: &DensityParams) -> f64 {
    let gh = params.gamma_hom_hz();
    let k = pair.index();
    let gi = params.kappa[k] * params.gamma_khz[k] * KHZ_TO_HZ;
    gh / (PI * (gh * gh + gi * gi))
}

/// `4π²/6`: golden-rule factor with the 1/6 occupancy of the partner level.
pub const RATE_PREFACTOR: f64 = 4.0 * PI * PI / 6.0;

/// Eigensystems and Zeeman tensors for the four orientation classes at one field.
#[derive(Debug, Clone)]
pub struct SystemTable {
    pub field_mt: Vector3<f64>,
    pub zeeman: [Matrix3<f64>; 4],
    pub systems: Vec<HyperfineSystem>,
}

impl SystemTable {
    pub fn new(spin: &SpinParams, field_mt: &Vector3<f64>) -> Result<Self> {
        if spin.dimension() != 6 {
            return Err(Error::DimensionMismatch(spin.dimension(), 6));
        }
        let mut zeeman = [Matrix3::zeros(); 4];
        let mut systems = Vec::with_capacity(4);
        for class in 0..4u8 {
            zeeman[class as usize] = build_tensors(spin, class)?.0;
            systems.push(eigensystem(spin, class, field_mt)?);
        }
        Ok(SystemTable {
            field_mt: *field_mt,
            zeeman,
            systems,
        })
    }
}

/// Σ_j |element|² per directed transition, Hz².
#[derive(Debug, Clone, PartialEq)]
pub struct ElementSums {
    pub ion_id: usize,
    /// `[x][y]` for the center going x → y.
    pub sums: [[f64; 6]; 6],
    pub empty: bool,
}

pub fn element_sums(
    ensemble: &DopedEnsemble,
    neighbors: &NeighborSet,
    table: &SystemTable,
    model: CouplingModel,
) -> Result<ElementSums> {
    let center = ensemble
        .ion(neighbors.center_id)
        .ok_or_else(|| Error::invalid(format!("no ion with id {}", neighbors.center_id)))?;
    let ci = center.orientation_class as usize;
    let sys_i = &table.systems[ci];
    let mut sums = [[0.0; 6]; 6];
    for nb in &neighbors.neighbors {
        let cj = ensemble.ions[nb.id].orientation_class as usize;
        let c = coupling_tensor_with(
            &table.zeeman[ci],
            &table.zeeman[cj],
            &nb.displacement,
            model,
        )?;
        let sys_j = &table.systems[cj];
        for x in Level::ALL {
            for y in Level::ALL {
                if x.manifold() != y.manifold() {
                    let amp = flipflop_amplitude(sys_i, sys_j, &c, x.index(), y.index())?;
                    sums[x.index()][y.index()] += amp.norm_sqr();
                }
            }
        }
    }
    let empty = neighbors.neighbors.is_empty();
    if empty {
        log::warn!("ion {} has no neighbours; its rates are zero", center.id);
    }
    Ok(ElementSums {
        ion_id: center.id,
        sums,
        empty,
    })
}

/// Directed rates R(x → y) in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct PathwayRates {
    pub ion_id: usize,
    pub rates: [[f64; 6]; 6],
    /// Set when the center had no neighbours.
    pub empty: bool,
}

impl PathwayRates {
    pub fn rate(&self, x: Level, y: Level) -> f64 {
        self.rates[x.index()][y.index()]
    }

    pub fn from_sums(sums: &ElementSums, params: &DensityParams) -> Self {
        let mut rates = [[0.0; 6]; 6];
        for x in Level::ALL {
            for y in Level::ALL {
                if let Some(pair) = LevelPair::of(x.manifold(), y.manifold()) {
                    rates[x.index()][y.index()] = RATE_PREFACTOR
                        * sums.sums[x.index()][y.index()]
                        * density_of_states(pair, params);
                }
            }
        }
        PathwayRates {
            ion_id: sums.ion_id,
            rates,
            empty: sums.empty,
        }
    }
}

pub fn pathway_rates(
    ensemble: &DopedEnsemble,
    neighbors: &NeighborSet,
    table: &SystemTable,
    params: &DensityParams,
    model: CouplingModel,
) -> Result<PathwayRates> {
    params.validate()?;
    Ok(PathwayRates::from_sums(
        &element_sums(ensemble, neighbors, table, model)?,
        params,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTriple {
    pub ion_id: usize,
    pub r_ab: f64,
    pub r_bc: f64,
    pub r_ac: f64,
}

impl RateTriple {
    pub fn new(ion_id: usize, r_ab: f64, r_bc: f64, r_ac: f64) -> Self {
        RateTriple {
            ion_id,
            r_ab,
            r_bc,
            r_ac,
        }
    }

    pub fn get(&self, pair: LevelPair) -> f64 {
        match pair {
            LevelPair::AB => self.r_ab,
            LevelPair::BC => self.r_bc,
            LevelPair::AC => self.r_ac,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r_ab, self.r_bc, self.r_ac]
    }
}

fn pair_levels(m: Manifold) -> [Level; 2] {
    [Level::ALL[2 * m.index()], Level::ALL[2 * m.index() + 1]]
}

/// Add the transitions out of each origin level, then average over the two origins.
fn reduce(m: &[[f64; 6]; 6], pair: LevelPair) -> f64 {
    let (from, to) = pair.manifolds();
    let [to_plus, to_minus] = pair_levels(to);
    let origin = |x: Level| m[x.index()][to_plus.index()] + m[x.index()][to_minus.index()];
    let [p, q] = pair_levels(from);
    0.5 * (origin(p) + origin(q))
}

pub fn reduce_to_triple(p: &PathwayRates) -> RateTriple {
    RateTriple {
        ion_id: p.ion_id,
        r_ab: reduce(&p.rates, LevelPair::AB),
        r_bc: reduce(&p.rates, LevelPair::BC),
        r_ac: reduce(&p.rates, LevelPair::AC),
    }
}

/// Per-ion reduced element sums, Hz²: `R_xy = (4π²/6) f_xy S_xy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedSums {
    pub ion_id: usize,
    pub s: [f64; 3],
}

impl ReducedSums {
    pub fn from_element_sums(e: &ElementSums) -> Self {
        ReducedSums {
            ion_id: e.ion_id,
            s: LevelPair::ALL.map(|p| reduce(&e.sums, p)),
        }
    }

    pub fn triple(&self, params: &DensityParams) -> RateTriple {
        let r = |p: LevelPair| RATE_PREFACTOR * density_of_states(p, params) * self.s[p.index()];
        RateTriple {
            ion_id: self.ion_id,
            r_ab: r(LevelPair::AB),
            r_bc: r(LevelPair::BC),
            r_ac: r(LevelPair::AC),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptions {
    pub neighbor_count: usize,
    /// Only ions at least this far inside the sphere surface act as centers, nm.
    pub core_margin_nm: f64,
    pub coupling: CouplingModel,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            neighbor_count: 20,
            core_margin_nm: 20.0,
            coupling: CouplingModel::Dipolar,
            workers: None,
        }
    }
}

/// Run `f` on a pool with the requested number of workers.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::invalid("worker count must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Squared-element sums for every core ion, ordered by ion id.
pub fn ensemble_element_sums(
    ensemble: &DopedEnsemble,
    spin: &SpinParams,
    field_mt: &Vector3<f64>,
    options: &RateOptions,
) -> Result<Vec<ElementSums>> {
    if options.neighbor_count == 0 {
        return Err(Error::invalid("neighbour count must be at least 1"));
    }
    if !(options.core_margin_nm >= 0.0) {
        return Err(Error::invalid("core margin must be non-negative"));
    }
    let table = SystemTable::new(spin, field_mt)?;
    let centers = ensemble.core_ids(options.core_margin_nm);
    if centers.is_empty() {
        return Err(Error::invalid(format!(
            "no ions lie within the inner core (radius {} nm, margin {} nm)",
            ensemble.sphere_radius, options.core_margin_nm
        )));
    }
    let index = NeighborIndex::new(ensemble);
    let work = || {
        centers
            .par_iter()
            .map(|&id| {
                let wrap = |e: Error| Error::Ion {
                    id,
                    source: Box::new(e),
                };
                let nb = if ensemble.len() > 1 {
                    index
                        .nearest_neighbors(id, options.neighbor_count)
                        .map_err(wrap)?
                } else {
                    NeighborSet {
                        center_id: id,
                        neighbors: Vec::new(),
                        truncated: true,
                    }
                };
                element_sums(ensemble, &nb, &table, options.coupling).map_err(wrap)
            })
            .collect::<Result<Vec<_>>>()
    };
    with_workers(options.workers, work)?
}

pub fn ensemble_reduced_sums(
    ensemble: &DopedEnsemble,
    spin: &SpinParams,
    field_mt: &Vector3<f64>,
    options: &RateOptions,
) -> Result<Vec<ReducedSums>> {
    Ok(ensemble_element_sums(ensemble, spin, field_mt, options)?
        .iter()
        .map(ReducedSums::from_element_sums)
        .collect())
}

/// One [`RateTriple`] per core ion, ordered by ion id.
pub fn ensemble_rates(
    ensemble: &DopedEnsemble,
    spin: &SpinParams,
    field_mt: &Vector3<f64>,
    params: &DensityParams,
    options: &RateOptions,
) -> Result<Vec<RateTriple>> {
    params.validate()?;
    Ok(ensemble_element_sums(ensemble, spin, field_mt, options)?
        .iter()
        .map(|e| reduce_to_triple(&PathwayRates::from_sums(e, params)))
        .collect())
}

pub fn triples_from_sums(sums: &[ReducedSums], params: &DensityParams) -> Vec<RateTriple> {
    sums.iter().map(|s| s.triple(params)).collect()
}

/// Histogram of log10 values in bins of `width` decades aligned on multiples of `width`.
/// Non-positive values are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct LogHistogram {
    pub width: f64,
    /// (bin center, count), ascending.
    pub bins: Vec<(f64, usize)>,
    pub skipped: usize,
}

impl LogHistogram {
    pub fn new(values: impl IntoIterator<Item = f64>, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::invalid("histogram bin width must be positive"));
        }
        let mut counts = std::collections::BTreeMap::<i64, usize>::new();
        let mut skipped = 0;
        for v in values {
            if v > 0.0 && v.is_finite() {
                *counts
                    .entry((v.log10() / width).floor() as i64)
                    .or_default() += 1;
            } else {
                skipped += 1;
            }
        }
        let bins = match (counts.keys().next(), counts.keys().last()) {
            (Some(&lo), Some(&hi)) => (lo..=hi)
                .map(|k| {
                    (
                        (k as f64 + 0.5) * width,
                        counts.get(&k).copied().unwrap_or(0),
                    )
                })
                .collect(),
            _ => Vec::new(),
        };
        Ok(LogHistogram {
            width,
            bins,
            skipped,
        })
    }

    /// Center of the most populated bin; the lowest such bin on ties.
    pub fn mode(&self) -> Option<f64> {
        let max = self.bins.iter().map(|b| b.1).max()?;
        self.bins.iter().find(|b| b.1 == max).map(|b| b.0)
    }
}
